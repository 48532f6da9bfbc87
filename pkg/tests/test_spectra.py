import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from specrich import spectra
from specrich.errors import (
    AmbiguousBandError,
    CoverageError,
    DataError,
    DegenerateSpectrumError,
    ShapeError,
)
from specrich.spectra import SampleTable, SpectralGrid, Spectrum

SOURCE = spectra.desis_like_grid()
TARGET = spectra.default_target_grid()


def _table(X, centers, y=None):
    X = np.asarray(X, dtype=float)
    y = np.arange(X.shape[0], dtype=float) if y is None else y
    return SampleTable([f"s{i}" for i in range(X.shape[0])], X, y, SpectralGrid(centers, 10.0))


class TestTypes:
    def test_grid_rejects_unsorted(self):
        with pytest.raises(DataError):
            SpectralGrid([500, 490], [10, 10])

    def test_grid_rejects_bad_fwhm(self):
        with pytest.raises(DataError):
            SpectralGrid([500, 510], [10, 0])
        with pytest.raises(ShapeError):
            SpectralGrid([500, 510], [10, 10, 10])

    def test_grid_scalar_fwhm_broadcasts(self):
        g = SpectralGrid([500, 510, 520], 5.0)
        assert g.fwhms.tolist() == [5.0, 5.0, 5.0]

    def test_table_invariants(self):
        with pytest.raises(ShapeError):
            _table(np.ones((3, 2)), [500, 510, 520])
        with pytest.raises(DataError):
            _table(np.ones((2, 1)), [500], y=np.array([1.0, -1.0]))
        with pytest.raises(DataError):
            _table(np.array([[np.nan], [1.0]]), [500])

    def test_spectrum_rejects_nonfinite(self):
        with pytest.raises(DataError):
            Spectrum([1.0, np.inf])

    def test_types_are_immutable(self):
        t = _table(np.ones((2, 1)), [500])
        with pytest.raises(ValueError):
            t.X[0, 0] = 3.0


class TestResample:
    def test_source_grid_shape(self):
        assert len(SOURCE) == 235
        assert SOURCE.centers[0] == pytest.approx(402.8)
        assert SOURCE.centers[-1] == pytest.approx(999.5)
        assert np.allclose(np.diff(SOURCE.centers), 2.55)
        assert 400 <= SOURCE.centers[0] and SOURCE.centers[-1] <= 1000

    def test_target_grid_has_60_bands(self):
        out = spectra.gaussian_resample(Spectrum(np.linspace(0.1, 0.5, 235)), SOURCE, TARGET)
        assert out.values.shape == (60,)
        assert TARGET.centers[0] == 402.8 and TARGET.centers[-1] == 999.5

    @pytest.mark.parametrize("c", [0.0, 0.37, 5.0])
    def test_constant_spectrum_preserved(self, c):
        out = spectra.gaussian_resample(Spectrum(np.full(235, c)), SOURCE, TARGET)
        np.testing.assert_allclose(out.values, c, rtol=1e-14, atol=1e-15)

    def test_rows_sum_to_one(self):
        W = spectra.resample_matrix(SOURCE, TARGET)
        np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(W >= 0)

    @pytest.mark.parametrize("truncate", [3.0, None])
    def test_single_band_matches_direct_summation(self, truncate):
        # target band exactly on source band 100; brute-force normalized weight
        j = 100
        lam_b = SOURCE.centers[j]
        fwhm = 10.0
        target = SpectralGrid([lam_b], [fwhm])
        values = np.zeros(235)
        values[j] = 1.0
        out = spectra.gaussian_resample(Spectrum(values), SOURCE, target, truncate=truncate)

        sigma = fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0)))
        weights = []
        for lam in SOURCE.centers:
            d = float(lam) - float(lam_b)
            if truncate is not None and abs(d) > truncate * sigma:
                weights.append(0.0)
            else:
                weights.append(math.exp(-d * d / (2.0 * sigma * sigma)))
        expected = weights[j] / math.fsum(weights)
        assert out.values[0] == pytest.approx(expected, rel=1e-13)

    def test_truncation_effect_is_small(self):
        W3 = spectra.resample_matrix(SOURCE, TARGET, truncate=3.0)
        Wf = spectra.resample_matrix(SOURCE, TARGET, truncate=None)
        # 0.27% of Gaussian mass lies outside +/-3 sigma; L1 change is about twice
        # that in the interior and larger at the one-sided grid edges
        l1 = np.abs(W3 - Wf).sum(axis=1)
        assert np.median(l1) < 8e-3
        assert l1.max() < 2e-2

    def test_coverage_error(self):
        bad = SpectralGrid([395.0, 500.0], [10, 10])
        with pytest.raises(CoverageError):
            spectra.resample_matrix(SOURCE, bad)

    def test_wrong_length_spectrum(self):
        with pytest.raises(ShapeError):
            spectra.gaussian_resample(Spectrum(np.ones(10)), SOURCE, TARGET)

    def test_zero_weight_is_numerical_error(self):
        from specrich.errors import NumericalError

        src = SpectralGrid([400.0, 600.0], [1, 1])
        tgt = SpectralGrid([500.0], [1.0])
        with pytest.raises(NumericalError):
            spectra.resample_matrix(src, tgt)

    @settings(max_examples=40, deadline=None)
    @given(
        u=arrays(np.float64, 235, elements=st.floats(-10, 10)),
        v=arrays(np.float64, 235, elements=st.floats(-10, 10)),
        a=st.floats(-5, 5),
        b=st.floats(-5, 5),
    )
    def test_linearity(self, u, v, a, b):
        W = spectra.resample_matrix(SOURCE, TARGET)
        lhs = W @ (a * u + b * v)
        rhs = a * (W @ u) + b * (W @ v)
        scale = max(np.abs(a * u).max(), np.abs(b * v).max(), 1.0)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-10 * scale)

    def test_table_resample_matches_per_spectrum(self, rng):
        X = rng.uniform(0, 1, (4, 235))
        t = SampleTable(["a", "b", "c", "d"], X, [1, 2, 3, 4], SOURCE)
        out = spectra.resample_table(t, TARGET)
        for i in range(4):
            single = spectra.gaussian_resample(Spectrum(X[i]), SOURCE, TARGET)
            np.testing.assert_allclose(out.X[i], single.values, rtol=1e-14)


class TestRemoveBands:
    def test_default_removal_leaves_52(self):
        t = _table(np.ones((2, 60)), TARGET.centers)
        out = spectra.remove_bands(t, spectra.default_removed_bands(), 0.05)
        assert out.n_bands == 52
        removed = set(TARGET.centers) - set(out.grid.centers)
        assert sorted(removed) == sorted([759, 769, 933.4, 943.4, 953.2, 402.8, 410.3, 999.5])

    def test_empty_list_is_identity(self):
        t = _table(np.arange(6.0).reshape(2, 3), [500, 510, 520])
        out = spectra.remove_bands(t, [])
        assert out.grid == t.grid
        np.testing.assert_array_equal(out.X, t.X)

    def test_three_band_example(self):
        t = _table(np.arange(6.0).reshape(2, 3), [500, 510, 520])
        out = spectra.remove_bands(t, [510])
        assert out.grid.centers.tolist() == [500, 520]
        np.testing.assert_array_equal(out.X, [[0, 2], [3, 5]])

    def test_no_match_is_ambiguous(self):
        t = _table(np.ones((1, 3)), [500, 510, 520])
        with pytest.raises(AmbiguousBandError):
            spectra.remove_bands(t, [505])

    def test_multiple_matches_are_ambiguous(self):
        t = _table(np.ones((1, 3)), [500, 500.04, 520])
        with pytest.raises(AmbiguousBandError):
            spectra.remove_bands(t, [500.02])

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.integers(0, 59), unique=True, max_size=20), st.data())
    def test_disjoint_removals_commute(self, idx, data):
        split = data.draw(st.integers(0, len(idx)))
        a = [TARGET.centers[i] for i in idx[:split]]
        b = [TARGET.centers[i] for i in idx[split:]]
        X = np.arange(120.0).reshape(2, 60)
        t = _table(X, TARGET.centers)
        ab = spectra.remove_bands(spectra.remove_bands(t, a), b)
        ba = spectra.remove_bands(spectra.remove_bands(t, b), a)
        assert ab.grid == ba.grid
        np.testing.assert_array_equal(ab.X, ba.X)


class TestFilterFlagged:
    def _items(self, flags):
        return [(Spectrum([1.0, 2.0], cloud=f, sample_id=str(i)), float(i)) for i, f in enumerate(flags)]

    def test_two_of_five_flagged(self):
        out = spectra.filter_flagged(self._items([False, True, False, True, False]))
        assert [s.sample_id for s, _ in out] == ["0", "2", "4"]

    def test_all_flagged(self):
        assert spectra.filter_flagged(self._items([True] * 4)) == []

    def test_none_flagged(self):
        items = self._items([False] * 3)
        assert spectra.filter_flagged(items) == items

    @given(st.lists(st.booleans(), max_size=30))
    def test_count_accounting(self, flags):
        out = spectra.filter_flagged(self._items(flags))
        assert len(out) + sum(flags) == len(flags)


class TestMeanNormalize:
    def test_example(self):
        np.testing.assert_allclose(spectra.mean_normalize([2, 4, 6]), [0.5, 1.0, 1.5])

    def test_constant(self):
        np.testing.assert_allclose(spectra.mean_normalize(np.full(7, 0.3)), 1.0, rtol=1e-15)

    def test_degenerate(self):
        with pytest.raises(DegenerateSpectrumError):
            spectra.mean_normalize([0.0, 0.0])
        with pytest.raises(DegenerateSpectrumError):
            spectra.mean_normalize([-1.0, 0.5])

    positive = arrays(np.float64, st.integers(1, 60), elements=st.floats(1e-3, 1e3))

    @given(positive, st.floats(1e-3, 1e3))
    def test_scale_invariance(self, v, a):
        np.testing.assert_allclose(spectra.mean_normalize(a * v), spectra.mean_normalize(v), rtol=1e-12)

    @given(positive)
    def test_idempotent_and_unit_mean(self, v):
        once = spectra.mean_normalize(v)
        assert once.mean() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(spectra.mean_normalize(once), once, rtol=1e-12, atol=1e-12)


class TestPreprocessChain:
    def test_full_chain_235_to_52(self, rng):
        X = rng.uniform(0.05, 0.6, (6, 235))
        t = SampleTable([f"p{i}" for i in range(6)], X, np.arange(6.0), SOURCE)
        cloud = {"p1": True, "p4": True}
        out, counts = spectra.preprocess(t, cloud=cloud, target=TARGET, removal=spectra.default_removed_bands())
        assert counts == {
            "samples_in": 6, "bands_in": 235, "samples_discarded": 2,
            "bands_resampled": 60, "bands_retained": 52, "samples_out": 4,
        }
        assert out.ids == ("p0", "p2", "p3", "p5")
        np.testing.assert_allclose(out.X.mean(axis=1), 1.0, atol=1e-12)

    def test_no_resample_only_normalizes(self, rng):
        X = rng.uniform(0.1, 1, (3, 5))
        t = _table(X, [500, 510, 520, 530, 540])
        out, counts = spectra.preprocess(t)
        assert counts["samples_discarded"] == 0
        np.testing.assert_allclose(out.X, X / X.mean(axis=1, keepdims=True))

    def test_stage_named_in_error(self):
        t = _table(np.zeros((2, 3)), [500, 510, 520])
        with pytest.raises(DegenerateSpectrumError, match=r"\[normalize\].*s0"):
            spectra.preprocess(t)


class TestCsv:
    def test_round_trip(self, tmp_path, rng):
        X = rng.uniform(0, 1, (3, 4))
        t = SampleTable(["a", "b", "c"], X, [10, 20.5, 3], SpectralGrid([500, 510, 520.5, 530], 10.0))
        spectra.write_spectra_csv(tmp_path / "s.csv", t)
        spectra.write_richness_csv(tmp_path / "r.csv", t)
        back = spectra.load_table(tmp_path / "s.csv", tmp_path / "r.csv", fwhm=10.0)
        assert back.ids == t.ids
        np.testing.assert_array_equal(back.X, t.X)
        np.testing.assert_array_equal(back.y, t.y)
        assert back.grid == t.grid
        assert (tmp_path / "s.csv").read_text().splitlines()[0] == "id,500.0,510.0,520.5,530.0"

    def test_id_mismatch(self, tmp_path):
        (tmp_path / "s.csv").write_text("id,500,510\na,1,2\nb,3,4\n")
        (tmp_path / "r.csv").write_text("id,richness\na,1\nc,2\n")
        with pytest.raises(DataError, match="id mismatch"):
            spectra.load_table(tmp_path / "s.csv", tmp_path / "r.csv")

    def test_flags(self, tmp_path):
        (tmp_path / "f.csv").write_text("id,cloud\na,0\nb,1\n")
        assert spectra.read_flags_csv(tmp_path / "f.csv") == {"a": False, "b": True}
        (tmp_path / "g.csv").write_text("id,cloud\na,2\n")
        with pytest.raises(DataError):
            spectra.read_flags_csv(tmp_path / "g.csv")

    def test_bad_header(self, tmp_path):
        (tmp_path / "s.csv").write_text("name,500\na,1\n")
        with pytest.raises(DataError):
            spectra.read_spectra_csv(tmp_path / "s.csv")

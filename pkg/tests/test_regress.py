import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specrich import regress
from specrich.errors import NumericalError, ParameterError, ShapeError
from specrich.regress import KernelParams, RegressionModel


def dense_krr(Z, y, Zs, p):
    """Dual ridge solution by explicit inverse, kernel written out elementwise."""
    def k(a, b):
        return a @ b + p.sigma2 + np.exp(-np.sum((a - b) ** 2) / (2 * p.length_scale ** 2))
    K = np.array([[k(a, b) for b in Z] for a in Z])
    Ks = np.array([[k(a, b) for b in Z] for a in Zs])
    return Ks @ np.linalg.inv(K + p.noise * np.eye(len(y))) @ y


class TestParams:
    @pytest.mark.parametrize("kw", [dict(sigma2=-1), dict(length_scale=0), dict(noise=-0.1), dict(sigma2=np.nan)])
    def test_invalid(self, kw):
        with pytest.raises(ParameterError):
            KernelParams(**kw)

    def test_dual_weights_length(self):
        with pytest.raises(ShapeError):
            RegressionModel("KRR", Z_train=np.zeros((3, 1)), alpha=np.zeros(2), params=KernelParams())

    def test_non_finite_state(self):
        with pytest.raises(NumericalError):
            RegressionModel("OLSR", coef=np.array([np.nan]))


class TestKernel:
    def test_zero_vectors(self):
        p = KernelParams(0.7, 2.0, 0.3)
        assert regress.kernel_eval([0, 0], [0, 0], p, same_point=True) == pytest.approx(0.7 + 1 + 0.3)

    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=8), st.floats(1e-3, 1e3))
    def test_rbf_self_similarity(self, x, ell):
        p = KernelParams(0.0, ell, 0.0)
        x = np.array(x)
        assert regress.kernel_eval(x, x, p) - x @ x == pytest.approx(1.0, abs=1e-9 * max(1.0, x @ x))

    def test_white_term(self, rng):
        p = KernelParams(0.2, 1.0, 0.45)
        x = rng.normal(size=3)
        assert regress.kernel_eval(x, x, p, True) - regress.kernel_eval(x, x, p, False) == pytest.approx(0.45)
        K = regress.training_gram(np.vstack([x, x]), p)
        # identical rows are distinct samples: white term on the diagonal only
        assert K[0, 0] - K[0, 1] == pytest.approx(0.45)


class TestOLSR:
    def test_exact_line(self):
        z = np.linspace(-1, 4, 7)
        m = regress.olsr_fit(z[:, None], 2 * z + 1)
        assert m.coef[0] == pytest.approx(2.0, abs=1e-10)
        assert m.intercept == pytest.approx(1.0, abs=1e-10)

    def test_constant_target(self, rng):
        m = regress.olsr_fit(rng.normal(size=(8, 3)), np.full(8, 4.2))
        np.testing.assert_allclose(m.coef, 0.0, atol=1e-12)
        assert m.intercept == pytest.approx(4.2)

    def test_normal_equations(self, rng):
        Z = rng.normal(size=(20, 3))
        y = Z @ np.array([1.5, -0.7, 2.2]) + 0.3 + rng.normal(scale=0.1, size=20)
        A = np.column_stack([np.ones(20), Z])
        beta = np.linalg.solve(A.T @ A, A.T @ y)
        m = regress.olsr_fit(Z, y)
        np.testing.assert_allclose(m.coef, beta[1:], atol=1e-8)
        assert m.intercept == pytest.approx(beta[0], abs=1e-8)

    def test_noiseless_residuals(self, rng):
        Z = rng.normal(size=(10, 4))
        y = Z @ rng.normal(size=4) - 2
        m = regress.olsr_fit(Z, y)
        assert np.abs(regress.predict(m, Z) - y).max() < 1e-8


class TestKRR:
    def test_dense_inverse(self, rng):
        Z, y, Zs = rng.normal(size=(15, 4)), rng.normal(size=15), rng.normal(size=(6, 4))
        p = KernelParams(0.5, 1.3, 0.2)
        m = regress.krr_fit(Z, y, p)
        np.testing.assert_allclose(regress.predict(m, Zs), dense_krr(Z, y, Zs, p), atol=1e-8)

    def test_single_point(self):
        p = KernelParams(0.4, 1.0, 0.25)
        x = np.array([0.3, -1.2])
        m = regress.krr_fit(x[None, :], [6.0], p)
        kxx = regress.kernel_eval(x, x, p)
        assert regress.predict(m, x[None, :])[0] == pytest.approx(6.0 * kxx / (kxx + 0.25))

    def test_large_noise_shrinks(self, rng):
        Z = rng.normal(size=(12, 2))
        y = rng.normal(size=12)
        y -= y.mean()
        pred = regress.predict(regress.krr_fit(Z, y, KernelParams(1, 1, 1e8)), Z)
        assert np.abs(pred).max() < 1e-6

    def test_needs_positive_noise(self, rng):
        with pytest.raises(ParameterError):
            regress.krr_fit(rng.normal(size=(3, 1)), [1, 2, 3], KernelParams(1, 1, 0))

    def test_duplicate_rows_same_prediction(self, rng):
        m = regress.krr_fit(rng.normal(size=(10, 3)), rng.normal(size=10), KernelParams())
        z = rng.normal(size=3)
        p = regress.predict(m, np.vstack([z, z, z]))
        assert p[0] == p[1] == p[2]

    @pytest.mark.parametrize("variant", ["KRR", "GPR"])
    def test_lipschitz(self, rng, variant):
        m = regress.fit(variant, rng.normal(size=(10, 3)), rng.normal(size=10), KernelParams(0.5, 1.0, 0.1))
        z = rng.normal(size=3)
        u = rng.normal(size=3)
        u /= np.linalg.norm(u)
        base = regress.predict(m, z[None, :])[0]
        diffs = [abs(regress.predict(m, (z + e * u)[None, :])[0] - base) / e for e in (1e-3, 1e-5, 1e-7)]
        assert max(diffs) < 10 * max(diffs[0], 1e-12) + 1e-3


class TestGPR:
    def test_equals_centered_krr(self, rng):
        Z, y, Zs = rng.normal(size=(20, 3)), rng.normal(size=20) + 15, rng.normal(size=(8, 3))
        p = KernelParams(0.3, 0.9, 0.05)
        gp = regress.predict(regress.gpr_fit(Z, y, p), Zs)
        kr = regress.predict(regress.krr_fit(Z, y - y.mean(), p), Zs) + y.mean()
        np.testing.assert_allclose(gp, kr, atol=1e-8)

    def test_interpolation_limit(self):
        x = np.array([[0.4, 0.1]])
        preds = [regress.predict(regress.gpr_fit(x, [3.0], KernelParams(0.1, 1.0, d)), x)[0]
                 for d in (1e-2, 1e-5, 1e-9)]
        assert abs(preds[-1] - 3.0) < 1e-6
        assert abs(preds[0] - 3.0) >= abs(preds[-1] - 3.0)

    def test_variance_grows_away_from_data(self, rng):
        Z = rng.normal(scale=0.5, size=(10, 2))
        m = regress.gpr_fit(Z, rng.normal(size=10), KernelParams(0.0, 0.5, 1e-3))
        near_var = regress.predict_var(m, Z[:1])[0]
        far_var = regress.predict_var(m, Z[:1] + 50.0)[0]
        assert near_var < 1e-2
        assert near_var <= far_var

    def test_variance_only_for_gpr(self, rng):
        m = regress.krr_fit(rng.normal(size=(4, 1)), rng.normal(size=4), KernelParams())
        with pytest.raises(ParameterError):
            regress.predict_var(m, np.zeros((1, 1)))

    def test_noise_in_variance(self, rng):
        m = regress.gpr_fit(rng.normal(size=(6, 2)), rng.normal(size=6), KernelParams(1, 1, 0.3))
        z = rng.normal(size=(3, 2))
        np.testing.assert_allclose(regress.predict_var(m, z, True) - regress.predict_var(m, z), 0.3, atol=1e-9)


class TestJitter:
    def test_psd_singular_matrix_recovers(self):
        v = np.array([1.0, 2.0, 3.0])
        L = regress.cholesky_jitter(np.outer(v, v))
        assert np.all(np.isfinite(L))

    def test_indefinite_fails(self):
        with pytest.raises(NumericalError):
            regress.cholesky_jitter(np.diag([1.0, -1.0]))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.floats(0, 10), st.floats(0.05, 20))
def test_gram_psd(seed, s2, ell):
    Z = np.random.default_rng(seed).normal(size=(25, 4))
    K = regress.gram(Z, Z, KernelParams(s2, ell))
    assert np.linalg.eigvalsh(K).min() >= -1e-8 * np.trace(K) / 25


@pytest.mark.parametrize("variant", ["OLSR", "KRR", "GPR"])
def test_duplicate_rows_many_seeds(variant):
    rng = np.random.default_rng(99)
    for _ in range(50):
        m = regress.fit(variant, rng.normal(size=(10, 3)), rng.normal(size=10),
                        None if variant == "OLSR" else KernelParams(0.5, 1.0, 0.1))
        z = rng.normal(size=3)
        p = regress.predict(m, np.vstack([rng.normal(size=3), z, z, rng.normal(size=3), z]))
        assert p[1] == p[2] == p[4]

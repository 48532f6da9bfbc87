"""Spectral data types and the preprocessing chain.

Spectra are resampled to a coarser grid with Gaussian response functions,
bands are removed by wavelength, cloud-flagged samples are dropped and each
spectrum is divided by its band mean.  The CSV readers and writers for
spectra, richness and flag files also live here.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _backend
from .errors import (
    AmbiguousBandError,
    CoverageError,
    DataError,
    DegenerateSpectrumError,
    NumericalError,
    ShapeError,
    SpecrichError,
)

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
COVERAGE_TOL_NM = 1e-6
DEFAULT_BAND_TOL_NM = 0.05
DEFAULT_TRUNCATE = 3.0


def _frozen(a, dtype=np.float64):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class SpectralGrid:
    """Band centers (nm, strictly increasing) and their FWHMs (nm)."""

    centers: np.ndarray
    fwhms: np.ndarray

    def __post_init__(self):
        c = _frozen(self.centers)
        f = _frozen(np.broadcast_to(self.fwhms, c.shape) if np.ndim(self.fwhms) == 0 else self.fwhms)
        if c.ndim != 1 or c.size == 0:
            raise ShapeError("grid centers must be a non-empty 1-D sequence")
        if f.shape != c.shape:
            raise ShapeError(f"{c.size} centers but {f.size} fwhms")
        if not np.all(np.isfinite(c)) or not np.all(c > 0):
            raise DataError("grid centers must be finite and positive")
        if c.size > 1 and not np.all(np.diff(c) > 0):
            raise DataError("grid centers must be strictly increasing")
        if not np.all(np.isfinite(f)) or not np.all(f > 0):
            raise DataError("grid fwhms must be finite and positive")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "fwhms", f)

    def __len__(self) -> int:
        return int(self.centers.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpectralGrid):
            return NotImplemented
        return np.array_equal(self.centers, other.centers) and np.array_equal(self.fwhms, other.fwhms)

    __hash__ = None

    @property
    def sigmas(self) -> np.ndarray:
        return self.fwhms * FWHM_TO_SIGMA

    def subset(self, keep) -> "SpectralGrid":
        return SpectralGrid(self.centers[keep], self.fwhms[keep])


@dataclass(frozen=True)
class Spectrum:
    values: np.ndarray
    cloud: bool = False
    sample_id: str = ""

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 1:
            raise ShapeError("spectrum values must be 1-D")
        if not np.all(np.isfinite(v)):
            raise DataError(f"spectrum {self.sample_id!r} has non-finite values")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class SampleTable:
    """n samples by d bands, with richness targets and sample ids."""

    ids: tuple
    X: np.ndarray
    y: np.ndarray
    grid: SpectralGrid
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        X = _frozen(self.X)
        y = _frozen(self.y)
        if X.ndim != 2:
            raise ShapeError("X must be 2-D")
        if y.ndim != 1 or y.size != X.shape[0] or len(ids) != X.shape[0]:
            raise ShapeError(f"X has {X.shape[0]} rows, y {y.size} entries, ids {len(ids)}")
        if X.shape[1] != len(self.grid):
            raise ShapeError(f"X has {X.shape[1]} columns but grid has {len(self.grid)} bands")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError("sample table contains non-finite values")
        if np.any(y < 0):
            raise DataError("richness values must be non-negative")
        if len(set(ids)) != len(ids):
            raise DataError("sample ids must be unique")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_bands(self) -> int:
        return self.X.shape[1]

    def with_X(self, X, grid: SpectralGrid | None = None) -> "SampleTable":
        return SampleTable(self.ids, X, self.y, grid if grid is not None else self.grid, dict(self.meta))

    def take(self, rows) -> "SampleTable":
        rows = np.asarray(rows, dtype=int)
        return SampleTable(tuple(self.ids[i] for i in rows), self.X[rows], self.y[rows], self.grid, dict(self.meta))


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

def uniform_grid(start: float, step: float, count: int, fwhm: float | None = None) -> SpectralGrid:
    centers = start + step * np.arange(count)
    return SpectralGrid(centers, fwhm if fwhm is not None else step)


def desis_like_grid() -> SpectralGrid:
    """235 bands at 2.55 nm spacing from 402.8 to 999.5 nm (synthetic stand-in)."""
    return uniform_grid(402.8, 2.55, 235)


def read_grid_file(path, default_fwhm: float | None = None) -> SpectralGrid:
    """Read ``center [fwhm]`` lines; ``#`` starts a comment."""
    text = Path(path).read_text(encoding="utf-8")
    return _parse_grid(text, default_fwhm, str(path))


def _parse_grid(text: str, default_fwhm, source: str) -> SpectralGrid:
    centers, fwhms = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        try:
            centers.append(float(parts[0]))
            if len(parts) > 1:
                fwhms.append(float(parts[1]))
            elif default_fwhm is not None:
                fwhms.append(float(default_fwhm))
            else:
                raise DataError(f"{source}:{lineno}: no fwhm and no default given")
        except ValueError as exc:
            raise DataError(f"{source}:{lineno}: {exc}") from exc
    return SpectralGrid(centers, fwhms)


def _read_bundled(name: str) -> str:
    return resources.files("specrich").joinpath("data").joinpath(name).read_text(encoding="utf-8")


def default_target_grid() -> SpectralGrid:
    """The bundled 60-band, 10 nm FWHM grid used before band removal."""
    return _parse_grid(_read_bundled("target_grid_10nm.txt"), 10.0, "target_grid_10nm.txt")


def default_removed_bands() -> list[float]:
    """The eight atmospheric / low-quality wavelengths dropped after resampling."""
    return read_wavelength_list_text(_read_bundled("removed_bands.txt"))


def read_wavelength_list_text(text: str) -> list[float]:
    out = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        out.extend(float(tok) for tok in line.replace(",", " ").split())
    return out


def read_wavelength_list(path) -> list[float]:
    return read_wavelength_list_text(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# preprocessing operations
# ---------------------------------------------------------------------------

def resample_matrix(source: SpectralGrid, target: SpectralGrid,
                    truncate: float | None = DEFAULT_TRUNCATE) -> np.ndarray:
    """Weights mapping source-band values to target bands, shape (len(target), len(source)).

    Row ``b`` holds Gaussian weights centered on target band ``b`` with the
    sigma implied by its FWHM, cut at ``truncate`` sigmas (``None`` keeps
    the full support) and normalized to sum to one.
    """
    lo = source.centers[0] - COVERAGE_TOL_NM
    hi = source.centers[-1] + COVERAGE_TOL_NM
    outside = (target.centers < lo) | (target.centers > hi)
    if np.any(outside):
        bad = ", ".join(f"{c:g}" for c in target.centers[outside])
        raise CoverageError(
            f"target centers {bad} nm lie outside source coverage "
            f"[{source.centers[0]:g}, {source.centers[-1]:g}] nm"
        )
    W = _backend.resample_weights(
        source.centers, target.centers, target.sigmas, -1.0 if truncate is None else float(truncate)
    )
    empty = ~(W.sum(axis=1) > 0)
    if np.any(empty):
        bad = ", ".join(f"{c:g}" for c in target.centers[empty])
        raise NumericalError(f"no source band carries weight for target centers {bad} nm")
    return W


def gaussian_resample(spectrum: Spectrum, source: SpectralGrid, target: SpectralGrid,
                      truncate: float | None = DEFAULT_TRUNCATE) -> Spectrum:
    if spectrum.values.size != len(source):
        raise ShapeError(f"spectrum has {spectrum.values.size} values, source grid {len(source)} bands")
    W = resample_matrix(source, target, truncate)
    return Spectrum(W @ spectrum.values, spectrum.cloud, spectrum.sample_id)


def resample_table(table: SampleTable, target: SpectralGrid,
                   truncate: float | None = DEFAULT_TRUNCATE) -> SampleTable:
    W = resample_matrix(table.grid, target, truncate)
    return table.with_X(table.X @ W.T, target)


def match_bands(grid: SpectralGrid, removal_centers: Iterable[float],
                tolerance: float = DEFAULT_BAND_TOL_NM) -> list[int]:
    """Grid indices matched by each removal wavelength (exactly one each)."""
    idx = []
    for c in removal_centers:
        hits = np.flatnonzero(np.abs(grid.centers - c) <= tolerance)
        if hits.size != 1:
            raise AmbiguousBandError(
                f"removal wavelength {c:g} nm matches {hits.size} grid centers within {tolerance:g} nm"
            )
        idx.append(int(hits[0]))
    return idx


def remove_bands(table: SampleTable, removal_centers: Sequence[float],
                 tolerance: float = DEFAULT_BAND_TOL_NM) -> SampleTable:
    drop = set(match_bands(table.grid, removal_centers, tolerance))
    keep = np.array([i for i in range(table.n_bands) if i not in drop], dtype=int)
    return table.with_X(table.X[:, keep], table.grid.subset(keep))


def filter_flagged(items):
    """Drop (spectrum, richness) pairs whose spectrum carries the cloud flag."""
    return [item for item in items if not item[0].cloud]


def mean_normalize(values, eps: float = 1e-12) -> np.ndarray:
    """Divide a spectrum by its mean over bands.

    A 2-D input is normalized row by row.
    """
    v = np.asarray(values, dtype=np.float64)
    mean = v.mean(axis=-1, keepdims=True)
    if np.any(~(mean > eps)):
        raise DegenerateSpectrumError(f"spectrum mean {float(np.min(mean)):g} is not above {eps:g}")
    return v / mean


def normalize_table(table: SampleTable, eps: float = 1e-12) -> SampleTable:
    try:
        return table.with_X(mean_normalize(table.X, eps))
    except DegenerateSpectrumError:
        bad = [table.ids[i] for i in np.flatnonzero(~(table.X.mean(axis=1) > eps))]
        raise DegenerateSpectrumError(f"dark or invalid spectra: {', '.join(bad)}") from None


def preprocess(table: SampleTable, cloud=None, target: SpectralGrid | None = None,
               removal: Sequence[float] = (), tolerance: float = DEFAULT_BAND_TOL_NM,
               truncate: float | None = DEFAULT_TRUNCATE, normalize: bool = True):
    """Run filter -> resample -> remove -> normalize.

    ``cloud`` maps sample id to a boolean flag (missing ids are treated as
    clear).  ``target=None`` skips resampling.  Returns the processed table
    and a dict of per-stage counts.
    """
    counts = {"samples_in": table.n_samples, "bands_in": table.n_bands}
    stage = "filter"
    try:
        if cloud:
            items = [(Spectrum(table.X[i], bool(cloud.get(sid, False)), sid), i)
                     for i, sid in enumerate(table.ids)]
            kept = [i for _, i in filter_flagged(items)]
            table = table.take(kept)
        counts["samples_discarded"] = counts["samples_in"] - table.n_samples
        stage = "resample"
        if target is not None:
            table = resample_table(table, target, truncate)
        counts["bands_resampled"] = table.n_bands
        stage = "remove_bands"
        table = remove_bands(table, removal, tolerance)
        counts["bands_retained"] = table.n_bands
        stage = "normalize"
        if normalize:
            table = normalize_table(table)
    except SpecrichError as exc:
        raise type(exc)(f"[{stage}] {exc}") from exc
    counts["samples_out"] = table.n_samples
    return table, counts


# ---------------------------------------------------------------------------
# CSV formats
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def read_spectra_csv(path):
    """Return (ids, centers, X) from an ``id,<center_1>,...`` file."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "id":
            raise DataError(f"{path}: first header column must be 'id'")
        try:
            centers = [float(h) for h in header[1:]]
        except ValueError as exc:
            raise DataError(f"{path}: bad band center in header: {exc}") from exc
        ids, rows = [], []
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            ids.append(row[0].strip())
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(centers))
    return ids, np.array(centers), X


def _read_id_column(path, column: str, cast):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["id", column]:
            raise DataError(f"{path}: header must be 'id,{column}'")
        out = {}
        for lineno, row in enumerate(reader, 2):
            sid = row["id"].strip()
            if sid in out:
                raise DataError(f"{path}:{lineno}: duplicate id {sid!r}")
            try:
                out[sid] = cast(row[column].strip())
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
        return out


def read_richness_csv(path) -> dict:
    return _read_id_column(path, "richness", float)


def _cloud_value(text: str) -> bool:
    if text not in ("0", "1"):
        raise ValueError(f"cloud must be 0 or 1, got {text!r}")
    return text == "1"


def read_flags_csv(path) -> dict:
    return _read_id_column(path, "cloud", _cloud_value)


def load_table(spectra_path, richness_path, fwhm=None) -> SampleTable:
    """Join a spectra CSV and a richness CSV into a SampleTable.

    Band FWHMs default to the median center spacing.
    """
    ids, centers, X = read_spectra_csv(spectra_path)
    rich = read_richness_csv(richness_path)
    if set(rich) != set(ids):
        missing = sorted(set(ids) - set(rich))[:5]
        extra = sorted(set(rich) - set(ids))[:5]
        raise DataError(f"id mismatch between spectra and richness files (missing {missing}, extra {extra})")
    if fwhm is None:
        fwhm = float(np.median(np.diff(centers))) if centers.size > 1 else 1.0
    grid = SpectralGrid(centers, fwhm)
    return SampleTable(ids, X, [rich[i] for i in ids], grid)


def write_spectra_csv(path, table: SampleTable) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id"] + [_fmt(c) for c in table.grid.centers])
        for sid, row in zip(table.ids, table.X):
            w.writerow([sid] + [_fmt(v) for v in row])


def write_richness_csv(path, table: SampleTable) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "richness"])
        for sid, v in zip(table.ids, table.y):
            w.writerow([sid, _fmt(v)])

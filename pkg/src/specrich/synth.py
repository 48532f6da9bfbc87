"""Synthetic hyperspectral scenes with a known richness signal.

Each sample mixes a few endmember spectra with Dirichlet abundances.  The
richness target is a function of the abundances plus Gaussian noise, so
the best achievable correlation between spectra and richness is known in
advance.
"""

from __future__ import annotations

import math
import secrets
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import spectra
from .config import as_bool, as_floats, format_kv
from .errors import DataError, ParameterError
from .spectra import SampleTable, SpectralGrid

LINKS = ("linear", "saturating")
_MC_SAMPLES = 200_000


@dataclass(frozen=True)
class Bump:
    """Gaussian feature of an endmember: ``amplitude * exp(-(x - center)^2 / (2 width^2))``."""

    center: float
    width: float
    amplitude: float


@dataclass(frozen=True)
class SceneSpec:
    """Recipe for a synthetic scene.

    The richness link is ``intercept + coef . a`` (linear) or
    ``intercept + scale * (1 - exp(-coef . a))`` (saturating) for abundance
    vector ``a``.  When ``target_correlation`` is set it overrides
    ``noise_sd_richness`` with the noise level that gives that correlation
    between the noiseless link value and the observed richness.
    """

    n_samples: int
    grid: SpectralGrid
    endmembers: tuple
    link: str = "linear"
    link_coef: tuple = ()
    link_intercept: float = 0.0
    link_scale: float = 1.0
    noise_sd_spectral: float = 0.0
    noise_sd_richness: float = 0.0
    target_correlation: Optional[float] = None
    baseline: float = 0.0
    dirichlet_alpha: float = 1.0
    round_richness: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        if int(self.n_samples) < 1:
            raise ParameterError("n_samples: must be >= 1")
        ems = tuple(tuple(b if isinstance(b, Bump) else Bump(*b) for b in em) for em in self.endmembers)
        if len(ems) < 1:
            raise ParameterError("n_endmembers: need at least one endmember")
        for j, em in enumerate(ems, 1):
            if not em:
                raise ParameterError(f"endmember.{j}: needs at least one bump")
            if any(not b.width > 0 for b in em):
                raise ParameterError(f"endmember.{j}: bump widths must be > 0")
        object.__setattr__(self, "endmembers", ems)
        object.__setattr__(self, "n_samples", int(self.n_samples))
        coef = tuple(float(c) for c in self.link_coef)
        if len(coef) != len(ems):
            raise ParameterError(f"link_coef: {len(coef)} coefficients for {len(ems)} endmembers")
        object.__setattr__(self, "link_coef", coef)
        if self.link not in LINKS:
            raise ParameterError(f"link: must be one of {LINKS}, got {self.link!r}")
        if self.noise_sd_spectral < 0 or self.noise_sd_richness < 0:
            raise ParameterError("noise_sd_spectral / noise_sd_richness: must be >= 0")
        if self.target_correlation is not None and not 0 < self.target_correlation <= 1:
            raise ParameterError("target_correlation: must lie in (0, 1]")
        if not self.dirichlet_alpha > 0:
            raise ParameterError("dirichlet_alpha: must be > 0")

    @property
    def n_endmembers(self) -> int:
        return len(self.endmembers)


def endmember_matrix(spec: SceneSpec) -> np.ndarray:
    """Endmember spectra on the scene grid, shape (n_endmembers, n_bands)."""
    lam = spec.grid.centers
    E = np.full((spec.n_endmembers, lam.size), spec.baseline)
    for j, em in enumerate(spec.endmembers):
        for b in em:
            E[j] += b.amplitude * np.exp(-0.5 * ((lam - b.center) / b.width) ** 2)
    return E


def link_values(spec: SceneSpec, abundances) -> np.ndarray:
    s = np.asarray(abundances) @ np.asarray(spec.link_coef)
    if spec.link == "linear":
        return spec.link_intercept + s
    return spec.link_intercept + spec.link_scale * (1.0 - np.exp(-s))


def link_moments(spec: SceneSpec) -> tuple:
    """Mean and standard deviation of the noiseless link value.

    Exact for the linear link (Dirichlet moments); the saturating link uses
    a fixed-seed Monte Carlo estimate.
    """
    K = spec.n_endmembers
    alpha = np.full(K, spec.dirichlet_alpha)
    a0 = alpha.sum()
    if spec.link == "linear":
        c = np.asarray(spec.link_coef)
        mean_a = alpha / a0
        cov = (np.diag(alpha) * a0 - np.outer(alpha, alpha)) / (a0 ** 2 * (a0 + 1))
        return float(spec.link_intercept + c @ mean_a), float(math.sqrt(max(c @ cov @ c, 0.0)))
    rng = np.random.default_rng(12345)
    vals = link_values(spec, rng.dirichlet(alpha, size=_MC_SAMPLES))
    return float(vals.mean()), float(vals.std())


def richness_noise_sd(spec: SceneSpec) -> float:
    """Noise SD actually used: derived from ``target_correlation`` when that is set."""
    if spec.target_correlation is None:
        return float(spec.noise_sd_richness)
    _, sd = link_moments(spec)
    rho = spec.target_correlation
    return sd * math.sqrt(1.0 / (rho * rho) - 1.0)


def oracle_correlation(spec: SceneSpec) -> float:
    """Correlation between the noiseless link value and noisy richness (before clamping)."""
    _, sd = link_moments(spec)
    noise = richness_noise_sd(spec)
    return sd / math.sqrt(sd * sd + noise * noise) if sd > 0 else 0.0


def generate(spec: SceneSpec) -> SampleTable:
    """Draw a scene.  Diagnostics go into ``table.meta``.

    ``meta`` holds ``abundances``, ``signal`` (noiseless link values) and the
    clamp counters ``spectral_clamps`` / ``richness_clamps``.  Abundances,
    spectral noise and richness noise use independent streams derived from
    ``rng_seed``.
    """
    n, K = spec.n_samples, spec.n_endmembers
    abundances = np.random.default_rng([spec.rng_seed, 0]).dirichlet(np.full(K, spec.dirichlet_alpha), size=n)
    X = abundances @ endmember_matrix(spec)
    if spec.noise_sd_spectral > 0:
        X = X + np.random.default_rng([spec.rng_seed, 1]).normal(0.0, spec.noise_sd_spectral, X.shape)
    spectral_clamps = int((X < 0).sum())
    X = np.maximum(X, 0.0)

    signal = link_values(spec, abundances)
    noise_sd = richness_noise_sd(spec)
    y = signal + (np.random.default_rng([spec.rng_seed, 2]).normal(0.0, noise_sd, n) if noise_sd > 0 else 0.0)
    richness_clamps = int((y < 0).sum())
    y = np.maximum(y, 0.0)
    if spec.round_richness:
        y = np.round(y)

    width = len(str(n))
    ids = [f"S{i + 1:0{width}d}" for i in range(n)]
    meta = {
        "abundances": abundances,
        "signal": signal,
        "noise_sd_richness": noise_sd,
        "spectral_clamps": spectral_clamps,
        "richness_clamps": richness_clamps,
    }
    return SampleTable(ids, X, y, spec.grid, meta)


# ---------------------------------------------------------------------------
# config round trip
# ---------------------------------------------------------------------------

def _named_grid(name: str, fwhm) -> SpectralGrid:
    if name == "default52":
        full = spectra.default_target_grid()
        keep = sorted(set(range(len(full))) - set(spectra.match_bands(full, spectra.default_removed_bands())))
        return full.subset(keep)
    if name == "default60":
        return spectra.default_target_grid()
    if name == "desis235":
        return spectra.desis_like_grid()
    centers = as_floats(name, "grid")
    if len(centers) < 1:
        raise DataError("grid: empty")
    return SpectralGrid(centers, fwhm if fwhm is not None else 10.0)


def scene_from_config(cfg: dict) -> SceneSpec:
    """Build a SceneSpec from parsed ``key = value`` pairs.

    A missing ``rng_seed`` is drawn at random; the resolved value is
    recorded by :func:`scene_to_config`.
    """
    cfg = dict(cfg)
    try:
        n_em = int(cfg.pop("n_endmembers"))
        fwhm = float(cfg.pop("grid_fwhm")) if "grid_fwhm" in cfg else None
        grid_text = cfg.pop("grid", "default52")
        ems = []
        for j in range(1, n_em + 1):
            raw = cfg.pop(f"endmember.{j}")
            bumps = []
            for part in raw.split(","):
                fields = part.strip().split(":")
                if len(fields) != 3:
                    raise DataError(f"endmember.{j}: bumps must be center:width:amplitude, got {part.strip()!r}")
                bumps.append(Bump(*(float(f) for f in fields)))
            ems.append(tuple(bumps))
        kwargs = {
            "n_samples": int(cfg.pop("n_samples")),
            "grid": _named_grid(grid_text, fwhm),
            "endmembers": tuple(ems),
            "link": cfg.pop("link", "linear"),
            "link_coef": tuple(as_floats(cfg.pop("link_coef", ""), "link_coef")),
        }
        for key in ("link_intercept", "link_scale", "noise_sd_spectral", "noise_sd_richness",
                    "baseline", "dirichlet_alpha"):
            if key in cfg:
                kwargs[key] = float(cfg.pop(key))
        if "target_correlation" in cfg:
            kwargs["target_correlation"] = float(cfg.pop("target_correlation"))
        if "round_richness" in cfg:
            kwargs["round_richness"] = as_bool(cfg.pop("round_richness"), "round_richness")
        kwargs["rng_seed"] = int(cfg.pop("rng_seed")) if "rng_seed" in cfg else secrets.randbits(31)
    except KeyError as exc:
        raise DataError(f"missing required key {exc.args[0]}") from None
    except ValueError as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"bad scene value: {exc}") from None
    if cfg:
        raise DataError(f"unknown scene keys: {', '.join(sorted(cfg))}")
    return SceneSpec(**kwargs)


def scene_to_config(spec: SceneSpec) -> dict:
    out = {
        "n_samples": str(spec.n_samples),
        "n_endmembers": str(spec.n_endmembers),
        "grid": ", ".join(repr(float(c)) for c in spec.grid.centers),
    }
    fw = np.unique(spec.grid.fwhms)
    if fw.size != 1:
        raise DataError("scene grids with varying FWHM cannot be written to config")
    out["grid_fwhm"] = repr(float(fw[0]))
    for j, em in enumerate(spec.endmembers, 1):
        out[f"endmember.{j}"] = ", ".join(f"{b.center!r}:{b.width!r}:{b.amplitude!r}" for b in em)
    out["baseline"] = repr(spec.baseline)
    out["dirichlet_alpha"] = repr(spec.dirichlet_alpha)
    out["link"] = spec.link
    out["link_coef"] = ", ".join(repr(c) for c in spec.link_coef)
    out["link_intercept"] = repr(spec.link_intercept)
    out["link_scale"] = repr(spec.link_scale)
    out["noise_sd_spectral"] = repr(spec.noise_sd_spectral)
    if spec.target_correlation is not None:
        out["target_correlation"] = repr(spec.target_correlation)
    else:
        out["noise_sd_richness"] = repr(spec.noise_sd_richness)
    out["round_richness"] = "true" if spec.round_richness else "false"
    out["rng_seed"] = str(spec.rng_seed)
    return out


def benchmark_scene(seed: int | None = None) -> SceneSpec:
    """The bundled 60-sample, 52-band, 4-endmember benchmark scene."""
    from importlib import resources
    from .config import parse_kv

    text = resources.files("specrich").joinpath("data").joinpath("benchmark_scene.cfg").read_text(encoding="utf-8")
    cfg = parse_kv(text, "benchmark_scene.cfg")
    if seed is not None:
        cfg["rng_seed"] = str(seed)
    return scene_from_config(cfg)


def write_scene(path, spec: SceneSpec) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_kv(scene_to_config(spec), "resolved scene spec"))

"""Linear projections of spectra onto k components: PCA, CCA and PLS1.

All three fit a :class:`DimRedModel` holding the training column means and a
d x k matrix mapping centered spectra to component scores, so
:func:`transform` is shared.  Only centering is applied; bands are not
rescaled.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DataError, DegenerateTargetError, ParameterError, RankError, ShapeError

log = logging.getLogger(__name__)

METHODS = ("PCA", "CCA", "PLS")
CCA_RIDGE = 1e-6


@dataclass(frozen=True)
class DimRedModel:
    """A fitted projection.

    Attributes
    ----------
    method : str
        One of ``"PCA"``, ``"CCA"``, ``"PLS"``.
    x_mean : ndarray, shape (d,)
        Training column means.
    loadings : ndarray, shape (d, k)
        Maps centered spectra to scores.  For PCA these are orthonormal
        principal axes; for CCA and PLS the composite map ``W (P^T W)^-1``
        that reproduces the deflation scores from undeflated data.
    diagnostics : ndarray, shape (k,)
        Explained variance (PCA), canonical correlation with the target
        (CCA) or score/target covariance (PLS).
    notes : tuple of str
        Non-fatal events during fitting, such as an early stop.
    """

    method: str
    x_mean: np.ndarray
    loadings: np.ndarray
    diagnostics: np.ndarray
    notes: tuple = field(default=())

    def __post_init__(self):
        if self.method not in METHODS:
            raise ParameterError(f"unknown method {self.method!r}")
        for name in ("x_mean", "loadings", "diagnostics"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.loadings.ndim != 2 or self.loadings.shape[0] != self.x_mean.size:
            raise ShapeError("loadings must be d x k with d = len(x_mean)")
        if self.loadings.shape[1] < 1 or self.diagnostics.size != self.loadings.shape[1]:
            raise ShapeError("need k >= 1 loading columns with one diagnostic each")
        if not np.all(np.isfinite(self.loadings)):
            raise DataError("loadings must be finite")

    @property
    def n_features(self) -> int:
        return self.x_mean.size

    @property
    def n_components(self) -> int:
        return self.loadings.shape[1]


def _check_X(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"X must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DataError("X contains non-finite entries")
    return X


def _check_y(y, n) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size != n:
        raise ShapeError(f"y has {y.size} entries for {n} samples")
    if not np.all(np.isfinite(y)):
        raise DataError("y contains non-finite entries")
    return y


def _orient(R: np.ndarray) -> np.ndarray:
    """Flip columns so the entry of largest magnitude in each is positive."""
    idx = np.argmax(np.abs(R), axis=0)
    signs = np.sign(R[idx, np.arange(R.shape[1])])
    signs[signs == 0] = 1.0
    return R * signs


def _require_spread(Xc: np.ndarray, X: np.ndarray) -> None:
    scale = max(np.abs(X).max(), 1.0)
    if not np.any(np.abs(Xc) > 1e-14 * scale):
        raise ParameterError("all rows of X are identical; no directions to fit")


def max_components(method: str, n: int, d: int) -> int:
    """Upper bound on k for ``n`` training samples of dimension ``d``."""
    return max(min(d, n - 1), 0)


def pca_fit(X, k: int) -> DimRedModel:
    X = _check_X(X)
    n, d = X.shape
    if n < 2:
        raise ParameterError("PCA needs at least 2 samples")
    if not 1 <= k <= min(d, n - 1):
        raise ParameterError(f"k={k} outside [1, {min(d, n - 1)}] for {n}x{d} data")
    x_mean = X.mean(axis=0)
    Xc = X - x_mean
    _require_spread(Xc, X)
    _, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    loadings = _orient(Vt[:k].T)
    return DimRedModel("PCA", x_mean, loadings, s[:k] ** 2 / (n - 1))


def _deflation_fit(X, y, k, method, direction):
    """Shared deflation loop for CCA and PLS1.

    ``direction(Xj, yj)`` returns the unnormalized weight vector for the
    current deflated data.
    """
    n, d = X.shape
    x_mean = X.mean(axis=0)
    Xc = X - x_mean
    _require_spread(Xc, X)
    yc = y - y.mean()
    x_scale = np.linalg.norm(Xc)
    y_scale = np.linalg.norm(yc)

    Xj, yj = Xc.copy(), yc.copy()
    W, P, T = [], [], []
    notes = []
    for j in range(k):
        if np.linalg.norm(Xj) <= 1e-10 * x_scale:
            raise RankError(f"{method}: X exhausted after {j} components, k={k} exceeds its rank")
        if np.linalg.norm(yj) <= 1e-12 * y_scale or np.linalg.norm(Xj.T @ yj) <= 1e-12 * x_scale * y_scale:
            notes.append(f"early stop: residual target exhausted after {j} of {k} components")
            log.debug("%s %s", method, notes[-1])
            break
        w = direction(Xj, yj)
        w /= np.linalg.norm(w)
        t = Xj @ w
        tt = t @ t
        p = Xj.T @ t / tt
        Xj -= np.outer(t, p)
        if method == "PLS":
            yj = yj - t * (yj @ t / tt)
        W.append(w)
        P.append(p)
        T.append(t)
    if not W:
        raise DegenerateTargetError(f"{method}: target has no covariance with X")
    W = np.column_stack(W)
    P = np.column_stack(P)
    R = W @ np.linalg.inv(P.T @ W)
    R = _orient(R)
    scores = Xc @ R
    return x_mean, R, scores, yc, tuple(notes)


def cca_fit(X, y, k: int) -> DimRedModel:
    """Correlation-maximizing directions with deflation for k > 1.

    The within-X covariance gets a ridge of ``1e-6 * trace / d`` so the
    direction is defined when n < d.
    """
    X = _check_X(X)
    n, d = X.shape
    y = _check_y(y, n)
    if n < 3:
        raise ParameterError("CCA needs at least 3 samples")
    if k < 1:
        raise ParameterError(f"k={k} must be >= 1")
    if np.ptp(y) == 0:
        raise DegenerateTargetError("target is constant")

    def direction(Xj, yj):
        C = Xj.T @ Xj / (n - 1)
        gamma = CCA_RIDGE * np.trace(C) / d
        return scipy.linalg.solve(C + gamma * np.eye(d), Xj.T @ yj / (n - 1), assume_a="pos")

    x_mean, R, scores, yc, notes = _deflation_fit(X, y, k, "CCA", direction)
    corr = np.array([abs(_corr(t, yc)) for t in scores.T])
    return DimRedModel("CCA", x_mean, R, corr, notes)


def pls_fit(X, y, k: int) -> DimRedModel:
    """PLS1 by NIPALS deflation of X and y."""
    X = _check_X(X)
    n, d = X.shape
    y = _check_y(y, n)
    if n < 2:
        raise ParameterError("PLS needs at least 2 samples")
    if k < 1:
        raise ParameterError(f"k={k} must be >= 1")
    rank = np.linalg.matrix_rank(X - X.mean(axis=0))
    if k > rank:
        raise RankError(f"k={k} exceeds rank {rank} of centered X")

    x_mean, R, scores, yc, notes = _deflation_fit(X, y, k, "PLS", lambda Xj, yj: Xj.T @ yj)
    cov = scores.T @ yc / (n - 1)
    return DimRedModel("PLS", x_mean, R, cov, notes)


def _corr(a, b) -> float:
    a = a - a.mean()
    b = b - b.mean()
    den = np.linalg.norm(a) * np.linalg.norm(b)
    return float(a @ b / den) if den > 0 else 0.0


def fit(method: str, X, y, k: int) -> DimRedModel:
    method = method.upper()
    if method == "PCA":
        return pca_fit(X, k)
    if method == "CCA":
        return cca_fit(X, y, k)
    if method == "PLS":
        return pls_fit(X, y, k)
    raise ParameterError(f"unknown dimensionality reduction {method!r}; expected one of {METHODS}")


def transform(model: DimRedModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ShapeError(f"X has shape {X.shape}; model expects {model.n_features} columns")
    return (X - model.x_mean) @ model.loadings


def reconstruct(model: DimRedModel, scores) -> np.ndarray:
    """Back-project PCA scores to band space (PCA only)."""
    if model.method != "PCA":
        raise ParameterError("reconstruction is defined for PCA models only")
    return np.asarray(scores) @ model.loadings.T + model.x_mean

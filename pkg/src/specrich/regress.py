"""Ordinary least squares, kernel ridge and Gaussian process regression.

KRR and GPR share one kernel::

    k(a, b) = a.b + sigma2 + exp(-|a - b|^2 / (2 l^2)) + noise * [a is b]

The white term only ever lands on the diagonal of the training Gram
matrix, where it doubles as the ridge penalty.  It is keyed on sample
identity, so two distinct samples with equal coordinates get no cross term.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from . import _backend
from ._pykernels import JITTER_LEVELS
from .errors import DataError, NumericalError, ParameterError, ShapeError

VARIANTS = ("OLSR", "KRR", "GPR")


@dataclass(frozen=True)
class KernelParams:
    sigma2: float = 1.0
    length_scale: float = 1.0
    noise: float = 1.0

    def __post_init__(self):
        for name in ("sigma2", "length_scale", "noise"):
            v = float(getattr(self, name))
            if not np.isfinite(v):
                raise ParameterError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if self.sigma2 < 0:
            raise ParameterError(f"sigma2={self.sigma2} must be >= 0")
        if self.length_scale <= 0:
            raise ParameterError(f"length_scale={self.length_scale} must be > 0")
        if self.noise < 0:
            raise ParameterError(f"noise={self.noise} must be >= 0")


@dataclass(frozen=True)
class RegressionModel:
    """A fitted regressor.

    OLSR models use ``coef`` and ``intercept``.  Kernel models keep the
    training features, the dual weights ``alpha`` and the kernel
    parameters; GPR additionally stores the target mean it removed and the
    Cholesky factor of the regularized Gram matrix for predictive variances.
    """

    variant: str
    coef: Optional[np.ndarray] = None
    intercept: float = 0.0
    Z_train: Optional[np.ndarray] = None
    alpha: Optional[np.ndarray] = None
    params: Optional[KernelParams] = None
    y_mean: float = 0.0
    chol: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ParameterError(f"unknown regression variant {self.variant!r}")
        for name in ("coef", "Z_train", "alpha", "chol"):
            v = getattr(self, name)
            if v is not None:
                arr = np.array(v, dtype=np.float64)
                if not np.all(np.isfinite(arr)):
                    raise NumericalError(f"{self.variant} {name} is not finite")
                arr.flags.writeable = False
                object.__setattr__(self, name, arr)
        if self.variant == "OLSR":
            if self.coef is None:
                raise ParameterError("OLSR model needs coefficients")
        else:
            if self.Z_train is None or self.alpha is None or self.params is None:
                raise ParameterError(f"{self.variant} model needs Z_train, alpha and params")
            if self.alpha.shape != (self.Z_train.shape[0],):
                raise ShapeError("dual weights must have one entry per training sample")

    @property
    def n_features(self) -> int:
        return self.coef.size if self.variant == "OLSR" else self.Z_train.shape[1]


def _check_Zy(Z, y):
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[:, None]
    y = np.asarray(y, dtype=np.float64).ravel()
    if Z.ndim != 2 or Z.shape[0] != y.size:
        raise ShapeError(f"Z shape {Z.shape} does not match {y.size} targets")
    if Z.shape[0] < 1:
        raise ShapeError("need at least one sample")
    if not (np.all(np.isfinite(Z)) and np.all(np.isfinite(y))):
        raise DataError("non-finite regression data")
    return Z, y


def kernel_eval(x1, x2, params: KernelParams, same_point: bool = False) -> float:
    x1 = np.asarray(x1, dtype=np.float64).ravel()
    x2 = np.asarray(x2, dtype=np.float64).ravel()
    if x1.shape != x2.shape:
        raise ShapeError("kernel arguments differ in length")
    if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(x2))):
        raise DataError("non-finite kernel argument")
    diff = x1 - x2
    value = x1 @ x2 + params.sigma2 + np.exp(-(diff @ diff) / (2.0 * params.length_scale ** 2))
    return float(value + (params.noise if same_point else 0.0))


def gram(A, B, params: KernelParams) -> np.ndarray:
    """Dot-product + RBF Gram matrix between rows of A and B, without the white term."""
    return _backend.composite_gram(A, B, params.sigma2, params.length_scale)


def training_gram(Z, params: KernelParams) -> np.ndarray:
    """Full kernel on the training set, white term on the diagonal."""
    K = gram(Z, Z, params)
    K[np.diag_indices_from(K)] += params.noise
    return K


def cholesky_jitter(K: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, retrying with up to three escalating diagonal jitters."""
    n = K.shape[0]
    try:
        return scipy.linalg.cholesky(K, lower=True)
    except np.linalg.LinAlgError:
        pass
    scale = np.trace(K) / n
    for level in JITTER_LEVELS:
        try:
            return scipy.linalg.cholesky(K + level * scale * np.eye(n), lower=True)
        except np.linalg.LinAlgError:
            continue
    raise NumericalError("kernel matrix is not positive definite even after jitter")


def olsr_fit(Z, y) -> RegressionModel:
    """Least squares with intercept; minimum-norm coefficients if Z is rank deficient."""
    Z, y = _check_Zy(Z, y)
    z_mean = Z.mean(axis=0)
    y_mean = y.mean()
    coef, *_ = np.linalg.lstsq(Z - z_mean, y - y_mean, rcond=None)
    return RegressionModel("OLSR", coef=coef, intercept=float(y_mean - z_mean @ coef))


def _kernel_fit(variant, Z, y, params):
    Z, y = _check_Zy(Z, y)
    if not params.noise > 0:
        raise ParameterError(f"{variant} needs noise > 0, got {params.noise}")
    offset = float(y.mean()) if variant == "GPR" else 0.0
    L = cholesky_jitter(training_gram(Z, params))
    alpha = scipy.linalg.cho_solve((L, True), y - offset)
    return RegressionModel(variant, Z_train=Z, alpha=alpha, params=params, y_mean=offset,
                           chol=L if variant == "GPR" else None)


def krr_fit(Z, y, params: KernelParams) -> RegressionModel:
    return _kernel_fit("KRR", Z, y, params)


def gpr_fit(Z, y, params: KernelParams) -> RegressionModel:
    """Zero-mean GP on mean-centered targets; the mean is added back at prediction."""
    return _kernel_fit("GPR", Z, y, params)


def fit(variant: str, Z, y, params: KernelParams | None = None) -> RegressionModel:
    variant = variant.upper()
    if variant == "OLSR":
        return olsr_fit(Z, y)
    if variant not in VARIANTS:
        raise ParameterError(f"unknown regressor {variant!r}; expected one of {VARIANTS}")
    if params is None:
        raise ParameterError(f"{variant} needs KernelParams")
    return _kernel_fit(variant, Z, y, params)


def _check_test(model, Z):
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[:, None] if model.n_features == 1 else Z[None, :]
    if Z.ndim != 2 or Z.shape[1] != model.n_features:
        raise ShapeError(f"Z has shape {Z.shape}; model expects {model.n_features} features")
    return Z


def _rowdot(M, v):
    # per-row reduction: unlike BLAS gemv, identical rows give identical results
    return (M * v).sum(axis=1)


def predict(model: RegressionModel, Z) -> np.ndarray:
    Z = _check_test(model, Z)
    if model.variant == "OLSR":
        return _rowdot(Z, model.coef) + model.intercept
    return _rowdot(gram(Z, model.Z_train, model.params), model.alpha) + model.y_mean


def predict_var(model: RegressionModel, Z, include_noise: bool = False) -> np.ndarray:
    """GPR predictive variance at new points, clamped at zero."""
    if model.variant != "GPR":
        raise ParameterError("predictive variance is only defined for GPR")
    Z = _check_test(model, Z)
    Ks = gram(Z, model.Z_train, model.params)
    v = scipy.linalg.solve_triangular(model.chol, Ks.T, lower=True)
    prior = np.einsum("ij,ij->i", Z, Z) + model.params.sigma2 + 1.0
    if include_noise:
        prior = prior + model.params.noise
    return np.maximum(prior - (v * v).sum(axis=0), 0.0)

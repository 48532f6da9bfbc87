"""Repeated two-fold cross validation with grid search, metrics and reports.

Each repetition draws one random halving of the samples.  Round 1 trains on
the first half and validates on the second; round 2 swaps them.  In the
default ``nested`` selection mode the component count and kernel
hyperparameters are chosen by an inner two-fold split of the training half
only.  ``pooled`` mode instead picks the single grid point with the lowest
mean RMSE over the outer validation rounds themselves; it reads validation
targets during selection and is provided only for comparison.

Randomness comes from ``numpy.random.default_rng`` seeded with
``(rng_seed, repetition, purpose, round)`` so results do not depend on the
order in which rounds are executed.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import pdist

from . import _backend, dimred, regress
from .errors import (
    CvFitError,
    InsufficientDataError,
    ParameterError,
    SearchFailureError,
    ShapeError,
    SpecrichError,
    UndefinedCorrelationError,
)
from .regress import KernelParams

log = logging.getLogger(__name__)

DIMRED_ORDER = ("PCA", "CCA", "PLS")
REGRESSOR_ORDER = ("OLSR", "GPR", "KRR")
ALL_PAIRS = tuple((d, r) for d in DIMRED_ORDER for r in REGRESSOR_ORDER)

# purposes mixed into the seed sequence
_SPLIT, _INNER = 0, 1


def _sorted_floats(values, name):
    vals = tuple(sorted(float(v) for v in values))
    if not vals:
        raise ParameterError(f"{name} must not be empty")
    if not all(math.isfinite(v) and v > 0 for v in vals):
        raise ParameterError(f"{name} entries must be positive and finite")
    return vals


@dataclass(frozen=True)
class CvConfig:
    """Cross-validation and grid-search settings.

    ``length_scale_grid`` and ``noise_grid`` are multipliers when
    ``scale_grids`` is true: length scales are multiplied by the median
    pairwise distance of the training features and noise levels by the
    variance of the training targets.  ``inner_repetitions`` is how many
    independent inner two-fold splits are averaged when scoring a grid point.
    """

    repetitions: int = 10
    folds: int = 2
    rng_seed: int = 0
    k_grid: tuple = tuple(range(1, 11))
    sigma2_grid: tuple = tuple(10.0 ** e for e in range(-3, 4))
    length_scale_grid: tuple = tuple(10.0 ** e for e in range(-2, 3))
    noise_grid: tuple = tuple(10.0 ** e for e in range(-3, 2))
    selection_mode: str = "nested"
    scale_grids: bool = True
    inner_repetitions: int = 5
    n_jobs: int = 1

    def __post_init__(self):
        if int(self.repetitions) < 1:
            raise ParameterError("repetitions must be >= 1")
        if int(self.folds) != 2:
            raise ParameterError("only two-fold cross validation is supported")
        ks = tuple(sorted(int(k) for k in self.k_grid))
        if not ks or ks[0] < 1:
            raise ParameterError("k_grid must be non-empty with entries >= 1")
        if self.selection_mode not in ("nested", "pooled"):
            raise ParameterError(f"selection_mode must be 'nested' or 'pooled', got {self.selection_mode!r}")
        if int(self.n_jobs) < 1:
            raise ParameterError("n_jobs must be >= 1")
        if int(self.inner_repetitions) < 1:
            raise ParameterError("inner_repetitions must be >= 1")
        object.__setattr__(self, "inner_repetitions", int(self.inner_repetitions))
        object.__setattr__(self, "repetitions", int(self.repetitions))
        object.__setattr__(self, "rng_seed", int(self.rng_seed))
        object.__setattr__(self, "n_jobs", int(self.n_jobs))
        object.__setattr__(self, "k_grid", tuple(dict.fromkeys(ks)))
        for name in ("sigma2_grid", "length_scale_grid", "noise_grid"):
            object.__setattr__(self, name, tuple(dict.fromkeys(_sorted_floats(getattr(self, name), name))))


def parse_pair(text: str) -> tuple:
    """``"PLS:GPR"`` -> ``("PLS", "GPR")``."""
    try:
        d, r = (part.strip().upper() for part in text.split(":"))
    except ValueError:
        raise ParameterError(f"method pair must look like DIMRED:REGRESSOR, got {text!r}") from None
    return check_pair((d, r))


def check_pair(pair) -> tuple:
    d, r = (str(p).upper() for p in pair)
    if d not in DIMRED_ORDER:
        raise ParameterError(f"unknown dimensionality reduction {d!r}")
    if r not in REGRESSOR_ORDER:
        raise ParameterError(f"unknown regressor {r!r}")
    return d, r


# ---------------------------------------------------------------------------
# splitting and metrics
# ---------------------------------------------------------------------------

def two_fold_split(n: int, seed):
    """Random halving of ``range(n)``; returns two sorted index arrays.

    ``seed`` is anything accepted by ``numpy.random.default_rng``.  The first
    subset gets ``n // 2`` samples.
    """
    if n < 4:
        raise InsufficientDataError(f"two-fold split needs at least 4 samples, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    half = n // 2
    return np.sort(perm[:half]), np.sort(perm[half:])


def _pair_arrays(pred, truth):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.shape != truth.shape:
        raise ShapeError(f"prediction length {pred.size} != truth length {truth.size}")
    return pred, truth


def pearson_r(pred, truth) -> float:
    pred, truth = _pair_arrays(pred, truth)
    if pred.size < 2:
        raise UndefinedCorrelationError("correlation needs at least 2 values")
    a = pred - pred.mean()
    b = truth - truth.mean()
    na = math.sqrt(a @ a)
    nb = math.sqrt(b @ b)
    # relative guard: a vector that is constant up to rounding has no direction
    if na <= 1e-13 * max(np.abs(pred).max(), 1e-300) or nb <= 1e-13 * max(np.abs(truth).max(), 1e-300):
        raise UndefinedCorrelationError("correlation undefined for a constant vector")
    return float(np.clip((a @ b) / (na * nb), -1.0, 1.0))


def rmse(pred, truth) -> float:
    pred, truth = _pair_arrays(pred, truth)
    if pred.size < 1:
        raise ShapeError("rmse needs at least one value")
    d = pred - truth
    return float(math.sqrt(d @ d / d.size))


# ---------------------------------------------------------------------------
# grid search
# ---------------------------------------------------------------------------

def feature_scale(Z) -> float:
    """Median pairwise Euclidean distance between rows (1.0 if degenerate)."""
    if Z.shape[0] < 2:
        return 1.0
    med = float(np.median(pdist(Z)))
    return med if med > 0 else 1.0


def target_scale(y) -> float:
    v = float(np.var(y))
    return v if v > 0 else 1.0


@dataclass(frozen=True)
class GridChoice:
    """Selected grid point.  Kernel entries are grid values (multipliers when scaled)."""

    k: int
    sigma2: Optional[float] = None
    length_scale: Optional[float] = None
    noise: Optional[float] = None
    score: float = math.nan
    n_failed: int = 0
    searched: bool = True

    def resolve(self, Z, y, config: CvConfig) -> Optional[KernelParams]:
        """Absolute kernel parameters for training features ``Z`` and targets ``y``."""
        if self.sigma2 is None:
            return None
        length, noise = self.length_scale, self.noise
        if config.scale_grids:
            length *= feature_scale(Z)
            noise *= target_scale(y)
        return KernelParams(self.sigma2, length, noise)


def _feasible_k(method, X, k_max):
    n, d = X.shape
    limit = min(d, n - 1, k_max)
    if method != "PCA":
        limit = min(limit, int(np.linalg.matrix_rank(X - X.mean(axis=0))))
    return limit


def score_grid(X_train, y_train, X_val, y_val, pair, config: CvConfig) -> dict:
    """Validation RMSE of every grid point for one train/validation split.

    Returns ``{k: array}`` where the array has shape
    ``(len(sigma2_grid), len(length_scale_grid), len(noise_grid))`` for kernel
    regressors and ``(1, 1, 1)`` for OLSR.  Infeasible or failed points are NaN.
    Components for every k come from one fit at the largest feasible k; the
    deflation methods and PCA produce nested components so this equals
    fitting each k separately.
    """
    method, reg = pair
    kernel = reg != "OLSR"
    shape = (len(config.sigma2_grid), len(config.length_scale_grid), len(config.noise_grid)) if kernel else (1, 1, 1)
    out = {k: np.full(shape, np.nan) for k in config.k_grid}
    k_fit = _feasible_k(method, X_train, max(config.k_grid))
    if k_fit < 1:
        return out
    try:
        model = dimred.fit(method, X_train, y_train, k_fit)
    except SpecrichError as exc:
        log.debug("grid: %s fit failed at k=%d: %s", method, k_fit, exc)
        return out
    Z_tr_all = dimred.transform(model, X_train)
    Z_va_all = dimred.transform(model, X_val)
    var_scale = target_scale(y_train) if config.scale_grids else 1.0
    for k in config.k_grid:
        if k > model.n_components:
            continue
        Z_tr, Z_va = Z_tr_all[:, :k], Z_va_all[:, :k]
        if not kernel:
            pred = regress.predict(regress.olsr_fit(Z_tr, y_train), Z_va)
            out[k][0, 0, 0] = rmse(pred, y_val)
            continue
        len_scale = feature_scale(Z_tr) if config.scale_grids else 1.0
        out[k] = _backend.kernel_grid_rmse(
            Z_tr, y_train, Z_va, y_val,
            np.asarray(config.sigma2_grid),
            np.asarray(config.length_scale_grid) * len_scale,
            np.asarray(config.noise_grid) * var_scale,
            reg == "GPR",
        )
    return out


def select_grid_point(scores: dict, pair, config: CvConfig) -> GridChoice:
    """Lowest score wins; ties go to smaller k, then noise, length scale, sigma2."""
    kernel = pair[1] != "OLSR"
    best = None
    n_failed = 0
    for k in config.k_grid:
        arr = scores[k]
        n_failed += int(np.isnan(arr).sum())
        for di in range(arr.shape[2]):
            for li in range(arr.shape[1]):
                for si in range(arr.shape[0]):
                    v = arr[si, li, di]
                    if not np.isnan(v) and (best is None or v < best[0]):
                        best = (float(v), k, si, li, di)
    if best is None:
        raise SearchFailureError(f"every grid point failed for {pair[0]}+{pair[1]}")
    score, k, si, li, di = best
    if not kernel:
        return GridChoice(k, score=score, n_failed=n_failed)
    return GridChoice(k, config.sigma2_grid[si], config.length_scale_grid[li], config.noise_grid[di],
                      score=score, n_failed=n_failed)


def _single_point(pair, config):
    if len(config.k_grid) != 1:
        return None
    if pair[1] == "OLSR":
        return GridChoice(config.k_grid[0], searched=False)
    if all(len(g) == 1 for g in (config.sigma2_grid, config.length_scale_grid, config.noise_grid)):
        return GridChoice(config.k_grid[0], config.sigma2_grid[0], config.length_scale_grid[0],
                          config.noise_grid[0], searched=False)
    return None


def grid_search(train_X, train_y, method_pair, config: CvConfig, seed=None) -> GridChoice:
    """Pick k and kernel hyperparameters by two-fold CV inside the training data.

    The score of a grid point is its RMSE averaged over both rounds of
    ``config.inner_repetitions`` independent inner splits.  ``seed`` (an int
    or tuple of ints) fixes the splits; it defaults to ``config.rng_seed``.
    """
    pair = check_pair(method_pair)
    single = _single_point(pair, config)
    if single is not None:
        return single
    X = np.asarray(train_X, dtype=np.float64)
    y = np.asarray(train_y, dtype=np.float64)
    base = tuple(np.atleast_1d(config.rng_seed if seed is None else seed).tolist())
    total = {k: 0.0 for k in config.k_grid}
    for j in range(config.inner_repetitions):
        I, II = two_fold_split(X.shape[0], base + (j,))
        a = score_grid(X[I], y[I], X[II], y[II], pair, config)
        b = score_grid(X[II], y[II], X[I], y[I], pair, config)
        for k in config.k_grid:
            total[k] = total[k] + a[k] + b[k]
    n_scores = 2 * config.inner_repetitions
    return select_grid_point({k: v / n_scores for k, v in total.items()}, pair, config)


# ---------------------------------------------------------------------------
# cross validation
# ---------------------------------------------------------------------------

class TargetAudit:
    """Hands out slices of the target vector and records every read.

    Each read is tagged with a purpose (``fit``, ``select`` or ``metric``) and
    the (repetition, round) it serves, so tests can prove validation targets
    are only touched when computing metrics.
    """

    def __init__(self, y):
        self._y = np.array(y, dtype=np.float64)
        self._lock = threading.Lock()
        self.records = []

    def __len__(self):
        return self._y.size

    def read(self, idx, purpose, repetition, round):
        idx = np.asarray(idx, dtype=int)
        with self._lock:
            self.records.append((purpose, repetition, round, frozenset(idx.tolist())))
        return self._y[idx].copy()

    def leaks(self, report: "CvReport") -> int:
        """Reads of validation targets for any purpose other than metrics."""
        val = {(rr.repetition, rr.round): set(rr.val_idx) for rr in report.per_round}
        count = 0
        for purpose, rep, rnd, idx in self.records:
            if purpose == "metric":
                continue
            count += len(idx & val[(rep, rnd)])
        return count


@dataclass(frozen=True)
class RoundResult:
    repetition: int
    round: int
    k: int
    params: Optional[KernelParams]
    choice: GridChoice
    r: float
    rmse: float
    val_idx: tuple
    pred: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class CvReport:
    method_pair: tuple
    per_round: tuple
    aggregate: dict
    pooled: dict
    r_undefined: int
    n_samples: int
    selection_mode: str = "nested"

    @property
    def r_mean(self) -> float:
        return self.aggregate["r_mean"]

    @property
    def rmse_mean(self) -> float:
        return self.aggregate["rmse_mean"]


def _mean_std(values):
    vals = [v for v in values if math.isfinite(v)]
    if not vals:
        return math.nan, math.nan
    arr = np.array(vals)
    return float(arr.mean()), float(arr.std(ddof=1)) if arr.size > 1 else 0.0


def summarize(r_values, rmse_values):
    """Round-averaged means and sample standard deviations; undefined r are skipped."""
    r_mean, r_std = _mean_std(r_values)
    e_mean, e_std = _mean_std(rmse_values)
    return {"r_mean": r_mean, "r_std": r_std, "rmse_mean": e_mean, "rmse_std": e_std}


def pooled_metrics(per_repetition):
    """Average over repetitions of r and RMSE on all validation predictions of a repetition.

    ``per_repetition`` is a list of ``(pred, truth)`` pairs.
    """
    rs, es = [], []
    for pred, truth in per_repetition:
        try:
            rs.append(pearson_r(pred, truth))
        except UndefinedCorrelationError:
            pass
        es.append(rmse(pred, truth))
    return {"r": float(np.mean(rs)) if rs else math.nan, "rmse": float(np.mean(es)) if es else math.nan}


def _pmap(fn, items, n_jobs):
    if n_jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, items))


def _fit_predict(X_tr, y_tr, X_va, pair, choice, config):
    method, reg = pair
    dr = dimred.fit(method, X_tr, y_tr, choice.k)
    Z_tr = dimred.transform(dr, X_tr)
    Z_va = dimred.transform(dr, X_va)
    params = choice.resolve(Z_tr, y_tr, config)
    model = regress.fit(reg, Z_tr, y_tr, params)
    return regress.predict(model, Z_va), params


def run_cv(table, method_pair, config: CvConfig | None = None, audit: TargetAudit | None = None) -> CvReport:
    """Repeated two-fold cross validation of one dimred + regressor pair.

    ``table`` is a :class:`~specrich.spectra.SampleTable` or an ``(X, y)``
    tuple.  Pass a :class:`TargetAudit` built on the same targets to inspect
    target reads afterwards.
    """
    config = config or CvConfig()
    pair = check_pair(method_pair)
    X, y = (table.X, table.y) if hasattr(table, "X") else table
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if audit is None:
        audit = TargetAudit(y)
    elif len(audit) != n:
        raise ShapeError("audit targets do not match X")
    if n < 4:
        raise InsufficientDataError(f"cross validation needs at least 4 samples, got {n}")

    tasks = []
    for rep in range(1, config.repetitions + 1):
        I, II = two_fold_split(n, (config.rng_seed, rep, _SPLIT))
        tasks.append((rep, 1, I, II))
        tasks.append((rep, 2, II, I))

    fixed = None
    if config.selection_mode == "pooled":
        def score_task(task):
            rep, rnd, tr, va = task
            y_tr = audit.read(tr, "fit", rep, rnd)
            y_va = audit.read(va, "select", rep, rnd)
            return score_grid(X[tr], y_tr, X[va], y_va, pair, config)

        all_scores = _pmap(score_task, tasks, config.n_jobs)
        mean_scores = {k: np.mean([s[k] for s in all_scores], axis=0) for k in config.k_grid}
        fixed = select_grid_point(mean_scores, pair, config)

    def round_task(task):
        rep, rnd, tr, va = task
        try:
            y_tr = audit.read(tr, "fit", rep, rnd)
            if fixed is not None:
                choice = fixed
            else:
                choice = grid_search(X[tr], y_tr, pair, config, seed=(config.rng_seed, rep, _INNER, rnd))
            pred, params = _fit_predict(X[tr], y_tr, X[va], pair, choice, config)
        except SpecrichError as exc:
            raise CvFitError(f"{pair[0]}+{pair[1]} repetition {rep} round {rnd}: {exc}", rep, rnd) from exc
        y_va = audit.read(va, "metric", rep, rnd)
        try:
            r = pearson_r(pred, y_va)
        except UndefinedCorrelationError:
            r = math.nan
        return RoundResult(rep, rnd, choice.k, params, choice, r, rmse(pred, y_va), tuple(int(i) for i in va), pred)

    results = _pmap(round_task, tasks, config.n_jobs)
    results.sort(key=lambda rr: (rr.repetition, rr.round))
    r_undefined = sum(1 for rr in results if not math.isfinite(rr.r))
    if r_undefined:
        log.warning("%s+%s: %d rounds with undefined r excluded", pair[0], pair[1], r_undefined)

    y_all = np.asarray(y, dtype=np.float64)
    per_rep = []
    for rep in range(1, config.repetitions + 1):
        rounds = [rr for rr in results if rr.repetition == rep]
        idx = np.concatenate([rr.val_idx for rr in rounds]).astype(int)
        per_rep.append((np.concatenate([rr.pred for rr in rounds]), y_all[idx]))
    return CvReport(
        method_pair=pair,
        per_round=tuple(results),
        aggregate=summarize([rr.r for rr in results], [rr.rmse for rr in results]),
        pooled=pooled_metrics(per_rep),
        r_undefined=r_undefined,
        n_samples=n,
        selection_mode=config.selection_mode,
    )


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

REPORT_COLUMNS = ("dimred", "regressor", "r_mean", "r_std", "rmse_mean", "rmse_std",
                  "r_pooled", "rmse_pooled", "best_flag")
ROUND_COLUMNS = ("repetition", "round", "dimred", "regressor", "k", "sigma2", "length_scale",
                 "noise", "r", "rmse")
PREDICTION_COLUMNS = ("repetition", "round", "dimred", "regressor", "id", "truth", "prediction")


def _num(x) -> str:
    if x is None:
        return ""
    x = float(x)
    return repr(x) if math.isfinite(x) else "nan"


@dataclass(frozen=True)
class ReportRow:
    dimred: str
    regressor: str
    r_mean: float
    r_std: float
    rmse_mean: float
    rmse_std: float
    r_pooled: float
    rmse_pooled: float
    best: bool = False


@dataclass(frozen=True)
class ReportTable:
    rows: tuple

    def best_row(self) -> ReportRow:
        return next(r for r in self.rows if r.best)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in self.rows:
            w.writerow([r.dimred, r.regressor, _num(r.r_mean), _num(r.r_std), _num(r.rmse_mean),
                        _num(r.rmse_std), _num(r.r_pooled), _num(r.rmse_pooled), int(r.best)])
        return buf.getvalue()

    def to_text(self) -> str:
        head = ("Dimensionality Reduction", "Regression", "r", "RMSE", "r (pooled)", "RMSE (pooled)")
        body = []
        for r in self.rows:
            body.append((
                r.dimred, r.regressor,
                f"{r.r_mean:.2f} ± {r.r_std:.2f}", f"{r.rmse_mean:.2f} ± {r.rmse_std:.2f}",
                f"{r.r_pooled:.2f}", f"{r.rmse_pooled:.2f}",
            ))
        widths = [max(len(h), *(len(b[i]) for b in body)) for i, h in enumerate(head)]

        def line(cells, mark=" "):
            return mark + " " + "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()

        out = [line(head), "  " + "  ".join("-" * w for w in widths)]
        out += [line(b, "*" if r.best else " ") for b, r in zip(body, self.rows)]
        out.append("* best: highest mean r, ties broken by lowest mean RMSE")
        return "\n".join(out) + "\n"


def _row_order(pair):
    return DIMRED_ORDER.index(pair[0]), REGRESSOR_ORDER.index(pair[1])


def build_table(rows: Sequence[ReportRow]) -> ReportTable:
    """Sort rows into the fixed method order and flag the best one."""
    if not rows:
        raise ParameterError("report needs at least one method pair")
    rows = sorted(rows, key=lambda r: _row_order((r.dimred, r.regressor)))

    def rank(i):
        r = rows[i]
        rm = r.r_mean if math.isfinite(r.r_mean) else -math.inf
        em = r.rmse_mean if math.isfinite(r.rmse_mean) else math.inf
        return (-rm, em, i)

    best = min(range(len(rows)), key=rank)
    return ReportTable(tuple(
        ReportRow(**{**r.__dict__, "best": i == best}) for i, r in enumerate(rows)
    ))


def report_table(reports) -> ReportTable:
    """Tabulate CV reports; accepts reports or ``(method_pair, report)`` tuples."""
    rows = []
    for item in reports:
        rep = item[1] if isinstance(item, tuple) else item
        d, r = rep.method_pair
        a = rep.aggregate
        rows.append(ReportRow(d, r, a["r_mean"], a["r_std"], a["rmse_mean"], a["rmse_std"],
                              rep.pooled["r"], rep.pooled["rmse"]))
    return build_table(rows)


def rounds_csv_rows(report: CvReport):
    d, r = report.method_pair
    for rr in report.per_round:
        p = rr.params
        yield [rr.repetition, rr.round, d, r, rr.k,
               _num(p.sigma2) if p else "", _num(p.length_scale) if p else "", _num(p.noise) if p else "",
               _num(rr.r), _num(rr.rmse)]


def prediction_csv_rows(report: CvReport, ids, y):
    d, r = report.method_pair
    for rr in report.per_round:
        for i, p in zip(rr.val_idx, rr.pred):
            yield [rr.repetition, rr.round, d, r, ids[i], _num(y[i]), _num(p)]

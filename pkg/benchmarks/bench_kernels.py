"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Each case runs both implementations on identical inputs, checks that they
agree, and reports the best-of-N wall time.
"""

import argparse
import time

import numpy as np

from specrich import _backend, _pykernels, spectra, synth
from specrich import evaluation as ev

try:
    from specrich import _ckernels
except ImportError:
    _ckernels = None


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    src = spectra.desis_like_grid()
    tgt = spectra.default_target_grid()
    yield "resample_weights 235->60", "resample_weights", (src.centers, tgt.centers, tgt.sigmas, 3.0)

    Z = rng.normal(size=(200, 8))
    yield "composite_gram 200x200 k=8", "composite_gram", (Z, Z, 0.5, 1.3)

    # one inner split of the default search on a 60-sample table: 7x5x5 grid points
    Zt, Zv = rng.normal(size=(15, 5)), rng.normal(size=(15, 5))
    yt, yv = rng.normal(size=15), rng.normal(size=15)
    grids = (np.logspace(-3, 3, 7), np.logspace(-2, 2, 5), np.logspace(-3, 1, 5))
    yield "kernel_grid_rmse n=15 175 pts", "kernel_grid_rmse", (Zt, yt, Zv, yv, *grids, True)

    Zt, Zv = rng.normal(size=(100, 5)), rng.normal(size=(100, 5))
    yt, yv = rng.normal(size=100), rng.normal(size=100)
    yield "kernel_grid_rmse n=100 175 pts", "kernel_grid_rmse", (Zt, yt, Zv, yv, *grids, True)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; only the numpy fallback is available")

    print(f"{'case':34s} {'numpy [ms]':>11s} {'cython [ms]':>12s} {'speedup':>8s} {'max rel diff':>13s}")
    for label, name, inputs in cases(np.random.default_rng(0)):
        py_fn = getattr(_pykernels, name)
        t_py = best_time(lambda: py_fn(*inputs), args.repeat)
        if _ckernels is None:
            print(f"{label:34s} {1e3 * t_py:11.3f} {'-':>12s} {'-':>8s} {'-':>13s}")
            continue
        c_fn = getattr(_ckernels, name)
        t_c = best_time(lambda: c_fn(*inputs), args.repeat)
        a, b = np.asarray(py_fn(*inputs)), np.asarray(c_fn(*inputs))
        diff = float(np.nanmax(np.abs(a - b) / np.maximum(np.abs(a), 1e-300)))
        print(f"{label:34s} {1e3 * t_py:11.3f} {1e3 * t_c:12.3f} {t_py / t_c:7.1f}x {diff:13.1e}")

    # whole pipeline: PLS+GPR, default grids, 10x2 CV on the benchmark scene
    table = synth.generate(synth.benchmark_scene(seed=1))
    timings = {}
    for label, mod in (("numpy", _pykernels), ("cython", _ckernels)):
        if mod is None:
            continue
        for name in ("resample_weights", "composite_gram", "kernel_grid_rmse"):
            setattr(_backend, name, getattr(mod, name))
        t0 = time.perf_counter()
        rep = ev.run_cv(table, ("PLS", "GPR"), ev.CvConfig(rng_seed=1))
        timings[label] = (time.perf_counter() - t0, rep.r_mean)
    print()
    for label, (secs, r) in timings.items():
        print(f"run_cv PLS+GPR benchmark scene, {label:6s}: {secs:6.2f} s (r = {r:.4f})")


if __name__ == "__main__":
    main()

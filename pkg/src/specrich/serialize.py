"""Plain-text persistence for fitted models.

Layout, in this order::

    # specrich model v1
    kind = dimred | regression
    <key> = <value>                  (one per line, see below)
    [<name> <rows> <cols>]           (matrix block header)
    <row values separated by spaces>

dimred keys: ``method``, ``notes`` (``|``-separated); blocks ``x_mean``
(1 x d), ``loadings`` (d x k), ``diagnostics`` (1 x k).

regression keys: ``variant``, ``intercept``, ``y_mean`` and, for kernel
models, ``sigma2``, ``length_scale``, ``noise``; blocks ``coef`` (OLSR),
``Z_train``, ``alpha`` and ``chol`` (GPR only).

Floats are written with ``repr`` so a load reproduces the model bit for bit.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .dimred import DimRedModel
from .errors import DataError
from .regress import KernelParams, RegressionModel

MAGIC = "# specrich model v1"


def _write_block(out, name, arr):
    arr = np.atleast_2d(np.asarray(arr, dtype=np.float64))
    out.write(f"[{name} {arr.shape[0]} {arr.shape[1]}]\n")
    for row in arr:
        out.write(" ".join(repr(float(v)) for v in row) + "\n")


def dumps(model) -> str:
    out = io.StringIO()
    out.write(MAGIC + "\n")
    if isinstance(model, DimRedModel):
        out.write("kind = dimred\n")
        out.write(f"method = {model.method}\n")
        out.write(f"notes = {'|'.join(model.notes)}\n")
        _write_block(out, "x_mean", model.x_mean)
        _write_block(out, "loadings", model.loadings)
        _write_block(out, "diagnostics", model.diagnostics)
    elif isinstance(model, RegressionModel):
        out.write("kind = regression\n")
        out.write(f"variant = {model.variant}\n")
        out.write(f"intercept = {model.intercept!r}\n")
        out.write(f"y_mean = {model.y_mean!r}\n")
        if model.params is not None:
            out.write(f"sigma2 = {model.params.sigma2!r}\n")
            out.write(f"length_scale = {model.params.length_scale!r}\n")
            out.write(f"noise = {model.params.noise!r}\n")
        for name in ("coef", "Z_train", "alpha", "chol"):
            arr = getattr(model, name)
            if arr is not None:
                _write_block(out, name, arr)
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return out.getvalue()


def loads(text: str):
    lines = text.splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise DataError("not a specrich model file")
    keys, blocks = {}, {}
    i = 1
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if not line:
            continue
        if line.startswith("["):
            try:
                name, rows, cols = line.strip("[]").split()
                rows, cols = int(rows), int(cols)
                data = [[float(v) for v in lines[i + r].split()] for r in range(rows)]
            except (ValueError, IndexError) as exc:
                raise DataError(f"bad matrix block {line!r}: {exc}") from None
            if any(len(row) != cols for row in data):
                raise DataError(f"matrix block {line!r}: rows must have {cols} values")
            blocks[name] = np.array(data, dtype=np.float64).reshape(rows, cols)
            i += rows
            continue
        key, _, value = line.partition("=")
        keys[key.strip()] = value.strip()

    try:
        return _build(keys, blocks)
    except KeyError as exc:
        raise DataError(f"model file lacks {exc.args[0]!r}") from None


def _build(keys, blocks):
    kind = keys.get("kind")
    if kind == "dimred":
        notes = tuple(n for n in keys.get("notes", "").split("|") if n)
        return DimRedModel(keys["method"], blocks["x_mean"].ravel(), blocks["loadings"],
                           blocks["diagnostics"].ravel(), notes)
    if kind == "regression":
        params = None
        if "sigma2" in keys:
            params = KernelParams(float(keys["sigma2"]), float(keys["length_scale"]), float(keys["noise"]))
        flat = {n: blocks[n].ravel() for n in ("coef", "alpha") if n in blocks}
        return RegressionModel(
            keys["variant"],
            coef=flat.get("coef"),
            intercept=float(keys.get("intercept", 0.0)),
            Z_train=blocks.get("Z_train"),
            alpha=flat.get("alpha"),
            params=params,
            y_mean=float(keys.get("y_mean", 0.0)),
            chol=blocks.get("chol"),
        )
    raise DataError(f"unknown model kind {kind!r}")


def save_model(model, path) -> None:
    Path(path).write_text(dumps(model), encoding="utf-8")


def load_model(path):
    return loads(Path(path).read_text(encoding="utf-8"))

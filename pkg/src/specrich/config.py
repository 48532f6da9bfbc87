"""Flat ``key = value`` configuration files.

``#`` starts a comment, blank lines are ignored, keys are case-sensitive and
must be unique.  Values stay strings; callers convert them.
"""

from __future__ import annotations

import re
from pathlib import Path

from .errors import DataError


def parse_kv(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise DataError(f"{source}:{lineno}: empty key")
        if key in out:
            raise DataError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_kv(path) -> dict:
    return parse_kv(Path(path).read_text(encoding="utf-8"), str(path))


def format_kv(values: dict, header: str = "") -> str:
    lines = [f"# {h}" if h else "#" for h in header.splitlines()] if header else []
    lines += [f"{k} = {v}" for k, v in values.items()]
    return "\n".join(lines) + "\n"


def as_floats(value: str, key: str) -> list:
    try:
        return [float(tok) for tok in value.replace(",", " ").split()]
    except ValueError as exc:
        raise DataError(f"{key}: {exc}") from None


def as_ints(value: str, key: str) -> list:
    """Integers separated by commas or spaces; ``a-b`` expands to an inclusive range."""
    out = []
    for tok in value.replace(",", " ").split():
        m = re.fullmatch(r"(\d+)-(\d+)", tok)
        try:
            out.extend(range(int(m[1]), int(m[2]) + 1) if m else [int(tok)])
        except ValueError as exc:
            raise DataError(f"{key}: {exc}") from None
    return out


def as_bool(value: str, key: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise DataError(f"{key}: expected a boolean, got {value!r}")

"""Plain-text run reports.

A report is a versioned header line followed by ``key = value`` lines in a
fixed order. Floats use 17 significant digits, vectors are space separated,
and every wall-clock measurement lives in the single ``timings`` field so
two runs with the same seeds differ only on that line.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

REPORT_HEADER = "# smkl-report v1"
UNAVAILABLE = "unavailable"

# key -> kind; kinds: str, int, float, vector, bool, any
COMMON_KEYS = {
    "command": "str",
    "version": "str",
    "dataset": "str",
    "seed": "int",
    "n_train": "int",
    "n_test": "int",
    "q": "int",
    "kernels": "str",
    "C": "float",
    "lambda": "float",
    "k0": "int",
    "eps": "float",
    "patience": "int",
    "max_iter": "int",
    "init": "str",
    "beta": "vector",
    "support": "vector",
    "nnz_beta": "int",
    "accuracy": "float",
    "iterations": "int",
    "stop_reason": "str",
    "objective_first": "float",
    "objective_last": "float",
    "objective_best": "float",
    "objective_attained": "float",
    "timings": "str",
}
CERTIFY_KEYS = {
    "levels": "str",
    "lower_bound": "any",
    "gap_over_upper": "any",
    "gap_over_lower": "any",
    "certificate": "str",
}
CV_KEYS = {
    "grid_points": "int",
    "folds": "int",
    "cv_mean_accuracy": "float",
}
SCHEMA = {"train": COMMON_KEYS, "certify": {**COMMON_KEYS, **CERTIFY_KEYS}, "cv": {**COMMON_KEYS, **CV_KEYS}}


class ReportError(ValueError):
    pass


def fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    if isinstance(value, (list, tuple, np.ndarray)):
        return " ".join(fmt(v) for v in value)
    return str(value)


def render(fields: dict) -> str:
    lines = [REPORT_HEADER]
    for key, value in fields.items():
        text = fmt(value)
        if "\n" in text:
            raise ReportError(f"field {key!r} contains a newline")
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def write(fields: dict, path: str | Path | None) -> str:
    text = render(fields)
    validate(text)
    if path is not None:
        Path(path).write_text(text)
    return text


def parse(text: str) -> dict[str, str]:
    lines = text.splitlines()
    if not lines or lines[0] != REPORT_HEADER:
        raise ReportError(f"missing header {REPORT_HEADER!r}")
    out = {}
    for i, line in enumerate(lines[1:], start=2):
        key, sep, value = line.partition(" = ")
        if not sep:
            raise ReportError(f"line {i}: expected 'key = value'")
        if key in out:
            raise ReportError(f"line {i}: duplicate key {key!r}")
        out[key] = value
    return out


def _check(kind, value) -> bool:
    try:
        if kind == "int":
            int(value)
        elif kind == "float":
            v = float(value)
            return not math.isnan(v)
        elif kind == "vector":
            [float(v) for v in value.split()]
        elif kind == "bool":
            return value in ("true", "false")
        return True
    except ValueError:
        return False


def validate(text: str) -> dict[str, str]:
    """Check a report against the schema of its command; returns the parsed fields."""
    fields = parse(text)
    command = fields.get("command")
    if command not in SCHEMA:
        raise ReportError(f"unknown command {command!r}")
    for key, kind in SCHEMA[command].items():
        if key not in fields:
            raise ReportError(f"missing field {key!r}")
        if not _check(kind, fields[key]):
            raise ReportError(f"field {key!r} is not a valid {kind}: {fields[key]!r}")
    return fields

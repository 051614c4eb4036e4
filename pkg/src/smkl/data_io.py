"""CSV ingestion, binary labels, seeded train/test split and standardization.

A schema maps every column to ``numeric``, ``categorical``, ``label`` or
``ignore`` and names the label value that becomes the positive class (all
other values map to -1). Categorical columns are one-hot encoded without
their lexicographically first level, so ``k`` levels give ``k - 1`` columns.

Schema files are JSON::

    {"delimiter": ",", "label": "class", "positive": "0",
     "columns": {"sepal_length": "numeric", "color": "categorical"}}

Columns listed neither in ``columns`` nor as ``label`` are an error, so a
schema cannot silently drop data.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

STD_FLOOR = 1e-12
COLUMN_KINDS = ("numeric", "categorical", "ignore")
BUNDLED = ("iris", "wine")


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class Schema:
    label: str
    positive: str
    columns: dict[str, str]
    delimiter: str = ","

    def __post_init__(self):
        for name, kind in self.columns.items():
            if kind not in COLUMN_KINDS:
                raise DataError(f"column {name!r}: unknown kind {kind!r}")
        if self.label in self.columns:
            raise DataError(f"label column {self.label!r} also listed as a feature")

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        try:
            return cls(label=d["label"], positive=str(d["positive"]), columns=dict(d["columns"]),
                       delimiter=d.get("delimiter", ","))
        except KeyError as e:
            raise DataError(f"schema is missing {e.args[0]!r}") from None

    @classmethod
    def load(cls, path) -> "Schema":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except OSError as e:
            raise DataError(f"cannot read schema {path}: {e.strerror}") from None


@dataclass
class TrainingSet:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.size:
            raise DataError(f"X has shape {self.X.shape} but there are {self.y.size} labels")
        if not np.all((self.y == 1) | (self.y == -1)):
            raise DataError("labels must be +1 or -1")

    @property
    def n(self) -> int:
        return self.y.size

    def subset(self, idx) -> "TrainingSet":
        return TrainingSet(self.X[idx], self.y[idx])


@dataclass
class RawDataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: list[str]
    categories: dict[str, list[str]] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        if self.y.size < 2:
            raise DataError("a dataset needs at least 2 rows")

    @property
    def positive_fraction(self) -> float:
        return float(np.mean(self.y > 0))


@dataclass
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X) -> "Scaler":
        std = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(std > STD_FLOOR, std, 1.0))

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.std


@dataclass
class SplitDataset:
    train: TrainingSet
    test: TrainingSet
    scaler: Scaler
    seed: int
    train_index: np.ndarray
    test_index: np.ndarray


def _encode_row(row, schema, categories, lineno):
    out = []
    for name, kind in schema.columns.items():
        cell = row[name].strip()
        if kind == "numeric":
            try:
                out.append(float(cell))
            except ValueError:
                raise DataError(f"row {lineno}, column {name!r}: cannot parse {cell!r} as a number") from None
        elif kind == "categorical":
            levels = categories[name]
            if cell not in levels:
                raise DataError(f"row {lineno}, column {name!r}: unknown category {cell!r}")
            out.extend(1.0 if cell == lv else 0.0 for lv in levels[1:])
    return out


def load_csv(path, schema: Schema | dict | str | Path, categories: dict[str, list[str]] | None = None) -> RawDataset:
    """Read a CSV file with a header row into numeric features and +-1 labels.

    Rows with an empty cell in a used column are dropped with a warning.
    Pass ``categories`` (from a previous load) to encode a second file with
    the same one-hot layout; unseen levels then raise ``DataError``.
    """
    if not isinstance(schema, Schema):
        schema = Schema.from_dict(schema) if isinstance(schema, dict) else Schema.load(schema)
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f, delimiter=schema.delimiter)
            header = reader.fieldnames or []
            rows = [(i + 2, r) for i, r in enumerate(reader)]
    except OSError as e:
        raise DataError(f"cannot read data file {path}: {e.strerror}") from None
    known = set(schema.columns) | {schema.label}
    missing = [c for c in known if c not in header]
    if missing:
        raise DataError(f"{path}: columns {missing} are not in the header")
    extra = [c for c in header if c not in known]
    if extra:
        raise DataError(f"{path}: columns {extra} are not described by the schema")

    used = [c for c, k in schema.columns.items() if k != "ignore"] + [schema.label]
    kept = []
    for lineno, r in rows:
        if any(r[c] is None or r[c].strip() == "" for c in used):
            log.warning("%s: dropping row %d with a missing value", path, lineno)
            continue
        kept.append((lineno, r))

    if categories is None:
        categories = {c: sorted({r[c].strip() for _, r in kept})
                      for c, k in schema.columns.items() if k == "categorical"}
    X = np.array([_encode_row(r, schema, categories, ln) for ln, r in kept], dtype=float)
    y = np.array([1.0 if r[schema.label].strip() == schema.positive else -1.0 for _, r in kept])
    names = []
    for c, k in schema.columns.items():
        if k == "numeric":
            names.append(c)
        elif k == "categorical":
            names.extend(f"{c}={lv}" for lv in categories[c][1:])
    if not np.all(np.isfinite(X)):
        raise DataError(f"{path}: non-finite feature values")
    return RawDataset(X.reshape(len(kept), len(names)), y, names, categories, path.stem)


def bundled_path(name: str) -> tuple[Path, Path]:
    """Paths of a bundled dataset and its schema (``iris`` or ``wine``)."""
    if name not in BUNDLED:
        raise DataError(f"no bundled dataset {name!r}; available: {', '.join(BUNDLED)}")
    root = resources.files("smkl") / "data"
    return Path(str(root / f"{name}.csv")), Path(str(root / f"{name}.schema.json"))


def load_bundled(name: str) -> RawDataset:
    data, schema = bundled_path(name)
    return load_csv(data, schema)


def split_standardize(raw: RawDataset, seed: int, train_frac: float = 0.8) -> SplitDataset:
    """Shuffle with ``seed``, split, and standardize with training statistics only."""
    if not 0 < train_frac < 1:
        raise DataError("train_frac must lie in (0, 1)")
    if np.unique(raw.y).size < 2:
        raise DataError("both classes are required")
    n = raw.y.size
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(train_frac * n))
    tr, te = perm[:n_train], perm[n_train:]
    if np.unique(raw.y[tr]).size < 2:
        raise DataError(f"seed {seed} puts a single class in the training split; choose another seed")
    scaler = Scaler.fit(raw.X[tr])
    return SplitDataset(
        train=TrainingSet(scaler.transform(raw.X[tr]), raw.y[tr]),
        test=TrainingSet(scaler.transform(raw.X[te]), raw.y[te]),
        scaler=scaler,
        seed=seed,
        train_index=tr,
        test_index=te,
    )

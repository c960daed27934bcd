"""Tabular data loading: feature schema, one-hot expansion, target scaling, folds."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from sklearn.model_selection import KFold

from .exceptions import ConfigurationError, InputError, ParseError, SchemaError

BINARY = "binary"
CONTINUOUS = "continuous"
CATEGORICAL = "categorical"
KINDS = (BINARY, CONTINUOUS, CATEGORICAL)

MAX_CATEGORIES = 32
N_FOLDS = 5


@dataclass(frozen=True)
class Column:
    name: str
    kind: str
    group_id: int | None = None
    category_label: str | None = None
    source: str | None = None

    def to_dict(self):
        return {
            "name": self.name,
            "kind": self.kind,
            "group_id": self.group_id,
            "category_label": self.category_label,
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], d["kind"], d.get("group_id"), d.get("category_label"), d.get("source"))


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered description of the model's input columns.

    Categorical source features are expanded into ``categorical`` columns
    sharing a ``group_id``; at most one column of a group is hot per row.
    """

    columns: tuple[Column, ...]

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise ConfigurationError(f"duplicate column names: {dup}")
        sources = {}
        for c in self.columns:
            if c.kind not in KINDS:
                raise ConfigurationError(f"unknown kind {c.kind!r} for column {c.name!r}")
            if (c.kind == CATEGORICAL) != (c.group_id is not None):
                raise ConfigurationError(f"column {c.name!r}: only categorical columns carry a group_id")
            if c.group_id is not None:
                if sources.setdefault(c.group_id, c.source) != c.source:
                    raise ConfigurationError(f"group {c.group_id} mixes source features")

    @classmethod
    def plain(cls, n_features: int, names: Sequence[str] | None = None, binary: Sequence[bool] | None = None):
        """Schema without one-hot groups, as used for bare numpy input."""
        names = list(names) if names is not None else [f"x{i}" for i in range(n_features)]
        binary = list(binary) if binary is not None else [False] * n_features
        return cls(tuple(Column(n, BINARY if b else CONTINUOUS) for n, b in zip(names, binary)))

    def __len__(self):
        return len(self.columns)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(name) from None

    def groups(self) -> dict[int, list[int]]:
        """Map group_id -> column indices, in column order."""
        out: dict[int, list[int]] = {}
        for i, c in enumerate(self.columns):
            if c.group_id is not None:
                out.setdefault(c.group_id, []).append(i)
        return out

    def to_dict(self):
        return {"columns": [c.to_dict() for c in self.columns]}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(Column.from_dict(c) for c in d["columns"]))


@dataclass(frozen=True)
class TargetScaler:
    mean: float = 0.0
    std: float = 1.0

    @classmethod
    def fit(cls, y):
        y = np.asarray(y, dtype=float)
        std = float(y.std())
        return cls(float(y.mean()), std if std > 0 else 1.0)

    def transform(self, y):
        return (np.asarray(y, dtype=float) - self.mean) / self.std

    def inverse(self, z):
        return np.asarray(z, dtype=float) * self.std + self.mean

    def compose(self, inner: "TargetScaler") -> "TargetScaler":
        """Scaler equivalent to applying ``inner`` after ``self`` was undone."""
        return TargetScaler(self.mean + self.std * inner.mean, self.std * inner.std)


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    schema: FeatureSchema
    task: str
    class_labels: tuple = ()
    target_scaler: TargetScaler = field(default_factory=TargetScaler)

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[1] != len(self.schema):
            raise InputError(f"X has shape {self.X.shape}, schema has {len(self.schema)} columns")
        if len(self.y) != len(self.X):
            raise InputError("X and y lengths differ")
        self.X.setflags(write=False)
        self.y.setflags(write=False)

    @property
    def L(self) -> int:
        return self.X.shape[1]

    @property
    def C(self) -> int | None:
        return None if self.task == "regression" else len(self.class_labels)

    def __len__(self):
        return len(self.X)

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.X[rows].copy(), self.y[rows].copy(), self.schema, self.task,
                       self.class_labels, self.target_scaler)

    def restandardized(self, train_rows) -> "Dataset":
        """Re-scale a regression target so the given rows have mean 0, variance 1."""
        if self.task != "regression":
            return self
        inner = TargetScaler.fit(self.y[np.asarray(train_rows)])
        return Dataset(self.X, inner.transform(self.y), self.schema, self.task,
                       self.class_labels, self.target_scaler.compose(inner))


@dataclass(frozen=True)
class SplitPlan:
    folds: tuple[tuple[np.ndarray, np.ndarray], ...]
    seed: int

    def __eq__(self, other):
        if not isinstance(other, SplitPlan) or self.seed != other.seed or len(self.folds) != len(other.folds):
            return False
        return all(np.array_equal(a, c) and np.array_equal(b, d)
                   for (a, b), (c, d) in zip(self.folds, other.folds))

    def to_dict(self):
        return {"seed": self.seed, "folds": [{"train": tr.tolist(), "test": te.tolist()} for tr, te in self.folds]}


def _as_number(text: str):
    try:
        v = float(text)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def _infer_kind(values: list[str]) -> str:
    present = [v for v in values if v != ""]
    numbers = [_as_number(v) for v in present]
    if present and all(n is not None for n in numbers):
        return BINARY if set(numbers) <= {0.0, 1.0} else CONTINUOUS
    if len(set(present)) <= MAX_CATEGORIES:
        return CATEGORICAL
    return CONTINUOUS


def _sort_key(label: str):
    n = _as_number(label)
    return (0, n, label) if n is not None else (1, 0.0, label)


def load_csv(path, target_column: str, declared_kinds: Mapping[str, str] | None = None,
             task: str | None = None) -> Dataset:
    """Read a headed UTF-8 CSV into a :class:`Dataset`.

    Columns whose kind is not declared are inferred: all-{0,1} numeric columns
    are binary, other numeric columns continuous, and non-numeric columns with
    at most 32 distinct values categorical. Empty cells are missing values;
    they are allowed only in categorical columns (encoded as an all-zero group).
    """
    declared_kinds = dict(declared_kinds or {})
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0]:
        raise InputError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r]
    if not body:
        raise InputError(f"{path} has a header but no data rows")
    if target_column not in header:
        raise ConfigurationError(f"target column {target_column!r} not in {path.name}")
    for name, kind in declared_kinds.items():
        if name not in header:
            raise ConfigurationError(f"declared kind for unknown column {name!r}")
        if kind not in KINDS:
            raise ConfigurationError(f"unknown kind {kind!r} for column {name!r}")
    for lineno, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(r)}", line=lineno)

    columns_out: list[Column] = []
    blocks: list[np.ndarray] = []
    next_group = 0
    for j, name in enumerate(header):
        if name == target_column:
            continue
        values = [r[j].strip() for r in body]
        kind = declared_kinds.get(name) or _infer_kind(values)
        if kind == CATEGORICAL:
            labels = sorted({v for v in values if v != ""}, key=_sort_key)
            pos = {lab: k for k, lab in enumerate(labels)}
            block = np.zeros((len(values), len(labels)))
            for i, v in enumerate(values):
                if v != "":
                    block[i, pos[v]] = 1.0
            for lab in labels:
                columns_out.append(Column(f"{name}={lab}", CATEGORICAL, next_group, lab, name))
            next_group += 1
            blocks.append(block)
            continue
        col = np.empty(len(values))
        for i, v in enumerate(values):
            num = _as_number(v)
            if num is None:
                what = "missing" if v == "" else f"non-numeric value {v!r}"
                raise ParseError(f"{what} in {kind} column {name!r}", line=i + 2, column=j + 1)
            if kind == BINARY and num not in (0.0, 1.0):
                raise ParseError(f"value {v!r} in binary column {name!r}", line=i + 2, column=j + 1)
            col[i] = num
        columns_out.append(Column(name, kind, source=name))
        blocks.append(col[:, None])

    schema = FeatureSchema(tuple(columns_out))
    X = np.hstack(blocks) if blocks else np.zeros((len(body), 0))
    t = header.index(target_column)
    raw_y = [r[t].strip() for r in body]
    return _build_dataset(X, raw_y, schema, task)


def _build_dataset(X, raw_y, schema, task):
    numeric = [_as_number(v) for v in raw_y]
    all_numeric = all(v is not None for v in numeric)
    if task is None:
        distinct = set(raw_y)
        is_int = all_numeric and all(float(v).is_integer() for v in numeric)
        if all_numeric and not (is_int and len(distinct) <= MAX_CATEGORIES):
            task = "regression"
        else:
            task = "binary" if len(distinct) == 2 else "multiclass"
    if task == "regression":
        if not all_numeric:
            bad = next(i for i, v in enumerate(numeric) if v is None)
            raise ParseError(f"non-numeric regression target {raw_y[bad]!r}", line=bad + 2)
        y = np.asarray(numeric, dtype=float)
        scaler = TargetScaler.fit(y)
        return Dataset(X, scaler.transform(y), schema, task, (), scaler)
    if task not in ("binary", "multiclass"):
        raise ConfigurationError(f"unknown task {task!r}")
    labels = sorted(set(raw_y), key=_sort_key)
    if len(labels) < 2:
        raise InputError("classification target has a single class")
    pos = {lab: k for k, lab in enumerate(labels)}
    y = np.array([pos[v] for v in raw_y], dtype=np.int64)
    return Dataset(X, y, schema, task, tuple(labels))


def kfold_split(dataset, seed: int) -> SplitPlan:
    """Five shuffled 80/20 folds; the test parts partition the rows."""
    n = len(dataset)
    if n < 2 * N_FOLDS:
        raise InputError(f"need at least {2 * N_FOLDS} rows for {N_FOLDS}-fold splitting, got {n}")
    kf = KFold(n_splits=N_FOLDS, shuffle=True, random_state=seed)
    folds = tuple((np.sort(tr), np.sort(te)) for tr, te in kf.split(np.zeros((n, 1))))
    return SplitPlan(folds, seed)


def validate_onehot(dataset) -> list[tuple[int, int]]:
    """Return every (row, group_id) where two or more group columns are hot."""
    violations = []
    for gid, cols in dataset.schema.groups().items():
        counts = (dataset.X[:, cols] == 1).sum(axis=1)
        violations.extend((int(r), gid) for r in np.flatnonzero(counts >= 2))
    return sorted(violations)


def onehot_valid_rows(X, schema) -> np.ndarray:
    """Boolean mask of rows satisfying every one-hot constraint."""
    ok = np.ones(len(X), dtype=bool)
    for cols in schema.groups().values():
        ok &= (X[:, cols] == 1).sum(axis=1) <= 1
    return ok


def encode_csv(path, schema: FeatureSchema) -> np.ndarray:
    """Encode a headed CSV of raw source features with an existing schema.

    Extra columns (such as the target) are ignored. A categorical value never
    seen at training time leaves its whole group at zero.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise InputError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    pos = {h: j for j, h in enumerate(header)}
    X = np.zeros((len(body), len(schema)))
    for lineno, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(r)}", line=lineno)
    for k, col in enumerate(schema.columns):
        src = col.source if col.source is not None else col.name
        if src not in pos:
            raise SchemaError(f"input has no column {src!r}")
        j = pos[src]
        for i, r in enumerate(body):
            v = r[j].strip()
            if col.kind == CATEGORICAL:
                X[i, k] = 1.0 if v == col.category_label else 0.0
                continue
            num = _as_number(v)
            if num is None:
                raise ParseError(f"bad value {v!r} in column {src!r}", line=i + 2, column=j + 1)
            X[i, k] = num
    return X

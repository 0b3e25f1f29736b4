"""Dataset ingestion, preprocessing, vertical splitting and synthetic data."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, IngestionError
from .numeric import RngStream

MISSING_TOKENS = frozenset({"", "?", "na", "nan", "null"})
# label tokens read as the positive class when labels are not already 0/1
POSITIVE_TOKENS = frozenset({"1", ">50k", ">50k.", "yes", "true", "positive", "pos"})

DEFAULT_TEST_FRACTION = 0.2


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: list[str]
    dropped_rows: int = 0
    constant_columns: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise IngestionError(f"X shape {self.X.shape} does not match {self.y.shape[0]} labels")
        if not np.all((self.y == 0) | (self.y == 1)):
            raise IngestionError("labels must be 0/1")
        if not np.all(np.isfinite(self.X)):
            raise IngestionError("features contain NaN or Inf")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        return replace(self, X=self.X[idx], y=self.y[idx])


@dataclass(frozen=True)
class VerticalSplit:
    """Aligned feature blocks: Alice holds features only, Bob features plus labels."""

    alice_X: np.ndarray
    bob_X: np.ndarray
    y: np.ndarray

    @property
    def d_alice(self) -> int:
        return self.alice_X.shape[1]

    @property
    def d_bob(self) -> int:
        return self.bob_X.shape[1]

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def joined(self) -> np.ndarray:
        return np.hstack([self.alice_X, self.bob_X])


def _map_labels(raw: list[str], rows: list[int]) -> np.ndarray:
    values = sorted(set(raw))
    if len(values) > 2:
        raise IngestionError(f"label column has {len(values)} distinct values {values[:5]}; expected 2")
    try:
        nums = [float(v) for v in raw]
    except ValueError:
        nums = None
    if nums is not None and set(nums) <= {0.0, 1.0}:
        return np.array(nums)
    positives = [v for v in values if v.lower() in POSITIVE_TOKENS]
    if len(positives) == 1:
        pos = positives[0]
    elif len(values) == 2:
        pos = values[1]
    else:
        raise IngestionError(f"cannot map single label value {values} (first data row {rows[0]})")
    return np.array([1.0 if v == pos else 0.0 for v in raw])


def parse_csv(text: str, label_column: str | int = -1, has_header: bool = True) -> Dataset:
    """Parse CSV text into a :class:`Dataset`.

    Numeric columns are kept as-is; any column with a non-numeric value is
    one-hot encoded (categories in sorted order). Rows with a missing value in
    any column are dropped and counted.
    """
    reader = csv.reader(io.StringIO(text))
    rows = [r for r in reader if r and any(c.strip() for c in r)]
    if not rows:
        raise IngestionError("empty CSV")
    if has_header:
        header = [h.strip() for h in rows[0]]
        body = rows[1:]
        first_line = 2
    else:
        header = [f"x{i}" for i in range(len(rows[0]))]
        body = rows
        first_line = 1
    width = len(header)
    if isinstance(label_column, str):
        if label_column not in header:
            raise IngestionError(f"label column {label_column!r} not in header {header}")
        label_idx = header.index(label_column)
    else:
        label_idx = label_column % width

    kept, line_nos, dropped = [], [], 0
    for offset, row in enumerate(body):
        line = first_line + offset
        if len(row) != width:
            raise IngestionError(f"line {line}: expected {width} fields, got {len(row)}")
        cells = [c.strip() for c in row]
        if any(c.lower() in MISSING_TOKENS for c in cells):
            dropped += 1
            continue
        kept.append(cells)
        line_nos.append(line)
    if not kept:
        raise IngestionError("no complete rows left after dropping missing values")

    y = _map_labels([r[label_idx] for r in kept], line_nos)
    columns, names = [], []
    for j, name in enumerate(header):
        if j == label_idx:
            continue
        raw = [r[j] for r in kept]
        try:
            columns.append(np.array([float(v) for v in raw]))
            names.append(name)
        except ValueError:
            for cat in sorted(set(raw)):
                columns.append(np.array([1.0 if v == cat else 0.0 for v in raw]))
                names.append(f"{name}={cat}")
    X = np.column_stack(columns) if columns else np.zeros((len(kept), 0))
    if not np.all(np.isfinite(X)):
        bad = np.argwhere(~np.isfinite(X))[0]
        raise IngestionError(f"line {line_nos[bad[0]]}, column {names[bad[1]]!r}: non-finite value")
    constant = [names[j] for j in range(X.shape[1]) if np.all(X[:, j] == X[0, j])]
    return Dataset(X, y, names, dropped, constant)


def load_csv(path, label_column: str | int = -1, has_header: bool = True) -> Dataset:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    return parse_csv(text, label_column, has_header)


def load_builtin(name: str) -> Dataset:
    """Small datasets bundled with scikit-learn (no download).

    ``breast-cancer`` keeps sklearn's labels; ``digits`` is made binary as
    odd digit vs even digit.
    """
    from sklearn import datasets

    if name == "breast-cancer":
        raw = datasets.load_breast_cancer()
        return Dataset(raw.data.astype(np.float64), raw.target.astype(np.float64),
                       list(raw.feature_names))
    if name == "digits":
        raw = datasets.load_digits()
        X = raw.data.astype(np.float64)
        names = [f"pixel_{i}" for i in range(X.shape[1])]
        const = [names[j] for j in range(X.shape[1]) if np.all(X[:, j] == X[0, j])]
        return Dataset(X, (raw.target % 2).astype(np.float64), names, 0, const)
    raise IngestionError(f"unknown builtin dataset {name!r}")


def standardize(ds: Dataset) -> tuple[Dataset, np.ndarray, np.ndarray]:
    """Zero-mean, unit-variance columns; zero stds are recorded as 1."""
    means = ds.X.mean(axis=0)
    stds = ds.X.std(axis=0)
    stds = np.where(stds == 0, 1.0, stds)
    return replace(ds, X=(ds.X - means) / stds), means, stds


def apply_standardization(ds: Dataset, means, stds) -> Dataset:
    return replace(ds, X=(ds.X - means) / stds)


def destandardize(ds: Dataset, means, stds) -> Dataset:
    return replace(ds, X=ds.X * stds + means)


def vertical_split(ds: Dataset, d_alice: int) -> VerticalSplit:
    """First ``d_alice`` columns go to Alice, the rest and the labels to Bob."""
    if not 0 <= d_alice <= ds.d:
        raise ConfigError(f"d_alice={d_alice} outside [0, {ds.d}]")
    return VerticalSplit(ds.X[:, :d_alice].copy(), ds.X[:, d_alice:].copy(), ds.y.copy())


def synth(n: int, d: int, separation: float, seed: int) -> Dataset:
    """Two unit-variance Gaussian clusters centred at ``+-separation/2`` along a random direction."""
    if n < 1 or d < 1:
        raise ConfigError("synth needs n >= 1 and d >= 1")
    rng = RngStream(seed)
    direction = rng.normal(d)
    direction /= np.linalg.norm(direction)
    y = (rng.uniform(n) < 0.5).astype(np.float64)
    signs = 2.0 * y - 1.0
    X = rng.normal((n, d)) + np.outer(signs * separation / 2.0, direction)
    return Dataset(X, y, [f"f{i}" for i in range(d)])


def train_test_split(ds: Dataset, test_fraction: float = DEFAULT_TEST_FRACTION,
                     seed: int = 0) -> tuple[Dataset, Dataset]:
    if not 0 < test_fraction < 1:
        raise ConfigError("test_fraction must lie in (0, 1)")
    perm = RngStream(seed).permutation(ds.n)
    n_test = int(round(ds.n * test_fraction))
    return ds.subset(np.sort(perm[n_test:])), ds.subset(np.sort(perm[:n_test]))

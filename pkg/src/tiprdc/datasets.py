"""Synthetic attribute datasets, CSV ingestion, and mini-batching.

The synthetic generator produces raw rows ``x = [s_u, s_y, noise]``. Each
signal block encodes a label after it has passed through a binary symmetric
channel, plus bounded jitter small enough that the channel output is exactly
recoverable from ``x``. The Bayes accuracy of predicting ``u`` (resp. ``y``)
from ``x`` is therefore ``1 - p_u`` (resp. ``1 - p_y``).
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterator, Optional, Sequence, Union

import numpy as np

from .rng import stream

JITTER = 0.5


class DatasetError(ValueError):
    """Malformed input data or dataset configuration."""


@dataclass(frozen=True)
class Split:
    X: np.ndarray
    u: np.ndarray
    y: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.X.shape[0]


@dataclass(frozen=True)
class Standardizer:
    """Per-column affine map ``(x - mean) / scale`` fitted on a train split."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        return cls(mean, scale)

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.scale


@dataclass(frozen=True)
class LabeledDataset:
    train: Split
    test: Split
    k_u: int
    k_y: Optional[int]
    provenance: dict = field(default_factory=dict)
    standardizer: Optional[Standardizer] = None

    def __post_init__(self):
        for name, split in (("train", self.train), ("test", self.test)):
            n = split.X.shape[0]
            if split.u.shape != (n,) or (split.y is not None and split.y.shape != (n,)):
                raise DatasetError(f"{name} split: row counts of X, u, y disagree")
            if n and (split.u.min() < 0 or split.u.max() >= self.k_u):
                raise DatasetError(f"{name} split: u labels outside [0, {self.k_u})")
            if split.y is not None and n and (split.y.min() < 0 or split.y.max() >= (self.k_y or 0)):
                raise DatasetError(f"{name} split: y labels outside [0, {self.k_y})")

    @property
    def d_x(self) -> int:
        return self.train.X.shape[1]

    @property
    def n(self) -> int:
        return len(self.train) + len(self.test)

    @property
    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for split in (self.train, self.test):
            h.update(np.ascontiguousarray(split.X, dtype=np.float64).tobytes())
            h.update(np.ascontiguousarray(split.u, dtype=np.int64).tobytes())
            if split.y is not None:
                h.update(np.ascontiguousarray(split.y, dtype=np.int64).tobytes())
        return h.hexdigest()[:16]


# synthetic ----------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    """Generator settings. ``rotate`` mixes all columns by a fixed random
    orthogonal matrix, which spreads each signal over every coordinate while
    leaving Bayes accuracies unchanged."""

    n: int = 5000
    d_u: int = 4
    d_y: int = 4
    d_noise: int = 8
    p_u: float = 0.1
    p_y: float = 0.1
    rho: float = 0.0
    seed: int = 0
    test_fraction: float = 0.2
    rotate: bool = False

    def __post_init__(self):
        if min(self.d_u, self.d_y, self.d_noise) < 1:
            raise DatasetError("SyntheticSpec: block widths must be >= 1")
        if not (0 <= self.p_u <= 0.5 and 0 <= self.p_y <= 0.5):
            raise DatasetError("SyntheticSpec: flip probabilities must lie in [0, 0.5]")
        if not 0 <= self.rho < 1:
            raise DatasetError("SyntheticSpec.rho must lie in [0, 1)")
        if not 0 < self.test_fraction < 1:
            raise DatasetError("SyntheticSpec.test_fraction must lie in (0, 1)")
        if self.n < 4:
            raise DatasetError("SyntheticSpec.n must be at least 4")

    @property
    def d_x(self) -> int:
        return self.d_u + self.d_y + self.d_noise

    def to_dict(self) -> dict:
        return asdict(self)


PRESETS = {
    "family-A": SyntheticSpec(),
    "family-B": SyntheticSpec(d_u=2, d_y=6, d_noise=16, p_u=0.15, p_y=0.05, rho=0.3, rotate=True),
}


def preset(name: str, **overrides) -> SyntheticSpec:
    if name not in PRESETS:
        raise DatasetError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return replace(PRESETS[name], **overrides)


def bayes_accuracy(spec: SyntheticSpec, target: str = "u") -> float:
    """Best achievable accuracy for predicting ``target`` from raw rows."""
    p = {"u": spec.p_u, "y": spec.p_y}[target]
    return 1.0 - p


def _signs(bits: np.ndarray) -> np.ndarray:
    return 2.0 * bits - 1.0


def generate_rows(spec: SyntheticSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw ``(X, u, y)`` for all ``spec.n`` rows, before any split."""
    rng = stream(spec.seed, "synthetic")
    n = spec.n
    u = rng.integers(0, 2, size=n)
    y = rng.integers(0, 2, size=n)
    u_ch = u ^ (rng.random(n) < spec.p_u)
    y_ch = y ^ (rng.random(n) < spec.p_y)
    s_u = _signs(u_ch)[:, None] + rng.uniform(-JITTER, JITTER, size=(n, spec.d_u))
    s_y = (
        _signs(y_ch)[:, None]
        + spec.rho * _signs(u_ch)[:, None]
        + rng.uniform(-JITTER, JITTER, size=(n, spec.d_y))
    )
    noise = rng.standard_normal((n, spec.d_noise))
    X = np.hstack([s_u, s_y, noise])
    if spec.rotate:
        q, r = np.linalg.qr(stream(spec.seed, "rotation").standard_normal((spec.d_x, spec.d_x)))
        X = X @ (q * np.sign(np.diag(r)))
    return X, u.astype(np.int64), y.astype(np.int64)


def _split_indices(n: int, test_fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n_test = int(round(n * test_fraction))
    perm = rng.permutation(n)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def generate_synthetic(spec: SyntheticSpec) -> LabeledDataset:
    X, u, y = generate_rows(spec)
    tr, te = _split_indices(spec.n, spec.test_fraction, stream(spec.seed, "split"))
    return LabeledDataset(
        train=Split(X[tr], u[tr], y[tr]),
        test=Split(X[te], u[te], y[te]),
        k_u=2,
        k_y=2,
        provenance={"generator": spec.to_dict()},
    )


def gaussian_pairs(n: int, d: int, dependent: bool, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Standard-normal ``x`` with ``z = x`` (dependent) or an independent draw."""
    x = rng.standard_normal((n, d))
    z = x.copy() if dependent else rng.standard_normal((n, d))
    return x, z


# CSV ----------------------------------------------------------------------

@dataclass(frozen=True)
class CsvSchema:
    features: Sequence[str]
    u: str
    y: Optional[str] = None
    u_classes: Optional[int] = None
    y_classes: Optional[int] = None
    test_fraction: float = 0.2
    seed: int = 0


def _parse_label(text: str, line: int, column: str, k: Optional[int]) -> int:
    try:
        value = float(text)
    except ValueError:
        raise DatasetError(f"line {line}, column {column!r}: label {text!r} is not numeric") from None
    if value != int(value) or value < 0 or (k is not None and value >= k):
        bound = f"[0, {k})" if k is not None else "non-negative integers"
        raise DatasetError(f"line {line}, column {column!r}: label {text!r} outside declared classes {bound}")
    return int(value)


def load_csv(path: Union[str, Path], schema: CsvSchema) -> LabeledDataset:
    """Read a headed CSV, split it, and standardize with train-split statistics.

    Line numbers in error messages count the header as line 1.
    """
    path = Path(path)
    raw = path.read_bytes()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DatasetError(f"{path}: empty file")
        header = [h.strip() for h in header]
        needed = list(schema.features) + [schema.u] + ([schema.y] if schema.y else [])
        for col in needed:
            if col not in header:
                raise DatasetError(f"{path}: missing column {col!r}")
        cols = {name: header.index(name) for name in needed}
        X_rows, u_rows, y_rows = [], [], []
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DatasetError(f"{path}: line {line} has {len(row)} cells, expected {len(header)}")
            feats = []
            for name in schema.features:
                cell = row[cols[name]].strip()
                try:
                    feats.append(float(cell))
                except ValueError:
                    raise DatasetError(f"{path}: line {line}, column {name!r}: {cell!r} is not numeric") from None
            X_rows.append(feats)
            u_rows.append(_parse_label(row[cols[schema.u]].strip(), line, schema.u, schema.u_classes))
            if schema.y:
                y_rows.append(_parse_label(row[cols[schema.y]].strip(), line, schema.y, schema.y_classes))
    if not X_rows:
        raise DatasetError(f"{path}: no data rows")
    X = np.array(X_rows, dtype=np.float64)
    u = np.array(u_rows, dtype=np.int64)
    y = np.array(y_rows, dtype=np.int64) if schema.y else None
    k_u = schema.u_classes or max(2, int(u.max()) + 1)
    k_y = (schema.y_classes or max(2, int(y.max()) + 1)) if y is not None else None
    tr, te = _split_indices(len(X), schema.test_fraction, stream(schema.seed, "split"))
    std = Standardizer.fit(X[tr])
    sel = (lambda a, idx: None if a is None else a[idx])
    return LabeledDataset(
        train=Split(std.apply(X[tr]), u[tr], sel(y, tr)),
        test=Split(std.apply(X[te]), u[te], sel(y, te)),
        k_u=k_u,
        k_y=k_y,
        provenance={"csv": str(path), "sha256": hashlib.sha256(raw).hexdigest()},
        standardizer=std,
    )


# batching -----------------------------------------------------------------

@dataclass(frozen=True)
class Batch:
    x: np.ndarray
    u: np.ndarray
    y: Optional[np.ndarray]
    index: np.ndarray


def n_batches(n_rows: int, batch_size: int, drop_last: bool = True) -> int:
    return n_rows // batch_size if drop_last else -(-n_rows // batch_size)


def batches(split: Split, batch_size: int, rng: np.random.Generator, drop_last: bool = True) -> Iterator[Batch]:
    """One epoch of shuffled mini-batches drawn with ``rng``."""
    if batch_size < 2:
        raise DatasetError("batch size must be at least 2")
    order = rng.permutation(len(split))
    stop = n_batches(len(split), batch_size, drop_last) * batch_size if drop_last else len(split)
    for start in range(0, stop, batch_size):
        idx = order[start : start + batch_size]
        yield Batch(split.X[idx], split.u[idx], None if split.y is None else split.y[idx], idx)

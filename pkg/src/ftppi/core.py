"""Shared domain types: datasets, predictors, seeds, and basic statistics.

Everything downstream (scaling-law fitting, allocation, rectified
estimation, simulation) works in terms of the containers defined here.
Datasets are immutable after construction and carry value semantics;
predictors are deterministic maps from feature vectors to predicted
outcomes, with per-dataset caching of their evaluations.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence
from weakref import WeakKeyDictionary

import numpy as np

#: Default master seed used by the CLI and by convenience entry points.
DEFAULT_SEED = 1729


class FtppiError(Exception):
    """Base class for every error this package raises on purpose."""


class DomainError(FtppiError):
    """An argument is outside the mathematical domain of the operation."""


class ParameterError(FtppiError):
    """A configuration parameter is malformed (bad delta, bad sizes, ...)."""


class InvalidSplitError(FtppiError):
    """A requested labeled-data split is impossible."""


class InsufficientDataError(FtppiError):
    """Not enough observations to carry out the computation."""


class UnderdeterminedFitError(FtppiError):
    """Too few distinct observations to identify the scaling-law parameters."""


class ConvergenceError(FtppiError):
    """An iterative solver ran out of iterations.

    Carries the last iterate and the final score norm so callers can
    inspect how close the solve got.
    """

    def __init__(self, message: str, last_iterate=None, score_norm: float | None = None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.score_norm = score_norm


class SingularHessianError(FtppiError):
    """The estimated Hessian is numerically singular."""

    def __init__(self, message: str, condition: float | None = None):
        super().__init__(message)
        self.condition = condition


class UnsupportedSizeError(FtppiError):
    """A trainer was asked for a fine-tuning size outside its support."""


class PlanError(FtppiError):
    """A ramp-up plan violates its structural constraints."""


class NumericalError(FtppiError):
    """A numeric result left its valid range beyond tolerance."""


class CsvFormatError(FtppiError):
    """A CSV input is malformed; the message is row/column addressed."""


@dataclass(frozen=True)
class RngSeed:
    """Master seed for reproducible randomness.

    Child seeds are derived, never reused: every replicate of an
    experiment derives its own seed from the master seed and the
    replicate index, so replicate k is reproducible in isolation.
    """

    seed: int

    def __post_init__(self) -> None:
        if not isinstance(self.seed, (int, np.integer)) or isinstance(self.seed, bool):
            raise ParameterError(f"seed must be an integer, got {self.seed!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ParameterError(f"seed must fit in uint64, got {self.seed}")

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed)))

    def child(self, *tags: int) -> "RngSeed":
        """Derive an independent seed from this one plus integer tags."""
        entropy = (int(self.seed),) + tuple(int(t) for t in tags)
        state = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)
        return RngSeed(int(state[0]))


def as_seed(seed: "RngSeed | int") -> RngSeed:
    """Coerce an int or RngSeed into an RngSeed."""
    if isinstance(seed, RngSeed):
        return seed
    return RngSeed(seed)


@dataclass(frozen=True, eq=False)
class LabeledSample:
    """One observation: feature vector x plus scalar outcome y."""

    x: np.ndarray
    y: float


def _as_feature_matrix(xs, what: str) -> np.ndarray:
    try:
        arr = np.asarray(xs, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise DomainError(f"{what}: features are not numeric ({exc})") from exc
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DomainError(f"{what}: expected a 2-d feature array, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise InsufficientDataError(f"{what}: dataset is empty")
    if arr.shape[1] == 0:
        raise DomainError(f"{what}: feature dimension must be at least 1")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{what}: features contain non-finite values")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


class LabeledDataset:
    """Immutable container of (x, y) pairs with a common feature dimension.

    Duplicate rows are allowed and treated as distinguishable by index.
    """

    def __init__(self, xs, ys):
        self._xs = _as_feature_matrix(xs, "LabeledDataset")
        try:
            y_arr = np.asarray(ys, dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise DomainError(f"LabeledDataset: outcomes are not numeric ({exc})") from exc
        if y_arr.ndim != 1 or y_arr.shape[0] != self._xs.shape[0]:
            raise DomainError(
                f"LabeledDataset: need one outcome per row, got {y_arr.shape} "
                f"for {self._xs.shape[0]} rows"
            )
        if not np.all(np.isfinite(y_arr)):
            raise DomainError("LabeledDataset: outcomes contain non-finite values")
        y_arr = y_arr.copy()
        y_arr.setflags(write=False)
        self._ys = y_arr

    @classmethod
    def from_samples(cls, samples: Sequence[LabeledSample]) -> "LabeledDataset":
        if len(samples) == 0:
            raise InsufficientDataError("from_samples: no samples given")
        dims = {np.asarray(s.x).reshape(-1).shape[0] for s in samples}
        if len(dims) != 1:
            raise DomainError(f"from_samples: inconsistent feature dimensions {sorted(dims)}")
        xs = np.vstack([np.asarray(s.x, dtype=np.float64).reshape(1, -1) for s in samples])
        ys = np.array([s.y for s in samples], dtype=np.float64)
        return cls(xs, ys)

    @property
    def xs(self) -> np.ndarray:
        return self._xs

    @property
    def ys(self) -> np.ndarray:
        return self._ys

    @property
    def n(self) -> int:
        return self._xs.shape[0]

    @property
    def dim(self) -> int:
        return self._xs.shape[1]

    def samples(self) -> Iterator[LabeledSample]:
        for i in range(self.n):
            yield LabeledSample(self._xs[i], float(self._ys[i]))

    def subset(self, indices) -> "LabeledDataset":
        idx = _check_indices(indices, self.n)
        return LabeledDataset(self._xs[idx], self._ys[idx])

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"LabeledDataset(n={self.n}, dim={self.dim})"


class UnlabeledDataset:
    """Immutable container of feature vectors without outcomes."""

    def __init__(self, xs):
        self._xs = _as_feature_matrix(xs, "UnlabeledDataset")

    @property
    def xs(self) -> np.ndarray:
        return self._xs

    @property
    def m(self) -> int:
        return self._xs.shape[0]

    @property
    def dim(self) -> int:
        return self._xs.shape[1]

    def subset(self, indices) -> "UnlabeledDataset":
        idx = _check_indices(indices, self.m)
        return UnlabeledDataset(self._xs[idx])

    def __len__(self) -> int:
        return self.m

    def __repr__(self) -> str:
        return f"UnlabeledDataset(m={self.m}, dim={self.dim})"


def _check_indices(indices, size: int) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    if idx.size == 0:
        raise InsufficientDataError("subset: empty index list")
    if idx.min() < 0 or idx.max() >= size:
        raise DomainError(f"subset: index out of range for size {size}")
    return idx


class Predictor:
    """Deterministic map from feature vectors to predicted outcomes.

    ``s`` is a provenance tag recording how many labeled samples the
    producing trainer consumed (0 for a predictor that never saw task
    labels).  Evaluations are cached per dataset object, so repeated
    estimate/CI calls on the same data pay for prediction once.
    """

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray] | None, s: int, label: str = ""):
        if s < 0:
            raise ParameterError(f"Predictor: provenance tag s must be >= 0, got {s}")
        self._fn = fn
        self.s = int(s)
        self.label = label
        self._cache: WeakKeyDictionary = WeakKeyDictionary()

    @classmethod
    def from_scalar(cls, fn: Callable[[np.ndarray], float], s: int, label: str = "") -> "Predictor":
        """Wrap a per-row function; mostly a convenience for tests."""

        def batch(xs: np.ndarray) -> np.ndarray:
            return np.array([fn(row) for row in xs], dtype=np.float64)

        return cls(batch, s, label)

    @classmethod
    def precomputed(cls, values_by_dataset, s: int = 0, label: str = "precomputed") -> "Predictor":
        """Build a predictor from already-materialized prediction columns.

        ``values_by_dataset`` is an iterable of (dataset, values) pairs.
        The predictor only answers for those exact dataset objects.
        """
        pred = cls(None, s, label)
        for dataset, values in values_by_dataset:
            arr = np.asarray(values, dtype=np.float64).reshape(-1)
            size = dataset.n if isinstance(dataset, LabeledDataset) else dataset.m
            if arr.shape[0] != size:
                raise DomainError(
                    f"precomputed predictor: {arr.shape[0]} values for {size} rows"
                )
            if not np.all(np.isfinite(arr)):
                raise DomainError("precomputed predictor: non-finite prediction values")
            arr = arr.copy()
            arr.setflags(write=False)
            pred._cache[dataset] = arr
        return pred

    def predict(self, xs: np.ndarray) -> np.ndarray:
        if self._fn is None:
            raise DomainError(
                "this predictor only holds precomputed values; "
                "it cannot evaluate new feature vectors"
            )
        values = np.asarray(self._fn(np.asarray(xs, dtype=np.float64)), dtype=np.float64)
        values = values.reshape(-1)
        if values.shape[0] != np.asarray(xs).shape[0]:
            raise DomainError("predictor returned a wrong-length prediction vector")
        if not np.all(np.isfinite(values)):
            raise DomainError("predictor produced non-finite predictions")
        return values

    def on(self, dataset) -> np.ndarray:
        """Predictions for every row of a dataset, cached per dataset object."""
        cached = self._cache.get(dataset)
        if cached is not None:
            return cached
        values = self.predict(dataset.xs)
        values.setflags(write=False)
        self._cache[dataset] = values
        return values

    def __repr__(self) -> str:
        tag = self.label or "fn"
        return f"Predictor({tag}, s={self.s})"


def split_dataset(
    data: LabeledDataset, s: int, seed: "RngSeed | int"
) -> tuple[LabeledDataset, LabeledDataset]:
    """Randomly partition labeled data into (fine-tuning, rectification) parts.

    Returns ``(ft, ppi)`` with ``ft.n == s`` and ``ppi.n == data.n - s``.
    The partition is uniform over all splits of the given sizes; indices
    within each part keep the original dataset order.
    """
    if not isinstance(s, (int, np.integer)):
        raise InvalidSplitError(f"split size must be an integer, got {s!r}")
    s = int(s)
    if not 0 < s < data.n:
        raise InvalidSplitError(
            f"split size must satisfy 0 < s < n (got s={s}, n={data.n})"
        )
    rng = as_seed(seed).generator()
    perm = rng.permutation(data.n)
    ft_idx = np.sort(perm[:s])
    ppi_idx = np.sort(perm[s:])
    return data.subset(ft_idx), data.subset(ppi_idx)


def sample_variance(values) -> float:
    """Unbiased sample variance with divisor (len - 1)."""
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if arr.shape[0] < 2:
        raise InsufficientDataError(
            f"sample_variance needs at least 2 values, got {arr.shape[0]}"
        )
    if not np.all(np.isfinite(arr)):
        raise DomainError("sample_variance: non-finite values")
    return float(np.var(arr, ddof=1))


# ---------------------------------------------------------------------------
# CSV ingestion.  Labeled files carry a header ``y,x1,...,xd``; unlabeled
# files carry ``x1,...,xd``; prediction files carry a single column ``f``.
# ---------------------------------------------------------------------------


def _read_rows(path: str) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            rows = [row for row in reader if row]
    except OSError as exc:
        raise CsvFormatError(f"{path}: cannot read file ({exc})") from exc
    if not rows:
        raise CsvFormatError(f"{path}: file is empty")
    header = [cell.strip() for cell in rows[0]]
    return header, rows[1:]


def _parse_cell(path: str, row_no: int, col_name: str, cell: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise CsvFormatError(
            f"{path}: row {row_no}, column {col_name}: could not parse {cell!r} as a number"
        ) from None


def _parse_matrix(path: str, header: list[str], rows: list[list[str]]) -> np.ndarray:
    out = np.empty((len(rows), len(header)), dtype=np.float64)
    for i, row in enumerate(rows):
        row_no = i + 2  # 1-based, header is row 1
        if len(row) != len(header):
            raise CsvFormatError(
                f"{path}: row {row_no}: expected {len(header)} fields, got {len(row)}"
            )
        for j, cell in enumerate(row):
            out[i, j] = _parse_cell(path, row_no, header[j], cell.strip())
    return out


def _expect_feature_header(path: str, names: list[str], offset: int) -> None:
    expected = [f"x{j + 1}" for j in range(len(names))]
    if names != expected:
        raise CsvFormatError(
            f"{path}: expected feature columns {','.join(expected)} "
            f"starting at position {offset + 1}, got {','.join(names)}"
        )
    if not names:
        raise CsvFormatError(f"{path}: no feature columns found")


def read_labeled_csv(path: str) -> LabeledDataset:
    """Read a labeled dataset from a CSV with header ``y,x1,...,xd``."""
    header, rows = _read_rows(path)
    if not header or header[0] != "y":
        raise CsvFormatError(f"{path}: first column must be 'y', got {header[:1]}")
    _expect_feature_header(path, header[1:], 1)
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    mat = _parse_matrix(path, header, rows)
    return LabeledDataset(mat[:, 1:], mat[:, 0])


def read_unlabeled_csv(path: str) -> UnlabeledDataset:
    """Read an unlabeled dataset from a CSV with header ``x1,...,xd``."""
    header, rows = _read_rows(path)
    _expect_feature_header(path, header, 0)
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    mat = _parse_matrix(path, header, rows)
    return UnlabeledDataset(mat)


def read_predictions_csv(path: str) -> np.ndarray:
    """Read a single prediction column from a CSV with header ``f``."""
    header, rows = _read_rows(path)
    if header != ["f"]:
        raise CsvFormatError(f"{path}: expected single column 'f', got {','.join(header)}")
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    mat = _parse_matrix(path, header, rows)
    return mat[:, 0]

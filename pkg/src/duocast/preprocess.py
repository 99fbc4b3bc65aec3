"""Imputation, z-score normalization, date splitting and window construction.

Normalization statistics are always fitted on training rows only and use the
population standard deviation. Constant columns (zero spread) are flagged and
map to zero so they never produce NaN.
"""
from __future__ import annotations

import datetime as dt
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .ingest import AnnualFrame, DailyFrame

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# imputation

def _fit_mean(column: np.ndarray, fit_mask: np.ndarray, name: str) -> float:
    values = column[fit_mask & ~np.isnan(column)]
    if values.size == 0:
        raise DataError(f"column {name!r} entirely missing in the fit range")
    return float(values.mean())


def _impute_matrix(matrix: np.ndarray, names: list[str], strategy: str,
                   fit_mask: np.ndarray) -> np.ndarray:
    out = matrix.copy()
    incomplete = [j for j in range(out.shape[1]) if np.isnan(out[:, j]).any()]
    if not incomplete:
        return out
    if strategy == "mean":
        for j in incomplete:
            fill = _fit_mean(matrix[:, j], fit_mask, names[j])
            col = out[:, j]
            col[np.isnan(col)] = fill
        return out
    if strategy == "regression":
        complete = [j for j in range(matrix.shape[1])
                    if not np.isnan(matrix[fit_mask, j]).any()]
        for j in incomplete:
            fallback = _fit_mean(matrix[:, j], fit_mask, names[j])
            covariates = [k for k in complete if k != j]
            rows = fit_mask & ~np.isnan(matrix[:, j])
            if covariates:
                rows &= ~np.isnan(matrix[:, covariates]).any(axis=1)
            if rows.sum() < 2:
                raise DataError(
                    f"column {names[j]!r}: need >= 2 complete rows for "
                    f"regression imputation, have {int(rows.sum())}"
                )
            design = np.column_stack(
                [np.ones(rows.sum())] + [matrix[rows, k] for k in covariates]
            )
            coef, *_ = np.linalg.lstsq(design, matrix[rows, j], rcond=None)
            for i in np.flatnonzero(np.isnan(out[:, j])):
                covs = matrix[i, covariates] if covariates else np.empty(0)
                if np.isnan(covs).any():
                    out[i, j] = fallback
                else:
                    out[i, j] = coef[0] + float(covs @ coef[1:])
        return out
    raise ValueError(f"unknown imputation strategy {strategy!r}")


def impute(frame, strategy: str = "mean", fit_end: dt.date | None = None):
    """Fill missing values; returns a new frame of the same type.

    Fill statistics and regression fits use only rows in the fit range
    (dates up to `fit_end` for daily frames; all rows otherwise), so missing
    test-range cells never leak test information.
    """
    if isinstance(frame, DailyFrame):
        names = frame.column_names()
        matrix = np.column_stack([frame.columns[n] for n in names])
        if fit_end is None:
            fit_mask = np.ones(len(frame), dtype=bool)
        else:
            fit_mask = np.array([d <= fit_end for d in frame.dates], dtype=bool)
            if not fit_mask.any():
                raise DataError(f"{frame.symbol}: no rows on or before {fit_end}")
        filled = _impute_matrix(matrix, names, strategy, fit_mask)
        columns = {n: filled[:, j].copy() for j, n in enumerate(names)}
        return DailyFrame(frame.symbol, list(frame.dates), columns)
    if isinstance(frame, AnnualFrame):
        fit_mask = np.ones(len(frame), dtype=bool)
        filled = _impute_matrix(frame.matrix, frame.ratio_names, strategy, fit_mask)
        return AnnualFrame(frame.symbol, list(frame.years), filled,
                           list(frame.ratio_names), frame.target_close)
    raise TypeError(f"cannot impute {type(frame)!r}")


# ---------------------------------------------------------------------------
# normalization

@dataclass
class NormStats:
    """Per-column mean and population standard deviation."""

    columns: list[str]
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if (self.std < 0).any():
            raise DataError("negative standard deviation")

    @property
    def constant(self) -> np.ndarray:
        return self.std == 0.0

    def index(self, column: str) -> int:
        try:
            return self.columns.index(column)
        except ValueError:
            raise DataError(f"column {column!r} not in stats") from None

    def to_dict(self) -> dict:
        return {
            "columns": list(self.columns),
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "NormStats":
        return cls(
            columns=list(doc["columns"]),
            mean=np.asarray(doc["mean"], dtype=np.float64),
            std=np.asarray(doc["std"], dtype=np.float64),
        )


def fit_stats(matrix: np.ndarray, names: list[str]) -> NormStats:
    if np.isnan(matrix).any():
        raise DataError("cannot fit normalization stats on missing values")
    mean = matrix.mean(axis=0)
    std = matrix.std(axis=0)  # population
    constant = [names[j] for j in np.flatnonzero(std == 0.0)]
    if constant:
        log.info("constant columns (sigma = 0) map to zero: %s", constant)
    return NormStats(list(names), mean, std)


def apply_stats(matrix: np.ndarray, stats: NormStats) -> np.ndarray:
    safe = np.where(stats.std == 0.0, 1.0, stats.std)
    z = (matrix - stats.mean) / safe
    z[:, stats.constant] = 0.0
    return z


def fit_normalize(frame: DailyFrame, columns: list[str]) -> NormStats:
    """Fit z-score statistics on the given frame (pass the train partition)."""
    matrix = np.column_stack([frame.columns[n] for n in columns])
    return fit_stats(matrix, columns)


def apply_normalize(frame: DailyFrame, stats: NormStats) -> DailyFrame:
    for name in stats.columns:
        if name not in frame.columns:
            raise DataError(f"frame lacks column {name!r} required by stats")
    matrix = np.column_stack([frame.columns[n] for n in stats.columns])
    z = apply_stats(matrix, stats)
    columns = {n: v.copy() for n, v in frame.columns.items()}
    for j, name in enumerate(stats.columns):
        columns[name] = z[:, j].copy()
    return DailyFrame(frame.symbol, list(frame.dates), columns)


def denormalize(values: np.ndarray | float, stats: NormStats, column: str):
    """Invert the z-score map for one column: x = z * sigma + mu."""
    j = stats.index(column)
    return np.asarray(values, dtype=np.float64) * stats.std[j] + stats.mean[j]


# ---------------------------------------------------------------------------
# splitting

@dataclass(frozen=True)
class SplitSpec:
    train_start: dt.date
    train_end: dt.date
    test_start: dt.date
    test_end: dt.date

    def __post_init__(self):
        if self.train_start > self.train_end:
            raise DataError("train range is empty")
        if self.test_start > self.test_end:
            raise DataError("test range is empty")
        if self.train_end >= self.test_start:
            raise DataError("train_end must precede test_start")


def split_by_date(frame: DailyFrame, spec: SplitSpec
                  ) -> tuple[DailyFrame, DailyFrame]:
    """Partition rows into [train_start, train_end] and [test_start, test_end]."""
    dates = frame.dates
    if any(b < a for a, b in zip(dates, dates[1:])):
        raise DataError(f"{frame.symbol}: frame is not sorted by date")
    train_mask = np.array(
        [spec.train_start <= d <= spec.train_end for d in dates], dtype=bool)
    test_mask = np.array(
        [spec.test_start <= d <= spec.test_end for d in dates], dtype=bool)
    if not train_mask.any():
        raise DataError(f"{frame.symbol}: empty train partition")
    if not test_mask.any():
        raise DataError(f"{frame.symbol}: empty test partition")
    train = frame.select_rows(train_mask)
    test = frame.select_rows(test_mask)
    log.debug("%s: %d train rows, %d test rows", frame.symbol, len(train), len(test))
    return train, test


# ---------------------------------------------------------------------------
# windowing

@dataclass
class WindowedDataset:
    """Fixed-length input windows with one-step-ahead targets.

    inputs[i] covers timesteps [i, i+T); targets[i] is the normalized target
    column at timestep i+T.
    """

    inputs: np.ndarray          # (N, T, F)
    targets: np.ndarray         # (N,)
    feature_names: list[str]
    window_length: int
    stats: NormStats | None = None
    symbols: list[str] = field(default_factory=list)
    target_dates: list[dt.date] = field(default_factory=list)

    def __post_init__(self):
        if np.isnan(self.inputs).any() or np.isnan(self.targets).any():
            raise DataError("windowed dataset contains NaN")

    def __len__(self) -> int:
        return len(self.targets)

    @property
    def n_features(self) -> int:
        return self.inputs.shape[2]

    def flat_inputs(self) -> np.ndarray:
        """Windows flattened to (N, T * F) vectors, timestep-major."""
        return self.inputs.reshape(len(self), -1)


def make_windows(frame: DailyFrame, feature_names: list[str], window_length: int,
                 stats: NormStats | None = None, target: str = "close"
                 ) -> WindowedDataset:
    """Slice a (normalized) frame into stride-1 supervised windows."""
    n = len(frame)
    if window_length < 1:
        raise DataError(f"window length must be >= 1, got {window_length}")
    if n < window_length + 1:
        raise DataError(
            f"{frame.symbol}: {n} rows is too short for window length "
            f"{window_length} (need at least {window_length + 1})"
        )
    matrix = np.column_stack([frame.columns[name] for name in feature_names])
    count = n - window_length
    view = np.lib.stride_tricks.sliding_window_view(matrix, window_length, axis=0)
    inputs = view[:count].transpose(0, 2, 1).copy()
    targets = frame.columns[target][window_length:].copy()
    return WindowedDataset(
        inputs=inputs,
        targets=targets,
        feature_names=list(feature_names),
        window_length=window_length,
        stats=stats,
        symbols=[frame.symbol] * count,
        target_dates=list(frame.dates[window_length:]),
    )


def combine_windows(datasets: list[WindowedDataset]) -> WindowedDataset:
    """Pool per-symbol window sets; feature layout must match exactly."""
    if not datasets:
        raise DataError("no window sets to combine")
    first = datasets[0]
    for ds in datasets[1:]:
        if ds.feature_names != first.feature_names:
            raise DataError("feature name mismatch across window sets")
        if ds.window_length != first.window_length:
            raise DataError("window length mismatch across window sets")
    return WindowedDataset(
        inputs=np.concatenate([ds.inputs for ds in datasets], axis=0),
        targets=np.concatenate([ds.targets for ds in datasets], axis=0),
        feature_names=list(first.feature_names),
        window_length=first.window_length,
        stats=None,
        symbols=[s for ds in datasets for s in ds.symbols],
        target_dates=[d for ds in datasets for d in ds.target_dates],
    )

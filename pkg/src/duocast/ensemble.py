"""Serial two-learner pipeline over two time frequencies.

Stage 1 trains an LSTM on each symbol's year-ordered fundamental-ratio
sequences to predict the year-end close, and tabulates a prediction for every
(symbol, year). Stage 2 broadcasts those predictions onto the daily series as
a ninth feature and trains the daily LSTM on the enriched windows. The stages
are strictly sequential: stage 2 cannot run without stage 1's table.
"""
from __future__ import annotations

import datetime as dt
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .ingest import AnnualFrame, DailyFrame
from .lstm import (LstmParams, LstmTrainConfig, lstm_train,
                   lstm_train_sequences, predict_batch)
from .preprocess import (NormStats, SplitSpec, WindowedDataset, apply_normalize,
                         apply_stats, combine_windows, fit_normalize, fit_stats,
                         make_windows, split_by_date)

log = logging.getLogger(__name__)

DAILY_FEATURES = ("open", "high", "low", "close", "volume", "macd", "signal",
                  "rsi")
INJECTED_FEATURE = "l1_pred"
ENSEMBLE_FEATURES = DAILY_FEATURES + (INJECTED_FEATURE,)
TARGET_COLUMN = "target_close"


@dataclass(frozen=True)
class AlignmentRule:
    """Bridge between frequencies: which annual prediction a day receives.

    "same_year" broadcasts year Y's prediction onto year Y's days (the
    default; note it leaks year-end information into earlier days of the same
    year). "lagged" uses the previous year's prediction instead.
    """

    mode: str = "same_year"

    def __post_init__(self):
        if self.mode not in ("same_year", "lagged"):
            raise ValueError(f"unknown alignment mode {self.mode!r}")

    def year_for(self, date: dt.date) -> int:
        return date.year if self.mode == "same_year" else date.year - 1


def attach_annual_targets(annual: AnnualFrame, daily: DailyFrame) -> AnnualFrame:
    """Set each year's target to the symbol's last trading-day close.

    Years with no daily coverage are dropped (they can have no target).
    """
    close_by_year: dict[int, float] = {}
    for date, close in zip(daily.dates, daily.columns["close"]):
        if not np.isnan(close):
            close_by_year[date.year] = float(close)  # dates sorted, last wins
    keep = [k for k, year in enumerate(annual.years) if year in close_by_year]
    dropped = [year for year in annual.years if year not in close_by_year]
    if dropped:
        log.warning("%s: dropping years without daily coverage: %s",
                    annual.symbol, dropped)
    years = [annual.years[k] for k in keep]
    matrix = annual.matrix[keep].copy()
    targets = np.array([close_by_year[y] for y in years], dtype=np.float64)
    return AnnualFrame(annual.symbol, years, matrix, list(annual.ratio_names),
                       target_close=targets)


@dataclass
class Learner1Result:
    params: LstmParams
    table: dict[tuple[str, int], float]
    stats: dict[str, NormStats]


def train_learner1(annual_frames: dict[str, AnnualFrame],
                   config: LstmTrainConfig) -> Learner1Result:
    """Train the annual learner pooled across symbols and fill the table.

    Each (symbol, year) contributes one training sample: the normalized ratio
    sequence up to that year, targeting that year's normalized close. The
    prediction table is filled by running the trained model on those same
    prefix sequences. Symbols with fewer than two target years are excluded.
    """
    included: dict[str, AnnualFrame] = {}
    for symbol in sorted(annual_frames):
        frame = annual_frames[symbol]
        if frame.target_close is None:
            raise DataError(f"{symbol}: annual frame has no targets attached")
        if len(frame) < 2:
            log.warning("%s: only %d usable years, excluded from the annual "
                        "learner", symbol, len(frame))
            continue
        included[symbol] = frame
    if not included:
        raise DataError("no symbols with >= 2 years of annual data")

    stats: dict[str, NormStats] = {}
    sequences: list[np.ndarray] = []
    targets: list[float] = []
    keys: list[tuple[str, int]] = []
    columns = None
    for symbol, frame in included.items():
        if np.isnan(frame.matrix).any():
            raise DataError(f"{symbol}: annual ratios contain missing values; "
                            "impute first")
        columns = list(frame.ratio_names) + [TARGET_COLUMN]
        full = np.column_stack([frame.matrix, frame.target_close])
        sym_stats = fit_stats(full, columns)
        stats[symbol] = sym_stats
        z = apply_stats(full, sym_stats)
        z_ratios, z_target = z[:, :-1], z[:, -1]
        for k in range(len(frame)):
            sequences.append(z_ratios[: k + 1].copy())
            targets.append(float(z_target[k]))
            keys.append((symbol, frame.years[k]))

    params, history = lstm_train_sequences(sequences, np.asarray(targets), config)
    log.info("annual learner: %d sequences, final loss %.6f",
             len(sequences), history[-1])

    table: dict[tuple[str, int], float] = {}
    for key, seq in zip(keys, sequences):
        table[key] = float(predict_batch(params, seq[None, :, :])[0])
    return Learner1Result(params=params, table=table, stats=stats)


def inject_feature(daily: DailyFrame, table: dict[tuple[str, int], float],
                   rule: AlignmentRule = AlignmentRule()) -> DailyFrame:
    """Append the broadcast annual prediction as column `l1_pred`.

    Re-injecting overwrites the column. Every day must map to a table entry;
    gaps are an error listing the missing (symbol, year) pairs.
    """
    gaps = sorted({(daily.symbol, rule.year_for(d)) for d in daily.dates
                   if (daily.symbol, rule.year_for(d)) not in table})
    if gaps:
        raise DataError(f"no annual prediction for: {gaps}")
    values = np.array([table[(daily.symbol, rule.year_for(d))]
                       for d in daily.dates], dtype=np.float64)
    return daily.with_column(INJECTED_FEATURE, values)


def covered_rows(daily: DailyFrame, table: dict[tuple[str, int], float],
                 rule: AlignmentRule) -> DailyFrame:
    """Restrict a daily frame to days whose mapped year has a table entry."""
    mask = np.array([(daily.symbol, rule.year_for(d)) in table
                     for d in daily.dates], dtype=bool)
    if not mask.any():
        raise DataError(f"{daily.symbol}: no days covered by the annual table")
    return daily.select_rows(mask)


def build_symbol_windows(frame: DailyFrame, split: SplitSpec,
                         feature_names: list[str], window_length: int
                         ) -> tuple[WindowedDataset, WindowedDataset, NormStats]:
    """Split, normalize on the train partition only, and window both sides."""
    train, test = split_by_date(frame, split)
    stats = fit_normalize(train, list(feature_names))
    train_n = apply_normalize(train, stats)
    test_n = apply_normalize(test, stats)
    wtr = make_windows(train_n, list(feature_names), window_length, stats)
    wte = make_windows(test_n, list(feature_names), window_length, stats)
    return wtr, wte, stats


@dataclass
class EnsembleConfig:
    learner1: LstmTrainConfig = field(
        default_factory=lambda: LstmTrainConfig(hidden=20))
    learner2: LstmTrainConfig = field(
        default_factory=lambda: LstmTrainConfig(hidden=200))
    window_length: int = 22
    alignment: AlignmentRule = field(default_factory=AlignmentRule)


@dataclass
class EnsembleModel:
    """Both trained learners plus everything needed to predict in currency."""

    learner1: LstmParams
    learner2: LstmParams
    table: dict[tuple[str, int], float]
    feature_names: list[str]
    daily_stats: dict[str, NormStats]
    annual_stats: dict[str, NormStats]
    window_length: int
    alignment: AlignmentRule

    def prepare_frame(self, daily: DailyFrame) -> DailyFrame:
        """Inject the annual prediction and normalize with the stored stats."""
        if daily.symbol not in self.daily_stats:
            raise DataError(f"symbol {daily.symbol!r} not in model")
        injected = inject_feature(daily, self.table, self.alignment)
        return apply_normalize(injected, self.daily_stats[daily.symbol])

    def predict_normalized(self, symbol: str, windows: np.ndarray) -> np.ndarray:
        if symbol not in self.daily_stats:
            raise DataError(f"symbol {symbol!r} not in model")
        return predict_batch(self.learner2, windows)

    def to_dict(self) -> dict:
        return {
            "learner1": self.learner1.to_dict(),
            "learner2": self.learner2.to_dict(),
            "table": [[s, y, v] for (s, y), v in sorted(self.table.items())],
            "feature_names": list(self.feature_names),
            "daily_stats": {s: st.to_dict() for s, st in self.daily_stats.items()},
            "annual_stats": {s: st.to_dict() for s, st in self.annual_stats.items()},
            "window_length": self.window_length,
            "alignment": self.alignment.mode,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EnsembleModel":
        return cls(
            learner1=LstmParams.from_dict(doc["learner1"]),
            learner2=LstmParams.from_dict(doc["learner2"]),
            table={(s, int(y)): float(v) for s, y, v in doc["table"]},
            feature_names=list(doc["feature_names"]),
            daily_stats={s: NormStats.from_dict(d)
                         for s, d in doc["daily_stats"].items()},
            annual_stats={s: NormStats.from_dict(d)
                          for s, d in doc["annual_stats"].items()},
            window_length=int(doc["window_length"]),
            alignment=AlignmentRule(doc["alignment"]),
        )


def train_ensemble(daily_frames: dict[str, DailyFrame],
                   annual_frames: dict[str, AnnualFrame],
                   split: SplitSpec, config: EnsembleConfig) -> EnsembleModel:
    """Run both stages sequentially and return the complete model."""
    joint = sorted(set(daily_frames) & set(annual_frames))
    if not joint:
        raise DataError("empty joint symbol universe")

    try:
        targeted = {s: attach_annual_targets(annual_frames[s], daily_frames[s])
                    for s in joint}
        learner1 = train_learner1(targeted, config.learner1)
    except (DataError, ValueError) as exc:
        raise DataError(f"stage 1 (annual learner): {exc}") from exc

    try:
        window_sets = []
        daily_stats = {}
        for symbol in joint:
            injectable = covered_rows(daily_frames[symbol], learner1.table,
                                      config.alignment)
            injected = inject_feature(injectable, learner1.table,
                                      config.alignment)
            try:
                wtr, _, stats = build_symbol_windows(
                    injected, split, list(ENSEMBLE_FEATURES),
                    config.window_length)
            except DataError as exc:
                log.warning("%s excluded from the daily learner: %s", symbol, exc)
                continue
            window_sets.append(wtr)
            daily_stats[symbol] = stats
        if not window_sets:
            raise DataError("no symbol has enough rows for daily windows")
        pooled = combine_windows(window_sets)
        learner2, history = lstm_train(pooled, config.learner2)
        log.info("daily learner: %d windows, final loss %.6f",
                 len(pooled), history[-1])
    except (DataError, ValueError) as exc:
        if str(exc).startswith("stage 2"):
            raise
        raise DataError(f"stage 2 (daily learner): {exc}") from exc

    return EnsembleModel(
        learner1=learner1.params,
        learner2=learner2,
        table=learner1.table,
        feature_names=list(ENSEMBLE_FEATURES),
        daily_stats=daily_stats,
        annual_stats=learner1.stats,
        window_length=config.window_length,
        alignment=config.alignment,
    )


def predict_next_close(model: EnsembleModel, symbol: str,
                       recent: DailyFrame) -> float:
    """Predict the next day's close in currency units from raw recent rows."""
    if symbol not in model.daily_stats:
        raise DataError(f"symbol {symbol!r} not in model")
    if recent.symbol != symbol:
        raise DataError(f"window frame is for {recent.symbol!r}, not {symbol!r}")
    t_len = model.window_length
    if len(recent) < t_len:
        raise DataError(f"need at least {t_len} rows, got {len(recent)}")
    tail = recent.select_rows(np.arange(len(recent)) >= len(recent) - t_len)
    normalized = model.prepare_frame(tail)
    window = np.column_stack(
        [normalized.columns[name] for name in model.feature_names])
    pred = model.predict_normalized(symbol, window[None, :, :])[0]
    stats = model.daily_stats[symbol]
    j = stats.index("close")
    return float(pred * stats.std[j] + stats.mean[j])

"""Exponential moving averages, MACD with its signal line, and RSI.

Every indicator exists in two forms: a streaming step over an explicit state
value, and a batch form over a full series. The two agree to 1e-12 on any
input. Missing (NaN) observations leave the state untouched and emit NaN for
that step, so a gap in the input never poisons the rest of the series.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError
from .ingest import DailyFrame

log = logging.getLogger(__name__)


def smoothing_factor(period: int) -> float:
    """Smoothing weight for an EMA over the selected period: 2 / (period + 1)."""
    if period < 1:
        raise ValueError(f"period must be >= 1, got {period}")
    return 2.0 / (period + 1)


@dataclass(frozen=True)
class EmaState:
    """State of a streaming EMA.

    `seed` chooses how the recurrence starts: "first" seeds with the first
    observation, "sma" averages the first `period` observations before the
    recurrence takes over (output is NaN until then).
    """

    period: int
    current: float | None = None
    seed: str = "first"
    warmup_sum: float = 0.0
    warmup_count: int = 0

    @property
    def smoothing(self) -> float:
        return smoothing_factor(self.period)


def ema_step(state: EmaState, value: float) -> tuple[EmaState, float]:
    """Advance the EMA by one observation; returns the new state and output."""
    if not np.isfinite(value):
        raise ValueError(f"EMA input must be finite, got {value!r}")
    alpha = state.smoothing
    if state.current is not None:
        out = alpha * value + (1.0 - alpha) * state.current
        return replace(state, current=out), out
    if state.seed == "first":
        return replace(state, current=value), value
    if state.seed == "sma":
        total = state.warmup_sum + value
        count = state.warmup_count + 1
        if count < state.period:
            return replace(state, warmup_sum=total, warmup_count=count), np.nan
        seed_value = total / count
        return replace(state, current=seed_value, warmup_sum=0.0,
                       warmup_count=0), seed_value
    raise ValueError(f"unknown EMA seed mode {state.seed!r}")


def ema_series(values: np.ndarray, period: int, seed: str = "first") -> np.ndarray:
    """Batch EMA. NaN inputs emit NaN and do not advance the state."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise DataError("EMA of an empty series")
    state = EmaState(period=period, seed=seed)
    out = np.empty_like(values)
    for t, v in enumerate(values):
        if np.isnan(v):
            out[t] = np.nan
            continue
        state, out[t] = ema_step(state, float(v))
    return out


@dataclass(frozen=True)
class MacdTriple:
    macd: float
    signal: float
    histogram: float


@dataclass(frozen=True)
class MacdState:
    fast: EmaState
    slow: EmaState
    signal: EmaState


def macd_state(fast_period: int = 12, slow_period: int = 26,
               signal_period: int = 9, seed: str = "first") -> MacdState:
    return MacdState(
        fast=EmaState(period=fast_period, seed=seed),
        slow=EmaState(period=slow_period, seed=seed),
        signal=EmaState(period=signal_period, seed=seed),
    )


def macd_step(state: MacdState, value: float) -> tuple[MacdState, MacdTriple]:
    fast, fast_out = ema_step(state.fast, value)
    slow, slow_out = ema_step(state.slow, value)
    if np.isnan(fast_out) or np.isnan(slow_out):
        return MacdState(fast, slow, state.signal), MacdTriple(np.nan, np.nan, np.nan)
    macd = fast_out - slow_out
    signal_state, signal = ema_step(state.signal, macd)
    return MacdState(fast, slow, signal_state), MacdTriple(macd, signal, macd - signal)


@dataclass
class MacdSeries:
    macd: np.ndarray
    signal: np.ndarray
    histogram: np.ndarray

    def __len__(self) -> int:
        return len(self.macd)

    def triple(self, t: int) -> MacdTriple:
        return MacdTriple(self.macd[t], self.signal[t], self.histogram[t])


def macd_series(close: np.ndarray, fast_period: int = 12, slow_period: int = 26,
                signal_period: int = 9, seed: str = "first") -> MacdSeries:
    """MACD = fast EMA - slow EMA of close; signal = EMA of MACD.

    With `seed="sma"` the warmup region is NaN until both EMAs are defined.
    """
    close = np.asarray(close, dtype=np.float64)
    if close.size == 0:
        raise DataError("MACD of an empty series")
    state = macd_state(fast_period, slow_period, signal_period, seed)
    macd = np.empty_like(close)
    signal = np.empty_like(close)
    for t, v in enumerate(close):
        if np.isnan(v):
            macd[t] = signal[t] = np.nan
            continue
        state, triple = macd_step(state, float(v))
        macd[t], signal[t] = triple.macd, triple.signal
    return MacdSeries(macd, signal, macd - signal)


@dataclass(frozen=True)
class RsiState:
    """State of a streaming RSI with Wilder smoothing after warmup."""

    period: int = 14
    prev_value: float | None = None
    avg_gain: float | None = None
    avg_loss: float | None = None
    warmup_gain: float = 0.0
    warmup_loss: float = 0.0
    warmup_count: int = 0


def _rsi_value(avg_gain: float, avg_loss: float) -> float:
    if avg_loss == 0.0:
        return 50.0 if avg_gain == 0.0 else 100.0
    return 100.0 - 100.0 / (1.0 + avg_gain / avg_loss)


def rsi_step(state: RsiState, value: float) -> tuple[RsiState, float]:
    """Advance the RSI by one observation; NaN until warmup completes."""
    if not np.isfinite(value):
        raise ValueError(f"RSI input must be finite, got {value!r}")
    if state.prev_value is None:
        return replace(state, prev_value=value), np.nan
    delta = value - state.prev_value
    gain = max(delta, 0.0)
    loss = max(-delta, 0.0)
    if state.avg_gain is None:
        total_gain = state.warmup_gain + gain
        total_loss = state.warmup_loss + loss
        count = state.warmup_count + 1
        if count < state.period:
            return replace(state, prev_value=value, warmup_gain=total_gain,
                           warmup_loss=total_loss, warmup_count=count), np.nan
        avg_gain = total_gain / state.period
        avg_loss = total_loss / state.period
    else:
        avg_gain = (state.avg_gain * (state.period - 1) + gain) / state.period
        avg_loss = (state.avg_loss * (state.period - 1) + loss) / state.period
    new = replace(state, prev_value=value, avg_gain=avg_gain, avg_loss=avg_loss,
                  warmup_gain=0.0, warmup_loss=0.0, warmup_count=0)
    return new, _rsi_value(avg_gain, avg_loss)


def rsi_series(close: np.ndarray, period: int = 14) -> np.ndarray:
    """Batch RSI in [0, 100]; the first `period` outputs are NaN (warmup)."""
    close = np.asarray(close, dtype=np.float64)
    observed = int(np.sum(~np.isnan(close)))
    if observed < period + 1:
        log.warning("series has %d observations, need %d for RSI; output is "
                    "all-undefined", observed, period + 1)
        return np.full(close.shape, np.nan)
    state = RsiState(period=period)
    out = np.empty_like(close)
    for t, v in enumerate(close):
        if np.isnan(v):
            out[t] = np.nan
            continue
        state, out[t] = rsi_step(state, float(v))
    return out


@dataclass(frozen=True)
class IndicatorParams:
    macd_fast: int = 12
    macd_slow: int = 26
    signal_period: int = 9
    rsi_period: int = 14
    ema_seed: str = "first"
    warmup: str = "backfill"


def _backfill(values: np.ndarray) -> np.ndarray:
    """Fill leading NaN with the first defined value."""
    defined = np.flatnonzero(~np.isnan(values))
    if defined.size == 0:
        return values
    first = defined[0]
    out = values.copy()
    out[:first] = values[first]
    return out


def add_indicators(frame: DailyFrame, params: IndicatorParams = IndicatorParams()
                   ) -> DailyFrame:
    """Append macd, signal and rsi columns computed from close.

    Warmup handling per `params.warmup`: "backfill" replaces the undefined
    leading region with the first defined value, "drop" trims those rows.
    """
    close = frame.columns["close"]
    macd = macd_series(close, params.macd_fast, params.macd_slow,
                       params.signal_period, params.ema_seed)
    rsi = rsi_series(close, params.rsi_period)

    out = frame.with_column("macd", macd.macd)
    out = out.with_column("signal", macd.signal)
    out = out.with_column("rsi", rsi)

    if params.warmup == "backfill":
        # only the leading warmup region is filled; interior gaps from
        # missing closes stay NaN for the impute stage
        for name in ("macd", "signal", "rsi"):
            out.columns[name] = _backfill(out.columns[name])
        return out
    if params.warmup == "drop":
        defined = np.ones(len(out), dtype=bool)
        for name in ("macd", "signal", "rsi"):
            col = out.columns[name]
            first = np.flatnonzero(~np.isnan(col))
            start = first[0] if first.size else len(out)
            defined &= np.arange(len(out)) >= start
        return out.select_rows(defined)
    raise ValueError(f"unknown warmup mode {params.warmup!r}")

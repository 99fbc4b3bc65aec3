"""Built-in fixture datasets so the whole pipeline runs without external data.

Three generators:

* a deterministic decaying series (next value = 0.9 * current within each
  segment) for learning-sanity checks against the last-value baseline;
* a constant-price universe for normalization edge cases;
* a seeded random-walk universe whose per-year drift outcome is visible only
  through the fundamentals, so the two-frequency ensemble has an edge over a
  purely daily model.
"""
from __future__ import annotations

import csv
import datetime as dt
from pathlib import Path

import numpy as np

from .ingest import AnnualFrame, DailyFrame
from .nn import derive_rng
from .preprocess import NormStats, SplitSpec, WindowedDataset, make_windows

DRIFT_RATIO = 0  # index of the ratio column carrying the year-end close


def business_days(start: dt.date, end: dt.date) -> list[dt.date]:
    """Weekdays from start to end inclusive (no holiday calendar)."""
    days = []
    day = start
    while day <= end:
        if day.weekday() < 5:
            days.append(day)
        day += dt.timedelta(days=1)
    return days


def decay_series(length: int, phi: float = 0.9, peak: float = 100.0,
                 segment: int = 40) -> np.ndarray:
    """Repeated decay segments: x resets to `peak`, then x[t+1] = phi * x[t]."""
    out = np.empty(length)
    for t in range(length):
        out[t] = peak if t % segment == 0 else phi * out[t - 1]
    return out


def decay_fixture(length: int = 480, train_len: int = 400, window: int = 8,
                  phi: float = 0.9, segment: int = 40
                  ) -> tuple[WindowedDataset, WindowedDataset]:
    """Close-only windows over the decay series, normalized on the train part."""
    series = decay_series(length, phi=phi, segment=segment)
    train_part = series[:train_len]
    mean, std = train_part.mean(), train_part.std()
    stats = NormStats(["close"], np.array([mean]), np.array([std]))
    start = dt.date(2013, 1, 1)
    days = business_days(start, start + dt.timedelta(days=2 * length + 10))

    def frame(values: np.ndarray, offset: int) -> DailyFrame:
        return DailyFrame("DECAY", days[offset:offset + len(values)],
                          {"close": (values - mean) / std})

    train = make_windows(frame(train_part, 0), ["close"], window, stats)
    test = make_windows(frame(series[train_len:], train_len), ["close"],
                        window, stats)
    return train, test


def constant_universe(n_symbols: int = 2, start_year: int = 2013,
                      n_years: int = 4, price: float = 100.0, n_ratios: int = 75
                      ) -> tuple[dict[str, DailyFrame], dict[str, AnnualFrame]]:
    """Every close equals `price`; ratios are constant too."""
    years = list(range(start_year, start_year + n_years))
    days = business_days(dt.date(start_year, 1, 1),
                         dt.date(years[-1], 12, 31))
    ratio_names = [f"ratio_{i + 1:02d}" for i in range(n_ratios)]
    daily, annual = {}, {}
    for k in range(n_symbols):
        symbol = f"CONST{k:02d}"
        n = len(days)
        cols = {name: np.full(n, price) for name in ("open", "high", "low",
                                                     "close")}
        cols["volume"] = np.full(n, 1000.0)
        daily[symbol] = DailyFrame(symbol, list(days), cols)
        annual[symbol] = AnnualFrame(
            symbol, list(years), np.full((n_years, n_ratios), 1.0),
            list(ratio_names))
    return daily, annual


def drift_universe(n_symbols: int = 20, start_year: int = 2013,
                   n_years: int = 4, seed: int = 0, noise: float = 1.0,
                   band: float = 150.0, n_ratios: int = 75,
                   ratio_names: list[str] | None = None
                   ) -> tuple[dict[str, DailyFrame], dict[str, AnnualFrame]]:
    """Random-walk closes whose yearly drift outcome lives in the ratios.

    Each year the close drifts linearly (plus seeded noise) toward a target
    level drawn inside a fixed band around the symbol's base, so drift size
    and direction are random per year while the final (test) year stays
    inside the price range the training years cover. Ratio 1 of year Y
    records that year's closing price (the drift outcome); the remaining
    ratios are noise. A short daily window is a poor drift estimator, so the
    annual learner's broadcast prediction carries genuine extra signal.
    """
    rng = derive_rng(seed, stream=9)
    years = list(range(start_year, start_year + n_years))
    days = business_days(dt.date(start_year, 1, 1), dt.date(years[-1], 12, 31))
    days_per_year = {y: sum(1 for d in days if d.year == y) for y in years}
    if ratio_names is None:
        ratio_names = [f"ratio_{i + 1:02d}" for i in range(n_ratios)]
    n_ratios = len(ratio_names)

    daily, annual = {}, {}
    for k in range(n_symbols):
        symbol = f"SYN{k:03d}"
        base = rng.uniform(200.0, 400.0)
        n = len(days)
        close = np.empty(n)
        level = base
        t = 0
        for year in years:
            if year == years[-1]:
                # the final (test) year heads for a level inside the range
                # already seen, so test windows stay in-distribution
                target = float(np.quantile(close[:t], rng.uniform(0.25, 0.75)))
            else:
                target = base + rng.uniform(-band, band)
            drift = (target - level) / days_per_year[year]
            for _ in range(days_per_year[year]):
                level = max(level + drift + rng.normal(0.0, noise), 1.0)
                close[t] = level
                t += 1
        spread = np.abs(rng.normal(0.0, noise / 2, size=n))
        open_ = np.concatenate([[close[0]], close[:-1]])
        high = np.maximum(open_, close) + spread
        low = np.maximum(np.minimum(open_, close) - spread, 0.5)
        volume = rng.uniform(1e5, 1e6, size=n)
        daily[symbol] = DailyFrame(symbol, list(days), {
            "open": open_, "high": high, "low": low, "close": close,
            "volume": volume,
        })

        matrix = rng.normal(0.0, 1.0, size=(n_years, n_ratios))
        for row, year in enumerate(years):
            last = max(t for t, d in enumerate(days) if d.year == year)
            matrix[row, DRIFT_RATIO] = close[last]
        annual[symbol] = AnnualFrame(symbol, list(years), matrix,
                                     list(ratio_names))
    return daily, annual


def drift_split(start_year: int = 2013, n_years: int = 4) -> SplitSpec:
    """Train on all but the final year; test on the final year."""
    last = start_year + n_years - 1
    return SplitSpec(
        train_start=dt.date(start_year, 1, 1),
        train_end=dt.date(last - 1, 12, 31),
        test_start=dt.date(last, 1, 1),
        test_end=dt.date(last, 12, 31),
    )


def write_synthetic_csvs(out_dir, n_symbols: int = 20, start_year: int = 2013,
                         n_years: int = 4, seed: int = 0, noise: float = 1.0,
                         band: float = 150.0,
                         ratio_names: list[str] | None = None
                         ) -> tuple[Path, Path]:
    """Render the drift universe as the two input CSVs the pipeline ingests."""
    daily, annual = drift_universe(n_symbols=n_symbols, start_year=start_year,
                                   n_years=n_years, seed=seed, noise=noise,
                                   band=band, ratio_names=ratio_names)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prices = out / "prices.csv"
    fundamentals = out / "fundamentals.csv"

    with open(prices, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "symbol", "open", "high", "low", "close",
                         "volume"])
        for symbol in sorted(daily):
            frame = daily[symbol]
            for i, day in enumerate(frame.dates):
                writer.writerow(
                    [day.isoformat(), symbol]
                    + [repr(float(frame.columns[c][i]))
                       for c in ("open", "high", "low", "close", "volume")]
                )

    with open(fundamentals, "w", newline="") as fh:
        writer = csv.writer(fh)
        names = next(iter(annual.values())).ratio_names
        writer.writerow(["symbol", "period_end"] + list(names))
        for symbol in sorted(annual):
            frame = annual[symbol]
            for i, year in enumerate(frame.years):
                writer.writerow(
                    [symbol, dt.date(year, 12, 31).isoformat()]
                    + [repr(float(v)) for v in frame.matrix[i]]
                )
    return prices, fundamentals

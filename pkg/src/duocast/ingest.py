"""CSV ingestion for the two input datasets: daily prices and annual fundamentals.

Parsing is lossless: malformed or empty numeric cells become missing values
(``None`` at row level, ``NaN`` at frame level), never silent zeros.
Imputation is the preprocess stage's job.
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, SchemaError

log = logging.getLogger(__name__)

PRICE_COLUMNS = ("open", "high", "low", "close", "volume")
DEFAULT_PRICE_SCHEMA = {name: name for name in ("date", "symbol") + PRICE_COLUMNS}
DEFAULT_FUNDAMENTALS_SCHEMA = {"symbol": "symbol", "period_end": "period_end"}


@dataclass(frozen=True)
class PriceRow:
    date: dt.date
    symbol: str
    open: float | None
    high: float | None
    low: float | None
    close: float | None
    volume: float | None


@dataclass(frozen=True)
class FundamentalsRow:
    symbol: str
    fiscal_year: int
    ratios: tuple[float | None, ...]


@dataclass
class DailyFrame:
    """Per-symbol daily series: a shared date vector plus named float columns.

    Missing entries are NaN. After preprocessing completes no NaN remains.
    """

    symbol: str
    dates: list[dt.date]
    columns: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.dates)
        for name, col in self.columns.items():
            if len(col) != n:
                raise DataError(
                    f"column {name!r} has length {len(col)}, expected {n}"
                )

    def __len__(self) -> int:
        return len(self.dates)

    def column_names(self) -> list[str]:
        return list(self.columns)

    def with_column(self, name: str, values: np.ndarray) -> "DailyFrame":
        """Return a copy with `name` set (overwriting an existing column)."""
        if len(values) != len(self.dates):
            raise DataError(f"column {name!r} length mismatch")
        cols = {k: v.copy() for k, v in self.columns.items()}
        cols[name] = np.asarray(values, dtype=np.float64).copy()
        return DailyFrame(self.symbol, list(self.dates), cols)

    def select_rows(self, mask: np.ndarray) -> "DailyFrame":
        idx = np.flatnonzero(mask)
        cols = {k: v[idx].copy() for k, v in self.columns.items()}
        dates = [self.dates[i] for i in idx]
        return DailyFrame(self.symbol, dates, cols)


@dataclass
class AnnualFrame:
    """Per-symbol annual fundamentals: years x ratio matrix, NaN = missing."""

    symbol: str
    years: list[int]
    matrix: np.ndarray
    ratio_names: list[str]
    target_close: np.ndarray | None = None

    def __post_init__(self):
        if self.matrix.shape[0] != len(self.years):
            raise DataError("ratio matrix row count does not match years")
        if self.matrix.shape[1] != len(self.ratio_names):
            raise DataError("ratio matrix column count does not match ratio names")

    def __len__(self) -> int:
        return len(self.years)


def _text_lines(source) -> io.TextIOBase:
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, str):
        return io.StringIO(source)
    if hasattr(source, "read"):
        data = source.read()
        if isinstance(data, bytes):
            return io.StringIO(data.decode("utf-8"))
        return io.StringIO(data)
    raise TypeError(f"unsupported CSV source: {type(source)!r}")


def parse_date(text: str, date_format: str = "iso") -> dt.date:
    if date_format == "iso":
        return dt.date.fromisoformat(text)
    if date_format == "dmy":
        return dt.datetime.strptime(text, "%d/%m/%Y").date()
    raise ValueError(f"unknown date format {date_format!r}")


def _parse_cell(text: str) -> float | None:
    text = text.strip()
    if not text:
        return None
    try:
        value = float(text)
    except ValueError:
        return None
    if not np.isfinite(value):
        return None
    return value


def parse_prices(csv_source, schema: dict[str, str] | None = None,
                 date_format: str = "iso") -> list[PriceRow]:
    """Parse the daily price CSV into rows, in file order.

    `schema` maps logical names (date, symbol, open, high, low, close,
    volume) to the file's actual column headers.
    """
    schema = dict(DEFAULT_PRICE_SCHEMA, **(schema or {}))
    reader = csv.DictReader(_text_lines(csv_source))
    if reader.fieldnames is None:
        raise SchemaError("prices CSV has no header row")
    for logical in ("date", "symbol") + PRICE_COLUMNS:
        if schema[logical] not in reader.fieldnames:
            raise SchemaError(logical)

    rows = []
    for record in reader:
        raw_date = (record[schema["date"]] or "").strip()
        try:
            date = parse_date(raw_date, date_format)
        except ValueError:
            raise DataError(
                f"line {reader.line_num}: unparseable date {raw_date!r}"
            ) from None
        symbol = (record[schema["symbol"]] or "").strip()
        if not symbol:
            raise DataError(f"line {reader.line_num}: empty symbol")
        values = {name: _parse_cell(record[schema[name]] or "") for name in PRICE_COLUMNS}
        rows.append(PriceRow(date=date, symbol=symbol, **values))
    return rows


def parse_fundamentals(csv_source, ratio_names: list[str],
                       schema: dict[str, str] | None = None,
                       date_format: str = "iso") -> list[FundamentalsRow]:
    """Parse the annual fundamentals CSV.

    The ratio vector follows `ratio_names` order; ratio columns absent from
    the file are filled as missing. The fiscal year is the period-end date's
    calendar year. Duplicate (symbol, year) pairs are an error.
    """
    schema = dict(DEFAULT_FUNDAMENTALS_SCHEMA, **(schema or {}))
    reader = csv.DictReader(_text_lines(csv_source))
    if reader.fieldnames is None:
        raise SchemaError("fundamentals CSV has no header row")
    for logical in ("symbol", "period_end"):
        if schema[logical] not in reader.fieldnames:
            raise SchemaError(logical)

    present = [name for name in ratio_names if name in reader.fieldnames]
    absent = [name for name in ratio_names if name not in reader.fieldnames]
    if absent:
        log.warning("fundamentals CSV lacks %d ratio columns (e.g. %s); "
                    "they are treated as missing", len(absent), absent[:3])

    rows = []
    seen: dict[tuple[str, int], int] = {}
    duplicates = []
    for record in reader:
        symbol = (record[schema["symbol"]] or "").strip()
        if not symbol:
            raise DataError(f"line {reader.line_num}: empty symbol")
        raw_date = (record[schema["period_end"]] or "").strip()
        try:
            year = parse_date(raw_date, date_format).year
        except ValueError:
            raise DataError(
                f"line {reader.line_num}: unparseable period-end date {raw_date!r}"
            ) from None
        key = (symbol, year)
        if key in seen:
            duplicates.append(key)
        seen[key] = reader.line_num
        ratios = tuple(
            _parse_cell(record[name] or "") if name in present else None
            for name in ratio_names
        )
        rows.append(FundamentalsRow(symbol=symbol, fiscal_year=year, ratios=ratios))
    if duplicates:
        raise DataError(f"duplicate (symbol, year) pairs: {sorted(set(duplicates))}")
    return rows


def _column_array(values: list[float | None]) -> np.ndarray:
    return np.array([np.nan if v is None else v for v in values], dtype=np.float64)


def _check_price_invariants(symbol: str, rows: list[PriceRow]) -> None:
    bad = 0
    for row in rows:
        if row.low is not None and row.high is not None and row.low > row.high:
            bad += 1
            continue
        inner = [v for v in (row.open, row.close) if v is not None]
        if row.low is not None and any(v < row.low for v in inner):
            bad += 1
        elif row.high is not None and any(v > row.high for v in inner):
            bad += 1
    if bad:
        log.warning("%s: %d rows violate low <= open/close <= high", symbol, bad)


def assemble_frames(price_rows: list[PriceRow],
                    fundamentals_rows: list[FundamentalsRow],
                    ratio_names: list[str] | None = None,
                    ) -> tuple[dict[str, DailyFrame], dict[str, AnnualFrame]]:
    """Group rows per symbol into sorted frames, keeping the joint universe.

    Symbols present in only one dataset are reported and dropped. An empty
    intersection is fatal.
    """
    by_symbol: dict[str, list[PriceRow]] = {}
    for row in price_rows:
        by_symbol.setdefault(row.symbol, []).append(row)

    fund_by_symbol: dict[str, list[FundamentalsRow]] = {}
    for frow in fundamentals_rows:
        fund_by_symbol.setdefault(frow.symbol, []).append(frow)

    joint = sorted(set(by_symbol) & set(fund_by_symbol))
    dropped = sorted((set(by_symbol) | set(fund_by_symbol)) - set(joint))
    if dropped:
        log.warning("dropping %d symbols present in only one dataset: %s%s",
                    len(dropped), dropped[:10], "..." if len(dropped) > 10 else "")
    if not joint:
        raise DataError("no symbols present in both datasets")

    if ratio_names is None:
        width = len(fundamentals_rows[0].ratios) if fundamentals_rows else 0
        ratio_names = [f"ratio_{i + 1:02d}" for i in range(width)]

    daily: dict[str, DailyFrame] = {}
    annual: dict[str, AnnualFrame] = {}
    for symbol in joint:
        rows = sorted(by_symbol[symbol], key=lambda r: r.date)
        dates = [r.date for r in rows]
        dupes = {a for a, b in zip(dates, dates[1:]) if a == b}
        if dupes:
            raise DataError(f"{symbol}: duplicate dates {sorted(dupes)[:5]}")
        _check_price_invariants(symbol, rows)
        columns = {
            name: _column_array([getattr(r, name) for r in rows])
            for name in PRICE_COLUMNS
        }
        daily[symbol] = DailyFrame(symbol, dates, columns)

        frows = sorted(fund_by_symbol[symbol], key=lambda r: r.fiscal_year)
        years = [r.fiscal_year for r in frows]
        matrix = np.array(
            [[np.nan if v is None else v for v in r.ratios] for r in frows],
            dtype=np.float64,
        ).reshape(len(frows), len(ratio_names))
        annual[symbol] = AnnualFrame(symbol, years, matrix, list(ratio_names))
    return daily, annual


def _format_cell(value: float) -> str:
    return "" if np.isnan(value) else repr(float(value))


def write_daily_frame(frame: DailyFrame, path) -> None:
    """Serialize a DailyFrame so that re-parsing is bit-exact for finite cells."""
    names = frame.column_names()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "symbol"] + names)
        for i, date in enumerate(frame.dates):
            writer.writerow(
                [date.isoformat(), frame.symbol]
                + [_format_cell(frame.columns[name][i]) for name in names]
            )


def read_daily_frame(path) -> DailyFrame:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        names = header[2:]
        dates, symbol, values = [], None, [[] for _ in names]
        for record in reader:
            dates.append(dt.date.fromisoformat(record[0]))
            symbol = record[1]
            for j, cell in enumerate(record[2:]):
                values[j].append(_parse_cell(cell))
    if symbol is None:
        raise DataError(f"{path}: empty frame file")
    columns = {name: _column_array(vals) for name, vals in zip(names, values)}
    return DailyFrame(symbol, dates, columns)


def write_annual_frame(frame: AnnualFrame, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["year", "symbol"] + frame.ratio_names)
        for i, year in enumerate(frame.years):
            writer.writerow(
                [year, frame.symbol]
                + [_format_cell(frame.matrix[i, j]) for j in range(frame.matrix.shape[1])]
            )


def read_annual_frame(path) -> AnnualFrame:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        names = header[2:]
        years, symbol, rows = [], None, []
        for record in reader:
            years.append(int(record[0]))
            symbol = record[1]
            rows.append([np.nan if (v := _parse_cell(c)) is None else v
                         for c in record[2:]])
    if symbol is None:
        raise DataError(f"{path}: empty frame file")
    matrix = np.array(rows, dtype=np.float64).reshape(len(years), len(names))
    return AnnualFrame(symbol, years, matrix, names)

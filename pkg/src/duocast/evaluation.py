"""RMSE evaluation, variant comparison reports and forecast plot data.

The comparison mirrors the reference table's four rows: the daily-feature
LSTM, the annual-feature LSTM, the serial ensemble, and a dense-network
baseline, all evaluated on identical test windows. Published RMSE figures are
carried purely as annotations; they came from a different data snapshot with
unstated seeds and epochs, so they are not pass/fail targets.
"""
from __future__ import annotations

import csv
import datetime as dt
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ensemble import (DAILY_FEATURES, ENSEMBLE_FEATURES, TARGET_COLUMN,
                       AlignmentRule, EnsembleConfig, EnsembleModel,
                       attach_annual_targets, build_symbol_windows,
                       covered_rows, inject_feature, train_learner1)
from .errors import DataError
from .ingest import AnnualFrame, DailyFrame
from .lstm import LstmParams, lstm_train, predict_batch
from .nn import MlpModel, MlpTrainConfig, mlp_forward, mlp_train
from .preprocess import (NormStats, SplitSpec, WindowedDataset,
                         apply_normalize, combine_windows, make_windows)
from . import plotting

log = logging.getLogger(__name__)

# published reference RMSE values, annotation only
PAPER_RMSE = {
    "daily_lstm": 0.0124,
    "annual_lstm": 0.08,
    "ensemble_lstm": 0.0119,
    "mlp": 0.07,
}
PAPER_NOTES = {
    "mlp": "also reported as 0.067 in the running text",
    "mlp_trainer": "reference baseline was Levenberg-Marquardt trained; "
                   "this baseline uses first-order gradient descent",
}
DISPLAY_NAMES = {
    "daily_lstm": "LSTM (daily)",
    "annual_lstm": "LSTM (annual)",
    "ensemble_lstm": "Ensemble LSTM",
    "mlp": "MLP baseline",
}
VARIANT_ORDER = ("daily_lstm", "annual_lstm", "ensemble_lstm", "mlp")


def rmse(pred: np.ndarray, actual: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if pred.shape != actual.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {actual.shape}")
    if pred.size == 0:
        raise ValueError("empty vectors")
    diff = pred - actual
    return float(np.sqrt(np.mean(diff * diff)))


# ---------------------------------------------------------------------------
# single-frequency model bundles (save/load and forecast support)

@dataclass
class DailyLstmModel:
    """Standalone daily-feature LSTM with its per-symbol normalization."""

    params: LstmParams
    stats: dict[str, NormStats]
    feature_names: list[str]
    window_length: int

    def prepare_frame(self, daily: DailyFrame) -> DailyFrame:
        if daily.symbol not in self.stats:
            raise DataError(f"symbol {daily.symbol!r} not in model")
        return apply_normalize(daily, self.stats[daily.symbol])

    def predict_normalized(self, symbol: str, windows: np.ndarray) -> np.ndarray:
        if symbol not in self.stats:
            raise DataError(f"symbol {symbol!r} not in model")
        return predict_batch(self.params, windows)

    @property
    def daily_stats(self) -> dict[str, NormStats]:
        return self.stats

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "stats": {s: st.to_dict() for s, st in self.stats.items()},
            "feature_names": list(self.feature_names),
            "window_length": self.window_length,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DailyLstmModel":
        return cls(
            params=LstmParams.from_dict(doc["params"]),
            stats={s: NormStats.from_dict(d) for s, d in doc["stats"].items()},
            feature_names=list(doc["feature_names"]),
            window_length=int(doc["window_length"]),
        )


@dataclass
class AnnualLstmModel:
    """Standalone annual learner: predictions broadcast by fiscal year."""

    params: LstmParams
    table: dict[tuple[str, int], float]
    annual_stats: dict[str, NormStats]
    alignment: AlignmentRule

    def predict_currency(self, symbol: str, date: dt.date) -> float:
        key = (symbol, self.alignment.year_for(date))
        if key not in self.table:
            raise DataError(f"no annual prediction for {key}")
        stats = self.annual_stats[symbol]
        j = stats.index(TARGET_COLUMN)
        return float(self.table[key] * stats.std[j] + stats.mean[j])

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "table": [[s, y, v] for (s, y), v in sorted(self.table.items())],
            "annual_stats": {s: st.to_dict()
                             for s, st in self.annual_stats.items()},
            "alignment": self.alignment.mode,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AnnualLstmModel":
        return cls(
            params=LstmParams.from_dict(doc["params"]),
            table={(s, int(y)): float(v) for s, y, v in doc["table"]},
            annual_stats={s: NormStats.from_dict(d)
                          for s, d in doc["annual_stats"].items()},
            alignment=AlignmentRule(doc["alignment"]),
        )


@dataclass
class MlpBundle:
    """Dense baseline over flattened daily windows."""

    model: MlpModel
    stats: dict[str, NormStats]
    feature_names: list[str]
    window_length: int

    def prepare_frame(self, daily: DailyFrame) -> DailyFrame:
        if daily.symbol not in self.stats:
            raise DataError(f"symbol {daily.symbol!r} not in model")
        return apply_normalize(daily, self.stats[daily.symbol])

    def predict_normalized(self, symbol: str, windows: np.ndarray) -> np.ndarray:
        if symbol not in self.stats:
            raise DataError(f"symbol {symbol!r} not in model")
        return mlp_forward(self.model, windows.reshape(len(windows), -1))

    @property
    def daily_stats(self) -> dict[str, NormStats]:
        return self.stats

    def to_dict(self) -> dict:
        return {
            "w1": self.model.w1.ravel().tolist(),
            "b1": self.model.b1.tolist(),
            "w2": self.model.w2.tolist(),
            "b2": self.model.b2.tolist(),
            "hidden": self.model.hidden_size,
            "input_size": self.model.input_size,
            "stats": {s: st.to_dict() for s, st in self.stats.items()},
            "feature_names": list(self.feature_names),
            "window_length": self.window_length,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MlpBundle":
        h, d = int(doc["hidden"]), int(doc["input_size"])
        model = MlpModel(
            w1=np.asarray(doc["w1"], dtype=np.float64).reshape(h, d),
            b1=np.asarray(doc["b1"], dtype=np.float64),
            w2=np.asarray(doc["w2"], dtype=np.float64),
            b2=np.asarray(doc["b2"], dtype=np.float64),
        )
        return cls(
            model=model,
            stats={s: NormStats.from_dict(d_)
                   for s, d_ in doc["stats"].items()},
            feature_names=list(doc["feature_names"]),
            window_length=int(doc["window_length"]),
        )


# ---------------------------------------------------------------------------
# variant comparison

@dataclass
class VariantResult:
    name: str
    status: str = "ok"
    error: str | None = None
    rmse_norm_pooled: float | None = None
    rmse_norm_symbol_mean: float | None = None
    rmse_currency_pooled: float | None = None
    rmse_currency_symbol_mean: float | None = None
    paper_rmse: float | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "display_name": DISPLAY_NAMES.get(self.name, self.name),
            "status": self.status,
            "error": self.error,
            "rmse_norm_pooled": self.rmse_norm_pooled,
            "rmse_norm_symbol_mean": self.rmse_norm_symbol_mean,
            "rmse_currency_pooled": self.rmse_currency_pooled,
            "rmse_currency_symbol_mean": self.rmse_currency_symbol_mean,
            "paper_rmse": self.paper_rmse,
        }


@dataclass
class EvalReport:
    variants: list[VariantResult]
    naive_rmse_norm: float
    naive_rmse_currency: float
    seed: int
    config_fingerprint: str
    n_test_windows: int
    n_symbols: int
    symbols: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def variant(self, name: str) -> VariantResult:
        for v in self.variants:
            if v.name == name:
                return v
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "variants": [v.to_dict() for v in self.variants],
            "naive_rmse_norm": self.naive_rmse_norm,
            "naive_rmse_currency": self.naive_rmse_currency,
            "seed": self.seed,
            "config_fingerprint": self.config_fingerprint,
            "n_test_windows": self.n_test_windows,
            "n_symbols": self.n_symbols,
            "symbols": list(self.symbols),
            "notes": list(self.notes),
            "paper_rmse_annotations": dict(PAPER_RMSE),
        }

    def to_text(self) -> str:
        def fmt(x):
            return "-" if x is None else f"{x:.6f}"

        lines = [
            "RMSE comparison on the test split",
            f"seed={self.seed}  config={self.config_fingerprint}  "
            f"test_windows={self.n_test_windows}  symbols={self.n_symbols}",
            "",
            f"{'variant':<16}{'status':<9}{'rmse(norm)':<13}"
            f"{'rmse(norm,sym)':<16}{'rmse(ccy)':<13}{'paper rmse':<11}",
        ]
        for v in self.variants:
            paper = "-" if v.paper_rmse is None else f"{v.paper_rmse:g}"
            lines.append(
                f"{DISPLAY_NAMES.get(v.name, v.name):<16}{v.status:<9}"
                f"{fmt(v.rmse_norm_pooled):<13}"
                f"{fmt(v.rmse_norm_symbol_mean):<16}"
                f"{fmt(v.rmse_currency_pooled):<13}{paper:<11}"
            )
        lines += [
            f"{'naive last-value':<16}{'ok':<9}{fmt(self.naive_rmse_norm):<13}"
            f"{'-':<16}{fmt(self.naive_rmse_currency):<13}{'-':<11}",
            "",
            "paper RMSE values are annotations from the source experiments, "
            "not pass/fail targets",
        ]
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines) + "\n"


@dataclass
class EvalConfig:
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    mlp: MlpTrainConfig = field(default_factory=MlpTrainConfig)
    seed: int = 0
    fingerprint: str = ""


def _window_metrics(preds_norm: np.ndarray, ds: WindowedDataset,
                    close_stats: dict[str, NormStats]) -> dict[str, float]:
    """Pooled and per-symbol-mean RMSE in normalized and currency units."""
    targets = ds.targets
    symbols = np.asarray(ds.symbols)
    sigma = np.empty(len(ds))
    mu = np.empty(len(ds))
    for symbol in np.unique(symbols):
        stats = close_stats[symbol]
        j = stats.index("close")
        mask = symbols == symbol
        sigma[mask] = stats.std[j]
        mu[mask] = stats.mean[j]
    preds_cur = preds_norm * sigma + mu
    targets_cur = targets * sigma + mu
    by_symbol_norm = [rmse(preds_norm[symbols == s], targets[symbols == s])
                      for s in np.unique(symbols)]
    by_symbol_cur = [rmse(preds_cur[symbols == s], targets_cur[symbols == s])
                     for s in np.unique(symbols)]
    return {
        "rmse_norm_pooled": rmse(preds_norm, targets),
        "rmse_norm_symbol_mean": float(np.mean(by_symbol_norm)),
        "rmse_currency_pooled": rmse(preds_cur, targets_cur),
        "rmse_currency_symbol_mean": float(np.mean(by_symbol_cur)),
    }


def evaluate_variants(daily_frames: dict[str, DailyFrame],
                      annual_frames: dict[str, AnnualFrame],
                      split: SplitSpec, config: EvalConfig
                      ) -> tuple[EvalReport, dict]:
    """Train and score all four variants on identical test windows.

    Frames must be imputed. Every variant sees the same symbols, the same
    date coverage (days mapped by the annual table) and bit-identical test
    targets; a variant failure marks its row failed and the rest proceed.
    Returns the report plus the trained model bundles keyed by variant name.
    """
    joint = sorted(set(daily_frames) & set(annual_frames))
    if not joint:
        raise DataError("empty joint symbol universe")
    rule = config.ensemble.alignment
    window_length = config.ensemble.window_length
    notes = [
        "daily rows are restricted to years covered by the annual table so "
        "all variants share identical test windows",
        PAPER_NOTES["mlp_trainer"],
    ]

    # stage 1 once: the annual learner is both a variant and the
    # ensemble's first stage (identical seed implies identical weights)
    targeted = {s: attach_annual_targets(annual_frames[s], daily_frames[s])
                for s in joint}
    learner1 = train_learner1(targeted, config.ensemble.learner1)

    daily_sets, ens_sets = [], []
    daily_test, ens_test = [], []
    daily_stats: dict[str, NormStats] = {}
    ens_stats: dict[str, NormStats] = {}
    kept: list[str] = []
    for symbol in joint:
        try:
            covered = covered_rows(daily_frames[symbol], learner1.table, rule)
            wtr, wte, stats = build_symbol_windows(
                covered, split, list(DAILY_FEATURES), window_length)
        except DataError as exc:
            log.warning("%s excluded from evaluation: %s", symbol, exc)
            continue
        injected = inject_feature(covered, learner1.table, rule)
        etr, ete, estats = build_symbol_windows(
            injected, split, list(ENSEMBLE_FEATURES), window_length)
        daily_sets.append(wtr)
        daily_test.append(wte)
        ens_sets.append(etr)
        ens_test.append(ete)
        daily_stats[symbol] = stats
        ens_stats[symbol] = estats
        kept.append(symbol)
    if not kept:
        raise DataError("no symbol has enough rows for evaluation windows")

    train_daily = combine_windows(daily_sets)
    test_daily = combine_windows(daily_test)
    train_ens = combine_windows(ens_sets)
    test_ens = combine_windows(ens_test)
    if not np.array_equal(test_daily.targets, test_ens.targets):
        raise AssertionError("variants disagree on test targets")

    close_idx = list(DAILY_FEATURES).index("close")
    naive_preds = test_daily.inputs[:, -1, close_idx]
    naive = _window_metrics(naive_preds, test_daily, daily_stats)

    results: dict[str, VariantResult] = {
        name: VariantResult(name=name, paper_rmse=PAPER_RMSE.get(name))
        for name in VARIANT_ORDER
    }
    models: dict[str, object] = {}

    def run(name, fn):
        try:
            fn()
        except Exception as exc:  # a failed variant must not sink the others
            log.error("variant %s failed: %s", name, exc)
            results[name].status = "failed"
            results[name].error = str(exc)

    def run_daily():
        params, _ = lstm_train(train_daily, config.ensemble.learner2)
        preds = predict_batch(params, test_daily.inputs)
        results["daily_lstm"].__dict__.update(
            _window_metrics(preds, test_daily, daily_stats))
        models["daily_lstm"] = DailyLstmModel(
            params, dict(daily_stats), list(DAILY_FEATURES), window_length)

    def run_annual():
        annual_model = AnnualLstmModel(learner1.params, learner1.table,
                                       learner1.stats, rule)
        preds = np.empty(len(test_daily))
        for k, (symbol, date) in enumerate(zip(test_daily.symbols,
                                               test_daily.target_dates)):
            currency = annual_model.predict_currency(symbol, date)
            stats = daily_stats[symbol]
            j = stats.index("close")
            sigma = stats.std[j]
            preds[k] = 0.0 if sigma == 0 else (currency - stats.mean[j]) / sigma
        results["annual_lstm"].__dict__.update(
            _window_metrics(preds, test_daily, daily_stats))
        models["annual_lstm"] = annual_model

    def run_ensemble():
        params, _ = lstm_train(train_ens, config.ensemble.learner2)
        preds = predict_batch(params, test_ens.inputs)
        results["ensemble_lstm"].__dict__.update(
            _window_metrics(preds, test_ens, daily_stats))
        models["ensemble_lstm"] = EnsembleModel(
            learner1=learner1.params,
            learner2=params,
            table=learner1.table,
            feature_names=list(ENSEMBLE_FEATURES),
            daily_stats=dict(ens_stats),
            annual_stats=learner1.stats,
            window_length=window_length,
            alignment=rule,
        )

    def run_mlp():
        model, _ = mlp_train(train_daily.flat_inputs(), train_daily.targets,
                             config.mlp)
        preds = mlp_forward(model, test_daily.flat_inputs())
        results["mlp"].__dict__.update(
            _window_metrics(preds, test_daily, daily_stats))
        models["mlp"] = MlpBundle(model, dict(daily_stats),
                                  list(DAILY_FEATURES), window_length)

    run("daily_lstm", run_daily)
    run("annual_lstm", run_annual)
    run("ensemble_lstm", run_ensemble)
    run("mlp", run_mlp)

    report = EvalReport(
        variants=[results[name] for name in VARIANT_ORDER],
        naive_rmse_norm=naive["rmse_norm_pooled"],
        naive_rmse_currency=naive["rmse_currency_pooled"],
        seed=config.seed,
        config_fingerprint=config.fingerprint,
        n_test_windows=len(test_daily),
        n_symbols=len(kept),
        symbols=kept,
        notes=notes,
    )
    return report, models


# ---------------------------------------------------------------------------
# forecast series

@dataclass
class ForecastSeries:
    symbol: str
    dates: list[dt.date]
    actual: np.ndarray     # currency units
    predicted: np.ndarray  # currency units

    def __post_init__(self):
        if not (len(self.dates) == len(self.actual) == len(self.predicted)):
            raise DataError("forecast series lengths disagree")


def forecast_series(model, frame: DailyFrame) -> ForecastSeries:
    """One-step-ahead walk over a raw (unnormalized) frame.

    Inputs are always actual observed history, never model outputs. A frame
    with N rows and window length T yields N - T prediction points.
    """
    t_len = model.window_length
    if len(frame) < t_len + 1:
        raise DataError(f"{frame.symbol}: need at least {t_len + 1} rows, "
                        f"got {len(frame)}")
    prepared = model.prepare_frame(frame)
    stats = model.daily_stats[frame.symbol]
    windows = make_windows(prepared, list(model.feature_names), t_len, stats)
    preds_norm = model.predict_normalized(frame.symbol, windows.inputs)
    j = stats.index("close")
    predicted = preds_norm * stats.std[j] + stats.mean[j]
    actual = frame.columns["close"][t_len:].copy()
    return ForecastSeries(symbol=frame.symbol, dates=windows.target_dates,
                          actual=actual, predicted=predicted)


def emit_plot_data(series: ForecastSeries, base_path) -> tuple[Path, Path]:
    """Write `<base>.csv` (date,actual,predicted) and `<base>.svg`."""
    base = Path(base_path)
    csv_path = base.with_suffix(".csv")
    svg_path = base.with_suffix(".svg")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "actual", "predicted"])
        for date, act, pred in zip(series.dates, series.actual,
                                   series.predicted):
            writer.writerow([date.isoformat(), repr(float(act)),
                             repr(float(pred))])
    plotting.render_forecast(series.dates, series.actual, series.predicted,
                             series.symbol, svg_path)
    return csv_path, svg_path


def read_forecast_csv(path) -> ForecastSeries:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        dates, actual, predicted = [], [], []
        for record in reader:
            dates.append(dt.date.fromisoformat(record[0]))
            actual.append(float(record[1]))
            predicted.append(float(record[2]))
    symbol = Path(path).stem.replace("forecast_", "")
    return ForecastSeries(symbol=symbol, dates=dates,
                          actual=np.asarray(actual),
                          predicted=np.asarray(predicted))


def write_report(report: EvalReport, out_dir) -> None:
    """Emit report.json, report.txt and the variant comparison figure."""
    import json

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2,
                                                sort_keys=True))
    (out / "report.txt").write_text(report.to_text())
    ok = [v for v in report.variants if v.status == "ok"]
    if ok:
        plotting.render_rmse_bars(
            [DISPLAY_NAMES.get(v.name, v.name) for v in ok],
            [v.rmse_norm_pooled for v in ok],
            out / "rmse_comparison.svg",
        )

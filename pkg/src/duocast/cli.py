"""Command-line entry point wiring config, pipeline stages and reporting.

Subcommands: prepare, train, predict, evaluate, gradcheck. All randomness
derives from the config seed, so any command re-run with the same config
writes identical bytes. Log verbosity comes from the DUOCAST_LOG environment
variable (debug|info|warning|error).
"""
from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import evaluation
from .config import RunConfig, load_config
from .ensemble import (DAILY_FEATURES, AlignmentRule, EnsembleModel,
                       attach_annual_targets, build_symbol_windows,
                       covered_rows, predict_next_close, train_ensemble,
                       train_learner1)
from .errors import ConfigError, DataError
from .indicators import add_indicators
from .ingest import (AnnualFrame, DailyFrame, assemble_frames, parse_fundamentals,
                     parse_prices, read_annual_frame, read_daily_frame,
                     write_annual_frame, write_daily_frame)
from .lstm import backward_batch, forward_batch, init_lstm, lstm_train
from .nn import (derive_rng, grad_check, init_mlp, mlp_loss_grads, mlp_train,
                 mse_loss)
from .persist import load_model, save_model
from .preprocess import combine_windows, impute, split_by_date
from .synthetic import write_synthetic_csvs

log = logging.getLogger(__name__)

PAPER_EXPECTED_ROWS = {"train": 1408, "test": 352}
VARIANT_KINDS = {
    "ensemble": "ensemble",
    "daily": "daily_lstm",
    "annual": "annual_lstm",
    "mlp": "mlp",
}


def _prepared_dir(cfg: RunConfig) -> Path:
    return Path(cfg.out_dir) / "prepared"


def _models_dir(cfg: RunConfig) -> Path:
    return Path(cfg.out_dir) / "models"


def _restrict_years(frame: AnnualFrame, lo: int, hi: int) -> AnnualFrame:
    keep = [i for i, y in enumerate(frame.years) if lo <= y <= hi]
    return AnnualFrame(frame.symbol, [frame.years[i] for i in keep],
                       frame.matrix[keep].copy(), list(frame.ratio_names))


# ---------------------------------------------------------------------------
# prepare

def cmd_prepare(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.synthetic:
        prices_path, fundamentals_path = write_synthetic_csvs(
            out / "synthetic", n_symbols=cfg.synthetic_symbols,
            start_year=cfg.synthetic_start_year, n_years=cfg.synthetic_years,
            seed=cfg.seed, noise=cfg.synthetic_noise,
            band=cfg.synthetic_band, ratio_names=list(cfg.ratio_names))
        cfg.prices_csv = str(prices_path)
        cfg.fundamentals_csv = str(fundamentals_path)
        print(f"generated synthetic data under {out / 'synthetic'}")

    with open(cfg.prices_csv, "rb") as fh:
        price_rows = parse_prices(fh, cfg.price_columns, cfg.date_format)
    with open(cfg.fundamentals_csv, "rb") as fh:
        fundamentals_rows = parse_fundamentals(
            fh, list(cfg.ratio_names), cfg.fundamentals_columns,
            cfg.date_format)
    daily, annual = assemble_frames(price_rows, fundamentals_rows,
                                    list(cfg.ratio_names))
    dropped = sorted(({r.symbol for r in price_rows}
                      | {r.symbol for r in fundamentals_rows}) - set(daily))

    annual = {s: _restrict_years(f, cfg.annual_start_year, cfg.annual_end_year)
              for s, f in annual.items()}
    annual = {s: f for s, f in annual.items() if len(f) > 0}

    # missing-data share per column before imputation
    missing: dict[str, float] = {}
    for name in DAILY_FEATURES[:5]:
        cells = np.concatenate([f.columns[name] for f in daily.values()])
        missing[name] = float(np.mean(np.isnan(cells)))
    annual_cells = np.concatenate([f.matrix.ravel() for f in annual.values()]) \
        if annual else np.empty(0)
    missing["annual_ratios"] = float(np.mean(np.isnan(annual_cells))) \
        if annual_cells.size else 0.0

    split = cfg.split()
    params = cfg.indicator_params()
    prepared = _prepared_dir(cfg)
    (prepared / "daily").mkdir(parents=True, exist_ok=True)
    (prepared / "annual").mkdir(parents=True, exist_ok=True)

    rows_per_symbol = {}
    for symbol in sorted(daily):
        frame = add_indicators(daily[symbol], params)
        frame = impute(frame, cfg.impute_strategy, fit_end=split.train_end)
        write_daily_frame(frame, prepared / "daily" / f"{symbol}.csv")
        counts = {"total": len(frame), "train": 0, "test": 0}
        for d in frame.dates:
            if split.train_start <= d <= split.train_end:
                counts["train"] += 1
            elif split.test_start <= d <= split.test_end:
                counts["test"] += 1
        rows_per_symbol[symbol] = counts
    for symbol in sorted(annual):
        frame = impute(annual[symbol], cfg.impute_strategy)
        write_annual_frame(frame, prepared / "annual" / f"{symbol}.csv")

    deviations = {
        s: c for s, c in rows_per_symbol.items()
        if (c["train"], c["test"]) != (PAPER_EXPECTED_ROWS["train"],
                                       PAPER_EXPECTED_ROWS["test"])
    }
    summary = {
        "n_symbols": len(daily),
        "symbols": sorted(daily),
        "dropped_symbols": dropped,
        "rows_per_symbol": rows_per_symbol,
        "missing_share_before_impute": missing,
        "paper_expected_rows": PAPER_EXPECTED_ROWS,
        "split_deviation_note": (
            "informational: published row counts are "
            f"{PAPER_EXPECTED_ROWS['train']}/{PAPER_EXPECTED_ROWS['test']} "
            f"per full-history symbol; {len(deviations)} of "
            f"{len(rows_per_symbol)} symbols differ here"
        ),
        "window_length": cfg.window_length,
    }
    (prepared / "summary.json").write_text(json.dumps(summary, indent=2,
                                                      sort_keys=True))
    cfg.echo(cfg.out_dir)
    train_total = sum(c["train"] for c in rows_per_symbol.values())
    test_total = sum(c["test"] for c in rows_per_symbol.values())
    print(f"prepared {len(daily)} symbols ({len(dropped)} dropped); "
          f"{train_total} train rows, {test_total} test rows")
    print(f"missing shares before impute: "
          + ", ".join(f"{k}={v:.2%}" for k, v in missing.items()))
    return 0


def _read_prepared(cfg: RunConfig
                   ) -> tuple[dict[str, DailyFrame], dict[str, AnnualFrame]]:
    prepared = _prepared_dir(cfg)
    if not prepared.exists():
        raise DataError(f"no prepared data under {prepared}; run `prepare` first")
    daily, annual = {}, {}
    for path in sorted((prepared / "daily").glob("*.csv")):
        frame = read_daily_frame(path)
        daily[frame.symbol] = frame
    for path in sorted((prepared / "annual").glob("*.csv")):
        frame = read_annual_frame(path)
        annual[frame.symbol] = frame
    if not daily:
        raise DataError(f"no prepared daily frames under {prepared}")
    return daily, annual


# ---------------------------------------------------------------------------
# train

def cmd_train(cfg: RunConfig, variant: str) -> int:
    daily, annual = _read_prepared(cfg)
    split = cfg.split()
    models_dir = _models_dir(cfg)
    models_dir.mkdir(parents=True, exist_ok=True)
    path = models_dir / f"{variant}.json"

    if variant == "ensemble":
        model = train_ensemble(daily, annual, split, cfg.ensemble_config())
        save_model(path, "ensemble", model.to_dict())
    elif variant == "annual":
        targeted = {s: attach_annual_targets(annual[s], daily[s])
                    for s in sorted(set(daily) & set(annual))}
        learner1 = train_learner1(targeted,
                                  cfg.ensemble_config().learner1)
        bundle = evaluation.AnnualLstmModel(
            learner1.params, learner1.table, learner1.stats,
            AlignmentRule(cfg.alignment))
        save_model(path, "annual_lstm", bundle.to_dict())
    elif variant in ("daily", "mlp"):
        window_sets, stats_map = [], {}
        for symbol in sorted(daily):
            try:
                wtr, _, stats = build_symbol_windows(
                    daily[symbol], split, list(DAILY_FEATURES),
                    cfg.window_length)
            except DataError as exc:
                log.warning("%s excluded: %s", symbol, exc)
                continue
            window_sets.append(wtr)
            stats_map[symbol] = stats
        if not window_sets:
            raise DataError("no symbol has enough rows for training windows")
        pooled = combine_windows(window_sets)
        if variant == "daily":
            params, _ = lstm_train(pooled, cfg.ensemble_config().learner2)
            bundle = evaluation.DailyLstmModel(
                params, stats_map, list(DAILY_FEATURES), cfg.window_length)
            save_model(path, "daily_lstm", bundle.to_dict())
        else:
            model, _ = mlp_train(pooled.flat_inputs(), pooled.targets,
                                 cfg.mlp_config())
            bundle = evaluation.MlpBundle(model, stats_map,
                                          list(DAILY_FEATURES),
                                          cfg.window_length)
            save_model(path, "mlp", bundle.to_dict())
    else:
        raise ConfigError(f"variant: unknown value {variant!r}")
    cfg.echo(cfg.out_dir)
    print(f"saved {variant} model to {path}")
    return 0


# ---------------------------------------------------------------------------
# predict

def _tail_frame(frame: DailyFrame, as_of: dt.date, length: int) -> DailyFrame:
    mask = np.array([d <= as_of for d in frame.dates], dtype=bool)
    if mask.sum() < length:
        raise DataError(f"{frame.symbol}: only {int(mask.sum())} rows on or "
                        f"before {as_of}, need {length}")
    idx = np.flatnonzero(mask)[-length:]
    keep = np.zeros(len(frame), dtype=bool)
    keep[idx] = True
    return frame.select_rows(keep)


def _predict_window_model(model, frame: DailyFrame, as_of: dt.date) -> float:
    tail = _tail_frame(frame, as_of, model.window_length)
    prepared = model.prepare_frame(tail)
    window = np.column_stack(
        [prepared.columns[name] for name in model.feature_names])
    pred = model.predict_normalized(frame.symbol, window[None, :, :])[0]
    stats = model.daily_stats[frame.symbol]
    j = stats.index("close")
    return float(pred * stats.std[j] + stats.mean[j])


def cmd_predict(cfg: RunConfig, variant: str, symbol: str, date_text: str) -> int:
    try:
        as_of = dt.date.fromisoformat(date_text)
    except ValueError:
        raise ConfigError(f"date: not an ISO date ({date_text!r})") from None
    kind = VARIANT_KINDS[variant]
    path = _models_dir(cfg) / f"{variant}.json"
    _, payload = load_model(path, expected_kind=kind)

    daily_path = _prepared_dir(cfg) / "daily" / f"{symbol}.csv"
    if not daily_path.exists():
        raise DataError(f"symbol {symbol!r} has no prepared data "
                        f"({daily_path} missing)")
    frame = read_daily_frame(daily_path)

    if variant == "ensemble":
        model = EnsembleModel.from_dict(payload)
        tail = _tail_frame(frame, as_of, model.window_length)
        price = predict_next_close(model, symbol, tail)
    elif variant == "daily":
        price = _predict_window_model(
            evaluation.DailyLstmModel.from_dict(payload), frame, as_of)
    elif variant == "mlp":
        price = _predict_window_model(
            evaluation.MlpBundle.from_dict(payload), frame, as_of)
    else:
        model = evaluation.AnnualLstmModel.from_dict(payload)
        price = model.predict_currency(symbol, as_of)
    print(f"{symbol} {as_of.isoformat()} -> predicted next close {price:.6f}")
    return 0


# ---------------------------------------------------------------------------
# evaluate

def cmd_evaluate(cfg: RunConfig) -> int:
    daily, annual = _read_prepared(cfg)
    split = cfg.split()
    eval_config = evaluation.EvalConfig(
        ensemble=cfg.ensemble_config(), mlp=cfg.mlp_config(),
        seed=cfg.seed, fingerprint=cfg.fingerprint())
    report, models = evaluation.evaluate_variants(daily, annual, split,
                                                  eval_config)
    report_dir = Path(cfg.out_dir) / "report"
    evaluation.write_report(report, report_dir)

    forecast_model = models.get("ensemble_lstm") or models.get("daily_lstm")
    emitted = 0
    if forecast_model is not None:
        rule = cfg.ensemble_config().alignment
        table = getattr(forecast_model, "table", None)
        for symbol in report.symbols[:cfg.max_forecast_plots]:
            frame = daily[symbol]
            if table is not None:
                frame = covered_rows(frame, table, rule)
            _, test_frame = split_by_date(frame, split)
            series = evaluation.forecast_series(forecast_model, test_frame)
            evaluation.emit_plot_data(series,
                                      report_dir / f"forecast_{symbol}")
            emitted += 1
    cfg.echo(cfg.out_dir)
    print(report.to_text())
    print(f"report written to {report_dir} ({emitted} forecast series)")
    failed = [v.name for v in report.variants if v.status != "ok"]
    if failed:
        print(f"failed variants: {failed}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# gradcheck

def cmd_gradcheck(seed: int = 0, threshold: float = 1e-4) -> int:
    rng = derive_rng(seed, stream=2)
    worst_lstm = 0.0
    for _ in range(10):
        f_size = int(rng.integers(1, 6))
        hidden = int(rng.integers(1, 9))
        t_len = int(rng.integers(1, 11))
        params = init_lstm(f_size, hidden, rng)
        x = rng.normal(size=(4, t_len, f_size))
        y = rng.normal(size=4)

        def f(_arrs, params=params, x=x, y=y):
            preds, cache = forward_batch(params, x)
            loss, dpred = mse_loss(preds, y)
            return loss, backward_batch(params, cache, dpred)

        worst_lstm = max(worst_lstm, grad_check(f, params.param_dict()))
    worst_mlp = 0.0
    for _ in range(10):
        d = int(rng.integers(1, 9))
        hidden = int(rng.integers(1, 7))
        model = init_mlp(d, hidden, rng)
        x = rng.normal(size=(5, d))
        y = rng.normal(size=5)

        def f(_arrs, model=model, x=x, y=y):
            return mlp_loss_grads(model, x, y)

        worst_mlp = max(worst_mlp, grad_check(f, model.param_dict()))
    print(f"max relative error: lstm={worst_lstm:.3e} mlp={worst_mlp:.3e} "
          f"(threshold {threshold:g})")
    ok = worst_lstm < threshold and worst_mlp < threshold
    print("gradcheck PASS" if ok else "gradcheck FAIL")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="duocast",
        description="Two-frequency LSTM ensemble for next-day close forecasting",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="path to a JSON config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--synthetic", action="store_const", const=True,
                       help="use the built-in generated fixture dataset")

    p = sub.add_parser("prepare", help="ingest, clean and split the datasets")
    common(p)

    p = sub.add_parser("train", help="train one model variant")
    common(p)
    p.add_argument("--variant", choices=sorted(VARIANT_KINDS),
                   default="ensemble")

    p = sub.add_parser("predict", help="predict the next close for a symbol")
    common(p)
    p.add_argument("--variant", choices=sorted(VARIANT_KINDS),
                   default="ensemble")
    p.add_argument("--symbol", required=True)
    p.add_argument("--date", required=True,
                   help="as-of date (ISO); the window ends here")

    p = sub.add_parser("evaluate", help="train and compare all four variants")
    common(p)

    p = sub.add_parser("gradcheck",
                       help="verify analytic gradients by finite differences")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _load(args) -> RunConfig:
    overrides = {
        "seed": getattr(args, "seed", None),
        "out_dir": getattr(args, "out", None),
        "synthetic": getattr(args, "synthetic", None),
    }
    return load_config(getattr(args, "config", None), overrides)


def main(argv=None) -> int:
    level = os.environ.get("DUOCAST_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gradcheck":
            return cmd_gradcheck(seed=args.seed)
        cfg = _load(args)
        if args.command == "prepare":
            return cmd_prepare(cfg)
        if args.command == "train":
            return cmd_train(cfg, args.variant)
        if args.command == "predict":
            return cmd_predict(cfg, args.variant, args.symbol, args.date)
        if args.command == "evaluate":
            return cmd_evaluate(cfg)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, DataError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

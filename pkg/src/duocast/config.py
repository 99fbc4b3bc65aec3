"""Run configuration: defaults, file loading, flag overrides and validation.

Precedence is flags > config file > defaults. Defaults match the published
experiment where it states them (learning rate 0.005, hidden sizes 20/200/10,
the 2010-2016 split dates); everything it leaves unstated is an explicit,
overridable default here. The `--synthetic` profile shrinks the models so the
full pipeline runs in seconds on generated data.
"""
from __future__ import annotations

import datetime as dt
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .ensemble import AlignmentRule, EnsembleConfig
from .errors import ConfigError
from .indicators import IndicatorParams
from .lstm import LstmTrainConfig
from .nn import MlpTrainConfig, OptimizerConfig
from .preprocess import SplitSpec

KNOWN_RATIOS = ["eps", "roe", "payout_ratio", "dividend_yield", "per", "pbr"]
DEFAULT_RATIO_NAMES = KNOWN_RATIOS + [f"ratio_{i:02d}" for i in range(7, 76)]

SYNTHETIC_PROFILE = {
    "train_start": "2013-01-01",
    "train_end": "2015-12-31",
    "test_start": "2016-01-01",
    "test_end": "2016-12-31",
    "annual_start_year": 2013,
    "annual_end_year": 2016,
    "window_length": 10,
    "epochs": 30,
    "learner1_epochs": 150,
    "batch_size": 64,
    "learning_rate": 0.01,
    "learner1_hidden": 8,
    "learner2_hidden": 16,
    "ratio_names": [f"ratio_{i:02d}" for i in range(1, 76)],
}


@dataclass
class RunConfig:
    # data inputs
    prices_csv: str | None = None
    fundamentals_csv: str | None = None
    price_columns: dict = field(default_factory=dict)
    fundamentals_columns: dict = field(default_factory=dict)
    date_format: str = "iso"
    ratio_names: list = field(default_factory=lambda: list(DEFAULT_RATIO_NAMES))
    # split (the published train/test boundary by default)
    train_start: str = "2010-01-04"
    train_end: str = "2015-08-07"
    test_start: str = "2015-08-08"
    test_end: str = "2016-12-31"
    annual_start_year: int = 2012
    annual_end_year: int = 2016
    # preprocessing
    window_length: int = 22
    impute_strategy: str = "mean"
    macd_fast: int = 12
    macd_slow: int = 26
    signal_period: int = 9
    rsi_period: int = 14
    ema_seed: str = "first"
    warmup: str = "backfill"
    alignment: str = "same_year"
    # training
    optimizer: str = "adam"
    learning_rate: float = 0.005
    epochs: int = 100
    learner1_epochs: int | None = None
    batch_size: int = 32
    learner1_hidden: int = 20
    learner2_hidden: int = 200
    mlp_hidden: int = 10
    gradient_clip_norm: float | None = 5.0
    seed: int = 42
    # outputs
    out_dir: str = "out"
    max_forecast_plots: int = 4
    # synthetic data
    synthetic: bool = False
    synthetic_symbols: int = 20
    synthetic_years: int = 4
    synthetic_start_year: int = 2013
    synthetic_noise: float = 1.0
    synthetic_band: float = 150.0

    # -- validation ---------------------------------------------------------

    def validate(self) -> "RunConfig":
        def check(cond, name, why):
            if not cond:
                raise ConfigError(f"{name}: {why}")

        for name in ("train_start", "train_end", "test_start", "test_end"):
            try:
                dt.date.fromisoformat(getattr(self, name))
            except ValueError:
                raise ConfigError(f"{name}: not an ISO date "
                                  f"({getattr(self, name)!r})") from None
        check(self.date_format in ("iso", "dmy"), "date_format",
              "must be 'iso' or 'dmy'")
        check(self.window_length >= 1, "window_length", "must be >= 1")
        check(self.impute_strategy in ("mean", "regression"), "impute_strategy",
              "must be 'mean' or 'regression'")
        check(self.ema_seed in ("first", "sma"), "ema_seed",
              "must be 'first' or 'sma'")
        check(self.warmup in ("backfill", "drop"), "warmup",
              "must be 'backfill' or 'drop'")
        check(self.alignment in ("same_year", "lagged"), "alignment",
              "must be 'same_year' or 'lagged'")
        check(self.optimizer in ("sgd", "adam"), "optimizer",
              "must be 'sgd' or 'adam'")
        check(self.learning_rate > 0, "learning_rate", "must be positive")
        check(self.epochs >= 1, "epochs", "must be >= 1")
        check(self.learner1_epochs is None or self.learner1_epochs >= 1,
              "learner1_epochs", "must be >= 1 when set")
        check(self.batch_size >= 1, "batch_size", "must be >= 1")
        for name in ("learner1_hidden", "learner2_hidden", "mlp_hidden"):
            check(getattr(self, name) >= 1, name, "must be >= 1")
        for name in ("macd_fast", "macd_slow", "signal_period", "rsi_period"):
            check(getattr(self, name) >= 1, name, "must be >= 1")
        check(self.gradient_clip_norm is None or self.gradient_clip_norm > 0,
              "gradient_clip_norm", "must be positive when set")
        check(self.annual_start_year <= self.annual_end_year,
              "annual_start_year", "must not exceed annual_end_year")
        check(len(self.ratio_names) == len(set(self.ratio_names)),
              "ratio_names", "contains duplicates")
        check(self.max_forecast_plots >= 0, "max_forecast_plots",
              "must be >= 0")
        check(self.synthetic_symbols >= 1, "synthetic_symbols", "must be >= 1")
        check(self.synthetic_years >= 2, "synthetic_years", "must be >= 2")
        try:
            self.split()
        except ValueError as exc:
            raise ConfigError(f"split dates: {exc}") from None
        if not self.synthetic:
            check(self.prices_csv is not None, "prices_csv",
                  "required unless --synthetic is used")
            check(self.fundamentals_csv is not None, "fundamentals_csv",
                  "required unless --synthetic is used")
        return self

    # -- derived objects ----------------------------------------------------

    def split(self) -> SplitSpec:
        return SplitSpec(
            train_start=dt.date.fromisoformat(self.train_start),
            train_end=dt.date.fromisoformat(self.train_end),
            test_start=dt.date.fromisoformat(self.test_start),
            test_end=dt.date.fromisoformat(self.test_end),
        )

    def indicator_params(self) -> IndicatorParams:
        return IndicatorParams(
            macd_fast=self.macd_fast, macd_slow=self.macd_slow,
            signal_period=self.signal_period, rsi_period=self.rsi_period,
            ema_seed=self.ema_seed, warmup=self.warmup,
        )

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(kind=self.optimizer,
                               learning_rate=self.learning_rate,
                               clip_norm=self.gradient_clip_norm)

    def learner_config(self, hidden: int, epochs: int | None = None
                       ) -> LstmTrainConfig:
        return LstmTrainConfig(hidden=hidden,
                               epochs=self.epochs if epochs is None else epochs,
                               batch_size=self.batch_size,
                               optimizer=self.optimizer_config(),
                               seed=self.seed)

    def ensemble_config(self) -> EnsembleConfig:
        return EnsembleConfig(
            learner1=self.learner_config(self.learner1_hidden,
                                         self.learner1_epochs),
            learner2=self.learner_config(self.learner2_hidden),
            window_length=self.window_length,
            alignment=AlignmentRule(self.alignment),
        )

    def mlp_config(self) -> MlpTrainConfig:
        return MlpTrainConfig(hidden=self.mlp_hidden, epochs=self.epochs,
                              batch_size=self.batch_size,
                              optimizer=self.optimizer_config(),
                              seed=self.seed)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def fingerprint(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:12]

    def echo(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(self.canonical_json())


def _known_fields() -> set[str]:
    return {f.name for f in fields(RunConfig)}


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Merge defaults, an optional JSON config file, and flag overrides."""
    file_values: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            file_values = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {p}: invalid JSON ({exc})") from None
        if not isinstance(file_values, dict):
            raise ConfigError(f"config file {p}: top level must be an object")
    merged = dict(file_values)
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value

    unknown = set(merged) - _known_fields()
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    if merged.get("synthetic"):
        base = dict(SYNTHETIC_PROFILE)
        base.update(merged)
        merged = base
    return RunConfig(**merged).validate()

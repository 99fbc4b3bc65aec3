"""duocast: two-frequency serial LSTM ensemble for next-day close forecasting."""

__version__ = "0.1.0"

from .ensemble import (AlignmentRule, EnsembleConfig, EnsembleModel,
                       inject_feature, predict_next_close, train_ensemble,
                       train_learner1)
from .evaluation import (EvalConfig, EvalReport, ForecastSeries,
                         evaluate_variants, forecast_series, rmse)
from .indicators import ema_series, ema_step, macd_series, rsi_series
from .ingest import (AnnualFrame, DailyFrame, FundamentalsRow, PriceRow,
                     assemble_frames, parse_fundamentals, parse_prices)
from .lstm import (LstmParams, LstmTrainConfig, lstm_backward, lstm_forward,
                   lstm_predict, lstm_train)
from .nn import (MlpModel, MlpTrainConfig, OptimizerConfig, grad_check,
                 mlp_forward, mlp_train, mse_loss, optimizer_step)
from .preprocess import (NormStats, SplitSpec, WindowedDataset, apply_normalize,
                         denormalize, fit_normalize, impute, make_windows,
                         split_by_date)

__all__ = [
    "AlignmentRule", "AnnualFrame", "DailyFrame", "EnsembleConfig",
    "EnsembleModel", "EvalConfig", "EvalReport", "ForecastSeries",
    "FundamentalsRow", "LstmParams", "LstmTrainConfig", "MlpModel",
    "MlpTrainConfig", "NormStats", "OptimizerConfig", "PriceRow", "SplitSpec",
    "WindowedDataset", "apply_normalize", "assemble_frames", "denormalize",
    "ema_series", "ema_step", "evaluate_variants", "fit_normalize",
    "forecast_series", "grad_check", "impute", "inject_feature",
    "lstm_backward", "lstm_forward", "lstm_predict", "lstm_train",
    "macd_series", "make_windows", "mlp_forward", "mlp_train", "mse_loss",
    "optimizer_step", "parse_fundamentals", "parse_prices",
    "predict_next_close", "rmse", "rsi_series", "split_by_date",
    "train_ensemble", "train_learner1",
]

"""Hybrid conditional-quantile estimation and bootstrap inference for GARCH models."""

__version__ = "0.1.0"

from .series import (IngestionError, PricesInput, ReturnSeries, inverse_transform, log_returns,
                     read_csv, transform)
from .garch import (ConstraintViolation, GarchParams, InnovationLaw, ThetaBox, VolatilityPath,
                    next_regressor, regressor_matrix, simulate, simulate_with_volatility,
                    volatility_path)
from .quantreg import QrProblem, QrSolution, SolverError, solve
from .qmle import QmleError, QmleFit
from .qmle import fit as fit_qmle
from .hybrid import HybridFit, QuantileParams, fit_hybrid, forecast_next
from .bootstrap import (BootstrapEnsemble, BootstrapError, WeightLaw, draw_weights, run_ensemble,
                        summarize, theta_star_update)
from .diagnostics import QacfReport, portmanteau_test, qacf, weighted_residuals
from .baselines import caviar_indirect_garch, qgarch_sieve, riskmetrics
from .backtest import BacktestReport, BacktestSpec, backtest, empirical_coverage

__all__ = [
    "__version__", "backtest", "BacktestReport", "BacktestSpec", "BootstrapEnsemble",
    "BootstrapError", "caviar_indirect_garch", "ConstraintViolation", "draw_weights",
    "empirical_coverage", "fit_hybrid", "fit_qmle", "forecast_next", "GarchParams",
    "HybridFit", "IngestionError", "InnovationLaw", "inverse_transform", "log_returns",
    "next_regressor", "portmanteau_test", "PricesInput", "qacf", "QacfReport", "qgarch_sieve",
    "QmleError", "QmleFit", "QrProblem", "QrSolution", "QuantileParams", "read_csv",
    "regressor_matrix", "ReturnSeries", "riskmetrics", "run_ensemble", "simulate",
    "simulate_with_volatility", "solve", "SolverError", "summarize", "theta_star_update",
    "ThetaBox", "transform", "volatility_path", "VolatilityPath", "weighted_residuals",
    "WeightLaw",
]

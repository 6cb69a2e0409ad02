"""Forecasts from ridge, kernel ridge, forests, boosting and neural networks
written as weighted sums of historical target values, with the portfolio
statistics of those weights."""
from ._accel import backend
from .classification import (ClassContributions, DualLogisticModel, dual_logistic_fit,
                             logodds_contributions, nn_class_contributions, rf_class_weights,
                             yield_curve_model)
from .dataset import (RawPanel, StandardizationStats, TimeSeriesDataset, apply_tcode,
                      build_supervised, load_fred_csv, standardize)
from .decomposition import (DualDecomposition, ForecastStats, WeightPanel,
                            cumulative_contribution_view, forecast_concentration,
                            forecast_leverage, forecast_short_position, forecast_stats,
                            forecast_turnover, moving_average_view,
                            overall_historical_importance)
from .kernel_methods import (KernelRidge, KernelSpec, cosine_decomposition, cross_gram, gram,
                             krr_fit, krr_weights)
from .linear_models import (ar_fit, cross_validate_lambda, faar_fit, ols_dual_weights,
                            ridge_fit, ridge_weights)
from .neural import extract_penultimate, nn_dual_weights, nn_fit
from .trees import gbt_axil_weights, gbt_fit, rf_fit, rf_weights, tree_fit

__version__ = "0.1.0"

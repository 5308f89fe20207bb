"""CIR# short-rate calibration: segmentation, ARIMA-driven CIR fitting,
rolling forecasts and CIR analytics."""

from .cir import (CirParams, bond_price, calibrate_group, classify_yield,
                  feller_check, martingale_estimate, milstein_step,
                  simulate_fitted, yield_asymptote, yield_curve)
from .errors import (CirSharpError, ConfigError, DataError, DegenerateError,
                     NumericalError)
from .market_data import RateSeries, ShiftRecord, apply_shift, load_rate_series
from .pipeline import (PipelineConfig, calibrate_series, compare_with_cir,
                       rolling_forecast, run_arima_cir)
from .segmentation import Segmentation, detect_change_points, fixed_partition

__version__ = "0.1.0"

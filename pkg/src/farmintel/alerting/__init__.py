from .band import (DynamicBand, IndicatorSample, build_dynamic_band, check_dynamic, load_bands,
                   save_bands, weighted_percentile)
from .feeder import FeederInterval, check_feeder, smooth_feeder, window_states
from .sink import AlertSink, Delivery, read_log
from .thresholds import Alert, EnvValue, ThresholdConfig, check_forecast, check_static

__all__ = [
    "Alert", "AlertSink", "Delivery", "DynamicBand", "EnvValue", "FeederInterval", "IndicatorSample",
    "ThresholdConfig", "build_dynamic_band", "check_dynamic", "check_feeder", "check_forecast",
    "check_static", "load_bands", "read_log", "save_bands", "smooth_feeder", "weighted_percentile",
    "window_states",
]

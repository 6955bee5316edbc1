"""Pre-training performance forecasting from data complexity measures."""

from .complexity import ComplexityVector, MEASURE_NAMES, compute_all
from .data_io import (ArchDescriptor, DatasetManifest, DatasetTable,
                      PerformanceRecord, load_manifest, load_records)
from .errors import InputError, NumericError
from .forecaster import Forecast, ForecastModel, load_model, save_model

__all__ = [
    "ArchDescriptor",
    "ComplexityVector",
    "DatasetManifest",
    "DatasetTable",
    "Forecast",
    "ForecastModel",
    "InputError",
    "MEASURE_NAMES",
    "NumericError",
    "PerformanceRecord",
    "compute_all",
    "load_manifest",
    "load_model",
    "load_records",
    "save_model",
]

__version__ = "0.1.0"

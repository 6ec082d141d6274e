"""Chlorophyll-a retrieval from six-band sea-surface reflectance.

OC4-style band-ratio baseline, eight regression estimators (OLS, ridge,
CART, bagging, random forest, extra-trees, RBF SVR, k-NN), evaluation and
raster pipeline utilities.
"""
from . import _backend
from .core import (BAND_NAMES, FeatureStats, GeoGrid, GridStack, Sample, SampleTable,
                   TrainTestSplit, flatten_grid_stack, split_train_test, standardize, table_stats)
from .errors import ChlError

__version__ = "0.1.0"

backend_name = _backend.name

__all__ = [
    "BAND_NAMES", "ChlError", "FeatureStats", "GeoGrid", "GridStack", "Sample", "SampleTable",
    "TrainTestSplit", "backend_name", "flatten_grid_stack", "split_train_test", "standardize",
    "table_stats",
]

"""Spatial-temporal graph forecasting with attention over neighbors' lagged states."""

from .analysis import XCorrCurve, case_study, cross_correlation, peak_lag_distribution
from .data import RawDataset, SynthSpec, generate, load_series_csv, save_series_csv
from .errors import (
    ConfigError,
    DataError,
    DivergenceError,
    ShapeError,
    STTraverseError,
    StructureError,
    TapeError,
)
from .forecaster import SeriesStandardizer, TraverseForecaster
from .graph import (
    SpatialGraph,
    TraverseGraph,
    build_traverse_graph,
    from_edge_list,
    hop_distance,
    read_edge_file,
)
from .model import ABLATIONS, ModelConfig, ModelParams, PipelineGraphs, forward, init_params
from .training import (
    MetricReport,
    SeriesDataset,
    TrainConfig,
    TrainResult,
    mae_loss,
    metrics,
    standardize,
    sweep,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "XCorrCurve", "case_study", "cross_correlation", "peak_lag_distribution",
    "RawDataset", "SynthSpec", "generate", "load_series_csv", "save_series_csv",
    "ConfigError", "DataError", "DivergenceError", "ShapeError",
    "STTraverseError", "StructureError", "TapeError",
    "SeriesStandardizer", "TraverseForecaster",
    "SpatialGraph", "TraverseGraph", "build_traverse_graph", "from_edge_list",
    "hop_distance", "read_edge_file",
    "ABLATIONS", "ModelConfig", "ModelParams", "PipelineGraphs", "forward",
    "init_params",
    "MetricReport", "SeriesDataset", "TrainConfig", "TrainResult", "mae_loss",
    "metrics", "standardize", "sweep", "train",
]

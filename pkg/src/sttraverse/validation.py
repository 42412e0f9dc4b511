"""Input validation helpers shared by the estimator API and the CLI."""

from __future__ import annotations

import numpy as np

from .data import RawDataset
from .errors import DataError
from .graph import SpatialGraph, from_edge_list, read_edge_file


def check_series(series, n_features: int | None = None) -> np.ndarray:
    """Coerce a series to a float64 [N, D, T] array.

    Accepts a RawDataset, a 3-D array, or a 2-D [N, T] array (treated as a
    single feature).  Rejects NaN/inf values.
    """
    if isinstance(series, RawDataset):
        arr = series.values
    else:
        arr = np.asarray(series, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, None, :]
    if arr.ndim != 3:
        raise DataError(f"series must be [N, D, T] (or [N, T]), got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise DataError("series contains NaN or infinite values")
    if n_features is not None and arr.shape[1] != n_features:
        raise DataError(f"expected {n_features} features, got {arr.shape[1]}")
    return arr


def check_graph(graph, n_nodes: int, symmetrize: bool = False) -> SpatialGraph:
    """Coerce a graph argument to a SpatialGraph over exactly ``n_nodes`` nodes.

    Accepts a SpatialGraph, an iterable of (u, v) pairs, or a path to an
    edge-list file.
    """
    if isinstance(graph, SpatialGraph):
        built = graph
    elif isinstance(graph, (str, bytes)) or hasattr(graph, "__fspath__"):
        built = read_edge_file(graph, n_nodes=n_nodes, symmetrize=symmetrize)
    else:
        built = from_edge_list(n_nodes, list(graph), symmetrize=symmetrize)
    if built.n_nodes != n_nodes:
        raise DataError(f"graph has {built.n_nodes} nodes but the series has {n_nodes}")
    return built

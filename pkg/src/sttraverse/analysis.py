"""Cross-correlation lag analysis and the trained-attention case study."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, DataError
from .graph import SpatialGraph, hop_distance
from .model import ModelParams, PipelineGraphs, forward
from .training import SeriesDataset

FAR_PAIR_MIN_HOPS = 9   # "far" pairs are strictly more hops apart than this


@dataclass
class XCorrCurve:
    """Correlation of y against x shifted back by each lag.

    ``degenerate`` marks lags where a denominator vanished (constant
    overlap); the coefficient is reported as 0 there.
    """

    lags: np.ndarray
    coefficients: np.ndarray
    degenerate: np.ndarray
    pair: Optional[tuple[int, int]] = None

    @property
    def peak_lag(self) -> int:
        """Argmax lag; ties break toward the smaller lag."""
        return int(self.lags[np.argmax(self.coefficients)])


def cross_correlation(x: np.ndarray, y: np.ndarray, k_max: int,
                      overlap_normalized: bool = False) -> XCorrCurve:
    """Lagged correlation curve between two equal-length series.

    At lag k the overlap pairs are (x[t-k], y[t]) for t = k..L-1.  By default
    every sum is divided by the full length L, which biases long-lag values
    downward but keeps the curve bounded by 1; ``overlap_normalized`` divides
    by the overlap count L-k instead (plain Pearson on the overlap).
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise DataError(f"series lengths differ: {x.shape} vs {y.shape}")
    length = len(x)
    if length <= k_max + 2:
        raise DataError(f"series length {length} too short for k_max={k_max}")
    lags = np.arange(k_max + 1)
    coeffs = np.zeros(k_max + 1)
    degen = np.zeros(k_max + 1, dtype=bool)
    for k in lags:
        a = x[:length - k]
        b = y[k:]
        norm = float(length - k) if overlap_normalized else float(length)
        sa, sb = a.sum(), b.sum()
        num = (a * b).sum() / norm - sa * sb / norm ** 2
        var_a = (a * a).sum() / norm - (sa / norm) ** 2
        var_b = (b * b).sum() / norm - (sb / norm) ** 2
        scale = max(1.0, (a * a).sum() / norm, (b * b).sum() / norm)
        if var_a <= 1e-12 * scale or var_b <= 1e-12 * scale:
            degen[k] = True
            continue
        coeffs[k] = num / np.sqrt(var_a * var_b)
    return XCorrCurve(lags=lags, coefficients=coeffs, degenerate=degen)


def _sample_pairs(graph: SpatialGraph, source: str, max_pairs: int,
                  rng: np.random.Generator) -> list[tuple[int, int]]:
    if source == "connected":
        pairs = [(u, v) for u, v in graph.edges]
    elif source == "far":
        pairs = []
        for u in range(graph.n_nodes):
            dist = hop_distance(graph, u)
            for v in range(graph.n_nodes):
                if np.isfinite(dist[v]) and dist[v] > FAR_PAIR_MIN_HOPS:
                    pairs.append((u, v))
    else:
        raise ConfigError(f"pair source must be 'connected' or 'far', got {source!r}")
    if len(pairs) > max_pairs:
        idx = rng.choice(len(pairs), size=max_pairs, replace=False)
        pairs = [pairs[i] for i in sorted(idx)]
    return pairs


@dataclass
class PeakLagReport:
    lags: np.ndarray
    proportions: np.ndarray
    n_pairs: int
    curves_mean: Optional[np.ndarray] = None
    curves_std: Optional[np.ndarray] = None

    @property
    def empty(self) -> bool:
        return self.n_pairs == 0


def peak_lag_distribution(graph: SpatialGraph, series: np.ndarray, k_max: int,
                          pair_source: str = "connected", feature: int = 0,
                          max_pairs: int = 1000, seed: int = 0,
                          overlap_normalized: bool = False) -> PeakLagReport:
    """Histogram of per-pair peak lags, plus the mean/std curve over pairs.

    ``series`` is [N, D, T]; pairs are directed (source, target).  Degenerate
    pairs (constant series) are skipped.  With no qualifying pairs an empty
    report is returned rather than an error.
    """
    series = np.asarray(series, dtype=np.float64)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xfa12]))
    pairs = _sample_pairs(graph, pair_source, max_pairs, rng)
    lags = np.arange(k_max + 1)
    peaks = []
    curves = []
    for u, v in pairs:
        curve = cross_correlation(series[u, feature], series[v, feature], k_max,
                                  overlap_normalized=overlap_normalized)
        if curve.degenerate.all():
            continue
        peaks.append(curve.peak_lag)
        curves.append(curve.coefficients)
    if not peaks:
        return PeakLagReport(lags=lags, proportions=np.zeros(k_max + 1), n_pairs=0)
    counts = np.bincount(np.asarray(peaks), minlength=k_max + 1).astype(float)
    stacked = np.stack(curves)
    return PeakLagReport(lags=lags, proportions=counts / counts.sum(),
                         n_pairs=len(peaks), curves_mean=stacked.mean(axis=0),
                         curves_std=stacked.std(axis=0))


@dataclass
class CaseStudyResult:
    """Plot-ready artifacts for one directed pair: attention heatmap,
    lag-correlation curve, and the aligned raw series."""

    pair: tuple[int, int]
    heatmap: np.ndarray        # [window+1, p]; rows = source lag, cols = target step
    curve: XCorrCurve
    source_series: np.ndarray
    target_series: np.ndarray
    n_windows: int


def case_study(params: ModelParams, dataset: SeriesDataset, graph: SpatialGraph,
               pair: tuple[int, int], k_max: int = 12, split: str = "test",
               max_windows: int = 128, layer: int = 0) -> CaseStudyResult:
    """Aggregate first-layer neighbor-attention for one edge over eval windows.

    The heatmap entry (m, t) is the attention weight the target's step t
    puts on the source's step t-m, averaged over windows; lags beyond the
    clamped window are 0.  The pair must be a directed edge of the graph.
    """
    u, v = pair
    if (u, v) not in set(graph.edges):
        raise ConfigError(f"pair ({u}, {v}) is not a directed edge of the graph")
    cfg = params.config
    graphs = PipelineGraphs.build(graph, cfg)
    tg = graphs.main
    if not (0 <= layer < cfg.n_layers):
        raise ConfigError(f"layer {layer} out of range for K={cfg.n_layers}")
    stage_stride = len(graphs.stages)
    stage_pos = next(i for i, s in enumerate(graphs.stages) if s is tg)
    record_index = layer * stage_stride + stage_pos   # stage owning nbr attention

    starts = dataset.sample_starts(split)
    if len(starts) == 0:
        raise DataError(f"split {split!r} has no windows")
    starts = starts[:max_windows]

    # entries of the neighbor relation belonging to this (u, v) edge
    pair_mask = (tg.pair_u == u) & (tg.pair_v == v)
    pair_ids = np.flatnonzero(pair_mask)
    entry_pair = np.repeat(np.arange(tg.n_pairs), tg.nbr_index.counts)
    entry_mask = np.isin(entry_pair, pair_ids)
    entry_t = tg.pair_t[entry_pair[entry_mask]]
    entry_lag = tg.nbr_lags[entry_mask]

    heat = np.zeros((cfg.window + 1, cfg.input_len))
    total = 0
    batch = 64
    for i in range(0, len(starts), batch):
        xs, _ = dataset.batch(starts[i:i + batch])
        _, records = forward(params, xs, graphs, mode="eval", record_attention=True)
        weights = records[record_index].nbr_weights[:, entry_mask]   # [B, n_sel]
        summed = weights.sum(axis=0)
        np.add.at(heat, (entry_lag, entry_t), summed)
        total += weights.shape[0]
    heat /= total

    f = dataset.target_feature
    curve = cross_correlation(dataset.raw[u, f], dataset.raw[v, f], k_max)
    curve.pair = (u, v)
    return CaseStudyResult(pair=(u, v), heatmap=heat, curve=curve,
                           source_series=dataset.raw[u, f].copy(),
                           target_series=dataset.raw[v, f].copy(), n_windows=total)


# Plot-ready text output ----------------------------------------------------

def write_curve_csv(path, curve: XCorrCurve) -> None:
    with open(path, "w") as fh:
        fh.write("lag,value\n")
        for lag, val in zip(curve.lags, curve.coefficients):
            fh.write(f"{lag},{val:.10g}\n")


def write_histogram_csv(path, report: PeakLagReport) -> None:
    with open(path, "w") as fh:
        fh.write("lag,value\n")
        for lag, val in zip(report.lags, report.proportions):
            fh.write(f"{lag},{val:.10g}\n")


def write_heatmap(path, matrix: np.ndarray) -> None:
    """Whitespace-separated matrix with the one-line layout header."""
    with open(path, "w") as fh:
        fh.write("rows=source_lags cols=target_steps\n")
        for row in matrix:
            fh.write(" ".join(f"{val:.10g}" for val in row) + "\n")

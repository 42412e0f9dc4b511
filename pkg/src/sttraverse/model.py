"""Model assembly: config, parameter init, forward pass, ablation variants."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .engine import BatchNormState, Tensor, batchnorm_node, dropout
from .errors import ConfigError
from .graph import SpatialGraph, TraverseGraph, build_traverse_graph
from .layers import (
    AttentionParams,
    AttentionRecord,
    PostprocessParams,
    PreprocessParams,
    TraverseLayerParams,
    flatten_hidden,
    postprocess,
    preprocess,
    traverse_layer,
    unflatten_hidden,
)

ABLATIONS = ("default", "no_spatial", "no_st_traversing", "no_attention",
             "no_residual", "no_norm")

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


@dataclass
class ModelConfig:
    """Architecture hyperparameters.

    ``n_nodes`` is part of the config because the node-dimension batch norm
    carries per-node parameters, making the parameter count depend on it.
    """

    n_nodes: int
    input_dim: int = 1
    n_layers: int = 3
    hidden: int = 64
    window: int = 12
    input_len: int = 12
    horizon: int = 12
    dropout: float = 0.1
    ablation: str = "default"
    seed: int = 0
    slope: float = 0.2
    norm_after_residual: bool = True
    temporal_stage_first: bool = True
    precision: int = 64

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ConfigError(f"n_nodes must be >= 1, got {self.n_nodes}")
        if self.input_dim < 1:
            raise ConfigError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.n_layers < 1:
            raise ConfigError(f"n_layers must be >= 1, got {self.n_layers}")
        if self.window < 0:
            raise ConfigError(f"window must be >= 0, got {self.window}")
        if self.input_len < 1 or self.horizon < 1:
            raise ConfigError("input_len and horizon must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"unknown ablation {self.ablation!r}; one of {ABLATIONS}")
        if self.precision not in (32, 64):
            raise ConfigError(f"precision must be 32 or 64, got {self.precision}")

    @property
    def dtype(self):
        return np.float32 if self.precision == 32 else np.float64

    def with_ablation(self, ablation: str) -> "ModelConfig":
        return replace(self, ablation=ablation)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class ModelParams:
    """All learnable tensors plus batch-norm running state."""

    config: ModelConfig
    pre: PreprocessParams
    layers: list[TraverseLayerParams]
    norms: list[BatchNormState]
    post: PostprocessParams

    def named_tensors(self) -> dict[str, Tensor]:
        out = dict(self.pre.named("pre"))
        for k, layer in enumerate(self.layers):
            out.update(layer.named(f"layers.{k}"))
        for k, norm in enumerate(self.norms):
            out[f"norms.{k}.gain"] = norm.gain
            out[f"norms.{k}.bias"] = norm.bias
        out.update(self.post.named("post"))
        return out

    def state_arrays(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for k, norm in enumerate(self.norms):
            out[f"norms.{k}.running_mean"] = norm.running_mean
            out[f"norms.{k}.running_var"] = norm.running_var
        return out

    def n_parameters(self) -> int:
        return sum(t.size for t in self.named_tensors().values())

    def clone(self) -> "ModelParams":
        return copy.deepcopy(self)

    def checksum(self) -> float:
        return float(sum(np.abs(t.values).sum() for t in self.named_tensors().values()))


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape, dtype) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=shape).astype(dtype), requires_grad=True)


def _zeros(shape, dtype) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


def _attention_params(rng, d, dtype) -> AttentionParams:
    return AttentionParams(
        query_proj=_glorot(rng, d, d, (d, d), dtype),
        key_proj=_glorot(rng, d, d, (d, d), dtype),
        score=_glorot(rng, 2 * d, 1, (2 * d, 1), dtype),
    )


def init_params(config: ModelConfig) -> ModelParams:
    """Seeded Glorot-uniform init; two calls with equal config are bit-identical."""
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x5eed]))
    d, dd, p, q = config.hidden, config.input_dim, config.input_len, config.horizon
    dtype = config.dtype

    pre = PreprocessParams(
        weight=_glorot(rng, dd, d, (dd, d), dtype),
        bias=_zeros((d,), dtype),
        residual_proj=None if dd == d else _glorot(rng, dd, d, (dd, d), dtype),
    )
    layers = []
    norms = []
    for _ in range(config.n_layers):
        layers.append(TraverseLayerParams(
            out_weight=_glorot(rng, d, d, (d, d), dtype),
            self_value=_glorot(rng, d, d, (d, d), dtype),
            nbr_value=_glorot(rng, d, d, (d, d), dtype),
            self_att=_attention_params(rng, d, dtype),
            nbr_att=_attention_params(rng, d, dtype),
            outer_att=_attention_params(rng, d, dtype),
        ))
        norms.append(BatchNormState.create(config.n_nodes, d, eps=BN_EPS,
                                           momentum=BN_MOMENTUM, dtype=dtype))
    post = PostprocessParams(
        kernel=_glorot(rng, d * p, d * p, (d, d, p), dtype),
        conv_bias=_zeros((d,), dtype),
        weight=_glorot(rng, d, q, (d, q), dtype),
        bias=_zeros((q,), dtype),
    )
    return ModelParams(config=config, pre=pre, layers=layers, norms=norms, post=post)


def param_count(config: ModelConfig) -> int:
    """Closed-form learnable parameter count for ``config``."""
    d, dd, p, q, n = (config.hidden, config.input_dim, config.input_len,
                      config.horizon, config.n_nodes)
    pre = dd * d + d + (0 if dd == d else dd * d)
    per_layer = 3 * d * d + 3 * (2 * d * d + 2 * d)   # values/out + attention families
    per_norm = 2 * n * d
    post = d * d * p + d + d * q + q
    return pre + config.n_layers * (per_layer + per_norm) + post


@dataclass
class PipelineGraphs:
    """Per-layer stage list of traverse graphs realizing an ablation variant.

    Each stage is one traverse pass; the default pipeline has a single stage
    per layer.  ``no_st_traversing`` splits every layer into a history-only
    pass (edgeless graph, full window) and a concurrent-only pass (real
    graph, window 0).  ``no_spatial`` empties the neighbor sets.
    """

    spatial: SpatialGraph
    config_key: tuple
    stages: list[TraverseGraph]
    main: TraverseGraph

    @classmethod
    def build(cls, graph: SpatialGraph, config: ModelConfig) -> "PipelineGraphs":
        if config.n_nodes != graph.n_nodes:
            raise ConfigError(
                f"config.n_nodes={config.n_nodes} but graph has {graph.n_nodes} nodes")
        p, w = config.input_len, config.window
        if config.ablation == "no_spatial":
            main = build_traverse_graph(graph.without_edges(), p, w)
            stages = [main]
        elif config.ablation == "no_st_traversing":
            temporal = build_traverse_graph(graph.without_edges(), p, w)
            spatial = build_traverse_graph(graph, p, 0)
            stages = ([temporal, spatial] if config.temporal_stage_first
                      else [spatial, temporal])
            main = spatial
        else:
            main = build_traverse_graph(graph, p, w)
            stages = [main]
        key = (graph.n_nodes, graph.edges, p, w, config.ablation,
               config.temporal_stage_first)
        return cls(spatial=graph, config_key=key, stages=stages, main=main)


def forward(params: ModelParams, x, graphs: PipelineGraphs, mode: str = "eval",
            rng: Optional[np.random.Generator] = None,
            record_attention: bool = False
            ) -> tuple[Tensor, Optional[list[AttentionRecord]]]:
    """Full forward pass: lift, K traverse blocks, readout.

    ``x`` is [B, N, D, p]; the result is [B, N, q].  ``mode`` is ``train``
    (batch-norm batch statistics, dropout active, requires an rng when
    dropout > 0) or ``eval`` (frozen statistics, no dropout).  Attention
    records, when requested, hold one entry per traverse stage and layer.
    """
    cfg = params.config
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")
    training = mode == "train"
    x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=cfg.dtype))
    if x.ndim != 4:
        raise ConfigError(f"input must be [B, N, D, p], got shape {x.shape}")
    b, n, dd, p = x.shape
    if (n, dd, p) != (cfg.n_nodes, cfg.input_dim, cfg.input_len):
        raise ConfigError(
            f"input shape {x.shape} inconsistent with config "
            f"(N={cfg.n_nodes}, D={cfg.input_dim}, p={cfg.input_len})")
    if graphs.main.p != p or graphs.main.n_nodes != n:
        raise ConfigError("traverse graphs were built for a different (N, p)")
    if training and cfg.dropout > 0.0 and rng is None:
        raise ConfigError("training with dropout requires an rng")

    uniform = cfg.ablation == "no_attention"
    use_residual = cfg.ablation != "no_residual"
    use_norm = cfg.ablation != "no_norm"

    h = preprocess(x, params.pre)
    h = dropout(h, cfg.dropout, rng, training)
    records: list[AttentionRecord] = []
    for k, layer in enumerate(params.layers):
        h_in = h
        h_flat = flatten_hidden(h)
        for tg in graphs.stages:
            h_flat, rec = traverse_layer(h_flat, tg, layer, slope=cfg.slope,
                                         uniform=uniform, record=record_attention)
            if record_attention:
                records.append(rec)
        h = unflatten_hidden(h_flat, n, p)
        if cfg.norm_after_residual:
            if use_residual:
                h = h + h_in
            if use_norm:
                h = batchnorm_node(h, params.norms[k], training)
        else:
            if use_norm:
                h = batchnorm_node(h, params.norms[k], training)
            if use_residual:
                h = h + h_in
        h = dropout(h, cfg.dropout, rng, training)
    pred = postprocess(h, params.post)
    return pred, (records if record_attention else None)

"""Attention layers that traverse a node's own and its neighbors' past states.

The layer updates every target (v, t) in three stages, each an attention
pass over a segment of candidate sources:

1. self context: the target's current state queries its own lagged states;
2. neighbor context, per in-edge (u -> v): the *target's* current state
   queries u's lagged states (cross-node queries are the point of the layer);
3. outer update: the self context queries the set {self context} union
   {neighbor contexts}, and the attended contexts are linearly combined.

Attention logits have the form sigma(score^T [Q z_query || K z_key]) with a
leaky-ReLU sigma; weights are segment-softmax normalized.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .engine import (
    SegmentIndex,
    Tensor,
    concat_rows,
    gather_rows,
    leaky_relu,
    matmul,
    segment_softmax,
    segment_sum,
    slice_rows,
    uniform_segment_weights,
)
from .engine.tensor import transpose
from .errors import ConfigError, ShapeError
from .graph import TraverseGraph


@dataclass
class AttentionParams:
    """One attention family: query/key projections and the scoring vector."""

    query_proj: Tensor  # [d, d]
    key_proj: Tensor    # [d, d]
    score: Tensor       # [2d, 1]

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {
            f"{prefix}.query_proj": self.query_proj,
            f"{prefix}.key_proj": self.key_proj,
            f"{prefix}.score": self.score,
        }


@dataclass
class TraverseLayerParams:
    """Weights of one traverse layer.

    ``self_value`` / ``nbr_value`` transform historical states inside the two
    context sums; ``out_weight`` transforms the attended contexts in the
    outer update.  One attention family per stage.
    """

    out_weight: Tensor
    self_value: Tensor
    nbr_value: Tensor
    self_att: AttentionParams
    nbr_att: AttentionParams
    outer_att: AttentionParams

    @property
    def hidden(self) -> int:
        return self.out_weight.shape[0]

    def named(self, prefix: str) -> dict[str, Tensor]:
        out = {
            f"{prefix}.out_weight": self.out_weight,
            f"{prefix}.self_value": self.self_value,
            f"{prefix}.nbr_value": self.nbr_value,
        }
        out.update(self.self_att.named(f"{prefix}.self_att"))
        out.update(self.nbr_att.named(f"{prefix}.nbr_att"))
        out.update(self.outer_att.named(f"{prefix}.outer_att"))
        return out


@dataclass
class AttentionRecord:
    """Flat attention weights of one layer, aligned with TraverseGraph segments."""

    self_weights: np.ndarray   # [B, n_self_entries]
    nbr_weights: np.ndarray    # [B, n_nbr_entries]
    outer_weights: np.ndarray  # [B, n_outer_entries]


@dataclass
class LayerOutput:
    hidden: Tensor
    attention_record: Optional[AttentionRecord] = None


def _score_vectors(att: AttentionParams):
    """Split the 2d scoring vector and fold it into the projections.

    score^T [Q z || K z'] == z @ (Q^T s_q) + z' @ (K^T s_k), so each side
    reduces to one [d, 1] matvec applied to all rows at once.
    """
    d = att.query_proj.shape[0]
    s_q = slice_rows(att.score, 0, d)
    s_k = slice_rows(att.score, d, 2 * d)
    w_q = matmul(transpose(att.query_proj), s_q)
    w_k = matmul(transpose(att.key_proj), s_k)
    return w_q, w_k


def attention(z_query: Tensor, z_keys: Tensor, att: AttentionParams,
              slope: float = 0.2) -> Tensor:
    """Softmax attention of one query over a segment of keys.

    ``z_query`` is [d] or [1, d]; ``z_keys`` is [S, d].  Returns weights [S]
    that sum to 1.  The query is transformed once and reused for all keys.
    """
    if z_keys.ndim != 2 or z_keys.shape[0] < 1:
        raise ShapeError(f"z_keys must be [S, d] with S >= 1, got {z_keys.shape}")
    q = z_query.reshape(1, -1) if z_query.ndim == 1 else z_query
    w_q, w_k = _score_vectors(att)
    q_score = matmul(q, w_q)                # [1, 1]
    k_scores = matmul(z_keys, w_k)          # [S, 1]
    logits = leaky_relu(k_scores + q_score, slope)
    seg = SegmentIndex([0, z_keys.shape[0]], np.arange(z_keys.shape[0]))
    return segment_softmax(logits, seg).reshape(-1)


def _weights_for_record(w: Tensor, batch: int, n_entries: int) -> np.ndarray:
    vals = w.values[..., 0] if w.values.ndim >= 2 else w.values
    if vals.ndim == 1:
        vals = np.broadcast_to(vals, (batch, n_entries))
    return np.array(vals, copy=True)


def _segment_attention(h_queries: Tensor, h_keys: Tensor, att: AttentionParams,
                       slope: float, entry_targets: np.ndarray,
                       sources: SegmentIndex, tg: TraverseGraph,
                       target_plan: str, source_plan: str,
                       uniform: bool) -> Tensor:
    """Per-entry attention weights for one relation, shape [B, n_entries, 1]."""
    if uniform:
        return uniform_segment_weights(sources, dtype=h_queries.dtype)
    w_q, w_k = _score_vectors(att)
    q_scores = matmul(h_queries, w_q)   # [B, R, 1]
    k_scores = matmul(h_keys, w_k)      # [B, R, 1]
    q_at = gather_rows(q_scores, entry_targets, plan=tg.plan(target_plan))
    k_at = gather_rows(k_scores, sources.sources, plan=tg.plan(source_plan))
    logits = leaky_relu(q_at + k_at, slope)
    return segment_softmax(logits, sources)


def temporal_context(h_flat: Tensor, tg: TraverseGraph, params: TraverseLayerParams,
                     slope: float = 0.2, uniform: bool = False) -> tuple[Tensor, Tensor]:
    """Attend each target over its own lagged states.

    ``h_flat`` is [B, N*p, d] in row order v*p + t.  Returns the per-target
    context [B, N*p, d] and the entry weights [B, n_entries, 1].
    """
    weights = _segment_attention(h_flat, h_flat, params.self_att, slope,
                                 tg.self_entry_target, tg.self_index, tg,
                                 "self_targets", "self_sources", uniform)
    values = matmul(h_flat, transpose(params.self_value))
    picked = gather_rows(values, tg.self_index.sources, plan=tg.plan("self_sources"))
    ctx = segment_sum(picked * weights, tg.self_index)
    return ctx, weights


def neighbor_context(h_flat: Tensor, tg: TraverseGraph, params: TraverseLayerParams,
                     slope: float = 0.2, uniform: bool = False) -> tuple[Tensor, Tensor]:
    """Attend each (in-edge, target step) over the neighbor's lagged states.

    The query is the target node's current state.  Returns contexts
    [B, n_pairs, d] and entry weights [B, n_entries, 1]; both are empty when
    the graph has no edges.
    """
    if tg.n_pairs == 0:
        b = h_flat.shape[0]
        empty = Tensor(np.empty((b, 0, h_flat.shape[-1]), dtype=h_flat.dtype))
        return empty, Tensor(np.empty((b, 0, 1), dtype=h_flat.dtype))
    weights = _segment_attention(h_flat, h_flat, params.nbr_att, slope,
                                 tg.nbr_entry_target, tg.nbr_index, tg,
                                 "nbr_targets", "nbr_sources", uniform)
    values = matmul(h_flat, transpose(params.nbr_value))
    picked = gather_rows(values, tg.nbr_index.sources, plan=tg.plan("nbr_sources"))
    ctx = segment_sum(picked * weights, tg.nbr_index)
    return ctx, weights


def traverse_layer(h_flat: Tensor, tg: TraverseGraph, params: TraverseLayerParams,
                   slope: float = 0.2, uniform: bool = False,
                   record: bool = False) -> tuple[Tensor, Optional[AttentionRecord]]:
    """One full traverse update on the flattened hidden state [B, N*p, d].

    The outer attention queries with the target's self context; its key set
    is the self context plus one context per in-neighbor.
    """
    if params.hidden != h_flat.shape[-1]:
        raise ConfigError(
            f"layer hidden dim {params.hidden} != input feature dim {h_flat.shape[-1]}")
    c_self, w_self = temporal_context(h_flat, tg, params, slope, uniform)
    c_nbr, w_nbr = neighbor_context(h_flat, tg, params, slope, uniform)
    contexts = concat_rows(c_self, c_nbr)   # [B, N*p + n_pairs, d]

    if uniform:
        w_outer = uniform_segment_weights(tg.outer_index, dtype=h_flat.dtype)
    else:
        w_q, w_k = _score_vectors(params.outer_att)
        q_scores = matmul(c_self, w_q)
        k_scores = matmul(contexts, w_k)
        q_at = gather_rows(q_scores, tg.outer_entry_target, plan=tg.plan("outer_targets"))
        k_at = gather_rows(k_scores, tg.outer_index.sources, plan=tg.plan("outer_sources"))
        logits = leaky_relu(q_at + k_at, slope)
        w_outer = segment_softmax(logits, tg.outer_index)

    values = matmul(contexts, transpose(params.out_weight))
    picked = gather_rows(values, tg.outer_index.sources, plan=tg.plan("outer_sources"))
    h_new = segment_sum(picked * w_outer, tg.outer_index)

    rec = None
    if record:
        b = h_flat.shape[0]
        rec = AttentionRecord(
            self_weights=_weights_for_record(w_self, b, tg.self_index.n_entries),
            nbr_weights=_weights_for_record(w_nbr, b, tg.nbr_index.n_entries),
            outer_weights=_weights_for_record(w_outer, b, tg.outer_index.n_entries),
        )
    return h_new, rec


# Pre/post-processing -------------------------------------------------------

@dataclass
class PreprocessParams:
    """Affine feature lift D -> d, shared across nodes and time.

    ``residual_proj`` is present only when D != d; it projects the input for
    the residual connection around the lift.
    """

    weight: Tensor   # [D, d]
    bias: Tensor     # [d]
    residual_proj: Optional[Tensor] = None  # [D, d]

    def named(self, prefix: str) -> dict[str, Tensor]:
        out = {f"{prefix}.weight": self.weight, f"{prefix}.bias": self.bias}
        if self.residual_proj is not None:
            out[f"{prefix}.residual_proj"] = self.residual_proj
        return out


@dataclass
class PostprocessParams:
    """Full-width time convolution followed by an affine map to the horizon."""

    kernel: Tensor     # [d, d, p]
    conv_bias: Tensor  # [d]
    weight: Tensor     # [d, q]
    bias: Tensor       # [q]

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {
            f"{prefix}.kernel": self.kernel,
            f"{prefix}.conv_bias": self.conv_bias,
            f"{prefix}.weight": self.weight,
            f"{prefix}.bias": self.bias,
        }


def preprocess(x: Tensor, params: PreprocessParams) -> Tensor:
    """Lift [B, N, D, p] inputs to [B, N, d, p] hidden features (with residual)."""
    xt = transpose(x, (0, 1, 3, 2))              # [B, N, p, D]
    y = matmul(xt, params.weight) + params.bias  # [B, N, p, d]
    if params.residual_proj is not None:
        y = y + matmul(xt, params.residual_proj)
    elif params.weight.shape[0] == params.weight.shape[1]:
        y = y + xt
    return transpose(y, (0, 1, 3, 2))


def postprocess(h: Tensor, params: PostprocessParams) -> Tensor:
    """Squeeze the time axis with a full-width convolution, then map d -> q."""
    from .engine.functional import conv_time

    z = conv_time(h, params.kernel)              # [B, N, d, 1]
    z = z.reshape(z.shape[:3]) + params.conv_bias
    return matmul(z, params.weight) + params.bias


def flatten_hidden(h: Tensor) -> Tensor:
    """[B, N, d, p] -> [B, N*p, d] with rows ordered v*p + t."""
    b, n, d, p = h.shape
    return transpose(h, (0, 1, 3, 2)).reshape((b, n * p, d))


def unflatten_hidden(h_flat: Tensor, n: int, p: int) -> Tensor:
    """[B, N*p, d] -> [B, N, d, p]."""
    b, rows, d = h_flat.shape
    if rows != n * p:
        raise ShapeError(f"cannot unflatten {rows} rows into {n} nodes x {p} steps")
    return transpose(h_flat.reshape((b, n, p, d)), (0, 1, 3, 2))

"""Segment-indexed sparse kernels: gather, segment softmax, segment sum.

A :class:`SegmentIndex` stores contiguous segments of a flat entry list via
an offsets array, exactly the layout needed to run attention over variable
sized neighborhoods with plain ``reduceat`` calls.  All reductions run in a
fixed entry order, so results are deterministic.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np

from ..errors import ShapeError, StructureError
from .tensor import Tensor, _apply, _vals


class SegmentIndex:
    """Flat source list partitioned into contiguous segments.

    ``offsets`` has one more element than there are segments; segment ``k``
    owns entries ``sources[offsets[k]:offsets[k+1]]``.  ``sources[i]`` is the
    row index the entry reads from.
    """

    def __init__(self, offsets, sources):
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.sources = np.asarray(sources, dtype=np.int64)
        if self.offsets.ndim != 1 or len(self.offsets) < 1:
            raise StructureError("offsets must be a non-empty 1-D array")
        if self.offsets[0] != 0 or np.any(np.diff(self.offsets) < 0):
            raise StructureError("offsets must start at 0 and be monotone non-decreasing")
        if self.offsets[-1] != len(self.sources):
            raise StructureError(
                f"last offset {self.offsets[-1]} != number of sources {len(self.sources)}")

    @property
    def n_segments(self) -> int:
        return len(self.offsets) - 1

    @property
    def n_entries(self) -> int:
        return len(self.sources)

    @cached_property
    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    @cached_property
    def entry_segment(self) -> np.ndarray:
        """Segment id of every entry."""
        return np.repeat(np.arange(self.n_segments, dtype=np.int64), self.counts)

    def require_non_empty(self, context: str = "segment op") -> None:
        if self.n_segments == 0 or np.any(self.counts == 0):
            raise StructureError(f"{context}: empty segment (index construction bug)")


class ScatterPlan:
    """Precomputed grouping turning a scatter-add into a sorted reduceat."""

    def __init__(self, rows: np.ndarray, n_rows: int):
        rows = np.asarray(rows, dtype=np.int64)
        self.n_rows = int(n_rows)
        self.order = np.argsort(rows, kind="stable")
        sorted_rows = rows[self.order]
        if len(sorted_rows):
            self.starts = np.flatnonzero(np.r_[True, sorted_rows[1:] != sorted_rows[:-1]])
            self.unique = sorted_rows[self.starts]
        else:
            self.starts = np.empty(0, dtype=np.int64)
            self.unique = np.empty(0, dtype=np.int64)

    def scatter_add(self, g: np.ndarray) -> np.ndarray:
        out = np.zeros(g.shape[:-2] + (self.n_rows, g.shape[-1]), dtype=g.dtype)
        if len(self.order):
            sums = np.add.reduceat(g[..., self.order, :], self.starts, axis=-2)
            out[..., self.unique, :] = sums
        return out


def gather_rows(x, rows: np.ndarray, plan: ScatterPlan | None = None) -> Tensor:
    """Select rows along axis -2: ``out[..., i, :] = x[..., rows[i], :]``.

    ``plan`` (optional, keyed to ``rows``) speeds up the scatter-add backward.
    """
    xv = _vals(x)
    if xv.ndim < 2:
        raise ShapeError(f"gather_rows needs ndim >= 2, got shape {xv.shape}")
    rows = np.asarray(rows, dtype=np.int64)
    n_rows = xv.shape[-2]
    out = np.take(xv, rows, axis=-2)

    def backward(g):
        if plan is not None:
            return (plan.scatter_add(g),)
        buf = np.zeros_like(xv)
        np.add.at(buf, (Ellipsis, rows, slice(None)), g)
        return (buf,)

    return _apply("gather_rows", out, (x,), backward)


def _repeat(seg_values: np.ndarray, seg: SegmentIndex) -> np.ndarray:
    return np.repeat(seg_values, seg.counts, axis=-2)


def segment_softmax(scores, seg: SegmentIndex) -> Tensor:
    """Exp-normalize scores within each segment (axis -2, trailing dim 1).

    Numerically stabilized by subtracting the per-segment maximum.  Every
    segment must be non-empty; outputs in each segment sum to one.
    """
    seg.require_non_empty("segment_softmax")
    sv = _vals(scores)
    if sv.shape[-2] != seg.n_entries:
        raise ShapeError(
            f"segment_softmax: {sv.shape[-2]} score rows vs {seg.n_entries} index entries")
    starts = seg.offsets[:-1]
    seg_max = np.maximum.reduceat(sv, starts, axis=-2)
    z = np.exp(sv - _repeat(seg_max, seg))
    denom = np.add.reduceat(z, starts, axis=-2)
    w = z / _repeat(denom, seg)

    def backward(g):
        dot = np.add.reduceat(g * w, starts, axis=-2)
        return (w * (g - _repeat(dot, seg)),)

    return _apply("segment_softmax", w, (scores,), backward)


def uniform_segment_weights(seg: SegmentIndex, dtype=np.float64) -> Tensor:
    """Constant 1/|segment| weights, shaped like a segment_softmax output."""
    seg.require_non_empty("uniform_segment_weights")
    w = np.repeat(1.0 / seg.counts.astype(dtype), seg.counts)[:, None]
    return Tensor(w)


def segment_sum(x, seg: SegmentIndex) -> Tensor:
    """Sum entries within each segment: [..., n_entries, d] -> [..., n_segments, d]."""
    seg.require_non_empty("segment_sum")
    xv = _vals(x)
    if xv.shape[-2] != seg.n_entries:
        raise ShapeError(
            f"segment_sum: {xv.shape[-2]} entry rows vs {seg.n_entries} index entries")
    out = np.add.reduceat(xv, seg.offsets[:-1], axis=-2)

    def backward(g):
        return (_repeat(g, seg),)

    return _apply("segment_sum", out, (x,), backward)


def concat_rows(a, b) -> Tensor:
    """Concatenate along axis -2; gradient splits back."""
    av, bv = _vals(a), _vals(b)
    na = av.shape[-2]

    def backward(g):
        return (g[..., :na, :], g[..., na:, :])

    return _apply("concat_rows", np.concatenate([av, bv], axis=-2), (a, b), backward)


def slice_rows(x, start: int, stop: int) -> Tensor:
    """Rows [start:stop) along axis -2; gradient scatters into a zero buffer."""
    xv = _vals(x)

    def backward(g):
        buf = np.zeros_like(xv)
        buf[..., start:stop, :] = g
        return (buf,)

    return _apply("slice_rows", xv[..., start:stop, :].copy(), (x,), backward)

"""Spatial sensor graphs and their unrolled space-time edge index.

A :class:`SpatialGraph` stores directed influence edges: the pair ``(u, v)``
means node ``u`` is an in-neighbor of ``v`` (information may flow from u's
past to v's present).  :func:`build_traverse_graph` unrolls a spatial graph
over ``p`` time steps into the segment indexes consumed by the attention
layer: every target ``(v, t)`` attends over its own history and, per
in-neighbor ``u``, over u's history within a window of ``window`` steps,
clamped at the sequence start.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .engine.segments import ScatterPlan, SegmentIndex
from .errors import ConfigError, DataError


@dataclass(frozen=True)
class SpatialGraph:
    """Directed graph over sensor nodes with per-node in-neighbor lists."""

    n_nodes: int
    edges: tuple[tuple[int, int], ...]
    in_neighbors: tuple[tuple[int, ...], ...]

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def without_edges(self) -> "SpatialGraph":
        return SpatialGraph(self.n_nodes, (), tuple(() for _ in range(self.n_nodes)))


def from_edge_list(n_nodes: int, pairs, symmetrize: bool = False) -> SpatialGraph:
    """Build a graph from (u, v) pairs; u becomes an in-neighbor of v.

    Duplicate pairs are dropped, as are self-pairs (the layer always includes
    a node's own history, so a self-loop would double-count it).  With
    ``symmetrize`` every pair also adds its reverse.
    """
    if n_nodes < 1:
        raise ConfigError(f"n_nodes must be >= 1, got {n_nodes}")
    seen: set[tuple[int, int]] = set()
    for i, (u, v) in enumerate(pairs):
        u, v = int(u), int(v)
        if not (0 <= u < n_nodes and 0 <= v < n_nodes):
            raise DataError(f"edge pair #{i} ({u}, {v}) out of range for {n_nodes} nodes")
        if u == v:
            continue
        seen.add((u, v))
        if symmetrize:
            seen.add((v, u))
    edges = tuple(sorted(seen))
    incoming: list[list[int]] = [[] for _ in range(n_nodes)]
    for u, v in edges:
        incoming[v].append(u)
    return SpatialGraph(n_nodes, edges, tuple(tuple(sorted(ns)) for ns in incoming))


def read_edge_file(path, n_nodes: int | None = None, symmetrize: bool = False) -> SpatialGraph:
    """Parse a plain-text edge list: one ``u v`` pair per line, ``#`` comments."""
    pairs: list[tuple[int, int]] = []
    max_id = -1
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected 'u v', got {line.rstrip()!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-integer node id in {line.rstrip()!r}")
            if u < 0 or v < 0:
                raise DataError(f"{path}:{lineno}: negative node id in {line.rstrip()!r}")
            pairs.append((u, v))
            max_id = max(max_id, u, v)
    if n_nodes is None:
        n_nodes = max_id + 1 if max_id >= 0 else 1
    try:
        return from_edge_list(n_nodes, pairs, symmetrize=symmetrize)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from exc


def write_edge_file(path, graph: SpatialGraph) -> None:
    with open(path, "w") as fh:
        fh.write("# u v  (u is an in-neighbor of v)\n")
        for u, v in graph.edges:
            fh.write(f"{u} {v}\n")


def hop_distance(graph: SpatialGraph, source: int) -> np.ndarray:
    """BFS shortest hop counts from ``source``, treating edges as undirected.

    Unreachable nodes get ``inf``.
    """
    if not (0 <= source < graph.n_nodes):
        raise ConfigError(f"node {source} out of range for {graph.n_nodes} nodes")
    adjacency: list[set[int]] = [set() for _ in range(graph.n_nodes)]
    for u, v in graph.edges:
        adjacency[u].add(v)
        adjacency[v].add(u)
    dist = np.full(graph.n_nodes, np.inf)
    dist[source] = 0.0
    frontier = deque([source])
    while frontier:
        node = frontier.popleft()
        for nxt in sorted(adjacency[node]):
            if not np.isfinite(dist[nxt]):
                dist[nxt] = dist[node] + 1.0
                frontier.append(nxt)
    return dist


@dataclass
class TraverseGraph:
    """Unrolled (node, time-step) edge set grouped by target.

    Rows of the flattened hidden state are ordered ``row = v * p + t``.  Three
    relations are indexed:

    * ``self_index``: one segment per target row, sources are the target
      node's own rows at lags 0..min(window, t).
    * ``nbr_index``: one segment per (in-edge, target step) pair, sources are
      the neighbor's rows at the same lags.  ``pair_target_rows`` /
      ``pair_source_nodes`` identify each segment.
    * ``outer_index``: one segment per target row over the aggregated
      contexts: entry 0..N*p-1 refers to a self context row, N*p + k to
      neighbor pair k.

    Source entries are ordered by source node id, then lag, ascending; two
    builds of the same inputs produce identical flat arrays.
    """

    n_nodes: int
    p: int
    window: int
    self_index: SegmentIndex
    self_lags: np.ndarray
    self_entry_target: np.ndarray
    nbr_index: SegmentIndex
    nbr_lags: np.ndarray
    nbr_entry_target: np.ndarray
    pair_target_rows: np.ndarray
    pair_source_nodes: np.ndarray
    pair_u: np.ndarray
    pair_v: np.ndarray
    pair_t: np.ndarray
    outer_index: SegmentIndex
    outer_entry_target: np.ndarray
    outer_source_nodes: np.ndarray
    _plans: dict[str, ScatterPlan] = field(default_factory=dict, repr=False)

    @property
    def n_rows(self) -> int:
        return self.n_nodes * self.p

    @property
    def n_pairs(self) -> int:
        return len(self.pair_target_rows)

    @property
    def total_sources(self) -> int:
        """Unrolled edge count: self plus neighbor sources over all targets."""
        return self.self_index.n_entries + self.nbr_index.n_entries

    def plan(self, name: str) -> ScatterPlan:
        """Cached scatter plan for one of the index arrays used in gathers."""
        if name not in self._plans:
            rows, n_rows = {
                "self_sources": (self.self_index.sources, self.n_rows),
                "self_targets": (self.self_entry_target, self.n_rows),
                "nbr_sources": (self.nbr_index.sources, self.n_rows),
                "nbr_targets": (self.nbr_entry_target, self.n_rows),
                "outer_sources": (self.outer_index.sources, self.n_rows + self.n_pairs),
                "outer_targets": (self.outer_entry_target, self.n_rows),
            }[name]
            self._plans[name] = ScatterPlan(rows, n_rows)
        return self._plans[name]


def build_traverse_graph(graph: SpatialGraph, p: int, window: int) -> TraverseGraph:
    """Enumerate the unrolled edges of ``graph`` over ``p`` steps.

    The window is clamped at the sequence start: target (v, t) sees lags
    m = 0..min(window, t), so no source has a negative time index.
    """
    if p < 1:
        raise ConfigError(f"input length p must be >= 1, got {p}")
    if window < 0:
        raise ConfigError(f"window must be >= 0, got {window}")
    n = graph.n_nodes

    self_offsets = [0]
    self_sources: list[int] = []
    self_lags: list[int] = []

    nbr_offsets = [0]
    nbr_sources: list[int] = []
    nbr_lags: list[int] = []
    pair_target_rows: list[int] = []
    pair_source_nodes: list[int] = []
    pair_u: list[int] = []
    pair_v: list[int] = []
    pair_t: list[int] = []
    pair_lookup: dict[tuple[int, int], int] = {}

    for v in range(n):
        for t in range(p):
            row = v * p + t
            lags = range(min(window, t) + 1)
            for m in lags:
                self_sources.append(v * p + (t - m))
                self_lags.append(m)
            self_offsets.append(len(self_sources))
            for u in graph.in_neighbors[v]:
                pair_lookup[(row, u)] = len(pair_target_rows)
                pair_target_rows.append(row)
                pair_source_nodes.append(u)
                pair_u.append(u)
                pair_v.append(v)
                pair_t.append(t)
                for m in lags:
                    nbr_sources.append(u * p + (t - m))
                    nbr_lags.append(m)
                nbr_offsets.append(len(nbr_sources))

    outer_offsets = [0]
    outer_sources: list[int] = []
    outer_source_nodes: list[int] = []
    n_rows = n * p
    for v in range(n):
        members = sorted(set(graph.in_neighbors[v]) | {v})
        for t in range(p):
            row = v * p + t
            for u in members:
                if u == v:
                    outer_sources.append(row)
                else:
                    outer_sources.append(n_rows + pair_lookup[(row, u)])
                outer_source_nodes.append(u)
            outer_offsets.append(len(outer_sources))

    self_index = SegmentIndex(self_offsets, self_sources)
    nbr_index = SegmentIndex(nbr_offsets, nbr_sources)
    outer_index = SegmentIndex(outer_offsets, outer_sources)
    return TraverseGraph(
        n_nodes=n,
        p=p,
        window=window,
        self_index=self_index,
        self_lags=np.asarray(self_lags, dtype=np.int64),
        self_entry_target=np.repeat(np.arange(n_rows, dtype=np.int64), self_index.counts),
        nbr_index=nbr_index,
        nbr_lags=np.asarray(nbr_lags, dtype=np.int64),
        nbr_entry_target=np.repeat(np.asarray(pair_target_rows, dtype=np.int64),
                                   nbr_index.counts) if pair_target_rows else
        np.empty(0, dtype=np.int64),
        pair_target_rows=np.asarray(pair_target_rows, dtype=np.int64),
        pair_source_nodes=np.asarray(pair_source_nodes, dtype=np.int64),
        pair_u=np.asarray(pair_u, dtype=np.int64),
        pair_v=np.asarray(pair_v, dtype=np.int64),
        pair_t=np.asarray(pair_t, dtype=np.int64),
        outer_index=outer_index,
        outer_entry_target=np.repeat(np.arange(n_rows, dtype=np.int64), outer_index.counts),
        outer_source_nodes=np.asarray(outer_source_nodes, dtype=np.int64),
    )


def expected_source_count(graph: SpatialGraph, p: int, window: int) -> int:
    """Closed-form unrolled edge count: sum over v, t of (|N(v)|+1)*(min(window,t)+1)."""
    total = 0
    for v in range(graph.n_nodes):
        deg = len(graph.in_neighbors[v])
        for t in range(p):
            total += (deg + 1) * (min(window, t) + 1)
    return total

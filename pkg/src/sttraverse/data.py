"""Dataset ingestion and the lag-injected synthetic series generator.

Series files are plain CSV in one of two layouts, auto-detected from the
header:

* long:  ``time,node,feature,value`` with integer step/node ids and feature
  names or indices;
* wide:  ``time,n0_f0,n0_f1,...,n1_f0,...`` — one column per (node, feature).

Native binary traffic archives are not parsed; converting to this CSV
contract is the ingestion boundary.
"""

from __future__ import annotations

import configparser
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .graph import SpatialGraph, from_edge_list

_FLOAT_FMT = "%.17g"    # round-trips float64 exactly


@dataclass
class RawDataset:
    """Dense multivariate sensor series [N, D, T] plus naming metadata."""

    values: np.ndarray
    feature_names: list[str] = field(default_factory=list)
    interval_minutes: float | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise DataError(f"series must be [N, D, T], got shape {self.values.shape}")
        if not self.feature_names:
            self.feature_names = [f"f{i}" for i in range(self.values.shape[1])]
        if len(self.feature_names) != self.values.shape[1]:
            raise DataError("feature_names length disagrees with feature axis")
        if np.isnan(self.values).any():
            raise DataError("series contains NaN after ingestion")

    @property
    def n_nodes(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    @property
    def n_steps(self) -> int:
        return self.values.shape[2]


def _parse_cell(raw: str, path, lineno: int, column: str, missing: str,
                prev: float | None) -> float:
    text = raw.strip()
    if text == "" or text.lower() == "nan":
        if missing == "ffill" and prev is not None:
            return prev
        raise DataError(f"{path}:{lineno}: missing value in column {column!r}"
                        + ("" if missing == "ffill" else " (strict mode)"))
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"{path}:{lineno}: non-numeric value {raw!r} in column {column!r}")
    if math.isnan(value):
        if missing == "ffill" and prev is not None:
            return prev
        raise DataError(f"{path}:{lineno}: NaN value in column {column!r}")
    return value


def load_series_csv(path, missing: str = "strict") -> RawDataset:
    """Load a series CSV (layout auto-detected); see the module docstring.

    ``missing``: ``strict`` rejects empty/NaN cells naming the offending
    line, ``ffill`` forward-fills from the previous time step (a leading
    missing value is still an error).
    """
    if missing not in ("strict", "ffill"):
        raise ConfigError(f"missing policy must be 'strict' or 'ffill', got {missing!r}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if header[:1] != ["time"]:
            raise DataError(f"{path}:1: header must start with 'time', got {header[:1]}")
        rows = list(reader)
    if [h.lower() for h in header] == ["time", "node", "feature", "value"]:
        return _load_long(path, rows, missing)
    return _load_wide(path, header, rows, missing)


def _load_wide(path, header, rows, missing) -> RawDataset:
    columns = header[1:]
    nodes: list[int] = []
    feats: list[str] = []
    for col in columns:
        if not col.startswith("n") or "_" not in col:
            raise DataError(f"{path}:1: wide column {col!r} must look like 'n<id>_<feature>'")
        node_part, feat_part = col[1:].split("_", 1)
        try:
            nodes.append(int(node_part))
        except ValueError:
            raise DataError(f"{path}:1: bad node id in column {col!r}")
        feats.append(feat_part)
    n_nodes = max(nodes) + 1
    feature_names = list(dict.fromkeys(feats))
    n_feat = len(feature_names)
    expected = [(n, f) for n in range(n_nodes) for f in feature_names]
    if [(n, f) for n, f in zip(nodes, feats)] != expected:
        raise DataError(f"{path}:1: wide columns must enumerate n0..n{n_nodes - 1} "
                        f"x features in order")
    values = np.zeros((n_nodes, n_feat, len(rows)))
    for t, row in enumerate(rows):
        lineno = t + 2
        if len(row) != len(columns) + 1:
            raise DataError(f"{path}:{lineno}: expected {len(columns) + 1} cells, "
                            f"got {len(row)} (ragged row)")
        for c, cell in enumerate(row[1:]):
            n, f = divmod(c, n_feat)
            prev = values[n, f, t - 1] if t > 0 else None
            values[n, f, t] = _parse_cell(cell, path, lineno, columns[c], missing, prev)
    return RawDataset(values=values, feature_names=feature_names)


def _load_long(path, rows, missing) -> RawDataset:
    features: list[str] = []
    entries: list[tuple[int, int, str, float]] = []
    max_node = -1
    max_time = -1
    for i, row in enumerate(rows):
        lineno = i + 2
        if len(row) != 4:
            raise DataError(f"{path}:{lineno}: expected 4 cells, got {len(row)} (ragged row)")
        try:
            t, node = int(row[0]), int(row[1])
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-integer time or node id")
        if t < 0 or node < 0:
            raise DataError(f"{path}:{lineno}: negative time or node id")
        feat = row[2].strip()
        if feat not in features:
            features.append(feat)
        text = row[3].strip()
        if text == "" or text.lower() == "nan":
            if missing == "strict":
                raise DataError(f"{path}:{lineno}: missing value (strict mode)")
            value = math.nan
        else:
            try:
                value = float(text)
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric value {row[3]!r}")
            if math.isnan(value) and missing == "strict":
                raise DataError(f"{path}:{lineno}: NaN value (strict mode)")
        entries.append((t, node, feat, value))
        max_node = max(max_node, node)
        max_time = max(max_time, t)
    n_nodes, n_steps, n_feat = max_node + 1, max_time + 1, len(features)
    values = np.full((n_nodes, n_feat, n_steps), np.nan)
    for t, node, feat, value in entries:
        values[node, features.index(feat), t] = value
    # Cells never present in the file count as missing the same way NaN does.
    for n in range(n_nodes):
        for f in range(n_feat):
            for t in range(n_steps):
                if np.isnan(values[n, f, t]):
                    if missing == "ffill" and t > 0 and not np.isnan(values[n, f, t - 1]):
                        values[n, f, t] = values[n, f, t - 1]
                    else:
                        raise DataError(
                            f"{path}: missing value for time={t} node={n} "
                            f"feature={features[f]}")
    return RawDataset(values=values, feature_names=features)


def save_series_csv(path, dataset: RawDataset) -> None:
    """Write the wide layout with a canonical float format (byte-stable)."""
    n, d, t_len = dataset.values.shape
    header = ["time"] + [f"n{i}_{f}" for i in range(n) for f in dataset.feature_names]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        flat = dataset.values.transpose(2, 0, 1).reshape(t_len, n * d)
        for t in range(t_len):
            cells = [str(t)] + [_FLOAT_FMT % v for v in flat[t]]
            fh.write(",".join(cells) + "\n")


# Synthetic generator --------------------------------------------------------

@dataclass
class SynthSpec:
    """Lag-injected autoregressive generator spec.

    Each directed edge (u, v, lag, weight) couples node v to node u's value
    ``lag`` steps back.  Stability requires persistence plus the largest
    incoming |weight| sum to stay below 1.
    """

    n_nodes: int
    length: int
    edges: list[tuple[int, int, int, float]]
    persistence: float = 0.3
    season_period: float = 24.0
    season_amp: float = 0.5
    noise: float = 0.05
    seed: int = 0

    def incoming_weight(self) -> float:
        totals = np.zeros(self.n_nodes)
        for _, v, _, w in self.edges:
            totals[v] += abs(w)
        return float(totals.max()) if self.n_nodes else 0.0

    def validate(self) -> None:
        if self.n_nodes < 1 or self.length < 1:
            raise ConfigError("n_nodes and length must be >= 1")
        for u, v, lag, w in self.edges:
            if not (0 <= u < self.n_nodes and 0 <= v < self.n_nodes):
                raise ConfigError(f"edge ({u}, {v}) out of range")
            if lag < 0:
                raise ConfigError(f"edge ({u}, {v}) has negative lag {lag}")
        total = abs(self.persistence) + self.incoming_weight()
        if total >= 1.0:
            raise ConfigError(
                f"unstable spec: |persistence| + max incoming |weights| = {total:.3f} >= 1")

    @property
    def max_lag(self) -> int:
        return max((lag for _, _, lag, _ in self.edges), default=0)

    def graph(self, symmetrize: bool = False) -> SpatialGraph:
        return from_edge_list(self.n_nodes, [(u, v) for u, v, _, _ in self.edges],
                              symmetrize=symmetrize)


def generate(spec: SynthSpec) -> tuple[RawDataset, SpatialGraph, list[tuple[int, int, int, float]]]:
    """Simulate the coupled autoregressive system and drop the warm-up.

    x_v(t) = a*x_v(t-1) + sum_e w_e*x_u(t-lag_e) + s*sin(2*pi*t/P + phi_v) + noise,
    with phi_v = 2*pi*v/N and 5*max_lag warm-up steps discarded.  Returns the
    dataset, the (directed) coupling graph, and the ground-truth lag table.
    """
    spec.validate()
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x5e71e5]))
    warmup = 5 * spec.max_lag
    total = spec.length + warmup
    n = spec.n_nodes
    x = np.zeros((n, total))
    eps = rng.normal(0.0, spec.noise, size=(n, total)) if spec.noise > 0 else np.zeros((n, total))
    phases = 2.0 * np.pi * np.arange(n) / n
    incoming: list[list[tuple[int, int, float]]] = [[] for _ in range(n)]
    for u, v, lag, w in spec.edges:
        incoming[v].append((u, lag, w))
    omega = 2.0 * np.pi / spec.season_period if spec.season_period > 0 else 0.0
    for t in range(total):
        season = spec.season_amp * np.sin(omega * t + phases) if spec.season_amp else 0.0
        for v in range(n):
            acc = spec.persistence * x[v, t - 1] if t >= 1 else 0.0
            for u, lag, w in incoming[v]:
                if t - lag >= 0:
                    acc += w * x[u, t - lag]
            x[v, t] = acc + (season[v] if spec.season_amp else 0.0) + eps[v, t]
    dataset = RawDataset(values=x[:, warmup:][:, None, :], feature_names=["signal"])
    lag_table = [(u, v, lag, w) for u, v, lag, w in spec.edges]
    return dataset, spec.graph(), lag_table


def write_lag_table(path, lag_table) -> None:
    with open(path, "w") as fh:
        fh.write("u,v,lag,weight\n")
        for u, v, lag, w in lag_table:
            fh.write(f"{u},{v},{lag},{_FLOAT_FMT % w}\n")


def load_synth_spec(path) -> SynthSpec:
    """Parse a generator spec from a ``[synth]`` section of key = value lines.

    Edges are semicolon- or newline-separated ``u v lag weight`` quadruples.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    read = parser.read(path)
    if not read:
        raise DataError(f"cannot read synth spec {path}")
    if "synth" not in parser:
        raise DataError(f"{path}: missing [synth] section")
    section = parser["synth"]
    edges: list[tuple[int, int, int, float]] = []
    for chunk in section.get("edges", "").replace("\n", ";").split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split()
        if len(parts) != 4:
            raise DataError(f"{path}: edge entry {chunk!r} must be 'u v lag weight'")
        edges.append((int(parts[0]), int(parts[1]), int(parts[2]), float(parts[3])))
    try:
        spec = SynthSpec(
            n_nodes=section.getint("n_nodes"),
            length=section.getint("length"),
            edges=edges,
            persistence=section.getfloat("persistence", 0.3),
            season_period=section.getfloat("season_period", 24.0),
            season_amp=section.getfloat("season_amp", 0.5),
            noise=section.getfloat("noise", 0.05),
            seed=section.getint("seed", 0),
        )
    except (TypeError, ValueError) as exc:
        raise DataError(f"{path}: bad synth spec: {exc}") from exc
    spec.validate()
    return spec


def write_synth_spec(path, spec: SynthSpec) -> None:
    lines = ["[synth]", f"n_nodes = {spec.n_nodes}", f"length = {spec.length}",
             f"persistence = {spec.persistence!r}", f"season_period = {spec.season_period!r}",
             f"season_amp = {spec.season_amp!r}", f"noise = {spec.noise!r}",
             f"seed = {spec.seed}"]
    edge_text = "; ".join(f"{u} {v} {lag} {w!r}" for u, v, lag, w in spec.edges)
    lines.append(f"edges = {edge_text}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")

"""Dataset preparation, the MAE training loop, metrics, and the sweep harness."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, fields, replace
from typing import Callable, Iterable, Optional

import numpy as np

from .engine import Adam, Tape, Tensor
from .errors import ConfigError, DataError, DivergenceError, ShapeError
from .graph import SpatialGraph
from .model import ModelConfig, ModelParams, PipelineGraphs, forward, init_params

STD_FLOOR = 1e-8


def standardize(raw: np.ndarray, train_len: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Zero-mean/unit-variance scaling with statistics from the training range only.

    ``raw`` is [N, D, T]; statistics are per feature, population variance,
    with the deviation floored at ``STD_FLOOR`` for constant features.
    Returns (scaled, mean[D], std[D]).
    """
    if raw.ndim != 3:
        raise DataError(f"series must be [N, D, T], got shape {raw.shape}")
    if train_len < 1 or train_len > raw.shape[2]:
        raise DataError(f"train length {train_len} invalid for T={raw.shape[2]}")
    head = raw[:, :, :train_len]
    mean = head.mean(axis=(0, 2))
    std = np.maximum(head.std(axis=(0, 2)), STD_FLOOR)
    scaled = (raw - mean[None, :, None]) / std[None, :, None]
    return scaled, mean, std


def split_lengths(total: int, ratios: tuple[float, float, float]) -> tuple[int, int, int]:
    """Partition ``total`` steps by the given ratios (train gets the remainder)."""
    if any(r < 0 for r in ratios) or sum(ratios) <= 0:
        raise ConfigError(f"split ratios must be positive, got {ratios}")
    frac = np.asarray(ratios, dtype=float) / sum(ratios)
    n_val = int(total * frac[1])
    n_test = int(total * frac[2])
    n_train = total - n_val - n_test
    if n_train < 1:
        raise ConfigError(f"train split empty for T={total}, ratios={ratios}")
    return n_train, n_val, n_test


@dataclass
class SeriesDataset:
    """Standardized multivariate series with windowed train/val/test samples.

    Windows use stride 1 and never cross a split boundary; each split of
    length L yields max(0, L - p - q + 1) samples.
    """

    raw: np.ndarray            # [N, D, T]
    scaled: np.ndarray         # [N, D, T]
    mean: np.ndarray           # [D]
    std: np.ndarray            # [D]
    input_len: int
    horizon: int
    target_feature: int
    bounds: dict[str, tuple[int, int]]

    @classmethod
    def build(cls, raw: np.ndarray, input_len: int, horizon: int,
              ratios: tuple[float, float, float] = (0.6, 0.2, 0.2),
              target_feature: int = 0) -> "SeriesDataset":
        raw = np.asarray(raw, dtype=np.float64)
        if raw.ndim != 3:
            raise DataError(f"series must be [N, D, T], got shape {raw.shape}")
        if not 0 <= target_feature < raw.shape[1]:
            raise ConfigError(f"target feature {target_feature} out of range "
                              f"for D={raw.shape[1]}")
        n_train, n_val, n_test = split_lengths(raw.shape[2], ratios)
        scaled, mean, std = standardize(raw, n_train)
        bounds = {
            "train": (0, n_train),
            "val": (n_train, n_train + n_val),
            "test": (n_train + n_val, n_train + n_val + n_test),
        }
        ds = cls(raw=raw, scaled=scaled, mean=mean, std=std, input_len=input_len,
                 horizon=horizon, target_feature=target_feature, bounds=bounds)
        if ds.n_samples("train") < 1:
            raise ConfigError(
                f"train split of length {n_train} too short for p={input_len}, q={horizon}")
        return ds

    @property
    def n_nodes(self) -> int:
        return self.raw.shape[0]

    @property
    def n_features(self) -> int:
        return self.raw.shape[1]

    def sample_starts(self, split: str) -> np.ndarray:
        lo, hi = self.bounds[split]
        count = max(0, (hi - lo) - self.input_len - self.horizon + 1)
        return lo + np.arange(count, dtype=np.int64)

    def n_samples(self, split: str) -> int:
        return len(self.sample_starts(split))

    def batch(self, starts: Iterable[int]) -> tuple[np.ndarray, np.ndarray]:
        """Stack standardized (input, target) windows for the given start steps."""
        starts = np.asarray(list(starts), dtype=np.int64)
        p, q, f = self.input_len, self.horizon, self.target_feature
        xs = np.stack([self.scaled[:, :, s:s + p] for s in starts])
        ys = np.stack([self.scaled[:, f, s + p:s + p + q] for s in starts])
        return xs, ys

    def inverse_target(self, values: np.ndarray) -> np.ndarray:
        """Map standardized target-feature values back to raw units."""
        return values * self.std[self.target_feature] + self.mean[self.target_feature]

    def naive_last_value(self, starts: Iterable[int]) -> np.ndarray:
        """Baseline forecast: repeat the last observed raw value over the horizon."""
        starts = np.asarray(list(starts), dtype=np.int64)
        p, q, f = self.input_len, self.horizon, self.target_feature
        last = np.stack([self.raw[:, f, s + p - 1] for s in starts])   # [B, N]
        return np.repeat(last[:, :, None], q, axis=2)


@dataclass
class TrainConfig:
    epochs: int = 50
    lr: float = 1e-3
    weight_decay: float = 1e-5
    batch_size: int = 32
    split: tuple[float, float, float] = (0.6, 0.2, 0.2)
    seed: int = 0
    target_feature: int = 0
    mape_threshold: float = 1e-3

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if len(self.split) != 3:
            raise ConfigError(f"split must have 3 ratios, got {self.split}")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class MetricReport:
    mae: float
    rmse: float
    mape: float                       # percent; NaN when every target is masked
    per_step: Optional[np.ndarray] = None   # optional [q, 3] breakdown

    def as_row(self) -> str:
        return f"{self.mae:.6f},{self.rmse:.6f},{self.mape:.6f}"


def mae_loss(pred: Tensor, target) -> Tensor:
    """Mean absolute error over all elements (subgradient 0 at ties)."""
    tv = target.values if isinstance(target, Tensor) else np.asarray(target)
    if pred.shape != tv.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {tv.shape}")
    return (pred - tv).abs().mean()


def metrics(pred: np.ndarray, target: np.ndarray, mape_threshold: float = 1e-3,
            per_step: bool = False) -> MetricReport:
    """MAE / RMSE / MAPE on (raw-unit) arrays of any matching shape.

    MAPE averages |err|/|y| in percent over entries with |y| above the mask
    threshold; with every entry masked it is reported as NaN.  The optional
    per-step breakdown treats the last axis as the forecast horizon.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {target.shape}")
    err = pred - target

    def _triplet(e: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
        mae = float(np.mean(np.abs(e)))
        rmse = float(np.sqrt(np.mean(e * e)))
        mask = np.abs(y) > mape_threshold
        mape = float(np.mean(np.abs(e[mask]) / np.abs(y[mask])) * 100.0) if mask.any() else float("nan")
        return mae, rmse, mape

    mae, rmse, mape = _triplet(err, target)
    steps = None
    if per_step:
        q = pred.shape[-1]
        steps = np.array([_triplet(err[..., i], target[..., i]) for i in range(q)])
    return MetricReport(mae=mae, rmse=rmse, mape=mape, per_step=steps)


@dataclass
class EpochStats:
    epoch: int
    train_mae: float   # standardized units, mean over batches
    val: MetricReport  # raw units
    seconds: float


@dataclass
class TrainResult:
    params: ModelParams            # best-validation weights
    history: list[EpochStats]
    best_epoch: int
    best_val_mae: float
    test: MetricReport
    naive_test: MetricReport
    optimizer_state: dict[str, np.ndarray]
    model_config: ModelConfig
    train_config: TrainConfig


def evaluate(params: ModelParams, dataset: SeriesDataset, graphs: PipelineGraphs,
             split: str, batch_size: int = 256,
             mape_threshold: float = 1e-3, per_step: bool = False) -> MetricReport:
    """Raw-unit metrics of ``params`` over every window of one split."""
    starts = dataset.sample_starts(split)
    preds, targets = [], []
    for i in range(0, len(starts), batch_size):
        xs, ys = dataset.batch(starts[i:i + batch_size])
        pred, _ = forward(params, xs, graphs, mode="eval")
        preds.append(pred.values)
        targets.append(ys)
    pred = dataset.inverse_target(np.concatenate(preds))
    target = dataset.inverse_target(np.concatenate(targets))
    return metrics(pred, target, mape_threshold, per_step=per_step)


def naive_metrics(dataset: SeriesDataset, split: str,
                  mape_threshold: float = 1e-3) -> MetricReport:
    """Metrics of the last-value baseline over one split (raw units)."""
    starts = dataset.sample_starts(split)
    pred = dataset.naive_last_value(starts)
    p, q, f = dataset.input_len, dataset.horizon, dataset.target_feature
    target = np.stack([dataset.raw[:, f, s + p:s + p + q] for s in starts])
    return metrics(pred, target, mape_threshold)


def train(model_config: ModelConfig, train_config: TrainConfig,
          dataset: SeriesDataset, graph: SpatialGraph,
          progress: Optional[Callable[[EpochStats], None]] = None) -> TrainResult:
    """Mini-batch Adam on the MAE loss with best-validation checkpointing.

    Batch order is reshuffled each epoch from the run seed; the last partial
    batch is kept.  After each epoch the validation MAE decides whether the
    current weights (and optimizer state) become the retained checkpoint; the
    final test report comes from that checkpoint.  A non-finite loss aborts
    with a diagnostic naming the epoch and batch.
    """
    if dataset.input_len != model_config.input_len or dataset.horizon != model_config.horizon:
        raise ConfigError("dataset window lengths disagree with the model config")
    graphs = PipelineGraphs.build(graph, model_config)
    params = init_params(model_config)
    optimizer = Adam(params.named_tensors(), lr=train_config.lr,
                     weight_decay=train_config.weight_decay)
    rng = np.random.default_rng(np.random.SeedSequence([train_config.seed, 0x7ea1]))
    tape = Tape()

    best: tuple[int, float, ModelParams, dict[str, np.ndarray]] | None = None
    history: list[EpochStats] = []
    train_starts = dataset.sample_starts("train")
    bs = train_config.batch_size

    for epoch in range(train_config.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(len(train_starts))
        batch_losses = []
        for bi in range(0, len(order), bs):
            xs, ys = dataset.batch(train_starts[order[bi:bi + bs]])
            with tape.recording():
                pred, _ = forward(params, xs, graphs, mode="train", rng=rng)
                loss = mae_loss(pred, ys.astype(model_config.dtype))
            value = loss.item()
            if not np.isfinite(value):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, batch {bi // bs}")
            tape.backward(loss)
            optimizer.step()
            optimizer.clear_grads()
            tape.reset()
            batch_losses.append(value)
        val = evaluate(params, dataset, graphs, "val",
                       mape_threshold=train_config.mape_threshold)
        stats = EpochStats(epoch=epoch,
                           train_mae=float(np.mean(batch_losses)) if batch_losses else float("nan"),
                           val=val, seconds=time.perf_counter() - t0)
        history.append(stats)
        if progress is not None:
            progress(stats)
        if best is None or val.mae < best[1]:
            best = (epoch, val.mae, params.clone(),
                    {k: v.copy() for k, v in optimizer.state_arrays().items()})

    if best is None:   # epochs == 0: report the untrained weights
        best = (-1, evaluate(params, dataset, graphs, "val",
                             mape_threshold=train_config.mape_threshold).mae,
                params.clone(), optimizer.state_arrays())
    best_epoch, best_val_mae, best_params, best_opt = best
    test = evaluate(best_params, dataset, graphs, "test",
                    mape_threshold=train_config.mape_threshold, per_step=True)
    naive = naive_metrics(dataset, "test", train_config.mape_threshold)
    return TrainResult(params=best_params, history=history, best_epoch=best_epoch,
                       best_val_mae=best_val_mae, test=test, naive_test=naive,
                       optimizer_state=best_opt, model_config=model_config,
                       train_config=train_config)


SWEEP_AXES = {
    "layers": ("model", "n_layers", int),
    "hidden": ("model", "hidden", int),
    "window": ("model", "window", int),
    "dropout": ("model", "dropout", float),
    "lr": ("train", "lr", float),
    "weight_decay": ("train", "weight_decay", float),
}

DEFAULT_SWEEP_VALUES = {
    "layers": [1, 2, 3, 4, 5, 6],
    "hidden": [32, 64, 96, 128, 160, 192],
    "window": [2, 4, 6, 8, 10, 12],
    "dropout": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
    "lr": [1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1],
    "weight_decay": [1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1],
}


@dataclass
class SweepRow:
    value: float
    mean_val_mae: float
    std_val_mae: float
    is_argmin: bool = False


def sweep(model_config: ModelConfig, train_config: TrainConfig, raw: np.ndarray,
          graph: SpatialGraph, axis: str, values=None, repeats: int = 5,
          progress: Optional[Callable[[str], None]] = None) -> list[SweepRow]:
    """Vary one hyperparameter; 5 seeded repetitions per point by default.

    Each point reports mean and std of the best-validation MAE.  The window
    axis rebuilds the traverse graphs per value; every run re-windows the
    same raw series so points stay comparable.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; one of {sorted(SWEEP_AXES)}")
    section, name, cast = SWEEP_AXES[axis]
    values = DEFAULT_SWEEP_VALUES[axis] if values is None else list(values)
    rows: list[SweepRow] = []
    for value in values:
        value = cast(value)
        mcfg = replace(model_config, **{name: value}) if section == "model" else model_config
        tcfg = replace(train_config, **{name: value}) if section == "train" else train_config
        dataset = SeriesDataset.build(raw, mcfg.input_len, mcfg.horizon,
                                      tcfg.split, tcfg.target_feature)
        maes = []
        for r in range(repeats):
            m = replace(mcfg, seed=mcfg.seed + r)
            t = replace(tcfg, seed=tcfg.seed + r)
            result = train(m, t, dataset, graph)
            maes.append(result.best_val_mae)
            if progress is not None:
                progress(f"{axis}={value} repeat {r}: val MAE {maes[-1]:.4f}")
        rows.append(SweepRow(value=float(value), mean_val_mae=float(np.mean(maes)),
                             std_val_mae=float(np.std(maes))))
    if rows:
        argmin = int(np.argmin([r.mean_val_mae for r in rows]))
        rows[argmin].is_argmin = True
    return rows

"""Bit-exact checkpoint container (single .npz file).

Stores the model/training config echo, seed, every parameter tensor, the
batch-norm running statistics, the Adam state, and the standardization
statistics needed for inference.  Round-trip load reproduces every array
bit-for-bit.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import DataError
from .model import ModelConfig, ModelParams, init_params
from .training import TrainConfig

FORMAT_VERSION = 1


def save_checkpoint(path, params: ModelParams, train_config: TrainConfig | None = None,
                    optimizer_state: dict[str, np.ndarray] | None = None,
                    scaler_mean: np.ndarray | None = None,
                    scaler_std: np.ndarray | None = None,
                    extra_meta: dict | None = None) -> None:
    meta = {
        "version": FORMAT_VERSION,
        "model_config": params.config.to_dict(),
        "train_config": train_config.to_dict() if train_config else None,
        "seed": params.config.seed,
        "extra": extra_meta or {},
    }
    arrays: dict[str, np.ndarray] = {"__meta__": np.array(json.dumps(meta, sort_keys=True))}
    for name, tensor in params.named_tensors().items():
        arrays[f"param/{name}"] = tensor.values
    for name, arr in params.state_arrays().items():
        arrays[f"state/{name}"] = arr
    if optimizer_state:
        for name, arr in optimizer_state.items():
            arrays[f"adam/{name}"] = arr
    if scaler_mean is not None:
        arrays["scaler/mean"] = np.asarray(scaler_mean)
        arrays["scaler/std"] = np.asarray(scaler_std)
    np.savez(path, **arrays)


def load_checkpoint(path) -> tuple[ModelParams, TrainConfig | None,
                                   dict[str, np.ndarray], dict]:
    """Rebuild (params, train_config, adam_state, extras) from a checkpoint file.

    ``extras`` carries the scaler arrays and any extra metadata.
    """
    try:
        with np.load(path, allow_pickle=False) as bundle:
            arrays = {name: bundle[name] for name in bundle.files}
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if "__meta__" not in arrays:
        raise DataError(f"{path}: not a checkpoint (missing metadata)")
    meta = json.loads(str(arrays.pop("__meta__")))
    if meta.get("version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {meta.get('version')}")

    config = ModelConfig(**meta["model_config"])
    params = init_params(config)
    for name, tensor in params.named_tensors().items():
        key = f"param/{name}"
        if key not in arrays:
            raise DataError(f"{path}: checkpoint missing parameter {name}")
        if arrays[key].shape != tensor.values.shape:
            raise DataError(f"{path}: parameter {name} has shape {arrays[key].shape}, "
                            f"expected {tensor.values.shape}")
        tensor.values = arrays[key].copy()
    for name, arr in params.state_arrays().items():
        key = f"state/{name}"
        if key in arrays:
            arr[...] = arrays[key]

    tc = meta.get("train_config")
    train_config = None
    if tc is not None:
        tc = dict(tc)
        tc["split"] = tuple(tc["split"])
        train_config = TrainConfig(**tc)
    adam_state = {name[len("adam/"):]: arr for name, arr in arrays.items()
                  if name.startswith("adam/")}
    extras = dict(meta.get("extra", {}))
    if "scaler/mean" in arrays:
        extras["scaler_mean"] = arrays["scaler/mean"]
        extras["scaler_std"] = arrays["scaler/std"]
    return params, train_config, adam_state, extras

"""Finite-difference verification of every differentiable operation.

Each check builds a scalar loss from one operation (or the whole model),
computes analytic gradients on a tape, and compares them against central
finite differences.  Inputs that would sit on a kink (leaky-ReLU at 0, MAE
at ties) are nudged away from it, matching the subgradient conventions.
"""

from __future__ import annotations

import numpy as np

from .engine import (
    BatchNormState,
    SegmentIndex,
    Tensor,
    batchnorm_node,
    concat_rows,
    conv_time,
    gather_rows,
    leaky_relu,
    matmul,
    segment_softmax,
    segment_sum,
    slice_rows,
)
from .engine.gradcheck import (
    CheckResult,
    FD_STEP,
    check_gradients,
    numeric_directional,
    relative_error,
)
from .engine.tensor import Tape
from .graph import from_edge_list
from .layers import attention
from .model import ModelConfig, PipelineGraphs, forward, init_params
from .training import mae_loss

TOLERANCE = 1e-4


def _away_from(x: np.ndarray, margin: float = 5e-4) -> np.ndarray:
    """Push values out of a +-margin band around 0 (kink guard for FD)."""
    out = x.copy()
    small = np.abs(out) < margin
    out[small] = margin * np.where(out[small] >= 0, 1.0, -1.0)
    return out


def _rand(rng, *shape):
    return rng.uniform(-2.0, 2.0, size=shape)


def op_checks(seed: int) -> list[CheckResult]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x0b5]))
    checks: list[CheckResult] = []

    def run(name, build, arrays):
        checks.append(CheckResult(name, check_gradients(build, arrays), TOLERANCE))

    c1 = _rand(rng, 3, 2)
    run("matmul", lambda ts: (matmul(ts[0], ts[1]) * Tensor(c1)).sum(),
        [_rand(rng, 3, 4), _rand(rng, 4, 2)])

    c2 = _rand(rng, 3, 4)
    run("add_broadcast", lambda ts: ((ts[0] + ts[1]) * Tensor(c2)).sum(),
        [_rand(rng, 3, 4), _rand(rng, 4)])
    run("mul", lambda ts: ((ts[0] * ts[1]) * Tensor(c2)).sum(),
        [_rand(rng, 3, 4), _rand(rng, 3, 4)])
    run("div", lambda ts: ((ts[0] / ts[1]) * Tensor(c2)).sum(),
        [_rand(rng, 3, 4), _away_from(_rand(rng, 3, 4), 0.5)])
    run("sub", lambda ts: ((ts[0] - ts[1]) * Tensor(c2)).sum(),
        [_rand(rng, 3, 4), _rand(rng, 3, 4)])

    run("leaky_relu", lambda ts: (leaky_relu(ts[0], 0.2) * Tensor(c2)).sum(),
        [_away_from(_rand(rng, 3, 4))])
    run("abs", lambda ts: (ts[0].abs() * Tensor(c2)).sum(),
        [_away_from(_rand(rng, 3, 4))])
    run("sqrt", lambda ts: (ts[0].sqrt() * Tensor(c2)).sum(),
        [np.abs(_rand(rng, 3, 4)) + 0.5])
    c_mean = _rand(rng, 1, 3, 1)
    run("mean_axes", lambda ts: (ts[0].mean(axis=(0, 2), keepdims=True)
                                 * Tensor(c_mean)).sum(),
        [_rand(rng, 2, 3, 4)])
    c_tr = _rand(rng, 3, 8)
    run("transpose_reshape",
        lambda ts: (ts[0].transpose(1, 0, 2).reshape(3, 8) * Tensor(c_tr)).sum(),
        [_rand(rng, 2, 3, 4)])

    rows = np.array([0, 2, 1, 2, 0, 3])
    c3 = _rand(rng, 6, 3)
    run("gather_rows", lambda ts: (gather_rows(ts[0], rows) * Tensor(c3)).sum(),
        [_rand(rng, 4, 3)])

    seg = SegmentIndex([0, 2, 5, 6], np.arange(6))
    c4 = _rand(rng, 6, 1)
    run("segment_softmax", lambda ts: (segment_softmax(ts[0], seg) * Tensor(c4)).sum(),
        [_rand(rng, 6, 1)])
    c5 = _rand(rng, 3, 2)
    run("segment_sum", lambda ts: (segment_sum(ts[0], seg) * Tensor(c5)).sum(),
        [_rand(rng, 6, 2)])

    c6 = _rand(rng, 5, 3)
    c6b = _rand(rng, 1, 3)
    run("concat_slice",
        lambda ts: ((concat_rows(ts[0], ts[1]) * Tensor(c6)).sum()
                    + (slice_rows(ts[0], 0, 1) * Tensor(c6b)).sum()),
        [_rand(rng, 2, 3), _rand(rng, 3, 3)])

    c7 = _rand(rng, 2, 3, 2)
    run("conv_time", lambda ts: ((conv_time(ts[0], ts[1]).reshape(2, 3, 2)) * Tensor(c7)).sum(),
        [_rand(rng, 2, 3, 4, 5), _rand(rng, 2, 4, 5)])

    state = BatchNormState.create(3, 2)
    c8 = _rand(rng, 2, 3, 2, 4)

    def bn_train(ts):
        st = BatchNormState(gain=ts[1], bias=ts[2],
                            running_mean=state.running_mean.copy(),
                            running_var=state.running_var.copy())
        return (batchnorm_node(ts[0], st, training=True) * Tensor(c8)).sum()

    run("batchnorm_train", bn_train,
        [_rand(rng, 2, 3, 2, 4), np.full((1, 3, 2, 1), 1.2), np.full((1, 3, 2, 1), 0.3)])

    frozen = BatchNormState(gain=Tensor(np.ones((1, 3, 2, 1))),
                            bias=Tensor(np.zeros((1, 3, 2, 1))),
                            running_mean=_rand(rng, 1, 3, 2, 1),
                            running_var=np.abs(_rand(rng, 1, 3, 2, 1)) + 0.5)

    def bn_eval(ts):
        st = BatchNormState(gain=ts[1], bias=ts[2],
                            running_mean=frozen.running_mean,
                            running_var=frozen.running_var)
        return (batchnorm_node(ts[0], st, training=False) * Tensor(c8)).sum()

    run("batchnorm_eval", bn_eval,
        [_rand(rng, 2, 3, 2, 4), np.full((1, 3, 2, 1), 0.9), np.full((1, 3, 2, 1), -0.2)])

    target = _rand(rng, 3, 4)
    pred0 = target + _away_from(_rand(rng, 3, 4), 0.2)   # keep |pred - target| > 0
    run("mae_loss", lambda ts: mae_loss(ts[0], target), [pred0])

    from .layers import AttentionParams
    d = 4
    c9 = _rand(rng, 5)

    def att_build(ts):
        ap = AttentionParams(query_proj=ts[2], key_proj=ts[3], score=ts[4])
        return (attention(ts[0], ts[1], ap, slope=0.2) * Tensor(c9)).sum()

    run("attention", att_build,
        [_rand(rng, d), _rand(rng, 5, d), _rand(rng, d, d), _rand(rng, d, d),
         _rand(rng, 2 * d, 1)])
    return checks


def model_check(seed: int, n_layers: int = 2, hidden: int = 8, n_nodes: int = 4,
                input_len: int = 6, window: int = 3, ablation: str = "default",
                step: float = FD_STEP) -> CheckResult:
    """Directional FD check of the full forward pass, one direction per tensor.

    Train mode (batch statistics on the differentiable path), dropout 0, and
    a smooth linear readout of the predictions as the scalar loss.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x10de1]))
    cfg = ModelConfig(n_nodes=n_nodes, input_dim=2, n_layers=n_layers, hidden=hidden,
                      window=window, input_len=input_len, horizon=4, dropout=0.0,
                      seed=seed, ablation=ablation)
    pairs = [(u, v) for u in range(n_nodes) for v in range(n_nodes)
             if u != v and rng.random() < 0.5]
    graph = from_edge_list(n_nodes, pairs or [(0, 1)], symmetrize=True)
    params = init_params(cfg)
    graphs = PipelineGraphs.build(graph, cfg)
    x = rng.standard_normal((2, n_nodes, 2, input_len))
    readout = rng.standard_normal((2, n_nodes, 4))
    named = params.named_tensors()
    bn_backup = [(n.running_mean.copy(), n.running_var.copy()) for n in params.norms]

    def restore_bn():
        for st, (m, v) in zip(params.norms, bn_backup):
            st.running_mean[...] = m
            st.running_var[...] = v

    def loss_value() -> float:
        pred, _ = forward(params, x, graphs, mode="train")
        restore_bn()
        return float((pred.values * readout).mean())

    tape = Tape()
    with tape.recording():
        pred, _ = forward(params, x, graphs, mode="train")
        loss = (pred * Tensor(readout)).mean()
    tape.backward(loss)
    restore_bn()

    worst = 0.0
    for name, tensor in named.items():
        grad = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.values)
        direction = rng.standard_normal(tensor.values.shape)
        base = tensor.values.copy()
        tensor.values[...] = base + step * direction
        f_plus = loss_value()
        tensor.values[...] = base - step * direction
        f_minus = loss_value()
        tensor.values[...] = base
        numeric = (f_plus - f_minus) / (2.0 * step)
        analytic = float((grad * direction).sum())
        worst = max(worst, relative_error(np.array([analytic]), np.array([numeric])))
    return CheckResult(f"model[{ablation}]", worst, TOLERANCE)


def run_suite(n_seeds: int = 20, with_model: bool = True) -> list[CheckResult]:
    """All per-op checks plus the end-to-end model check, over ``n_seeds`` seeds.

    Per check name, the worst error across seeds is reported.
    """
    worst: dict[str, CheckResult] = {}
    for seed in range(n_seeds):
        results = op_checks(seed)
        if with_model:
            results.append(model_check(seed))
        for res in results:
            prev = worst.get(res.name)
            if prev is None or res.max_rel_error > prev.max_rel_error:
                worst[res.name] = res
    return list(worst.values())

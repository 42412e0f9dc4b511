"""Central finite-difference checks for analytic gradients.

Used both by the test suite and by the ``gradcheck`` CLI command.  The
numeric side never touches the tape: it re-runs the forward function on
perturbed copies of the inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor

FD_STEP = 1e-5


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max elementwise |a - n| / max(|a|, |n|, 1)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1.0)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / denom))


def numeric_gradient(f: Callable[[Sequence[np.ndarray]], float],
                     arrays: Sequence[np.ndarray], index: int,
                     step: float = FD_STEP) -> np.ndarray:
    """Central-difference gradient of f w.r.t. arrays[index], elementwise."""
    arrays = [a.copy() for a in arrays]
    target = arrays[index]
    grad = np.zeros_like(target)
    flat = target.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        f_plus = f(arrays)
        flat[i] = orig - step
        f_minus = f(arrays)
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def numeric_directional(f: Callable[[Sequence[np.ndarray]], float],
                        arrays: Sequence[np.ndarray], index: int,
                        direction: np.ndarray, step: float = FD_STEP) -> float:
    """Central-difference directional derivative along ``direction``."""
    arrays = [a.copy() for a in arrays]
    base = arrays[index].copy()
    arrays[index][...] = base + step * direction
    f_plus = f(arrays)
    arrays[index][...] = base - step * direction
    f_minus = f(arrays)
    return (f_plus - f_minus) / (2.0 * step)


def analytic_gradients(build: Callable[[Sequence[Tensor]], Tensor],
                       arrays: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Run ``build`` on a fresh tape and return grads for every input."""
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    tape = Tape()
    with tape.recording():
        loss = build(tensors)
    tape.backward(loss)
    return [t.grad if t.grad is not None else np.zeros_like(t.values) for t in tensors]


def check_gradients(build: Callable[[Sequence[Tensor]], Tensor],
                    arrays: Sequence[np.ndarray], step: float = FD_STEP) -> float:
    """Max relative error between analytic and numeric grads over all inputs.

    ``build`` maps input Tensors to a scalar loss Tensor, and is re-invoked
    with plain arrays (wrapped without grad) for the numeric side.
    """

    def scalar_f(plain: Sequence[np.ndarray]) -> float:
        return build([Tensor(a) for a in plain]).item()

    analytic = analytic_gradients(build, arrays)
    worst = 0.0
    for i in range(len(arrays)):
        numeric = numeric_gradient(scalar_f, arrays, i, step=step)
        worst = max(worst, relative_error(analytic[i], numeric))
    return worst


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

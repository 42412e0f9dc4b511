"""Adam with decoupled weight decay."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def adam_step(values: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray,
              step: int, lr: float, weight_decay: float = 0.0,
              betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> None:
    """One in-place Adam update with bias correction.

    Decoupled weight decay shrinks the parameter *before* the Adam update:
    ``p -= lr * wd * p``.  ``step`` is the 1-based update count.
    """
    b1, b2 = betas
    if weight_decay:
        values -= lr * weight_decay * values
    m *= b1
    m += (1.0 - b1) * grad
    v *= b2
    v += (1.0 - b2) * grad * grad
    m_hat = m / (1.0 - b1 ** step)
    v_hat = v / (1.0 - b2 ** step)
    values -= lr * m_hat / (np.sqrt(v_hat) + eps)


class Adam:
    """Adam over a named parameter dict; missing grads count as zero."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 weight_decay: float = 0.0, betas: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.betas = betas
        self.eps = eps
        self.step_count = 0
        self.moments = {
            name: (np.zeros_like(p.values), np.zeros_like(p.values))
            for name, p in params.items()
        }

    def step(self) -> None:
        self.step_count += 1
        for name, p in self.params.items():
            grad = p.grad if p.grad is not None else np.zeros_like(p.values)
            m, v = self.moments[name]
            adam_step(p.values, grad, m, v, self.step_count, self.lr,
                      self.weight_decay, self.betas, self.eps)

    def clear_grads(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Flat view of optimizer state for checkpointing."""
        out: dict[str, np.ndarray] = {"step": np.array([self.step_count], dtype=np.int64)}
        for name, (m, v) in self.moments.items():
            out[f"{name}.m"] = m
            out[f"{name}.v"] = v
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.step_count = int(arrays["step"][0])
        for name in self.moments:
            self.moments[name] = (arrays[f"{name}.m"].copy(), arrays[f"{name}.v"].copy())

"""Adam with bias correction and global-norm gradient clipping."""

from dataclasses import dataclass, field

import numpy as np

from src.config.train_config import TrainConfig
from src.errors import NumericError
from src.model.neural import NeuralParams


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def zeros(cls, params: NeuralParams) -> "AdamState":
        return cls(
            0,
            {n: np.zeros_like(a) for n, a in params.arrays.items()},
            {n: np.zeros_like(a) for n, a in params.arrays.items()},
        )


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> tuple[dict[str, np.ndarray], float]:
    """Scale all gradients together so their global norm is at most `max_norm`.

    Returns the clipped gradients and the norm before clipping.
    """
    norm = global_norm(grads)
    if norm <= max_norm:
        return grads, norm
    factor = max_norm / norm
    return {n: (g * factor).astype(g.dtype, copy=False) for n, g in grads.items()}, norm


def check_gradients(grads: dict[str, np.ndarray]) -> None:
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient, step refused", where=name)


def adam_step(state: AdamState, params: NeuralParams, grads: dict[str, np.ndarray],
              config: TrainConfig) -> tuple[AdamState, NeuralParams]:
    """One clipped Adam update. Inputs are left untouched."""
    check_gradients(grads)
    grads, _ = clip_gradients(grads, config.grad_clip_norm)
    b1, b2, lr, eps = config.adam_beta1, config.adam_beta2, config.learning_rate, config.adam_eps
    t = state.step + 1
    c1, c2 = 1.0 - b1 ** t, 1.0 - b2 ** t

    m, v, arrays = {}, {}, {}
    for name, p in params.arrays.items():
        g = grads[name].astype(p.dtype, copy=False)
        m[name] = b1 * state.m[name] + (1.0 - b1) * g
        v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        update = lr * (m[name] / c1) / (np.sqrt(v[name] / c2) + eps)
        arrays[name] = (p - update).astype(p.dtype, copy=False)
    return AdamState(t, m, v), NeuralParams(params.dims, params.ranks, params.d, arrays)

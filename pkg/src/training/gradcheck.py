"""Tape gradients against central finite differences."""

from dataclasses import dataclass

import numpy as np

from src.config.log import get_logger
from src.model.neural import NeuralParams
from src.training.objective import loss, loss_value

log = get_logger(__name__)

# absolute floor for the relative error of near-zero gradients
_FLOOR = 1e-4


@dataclass
class Probe:
    name: str
    index: tuple[int, ...]
    analytic: float
    numeric: float

    @property
    def rel_error(self) -> float:
        scale = max(abs(self.analytic), abs(self.numeric), _FLOOR)
        return abs(self.analytic - self.numeric) / scale


@dataclass
class GradCheckResult:
    probes: list[Probe]

    @property
    def max_rel_error(self) -> float:
        return max((p.rel_error for p in self.probes), default=0.0)

    def worst(self) -> Probe | None:
        return max(self.probes, key=lambda p: p.rel_error, default=None)


def choose_probes(params: NeuralParams, probes: int, seed: int) -> list[tuple[str, tuple[int, ...]]]:
    """`probes` distinct (parameter, index) pairs drawn uniformly over all entries."""
    names = sorted(params.arrays)
    sizes = np.array([params.arrays[n].size for n in names])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    rng = np.random.default_rng(seed)
    flat = rng.choice(int(offsets[-1]), size=min(probes, int(offsets[-1])), replace=False)
    out = []
    for f in np.sort(flat):
        k = int(np.searchsorted(offsets, f, side="right")) - 1
        out.append((names[k], tuple(int(i) for i in np.unravel_index(int(f - offsets[k]), params.arrays[names[k]].shape))))
    return out


def grad_check(params: NeuralParams, sentences, epsilon: float = 1e-5, probes: int = 200,
               seed: int = 0) -> GradCheckResult:
    """Compare tape gradients of the mean NLL of `sentences` with central differences.

    Runs in 64-bit regardless of the dtype of `params`.
    """
    params = params.astype(np.float64)
    batch = [list(sentences)] if np.ndim(sentences[0]) == 0 else [list(s) for s in sentences]
    analytic = loss(params, batch).gradients()

    results = []
    for name, index in choose_probes(params, probes, seed):
        plus, minus = params.copy(), params.copy()
        plus.arrays[name][index] += epsilon
        minus.arrays[name][index] -= epsilon
        numeric = (loss_value(plus, batch) - loss_value(minus, batch)) / (2.0 * epsilon)
        results.append(Probe(name, index, float(analytic[name][index]), float(numeric)))

    result = GradCheckResult(results)
    worst = result.worst()
    log.info("grad_check_done", probes=len(results), max_rel_error=result.max_rel_error,
             worst=None if worst is None else f"{worst.name}{list(worst.index)}")
    return result

"""
CPD-factored grammar.

Four factor families, one per binary rule tensor:
- family 1 (U1, V1, W1) -> C1, rule 1a
- family 2 (U2, V2, W2) -> D1, rule 2a
- family 3 (U3, V3, W3) -> C2, rule 1b
- family 4 (U4, V4, W4, P) -> D2, rules 2b-2e

V and W columns and P columns are distributions; (U1, U2) rows and
(U3, U4) rows are jointly normalized. W3 ranges over M because the C child
of rule 1b has fan-out 1.
"""

from dataclasses import dataclass, replace

import numpy as np

from src.errors import ShapeError
from src.grammar.core import NORMALIZATION_TOL, GrammarDims, ValidationReport, check_entries, check_sums

FACTOR_NAMES = ("U1", "V1", "W1", "U2", "V2", "W2", "U3", "V3", "W3", "U4", "V4", "W4", "P", "s", "Q")
COLUMN_STOCHASTIC = ("V1", "W1", "V2", "W2", "V3", "W3", "V4", "W4", "P")


def factor_shapes(dims: GrammarDims, ranks: tuple[int, int, int, int]) -> dict[str, tuple[int, ...]]:
    m1, m2, p, v, m = dims.m1, dims.m2, dims.p, dims.v, dims.m
    r1, r2, r3, r4 = ranks
    return {
        "U1": (m1, r1), "V1": (m, r1), "W1": (m, r1),
        "U2": (m1, r2), "V2": (m, r2), "W2": (m2, r2),
        "U3": (m2, r3), "V3": (m, r3), "W3": (m, r3),
        "U4": (m2, r4), "V4": (m, r4), "W4": (m2, r4),
        "P": (4, r4), "s": (m1,), "Q": (p, v),
    }


@dataclass(frozen=True)
class FactoredGrammar:
    dims: GrammarDims
    ranks: tuple[int, int, int, int]
    U1: np.ndarray
    V1: np.ndarray
    W1: np.ndarray
    U2: np.ndarray
    V2: np.ndarray
    W2: np.ndarray
    U3: np.ndarray
    V3: np.ndarray
    W3: np.ndarray
    U4: np.ndarray
    V4: np.ndarray
    W4: np.ndarray
    P: np.ndarray
    s: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        if len(self.ranks) != 4 or min(self.ranks) < 1:
            raise ShapeError(f"ranks must be four positive integers, got {self.ranks}")
        object.__setattr__(self, "ranks", tuple(int(r) for r in self.ranks))
        for name, shape in factor_shapes(self.dims, self.ranks).items():
            array = np.asarray(getattr(self, name))
            if array.shape != shape:
                raise ShapeError(f"{name} has shape {array.shape}, expected {shape}")
            object.__setattr__(self, name, array)

    @classmethod
    def from_arrays(cls, dims: GrammarDims, ranks, arrays: dict[str, np.ndarray]) -> "FactoredGrammar":
        return cls(dims, tuple(ranks), **{name: arrays[name] for name in FACTOR_NAMES})

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in FACTOR_NAMES}

    def astype(self, dtype) -> "FactoredGrammar":
        return replace(self, **{name: a.astype(dtype) for name, a in self.arrays().items()})

    @property
    def dtype(self):
        return self.U1.dtype


def validate_factors(fg: FactoredGrammar, tol: float = NORMALIZATION_TOL) -> ValidationReport:
    """Check nonnegativity, column normalization of V/W/P and the joint row coupling of U."""
    report = ValidationReport()
    for name, array in fg.arrays().items():
        check_entries(report, name, array.astype(np.float64))

    for name in COLUMN_STOCHASTIC:
        array = getattr(fg, name).astype(np.float64)
        if array.shape[0] == 0:
            continue
        check_sums(report, f"{name}.column", array.sum(axis=0), tol)

    U1, U2 = fg.U1.astype(np.float64), fg.U2.astype(np.float64)
    check_sums(report, "fanout1_rows", U1.sum(axis=1) + U2.sum(axis=1), tol)
    if fg.dims.m2 == 0:
        # without fan-out-2 symbols rule 2a has nowhere to put its mass
        for index in zip(*np.nonzero(U2 > tol)):
            report.add("U2.unreachable", index, U2[index])
    check_sums(report, "fanout2_rows", fg.U3.astype(np.float64).sum(axis=1) + fg.U4.astype(np.float64).sum(axis=1), tol)
    check_sums(report, "start_sum", np.atleast_1d(fg.s.astype(np.float64).sum()), tol)
    check_sums(report, "emission_row", fg.Q.astype(np.float64).sum(axis=1), tol)
    return report


def prior_masses(fg: FactoredGrammar) -> dict[str, float]:
    """Mean row mass given to the discontinuous families.

    `fanout1` is the share of (U1, U2) rows held by U2 (rule 2a);
    `fanout2` is the share of (U3, U4) rows held by U4 (rules 2b-2e), NaN when m2 = 0.
    """
    fanout1 = float(np.mean(fg.U2.sum(axis=1)))
    fanout2 = float(np.mean(fg.U4.sum(axis=1))) if fg.dims.m2 else float("nan")
    return {"fanout1": fanout1, "fanout2": fanout2}


def _columns(rng: np.random.Generator, shape, low: float) -> np.ndarray:
    raw = rng.uniform(low, 1.0, size=shape)
    if shape[0] == 0:
        return raw
    return raw / raw.sum(axis=0, keepdims=True)


def random_factored(dims: GrammarDims, ranks, seed: int, low: float = 0.05) -> FactoredGrammar:
    """Random strictly positive factors satisfying every factor constraint."""
    rng = np.random.default_rng(seed)
    shapes = factor_shapes(dims, ranks)
    arrays = {name: _columns(rng, shapes[name], low) for name in COLUMN_STOCHASTIC}

    u12 = rng.uniform(low, 1.0, size=(dims.m1, ranks[0] + ranks[1]))
    if dims.m2 == 0:
        u12[:, ranks[0]:] = 0.0
    u12 /= u12.sum(axis=1, keepdims=True)
    arrays["U1"], arrays["U2"] = u12[:, :ranks[0]], u12[:, ranks[0]:]

    u34 = rng.uniform(low, 1.0, size=(dims.m2, ranks[2] + ranks[3]))
    u34 /= np.maximum(u34.sum(axis=1, keepdims=True), 1e-300)
    arrays["U3"], arrays["U4"] = u34[:, :ranks[2]], u34[:, ranks[2]:]

    s = rng.uniform(low, 1.0, size=dims.m1)
    arrays["s"] = s / s.sum()
    q = rng.uniform(low, 1.0, size=(dims.p, dims.v))
    arrays["Q"] = q / q.sum(axis=1, keepdims=True)
    return FactoredGrammar.from_arrays(dims, ranks, arrays)


def concentrated_factored(v: int = 1) -> FactoredGrammar:
    """Rank-1 factors whose materialization is the one-derivation grammar."""
    dims = GrammarDims(m1=1, m2=0, p=1, v=v)
    onto_preterminal = np.array([[0.0], [1.0]])
    Q = np.zeros((1, v))
    Q[0, 0] = 1.0
    return FactoredGrammar(
        dims, (1, 1, 1, 1),
        U1=np.ones((1, 1)), V1=onto_preterminal, W1=onto_preterminal,
        U2=np.zeros((1, 1)), V2=onto_preterminal, W2=np.zeros((0, 1)),
        U3=np.zeros((0, 1)), V3=onto_preterminal, W3=onto_preterminal,
        U4=np.zeros((0, 1)), V4=onto_preterminal, W4=np.zeros((0, 1)),
        P=np.full((4, 1), 0.25), s=np.ones(1), Q=Q,
    )

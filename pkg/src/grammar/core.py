"""
Restricted LCFRS-2 grammars in explicit-tensor form.

Symbol layout (shared by every module):
- M = N1 ∪ P with indices 0..m1-1 for fan-out-1 nonterminals and
  m1..m-1 for preterminals.
- Fan-out-2 children (third axis of D1/D2) index N2.
- The last axis of D2 stacks rules 2b, 2c, 2d, 2e in that order.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from src.errors import ShapeError

NORMALIZATION_TOL = 1e-9


@dataclass(frozen=True)
class GrammarDims:
    m1: int
    m2: int
    p: int
    v: int

    def __post_init__(self):
        if self.m1 < 1 or self.m2 < 0 or self.p < 1 or self.v < 1:
            raise ShapeError(f"invalid grammar dims {self}")

    @property
    def m(self) -> int:
        return self.m1 + self.p

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.m1, self.m2, self.p, self.v)

    def shapes(self) -> dict[str, tuple[int, ...]]:
        m1, m2, p, v, m = self.m1, self.m2, self.p, self.v, self.m
        return {
            "s": (m1,),
            "C1": (m1, m, m),
            "D1": (m1, m, m2),
            "C2": (m2, m, m),
            "D2": (m2, m, m2, 4),
            "Q": (p, v),
        }


def _frozen(array) -> np.ndarray:
    out = np.array(array, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ExplicitGrammar:
    dims: GrammarDims
    s: np.ndarray
    C1: np.ndarray
    D1: np.ndarray
    C2: np.ndarray
    D2: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        for name, shape in self.dims.shapes().items():
            array = _frozen(getattr(self, name))
            if array.shape != shape:
                raise ShapeError(f"{name} has shape {array.shape}, expected {shape}")
            object.__setattr__(self, name, array)

    def replace(self, **arrays) -> "ExplicitGrammar":
        return replace(self, **arrays)

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.dims.shapes()}

    def permute(self, perm1=None, perm2=None) -> "ExplicitGrammar":
        """Relabel fan-out-1 (perm1 over N1) and fan-out-2 (perm2 over N2) nonterminals."""
        m1, m2, m = self.dims.m1, self.dims.m2, self.dims.m
        p1 = np.arange(m1) if perm1 is None else np.asarray(perm1)
        p2 = np.arange(m2) if perm2 is None else np.asarray(perm2)
        pm = np.concatenate([p1, np.arange(m1, m)])
        return self.replace(
            s=self.s[p1],
            C1=self.C1[np.ix_(p1, pm, pm)],
            D1=self.D1[np.ix_(p1, pm, p2)],
            C2=self.C2[np.ix_(p2, pm, pm)],
            D2=self.D2[np.ix_(p2, pm, p2, np.arange(4))],
        )


@dataclass(frozen=True)
class Violation:
    constraint: str
    index: tuple[int, ...]
    residual: float

    def __str__(self) -> str:
        return f"{self.constraint}{list(self.index)}: residual {self.residual:.3e}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    def __bool__(self) -> bool:
        # truthy when something is wrong
        return bool(self.violations)

    def __len__(self) -> int:
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, constraint: str, index, residual: float) -> None:
        self.violations.append(Violation(constraint, tuple(int(i) for i in index), float(residual)))

    def constraints(self) -> set[str]:
        return {v.constraint for v in self.violations}


def check_entries(report: ValidationReport, name: str, array: np.ndarray) -> None:
    """Record non-finite and negative entries of one array."""
    bad = ~np.isfinite(array)
    for index in zip(*np.nonzero(bad)):
        report.add(f"{name}.finite", index, float("inf"))
    neg = np.where(bad, 0.0, array) < 0
    for index in zip(*np.nonzero(neg)):
        report.add(f"{name}.nonnegative", index, abs(array[index]))


def check_sums(report: ValidationReport, name: str, sums: np.ndarray, tol: float = NORMALIZATION_TOL) -> None:
    residual = np.abs(np.asarray(sums, dtype=np.float64) - 1.0)
    for index in zip(*np.nonzero(~(residual <= tol))):
        report.add(name, index, residual[index])


def validate(grammar: ExplicitGrammar, tol: float = NORMALIZATION_TOL) -> ValidationReport:
    """Check every probabilistic invariant of an explicit grammar.

    Shape problems raise ShapeError; probabilistic problems are returned as
    violations with residual |lhs - 1|.
    """
    for name, shape in grammar.dims.shapes().items():
        if getattr(grammar, name).shape != shape:
            raise ShapeError(f"{name} has shape {getattr(grammar, name).shape}, expected {shape}")

    report = ValidationReport()
    for name, array in grammar.arrays().items():
        check_entries(report, name, array)

    check_sums(report, "start_sum", np.atleast_1d(grammar.s.sum()), tol)
    eq1 = grammar.C1.sum(axis=(1, 2)) + grammar.D1.sum(axis=(1, 2))
    check_sums(report, "eq1", eq1, tol)
    eq2 = grammar.C2.sum(axis=(1, 2)) + grammar.D2.sum(axis=(1, 2, 3))
    check_sums(report, "eq2", eq2, tol)
    check_sums(report, "emission_row", grammar.Q.sum(axis=1), tol)
    return report


def normalize_random(dims: GrammarDims, seed: int, low: float = 0.05) -> ExplicitGrammar:
    """Random grammar with strictly positive rules, normalized by division.

    Args:
        dims: Grammar dimensions.
        seed: Seed for numpy's default generator; equal seeds give identical grammars.
        low: Lower bound of the uniform scores, keeps every rule strictly positive.
    """
    rng = np.random.default_rng(seed)
    shapes = dims.shapes()
    raw = {name: rng.uniform(low, 1.0, size=shape) for name, shape in shapes.items()}

    s = raw["s"] / raw["s"].sum()
    z1 = raw["C1"].sum(axis=(1, 2)) + raw["D1"].sum(axis=(1, 2))
    C1 = raw["C1"] / z1[:, None, None]
    D1 = raw["D1"] / z1[:, None, None]
    z2 = raw["C2"].sum(axis=(1, 2)) + raw["D2"].sum(axis=(1, 2, 3))
    C2 = raw["C2"] / z2[:, None, None]
    D2 = raw["D2"] / z2[:, None, None, None]
    Q = raw["Q"] / raw["Q"].sum(axis=1, keepdims=True)
    return ExplicitGrammar(dims, s, C1, D1, C2, D2, Q)


def concentrated_grammar(v: int = 1) -> ExplicitGrammar:
    """The one-derivation grammar: S -> A, A(xy) -> T(x) T(y), T -> w0."""
    dims = GrammarDims(m1=1, m2=0, p=1, v=v)
    C1 = np.zeros((1, 2, 2))
    C1[0, 1, 1] = 1.0
    Q = np.zeros((1, v))
    Q[0, 0] = 1.0
    return ExplicitGrammar(
        dims, np.ones(1), C1, np.zeros((1, 2, 0)), np.zeros((0, 2, 2)), np.zeros((0, 2, 0, 4)), Q,
    )

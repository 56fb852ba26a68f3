"""
Rank-space inside algorithm.

Cells hold log rank vectors and are grouped for vectorization:
- continuous cells by width w: arrays [ell - w + 1, r] indexed by start i;
- discontinuous cells by block widths (a, b): arrays [L, L, r] with
  L = ell - a - b, where entry [i, g - 1] is the cell
  (i, i + a, i + a + g, i + a + g + b). Entries with i + g > L do not
  exist and hold -inf.

a1 (rule 1a) and a2 (rule 2a) are fan-out-1 cells, a3 (rule 1b) and a4
(rules 2b-2e) are fan-out-2 cells. a3 is never stored: it is only consumed
through the J kernels, which `log_pair_project` applies on the fly.

Optional probes are zero-valued leaves added to every cell (broadcast over
the rank axis). The gradient of log Z with respect to a probe is the span
marginal of that cell.
"""

from dataclasses import dataclass, field

import numpy as np

from src.autodiff import tape as ad
from src.autodiff.tape import Node, Tape
from src.errors import NumericError
from src.model.factored import FactoredGrammar
from src.model.kernels import CONTINUOUS_C, DISCONTINUOUS_C, FAMILIES, KernelSet
from src.oracle.inside import check_sentence


def sentence_kernels(kernels: KernelSet[np.ndarray], words) -> KernelSet[np.ndarray]:
    """Kernels with the emission projections reduced to the rows of the sentence."""
    rows = np.asarray(words, dtype=np.intp)
    return kernels.map(lambda name, value: value[rows] if name.startswith("emit") else value)


class _Geometry:
    """Index and mask arrays of one (a, b) block, shared by every cell family."""

    def __init__(self, ell: int, a: int, b: int, dtype):
        self.size = size = ell - a - b
        i = np.arange(size)[:, None]
        g = np.arange(1, size + 1)[None, :]
        self.valid = (i + g) <= size
        self.mask = np.where(self.valid, 0.0, -np.inf).astype(dtype)
        self.i, self.g = np.broadcast_arrays(i, g)
        # start of the second block, clipped where the cell does not exist
        self.second = np.minimum(i + a + g, ell - b)


@dataclass
class Probes:
    width1: Node
    continuous: dict[int, Node] = field(default_factory=dict)
    discontinuous: dict[tuple[int, int], Node] = field(default_factory=dict)


@dataclass
class RankChart:
    length: int
    log_z: float
    a1: dict[int, np.ndarray] = field(default_factory=dict)
    a2: dict[int, np.ndarray] = field(default_factory=dict)
    a4: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    b: dict[int, dict[int, np.ndarray]] = field(default_factory=dict)
    c: dict[int, dict] = field(default_factory=dict)

    def cell1(self, family: int, i: int, j: int) -> np.ndarray | None:
        """log a1 (family 1) or log a2 (family 2) over [i, j)."""
        table = self.a1 if family == 1 else self.a2
        block = table.get(j - i)
        return None if block is None else block[i]

    def cell4(self, i: int, j: int, m: int, n: int) -> np.ndarray | None:
        block = self.a4.get((j - i, n - m))
        return None if block is None else block[i, m - j - 1]


def _check(node: Node, where: str) -> None:
    v = node.value
    if np.isnan(v).any() or np.isposinf(v).any():
        raise NumericError("non-finite inside cell", where=where)


def _probe(node: Node, probe: Node | None) -> Node:
    return node if probe is None else ad.add(node, ad.expand(probe, -1))


class RankInside:
    """Builds the rank-space inside computation for one sentence on a tape.

    Args:
        tape: Tape that receives the computation.
        kernels: Kernel nodes whose emission entries are already restricted
            to the sentence rows ([ell x r]).
        ell: Sentence length.
        m2: Number of fan-out-2 nonterminals; 0 disables every discontinuous cell.
        probes: Whether to attach span-marginal probes.
    """

    def __init__(self, tape: Tape, kernels: KernelSet[Node], ell: int, m2: int, probes: bool = False):
        self.tape = tape
        self.k = kernels
        self.ell = ell
        self.dtype = kernels.F[1].value.dtype
        self.m2_used = m2 > 0
        self.probes = Probes(tape.leaf(np.zeros(ell, dtype=self.dtype), name="probe1")) if probes else None
        self.a1: dict[int, Node] = {}
        self.a2: dict[int, Node] = {}
        self.a4: dict[tuple[int, int], Node] = {}
        self.b: dict[int, dict[int, Node]] = {o: {} for o in FAMILIES}
        self.c: dict[int, dict] = {o: {} for o in FAMILIES}
        self.log_p = [ad.getitem(kernels.log_p, (d,)) for d in range(4)]

    def _leaf_probe(self, shape, name: str) -> Node | None:
        if self.probes is None:
            return None
        return self.tape.leaf(np.zeros(shape, dtype=self.dtype), name=name)

    def run(self) -> Node:
        k, ell = self.k, self.ell
        base_probe = None if self.probes is None else self.probes.width1
        for o in FAMILIES:
            self.b[o][1] = _probe(ad.log(k.emit_b[o]), base_probe)
        for o in CONTINUOUS_C:
            self.c[o][1] = _probe(ad.log(k.emit_c[o]), base_probe)

        for w in range(2, ell + 1):
            self._continuous(w)
            if self.m2_used:
                for a in range(1, w):
                    if ell - w >= 1:
                        self._discontinuous(a, w - a)

        top1 = ad.log_project(self.a1[ell], k.R1)
        log_z = top1 if ell not in self.a2 else ad.logaddexp(top1, ad.log_project(self.a2[ell], k.R2))
        log_z = ad.getitem(log_z, (0, 0))
        _check(log_z, "logZ")
        return log_z

    def _continuous(self, w: int) -> None:
        k, ell = self.k, self.ell
        n = ell - w + 1
        terms = [
            ad.add(ad.getitem(self.b[1][s], (slice(0, n),)), ad.getitem(self.c[1][w - s], (slice(s, s + n),)))
            for s in range(1, w)
        ]
        a1 = ad.logsumexp(ad.stack(terms), axis=0)

        a2 = None
        if self.m2_used and w >= 3:
            terms = []
            for a in range(1, w - 1):
                for bw in range(1, w - a):
                    b = w - a - bw
                    left = ad.getitem(self.b[2][bw], (slice(a, a + n),))
                    right = ad.getitem(self.c[2][(a, b)], (slice(0, n), bw - 1))
                    terms.append(ad.add(left, right))
            a2 = ad.logsumexp(ad.stack(terms), axis=0)

        probe = self._leaf_probe((n,), f"probe_w{w}")
        if probe is not None:
            self.probes.continuous[w] = probe
        a1 = _probe(a1, probe)
        _check(a1, f"a1[w={w}]")
        self.a1[w] = a1
        if a2 is not None:
            a2 = _probe(a2, probe)
            _check(a2, f"a2[w={w}]")
            self.a2[w] = a2

        def project(first: Node, second: Node) -> Node:
            out = ad.log_project(a1, first)
            return out if a2 is None else ad.logaddexp(out, ad.log_project(a2, second))

        for o in FAMILIES:
            self.b[o][w] = project(k.F[o], k.G[o])
        for o in CONTINUOUS_C:
            self.c[o][w] = project(k.H[o], k.I[o])

    def _discontinuous(self, a: int, b: int) -> None:
        k, ell = self.k, self.ell
        geo = _Geometry(ell, a, b, self.dtype)
        size = geo.size
        terms = []
        # 2b: B = [i, i+c), C = (i+c, j, m, n)
        for c in range(1, a):
            left = ad.expand(ad.getitem(self.b[4][c], (slice(0, size),)), 1)
            right = ad.getitem(self.c[4][(a - c, b)], (slice(c, c + size), slice(0, size)))
            terms.append(ad.add(ad.add(left, right), self.log_p[0]))
        # 2c: B = [j-c, j), C = (i, j-c, m, n)
        for c in range(a - 1, 0, -1):
            left = ad.expand(ad.getitem(self.b[4][c], (slice(a - c, a - c + size),)), 1)
            right = ad.getitem(self.c[4][(a - c, b)], (slice(0, size), slice(c, c + size)))
            terms.append(ad.add(ad.add(left, right), self.log_p[1]))
        # 2d: B = [m, m+c), C = (i, j, m+c, n)
        for c in range(1, b):
            left = ad.getitem(self.b[4][c], (np.minimum(geo.i + a + geo.g, ell - c),))
            right = ad.getitem(self.c[4][(a, b - c)], (slice(0, size), slice(c, c + size)))
            terms.append(ad.add(ad.add(left, right), self.log_p[2]))
        # 2e: B = [n-c, n), C = (i, j, m, n-c)
        for c in range(b - 1, 0, -1):
            left = ad.getitem(self.b[4][c], (np.minimum(geo.i + a + geo.g + b - c, ell - c),))
            right = ad.getitem(self.c[4][(a, b - c)], (slice(0, size), slice(0, size)))
            terms.append(ad.add(ad.add(left, right), self.log_p[3]))

        mask = self.tape.constant(geo.mask)
        a4 = None
        if terms:
            a4 = ad.add(ad.logsumexp(ad.stack(terms), axis=0), ad.expand(mask, -1))

        probe = self._leaf_probe((size, size), f"probe_{a}_{b}")
        if probe is not None:
            self.probes.discontinuous[(a, b)] = probe
        if a4 is not None:
            a4 = _probe(a4, probe)
            _check(a4, f"a4[{a},{b}]")
            self.a4[(a, b)] = a4

        left3 = ad.getitem(self.b[3][a], (slice(0, size),))
        for o in DISCONTINUOUS_C:
            out = _probe(ad.log_pair_project(left3, self.c[3][b], geo.second, k.J[o], geo.mask), probe)
            if a4 is not None:
                out = ad.logaddexp(out, ad.log_project(a4, k.K[o]))
            self.c[o][(a, b)] = out


def _values(table: dict) -> dict:
    return {key: node.value for key, node in table.items()}


def _chart(inside: RankInside, log_z: float) -> RankChart:
    return RankChart(
        inside.ell, log_z,
        a1=_values(inside.a1), a2=_values(inside.a2), a4=_values(inside.a4),
        b={o: _values(t) for o, t in inside.b.items()},
        c={o: _values(t) for o, t in inside.c.items()},
    )


def constant_kernels(tape: Tape, kernels: KernelSet[np.ndarray]) -> KernelSet[Node]:
    return kernels.map(lambda name, value: tape.constant(value, name=name))


def inside_rank(kernels: KernelSet[np.ndarray], fg: FactoredGrammar, sentence) -> tuple[float, RankChart]:
    """log Z and the rank-space chart; -inf with an empty chart below length 2."""
    words = check_sentence(sentence, fg.dims.v)
    ell = len(words)
    if ell < 2:
        return -np.inf, RankChart(ell, -np.inf)
    tape = Tape(recording=False)
    inside = RankInside(tape, constant_kernels(tape, sentence_kernels(kernels, words)), ell, fg.dims.m2)
    log_z = float(inside.run().value)
    return log_z, _chart(inside, log_z)

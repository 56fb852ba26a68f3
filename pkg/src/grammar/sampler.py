"""
Top-down sampling of sentences and derivations from an explicit grammar.

Derivations whose yield would exceed max_len are abandoned as soon as the
bound is crossed and retried; after max_attempts the sampler raises
RejectionError and the caller resamples with a new seed.
"""

from dataclasses import dataclass
import math

import numpy as np

from src.errors import InputError, RejectionError
from src.grammar.core import ExplicitGrammar
from src.grammar.trees import D2_VARIANTS, DiscoTree, RuleTag, SymbolKind, TreeBuilder


@dataclass(frozen=True)
class Sample:
    sentence: tuple[int, ...]
    tree: DiscoTree
    log_prob: float


class _TooLong(Exception):
    pass


@dataclass
class _Proto:
    label: int
    kind: SymbolKind
    tag: RuleTag
    children: tuple[int, ...] = ()
    token: int | None = None


class _Distributions:
    """Flattened rule distributions per left-hand side, built once per grammar."""

    def __init__(self, g: ExplicitGrammar):
        self.g = g
        d = g.dims
        self.nt1 = [np.concatenate([g.C1[a].ravel(), g.D1[a].ravel()]) for a in range(d.m1)]
        self.nt2 = [np.concatenate([g.C2[a].ravel(), g.D2[a].ravel()]) for a in range(d.m2)]

    @staticmethod
    def draw(rng: np.random.Generator, probs: np.ndarray) -> tuple[int, float]:
        idx = int(rng.choice(len(probs), p=probs / probs.sum()))
        return idx, math.log(probs[idx])


class _Run:
    def __init__(self, dists: _Distributions, rng: np.random.Generator, max_len: int):
        self.dists = dists
        self.g = dists.g
        self.rng = rng
        self.max_len = max_len
        self.protos: list[_Proto] = []
        self.log_prob = 0.0
        self.leaves = 0

    def _add(self, proto: _Proto) -> int:
        self.protos.append(proto)
        return len(self.protos) - 1

    def _draw(self, probs: np.ndarray) -> int:
        idx, lp = _Distributions.draw(self.rng, probs)
        self.log_prob += lp
        return idx

    def child_m(self, b: int):
        """Expand a child drawn from M; returns (proto id, yield)."""
        m1 = self.g.dims.m1
        if b >= m1:
            return self.preterminal(b - m1)
        return self.nt1(b)

    def preterminal(self, t: int):
        self.leaves += 1
        if self.leaves > self.max_len:
            raise _TooLong
        w = self._draw(self.g.Q[t])
        pid = self._add(_Proto(t, SymbolKind.PRETERMINAL, RuleTag.EMIT, token=w))
        return pid, ([pid],)

    def nt1(self, a: int):
        m, m2 = self.g.dims.m, self.g.dims.m2
        idx = self._draw(self.dists.nt1[a])
        if idx < m * m:
            b, c = divmod(idx, m)
            bid, (x,) = self.child_m(b)
            cid, (y,) = self.child_m(c)
            pid = self._add(_Proto(a, SymbolKind.NT1, RuleTag.R1A, (bid, cid)))
            return pid, (x + y,)
        b, c = divmod(idx - m * m, m2)
        bid, (x,) = self.child_m(b)
        cid, (y, z) = self.nt2(c)
        pid = self._add(_Proto(a, SymbolKind.NT1, RuleTag.R2A, (bid, cid)))
        return pid, (y + x + z,)

    def nt2(self, a: int):
        m, m2 = self.g.dims.m, self.g.dims.m2
        idx = self._draw(self.dists.nt2[a])
        if idx < m * m:
            b, c = divmod(idx, m)
            bid, (x,) = self.child_m(b)
            cid, (y,) = self.child_m(c)
            pid = self._add(_Proto(a, SymbolKind.NT2, RuleTag.R1B, (bid, cid)))
            return pid, (x, y)
        b, rest = divmod(idx - m * m, m2 * 4)
        c, variant = divmod(rest, 4)
        tag = D2_VARIANTS[variant]
        bid, (x,) = self.child_m(b)
        cid, (y, z) = self.nt2(c)
        pid = self._add(_Proto(a, SymbolKind.NT2, tag, (bid, cid)))
        if tag is RuleTag.R2B:
            out = (x + y, z)
        elif tag is RuleTag.R2C:
            out = (y + x, z)
        elif tag is RuleTag.R2D:
            out = (y, x + z)
        else:
            out = (y, z + x)
        return pid, out

    def start(self):
        a = self._draw(self.g.s)
        aid, (string,) = self.nt1(a)
        return aid, string


def _assemble(protos: list[_Proto], root: int, string: list[int]) -> DiscoTree:
    position = {pid: i for i, pid in enumerate(string)}
    builder = TreeBuilder()

    def build(pid: int) -> int:
        proto = protos[pid]
        if proto.kind is SymbolKind.PRETERMINAL:
            return builder.leaf(proto.label, position[pid], proto.token)
        b, c = (build(child) for child in proto.children)
        return builder.binary(proto.label, proto.kind, proto.tag, b, c)

    return builder.build(builder.start(build(root)))


def _attempt(dists: _Distributions, rng: np.random.Generator, max_len: int) -> Sample | None:
    run = _Run(dists, rng, max_len)
    try:
        root, string = run.start()
    except _TooLong:
        return None
    tree = _assemble(run.protos, root, string)
    sentence = tuple(run.protos[pid].token for pid in string)
    return Sample(sentence, tree, run.log_prob)


def sample(grammar: ExplicitGrammar, rng: np.random.Generator, max_len: int, max_attempts: int = 100) -> Sample:
    """Draw one derivation and its sentence.

    Args:
        grammar: A valid explicit grammar.
        rng: numpy Generator; all randomness flows from it.
        max_len: Longest sentence accepted.
        max_attempts: Retries before raising RejectionError.
    """
    dists = _Distributions(grammar)
    for _ in range(max_attempts):
        drawn = _attempt(dists, rng, max_len)
        if drawn is not None:
            return drawn
    raise RejectionError(f"no derivation of length <= {max_len} in {max_attempts} attempts")


def check_length_bounds(min_len: int, max_len: int) -> None:
    if min_len < 1:
        raise InputError(f"min_len must be at least 1, got {min_len}")
    if min_len > max_len:
        raise InputError(f"min_len {min_len} exceeds max_len {max_len}")


def sample_corpus(grammar: ExplicitGrammar, count: int, seed: int, max_len: int,
                  min_len: int = 2, max_attempts: int = 100) -> list[Sample]:
    """Sample `count` derivations with lengths in [min_len, max_len] from one seeded generator.

    At most count * max_attempts derivations are drawn in total, counting those
    rejected for length; RejectionError is raised when that budget runs out.
    """
    check_length_bounds(min_len, max_len)
    rng = np.random.default_rng(seed)
    dists = _Distributions(grammar)
    samples: list[Sample] = []
    budget = max(count, 1) * max_attempts
    for _ in range(budget):
        if len(samples) >= count:
            break
        drawn = _attempt(dists, rng, max_len)
        if drawn is not None and len(drawn.sentence) >= min_len:
            samples.append(drawn)
    if len(samples) < count:
        raise RejectionError(
            f"only {len(samples)} of {count} sentences with length in [{min_len}, {max_len}] after {budget} draws"
        )
    return samples

"""
Neural parameterization of the factored grammar.

Symbols and ranks have embeddings; factor entries are
exp{(rank embedding)^T f(symbol embedding)} normalized per constraint group.
Shared MLP pairs (one object each):
- fU12: rows of U1 and U2      - fU34: rows of U3 and U4
- fV13: V1 and V3 (left child)  - fV24: V2 and V4
- fW13: W1 and W3 (fan-out-1 right child, over M)
- fW24: W2 and W4 (fan-out-2 right child, over N2)
fP, fs and fQ are residual networks producing P (transposed), s and Q.

Everything is built on a Tape, so the same code evaluates factors for
inference (non-recording) and for training (recording).
"""

from dataclasses import dataclass, field

import numpy as np

from src.autodiff import tape as ad
from src.autodiff.tape import Node, Tape
from src.errors import NumericError, ShapeError
from src.grammar.core import GrammarDims
from src.model.factored import FACTOR_NAMES, FactoredGrammar, factor_shapes

SHARED_MLPS = ("fU12", "fU34", "fV13", "fV24", "fW13", "fW24")
RESIDUAL_MLPS = ("fP", "fs", "fQ")


def param_shapes(dims: GrammarDims, ranks, d: int) -> dict[str, tuple[int, ...]]:
    r1, r2, r3, r4 = ranks
    shapes: dict[str, tuple[int, ...]] = {
        "E1": (dims.m, d), "E2": (dims.m2, d), "root": (d,),
        "R1e": (r1, d), "R2e": (r2, d), "R3e": (r3, d), "R4e": (r4, d),
    }
    for name in SHARED_MLPS + RESIDUAL_MLPS:
        shapes.update({f"{name}.w1": (d, d), f"{name}.b1": (d,), f"{name}.w2": (d, d), f"{name}.b2": (d,)})
    for name, out in (("fP", 4), ("fs", dims.m1), ("fQ", dims.v)):
        shapes.update({f"{name}.out_w": (d, out), f"{name}.out_b": (out,)})
    return shapes


@dataclass
class NeuralParams:
    dims: GrammarDims
    ranks: tuple[int, int, int, int]
    d: int
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.ranks = tuple(int(r) for r in self.ranks)
        expected = param_shapes(self.dims, self.ranks, self.d)
        if set(expected) != set(self.arrays):
            missing = sorted(set(expected) - set(self.arrays))
            extra = sorted(set(self.arrays) - set(expected))
            raise ShapeError(f"parameter names mismatch: missing {missing}, unexpected {extra}")
        for name, shape in expected.items():
            if self.arrays[name].shape != shape:
                raise ShapeError(f"parameter {name} has shape {self.arrays[name].shape}, expected {shape}")

    @classmethod
    def zeros(cls, dims: GrammarDims, ranks, d: int, dtype="float64") -> "NeuralParams":
        return cls(dims, ranks, d, {n: np.zeros(s, dtype=dtype) for n, s in param_shapes(dims, ranks, d).items()})

    @classmethod
    def xavier(cls, dims: GrammarDims, ranks, d: int, seed: int, dtype="float32") -> "NeuralParams":
        """Xavier-uniform weights and embeddings, zero biases."""
        rng = np.random.default_rng(seed)
        arrays = {}
        for name, shape in param_shapes(dims, ranks, d).items():
            if name.endswith(("b1", "b2", "out_b")):
                arrays[name] = np.zeros(shape, dtype=dtype)
                continue
            fan_in, fan_out = (1, shape[0]) if len(shape) == 1 else shape
            bound = np.sqrt(6.0 / max(fan_in + fan_out, 1))
            arrays[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
        return cls(dims, ranks, d, arrays)

    @property
    def dtype(self):
        return self.arrays["E1"].dtype

    def astype(self, dtype) -> "NeuralParams":
        return NeuralParams(self.dims, self.ranks, self.d, {n: a.astype(dtype) for n, a in self.arrays.items()})

    def copy(self) -> "NeuralParams":
        return NeuralParams(self.dims, self.ranks, self.d, {n: a.copy() for n, a in self.arrays.items()})

    def size(self) -> int:
        return int(sum(a.size for a in self.arrays.values()))


def _mlp(nodes: dict[str, Node], name: str, x: Node) -> Node:
    h = ad.relu(ad.affine(x, nodes[f"{name}.w1"], nodes[f"{name}.b1"]))
    return ad.affine(h, nodes[f"{name}.w2"], nodes[f"{name}.b2"])


def _residual(nodes: dict[str, Node], name: str, x: Node) -> Node:
    h = ad.add(_mlp(nodes, name, x), x)
    return ad.affine(h, nodes[f"{name}.out_w"], nodes[f"{name}.out_b"])


def raw_scores(nodes: dict[str, Node], dims: GrammarDims) -> dict[str, Node]:
    """Unnormalized logits for every factor, laid out like the factors (P as P^T)."""
    m1, m2 = dims.m1, dims.m2
    E1, E2 = nodes["E1"], nodes["E2"]
    Rt = {o: ad.transpose(nodes[f"R{o}e"]) for o in (1, 2, 3, 4)}

    scores = {}
    u12 = _mlp(nodes, "fU12", ad.getitem(E1, (slice(0, m1),)))
    scores["U1"], scores["U2"] = ad.matmul(u12, Rt[1]), ad.matmul(u12, Rt[2])
    v13, v24 = _mlp(nodes, "fV13", E1), _mlp(nodes, "fV24", E1)
    scores["V1"], scores["V3"] = ad.matmul(v13, Rt[1]), ad.matmul(v13, Rt[3])
    scores["V2"], scores["V4"] = ad.matmul(v24, Rt[2]), ad.matmul(v24, Rt[4])
    w13 = _mlp(nodes, "fW13", E1)
    scores["W1"], scores["W3"] = ad.matmul(w13, Rt[1]), ad.matmul(w13, Rt[3])
    if m2:
        u34 = _mlp(nodes, "fU34", E2)
        scores["U3"], scores["U4"] = ad.matmul(u34, Rt[3]), ad.matmul(u34, Rt[4])
        w24 = _mlp(nodes, "fW24", E2)
        scores["W2"], scores["W4"] = ad.matmul(w24, Rt[2]), ad.matmul(w24, Rt[4])
    scores["PT"] = _residual(nodes, "fP", nodes["R4e"])
    scores["s"] = _residual(nodes, "fs", ad.reshape(nodes["root"], (1, -1)))
    scores["Q"] = _residual(nodes, "fQ", ad.getitem(E1, (slice(m1, None),)))
    return scores


def normalize(tape: Tape, scores: dict[str, Node], dims: GrammarDims, ranks) -> dict[str, Node]:
    """Turn logits into factors satisfying every factor constraint."""
    r1, r2, r3, r4 = ranks
    dtype = scores["U1"].value.dtype
    f: dict[str, Node] = {}
    if dims.m2:
        u12 = ad.softmax(ad.concat([scores["U1"], scores["U2"]], axis=1), axis=1)
        f["U1"], f["U2"] = ad.getitem(u12, (slice(None), slice(0, r1))), ad.getitem(u12, (slice(None), slice(r1, None)))
        u34 = ad.softmax(ad.concat([scores["U3"], scores["U4"]], axis=1), axis=1)
        f["U3"], f["U4"] = ad.getitem(u34, (slice(None), slice(0, r3))), ad.getitem(u34, (slice(None), slice(r3, None)))
        f["W2"], f["W4"] = ad.softmax(scores["W2"], axis=0), ad.softmax(scores["W4"], axis=0)
    else:
        # rule 2a and the fan-out-2 rules have no symbols to use
        f["U1"] = ad.softmax(scores["U1"], axis=1)
        f["U2"] = tape.constant(np.zeros((dims.m1, r2), dtype=dtype))
        f["U3"] = tape.constant(np.zeros((0, r3), dtype=dtype))
        f["U4"] = tape.constant(np.zeros((0, r4), dtype=dtype))
        f["W2"] = tape.constant(np.zeros((0, r2), dtype=dtype))
        f["W4"] = tape.constant(np.zeros((0, r4), dtype=dtype))
    for name in ("V1", "V2", "V3", "V4", "W1", "W3"):
        f[name] = ad.softmax(scores[name], axis=0)
    f["P"] = ad.transpose(ad.softmax(scores["PT"], axis=1))
    f["s"] = ad.reshape(ad.softmax(scores["s"], axis=1), (dims.m1,))
    f["Q"] = ad.softmax(scores["Q"], axis=1)
    return f


def check_finite(factors: dict[str, Node]) -> None:
    for name, node in factors.items():
        if not np.all(np.isfinite(node.value)):
            raise NumericError("non-finite factor entries", where=name)


def forward_graph(tape: Tape, params: NeuralParams) -> tuple[dict[str, Node], dict[str, Node]]:
    """Leaves for every parameter and the factor nodes computed from them."""
    leaves = {name: tape.leaf(array, name=name) for name, array in params.arrays.items()}
    factors = normalize(tape, raw_scores(leaves, params.dims), params.dims, params.ranks)
    check_finite(factors)
    return leaves, factors


def forward(params: NeuralParams) -> FactoredGrammar:
    """Factored grammar generated by `params`; pure and deterministic."""
    _, factors = forward_graph(Tape(recording=False), params)
    shapes = factor_shapes(params.dims, params.ranks)
    arrays = {name: factors[name].value.reshape(shapes[name]) for name in FACTOR_NAMES}
    return FactoredGrammar.from_arrays(params.dims, params.ranks, arrays)

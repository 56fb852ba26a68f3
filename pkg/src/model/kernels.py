"""
Rank-space kernels, computed once per factored grammar.

For family o the B-child message of a fan-out-1 span is
    F^o a1 + G^o a2,  F^o = V^o[:m1]^T U1,  G^o = V^o[:m1]^T U2
and likewise H^o, I^o from W^o[:m1] for o in {1, 3}. Fan-out-2 C-child
messages (o in {2, 4}) use J^o = W^o^T U3 and K^o = W^o^T U4.
Base cases read rows of emit_b^o = Q^T V^o[m1:] and emit_c^o = Q^T W^o[m1:]
([v x r_o]) at each word id. R1 = s^T U1 and R2 = s^T U2 are kept as
[1 x r] rows so they project like any other kernel.
"""

from dataclasses import dataclass, fields
from typing import Generic, TypeVar

import numpy as np

from src.autodiff import tape as ad
from src.autodiff.tape import Node, Tape
from src.model.factored import FactoredGrammar

T = TypeVar("T")

FAMILIES = (1, 2, 3, 4)
CONTINUOUS_C = (1, 3)
DISCONTINUOUS_C = (2, 4)


@dataclass(frozen=True)
class KernelSet(Generic[T]):
    F: dict[int, T]
    G: dict[int, T]
    H: dict[int, T]
    I: dict[int, T]  # noqa: E741
    J: dict[int, T]
    K: dict[int, T]
    R1: T
    R2: T
    emit_b: dict[int, T]
    emit_c: dict[int, T]
    log_p: T

    def items(self):
        """(name, value) pairs, dict-valued fields flattened as 'F1', 'G3', ..."""
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, dict):
                for o, v in value.items():
                    yield f"{f.name}{o}", v
            else:
                yield f.name, value

    def map(self, fn) -> "KernelSet":
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = {o: fn(f"{f.name}{o}", v) for o, v in value.items()} if isinstance(value, dict) else fn(f.name, value)
        return KernelSet(**out)


def kernel_graph(factors: dict[str, Node], m1: int) -> KernelSet[Node]:
    def head(name: str) -> Node:
        return ad.getitem(factors[name], (slice(0, m1),))

    def tail(name: str) -> Node:
        return ad.getitem(factors[name], (slice(m1, None),))

    U1, U2, U3, U4 = (factors[f"U{o}"] for o in FAMILIES)
    Qt = ad.transpose(factors["Q"])
    V_head = {o: ad.transpose(head(f"V{o}")) for o in FAMILIES}
    W_head = {o: ad.transpose(head(f"W{o}")) for o in CONTINUOUS_C}
    W_all = {o: ad.transpose(factors[f"W{o}"]) for o in DISCONTINUOUS_C}
    s_row = ad.reshape(factors["s"], (1, m1))
    return KernelSet(
        F={o: ad.matmul(V_head[o], U1) for o in FAMILIES},
        G={o: ad.matmul(V_head[o], U2) for o in FAMILIES},
        H={o: ad.matmul(W_head[o], U1) for o in CONTINUOUS_C},
        I={o: ad.matmul(W_head[o], U2) for o in CONTINUOUS_C},
        J={o: ad.matmul(W_all[o], U3) for o in DISCONTINUOUS_C},
        K={o: ad.matmul(W_all[o], U4) for o in DISCONTINUOUS_C},
        R1=ad.matmul(s_row, U1),
        R2=ad.matmul(s_row, U2),
        emit_b={o: ad.matmul(Qt, tail(f"V{o}")) for o in FAMILIES},
        emit_c={o: ad.matmul(Qt, tail(f"W{o}")) for o in CONTINUOUS_C},
        log_p=ad.log(factors["P"]),
    )


def precompute(fg: FactoredGrammar) -> KernelSet[np.ndarray]:
    """Kernel matrices of `fg` as plain arrays."""
    tape = Tape(recording=False)
    factors = {name: tape.constant(array) for name, array in fg.arrays().items()}
    return kernel_graph(factors, fg.dims.m1).map(lambda _, node: node.value)

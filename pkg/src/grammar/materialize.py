"""Expand CPD factors into explicit rule tensors."""

import numpy as np

from src.grammar.core import ExplicitGrammar
from src.model.factored import FactoredGrammar


def materialize(fg: FactoredGrammar) -> ExplicitGrammar:
    """Sum of rank-one outer products per family, in float64.

    C1[a,b,c] = sum_q U1[a,q] V1[b,q] W1[c,q]; D2 additionally multiplies P[d,q].
    """
    f = {name: a.astype(np.float64) for name, a in fg.arrays().items()}
    return ExplicitGrammar(
        fg.dims,
        s=f["s"],
        C1=np.einsum("aq,bq,cq->abc", f["U1"], f["V1"], f["W1"]),
        D1=np.einsum("aq,bq,cq->abc", f["U2"], f["V2"], f["W2"]),
        C2=np.einsum("aq,bq,cq->abc", f["U3"], f["V3"], f["W3"]),
        D2=np.einsum("aq,bq,cq,dq->abcd", f["U4"], f["V4"], f["W4"], f["P"]),
        Q=f["Q"],
    )

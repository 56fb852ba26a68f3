"""
Reverse-mode differentiation over numpy arrays.

A Tape records Nodes produced by the primitives in this module. Each recorded
node keeps its parents and a closure mapping the output adjoint to parent
adjoints; `Tape.backward` runs one reverse sweep in recording order.

A non-recording tape (or a graph built only from constants) evaluates values
and keeps nothing, which is how inference runs when no gradient is needed.

Log-domain primitives (`log_project`, `log_pair_project`, `logsumexp`,
`logaddexp`) work on max-normalized mantissas and treat -inf as an exact zero:
such entries receive zero gradient, never NaN.
"""

from itertools import count

import numpy as np

from src.errors import ShapeError


class Node:
    __slots__ = ("value", "parents", "backward_fn", "tape", "uid", "name", "requires_grad")

    def __init__(self, value, tape, parents=(), backward_fn=None, requires_grad=False, name=None):
        self.value = value
        self.tape = tape
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad
        self.name = name
        self.uid = next(tape.counter)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self) -> str:
        label = self.name or "node"
        return f"<{label} #{self.uid} shape={self.value.shape}>"


class Tape:
    def __init__(self, recording: bool = True):
        self.recording = recording
        self.nodes: list[Node] = []
        self.counter = count()

    def leaf(self, value, name: str | None = None) -> Node:
        """A differentiable input."""
        node = Node(np.asarray(value), self, requires_grad=self.recording, name=name)
        if self.recording:
            self.nodes.append(node)
        return node

    def constant(self, value, name: str | None = None) -> Node:
        return Node(np.asarray(value), self, name=name)

    def record(self, value, parents, backward_fn, name: str | None = None) -> Node:
        if not self.recording or not any(p.requires_grad for p in parents):
            return Node(value, self, name=name)
        node = Node(value, self, tuple(parents), backward_fn, requires_grad=True, name=name)
        self.nodes.append(node)
        return node

    def backward(self, seeds: dict[Node, np.ndarray]) -> "Gradients":
        """One reverse sweep from the given output adjoints."""
        grads: dict[int, np.ndarray] = {}
        for node, seed in seeds.items():
            if node.requires_grad:
                _accumulate(grads, node, np.broadcast_to(np.asarray(seed, dtype=node.value.dtype), node.shape))
        for node in reversed(self.nodes):
            g = grads.get(node.uid)
            if g is None or node.backward_fn is None:
                continue
            for parent, pg in zip(node.parents, node.backward_fn(g)):
                if pg is not None and parent.requires_grad:
                    _accumulate(grads, parent, pg)
        return Gradients(grads)


class Gradients:
    def __init__(self, grads: dict[int, np.ndarray]):
        self._grads = grads

    def __getitem__(self, node: Node) -> np.ndarray:
        g = self._grads.get(node.uid)
        return np.zeros_like(node.value) if g is None else g

    def __contains__(self, node: Node) -> bool:
        return node.uid in self._grads


def _accumulate(grads: dict[int, np.ndarray], node: Node, g: np.ndarray) -> None:
    g = _unbroadcast(g, node.shape)
    if node.uid in grads:
        grads[node.uid] = grads[node.uid] + g
    else:
        grads[node.uid] = np.array(g, dtype=node.value.dtype, copy=True)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    if g.shape != shape:
        raise ShapeError(f"cannot reduce gradient of shape {g.shape} to {shape}")
    return g


def _safe_shift(x: np.ndarray, axis: int) -> np.ndarray:
    """Max over `axis` (kept), with non-finite maxima replaced by 0."""
    if x.shape[axis] == 0:
        shape = list(x.shape)
        shape[axis] = 1
        return np.zeros(shape, dtype=x.dtype)
    c = np.max(x, axis=axis, keepdims=True)
    return np.where(np.isfinite(c), c, 0.0).astype(x.dtype, copy=False)


def _ratio(g: np.ndarray, s: np.ndarray) -> np.ndarray:
    return np.divide(g, s, out=np.zeros(np.broadcast(g, s).shape, dtype=g.dtype), where=s > 0)


def _weights(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """exp(x - y) with zero wherever y is -inf."""
    finite = np.isfinite(y)
    diff = np.where(finite, x - np.where(finite, y, 0.0), -np.inf)
    return np.exp(diff)


# ---------------------------------------------------------------------------
# elementwise and structural primitives
# ---------------------------------------------------------------------------

def add(a: Node, b: Node) -> Node:
    return a.tape.record(a.value + b.value, (a, b), lambda g: (g, g))


def mul(a: Node, b: Node) -> Node:
    av, bv = a.value, b.value
    return a.tape.record(av * bv, (a, b), lambda g: (g * bv, g * av))


def scale(a: Node, c: float) -> Node:
    return a.tape.record(a.value * c, (a,), lambda g: (g * c,))


def neg(a: Node) -> Node:
    return scale(a, -1.0)


def relu(a: Node) -> Node:
    mask = a.value > 0
    return a.tape.record(a.value * mask, (a,), lambda g: (g * mask,))


def log(a: Node) -> Node:
    av = a.value
    with np.errstate(divide="ignore"):
        out = np.log(av)
    return a.tape.record(out, (a,), lambda g: (_ratio(g, av),))


def matmul(a: Node, b: Node) -> Node:
    av, bv = a.value, b.value

    def backward(g):
        return g @ np.swapaxes(bv, -1, -2), np.swapaxes(av, -1, -2) @ g

    return a.tape.record(av @ bv, (a, b), backward)


def affine(x: Node, weight: Node, bias: Node) -> Node:
    """x @ weight + bias with weight laid out [in, out]."""
    xv, wv = x.value, weight.value

    def backward(g):
        return g @ wv.T, xv.T @ g, g.sum(axis=0)

    return x.tape.record(xv @ wv + bias.value, (x, weight, bias), backward)


def transpose(a: Node, axes=None) -> Node:
    inverse = None if axes is None else np.argsort(axes)
    return a.tape.record(np.transpose(a.value, axes), (a,), lambda g: (np.transpose(g, inverse),))


def reshape(a: Node, shape) -> Node:
    original = a.shape
    return a.tape.record(a.value.reshape(shape), (a,), lambda g: (g.reshape(original),))


def expand(a: Node, axis: int) -> Node:
    """Insert a broadcastable axis; outer combinations are add/mul of expanded nodes."""
    return a.tape.record(np.expand_dims(a.value, axis), (a,), lambda g: (np.squeeze(g, axis=axis),))


def reduce_sum(a: Node, axis=None) -> Node:
    shape = a.shape

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return a.tape.record(np.sum(a.value, axis=axis), (a,), backward)


def _is_basic(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (int, slice, type(None), type(Ellipsis))) for p in parts)


def getitem(a: Node, index) -> Node:
    """Slice or gather; the reverse sweep scatter-adds so repeated indices accumulate."""
    shape, dtype = a.shape, a.value.dtype
    basic = _is_basic(index)

    def backward(g):
        out = np.zeros(shape, dtype=dtype)
        if basic:
            out[index] = g
        else:
            np.add.at(out, index, g)
        return (out,)

    return a.tape.record(a.value[index], (a,), backward)


def concat(nodes: list[Node], axis: int = 0) -> Node:
    sizes = [n.shape[axis] for n in nodes]
    splits = np.cumsum(sizes)[:-1]
    return nodes[0].tape.record(
        np.concatenate([n.value for n in nodes], axis=axis),
        tuple(nodes),
        lambda g: tuple(np.split(g, splits, axis=axis)),
    )


def stack(nodes: list[Node], axis: int = 0) -> Node:
    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(nodes)))

    return nodes[0].tape.record(np.stack([n.value for n in nodes], axis=axis), tuple(nodes), backward)


def softmax(a: Node, axis: int = -1) -> Node:
    """exp-normalize along `axis` with max subtraction; -inf logits get probability 0."""
    x = a.value
    e = np.exp(x - _safe_shift(x, axis))
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return a.tape.record(y, (a,), backward)


# ---------------------------------------------------------------------------
# log-domain primitives
# ---------------------------------------------------------------------------

def logsumexp(a: Node, axis: int = 0) -> Node:
    x = a.value
    c = _safe_shift(x, axis)
    with np.errstate(divide="ignore"):
        y = np.log(np.exp(x - c).sum(axis=axis, keepdims=True)) + c

    def backward(g):
        return (np.expand_dims(g, axis) * _weights(x, y),)

    return a.tape.record(np.squeeze(y, axis=axis), (a,), backward)


def logaddexp(a: Node, b: Node) -> Node:
    av, bv = a.value, b.value
    y = np.logaddexp(av, bv)
    return a.tape.record(y, (a, b), lambda g: (g * _weights(av, y), g * _weights(bv, y)))


def log_project(x: Node, kernel: Node) -> Node:
    """log(exp(x) @ kernel.T) over the last axis, evaluated on max-normalized mantissas."""
    xv, kv = x.value, kernel.value
    c = _safe_shift(xv, -1)
    p = np.exp(xv - c)
    s = p @ kv.T
    with np.errstate(divide="ignore"):
        y = np.log(s) + c

    def backward(g):
        q = _ratio(g, s)
        gx = p * (q @ kv)
        gk = q.reshape(-1, kv.shape[0]).T @ p.reshape(-1, kv.shape[1])
        return gx, gk

    return x.tape.record(y, (x, kernel), backward)


def log_pair_project(left: Node, right: Node, index: np.ndarray, kernel: Node, mask: np.ndarray) -> Node:
    """log((exp(left[i] + right[index[i, g]] + mask[i, g])) @ kernel.T) without keeping the pair tensor.

    `left` is [n, r], `right` is [N, r], `index` and `mask` are [n, G]; the
    combined [n, G, r] tensor is rebuilt during the reverse sweep.
    """
    lv, rv, kv = left.value, right.value, kernel.value

    def pair():
        x = lv[:, None, :] + rv[index] + mask[..., None]
        c = _safe_shift(x, -1)
        return np.exp(x - c), c

    p, c = pair()
    s = p @ kv.T
    with np.errstate(divide="ignore"):
        y = np.log(s) + c
    del p

    def backward(g):
        p, _ = pair()
        q = _ratio(g, s)
        gx = p * (q @ kv)
        gr = np.zeros_like(rv)
        np.add.at(gr, index.ravel(), gx.reshape(-1, rv.shape[-1]))
        gk = q.reshape(-1, kv.shape[0]).T @ p.reshape(-1, kv.shape[1])
        return gx.sum(axis=1), gr, gk

    return left.tape.record(y, (left, right, kernel), backward)

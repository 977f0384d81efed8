"""Tape-based reverse-mode differentiation over dense float64 arrays.

A :class:`Graph` records every op in insertion order, so the tape is already
topologically sorted and :meth:`Graph.backward` is a single reverse sweep.
Values are read-only numpy arrays; nothing on the tape is ever mutated.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

NORM_EPS = 1e-12
SQRT_EPS = 1e-12


class ShapeMismatch(ValueError):
    pass


class DomainError(ArithmeticError):
    pass


class NonScalarOutput(ValueError):
    pass


def _frozen(x) -> np.ndarray:
    arr = np.array(x, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Node:
    """One op record on the tape."""

    id: int
    op: str
    inputs: tuple[int, ...]
    value: np.ndarray
    graph: "Graph" = field(repr=False)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    # operator sugar keeps loss code readable
    def __add__(self, other):
        return self.graph.add(self, other)

    def __sub__(self, other):
        return self.graph.sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return self.graph.scale(self, float(other))
        return self.graph.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return self.graph.scale(self, -1.0)


VJP = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Graph:
    """Computation tape. Single owner, single thread."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self._vjps: list[VJP | None] = []
        self.params: dict[str, int] = {}

    # -- leaves -------------------------------------------------------------
    def _push(self, op: str, inputs: Sequence[Node], value, vjp: VJP | None) -> Node:
        for n in inputs:
            if n.graph is not self:
                raise ValueError("node belongs to a different graph")
        node = Node(len(self.nodes), op, tuple(n.id for n in inputs), _frozen(value), self)
        self.nodes.append(node)
        self._vjps.append(vjp)
        return node

    def param(self, name: str, value) -> Node:
        if name in self.params:
            raise ValueError(f"duplicate parameter {name!r}")
        node = self._push("param", (), value, None)
        self.params[name] = node.id
        return node

    def const(self, value) -> Node:
        return self._push("const", (), value, None)

    def _lift(self, x) -> Node:
        return x if isinstance(x, Node) else self.const(x)

    # -- elementwise --------------------------------------------------------
    def add(self, a, b) -> Node:
        a, b = self._lift(a), self._lift(b)
        _same_shape("add", a, b)
        return self._push("add", (a, b), a.value + b.value, lambda g: (g, g))

    def sub(self, a, b) -> Node:
        a, b = self._lift(a), self._lift(b)
        _same_shape("sub", a, b)
        return self._push("sub", (a, b), a.value - b.value, lambda g: (g, -g))

    def mul(self, a, b) -> Node:
        a, b = self._lift(a), self._lift(b)
        _same_shape("mul", a, b)
        av, bv = a.value, b.value
        return self._push("mul", (a, b), av * bv, lambda g: (g * bv, g * av))

    def scale(self, a: Node, c: float) -> Node:
        return self._push("scale", (a,), a.value * c, lambda g: (g * c,))

    def add_scalar(self, a: Node, c: float) -> Node:
        return self._push("add_scalar", (a,), a.value + c, lambda g: (g,))

    def relu(self, a: Node) -> Node:
        mask = (a.value > 0).astype(np.float64)
        return self._push("relu", (a,), a.value * mask, lambda g: (g * mask,))

    def abs(self, a: Node) -> Node:
        sign = np.sign(a.value)
        return self._push("abs", (a,), np.abs(a.value), lambda g: (g * sign,))

    def sqrt(self, a: Node) -> Node:
        if np.any(a.value < 0):
            raise DomainError("sqrt of negative entry")
        out = np.sqrt(a.value)
        denom = 2.0 * np.sqrt(np.maximum(a.value, SQRT_EPS))
        return self._push("sqrt", (a,), out, lambda g: (g / denom,))

    def sigmoid(self, a: Node) -> Node:
        s = _sigmoid(a.value)
        return self._push("sigmoid", (a,), s, lambda g: (g * s * (1.0 - s),))

    def log(self, a: Node) -> Node:
        if np.any(a.value <= 0):
            raise DomainError("log of non-positive entry")
        av = a.value
        return self._push("log", (a,), np.log(av), lambda g: (g / av,))

    def log_sigmoid(self, a: Node) -> Node:
        """Fused log(sigmoid(x)); stable for large |x|."""
        x = a.value
        out = -np.logaddexp(0.0, -x)
        return self._push("log_sigmoid", (a,), out, lambda g: (g * _sigmoid(-x),))

    # -- shape-aware --------------------------------------------------------
    def matmul(self, a, b) -> Node:
        a, b = self._lift(a), self._lift(b)
        if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")
        av, bv = a.value, b.value
        return self._push("matmul", (a, b), av @ bv, lambda g: (g @ bv.T, av.T @ g))

    def linear(self, x: Node, w: Node, b: Node) -> Node:
        """Row-batched affine map ``x @ w.T + b`` with w of shape (out, in)."""
        if x.value.ndim != 2 or w.value.ndim != 2 or b.value.ndim != 1:
            raise ShapeMismatch("linear expects x (n, in), w (out, in), b (out,)")
        if x.shape[1] != w.shape[1] or w.shape[0] != b.shape[0]:
            raise ShapeMismatch(f"linear {x.shape} with w {w.shape}, b {b.shape}")
        xv, wv = x.value, w.value
        out = xv @ wv.T + b.value

        def vjp(g):
            return g @ wv, g.T @ xv, g.sum(axis=0)

        return self._push("linear", (x, w, b), out, vjp)

    def scale_rows(self, a: Node, col) -> Node:
        """Multiply row r of ``a`` by ``col[r]``."""
        col = self._lift(col)
        if a.value.ndim != 2 or col.value.shape != (a.shape[0],):
            raise ShapeMismatch(f"scale_rows {a.shape} by {col.shape}")
        av, cv = a.value, col.value
        out = av * cv[:, None]
        return self._push(
            "scale_rows", (a, col), out, lambda g: (g * cv[:, None], (g * av).sum(axis=1))
        )

    def l2_normalize(self, a: Node) -> Node:
        """Normalize a vector, or each row of a matrix, to unit L2 norm."""
        av = a.value
        norm = np.linalg.norm(av, axis=-1, keepdims=True)
        if np.any(norm <= NORM_EPS):
            raise DomainError("l2_normalize of near-zero vector")
        y = av / norm

        def vjp(g):
            return ((g - y * np.sum(g * y, axis=-1, keepdims=True)) / norm,)

        return self._push("l2_normalize", (a,), y, vjp)

    def l1_normalize(self, a: Node) -> Node:
        av = a.value
        s = np.sum(np.abs(av), axis=-1, keepdims=True)
        if np.any(s <= NORM_EPS):
            raise DomainError("l1_normalize of near-zero vector")
        y = av / s
        sign = np.sign(av)

        def vjp(g):
            return (g / s - sign * np.sum(g * av, axis=-1, keepdims=True) / s**2,)

        return self._push("l1_normalize", (a,), y, vjp)

    def concat(self, parts: Sequence[Node], axis: int = -1) -> Node:
        parts = [self._lift(p) for p in parts]
        try:
            out = np.concatenate([p.value for p in parts], axis=axis)
        except ValueError as exc:
            raise ShapeMismatch(str(exc)) from None
        bounds = np.cumsum([p.value.shape[axis] for p in parts])[:-1]
        return self._push("concat", parts, out, lambda g: np.split(g, bounds, axis=axis))

    def dot(self, a, b) -> Node:
        """Inner product of two vectors, or row-wise inner products of two matrices."""
        a, b = self._lift(a), self._lift(b)
        _same_shape("dot", a, b)
        if a.value.ndim not in (1, 2):
            raise ShapeMismatch("dot expects vectors or matrices")
        av, bv = a.value, b.value
        out = np.sum(av * bv, axis=-1)
        if av.ndim == 1:
            return self._push("dot", (a, b), out, lambda g: (g * bv, g * av))
        return self._push(
            "dot", (a, b), out, lambda g: (g[:, None] * bv, g[:, None] * av)
        )

    def gather(self, a: Node, index) -> Node:
        """Select rows ``a[index]``; index is a constant integer array."""
        idx = np.asarray(index, dtype=np.intp)
        if a.value.ndim != 2 or idx.ndim != 1:
            raise ShapeMismatch("gather expects a matrix and a 1-d index")
        if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
            raise IndexError("gather index out of range")
        n_rows = a.shape[0]

        def vjp(g):
            out = np.zeros((n_rows,) + g.shape[1:])
            np.add.at(out, idx, g)
            return (out,)

        return self._push("gather", (a,), a.value[idx], vjp)

    def sum(self, a: Node, axis: int | None = None) -> Node:
        shape = a.shape
        out = np.sum(a.value, axis=axis)
        if axis is None:
            return self._push("sum", (a,), out, lambda g: (np.broadcast_to(g, shape),))
        return self._push(
            "sum", (a,), out,
            lambda g: (np.broadcast_to(np.expand_dims(g, axis), shape),),
        )

    def mean(self, a: Node) -> Node:
        n = a.value.size
        shape = a.shape
        return self._push(
            "mean", (a,), np.mean(a.value), lambda g: (np.broadcast_to(g / n, shape),)
        )

    # -- reverse sweep ------------------------------------------------------
    def backward(self, out: Node) -> dict[str, np.ndarray]:
        """Gradients of scalar ``out`` for every parameter on the tape.

        Parameters that ``out`` does not depend on get zero gradients.
        """
        if out.value.shape != ():
            raise NonScalarOutput(f"backward needs a scalar output, got {out.shape}")
        grads: list[np.ndarray | None] = [None] * len(self.nodes)
        grads[out.id] = np.ones(())
        for nid in range(out.id, -1, -1):
            g = grads[nid]
            vjp = self._vjps[nid]
            if g is None or vjp is None:
                continue
            node = self.nodes[nid]
            for src, gi in zip(node.inputs, vjp(g)):
                if gi is None:
                    continue
                grads[src] = gi if grads[src] is None else grads[src] + gi
        result = {}
        for name, nid in self.params.items():
            g = grads[nid]
            shape = self.nodes[nid].shape
            result[name] = np.zeros(shape) if g is None else np.array(g, dtype=np.float64).reshape(shape)
        return result


def _sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


def _same_shape(op: str, a: Node, b: Node) -> None:
    if a.shape != b.shape:
        raise ShapeMismatch(f"{op}: {a.shape} vs {b.shape}")


_OPS = {
    "add", "sub", "mul", "scale", "add_scalar", "relu", "abs", "sqrt", "sigmoid",
    "log", "log_sigmoid", "matmul", "linear", "scale_rows", "l2_normalize",
    "l1_normalize", "concat", "dot", "gather", "sum", "mean",
}


def forward(kind: str, *inputs, **kwargs) -> np.ndarray:
    """Evaluate a single op on constant inputs.

    >>> forward("l2_normalize", [3.0, 4.0]).tolist()
    [0.6, 0.8]
    """
    if kind not in _OPS:
        raise ValueError(f"unknown op {kind!r}")
    g = Graph()
    if kind == "concat":
        (parts,) = inputs
        return g.concat([g.const(p) for p in parts], **kwargs).value
    if kind == "gather":
        a, idx = inputs
        return g.gather(g.const(a), idx).value
    if kind in ("scale", "add_scalar"):
        a, c = inputs
        return getattr(g, kind)(g.const(a), float(c)).value
    nodes = [g.const(x) for x in inputs]
    return getattr(g, kind)(*nodes, **kwargs).value


# -- first-order optimizers ----------------------------------------------------

@dataclass
class OptimizerState:
    kind: str = "adam"
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")


def step(
    state: OptimizerState,
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
) -> tuple[dict[str, np.ndarray], OptimizerState]:
    """Apply one optimizer update; returns new parameters and the advanced state."""
    for name, p in params.items():
        if name not in grads or np.shape(grads[name]) != np.shape(p):
            raise ShapeMismatch(f"gradient for {name!r} does not match parameter shape")
    state.t += 1
    new = {}
    if state.kind == "sgd":
        for name, p in params.items():
            new[name] = p - state.lr * grads[name]
        return new, state

    b1, b2 = state.betas
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[name], state.v[name] = m, v
        m_hat = m / (1.0 - b1**state.t)
        v_hat = v / (1.0 - b2**state.t)
        new[name] = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, state

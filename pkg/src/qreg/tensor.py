"""Reverse-mode automatic differentiation over dense float64 arrays.

A Node wraps a numpy array plus the bookkeeping needed to run backprop:
its parents in the computation graph, a backward rule mapping the upstream
gradient to per-parent gradients, and a lazily allocated gradient buffer.
Graphs are built by the free functions below (matmul, conv2d, relu, ...);
backward() walks the graph once in reverse topological order and accumulates
gradients into every reachable node that requires them.

Values are float64 throughout. Arrays handed to a Node are treated as
immutable from then on; optimizers rebind `node.value` to a fresh array
rather than writing in place.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, DomainError

Array = np.ndarray


def as_array(x) -> Array:
    a = np.asarray(x, dtype=np.float64)
    # ascontiguousarray would promote 0-d scalars to 1-d
    return np.ascontiguousarray(a) if a.ndim else a


class Node:
    """One vertex of the computation graph.

    backward_rule, when present, takes the upstream gradient (same shape as
    `value`) and returns one gradient per parent, in parent order; entries
    may be None for parents that need no gradient.
    """

    __slots__ = ("value", "parents", "requires_grad", "name", "_grad", "_backward_rule")

    def __init__(
        self,
        value,
        parents: Sequence["Node"] = (),
        backward_rule: Callable[[Array], Sequence[Array | None]] | None = None,
        requires_grad: bool = False,
        name: str = "",
    ):
        self.value = as_array(value)
        self.parents = tuple(parents)
        self._backward_rule = backward_rule
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in self.parents)
        self.name = name
        self._grad = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def grad(self) -> Array:
        """Accumulated gradient; zeros if backward never reached this node."""
        if self._grad is None:
            return np.zeros_like(self.value)
        return self._grad

    def zero_grad(self) -> None:
        self._grad = None

    def _accumulate(self, g: Array) -> None:
        # first contribution is copied so the buffer never aliases caller arrays
        assert g.shape == self.value.shape, f"gradient shape {g.shape} vs value {self.value.shape}"
        if self._grad is None:
            self._grad = np.array(g, dtype=np.float64)
        else:
            self._grad = self._grad + g

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Node(shape={self.value.shape}{tag}, requires_grad={self.requires_grad})"


def constant(value, name: str = "") -> Node:
    return Node(value, name=name)


def parameter(value, name: str = "") -> Node:
    return Node(value, requires_grad=True, name=name)


def _wrap(x) -> Node:
    return x if isinstance(x, Node) else Node(x)


def backward(loss: Node) -> None:
    """Accumulate d(loss)/d(node) into every reachable node requiring grad.

    `loss` must be a scalar (shape () or (1,)). Gradients add onto whatever
    is already stored, so call zero_grad on parameters between steps.
    """
    if loss.value.shape not in ((), (1,)):
        raise ContractError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    if not loss.requires_grad:
        return
    # iterative post-order DFS; recursion would overflow on deep graphs
    topo: list[Node] = []
    seen = {id(loss)}
    stack: list[tuple[Node, int]] = [(loss, 0)]
    while stack:
        node, i = stack.pop()
        if i < len(node.parents):
            stack.append((node, i + 1))
            p = node.parents[i]
            if p.requires_grad and id(p) not in seen:
                seen.add(id(p))
                stack.append((p, 0))
        else:
            topo.append(node)
    # propagate through per-call buffers, then fold into the persistent .grad;
    # reusing .grad directly would re-propagate stale sums on a second call
    local: dict[int, Array] = {id(loss): np.ones_like(loss.value)}
    for node in reversed(topo):
        g = local.pop(id(node), None)
        if g is None:
            continue
        node._accumulate(g)
        rule = node._backward_rule
        if rule is None:
            continue
        for parent, pg in zip(node.parents, rule(g)):
            if parent.requires_grad and pg is not None:
                pid = id(parent)
                prev = local.get(pid)
                local[pid] = pg if prev is None else prev + pg


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Sum a gradient over the axes numpy broadcasting expanded."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcastable(a: tuple[int, ...], b: tuple[int, ...]) -> bool:
    for x, y in zip(reversed(a), reversed(b)):
        if x != y and x != 1 and y != 1:
            return False
    return True


def _binary(a: Node, b: Node, fn, da, db, opname: str) -> Node:
    if not _broadcastable(a.shape, b.shape):
        raise DimensionError(f"{opname}: shapes {a.shape} and {b.shape} do not broadcast")
    out_value = fn(a.value, b.value)

    def rule(g: Array):
        ga = _unbroadcast(da(g), a.shape) if a.requires_grad else None
        gb = _unbroadcast(db(g), b.shape) if b.requires_grad else None
        return ga, gb

    return Node(out_value, (a, b), rule)


def add(a, b) -> Node:
    a, b = _wrap(a), _wrap(b)
    return _binary(a, b, np.add, lambda g: g, lambda g: g, "add")


def sub(a, b) -> Node:
    a, b = _wrap(a), _wrap(b)
    return _binary(a, b, np.subtract, lambda g: g, lambda g: -g, "sub")


def mul(a, b) -> Node:
    a, b = _wrap(a), _wrap(b)
    av, bv = a.value, b.value
    return _binary(a, b, np.multiply, lambda g: g * bv, lambda g: g * av, "mul")


def matmul(a: Node, b: Node) -> Node:
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise DimensionError(f"matmul needs 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    av, bv = a.value, b.value

    def rule(g: Array):
        ga = g @ bv.T if a.requires_grad else None
        gb = av.T @ g if b.requires_grad else None
        return ga, gb

    return Node(av @ bv, (a, b), rule)


def transpose(a: Node) -> Node:
    if a.value.ndim != 2:
        raise DimensionError(f"transpose needs a 2-d operand, got {a.shape}")
    return Node(a.value.T, (a,), lambda g: (g.T,))


def reshape(a: Node, shape: tuple[int, ...]) -> Node:
    old = a.value.shape
    try:
        out = a.value.reshape(shape)
    except ValueError as e:
        raise DimensionError(f"reshape {old} -> {shape}: {e}") from None
    return Node(out, (a,), lambda g: (g.reshape(old),))


def relu(a: Node) -> Node:
    v = a.value
    mask = v > 0.0  # gradient at exactly zero is zero
    return Node(np.maximum(v, 0.0), (a,), lambda g: (g * mask,))


def sigmoid(a: Node) -> Node:
    out = sigmoid_value(a.value)
    return Node(out, (a,), lambda g: (g * out * (1.0 - out),))


def sigmoid_value(v: Array) -> Array:
    """Numerically stable logistic function on raw arrays."""
    v = np.asarray(v, dtype=np.float64)
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def exp(a: Node) -> Node:
    out = np.exp(a.value)
    return Node(out, (a,), lambda g: (g * out,))


def log(a: Node) -> Node:
    v = a.value
    if np.any(v <= 0.0):
        raise DomainError("log requires strictly positive inputs")
    return Node(np.log(v), (a,), lambda g: (g / v,))


def power(a: Node, exponent: float) -> Node:
    """Elementwise a**exponent for a constant real exponent."""
    v = a.value
    if exponent != int(exponent) and np.any(v < 0.0):
        raise DomainError("fractional power of a negative base")
    out = v ** exponent

    def rule(g: Array):
        return (g * exponent * v ** (exponent - 1.0),)

    return Node(out, (a,), rule)


def clamp(a: Node, lo: float, hi: float) -> Node:
    if not lo < hi:
        raise ContractError(f"clamp bounds must satisfy lo < hi, got [{lo}, {hi}]")
    v = a.value
    mask = (v >= lo) & (v <= hi)  # gradient passes inside the closed interval
    return Node(np.clip(v, lo, hi), (a,), lambda g: (g * mask,))


def reduce_sum(a: Node, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Node:
    v = a.value
    out = v.sum(axis=axis, keepdims=keepdims)
    if axis is None:
        kept = (1,) * v.ndim
    else:
        ax = (axis,) if isinstance(axis, int) else tuple(axis)
        ax = tuple(i % v.ndim for i in ax)
        kept = tuple(1 if i in ax else d for i, d in enumerate(v.shape))

    def rule(g: Array):
        return (np.broadcast_to(g.reshape(kept), v.shape),)

    return Node(out, (a,), rule)


def reduce_mean(a: Node, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Node:
    v = a.value
    if axis is None:
        count = v.size
    else:
        ax = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([v.shape[i % v.ndim] for i in ax]))
    total = reduce_sum(a, axis=axis, keepdims=keepdims)
    return mul(total, 1.0 / count)


def straight_through(a: Node, forward: Callable[[Array], Array]) -> Node:
    """Apply `forward` to the value; pass the upstream gradient through unchanged.

    The straight-through estimator: the backward rule is the identity, so the
    gradient reaching this node's output is handed to `a` bit for bit.
    `forward` must preserve shape.
    """
    out = as_array(forward(a.value))
    if out.shape != a.value.shape:
        raise ContractError(
            f"straight_through forward changed shape {a.value.shape} -> {out.shape}"
        )
    return Node(out, (a,), lambda g: (g,))


def conv2d(x: Node, w: Node, stride: int = 1, padding: int = 0) -> Node:
    """2-d cross-correlation of x [N,C,H,W] with filters w [F,C,kh,kw].

    Output spatial size is floor((H + 2*padding - kh)/stride) + 1 per axis.
    Implemented as im2col + one matmul; the backward scatter loops over the
    kh*kw kernel offsets, each a strided slice add.
    """
    if x.value.ndim != 4 or w.value.ndim != 4:
        raise DimensionError(f"conv2d needs 4-d input and kernel, got {x.shape} and {w.shape}")
    if stride < 1 or padding < 0:
        raise ContractError(f"conv2d: stride must be >= 1 and padding >= 0, got {stride}, {padding}")
    n, c, h, wd = x.shape
    f, cw, kh, kw = w.shape
    if cw != c:
        raise DimensionError(f"conv2d: input has {c} channels but kernel expects {cw}")
    hp, wp = h + 2 * padding, wd + 2 * padding
    if kh > hp or kw > wp:
        raise DimensionError(
            f"conv2d: kernel {kh}x{kw} larger than padded input {hp}x{wp}"
        )
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1

    xp = x.value
    if padding:
        xp = np.pad(xp, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # [N, C, Ho, Wo, kh, kw]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    wmat = w.value.reshape(f, c * kh * kw)
    out = (cols @ wmat.T).reshape(n, ho, wo, f).transpose(0, 3, 1, 2)

    def rule(g: Array):
        gmat = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, f)
        gw = (gmat.T @ cols).reshape(f, c, kh, kw) if w.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = (gmat @ wmat).reshape(n, ho, wo, c, kh, kw).transpose(0, 3, 1, 2, 4, 5)
            dxp = np.zeros((n, c, hp, wp))
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += dcols[..., i, j]
            gx = dxp[:, :, padding : padding + h, padding : padding + wd] if padding else dxp
        return gx, gw

    return Node(np.ascontiguousarray(out), (x, w), rule)

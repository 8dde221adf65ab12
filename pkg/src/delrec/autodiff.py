"""Minimal reverse-mode differentiation over numpy arrays.

Operations executed while a :class:`Tape` is active are appended to it in
execution order; :meth:`Tape.backward` replays them in reverse and
accumulates gradients additively at fan-in. Outside a tape the same
operations simply compute values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

_ACTIVE: list["Tape"] = []


class Var:
    """An array value, optionally tracked for differentiation."""

    __slots__ = ("value", "requires_grad", "name", "group", "grad", "node", "__weakref__")
    __array_ufunc__ = None

    def __init__(self, value, requires_grad: bool = False, name: str | None = None,
                 group: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self.group = group
        self.grad: np.ndarray | None = None
        self.node: Node | None = None

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Var{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)


@dataclass
class IndexedGrad:
    """Gradient contribution to a slice of a parent."""

    index: object
    value: np.ndarray


@dataclass(eq=False)
class Node:
    out: Var
    parents: tuple
    backward: Callable[[np.ndarray], Sequence]
    kind: str = "op"


@dataclass
class Tape:
    """Ordered record of primitive operations."""

    nodes: list = field(default_factory=list)

    def __enter__(self):
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.remove(self)
        return False

    def backward(self, loss: Var) -> dict:
        """Populate ``.grad`` on every leaf reachable from ``loss``.

        Returns a mapping from leaf ``Var`` to its gradient.
        """
        if not self.nodes:
            raise RuntimeError("backward called before any forward was recorded")
        if loss.node is None or not any(n is loss.node for n in self.nodes):
            raise RuntimeError("loss was not produced on this tape")
        if loss.value.size != 1:
            raise ValueError("backward expects a scalar loss")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
        owned: set[int] = set()
        leaves: dict[int, Var] = {}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            for parent, pg in zip(node.parents, node.backward(g)):
                if pg is None or not isinstance(parent, Var) or not parent.requires_grad:
                    continue
                _accumulate(grads, owned, parent, pg)
                if parent.node is None:
                    leaves[id(parent)] = parent
        out = {}
        for key, var in leaves.items():
            var.grad = np.array(grads.get(key, np.zeros_like(var.value)))
            out[var] = var.grad
        return out


def _accumulate(grads, owned, parent: Var, pg):
    key = id(parent)
    acc = grads.get(key)
    if isinstance(pg, IndexedGrad):
        if key not in owned:
            acc = np.zeros_like(parent.value) if acc is None else np.array(acc)
            grads[key] = acc
            owned.add(key)
        acc[pg.index] += pg.value
        return
    pg = _unbroadcast(np.asarray(pg, dtype=np.float64), parent.value.shape)
    if acc is None:
        grads[key] = pg
    else:
        grads[key] = acc + pg
        owned.add(key)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def active_tape() -> Tape | None:
    return _ACTIVE[-1] if _ACTIVE else None


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def record(value, parents: Sequence, backward: Callable, kind: str = "op") -> Var:
    """Wrap ``value`` as the output of a primitive with the given parents.

    ``backward(g)`` must return one gradient (array, :class:`IndexedGrad`
    or ``None``) per parent.
    """
    out = Var(value)
    tape = active_tape()
    if tape is None:
        return out
    if not any(isinstance(p, Var) and p.requires_grad for p in parents):
        return out
    out.requires_grad = True
    out.node = Node(out, tuple(parents), backward, kind)
    tape.nodes.append(out.node)
    return out


# -- elementwise ----------------------------------------------------------

def add(a, b):
    av, bv = value_of(a), value_of(b)
    return record(av + bv, (a, b), lambda g: (g, g), "add")


def sub(a, b):
    av, bv = value_of(a), value_of(b)
    return record(av - bv, (a, b), lambda g: (g, -g), "sub")


def mul(a, b):
    av, bv = value_of(a), value_of(b)
    return record(av * bv, (a, b), lambda g: (g * bv, g * av), "mul")


def div(a, b):
    av, bv = value_of(a), value_of(b)
    return record(av / bv, (a, b), lambda g: (g / bv, -g * av / (bv * bv)), "div")


def exp(a):
    out = np.exp(value_of(a))
    return record(out, (a,), lambda g: (g * out,), "exp")


def log(a):
    av = value_of(a)
    return record(np.log(av), (a,), lambda g: (g / av,), "log")


def square(a):
    av = value_of(a)
    return record(av * av, (a,), lambda g: (2.0 * g * av,), "square")


def sigmoid(a):
    from .kernel import sig

    out = np.asarray(sig(value_of(a)))
    return record(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def detach(a) -> Var:
    return Var(value_of(a))


# -- reductions and shape ---------------------------------------------------

def sum_(a, axis=None, keepdims=False):
    av = value_of(a)
    out = av.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, av.shape),)

    return record(out, (a,), bw, "sum")


def mean(a, axis=None, keepdims=False):
    av = value_of(a)
    n = av.size if axis is None else np.prod([av.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / n)


def getitem(a, idx):
    av = value_of(a)
    return record(av[idx], (a,), lambda g: (IndexedGrad(idx, g),), "index")


def unstack(a) -> list:
    """Split along axis 0 into per-step views."""
    return [getitem(a, t) for t in range(value_of(a).shape[0])]


def stack(items: Sequence, axis: int = 0):
    vals = [value_of(x) for x in items]
    out = np.stack(vals, axis=axis)

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(vals)))

    return record(out, tuple(items), bw, "stack")


def reshape(a, shape):
    av = value_of(a)
    return record(av.reshape(shape), (a,), lambda g: (g.reshape(av.shape),), "reshape")


# -- linear algebra -----------------------------------------------------------

def matmul(a, b):
    av, bv = value_of(a), value_of(b)

    def bw(g):
        ga = g @ np.swapaxes(bv, -1, -2) if bv.ndim >= 2 else np.multiply.outer(g, bv)
        if av.ndim == 1:
            gb = np.multiply.outer(av, g)
        else:
            a2 = av.reshape(-1, av.shape[-1])
            gb = a2.T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return record(av @ bv, (a, b), bw, "matmul")


def linear(x, w, b=None):
    """``x @ w.T + b`` over the last axis of ``x``; ``w`` is ``(out, in)``."""
    xv, wv = value_of(x), value_of(w)
    out = xv @ wv.T
    if b is not None:
        out = out + value_of(b)

    def bw(g):
        gx = g @ wv
        gw = g.reshape(-1, g.shape[-1]).T @ xv.reshape(-1, xv.shape[-1])
        gb = g.reshape(-1, g.shape[-1]).sum(axis=0) if b is not None else None
        return gx, gw, gb

    return record(out, (x, w, b), bw, "linear")


# -- normalisation / classification -----------------------------------------

def log_softmax(a, axis=-1):
    av = value_of(a)
    m = av.max(axis=axis, keepdims=True)
    z = av - m
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    sm = np.exp(out)
    return record(out, (a,), lambda g: (g - sm * g.sum(axis=axis, keepdims=True),),
                  "log_softmax")


def softmax(a, axis=-1):
    av = value_of(a)
    z = np.exp(av - av.max(axis=axis, keepdims=True))
    out = z / z.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return record(out, (a,), bw, "softmax")


def dropout_apply(x, rate: float, rng: np.random.Generator | None, training: bool):
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    mask = (rng.random(value_of(x).shape) >= rate) / (1.0 - rate)
    return mul(x, mask)


def batch_norm(x, gamma, beta, running_mean, running_var, training: bool,
               momentum: float = 0.1, eps: float = 1e-5):
    """Per-channel normalisation with statistics over all leading axes.

    ``running_mean`` and ``running_var`` are updated in place in training.
    """
    xv = value_of(x)
    axes = tuple(range(xv.ndim - 1))
    if training:
        mu = xv.mean(axis=axes)
        var = xv.var(axis=axes)
        n = xv.size // xv.shape[-1]
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var * n / max(n - 1, 1)
    else:
        mu, var = running_mean, running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xv - mu) * inv
    gv, bv = value_of(gamma), value_of(beta)
    out = xhat * gv + bv

    def bw(g):
        gg = (g * xhat).sum(axis=axes)
        gb = g.sum(axis=axes)
        gxhat = g * gv
        if training:
            m = xv.size // xv.shape[-1]
            gx = inv / m * (m * gxhat - gxhat.sum(axis=axes) - xhat * (gxhat * xhat).sum(axis=axes))
        else:
            gx = gxhat * inv
        return gx, gg, gb

    return record(out, (x, gamma, beta), bw, "batch_norm")


# -- graph inspection -----------------------------------------------------------

def dependency_hops(target: Var, source: Var, hop_kind: str,
                    skip: dict[str, Sequence[int]] | None = None) -> int | None:
    """Fewest ``hop_kind`` nodes on any tape path from ``source`` to ``target``.

    ``skip`` maps node kinds to parent positions whose edges are ignored.
    Returns ``None`` when ``target`` does not depend on ``source``.
    """
    import heapq

    skip = skip or {}
    best = {id(target): 0}
    heap = [(0, 0, target)]
    counter = 1
    while heap:
        cost, _, var = heapq.heappop(heap)
        if var is source:
            return cost
        if cost > best.get(id(var), np.inf) or var.node is None:
            continue
        node = var.node
        step = 1 if node.kind == hop_kind else 0
        ignored = set(skip.get(node.kind, ()))
        for pos, parent in enumerate(node.parents):
            if pos in ignored or not isinstance(parent, Var):
                continue
            c = cost + step
            if c < best.get(id(parent), np.inf):
                best[id(parent)] = c
                heapq.heappush(heap, (c, counter, parent))
                counter += 1
    return None

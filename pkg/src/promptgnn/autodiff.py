"""Minimal dense-matrix reverse-mode automatic differentiation.

Every value is a 2-D float64 matrix. Operations build an acyclic graph
eagerly (forward values computed at construction); ``backward`` on a 1x1
loss accumulates gradients into every reachable tensor that requires them.
Gradients accumulate across backward calls (+=); callers zero them
explicitly between optimizer steps.

Single-threaded: tensors must not be shared across threads during a
backward pass.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, NumericError

Array = np.ndarray

# vjp: maps the output gradient to per-parent gradient contributions
Vjp = Callable[[Array], tuple]


class Tensor:
    """A 2-D float64 matrix with an optional gradient slot."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise DimensionError(f"tensors are 2-D, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: Array | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Vjp | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def detach(self) -> "Tensor":
        """A leaf view of the same data, cut off from the graph."""
        return Tensor(self.data, requires_grad=False)

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar; the named functions below do the work
    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def t(self) -> "Tensor":
        return transpose(self)


def _node(data: Array, parents: tuple[Tensor, ...], vjp: Vjp) -> Tensor:
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = parents
        out._vjp = vjp
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    return _node(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def transpose(x: Tensor) -> Tensor:
    return _node(x.data.T.copy(), (x,), lambda g: (g.T,))


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; a 1xn row vector may broadcast over the other's rows."""
    if a.shape == b.shape:
        return _node(a.data + b.data, (a, b), lambda g: (g, g))
    if a.shape[1] == b.shape[1] and b.shape[0] == 1:
        return _node(a.data + b.data, (a, b),
                     lambda g: (g, g.sum(axis=0, keepdims=True)))
    if a.shape[1] == b.shape[1] and a.shape[0] == 1:
        return _node(a.data + b.data, (a, b),
                     lambda g: (g.sum(axis=0, keepdims=True), g))
    raise DimensionError(f"add shape mismatch: {a.shape} vs {b.shape}")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"sub shape mismatch: {a.shape} vs {b.shape}")
    return _node(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard product of same-shape tensors."""
    if a.shape != b.shape:
        raise DimensionError(f"mul shape mismatch: {a.shape} vs {b.shape}")
    ad, bd = a.data, b.data
    return _node(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return _node(x.data * c, (x,), lambda g: (g * c,))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _node(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    factor = np.where(x.data > 0, 1.0, float(slope))
    return _node(x.data * factor, (x,), lambda g: (g * factor,))


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so exp never overflows
    d = x.data
    s = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                 np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    return _node(s, (x,), lambda g: (g * s * (1.0 - s),))


def exp(x: Tensor) -> Tensor:
    e = np.exp(x.data)
    return _node(e, (x,), lambda g: (g * e,))


def log(x: Tensor, eps: float | None = None) -> Tensor:
    """Natural log. Without eps the input must be strictly positive; with
    eps the argument is shifted to x + eps (the loss-side convention)."""
    if eps is None:
        if np.any(x.data <= 0):
            raise NumericError("log of nonpositive value (pass eps to clamp)")
        shifted = x.data
    else:
        shifted = x.data + float(eps)
        if np.any(shifted <= 0):
            raise NumericError("log argument still nonpositive after eps shift")
    return _node(np.log(shifted), (x,), lambda g: (g / shifted,))


def rowwise_softmax(x: Tensor) -> Tensor:
    if np.isnan(x.data).any():
        raise NumericError("softmax input contains NaN")
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)

    def vjp(g: Array) -> tuple:
        inner = (g * s).sum(axis=1, keepdims=True)
        return (s * (g - inner),)

    return _node(s, (x,), vjp)


def _check_nonempty(x: Tensor, op: str) -> None:
    if x.data.size == 0:
        raise DimensionError(f"{op} of empty tensor")


def reduce_sum(x: Tensor) -> Tensor:
    _check_nonempty(x, "sum")
    shape = x.shape
    return _node(np.array([[x.data.sum()]]), (x,),
                 lambda g: (np.full(shape, g[0, 0]),))


def reduce_mean(x: Tensor) -> Tensor:
    _check_nonempty(x, "mean")
    shape = x.shape
    n = x.data.size
    return _node(np.array([[x.data.mean()]]), (x,),
                 lambda g: (np.full(shape, g[0, 0] / n),))


def row_mean(x: Tensor) -> Tensor:
    """Mean across each row: (m, n) -> (m, 1)."""
    _check_nonempty(x, "row_mean")
    n = x.shape[1]
    return _node(x.data.mean(axis=1, keepdims=True), (x,),
                 lambda g: (np.repeat(g, n, axis=1) / n,))


def col_mean(x: Tensor) -> Tensor:
    """Mean down each column: (m, n) -> (1, n)."""
    _check_nonempty(x, "col_mean")
    m = x.shape[0]
    return _node(x.data.mean(axis=0, keepdims=True), (x,),
                 lambda g: (np.repeat(g, m, axis=0) / m,))


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise DimensionError("concat_rows of no tensors")
    cols = parts[0].shape[1]
    for p in parts:
        if p.shape[1] != cols:
            raise DimensionError("concat_rows column counts differ")
    sizes = [p.shape[0] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def vjp(g: Array) -> tuple:
        return tuple(g[offsets[i]:offsets[i + 1]] for i in range(len(parts)))

    return _node(np.vstack([p.data for p in parts]), tuple(parts), vjp)


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start < stop <= x.shape[0]):
        raise DimensionError(f"row slice [{start}:{stop}] out of range for {x.shape}")
    shape = x.shape

    def vjp(g: Array) -> tuple:
        full = np.zeros(shape)
        full[start:stop] = g
        return (full,)

    return _node(x.data[start:stop].copy(), (x,), vjp)


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(t) into t.grad for every requires_grad tensor
    reachable from the 1x1 loss. Repeated calls add up; zero grads between
    optimizer steps."""
    if loss.shape != (1, 1):
        raise ContractError(f"backward needs a scalar loss, got {loss.shape}")
    # iterative topological order (graphs can be deep for large batches)
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))

    grads: dict[int, Array] = {id(loss): np.ones((1, 1))}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g if node.grad is None else node.grad + g
        if node._vjp is None:
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if not parent.requires_grad or pg is None:
                continue
            acc = grads.get(id(parent))
            grads[id(parent)] = pg if acc is None else acc + pg


def zero_grads(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad = None

"""Dense float64 tensor with reverse-mode automatic differentiation.

Every operation records a closure that maps the output gradient to
contributions for its parents; :meth:`Tensor.backward` replays those
closures in reverse topological order.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import expit

DTYPE = np.float64
LOG_EPS = 1e-12

_grad_enabled = True


class ShapeError(ValueError):
    """Operand extents are incompatible."""


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    ndim_extra = grad.ndim - len(shape)
    if ndim_extra > 0:
        grad = grad.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _is_basic_index(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(
        p is None or p is Ellipsis or isinstance(p, (slice, int, np.integer)) for p in parts
    )


def as_tensor(x) -> "Tensor":
    return x if isinstance(x, Tensor) else Tensor(x)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "__weakref__")

    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _result(data, parents: Sequence["Tensor"], backward) -> "Tensor":
        out = Tensor(data)
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def _accum(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        g = _unbroadcast(np.asarray(g, dtype=DTYPE), self.data.shape)
        if self.grad is None:
            self.grad = np.array(g, dtype=DTYPE, copy=True)
        else:
            self.grad += g

    def _accum_at(self, index, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        if _is_basic_index(index):
            self.grad[index] += g
        else:
            np.add.at(self.grad, index, g)

    # -- basic protocol -------------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({np.array2string(self.data, precision=4)}{flag})"

    # -- backward -------------------------------------------------------------

    def backward(self, grad=None) -> None:
        if not self.requires_grad:
            raise RuntimeError("tensor does not require grad")
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = self._topological_order()
        self._accum(np.asarray(grad, dtype=DTYPE))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def _topological_order(self) -> list["Tensor"]:
        # iterative DFS; recurrent graphs are deeper than the recursion limit
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        return order

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self, other

        def backward(g):
            a._accum(g)
            b._accum(g)

        return Tensor._result(a.data + b.data, (a, b), backward)

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self, other

        def backward(g):
            a._accum(g)
            b._accum(-g)

        return Tensor._result(a.data - b.data, (a, b), backward)

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other) - self

    def __mul__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self, other

        def backward(g):
            if a.requires_grad:
                a._accum(g * b.data)
            if b.requires_grad:
                b._accum(g * a.data)

        return Tensor._result(a.data * b.data, (a, b), backward)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self, other

        def backward(g):
            if a.requires_grad:
                a._accum(g / b.data)
            if b.requires_grad:
                b._accum(-g * a.data / (b.data * b.data))

        return Tensor._result(a.data / b.data, (a, b), backward)

    def __rtruediv__(self, other) -> "Tensor":
        return as_tensor(other) / self

    def __neg__(self) -> "Tensor":
        a = self
        return Tensor._result(-a.data, (a,), lambda g: a._accum(-g))

    def __pow__(self, exponent: float) -> "Tensor":
        a = self
        e = float(exponent)

        def backward(g):
            a._accum(g * e * a.data ** (e - 1.0))

        return Tensor._result(a.data**e, (a,), backward)

    def __matmul__(self, other) -> "Tensor":
        return matmul(self, other)

    # -- reductions and shape ---------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        a = self

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a._accum(np.broadcast_to(g, a.data.shape))

        return Tensor._result(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.data.size
        else:
            axes = (axis,) if isinstance(axis, int) else axis
            count = int(np.prod([self.data.shape[ax] for ax in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        return Tensor._result(
            a.data.reshape(shape), (a,), lambda g: a._accum(g.reshape(a.data.shape))
        )

    def transpose(self, *axes) -> "Tensor":
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inverse = np.argsort(axes)
        a = self
        return Tensor._result(
            a.data.transpose(axes), (a,), lambda g: a._accum(g.transpose(inverse))
        )

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def __getitem__(self, index) -> "Tensor":
        if isinstance(index, Tensor):
            index = index.data.astype(np.intp)
        a = self
        return Tensor._result(a.data[index], (a,), lambda g: a._accum_at(index, g))

    # -- elementwise functions ------------------------------------------------

    def exp(self) -> "Tensor":
        a = self
        out = np.exp(a.data)
        return Tensor._result(out, (a,), lambda g: a._accum(g * out))

    def log(self, eps: float = LOG_EPS) -> "Tensor":
        """Natural log with the argument floored at ``eps``."""
        a = self
        floored = np.maximum(a.data, eps)
        mask = a.data >= eps

        def backward(g):
            a._accum(np.where(mask, g / floored, 0.0))

        return Tensor._result(np.log(floored), (a,), backward)

    def tanh(self) -> "Tensor":
        a = self
        out = np.tanh(a.data)
        return Tensor._result(out, (a,), lambda g: a._accum(g * (1.0 - out * out)))

    def sigmoid(self) -> "Tensor":
        a = self
        out = expit(a.data)
        return Tensor._result(out, (a,), lambda g: a._accum(g * out * (1.0 - out)))

    def relu(self) -> "Tensor":
        a = self
        mask = a.data > 0

        return Tensor._result(a.data * mask, (a,), lambda g: a._accum(g * mask))

    def abs(self) -> "Tensor":
        a = self
        sign = np.sign(a.data)
        return Tensor._result(np.abs(a.data), (a,), lambda g: a._accum(g * sign))

    def clamp_min(self, floor: float) -> "Tensor":
        a = self
        mask = a.data >= floor
        return Tensor._result(
            np.maximum(a.data, floor), (a,), lambda g: a._accum(np.where(mask, g, 0.0))
        )


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def zeros(*shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=DTYPE), requires_grad=requires_grad)


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes with broadcasting batch axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs operands of rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} @ {b.shape}")

    def backward(g):
        if a.requires_grad:
            a._accum(g @ np.swapaxes(b.data, -1, -2))
        if b.requires_grad:
            b._accum(np.swapaxes(a.data, -1, -2) @ g)

    return Tensor._result(a.data @ b.data, (a, b), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        parts = np.split(g, bounds[1:-1], axis=axis)
        for t, part in zip(tensors, parts):
            t._accum(part)

    return Tensor._result(data, tensors, backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        for i, t in enumerate(tensors):
            t._accum(np.take(g, i, axis=axis))

    return Tensor._result(data, tensors, backward)


def unbind(x: Tensor, axis: int = 0) -> list[Tensor]:
    """Split along ``axis`` into views; cheaper than repeated indexing."""
    return [x[(slice(None),) * (axis % x.ndim) + (i,)] for i in range(x.shape[axis])]


def relu(x: Tensor) -> Tensor:
    return x.relu()


def tanh(x: Tensor) -> Tensor:
    return x.tanh()


def sigmoid(x: Tensor) -> Tensor:
    return x.sigmoid()


logistic = sigmoid


def log(x: Tensor, eps: float = LOG_EPS) -> Tensor:
    return x.log(eps)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        x._accum(out * (g - (g * out).sum(axis=axis, keepdims=True)))

    return Tensor._result(out, (x,), backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)

    def backward(g):
        x._accum(g - probs * g.sum(axis=axis, keepdims=True))

    return Tensor._result(out, (x,), backward)


def conv1d_causal(x: Tensor, weight: Tensor, bias: Tensor | None = None, dilation: int = 1) -> Tensor:
    """Causal dilated convolution.

    ``x`` is (batch, in_ch, L) and ``weight`` is (out_ch, in_ch, K).  The
    input is left-padded with ``(K - 1) * dilation`` zeros so the output
    keeps length L and position t only sees inputs at times <= t.  Tap
    ``k`` of the kernel reads the input ``(K - 1 - k) * dilation`` steps
    back, so the last tap is the current step.
    """
    if int(dilation) != dilation or dilation < 1:
        raise ValueError(f"dilation must be a positive integer, got {dilation}")
    dilation = int(dilation)
    if x.ndim != 3 or weight.ndim != 3:
        raise ShapeError(f"conv1d_causal expects rank-3 input and kernel, got {x.shape}, {weight.shape}")
    batch, in_ch, length = x.shape
    out_ch, w_in, k = weight.shape
    if w_in != in_ch:
        raise ShapeError(f"kernel expects {w_in} input channels, input has {in_ch}")
    pad = (k - 1) * dilation
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, 0))) if pad else x.data
    cols = np.stack([xp[:, :, j * dilation : j * dilation + length] for j in range(k)], axis=2)
    cols = cols.reshape(batch, in_ch * k, length)
    w2 = weight.data.reshape(out_ch, in_ch * k)
    out = np.matmul(w2, cols)
    if bias is not None:
        out = out + bias.data[None, :, None]

    def backward(g):
        if weight.requires_grad:
            gw = np.tensordot(g, cols, axes=([0, 2], [0, 2]))
            weight._accum(gw.reshape(weight.shape))
        if bias is not None and bias.requires_grad:
            bias._accum(g.sum(axis=(0, 2)))
        if x.requires_grad:
            gcols = np.matmul(w2.T, g).reshape(batch, in_ch, k, length)
            gxp = np.zeros((batch, in_ch, length + pad))
            for j in range(k):
                gxp[:, :, j * dilation : j * dilation + length] += gcols[:, :, j, :]
            x._accum(gxp[:, :, pad:])

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._result(out, parents, backward)


def global_avg_pool(x: Tensor, lengths: Iterable[int] | None = None) -> Tensor:
    """Mean over the trailing time axis.

    With ``lengths`` given (one per batch row), only the first
    ``lengths[b]`` steps of row ``b`` are averaged, so zero tail padding
    does not dilute the statistic.
    """
    if lengths is None:
        return x.mean(axis=-1)
    lengths = np.asarray(lengths)
    steps = x.shape[-1]
    mask = (np.arange(steps)[None, :] < lengths[:, None]).astype(DTYPE)
    mask = mask.reshape((x.shape[0],) + (1,) * (x.ndim - 2) + (steps,))
    return (x * mask).sum(axis=-1) / Tensor(lengths.reshape((-1,) + (1,) * (x.ndim - 2)).astype(DTYPE))


def l1_loss(pred: Tensor, target) -> Tensor:
    """Mean absolute error over every element."""
    return (pred - as_tensor(target)).abs().mean()


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits)."""
    labels = np.asarray(labels, dtype=np.intp)
    if logits.ndim != 2 or logits.shape[0] != labels.shape[0]:
        raise ShapeError(f"cross_entropy expects (batch, classes) logits, got {logits.shape}")
    logp = log_softmax(logits, axis=-1)
    picked = logp[np.arange(labels.shape[0]), labels]
    return -picked.mean()

"""Minimal reverse-mode differentiation engine on dense float64 arrays.

A :class:`Tensor` wraps a numpy array and records the operation that
produced it, so a scalar loss can be backpropagated through the whole
expression tape. The operator set is deliberately small: elementwise
arithmetic, matmul, concatenation, row gather/scatter, per-segment softmax,
sigmoid / relu / exp / log / sqrt / abs / clip, sum and mean reductions,
whole-tensor min/max, and a recorded dropout mask. Everything runs in
64-bit floats; every operation checks its output for non-finite values.

Broadcasting is restricted on purpose: operands must have identical shapes,
or one side is a scalar (size 1), or a (n, d) matrix meets a (d,) vector
(the bias pattern). Anything else raises :class:`ShapeMismatch` instead of
silently broadcasting.
"""

from __future__ import annotations

import math
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import (
    NonFiniteEvaluation,
    NonFiniteLoss,
    NonFiniteValue,
    ShapeMismatch,
    UnsupportedOperator,
)

SUPPORTED_OPS = frozenset(
    {
        "leaf",
        "add",
        "sub",
        "mul",
        "div",
        "neg",
        "matmul",
        "concat",
        "reshape",
        "gather_rows",
        "segment_sum",
        "segment_softmax",
        "scale_rows",
        "sigmoid",
        "relu",
        "exp",
        "log",
        "sqrt",
        "abs",
        "clip",
        "sum",
        "min_reduce",
        "max_reduce",
        "dropout",
    }
)


class _GradMode:
    enabled = True


class no_grad:
    """Context manager that disables tape recording (inference mode)."""

    def __enter__(self) -> "no_grad":
        self._prev = _GradMode.enabled
        _GradMode.enabled = False
        return self

    def __exit__(self, *exc) -> None:
        _GradMode.enabled = self._prev


class Tensor:
    """A float64 array plus the tape edge that produced it."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise NonFiniteValue("tensor created with non-finite values")
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None

    # -- construction helpers -------------------------------------------

    @staticmethod
    def _result(
        op: str,
        data: np.ndarray,
        parents: tuple["Tensor", ...],
        backward: Callable[[np.ndarray], None],
    ) -> "Tensor":
        if not np.isfinite(data).all():
            raise NonFiniteValue(f"operation {op!r} produced non-finite values")
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        if _GradMode.enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out.op = op
            out._parents = parents
            out._backward = backward
        else:
            out.requires_grad = False
            out.op = op
            out._parents = ()
            out._backward = None
        return out

    # -- basic protocol ---------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeMismatch(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    # -- arithmetic ------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        return _binary("add", self, other, lambda a, b: a + b, _add_grads)

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        return _binary("sub", self, other, lambda a, b: a - b, _sub_grads)

    def __rsub__(self, other) -> "Tensor":
        return _binary("sub", as_tensor(other), self, lambda a, b: a - b, _sub_grads)

    def __mul__(self, other) -> "Tensor":
        return _binary("mul", self, other, lambda a, b: a * b, _mul_grads)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        return _binary("div", self, other, lambda a, b: a / b, _div_grads)

    def __rtruediv__(self, other) -> "Tensor":
        return _binary("div", as_tensor(other), self, lambda a, b: a / b, _div_grads)

    def __neg__(self) -> "Tensor":
        out_data = -self.data

        def backward(g: np.ndarray) -> None:
            _accumulate(self, -g)

        return Tensor._result("neg", out_data, (self,), backward)

    def __matmul__(self, other) -> "Tensor":
        return matmul(self, other)

    # -- reductions and reshapes -------------------------------------------

    def sum(self, axis: Optional[int] = None) -> "Tensor":
        out_data = self.data.sum(axis=axis)

        def backward(g: np.ndarray) -> None:
            if axis is None:
                _accumulate(self, np.broadcast_to(g, self.data.shape).copy())
            else:
                _accumulate(self, np.broadcast_to(np.expand_dims(g, axis), self.data.shape).copy())

        return Tensor._result("sum", np.asarray(out_data, dtype=np.float64), (self,), backward)

    def mean(self, axis: Optional[int] = None) -> "Tensor":
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis) * (1.0 / count)

    def reshape(self, shape: tuple[int, ...]) -> "Tensor":
        out_data = self.data.reshape(shape)

        def backward(g: np.ndarray) -> None:
            _accumulate(self, g.reshape(self.data.shape))

        return Tensor._result("reshape", out_data, (self,), backward)

    # -- backward pass ----------------------------------------------------

    def backward(self) -> None:
        """Backpropagate from this scalar through the recorded tape.

        One-shot: the tape is released as it is consumed.
        """
        if self.data.size != 1:
            raise ShapeMismatch(f"backward() needs a scalar loss, got shape {self.shape}")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            if node.op not in SUPPORTED_OPS:
                raise UnsupportedOperator(f"operator {node.op!r} is not supported")
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                node._backward = None
                node._parents = ()


def as_tensor(value) -> Tensor:
    """Wrap a value as a constant tensor (no-op for tensors)."""
    return value if isinstance(value, Tensor) else Tensor(value)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    t.grad = g if t.grad is None else t.grad + g


def _check_binary_shapes(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if a.shape == b.shape:
        return
    if a.size == 1 or b.size == 1:
        return
    if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        return
    if b.ndim == 2 and a.ndim == 1 and b.shape[1] == a.shape[0]:
        return
    raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} are not compatible")


def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, (g_dim, s_dim) in enumerate(zip(grad.shape, shape)):
        if s_dim == 1 and g_dim != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _add_grads(a: Tensor, b: Tensor, g: np.ndarray) -> None:
    _accumulate(a, _reduce_to(g, a.data.shape))
    _accumulate(b, _reduce_to(g, b.data.shape))


def _sub_grads(a: Tensor, b: Tensor, g: np.ndarray) -> None:
    _accumulate(a, _reduce_to(g, a.data.shape))
    _accumulate(b, _reduce_to(-g, b.data.shape))


def _mul_grads(a: Tensor, b: Tensor, g: np.ndarray) -> None:
    _accumulate(a, _reduce_to(g * b.data, a.data.shape))
    _accumulate(b, _reduce_to(g * a.data, b.data.shape))


def _div_grads(a: Tensor, b: Tensor, g: np.ndarray) -> None:
    _accumulate(a, _reduce_to(g / b.data, a.data.shape))
    _accumulate(b, _reduce_to(-g * a.data / (b.data * b.data), b.data.shape))


def _binary(
    op: str,
    a,
    b,
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
    grads: Callable[[Tensor, Tensor, np.ndarray], None],
) -> Tensor:
    at = as_tensor(a)
    bt = as_tensor(b)
    _check_binary_shapes(at.data, bt.data, op)
    with np.errstate(divide="raise", invalid="raise", over="raise"):
        try:
            out_data = fn(at.data, bt.data)
        except FloatingPointError as exc:
            raise NonFiniteValue(f"operation {op!r} overflowed or divided by zero") from exc

    def backward(g: np.ndarray) -> None:
        grads(at, bt, g)

    return Tensor._result(op, np.asarray(out_data, dtype=np.float64), (at, bt), backward)


def matmul(a, b) -> Tensor:
    at = as_tensor(a)
    bt = as_tensor(b)
    if at.data.ndim != 2 or bt.data.ndim != 2 or at.data.shape[1] != bt.data.shape[0]:
        raise ShapeMismatch(f"matmul: shapes {at.shape} and {bt.shape} do not conform")
    out_data = at.data @ bt.data

    def backward(g: np.ndarray) -> None:
        _accumulate(at, g @ bt.data.T)
        _accumulate(bt, at.data.T @ g)

    return Tensor._result("matmul", out_data, (at, bt), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ShapeMismatch("concat of zero tensors")
    ndim = parts[0].data.ndim
    for p in parts[1:]:
        if p.data.ndim != ndim:
            raise ShapeMismatch("concat: mixed ranks")
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g: np.ndarray) -> None:
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accumulate(p, g[tuple(sl)])

    return Tensor._result("concat", out_data, tuple(parts), backward)


def gather_rows(t: Tensor, indices: np.ndarray) -> Tensor:
    """Select rows (axis 0) by integer index; repeated indices allowed."""
    src = as_tensor(t)
    idx = np.asarray(indices, dtype=np.int64)
    out_data = src.data[idx]

    def backward(g: np.ndarray) -> None:
        acc = np.zeros_like(src.data)
        np.add.at(acc, idx, g)
        _accumulate(src, acc)

    return Tensor._result("gather_rows", out_data, (src,), backward)


def segment_sum(t: Tensor, segments: np.ndarray, num_segments: int) -> Tensor:
    """Sum rows into ``num_segments`` buckets given per-row segment ids."""
    src = as_tensor(t)
    seg = np.asarray(segments, dtype=np.int64)
    if seg.shape != (src.data.shape[0],):
        raise ShapeMismatch(f"segment ids {seg.shape} do not index rows of {src.shape}")
    out_shape = (num_segments,) + src.data.shape[1:]
    out_data = np.zeros(out_shape, dtype=np.float64)
    np.add.at(out_data, seg, src.data)

    def backward(g: np.ndarray) -> None:
        _accumulate(src, g[seg])

    return Tensor._result("segment_sum", out_data, (src,), backward)


def segment_softmax(scores: Tensor, segments: np.ndarray, num_segments: int) -> Tensor:
    """Softmax over 1-D scores, normalized independently within each segment."""
    src = as_tensor(scores)
    if src.data.ndim != 1:
        raise ShapeMismatch(f"segment_softmax needs 1-D scores, got {src.shape}")
    seg = np.asarray(segments, dtype=np.int64)
    if seg.shape != src.data.shape:
        raise ShapeMismatch(f"segment ids {seg.shape} do not match scores {src.shape}")
    # Shift by the per-segment max for numeric stability.
    seg_max = np.full(num_segments, -np.inf)
    np.maximum.at(seg_max, seg, src.data)
    shifted = np.exp(src.data - seg_max[seg])
    seg_total = np.zeros(num_segments, dtype=np.float64)
    np.add.at(seg_total, seg, shifted)
    weights = shifted / seg_total[seg]

    def backward(g: np.ndarray) -> None:
        inner = np.zeros(num_segments, dtype=np.float64)
        np.add.at(inner, seg, g * weights)
        _accumulate(src, weights * (g - inner[seg]))

    return Tensor._result("segment_softmax", weights, (src,), backward)


def scale_rows(t: Tensor, weights: Tensor) -> Tensor:
    """Multiply each row of a (n, d) matrix by the matching scalar weight."""
    mat = as_tensor(t)
    w = as_tensor(weights)
    if mat.data.ndim != 2 or w.data.shape != (mat.data.shape[0],):
        raise ShapeMismatch(f"scale_rows: matrix {mat.shape} vs weights {w.shape}")
    out_data = mat.data * w.data[:, None]

    def backward(g: np.ndarray) -> None:
        _accumulate(mat, g * w.data[:, None])
        _accumulate(w, (g * mat.data).sum(axis=1))

    return Tensor._result("scale_rows", out_data, (mat, w), backward)


def sigmoid(t: Tensor) -> Tensor:
    src = as_tensor(t)
    x = src.data
    out_data = np.empty_like(x)
    pos = x >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out_data[~pos] = ex / (1.0 + ex)

    def backward(g: np.ndarray) -> None:
        _accumulate(src, g * out_data * (1.0 - out_data))

    return Tensor._result("sigmoid", out_data, (src,), backward)


def relu(t: Tensor) -> Tensor:
    src = as_tensor(t)
    out_data = np.maximum(src.data, 0.0)

    def backward(g: np.ndarray) -> None:
        _accumulate(src, g * (src.data > 0.0))

    return Tensor._result("relu", out_data, (src,), backward)


def exp(t: Tensor) -> Tensor:
    src = as_tensor(t)
    with np.errstate(over="raise"):
        try:
            out_data = np.exp(src.data)
        except FloatingPointError as err:
            raise NonFiniteValue("exp overflowed") from err

    def backward(g: np.ndarray) -> None:
        _accumulate(src, g * out_data)

    return Tensor._result("exp", out_data, (src,), backward)


def log(t: Tensor) -> Tensor:
    src = as_tensor(t)
    if (src.data <= 0.0).any():
        raise NonFiniteValue("log of a non-positive value")
    out_data = np.log(src.data)

    def backward(g: np.ndarray) -> None:
        _accumulate(src, g / src.data)

    return Tensor._result("log", out_data, (src,), backward)


def sqrt(t: Tensor) -> Tensor:
    src = as_tensor(t)
    if (src.data < 0.0).any():
        raise NonFiniteValue("sqrt of a negative value")
    out_data = np.sqrt(src.data)

    def backward(g: np.ndarray) -> None:
        _accumulate(src, g / (2.0 * out_data))

    return Tensor._result("sqrt", out_data, (src,), backward)


def absolute(t: Tensor) -> Tensor:
    src = as_tensor(t)
    out_data = np.abs(src.data)

    def backward(g: np.ndarray) -> None:
        _accumulate(src, g * np.sign(src.data))

    return Tensor._result("abs", out_data, (src,), backward)


def clip(t: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values to [lo, hi]; gradient passes only inside the window."""
    src = as_tensor(t)
    out_data = np.clip(src.data, lo, hi)
    inside = (src.data >= lo) & (src.data <= hi)

    def backward(g: np.ndarray) -> None:
        _accumulate(src, g * inside)

    return Tensor._result("clip", out_data, (src,), backward)


def reduce_min(t: Tensor) -> Tensor:
    src = as_tensor(t)
    flat = src.data.ravel()
    pos = int(np.argmin(flat))
    out_data = np.asarray(flat[pos], dtype=np.float64)

    def backward(g: np.ndarray) -> None:
        acc = np.zeros_like(src.data)
        acc.ravel()[pos] = float(g)
        _accumulate(src, acc)

    return Tensor._result("min_reduce", out_data, (src,), backward)


def reduce_max(t: Tensor) -> Tensor:
    src = as_tensor(t)
    flat = src.data.ravel()
    pos = int(np.argmax(flat))
    out_data = np.asarray(flat[pos], dtype=np.float64)

    def backward(g: np.ndarray) -> None:
        acc = np.zeros_like(src.data)
        acc.ravel()[pos] = float(g)
        _accumulate(src, acc)

    return Tensor._result("max_reduce", out_data, (src,), backward)


def dropout(t: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p).

    The mask is drawn once from the caller's generator and recorded on the
    tape, so gradients flow only through kept units.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    src = as_tensor(t)
    if p == 0.0:
        return src
    mask = (rng.random(src.data.shape) >= p) / (1.0 - p)
    out_data = src.data * mask

    def backward(g: np.ndarray) -> None:
        _accumulate(src, g * mask)

    return Tensor._result("dropout", out_data, (src,), backward)


# --- parameters and optimization ---------------------------------------------


class ParamStore:
    """Named trainable tensors plus per-parameter Adam state.

    Iteration order is insertion order and is part of the public contract:
    checkpoints and optimizer sweeps walk parameters in this order.
    """

    def __init__(self) -> None:
        self._params: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, values: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"parameter {name!r} already registered")
        t = Tensor(np.array(values, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        self._m[name] = np.zeros_like(t.data)
        self._v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self) -> list[tuple[str, Tensor]]:
        return list(self._params.items())

    def zero_grads(self) -> None:
        for t in self._params.values():
            t.grad = None

    def snapshot(self) -> dict[str, np.ndarray]:
        """Deep copy of all parameter values (optimizer state excluded)."""
        return {name: t.data.copy() for name, t in self._params.items()}

    def restore(self, values: dict[str, np.ndarray]) -> None:
        for name, arr in values.items():
            t = self._params[name]
            if t.data.shape != arr.shape:
                raise ShapeMismatch(f"snapshot {name!r}: {arr.shape} vs {t.data.shape}")
            t.data = arr.copy()


def compute_gradients(loss: Tensor, params: ParamStore) -> dict[str, np.ndarray]:
    """Gradient of a finite scalar loss for every parameter in the store.

    Parameters that do not participate in the loss get zero gradients.
    Consumes the tape; call once per recorded loss.
    """
    if loss.data.size != 1:
        raise ShapeMismatch(f"loss must be scalar, got shape {loss.shape}")
    if not np.isfinite(loss.data).all():
        raise NonFiniteLoss("loss is not finite")
    params.zero_grads()
    loss.backward()
    grads: dict[str, np.ndarray] = {}
    for name, t in params.items():
        grads[name] = t.grad if t.grad is not None else np.zeros_like(t.data)
        t.grad = None
    return grads


def adam_step(
    params: ParamStore,
    grads: dict[str, np.ndarray],
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> ParamStore:
    """One bias-corrected Adam update, applied in place.

    The shared step counter increments exactly once per call, regardless of
    how many parameters the store holds.
    """
    params.step_count += 1
    t = params.step_count
    bias1 = 1.0 - beta1**t
    bias2 = 1.0 - beta2**t
    for name, tensor in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != tensor.data.shape:
            raise ShapeMismatch(f"gradient {name!r}: {g.shape} vs parameter {tensor.data.shape}")
        if not np.isfinite(g).all():
            raise NonFiniteValue(f"gradient {name!r} is not finite")
        m = params._m[name]
        v = params._v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / bias1
        v_hat = v / bias2
        tensor.data = tensor.data - lr * m_hat / (np.sqrt(v_hat) + eps)
    return params


def finite_diff_check(
    f: Callable[[], Tensor],
    params: ParamStore,
    h: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` rebuilds the scalar loss from the store's current values. Each
    coordinate is probed at +/- h; the relative error denominator is
    ``max(|analytic|, |estimate|, 1e-8)``.
    """
    analytic = compute_gradients(f(), params)

    def probe() -> float:
        with no_grad():
            value = f().item()
        if not math.isfinite(value):
            raise NonFiniteEvaluation("loss is not finite at a perturbed point")
        return value

    worst = 0.0
    for name, tensor in params.items():
        flat = tensor.data.ravel()
        exact = analytic[name].ravel()
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            f_plus = probe()
            flat[i] = original - h
            f_minus = probe()
            flat[i] = original
            estimate = (f_plus - f_minus) / (2.0 * h)
            err = abs(exact[i] - estimate) / max(abs(exact[i]), abs(estimate), 1e-8)
            if err > worst:
                worst = err
    return worst

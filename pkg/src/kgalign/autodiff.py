"""Reverse-mode automatic differentiation over dense float64 arrays.

Operations record onto the innermost active ``Tape`` (a context manager).
Recording order is execution order, which is already topological for a
define-by-run graph, so the backward pass is a single reverse sweep that
visits each recorded node exactly once.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels


class DimensionError(ValueError):
    """Raised when operand shapes cannot be combined."""


_TAPES: list["Tape"] = []


class Tape:
    """Ordered record of operations for one forward pass."""

    def __init__(self):
        self.ops = []  # (inputs, output, backward) triples in execution order
        self._consumed = False

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPES.pop()
        assert popped is self
        return False

    def record(self, inputs, output, backward):
        self.ops.append((inputs, output, backward))

    def backward(self, loss):
        """Populate ``grad`` on every requires_grad tensor reachable from loss."""
        if loss.data.shape != ():
            raise ValueError(f"loss must be scalar, got shape {loss.data.shape}")
        if not self.ops:
            raise ValueError("tape is empty; nothing was recorded")
        if self._consumed:
            raise RuntimeError("backward already ran on this tape; record a new tape")
        self._consumed = True
        loss.grad = np.ones((), dtype=np.float64)
        for inputs, output, backward in reversed(self.ops):
            if output.grad is None:
                continue
            for tensor, grad in zip(inputs, backward(output.grad)):
                if grad is None or not tensor.requires_grad:
                    continue
                if tensor.grad is None:
                    tensor.grad = np.zeros_like(tensor.data)
                tensor.grad = tensor.grad + grad


class Tensor:
    """Dense float64 array with an optional gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def _record(data, inputs, backward):
    out_requires = bool(_TAPES) and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=out_requires)
    if out_requires:
        _TAPES[-1].record(inputs, out, backward)
    return out


def _unbroadcast(grad, shape):
    # sum the gradient of a broadcast result back down to the operand shape
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(a, b, opname):
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise DimensionError(
            f"{opname}: shapes {a.data.shape} and {b.data.shape} do not broadcast"
        ) from None


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    return _record(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
    )


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    return _record(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)),
    )


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    return _record(
        a.data * b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def neg(a):
    a = as_tensor(a)
    return _record(-a.data, (a,), lambda g: (-g,))


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.data.shape} and {b.data.shape}")
    return _record(
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


def left_matmul(matrix, x):
    """Multiply by a constant matrix (dense or scipy sparse) on the left."""
    x = as_tensor(x)
    if matrix.shape[1] != x.data.shape[0]:
        raise DimensionError(f"left_matmul: {matrix.shape} against {x.data.shape}")
    return _record(matrix @ x.data, (x,), lambda g: (matrix.T @ g,))


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0
    return _record(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def leaky_relu(a, slope=0.3):
    a = as_tensor(a)
    mask = a.data > 0
    return _record(
        np.where(mask, a.data, slope * a.data),
        (a,),
        lambda g: (g * np.where(mask, 1.0, slope),),
    )


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _record(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a):
    a = as_tensor(a)
    out = 1.0 / (1.0 + np.exp(-a.data))
    return _record(out, (a,), lambda g: (g * out * (1.0 - out),))


def absval(a):
    a = as_tensor(a)
    return _record(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def concat(a, b, axis=-1):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != b.data.ndim:
        raise DimensionError(f"concat: ranks differ, {a.data.shape} vs {b.data.shape}")
    ax = axis if axis >= 0 else a.data.ndim + axis
    for i, (m, n) in enumerate(zip(a.data.shape, b.data.shape)):
        if i != ax and m != n:
            raise DimensionError(f"concat: shapes {a.data.shape} and {b.data.shape} on axis {axis}")
    split = a.data.shape[ax]

    def backward(g):
        left = np.take(g, np.arange(split), axis=ax)
        right = np.take(g, np.arange(split, g.shape[ax]), axis=ax)
        return left, right

    return _record(np.concatenate([a.data, b.data], axis=ax), (a, b), backward)


def reshape(a, shape):
    a = as_tensor(a)
    old = a.data.shape
    return _record(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def take_rows(a, indices):
    """Gather rows (axis 0); the backward pass scatter-adds duplicates."""
    a = as_tensor(a)
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    n = a.data.shape[0]
    if indices.size and (indices.min() < 0 or indices.max() >= n):
        raise IndexError(f"take_rows: indices outside [0, {n})")

    def backward(g):
        grad = np.zeros_like(a.data)
        kernels.scatter_add_rows(grad, indices, g)
        return (grad,)

    return _record(a.data[indices], (a,), backward)


def reduce_sum(a, axis=None):
    a = as_tensor(a)
    shape = a.data.shape
    if axis is None:
        return _record(
            np.sum(a.data),
            (a,),
            lambda g: (np.broadcast_to(g, shape).copy() if shape else g,),
        )

    def backward(g):
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _record(np.sum(a.data, axis=axis), (a,), backward)


def _validate_segments(ids, n, num_segments, opname):
    if n == 0:
        raise ValueError(f"{opname}: empty input")
    if len(ids) != n:
        raise ValueError(f"{opname}: {len(ids)} segment ids for {n} values")
    if ids.min() < 0 or ids.max() >= num_segments:
        raise ValueError(f"{opname}: segment id outside [0, {num_segments})")


def segment_softmax(logits, segment_ids):
    """Softmax normalized independently within each segment.

    Stabilized by subtracting the per-segment maximum before exponentiation,
    so shifting all logits of a segment by a constant leaves the output
    unchanged.
    """
    logits = as_tensor(logits)
    if logits.data.ndim != 1:
        raise DimensionError(f"segment_softmax: expected 1-D logits, got {logits.data.shape}")
    ids = np.ascontiguousarray(segment_ids, dtype=np.int64)
    num_segments = int(ids.max()) + 1 if ids.size else 0
    _validate_segments(ids, logits.data.shape[0], max(num_segments, 1), "segment_softmax")

    shifted = logits.data - kernels.segment_max(logits.data, ids, num_segments)[ids]
    exp = np.exp(shifted)
    out = exp / kernels.segment_sum(exp, ids, num_segments)[ids]

    def backward(g):
        # within each segment: dL/dz = out * (g - sum(g * out))
        inner = kernels.segment_sum(g * out, ids, num_segments)
        return (out * (g - inner[ids]),)

    return _record(out, (logits,), backward)


def segment_sum(values, segment_ids, num_segments):
    """Sum value rows into per-segment buckets; empty segments are zero."""
    values = as_tensor(values)
    ids = np.ascontiguousarray(segment_ids, dtype=np.int64)
    _validate_segments(ids, values.data.shape[0], num_segments, "segment_sum")
    return _record(
        kernels.segment_sum(values.data, ids, num_segments),
        (values,),
        lambda g: (g[ids],),
    )


# ------------------------------------------------------------- verification


def fd_check(forward_fn, inputs, eps=1e-5):
    """Compare tape gradients of a scalar function against central differences.

    Returns the maximum over all input components of
    ``|g_ad - g_fd| / max(1, |g_fd|)``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    with Tape() as tape:
        loss = forward_fn(*inputs)
    if tape.ops and loss.requires_grad:
        tape.backward(loss)

    worst = 0.0
    for tensor in inputs:
        if not tensor.requires_grad:
            continue
        g_ad = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        if not tensor.data.flags["C_CONTIGUOUS"]:
            tensor.data = np.ascontiguousarray(tensor.data)
        flat = tensor.data.reshape(-1)  # view; perturbations hit tensor.data
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(forward_fn(*inputs).data)
            flat[i] = orig - eps
            f_minus = float(forward_fn(*inputs).data)
            flat[i] = orig
            g_fd = (f_plus - f_minus) / (2.0 * eps)
            err = abs(g_ad.reshape(-1)[i] - g_fd) / max(1.0, abs(g_fd))
            worst = max(worst, err)
        tensor.grad = None
    return worst


# --------------------------------------------------------------- optimizer


@dataclass
class AdamState:
    """First/second moment buffers keyed by parameter position."""

    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, grads, state, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
    """One adaptive-moment update; mutates `params` arrays in place."""
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads, and state must align")
    state.step += 1
    t = state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p)
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return state


def zero_grads(tensors):
    for t in tensors:
        t.grad = None


# ------------------------------------------------------------ initializers


def glorot(rng, rows, cols):
    """Variance-preserving uniform init for a projection matrix."""
    bound = np.sqrt(6.0 / (rows + cols))
    return Tensor(rng.uniform(-bound, bound, size=(rows, cols)), requires_grad=True)


def uniform_vec(rng, size, bound=0.1):
    return Tensor(rng.uniform(-bound, bound, size=size), requires_grad=True)


def zeros_param(shape):
    return Tensor(np.zeros(shape), requires_grad=True)

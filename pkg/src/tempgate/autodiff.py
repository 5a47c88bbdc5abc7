"""Reverse-mode automatic differentiation over dense float64 arrays.

A Tensor wraps an ndarray and optionally tracks gradients. While a Tape is
open (thread-local), every operation whose inputs require gradients records
a backward closure on the tape; Tape.backward(scalar) replays the records in
reverse execution order, which is a reverse topological order by
construction. With no tape open, operations run forward-only with zero
bookkeeping, which is how evaluation passes stay cheap.

Everything is float64. Shapes are kept to what the attention layers and
losses need: 2-D matmul, broadcasting elementwise arithmetic, row gathers,
and sorted-segment reductions.
"""

from __future__ import annotations

import threading

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "param",
    "constant",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "leaky_relu",
    "relu",
    "elu",
    "sigmoid",
    "softplus",
    "exp",
    "log",
    "concat",
    "slice_axis",
    "reshape",
    "gather_rows",
    "segment_sum",
    "segment_softmax",
    "summ",
    "reduce_mean",
    "dropout",
    "grad_check",
    "set_concentration_check",
]

_LOCAL = threading.local()

# When enabled, every segment softmax asserts the uniform-allocation
# concentration bound (sum of squared coefficients >= 1/K per segment).
_CONCENTRATION_CHECK = False


def set_concentration_check(enabled):
    """Globally toggle the softmax concentration assertion hook."""
    global _CONCENTRATION_CHECK
    _CONCENTRATION_CHECK = bool(enabled)


def check_concentration(alpha, offsets):
    """Assert sum(alpha^2) >= 1/K within each segment, 1e-12 slack."""
    counts = np.diff(offsets)
    sq = _reduceat_sum(alpha * alpha, offsets)
    nonempty = counts > 0
    bound = 1.0 / np.maximum(counts, 1)
    if sq.ndim > 1:
        bound = bound.reshape((-1,) + (1,) * (sq.ndim - 1))
    if np.any(sq[nonempty] < bound[nonempty] - 1e-12):
        raise AssertionError("softmax concentration bound violated")


class Tensor:
    """Dense float64 array with optional gradient tracking."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_prev")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor values must be finite")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._backward = None
        self._prev = ()

    @classmethod
    def _make(cls, data, requires_grad):
        # Internal fast path: op outputs skip the finiteness scan.
        t = cls.__new__(cls)
        t.data = data
        t.grad = None
        t.requires_grad = requires_grad
        t._backward = None
        t._prev = ()
        return t

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, _lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def param(data):
    """Create a leaf tensor that accumulates gradients."""
    return Tensor(data, requires_grad=True)


def constant(data):
    return Tensor(data, requires_grad=False)


def _lift(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


class Tape:
    """Ordered record of tensors produced while the tape was active.

    The record order is the execution order, so walking it backwards visits
    each node exactly once after all of its consumers.
    """

    def __init__(self):
        self._records = []

    def __enter__(self):
        if getattr(_LOCAL, "tape", None) is not None:
            raise RuntimeError("a tape is already active in this thread")
        _LOCAL.tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        _LOCAL.tape = None
        return False

    def __len__(self):
        return len(self._records)

    def backward(self, loss):
        """Backpropagate from a scalar, returning {parameter: gradient}.

        Covers every requires_grad leaf that participated in the recorded
        computation; fan-out accumulates by summation.
        """
        if not isinstance(loss, Tensor):
            raise TypeError("backward expects a Tensor")
        if loss.data.size != 1:
            raise ValueError("backward requires a scalar tensor")
        leaves = []
        for t in self._records:
            t.grad = None
            for p in t._prev:
                if p.grad is not None:
                    p.grad = None
                if p.requires_grad and p._backward is None:
                    leaves.append(p)
        loss.grad = np.ones_like(loss.data)
        for t in reversed(self._records):
            if t._backward is not None and t.grad is not None:
                t._backward(t.grad)
        out = {}
        for p in leaves:
            if p not in out:
                out[p] = p.grad if p.grad is not None else np.zeros_like(p.data)
        return out


def _tape():
    return getattr(_LOCAL, "tape", None)


def _record(out, prev, backward):
    out._backward = backward
    out._prev = prev
    _LOCAL.tape._records.append(out)


def _acc(t, g):
    t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g, shape):
    """Sum a broadcast gradient back down to `shape`."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _binary(a, b, data, da, db):
    """Shared recording logic for broadcasting binary elementwise ops."""
    req = a.requires_grad or b.requires_grad
    out = Tensor._make(data, req)
    if req and _tape() is not None:

        def backward(g):
            if a.requires_grad:
                _acc(a, _unbroadcast(da(g), a.data.shape))
            if b.requires_grad:
                _acc(b, _unbroadcast(db(g), b.data.shape))

        _record(out, (a, b), backward)
    return out


def add(a, b):
    a, b = _lift(a), _lift(b)
    return _binary(a, b, a.data + b.data, lambda g: g, lambda g: g)


def sub(a, b):
    a, b = _lift(a), _lift(b)
    return _binary(a, b, a.data - b.data, lambda g: g, lambda g: -g)


def mul(a, b):
    a, b = _lift(a), _lift(b)
    return _binary(a, b, a.data * b.data, lambda g: g * b.data, lambda g: g * a.data)


def div(a, b):
    a, b = _lift(a), _lift(b)
    return _binary(
        a,
        b,
        a.data / b.data,
        lambda g: g / b.data,
        lambda g: -g * a.data / (b.data * b.data),
    )


def neg(a):
    a = _lift(a)
    out = Tensor._make(-a.data, a.requires_grad)
    if out.requires_grad and _tape() is not None:

        def backward(g):
            _acc(a, -g)

        _record(out, (a,), backward)
    return out


def matmul(a, b):
    """2-D matrix product; either operand may be a constant ndarray or
    scipy sparse matrix, in which case no gradient flows into it."""
    a_t = a if isinstance(a, Tensor) else None
    b_t = b if isinstance(b, Tensor) else None
    a_d = a.data if a_t is not None else a
    b_d = b.data if b_t is not None else b
    if a_d.ndim != 2 or b_d.ndim != 2:
        raise ValueError("matmul expects 2-D operands")
    if a_d.shape[1] != b_d.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a_d.shape} @ {b_d.shape}")
    req = (a_t is not None and a_t.requires_grad) or (
        b_t is not None and b_t.requires_grad
    )
    out = Tensor._make(a_d @ b_d, req)
    if req and _tape() is not None:

        def backward(g):
            if a_t is not None and a_t.requires_grad:
                _acc(a_t, g @ b_d.T)
            if b_t is not None and b_t.requires_grad:
                _acc(b_t, a_d.T @ g)

        prev = tuple(t for t in (a_t, b_t) if t is not None)
        _record(out, prev, backward)
    return out


def _unary(a, data, dfactor):
    out = Tensor._make(data, a.requires_grad)
    if out.requires_grad and _tape() is not None:

        def backward(g):
            _acc(a, g * dfactor())

        _record(out, (a,), backward)
    return out


def leaky_relu(a, slope):
    """max(x, slope*x); the subgradient at exactly 0 is the positive-side 1."""
    a = _lift(a)
    d = a.data
    return _unary(a, np.where(d >= 0, d, slope * d), lambda: np.where(d >= 0, 1.0, slope))


def relu(a):
    a = _lift(a)
    d = a.data
    return _unary(a, np.maximum(d, 0.0), lambda: (d > 0).astype(np.float64))


def elu(a):
    a = _lift(a)
    d = a.data
    out = np.where(d > 0, d, np.expm1(d))
    return _unary(a, out, lambda: np.where(d > 0, 1.0, np.exp(np.minimum(d, 0.0))))


def sigmoid(a):
    a = _lift(a)
    d = a.data
    s = np.empty_like(d)
    pos = d >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ed = np.exp(d[~pos])
    s[~pos] = ed / (1.0 + ed)
    return _unary(a, s, lambda: s * (1.0 - s))


def softplus(a):
    a = _lift(a)
    d = a.data
    out = np.logaddexp(0.0, d)

    def factor():
        s = np.empty_like(d)
        pos = d >= 0
        s[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
        ed = np.exp(d[~pos])
        s[~pos] = ed / (1.0 + ed)
        return s

    return _unary(a, out, factor)


def exp(a):
    a = _lift(a)
    out_data = np.exp(a.data)
    return _unary(a, out_data, lambda: out_data)


def log(a):
    a = _lift(a)
    if np.any(a.data <= 0):
        raise ValueError("log requires strictly positive inputs")
    return _unary(a, np.log(a.data), lambda: 1.0 / a.data)


def concat(tensors, axis=0):
    tensors = [_lift(t) for t in tensors]
    req = any(t.requires_grad for t in tensors)
    out = Tensor._make(np.concatenate([t.data for t in tensors], axis=axis), req)
    if req and _tape() is not None:
        sizes = [t.data.shape[axis] for t in tensors]
        splits = np.cumsum(sizes)[:-1]

        def backward(g):
            for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
                if t.requires_grad:
                    _acc(t, piece)

        _record(out, tuple(tensors), backward)
    return out


def slice_axis(a, axis, start, stop):
    a = _lift(a)
    key = [slice(None)] * a.data.ndim
    key[axis] = slice(start, stop)
    key = tuple(key)
    out = Tensor._make(a.data[key], a.requires_grad)
    if out.requires_grad and _tape() is not None:

        def backward(g):
            buf = np.zeros_like(a.data)
            buf[key] = g
            _acc(a, buf)

        _record(out, (a,), backward)
    return out


def reshape(a, shape):
    a = _lift(a)
    out = Tensor._make(a.data.reshape(shape), a.requires_grad)
    if out.requires_grad and _tape() is not None:

        def backward(g):
            _acc(a, g.reshape(a.data.shape))

        _record(out, (a,), backward)
    return out


class ScatterPlan:
    """Precomputed unit incidence matrix turning scatter-add over a fixed
    index array into one sparse-dense product (much faster than np.add.at,
    and reusable across every backward pass on one graph). Rows accumulate
    in ascending source-position order, matching a stable sequential sum."""

    def __init__(self, idx, num_rows):
        import scipy.sparse as sp

        idx = np.asarray(idx, dtype=np.int64)
        self.num_rows = int(num_rows)
        self._mat = sp.csr_matrix(
            (np.ones(idx.size), (idx, np.arange(idx.size))),
            shape=(self.num_rows, idx.size),
        )

    def scatter_add(self, g):
        flat = (self._mat @ g.reshape(g.shape[0], -1))
        return flat.reshape((self.num_rows,) + g.shape[1:])


class SegmentIndex:
    """Sorted-segment bookkeeping plus sparse incidence matrices for fast
    per-segment sums and their broadcast adjoints."""

    def __init__(self, segment_ids, num_segments):
        import scipy.sparse as sp

        seg = np.asarray(segment_ids, dtype=np.int64)
        if seg.size and np.any(np.diff(seg) < 0):
            raise ValueError("segment ids must be sorted non-decreasing")
        self.num_segments = int(num_segments)
        self.size = seg.size
        counts = np.bincount(seg, minlength=self.num_segments)
        self.counts = counts
        self.offsets = np.zeros(self.num_segments + 1, dtype=np.int64)
        np.cumsum(counts, out=self.offsets[1:])
        self._sum = sp.csr_matrix(
            (np.ones(seg.size), (seg, np.arange(seg.size))),
            shape=(self.num_segments, seg.size),
        )
        self._rep = self._sum.T.tocsr()

    def sum(self, values):
        """Per-segment sums: (size, ...) -> (num_segments, ...)."""
        flat = self._sum @ values.reshape(self.size, -1)
        return flat.reshape((self.num_segments,) + values.shape[1:])

    def broadcast(self, rows):
        """Repeat each segment's row across its members (adjoint of sum)."""
        flat = self._rep @ rows.reshape(self.num_segments, -1)
        return flat.reshape((self.size,) + rows.shape[1:])

    def max(self, values):
        """Per-segment maxima (empty segments undefined; callers guard)."""
        starts = np.minimum(self.offsets[:-1], max(self.size - 1, 0))
        return np.maximum.reduceat(values, starts, axis=0)


def gather_rows(a, idx, plan=None):
    """Select rows along axis 0 by an integer index array.

    Pass a ScatterPlan built from (idx, num_rows) to accelerate the
    backward scatter when the same index array is reused many times.
    """
    a = _lift(a)
    idx = np.asarray(idx)
    out = Tensor._make(a.data[idx], a.requires_grad)
    if out.requires_grad and _tape() is not None:

        def backward(g):
            if plan is not None:
                _acc(a, plan.scatter_add(g))
            else:
                buf = np.zeros_like(a.data)
                np.add.at(buf, idx, g)
                _acc(a, buf)

        _record(out, (a,), backward)
    return out


def _segment_offsets(segment_ids, num_segments):
    seg = np.asarray(segment_ids)
    if seg.ndim != 1:
        raise ValueError("segment ids must be 1-D")
    if seg.size and np.any(np.diff(seg) < 0):
        raise ValueError("segment ids must be sorted non-decreasing")
    counts = np.bincount(seg, minlength=num_segments)
    offsets = np.zeros(num_segments + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return offsets


def _reduceat_sum(values, offsets):
    """Segment sums for sorted segments; empty segments produce zero rows."""
    num = len(offsets) - 1
    if values.shape[0] == 0:
        return np.zeros((num,) + values.shape[1:], dtype=values.dtype)
    starts = np.minimum(offsets[:-1], values.shape[0] - 1)
    out = np.add.reduceat(values, starts, axis=0)
    empty = offsets[:-1] == offsets[1:]
    if np.any(empty):
        out[empty] = 0.0
    return out


def segment_sum(a, segment_ids, num_segments, offsets=None, index=None):
    """Sum rows of `a` within each sorted segment; returns num_segments rows.

    Passing a prebuilt SegmentIndex routes both directions through sparse
    incidence products, the fast path for repeated use on one graph.
    """
    a = _lift(a)
    if index is not None:
        out = Tensor._make(index.sum(a.data), a.requires_grad)
        if out.requires_grad and _tape() is not None:

            def backward(g):
                _acc(a, index.broadcast(g))

            _record(out, (a,), backward)
        return out
    if offsets is None:
        offsets = _segment_offsets(segment_ids, num_segments)
    counts = np.diff(offsets)
    out = Tensor._make(_reduceat_sum(a.data, offsets), a.requires_grad)
    if out.requires_grad and _tape() is not None:

        def backward(g):
            _acc(a, np.repeat(g, counts, axis=0))

        _record(out, (a,), backward)
    return out


def segment_softmax(a, segment_ids, temperature=1.0, num_segments=None, offsets=None,
                    index=None):
    """Softmax of exp(e/T) within each sorted segment (one segment per node).

    `temperature` may be a positive float or a positive scalar Tensor; in the
    latter case gradients flow into it. The per-segment max of e/T is
    subtracted before exponentiation (overflow safety, mathematically an
    identity). Segment ids index rows of `a`; trailing dimensions (e.g. one
    column per attention head) are normalized independently. A prebuilt
    SegmentIndex enables the fast sparse-product path.
    """
    a = _lift(a)
    if index is None:
        if offsets is None:
            if num_segments is None:
                num_segments = int(np.max(segment_ids)) + 1 if len(segment_ids) else 0
            offsets = _segment_offsets(segment_ids, num_segments)
        index = _OffsetsIndex(offsets)
    if isinstance(temperature, Tensor):
        if np.any(temperature.data <= 0):
            raise ValueError("temperature must be positive")
        scaled = div(a, temperature)
        return _segment_softmax_unit(scaled, index)
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if temperature == 1.0:
        return _segment_softmax_unit(a, index)
    return _segment_softmax_unit(mul(a, 1.0 / temperature), index)


class _OffsetsIndex:
    """reduceat/repeat segment backend for one-off segment softmax calls."""

    def __init__(self, offsets):
        self.offsets = offsets
        self.counts = np.diff(offsets)
        self.size = int(offsets[-1])

    def sum(self, values):
        return _reduceat_sum(values, self.offsets)

    def broadcast(self, rows):
        return np.repeat(rows, self.counts, axis=0)

    def max(self, values):
        starts = np.minimum(self.offsets[:-1], max(self.size - 1, 0))
        return np.maximum.reduceat(values, starts, axis=0)


def _segment_softmax_unit(a, index):
    z = a.data
    if np.any(index.counts == 0):
        raise ValueError("segment softmax over an empty segment")
    shifted = z - index.broadcast(index.max(z))
    ez = np.exp(shifted)
    alpha = ez / index.broadcast(index.sum(ez))
    if _CONCENTRATION_CHECK:
        check_concentration(alpha, index.offsets)
    out = Tensor._make(alpha, a.requires_grad)
    if out.requires_grad and _tape() is not None:

        def backward(g):
            ga = g * alpha
            _acc(a, ga - alpha * index.broadcast(index.sum(ga)))

        _record(out, (a,), backward)
    return out


def summ(a, axis=None, keepdims=False):
    a = _lift(a)
    out = Tensor._make(np.sum(a.data, axis=axis, keepdims=keepdims), a.requires_grad)
    if out.requires_grad and _tape() is not None:

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _acc(a, np.broadcast_to(g, a.data.shape).copy())

        _record(out, (a,), backward)
    return out


def reduce_mean(a, axis=None, keepdims=False):
    a = _lift(a)
    out_data = np.mean(a.data, axis=axis, keepdims=keepdims)
    out = Tensor._make(out_data, a.requires_grad)
    if out.requires_grad and _tape() is not None:
        scale = a.data.size / max(out_data.size, 1)

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _acc(a, np.broadcast_to(g, a.data.shape) / scale)

        _record(out, (a,), backward)
    return out


def dropout(a, rate, rng):
    """Inverted dropout; identity when rate == 0."""
    a = _lift(a)
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    if rate == 0.0:
        return a
    mask = (rng.random(a.data.shape) >= rate) / (1.0 - rate)
    return _unary(a, a.data * mask, lambda: mask)


def grad_check(f, params, eps=1e-5, max_coords=10_000, seed=0):
    """Compare analytic gradients of scalar f() against central differences.

    Perturbs every parameter coordinate (or a seeded random subset when the
    total exceeds `max_coords`) and returns the maximum relative error
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
    """
    with Tape() as tape:
        out = f()
        if out.data.size != 1:
            raise ValueError("grad_check requires a scalar function")
        tape.backward(out)
    analytic = [
        p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params
    ]
    coords = [(i, j) for i, p in enumerate(params) for j in range(p.data.size)]
    if len(coords) > max_coords:
        rng = np.random.default_rng(seed)
        chosen = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[k] for k in chosen]
    worst = 0.0
    for i, j in coords:
        flat = params[i].data.reshape(-1)
        orig = flat[j]
        flat[j] = orig + eps
        f_plus = float(f().data)
        flat[j] = orig - eps
        f_minus = float(f().data)
        flat[j] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise FloatingPointError("non-finite value during grad_check")
        numeric = (f_plus - f_minus) / (2.0 * eps)
        a = analytic[i].reshape(-1)[j]
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
        worst = max(worst, rel)
    return worst

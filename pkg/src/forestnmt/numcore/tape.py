"""Reverse-mode automatic differentiation on an explicit per-example tape.

A ``Tape`` is opened per training example (graphs are dynamic: every
sentence/forest has its own topology). Operations executed while a tape is
active are recorded in execution order, so inputs always precede consumers
and one reverse sweep computes all gradients. Leaf tensors created with
``requires_grad=True`` (the model parameters) accumulate into ``.grad``
across tapes until cleared.

Shape rules are deliberately narrow: elementwise ops need equal shapes,
the only broadcasts are matrix+vector (row-wise) and vector+scalar, and
``matmul`` accepts 2D@2D, 2D@1D and 1D@2D. Everything else is a ShapeError.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager

import numpy as np

from ..errors import ContractError, NumericError, ShapeError
from .backend import kernels as K

_ids = itertools.count()
_local = threading.local()
_CHECKS = 0  # >0: ops verify their outputs are finite (used by grad_check)


def _active():
    return getattr(_local, "tape", None)


@contextmanager
def check_finite():
    """Make every op raise NumericError on a non-finite output."""
    global _CHECKS
    _CHECKS += 1
    try:
        yield
    finally:
        _CHECKS -= 1


class Tape:
    """Ordered operation record; backward walks it once, in reverse."""

    __slots__ = ("ops", "_outer")

    def __init__(self):
        self.ops = []
        self._outer = None

    def __enter__(self) -> "Tape":
        self._outer = _active()
        _local.tape = self
        return self

    def __exit__(self, *exc):
        _local.tape = self._outer
        return False

    def backward(self, loss: "Tensor") -> None:
        backward(loss, self)

    def __len__(self) -> int:
        return len(self.ops)


class Tensor:
    """Dense float64 array, optionally tracked for reverse-mode gradients."""

    __slots__ = ("data", "grad", "requires_grad", "node_id")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.node_id = next(_ids)

    @classmethod
    def _raw(cls, data: np.ndarray, requires_grad: bool) -> "Tensor":
        t = cls.__new__(cls)
        t.data = data
        t.grad = None
        t.requires_grad = requires_grad
        t.node_id = next(_ids)
        return t

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    def __rmul__(self, other):
        return scale(self, float(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def zeros(shape) -> Tensor:
    """Untracked all-zero constant."""
    return Tensor._raw(np.zeros(shape), False)


def zero_grads(tensors) -> None:
    for t in tensors:
        t.grad = None


def _buf(t: Tensor) -> np.ndarray:
    g = t.grad
    if g is None:
        # np.zeros(shape) is measurably cheaper than zeros_like here, and
        # grad buffers are always fresh float64
        g = t.grad = np.zeros(t.data.shape)
    return g


def _out(name: str, data: np.ndarray, tracked: bool):
    """Wrap kernel output; returns (tensor, tape-or-None to record on)."""
    if _CHECKS and not np.isfinite(data).all():
        raise NumericError(f"{name} produced a non-finite value")
    tape = _active()
    if tape is None or not tracked:
        return Tensor._raw(data, False), None
    return Tensor._raw(data, True), tape


def backward(loss: Tensor, tape: Tape | None = None) -> None:
    """Accumulate d(loss)/d(tensor) into .grad of every leaf tensor.

    The reverse sweep visits each recorded op exactly once, newest first.
    Gradients of op outputs are transient: each is consumed by the op that
    produced it and then released, so repeated backward calls without a
    grad reset accumulate exact multiples into the leaves (this is how
    minibatch gradient accumulation works).
    """
    if tape is None:
        tape = _active()
    if tape is None:
        raise ContractError("backward: no tape (pass one or call inside `with Tape()`)")
    if loss.data.ndim != 0:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    _buf(loss)[...] += 1.0
    for op, out in reversed(tape.ops):
        op()
        out.grad = None


# ---- operations ----

def matmul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    an, bn = ad.ndim, bd.ndim
    if (an, bn) == (2, 2) or (an, bn) == (2, 1):
        ok = ad.shape[1] == bd.shape[0]
    elif (an, bn) == (1, 2):
        ok = ad.shape[0] == bd.shape[0]
    else:
        ok = False
    if not ok:
        raise ShapeError(f"matmul: incompatible shapes {ad.shape} and {bd.shape}")
    out, tape = _out("matmul", K.matmul(ad, bd), a.requires_grad or b.requires_grad)
    if tape is not None:
        def bwd():
            g = out.grad
            if g is None:
                return
            if an == 2 and bn == 2:
                if a.requires_grad:
                    K.acc_gemm_nt(_buf(a), g, bd)
                if b.requires_grad:
                    K.acc_gemm_tn(_buf(b), ad, g)
            elif bn == 1:
                if a.requires_grad:
                    K.acc_ger(_buf(a), g, bd)
                if b.requires_grad:
                    K.acc_gemv_t(_buf(b), ad, g)
            else:
                if a.requires_grad:
                    K.acc_gemv_n(_buf(a), bd, g)
                if b.requires_grad:
                    K.acc_ger(_buf(b), ad, g)
        tape.ops.append((bwd, out))
    return out


def _add_like(name, a, b, negate_b):
    ad, bd = a.data, b.data
    sign = -1.0 if negate_b else 1.0
    if ad.shape == bd.shape:
        case = 0
        data = K.ew_sub(ad, bd) if negate_b else K.ew_add(ad, bd)
    elif ad.ndim == 2 and bd.ndim == 1 and ad.shape[1] == bd.shape[0]:
        case = 1  # matrix (+/-) vector, row-wise
        data = K.mv_add(ad, -bd) if negate_b else K.mv_add(ad, bd)
    elif ad.ndim == 1 and bd.ndim == 0:
        case = 2  # vector (+/-) scalar
        data = ad - bd if negate_b else ad + bd
    else:
        raise ShapeError(f"{name}: incompatible shapes {ad.shape} and {bd.shape}")
    out, tape = _out(name, data, a.requires_grad or b.requires_grad)
    if tape is not None:
        def bwd():
            g = out.grad
            if g is None:
                return
            if a.requires_grad:
                K.acc(_buf(a), g)
            if b.requires_grad:
                gb = _buf(b)
                if case == 0:
                    if negate_b:
                        K.acc_scaled(gb, g, -1.0)
                    else:
                        K.acc(gb, g)
                elif case == 1:
                    if negate_b:
                        gb -= g.sum(axis=0)
                    else:
                        K.acc_colsum(gb, g)
                else:
                    gb += sign * g.sum()
        tape.ops.append((bwd, out))
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    return _add_like("add", a, b, False)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _add_like("sub", a, b, True)


def mul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    same = ad.shape == bd.shape
    if not same and not (ad.ndim == 1 and bd.ndim == 0):
        raise ShapeError(f"mul: incompatible shapes {ad.shape} and {bd.shape}")
    data = K.ew_mul(ad, bd) if same else ad * bd
    out, tape = _out("mul", data, a.requires_grad or b.requires_grad)
    if tape is not None:
        def bwd():
            g = out.grad
            if g is None:
                return
            if a.requires_grad:
                if same:
                    K.acc_mul(_buf(a), g, bd)
                else:
                    _buf(a)[...] += g * bd
            if b.requires_grad:
                if same:
                    K.acc_mul(_buf(b), g, ad)
                else:
                    _buf(b)[...] += (g * ad).sum()
        tape.ops.append((bwd, out))
    return out


def scale(a: Tensor, c: float) -> Tensor:
    out, tape = _out("scale", K.scale(a.data, c), a.requires_grad)
    if tape is not None:
        def bwd():
            g = out.grad
            if g is not None:
                K.acc_scaled(_buf(a), g, c)
        tape.ops.append((bwd, out))
    return out


def neg(a: Tensor) -> Tensor:
    out, tape = _out("neg", K.neg(a.data), a.requires_grad)
    if tape is not None:
        def bwd():
            g = out.grad
            if g is not None:
                K.acc_scaled(_buf(a), g, -1.0)
        tape.ops.append((bwd, out))
    return out


def sigmoid(a: Tensor) -> Tensor:
    y = K.sigmoid(a.data)
    out, tape = _out("sigmoid", y, a.requires_grad)
    if tape is not None:
        def bwd():
            g = out.grad
            if g is not None:
                K.sigmoid_bwd(_buf(a), g, y)
        tape.ops.append((bwd, out))
    return out


def tanh(a: Tensor) -> Tensor:
    y = K.tanh(a.data)
    out, tape = _out("tanh", y, a.requires_grad)
    if tape is not None:
        def bwd():
            g = out.grad
            if g is not None:
                K.tanh_bwd(_buf(a), g, y)
        tape.ops.append((bwd, out))
    return out


def softmax(a: Tensor) -> Tensor:
    """Stable softmax over a 1D vector (max-subtraction)."""
    if a.data.ndim != 1:
        raise ShapeError(f"softmax: expected 1D vector, got shape {a.data.shape}")
    y = K.softmax1d(a.data)
    out, tape = _out("softmax", y, a.requires_grad)
    if tape is not None:
        def bwd():
            g = out.grad
            if g is not None:
                K.softmax1d_bwd(_buf(a), g, y)
        tape.ops.append((bwd, out))
    return out


def concat(parts) -> Tensor:
    parts = list(parts)
    if not parts or any(p.data.ndim != 1 for p in parts):
        raise ShapeError("concat: expects a non-empty list of 1D vectors")
    data = np.concatenate([p.data for p in parts])
    out, tape = _out("concat", data, any(p.requires_grad for p in parts))
    if tape is not None:
        def bwd():
            g = out.grad
            if g is None:
                return
            off = 0
            for p in parts:
                w = p.data.shape[0]
                if p.requires_grad:
                    K.acc(_buf(p), g[off:off + w])
                off += w
        tape.ops.append((bwd, out))
    return out


def stack(rows) -> Tensor:
    """Stack equal-length 1D vectors as the rows of a matrix."""
    rows = list(rows)
    if not rows or any(r.data.ndim != 1 for r in rows):
        raise ShapeError("stack: expects a non-empty list of 1D vectors")
    w = rows[0].data.shape[0]
    if any(r.data.shape[0] != w for r in rows):
        raise ShapeError("stack: rows differ in length")
    data = np.stack([r.data for r in rows])
    out, tape = _out("stack", data, any(r.requires_grad for r in rows))
    if tape is not None:
        def bwd():
            g = out.grad
            if g is None:
                return
            for i, r in enumerate(rows):
                if r.requires_grad:
                    K.acc(_buf(r), g[i])
        tape.ops.append((bwd, out))
    return out


def sum_all(a: Tensor) -> Tensor:
    out, tape = _out("sum", np.asarray(K.sum_all(a.data)), a.requires_grad)
    if tape is not None:
        def bwd():
            g = out.grad
            if g is not None:
                K.acc_fill(_buf(a), g)
        tape.ops.append((bwd, out))
    return out


def lookup(table: Tensor, index: int) -> Tensor:
    """Row `index` of a 2D embedding table, as a fresh 1D vector."""
    if table.data.ndim != 2:
        raise ShapeError(f"lookup: table must be 2D, got shape {table.data.shape}")
    n = table.data.shape[0]
    if not 0 <= index < n:
        raise ContractError(f"lookup: index {index} out of range for table of {n} rows")
    out, tape = _out("lookup", table.data[index].copy(), table.requires_grad)
    if tape is not None:
        def bwd():
            g = out.grad
            if g is not None:
                K.acc(_buf(table)[index], g)
        tape.ops.append((bwd, out))
    return out


def cross_entropy_logits(z: Tensor, k: int) -> Tensor:
    """-log softmax(z)[k], fused with log-softmax for stability."""
    if z.data.ndim != 1:
        raise ShapeError(f"cross_entropy: logits must be 1D, got shape {z.data.shape}")
    if not 0 <= k < z.data.shape[0]:
        raise ContractError(f"cross_entropy: class {k} out of range for {z.data.shape[0]} logits")
    loss, p = K.ce_logits(z.data, k)
    out, tape = _out("cross_entropy", np.asarray(loss), z.requires_grad)
    if tape is not None:
        def bwd():
            g = out.grad
            if g is not None:
                K.ce_logits_bwd(_buf(z), g, p, k)
        tape.ops.append((bwd, out))
    return out


_OPS = {
    "matmul": matmul,
    "add": add,
    "sub": sub,
    "mul": mul,
    "neg": neg,
    "scale": scale,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "softmax": softmax,
    "sum": sum_all,
    "lookup": lookup,
    "cross_entropy": cross_entropy_logits,
    "concat": concat,
    "stack": stack,
}


def forward_op(op_kind: str, inputs, **kwargs) -> Tensor:
    """Generic dispatch onto the op table (`inputs` is a list of Tensors)."""
    try:
        fn = _OPS[op_kind]
    except KeyError:
        raise ContractError(f"forward_op: unknown op kind {op_kind!r}") from None
    if op_kind in ("concat", "stack"):
        return fn(inputs, **kwargs)
    return fn(*inputs, **kwargs)

"""Dense float64 tensors with a define-by-run reverse-mode tape.

A :class:`Tape` owns the record of every operation whose inputs include a
watched leaf. Tensors built only from constants carry no tape and record
nothing, so the same model code serves both training (watched parameters)
and inference (plain arrays).

Tapes are never shared between threads; a tensor remembers the tape it was
recorded on and ops refuse to mix tapes.
"""

import numpy as np

from .exceptions import ContractError, NumericDomainError

__all__ = [
    "Tape",
    "Tensor",
    "constant",
    "backward",
    "forward_op",
    "OPS",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "sigmoid",
    "tanh",
    "relu",
    "exp",
    "log",
    "softmax",
    "concat",
    "tsum",
    "mean",
    "sq_euclid_dist",
    "reshape",
    "swapaxes",
    "clip",
    "take",
]


def _check_finite(arr, name):
    if not np.isfinite(arr).all():
        raise NumericDomainError(f"{name}: non-finite value encountered")
    return arr


class Tape:
    """Ordered record of operations; immutable once ``backward`` is called on it.

    Each record is ``(out_id, input_ids, vjp)`` where ``vjp`` maps the output
    cotangent to a tuple of input cotangents (``None`` for constants).
    """

    def __init__(self):
        self._records = []
        self._n_nodes = 0

    def __len__(self):
        return len(self._records)

    def _new_id(self):
        self._n_nodes += 1
        return self._n_nodes - 1

    def watch(self, value):
        """Register ``value`` as a differentiable leaf and return its tensor."""
        data = np.array(value, dtype=np.float64)
        _check_finite(data, "watch")
        return Tensor(data, self._new_id(), self)

    def _record(self, data, inputs, vjp):
        node = self._new_id()
        self._records.append((node, tuple(t.node for t in inputs), vjp))
        return Tensor(data, node, self)

    def backward(self, root):
        """Gradients of scalar ``root`` keyed by node id.

        Only nodes reachable from ``root`` appear in the map; use
        :meth:`gradients` to get zeros for unreachable leaves.
        """
        if not isinstance(root, Tensor) or root.tape is not self:
            raise ContractError("backward root is not recorded on this tape")
        if root.data.size != 1:
            raise ContractError(f"backward root must be scalar, got shape {root.shape}")
        grads = {root.node: np.ones_like(root.data)}
        for out_id, in_ids, vjp in reversed(self._records):
            g = grads.get(out_id)
            if g is None:
                continue
            for in_id, in_grad in zip(in_ids, vjp(g)):
                if in_id is None or in_grad is None:
                    continue
                prev = grads.get(in_id)
                grads[in_id] = in_grad if prev is None else prev + in_grad
        return grads

    def gradients(self, root, leaves):
        """Gradient arrays of ``root`` for each tensor in ``leaves``."""
        grads = self.backward(root)
        out = []
        for leaf in leaves:
            g = grads.get(leaf.node)
            out.append(np.zeros_like(leaf.data) if g is None else np.asarray(g).reshape(leaf.shape))
        return out


class Tensor:
    """A float64 array, optionally tracked on a :class:`Tape`."""

    __slots__ = ("data", "node", "tape")
    __array_priority__ = 1000

    def __init__(self, data, node=None, tape=None):
        self.data = data
        self.node = node
        self.tape = tape

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    def __repr__(self):
        tag = "const" if self.node is None else f"node={self.node}"
        return f"Tensor(shape={self.shape}, {tag})"

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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return take(self, index)


def constant(value):
    """Wrap ``value`` as an untracked float64 tensor."""
    if isinstance(value, Tensor):
        return value
    data = np.array(value, dtype=np.float64)
    return Tensor(_check_finite(data, "constant"))


def backward(root):
    """Gradient map (node id -> array) of the scalar ``root``."""
    if not isinstance(root, Tensor) or root.tape is None:
        raise ContractError("backward root is not on a tape")
    return root.tape.backward(root)


def _emit(name, data, inputs, vjp):
    _check_finite(data, name)
    tape = None
    for t in inputs:
        if t.tape is not None:
            if tape is not None and t.tape is not tape:
                raise ContractError(f"{name}: inputs recorded on different tapes")
            tape = t.tape
    if tape is None:
        return Tensor(data)
    return tape._record(data, inputs, vjp)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(name, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ContractError(f"{name}: shapes {a.shape} and {b.shape} do not conform") from None


# -- elementwise binary ------------------------------------------------------


def add(a, b):
    a, b = constant(a), constant(b)
    _broadcast_shape("add", a, b)
    sa, sb = a.shape, b.shape
    return _emit("add", a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    a, b = constant(a), constant(b)
    _broadcast_shape("sub", a, b)
    sa, sb = a.shape, b.shape
    return _emit("sub", a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    a, b = constant(a), constant(b)
    _broadcast_shape("mul", a, b)
    ad, bd = a.data, b.data
    return _emit("mul", ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def div(a, b):
    a, b = constant(a), constant(b)
    _broadcast_shape("div", a, b)
    ad, bd = a.data, b.data
    if np.any(bd == 0):
        raise NumericDomainError("div: division by zero")
    out = ad / bd
    return _emit("div", out, (a, b),
                 lambda g: (_unbroadcast(g / bd, ad.shape), _unbroadcast(-g * out / bd, bd.shape)))


def neg(a):
    a = constant(a)
    return _emit("neg", -a.data, (a,), lambda g: (-g,))


# -- linear algebra ------------------------------------------------------------


def matmul(a, b):
    """Matrix product with numpy semantics, including leading batch dimensions."""
    a, b = constant(a), constant(b)
    ad, bd = a.data, b.data
    if ad.ndim == 0 or bd.ndim == 0:
        raise ContractError("matmul: scalar operands are not allowed")
    k_a = ad.shape[-1]
    k_b = bd.shape[0] if bd.ndim == 1 else bd.shape[-2]
    if k_a != k_b:
        raise ContractError(f"matmul: shapes {ad.shape} and {bd.shape} do not conform")
    try:
        out = np.matmul(ad, bd)
    except ValueError:
        raise ContractError(f"matmul: shapes {ad.shape} and {bd.shape} do not conform") from None

    def vjp(g):
        a2 = ad[None, :] if ad.ndim == 1 else ad
        b2 = bd[:, None] if bd.ndim == 1 else bd
        g2 = g
        if bd.ndim == 1:
            g2 = g2[..., None]
        if ad.ndim == 1:
            g2 = g2[..., None, :]
        ga = np.matmul(g2, np.swapaxes(b2, -1, -2))
        gb = np.matmul(np.swapaxes(a2, -1, -2), g2)
        ga = _unbroadcast(ga, a2.shape).reshape(ad.shape)
        gb = _unbroadcast(gb, b2.shape).reshape(bd.shape)
        return ga, gb

    return _emit("matmul", out, (a, b), vjp)


# -- elementwise unary ---------------------------------------------------------


def sigmoid(a):
    a = constant(a)
    x = a.data
    # split by sign so neither branch overflows
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _emit("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a):
    a = constant(a)
    out = np.tanh(a.data)
    return _emit("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a):
    a = constant(a)
    pos = a.data > 0
    return _emit("relu", np.where(pos, a.data, 0.0), (a,), lambda g: (g * pos,))


def exp(a):
    a = constant(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _emit("exp", out, (a,), lambda g: (g * out,))


def log(a):
    a = constant(a)
    x = a.data
    if np.any(x <= 0):
        raise NumericDomainError("log: non-positive argument")
    return _emit("log", np.log(x), (a,), lambda g: (g / x,))


def clip(a, lo, hi):
    """Clamp to ``[lo, hi]``; gradient is zero where the clamp is active."""
    a = constant(a)
    x = a.data
    inside = (x >= lo) & (x <= hi)
    return _emit("clip", np.clip(x, lo, hi), (a,), lambda g: (g * inside,))


def softmax(a):
    """Softmax over the last axis."""
    a = constant(a)
    x = a.data
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    out = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _emit("softmax", out, (a,), vjp)


# -- structural ----------------------------------------------------------------


def concat(tensors):
    """Concatenate along the last axis."""
    tensors = [constant(t) for t in tensors]
    if not tensors:
        raise ContractError("concat: empty input list")
    lead = tensors[0].shape[:-1]
    for t in tensors:
        if t.ndim == 0 or t.shape[:-1] != lead:
            raise ContractError("concat: leading shapes differ")
    sizes = np.cumsum([t.shape[-1] for t in tensors])[:-1]
    out = np.concatenate([t.data for t in tensors], axis=-1)
    return _emit("concat", out, tuple(tensors), lambda g: tuple(np.split(g, sizes, axis=-1)))


def tsum(a, axis=None, keepdims=False):
    a = constant(a)
    shape = a.shape
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return _emit("sum", np.asarray(out), (a,), vjp)


def mean(a, axis=None, keepdims=False):
    a = constant(a)
    shape = a.shape
    n = a.data.size if axis is None else np.prod([shape[i] for i in np.atleast_1d(axis)])
    out = a.data.mean(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, shape),)

    return _emit("mean", np.asarray(out), (a,), vjp)


def sq_euclid_dist(a, b):
    """Pairwise squared distances: ``(..., n, d), (..., m, d) -> (..., n, m)``.

    Computed from explicit differences so coincident rows give exactly zero.
    """
    a, b = constant(a), constant(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-1]:
        raise ContractError(f"sq_euclid_dist: shapes {a.shape} and {b.shape} do not conform")
    diff = a.data[..., :, None, :] - b.data[..., None, :, :]
    out = np.einsum("...nmd,...nmd->...nm", diff, diff)

    def vjp(g):
        w = 2.0 * g[..., None] * diff
        return _unbroadcast(w.sum(axis=-2), a.shape), _unbroadcast(-w.sum(axis=-3), b.shape)

    return _emit("sq_euclid_dist", out, (a, b), vjp)


def reshape(a, shape):
    a = constant(a)
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ContractError(f"reshape: cannot reshape {old} to {shape}") from None
    return _emit("reshape", out, (a,), lambda g: (g.reshape(old),))


def swapaxes(a, ax1=-1, ax2=-2):
    a = constant(a)
    return _emit("swapaxes", np.swapaxes(a.data, ax1, ax2), (a,),
                 lambda g: (np.swapaxes(g, ax1, ax2),))


def _is_basic(index):
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (slice, int, np.integer)) or i is None or i is Ellipsis for i in items)


def take(a, index):
    """Index with numpy semantics (basic or integer-array indexing)."""
    a = constant(a)
    shape = a.shape
    try:
        out = a.data[index]
    except IndexError as err:
        raise ContractError(f"take: {err}") from None
    basic = _is_basic(index)

    def vjp(g):
        full = np.zeros(shape)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _emit("take", np.array(out, dtype=np.float64), (a,), vjp)


OPS = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "neg": neg,
    "matmul": matmul,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "relu": relu,
    "exp": exp,
    "log": log,
    "softmax-lastdim": softmax,
    "concat-lastdim": lambda *ts: concat(ts),
    "sum": tsum,
    "mean": mean,
    "sq-euclid-dist": sq_euclid_dist,
}


def forward_op(name, inputs):
    """Apply the op registered under ``name`` to ``inputs``."""
    try:
        fn = OPS[name]
    except KeyError:
        raise ContractError(f"unknown op {name!r}") from None
    return fn(*inputs)

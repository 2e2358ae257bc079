"""Reverse-mode automatic differentiation over dense float64 arrays.

Graphs are define-by-run: every operation on a grad-requiring tensor records
its parents and a VJP closure, and the implicit tape is rebuilt on every
forward pass.  Creation order doubles as topological order, so ``backward``
only has to walk the reachable subgraph once, newest node first.

Broadcasting is deliberately restricted: elementwise ops accept equal shapes,
a scalar on either side, or one operand whose shape equals the other's shape
minus a leading batch axis.  Anything else raises ``ShapeError``.
"""

import itertools

import numpy as np
from scipy.special import expit

_ids = itertools.count()


class ShapeError(ValueError):
    """Shape mismatch in a tensor op; message names the op and both shapes."""

    def __init__(self, op, a_shape, b_shape):
        super().__init__(f"{op}: incompatible shapes {tuple(a_shape)} and {tuple(b_shape)}")
        self.op = op
        self.shapes = (tuple(a_shape), tuple(b_shape))


class Tensor:
    """Dense float64 array participating in the implicit gradient tape."""

    __slots__ = ("data", "grad", "requires_grad", "node_id", "_parents", "_vjps")

    def __init__(self, data, requires_grad=False, _parents=(), _vjps=()):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.node_id = next(_ids)
        self._parents = _parents
        self._vjps = _vjps

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def detach(self):
        """Same values, no tape participation."""
        return Tensor(self.data)

    def backward(self, leaves=None):
        return backward(self, leaves)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar; scalars lift to constant tensors
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


def parameter(data):
    """Leaf tensor that accumulates gradients."""
    return Tensor(data, requires_grad=True)


def constant(data):
    return Tensor(data)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered operation records reachable from a root, inputs before outputs."""

    def __init__(self, root):
        seen = {root.node_id}
        stack = [root]
        nodes = []
        while stack:
            t = stack.pop()
            nodes.append(t)
            for p in t._parents:
                if p.requires_grad and p.node_id not in seen:
                    seen.add(p.node_id)
                    stack.append(p)
        # node ids increase with creation, so sorting restores topological order
        nodes.sort(key=lambda t: t.node_id)
        self.nodes = nodes


def backward(root, leaves=None):
    """Accumulate d(root)/d(tensor) into ``.grad`` for every reachable tensor.

    ``root`` must be scalar.  Returns a gradient map for ``leaves`` when
    given; leaves not reachable from the root map to zeros.
    """
    if root.data.size != 1:
        raise ValueError(f"backward: root must be scalar, got shape {root.shape}")
    tape = Tape(root)
    grads = {root.node_id: np.ones_like(root.data)}
    for t in reversed(tape.nodes):
        g = grads.pop(t.node_id, None)
        if g is None:
            continue
        t.grad = g if t.grad is None else t.grad + g
        for p, vjp in zip(t._parents, t._vjps):
            if not p.requires_grad:
                continue
            pg = vjp(g)
            acc = grads.get(p.node_id)
            grads[p.node_id] = pg if acc is None else acc + pg
    if leaves is None:
        return None
    return {
        leaf: (leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data))
        for leaf in leaves
    }


def zero_grads(tensors):
    for t in tensors:
        t.grad = None


# ---------------------------------------------------------------------------
# elementwise ops


def _binary_shapes(op, a, b):
    """Validate the leading-batch-only broadcast contract."""
    sa, sb = a.shape, b.shape
    if sa == sb or a.data.size == 1 or b.data.size == 1:
        return
    if sa[1:] == sb or sb[1:] == sa:
        return
    raise ShapeError(op, sa, sb)


def _unbroadcast(grad, shape):
    """Sum an output gradient back down to an operand's shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad.reshape(shape)


def _elementwise2(op, a, b, fwd, vjp_a, vjp_b):
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(op, a, b)
    out = fwd(a.data, b.data)
    if not (a.requires_grad or b.requires_grad):
        return Tensor(out)
    return Tensor(
        out,
        requires_grad=True,
        _parents=(a, b),
        _vjps=(
            lambda g, a=a, b=b: _unbroadcast(vjp_a(g, a.data, b.data), a.shape),
            lambda g, a=a, b=b: _unbroadcast(vjp_b(g, a.data, b.data), b.shape),
        ),
    )


def _elementwise1(a, fwd, vjp):
    a = as_tensor(a)
    out = fwd(a.data)
    if not a.requires_grad:
        return Tensor(out)
    return Tensor(
        out,
        requires_grad=True,
        _parents=(a,),
        _vjps=(lambda g, a=a, out=out: vjp(g, a.data, out),),
    )


def add(a, b):
    return _elementwise2("add", a, b, np.add, lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b):
    return _elementwise2("sub", a, b, np.subtract, lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b):
    return _elementwise2("mul", a, b, np.multiply, lambda g, x, y: g * y, lambda g, x, y: g * x)


def div(a, b):
    return _elementwise2(
        "div", a, b, np.divide, lambda g, x, y: g / y, lambda g, x, y: -g * x / (y * y)
    )


def neg(a):
    return _elementwise1(a, np.negative, lambda g, x, out: -g)


def exp(a):
    return _elementwise1(a, np.exp, lambda g, x, out: g * out)


def log(a):
    return _elementwise1(a, np.log, lambda g, x, out: g / x)


def tanh(a):
    return _elementwise1(a, np.tanh, lambda g, x, out: g * (1.0 - out * out))


def softplus(a):
    return _elementwise1(
        a, lambda x: np.logaddexp(0.0, x), lambda g, x, out: g * expit(x)
    )


def sigmoid(a):
    return _elementwise1(a, expit, lambda g, x, out: g * out * (1.0 - out))


def square(a):
    return _elementwise1(a, np.square, lambda g, x, out: g * 2.0 * x)


def clip(a, lo, hi):
    """Clamp values; gradient passes only where the input is inside [lo, hi]."""

    def vjp(g, x, out):
        return g * ((x >= lo) & (x <= hi))

    return _elementwise1(a, lambda x: np.clip(x, lo, hi), vjp)


# ---------------------------------------------------------------------------
# reductions


def _reduce(a, np_fwd, scale):
    a = as_tensor(a)

    def make(axis):
        out = np_fwd(a.data, axis=axis)
        if not a.requires_grad:
            return Tensor(out)

        def vjp(g):
            if axis is None:
                full = np.broadcast_to(g, a.shape)
            else:
                full = np.broadcast_to(np.expand_dims(g, axis), a.shape)
            return full * scale(a.data, axis)

        return Tensor(np.asarray(out), requires_grad=True, _parents=(a,), _vjps=(vjp,))

    return make


def tsum(a, axis=None):
    return _reduce(a, np.sum, lambda x, ax: 1.0)(axis)


def tmean(a, axis=None):
    def scale(x, ax):
        n = x.size if ax is None else x.shape[ax]
        return 1.0 / n

    return _reduce(a, np.mean, scale)(axis)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim not in (1, 2) or b.data.ndim not in (1, 2):
        raise ShapeError("matmul", a.shape, b.shape)
    ka = a.shape[-1]
    kb = b.shape[0]
    if ka != kb:
        raise ShapeError("matmul", a.shape, b.shape)
    out = a.data @ b.data
    if not (a.requires_grad or b.requires_grad):
        return Tensor(out)

    def vjp_a(g):
        if b.data.ndim == 1:
            return np.outer(g, b.data) if a.data.ndim == 2 else g * b.data
        ga = g @ b.data.T if np.ndim(g) >= 1 else g * b.data.T
        return ga.reshape(a.shape)

    def vjp_b(g):
        if a.data.ndim == 1:
            return np.outer(a.data, g) if b.data.ndim == 2 else g * a.data
        gb = a.data.T @ g
        return gb.reshape(b.shape)

    return Tensor(out, requires_grad=True, _parents=(a, b), _vjps=(vjp_a, vjp_b))


def pairwise_sqdist(a, b):
    """Matrix of squared euclidean distances between rows of a and rows of b."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError("pairwise_sqdist", a.shape, b.shape)
    aa = np.sum(a.data * a.data, axis=1)
    bb = np.sum(b.data * b.data, axis=1)
    out = np.maximum(aa[:, None] + bb[None, :] - 2.0 * (a.data @ b.data.T), 0.0)
    if not (a.requires_grad or b.requires_grad):
        return Tensor(out)

    def vjp_a(g):
        return 2.0 * (g.sum(axis=1)[:, None] * a.data - g @ b.data)

    def vjp_b(g):
        return 2.0 * (g.sum(axis=0)[:, None] * b.data - g.T @ a.data)

    return Tensor(out, requires_grad=True, _parents=(a, b), _vjps=(vjp_a, vjp_b))


# ---------------------------------------------------------------------------
# verification


def grad_check(f, x, step=1e-5):
    """Max relative error between backward() and central differences.

    ``f`` maps a tensor to a scalar Tensor and is re-evaluated with each
    coordinate of ``x`` nudged by ``±step``.
    """
    x.grad = None
    out = f(x)
    if not np.all(np.isfinite(out.data)):
        raise ValueError("grad_check: objective is not finite at x")
    backward(out)
    analytic = x.grad if x.grad is not None else np.zeros_like(x.data)
    analytic = analytic.ravel().copy()

    flat = x.data.ravel()
    worst = 0.0
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = float(f(x).data)
        flat[i] = orig - step
        fm = float(f(x).data)
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError("grad_check: objective is not finite near x")
        central = (fp - fm) / (2.0 * step)
        err = abs(analytic[i] - central) / (abs(central) + 1e-8)
        worst = max(worst, err)
    return worst


def grad_check_params(f, params, step=1e-5):
    """grad_check over a dict of leaf tensors; returns the max relative error."""
    worst = 0.0
    for name in params:

        def partial(_, name=name):
            return f(params)

        worst = max(worst, grad_check(partial, params[name], step))
    return worst

"""Reverse-mode automatic differentiation over dense float64 arrays.

Define-by-run: every primitive wraps its numpy result in a Tensor and, when a
differentiable input is involved, records a Node carrying the backward rule.
`backward` replays the reachable nodes of a scalar loss in reverse topological
order, accumulating gradients additively across fan-out.

Storage is row-major dense float64 throughout.  Broadcasting is deliberately
restricted to what the losses need: equal shapes, a scalar operand, or a
(1, m) row against an (n, m) matrix.  NaN/Inf anywhere is an error, never a
value that propagates.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, NumericError, ParameterError, ShapeError

ArrayLike = "np.ndarray | float | int | list"

EPS_LOG = 1e-12


def _as_f64(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    return arr


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {what}")


class Node:
    """One recorded primitive: its inputs and the rule mapping the output
    gradient to per-input gradient contributions (None means no flow)."""

    __slots__ = ("op", "inputs", "backward_fn")

    def __init__(self, op: str, inputs: tuple["Tensor", ...],
                 backward_fn: Callable[[np.ndarray], tuple]):
        self.op = op
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tensor:
    """Dense multi-dimensional float64 array with optional gradient.

    `node` links into the recorded graph when the tensor was produced by a
    primitive applied to at least one differentiable input; leaf tensors and
    constants have node=None.
    """

    __slots__ = ("values", "requires_grad", "grad", "node")

    def __init__(self, values, requires_grad: bool = False,
                 node: Node | None = None):
        self.values = _as_f64(values)
        _check_finite(self.values, "tensor construction")
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.node = node

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.values.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.values, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def reshape(self, shape) -> "Tensor":
        return reshape(self, shape)

    def sum(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self) -> "Tensor":
        return tmean(self)

    def exp(self) -> "Tensor":
        return texp(self)

    def log(self) -> "Tensor":
        return tlog(self)

    def relu(self) -> "Tensor":
        return relu(self)

    def sigmoid(self) -> "Tensor":
        return sigmoid(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __truediv__(self, other):
        return div(self, _coerce(other))

    def __rtruediv__(self, other):
        return div(_coerce(other), self)

    def __neg__(self):
        return negate(self)

    def __matmul__(self, other):
        return matmul(self, _coerce(other))


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def tensor(values, requires_grad: bool = False) -> Tensor:
    return Tensor(values, requires_grad=requires_grad)


def _make(op: str, values: np.ndarray, inputs: tuple[Tensor, ...],
          backward_fn: Callable[[np.ndarray], tuple]) -> Tensor:
    """Wrap a primitive result; record a node only if gradient can flow."""
    _check_finite(values, f"output of {op}")
    if any(t.requires_grad for t in inputs):
        return Tensor(values, requires_grad=True,
                      node=Node(op, inputs, backward_fn))
    return Tensor(values)


# ---------------------------------------------------------------------------
# elementwise binary ops with restricted broadcasting


def _broadcast_check(op: str, a: Tensor, b: Tensor) -> None:
    sa, sb = a.shape, b.shape
    if sa == sb or sa == () or sb == ():
        return
    if len(sa) == 2 and len(sb) == 2 and sa[1] == sb[1] and 1 in (sa[0], sb[0]):
        return
    raise ShapeError(f"{op}: incompatible shapes {sa} and {sb}")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce an output gradient back to an operand's (smaller) shape."""
    if g.shape == shape:
        return g
    if shape == ():
        return np.asarray(g.sum())
    # row vector (1, m) broadcast over rows
    return g.sum(axis=0, keepdims=True)


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_check("add", a, b)
    return _make("add", a.values + b.values, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_check("sub", a, b)
    return _make("sub", a.values - b.values, (a, b),
                 lambda g: (_unbroadcast(g, a.shape),
                            _unbroadcast(-g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_check("mul", a, b)
    return _make("mul", a.values * b.values, (a, b),
                 lambda g: (_unbroadcast(g * b.values, a.shape),
                            _unbroadcast(g * a.values, b.shape)))


def div(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_check("div", a, b)
    out = a.values / b.values

    def backward(g: np.ndarray):
        ga = _unbroadcast(g / b.values, a.shape)
        gb = _unbroadcast(-g * a.values / (b.values * b.values), b.shape)
        return ga, gb

    return _make("div", out, (a, b), backward)


# ---------------------------------------------------------------------------
# elementwise unary ops


def negate(a: Tensor) -> Tensor:
    return _make("negate", -a.values, (a,), lambda g: (-g,))


def texp(a: Tensor) -> Tensor:
    out = np.exp(a.values)
    return _make("exp", out, (a,), lambda g: (g * out,))


def tlog(a: Tensor) -> Tensor:
    if np.any(a.values <= 0.0):
        raise DomainError("log of non-positive value; clamp first if the "
                          "math allows zero")
    return _make("log", np.log(a.values), (a,), lambda g: (g / a.values,))


def relu(a: Tensor) -> Tensor:
    mask = a.values > 0.0
    return _make("relu", np.where(mask, a.values, 0.0), (a,),
                 lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    # split by sign so exp never overflows on saturated inputs
    v = a.values
    pos = v >= 0.0
    e = np.exp(np.where(pos, -v, v))
    out = np.where(pos, 1.0 / (1.0 + e), e / (1.0 + e))
    return _make("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def clamp_min(a: Tensor, floor: float) -> Tensor:
    """max(floor, a) elementwise; gradient passes only where a > floor."""
    mask = a.values > floor
    return _make("clamp_min", np.where(mask, a.values, floor), (a,),
                 lambda g: (g * mask,))


def safe_log(a: Tensor, eps: float = EPS_LOG) -> Tensor:
    """log(max(eps, a)) -- the clamped log used throughout the loss code."""
    return tlog(clamp_min(a, eps))


# ---------------------------------------------------------------------------
# structural ops


def transpose(a: Tensor) -> Tensor:
    if a.values.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {a.shape}")
    return _make("transpose", a.values.T.copy(), (a,), lambda g: (g.T,))


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape
    out = a.values.reshape(shape)
    return _make("reshape", out.copy(), (a,),
                 lambda g: (g.reshape(a.shape),))


def concat_rows(tensors: Sequence[Tensor]) -> Tensor:
    """Stack matrices along axis 0."""
    if not tensors:
        raise ParameterError("concat_rows of empty sequence")
    mats = [t.values for t in tensors]
    ncols = {m.shape[1] for m in mats if m.ndim == 2}
    if any(m.ndim != 2 for m in mats) or len(ncols) != 1:
        raise ShapeError("concat_rows expects matrices with equal column count")
    out = np.concatenate(mats, axis=0)
    offsets = np.cumsum([0] + [m.shape[0] for m in mats])

    def backward(g: np.ndarray):
        return tuple(g[offsets[i]:offsets[i + 1]] for i in range(len(mats)))

    return _make("concat_rows", out, tuple(tensors), backward)


def tsum(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    out = a.values.sum(axis=axis, keepdims=keepdims)

    def backward(g: np.ndarray):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        gk = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gk, a.shape).copy(),)

    return _make("sum", out, (a,), backward)


def tmean(a: Tensor) -> Tensor:
    n = a.values.size
    if n == 0:
        raise ShapeError("mean of empty tensor")
    out = a.values.mean()
    return _make("mean", out, (a,),
                 lambda g: (np.broadcast_to(g / n, a.shape).copy(),))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.values.ndim != 2 or b.values.ndim != 2:
        raise ShapeError("matmul expects matrices")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions {a.shape} x {b.shape}")
    return _make("matmul", a.values @ b.values, (a, b),
                 lambda g: (g @ b.values.T, a.values.T @ g))


# ---------------------------------------------------------------------------
# fused numeric primitives


def softmax(logits: Tensor, temperature: float = 1.0) -> Tensor:
    """Row-wise softmax of logits/temperature, stabilized by row-max shift."""
    if temperature <= 0.0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    z = logits.values / temperature
    if z.ndim == 1:
        z2 = z[None, :]
    elif z.ndim == 2:
        z2 = z
    else:
        raise ShapeError(f"softmax expects 1-D or 2-D logits, got {logits.shape}")
    shifted = z2 - z2.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y2 = e / e.sum(axis=1, keepdims=True)
    y = y2.reshape(z.shape)

    def backward(g: np.ndarray):
        g2 = g.reshape(y2.shape)
        inner = (g2 * y2).sum(axis=1, keepdims=True)
        return ((y2 * (g2 - inner) / temperature).reshape(logits.shape),)

    return _make("softmax", y, (logits,), backward)


def pairwise_sq_dists(x: Tensor, y: Tensor) -> Tensor:
    """Matrix of squared Euclidean distances between rows of x and rows of y."""
    if x.values.ndim != 2 or y.values.ndim != 2:
        raise ShapeError("pairwise_sq_dists expects matrices")
    if x.shape[1] != y.shape[1]:
        raise ShapeError(f"feature dimensions differ: {x.shape} vs {y.shape}")
    xv, yv = x.values, y.values
    sqx = (xv * xv).sum(axis=1, keepdims=True)
    sqy = (yv * yv).sum(axis=1, keepdims=True)
    d = sqx + sqy.T - 2.0 * (xv @ yv.T)

    def backward(g: np.ndarray):
        gx = 2.0 * (g.sum(axis=1, keepdims=True) * xv - g @ yv)
        gy = 2.0 * (g.sum(axis=0)[:, None] * yv - g.T @ xv)
        return gx, gy

    return _make("pairwise_sq_dists", d, (x, y), backward)


def outer_flatten(f: Tensor, g: Tensor) -> Tensor:
    """Row i of the result is the row-major flattening of outer(f_i, g_i)."""
    if f.values.ndim != 2 or g.values.ndim != 2:
        raise ShapeError("outer_flatten expects matrices")
    if f.shape[0] != g.shape[0]:
        raise ShapeError(f"batch sizes differ: {f.shape[0]} vs {g.shape[0]}")
    n, a = f.shape
    b = g.shape[1]
    out = np.einsum("ni,nj->nij", f.values, g.values).reshape(n, a * b)

    def backward(grad: np.ndarray):
        g3 = grad.reshape(n, a, b)
        df = np.einsum("nij,nj->ni", g3, g.values)
        dg = np.einsum("nij,ni->nj", g3, f.values)
        return df, dg

    return _make("outer_flatten", out, (f, g), backward)


def grad_reverse(x: Tensor, scale: float) -> Tensor:
    """Identity forward; backward multiplies the incoming gradient by -scale."""
    if scale < 0.0:
        raise ParameterError(f"grad_reverse scale must be >= 0, got {scale}")
    return _make("grad_reverse", x.values.copy(), (x,),
                 lambda g: ((-scale) * g,))


# ---------------------------------------------------------------------------
# backward pass


class Tape:
    """Recorded primitives of one loss graph, in topological order."""

    __slots__ = ("outputs",)

    def __init__(self, outputs: list[Tensor]):
        self.outputs = outputs

    @property
    def nodes(self) -> list[Node]:
        return [t.node for t in self.outputs]

    def __len__(self) -> int:
        return len(self.outputs)


def build_tape(root: Tensor) -> Tape:
    """Topologically order every recorded node reachable from root."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        t, processed = stack.pop()
        if processed:
            order.append(t)
            continue
        if id(t) in seen or t.node is None:
            continue
        seen.add(id(t))
        stack.append((t, True))
        for parent in t.node.inputs:
            stack.append((parent, False))
    return Tape(order)


def backward(loss: Tensor) -> None:
    """Populate .grad of every requires_grad tensor reachable from loss."""
    if loss.values.shape != ():
        raise ShapeError(f"backward expects a scalar loss, got {loss.shape}")
    if not loss.requires_grad:
        return
    tape = build_tape(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}

    def _deposit(t: Tensor, g: np.ndarray) -> None:
        if t.requires_grad:
            t.grad = g.copy() if t.grad is None else t.grad + g

    if loss.node is None:
        _deposit(loss, grads[id(loss)])
        return
    for t in reversed(tape.outputs):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        _check_finite(g, f"gradient flowing into {t.node.op}")
        _deposit(t, g)
        contribs = t.node.backward_fn(g)
        for inp, c in zip(t.node.inputs, contribs):
            if c is None or not inp.requires_grad:
                continue
            c = np.asarray(c, dtype=np.float64)
            prev = grads.get(id(inp))
            grads[id(inp)] = c if prev is None else prev + c
    # whatever remains belongs to leaves
    leaves: dict[int, Tensor] = {}
    for t in tape.outputs:
        for inp in t.node.inputs:
            if inp.node is None:
                leaves[id(inp)] = inp
    for key, g in grads.items():
        leaf = leaves.get(key)
        if leaf is not None:
            _check_finite(g, "leaf gradient")
            _deposit(leaf, g)


# ---------------------------------------------------------------------------
# verification oracle


def gradcheck(f: Callable[[Tensor], Tensor], x: Tensor,
              step: float = 1e-5) -> float:
    """Max relative error between the backward gradient of f at x and a
    central finite-difference estimate, coordinate by coordinate."""
    if step <= 0.0:
        raise ParameterError(f"step must be positive, got {step}")
    base = x.values.copy()
    probe = Tensor(base, requires_grad=True)
    out = f(probe)
    if out.values.shape != ():
        raise ShapeError("gradcheck expects a scalar-valued function")
    backward(out)
    analytic = probe.grad if probe.grad is not None else np.zeros_like(base)

    numeric = np.zeros_like(base)
    it = np.nditer(base, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        vp = base.copy()
        vp[idx] += step
        vm = base.copy()
        vm[idx] -= step
        fp = f(Tensor(vp)).item()
        fm = f(Tensor(vm)).item()
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError("non-finite value during finite differencing")
        numeric[idx] = (fp - fm) / (2.0 * step)

    denom = np.maximum(1e-12, np.abs(analytic) + np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom))

"""Dense rank-1/rank-2 tensors with reverse-mode automatic differentiation.

A Tensor doubles as its own tape node: it stores the cached forward value,
the op kind, references to its inputs and a gradient accumulator. backward()
walks the recorded DAG in reverse topological order exactly once.

Training runs in float32 by default; gradient-check tests switch the whole
engine to float64 via set_precision("f64").
"""

from __future__ import annotations

import contextlib

import numpy as np

from .errors import DegenerateInputError, NumericsError, ShapeMismatchError

_DTYPES = {"f32": np.float32, "f64": np.float64}
_dtype = np.float32


def set_precision(name: str) -> None:
    """Switch the global float width ("f32" or "f64")."""
    global _dtype
    if name not in _DTYPES:
        raise ValueError(f"unknown precision {name!r}; expected one of {sorted(_DTYPES)}")
    _dtype = _DTYPES[name]


def get_precision() -> str:
    return "f32" if _dtype == np.float32 else "f64"


def dtype() -> np.dtype:
    return np.dtype(_dtype)


@contextlib.contextmanager
def precision(name: str):
    """Temporarily switch precision (used by gradient-check tests)."""
    old = get_precision()
    set_precision(name)
    try:
        yield
    finally:
        set_precision(old)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A dense float array plus its tape node."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_prev", "_backward")

    def __init__(self, data, requires_grad: bool = False, _prev=(), op: str = "leaf"):
        arr = np.asarray(data, dtype=_dtype)
        if arr.ndim > 2:
            raise ShapeMismatchError(f"rank {arr.ndim} tensors are not supported")
        self.data = arr
        # leaves keep a live accumulator; interior nodes get one lazily
        # inside backward(), saving an allocation per op
        self.grad = np.zeros_like(arr) if requires_grad and not _prev else None
        self.requires_grad = requires_grad
        self.op = op
        self._prev = tuple(_prev)
        self._backward = None

    # -- introspection ----------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeMismatchError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    # -- autodiff ---------------------------------------------------------

    def _toposort(self) -> list[Tensor]:
        # constant subtrees can't receive gradient, so they are pruned
        order, seen, stack = [], set(), [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._prev:
                if parent.requires_grad:
                    stack.append((parent, False))
        return order

    def backward(self) -> None:
        """Accumulate dSelf/dLeaf into every reachable leaf's .grad.

        Interior (op-result) accumulators are reset on each call, so calling
        backward twice adds the same gradient to the leaves twice. Leaf
        gradients are only cleared by an explicit zero_grad().
        """
        if self.data.size != 1:
            raise ShapeMismatchError("backward() requires a scalar root")
        order = self._toposort()
        for node in order:
            if node._prev:
                node.grad = np.zeros_like(node.data)
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad = self.grad + np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward()

    # -- helpers ----------------------------------------------------------

    @staticmethod
    def _wrap(value) -> Tensor:
        return value if isinstance(value, Tensor) else Tensor(value)

    def _binary_shapes_ok(self, other: Tensor) -> bool:
        a, b = self.shape, other.shape
        if a == b or a == () or b == ():
            return True
        # row-wise broadcast of a rank-1 vector over a rank-2 matrix
        return (len(a) == 2 and b == (a[1],)) or (len(b) == 2 and a == (b[1],))

    # -- elementwise ops --------------------------------------------------

    def __add__(self, other) -> Tensor:
        other = Tensor._wrap(other)
        if not self._binary_shapes_ok(other):
            raise ShapeMismatchError(f"add: {self.shape} vs {other.shape}")
        out = Tensor(self.data + other.data,
                     requires_grad=self.requires_grad or other.requires_grad,
                     _prev=(self, other), op="add")

        def _backward():
            if self.requires_grad:
                self.grad += _unbroadcast(out.grad, self.shape)
            if other.requires_grad:
                other.grad += _unbroadcast(out.grad, other.shape)
        out._backward = _backward
        return out

    def __radd__(self, other):
        return Tensor._wrap(other) + self

    def __neg__(self) -> Tensor:
        out = Tensor(-self.data, requires_grad=self.requires_grad, _prev=(self,), op="neg")

        def _backward():
            if self.requires_grad:
                self.grad -= out.grad
        out._backward = _backward
        return out

    def __sub__(self, other):
        return self + (-Tensor._wrap(other))

    def __rsub__(self, other):
        return Tensor._wrap(other) + (-self)

    def __mul__(self, other) -> Tensor:
        other = Tensor._wrap(other)
        if not self._binary_shapes_ok(other):
            raise ShapeMismatchError(f"mul: {self.shape} vs {other.shape}")
        out = Tensor(self.data * other.data,
                     requires_grad=self.requires_grad or other.requires_grad,
                     _prev=(self, other), op="mul")

        def _backward():
            if self.requires_grad:
                self.grad += _unbroadcast(other.data * out.grad, self.shape)
            if other.requires_grad:
                other.grad += _unbroadcast(self.data * out.grad, other.shape)
        out._backward = _backward
        return out

    def __rmul__(self, other):
        return Tensor._wrap(other) * self

    def __truediv__(self, other) -> Tensor:
        other = Tensor._wrap(other)
        if not self._binary_shapes_ok(other):
            raise ShapeMismatchError(f"div: {self.shape} vs {other.shape}")
        out = Tensor(self.data / other.data,
                     requires_grad=self.requires_grad or other.requires_grad,
                     _prev=(self, other), op="div")

        def _backward():
            if self.requires_grad:
                self.grad += _unbroadcast(out.grad / other.data, self.shape)
            if other.requires_grad:
                other.grad += _unbroadcast(-out.grad * self.data / (other.data * other.data),
                                           other.shape)
        out._backward = _backward
        return out

    # -- reductions and structure ops --------------------------------------

    def sum(self, axis=None) -> Tensor:
        out = Tensor(self.data.sum(axis=axis), requires_grad=self.requires_grad,
                     _prev=(self,), op="sum")

        def _backward():
            if not self.requires_grad:
                return
            g = out.grad
            if axis is not None:
                g = np.expand_dims(g, axis)
            self.grad += np.broadcast_to(g, self.shape)
        out._backward = _backward
        return out

    def mean(self, axis=None) -> Tensor:
        n = self.data.size if axis is None else self.shape[axis]
        return self.sum(axis=axis) * (1.0 / n)

    def matmul(self, other: Tensor) -> Tensor:
        other = Tensor._wrap(other)
        a, b = self.data, other.data
        if a.ndim == 0 or b.ndim == 0 or a.shape[-1] != b.shape[0]:
            raise ShapeMismatchError(f"matmul: {self.shape} vs {other.shape}")
        out = Tensor(a @ b, requires_grad=self.requires_grad or other.requires_grad,
                     _prev=(self, other), op="matmul")

        def _backward():
            g = out.grad
            if self.requires_grad:
                if a.ndim == 2 and b.ndim == 1:
                    self.grad += np.outer(g, b)
                elif a.ndim == 1 and b.ndim == 2:
                    self.grad += g @ b.T
                else:
                    self.grad += g @ b.T if b.ndim == 2 else np.outer(g, b)
            if other.requires_grad:
                if a.ndim == 2 and b.ndim == 1:
                    other.grad += a.T @ g
                elif a.ndim == 1 and b.ndim == 2:
                    other.grad += np.outer(a, g)
                else:
                    other.grad += a.T @ g
        out._backward = _backward
        return out

    def __matmul__(self, other):
        return self.matmul(other)

    def transpose(self) -> Tensor:
        if self.data.ndim != 2:
            raise ShapeMismatchError(f"transpose needs rank 2, got {self.shape}")
        out = Tensor(self.data.T, requires_grad=self.requires_grad, _prev=(self,), op="transpose")

        def _backward():
            if self.requires_grad:
                self.grad += out.grad.T
        out._backward = _backward
        return out

    def relu(self) -> Tensor:
        out = Tensor(np.maximum(self.data, 0.0), requires_grad=self.requires_grad,
                     _prev=(self,), op="relu")

        def _backward():
            if self.requires_grad:
                # subgradient at 0 is 0
                self.grad += (self.data > 0) * out.grad
        out._backward = _backward
        return out

    def sqrt(self) -> Tensor:
        if np.any(self.data < 0):
            raise NumericsError("sqrt of negative value")
        out = Tensor(np.sqrt(self.data), requires_grad=self.requires_grad,
                     _prev=(self,), op="sqrt")

        def _backward():
            if self.requires_grad:
                self.grad += out.grad / (2.0 * out.data)
        out._backward = _backward
        return out

    def row(self, index: int) -> Tensor:
        """Differentiable lookup of one row of a rank-2 tensor."""
        if self.data.ndim != 2:
            raise ShapeMismatchError(f"row lookup needs rank 2, got {self.shape}")
        if not 0 <= index < self.shape[0]:
            raise IndexError(f"row {index} out of range [0, {self.shape[0]})")
        out = Tensor(self.data[index].copy(), requires_grad=self.requires_grad,
                     _prev=(self,), op="row")

        def _backward():
            if self.requires_grad:
                self.grad[index] += out.grad
        out._backward = _backward
        return out

    def rows(self, indices) -> Tensor:
        """Differentiable gather of several rows (duplicates allowed)."""
        if self.data.ndim != 2:
            raise ShapeMismatchError(f"row gather needs rank 2, got {self.shape}")
        idx = np.asarray(indices, dtype=np.intp)
        if idx.size and (idx.min() < 0 or idx.max() >= self.shape[0]):
            raise IndexError(f"row index out of range [0, {self.shape[0]})")
        out = Tensor(self.data[idx], requires_grad=self.requires_grad,
                     _prev=(self,), op="rows")

        def _backward():
            if self.requires_grad:
                np.add.at(self.grad, idx, out.grad)
        out._backward = _backward
        return out


# -- free-function ops -----------------------------------------------------

def affine(W: Tensor, x: Tensor, b: Tensor) -> Tensor:
    """Fused W @ x + b; x may be a vector (k,) or a row batch (m, k)."""
    if W.data.ndim != 2 or b.data.ndim != 1:
        raise ShapeMismatchError(f"affine: W{W.shape}, x{x.shape}, b{b.shape}")
    if W.shape[1] != x.shape[-1] or W.shape[0] != b.shape[0]:
        raise ShapeMismatchError(f"affine: W{W.shape}, x{x.shape}, b{b.shape}")
    batched = x.data.ndim == 2
    value = x.data @ W.data.T + b.data if batched else W.data @ x.data + b.data
    out = Tensor(value, requires_grad=W.requires_grad or x.requires_grad or b.requires_grad,
                 _prev=(W, x, b), op="affine")

    def _backward():
        g = out.grad
        if batched:
            if W.requires_grad:
                W.grad += g.T @ x.data
            if x.requires_grad:
                x.grad += g @ W.data
            if b.requires_grad:
                b.grad += g.sum(axis=0)
        else:
            if W.requires_grad:
                W.grad += np.outer(g, x.data)
            if x.requires_grad:
                x.grad += W.data.T @ g
            if b.requires_grad:
                b.grad += g
    out._backward = _backward
    return out


def linear(W: Tensor, x: Tensor, b: Tensor) -> Tensor:
    """W @ x + b for W: (m, k), x: (k,), b: (m,)."""
    if x.data.ndim != 1:
        raise ShapeMismatchError(f"linear: W{W.shape}, x{x.shape}, b{b.shape}")
    return affine(W, x, b)


def relu(x: Tensor) -> Tensor:
    return x.relu()


def concat(a: Tensor, b: Tensor) -> Tensor:
    """Order-preserving concatenation of two rank-1 tensors."""
    if a.data.ndim != 1 or b.data.ndim != 1:
        raise ShapeMismatchError(f"concat needs rank-1 inputs, got {a.shape} and {b.shape}")
    na = a.shape[0]
    out = Tensor(np.concatenate([a.data, b.data]),
                 requires_grad=a.requires_grad or b.requires_grad,
                 _prev=(a, b), op="concat")

    def _backward():
        if a.requires_grad:
            a.grad += out.grad[:na]
        if b.requires_grad:
            b.grad += out.grad[na:]
    out._backward = _backward
    return out


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    """Column-wise concatenation of two rank-2 tensors with equal row count."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeMismatchError(f"concat_cols: {a.shape} vs {b.shape}")
    na = a.shape[1]
    out = Tensor(np.concatenate([a.data, b.data], axis=1),
                 requires_grad=a.requires_grad or b.requires_grad,
                 _prev=(a, b), op="concat_cols")

    def _backward():
        if a.requires_grad:
            a.grad += out.grad[:, :na]
        if b.requires_grad:
            b.grad += out.grad[:, na:]
    out._backward = _backward
    return out


def tile_rows(v: Tensor, n: int) -> Tensor:
    """Repeat a rank-1 tensor as n identical rows; backward sums over rows."""
    if v.data.ndim != 1:
        raise ShapeMismatchError(f"tile_rows needs rank 1, got {v.shape}")
    out = Tensor(np.tile(v.data, (n, 1)), requires_grad=v.requires_grad,
                 _prev=(v,), op="tile_rows")

    def _backward():
        if v.requires_grad:
            v.grad += out.grad.sum(axis=0)
    out._backward = _backward
    return out


def stack(tensors: list[Tensor]) -> Tensor:
    """Stack rank-1 tensors of equal length into a rank-2 tensor."""
    if not tensors:
        raise ShapeMismatchError("stack of empty list")
    n = tensors[0].shape[0]
    for t in tensors:
        if t.data.ndim != 1 or t.shape[0] != n:
            raise ShapeMismatchError("stack needs rank-1 tensors of equal length")
    out = Tensor(np.stack([t.data for t in tensors]),
                 requires_grad=any(t.requires_grad for t in tensors),
                 _prev=tuple(tensors), op="stack")

    def _backward():
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t.grad += out.grad[i]
    out._backward = _backward
    return out


def dot(a: Tensor, b: Tensor) -> Tensor:
    return (a * b).sum()


def cosine_similarity(a: Tensor, b: Tensor) -> Tensor:
    """Fused a.b / (|a||b|), defined only for nonzero rank-1 inputs."""
    if a.shape != b.shape or a.data.ndim != 1:
        raise ShapeMismatchError(f"cosine_similarity: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a.data))
    nb = float(np.linalg.norm(b.data))
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine_similarity of zero-norm vector")
    value = a.data @ b.data / (na * nb)
    out = Tensor(value, requires_grad=a.requires_grad or b.requires_grad,
                 _prev=(a, b), op="cosine")

    def _backward():
        g = out.grad
        c = out.data
        if a.requires_grad:
            a.grad += g * (b.data / (na * nb) - c * a.data / (na * na))
        if b.requires_grad:
            b.grad += g * (a.data / (na * nb) - c * b.data / (nb * nb))
    out._backward = _backward
    return out


def rowwise_cosine(A: Tensor, B: Tensor) -> Tensor:
    """Fused per-row cosine similarity of two (m, d) tensors; returns (m,)."""
    if A.shape != B.shape or A.data.ndim != 2:
        raise ShapeMismatchError(f"rowwise_cosine: {A.shape} vs {B.shape}")
    na = np.linalg.norm(A.data, axis=1)
    nb = np.linalg.norm(B.data, axis=1)
    if np.any(na == 0.0) or np.any(nb == 0.0):
        raise DegenerateInputError("rowwise_cosine of zero-norm row")
    value = (A.data * B.data).sum(axis=1) / (na * nb)
    out = Tensor(value, requires_grad=A.requires_grad or B.requires_grad,
                 _prev=(A, B), op="rowwise_cosine")

    def _backward():
        g = out.grad[:, None]
        c = out.data[:, None]
        if A.requires_grad:
            A.grad += g * (B.data / (na * nb)[:, None] - c * A.data / (na * na)[:, None])
        if B.requires_grad:
            B.grad += g * (A.data / (na * nb)[:, None] - c * B.data / (nb * nb)[:, None])
    out._backward = _backward
    return out


def log_sigmoid(x: Tensor) -> Tensor:
    """Numerically stable ln(sigmoid(x)) = -softplus(-x)."""
    x = Tensor._wrap(x)
    out = Tensor(-np.logaddexp(0.0, -x.data), requires_grad=x.requires_grad,
                 _prev=(x,), op="log_sigmoid")

    def _backward():
        if x.requires_grad:
            # d/dx ln(sigmoid(x)) = sigmoid(-x) = exp(-softplus(x))
            x.grad += np.exp(-np.logaddexp(0.0, x.data)) * out.grad
    out._backward = _backward
    return out


def l2_normalize(x: Tensor) -> Tensor:
    """Fused x / |x| for a nonzero rank-1 vector."""
    if x.data.ndim != 1:
        raise ShapeMismatchError(f"l2_normalize needs rank 1, got {x.shape}")
    n = float(np.linalg.norm(x.data))
    if n == 0.0:
        raise DegenerateInputError("l2_normalize of zero vector")
    out = Tensor(x.data / n, requires_grad=x.requires_grad, _prev=(x,), op="l2_normalize")

    def _backward():
        if x.requires_grad:
            g = out.grad
            x.grad += g / n - x.data * (x.data @ g) / (n * n * n)
    out._backward = _backward
    return out


def normalize_rows(X: Tensor) -> Tensor:
    """Fused row-wise unit normalization of a rank-2 tensor."""
    if X.data.ndim != 2:
        raise ShapeMismatchError(f"normalize_rows needs rank 2, got {X.shape}")
    n = np.linalg.norm(X.data, axis=1)
    if np.any(n == 0.0):
        raise DegenerateInputError("normalize_rows of zero-norm row")
    out = Tensor(X.data / n[:, None], requires_grad=X.requires_grad,
                 _prev=(X,), op="normalize_rows")

    def _backward():
        if X.requires_grad:
            g = out.grad
            proj = (X.data * g).sum(axis=1) / (n * n * n)
            X.grad += g / n[:, None] - X.data * proj[:, None]
    out._backward = _backward
    return out


def dropout(x: Tensor, rate: float, rng: np.random.Generator, training: bool,
            shared_rows: bool = False) -> Tensor:
    """Inverted dropout: zero with probability `rate`, scale survivors by 1/(1-rate).

    With shared_rows, a rank-2 input gets one mask per column, broadcast to
    every row (used when paired rows must pass the identical subnetwork).
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    mask_shape = x.shape[-1:] if shared_rows and x.data.ndim == 2 else x.shape
    mask = (rng.random(mask_shape) >= rate).astype(x.data.dtype) / (1.0 - rate)
    out = Tensor(x.data * mask, requires_grad=x.requires_grad, _prev=(x,), op="dropout")

    def _backward():
        if x.requires_grad:
            x.grad += _unbroadcast(mask * out.grad, x.shape)
    out._backward = _backward
    return out


def init_normal(shape, mean: float = 0.0, std: float = 0.01,
                rng: np.random.Generator | None = None, requires_grad: bool = True) -> Tensor:
    """I.i.d. Gaussian tensor; deterministic under a fixed generator."""
    if std <= 0:
        raise ValueError(f"std must be positive, got {std}")
    if rng is None:
        rng = np.random.default_rng()
    return Tensor(rng.normal(mean, std, size=shape).astype(_dtype), requires_grad=requires_grad)


def sum_squares(tensors: list[Tensor]) -> Tensor:
    """Fused sum of squared entries across a list of tensors."""
    if not tensors:
        return Tensor(0.0)
    value = 0.0
    for t in tensors:
        value += float((t.data * t.data).sum())
    out = Tensor(value, requires_grad=any(t.requires_grad for t in tensors),
                 _prev=tuple(tensors), op="sum_squares")

    def _backward():
        g = out.grad
        for t in tensors:
            if t.requires_grad:
                t.grad += 2.0 * t.data * g
    out._backward = _backward
    return out


def assert_finite(t: Tensor, what: str = "tensor") -> Tensor:
    if not np.all(np.isfinite(t.data)):
        raise NumericsError(f"non-finite values in {what}")
    return t


class Adam:
    """Adam with bias correction over a fixed parameter list."""

    def __init__(self, params: list[Tensor], lr: float = 0.001,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g.shape != p.data.shape:
                raise ShapeMismatchError(f"gradient shape {g.shape} vs parameter {p.data.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= (self.lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)

"""Dense/sparse numeric kernel with reverse-mode automatic differentiation.

Tensors wrap contiguous float64 numpy arrays. Operations that involve a
tensor requiring gradients record their parents and a backward closure;
``backward`` on a scalar loss replays the tape in reverse topological order,
visiting each node exactly once. Every public operation checks its result
for NaN/Inf and raises :class:`NonFiniteError` instead of propagating them.

Broadcasting is limited to what the models need: equal shapes, scalars, and
a 1D bias added across the rows of a matrix.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import NonFiniteError


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{op} produced non-finite values")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient over broadcast dimensions back to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fn")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._grad_fn = None
        if requires_grad:
            _check_finite(self.data, "tensor creation")

    # -- construction helpers ------------------------------------------------

    @classmethod
    def _from_op(cls, data, parents, grad_fn, op: str) -> "Tensor":
        _check_finite(data, op)
        needs = any(p.requires_grad for p in parents)
        out = cls(data)
        if needs:
            out.requires_grad = True
            out._parents = tuple(parents)
            out._grad_fn = grad_fn
        return out

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError("item() requires a single-element tensor")
        return float(self.data.flat[0])

    # -- operators -------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)

    # -- backward ----------------------------------------------------------

    def backward(self) -> None:
        """Reverse accumulation from this scalar into leaf ``grad`` fields."""
        if self.data.size != 1:
            raise ValueError("backward requires a scalar loss")
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
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._grad_fn is not None:
                for parent, pg in zip(node._parents, node._grad_fn(g)):
                    if pg is None or not parent.requires_grad:
                        continue
                    key = id(parent)
                    if key in grads:
                        grads[key] = grads[key] + pg
                    else:
                        grads[key] = pg
            elif node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def grad(loss: Tensor, params: list[Tensor]) -> list[np.ndarray]:
    """Gradients of a scalar loss w.r.t. ``params`` (fresh accumulation)."""
    for p in params:
        p.grad = None
    loss.backward()
    return [
        p.grad if p.grad is not None else np.zeros_like(p.data) for p in params
    ]


# -- primitives -------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data
    if data.shape not in (a.shape, b.shape) and a.shape != b.shape:
        raise ValueError(f"unsupported broadcast {a.shape} + {b.shape}")

    def grad_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(data, (a, b), grad_fn, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def grad_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._from_op(data, (a, b), grad_fn, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def grad_fn(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._from_op(data, (a, b), grad_fn, "mul")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def grad_fn(g):
        return g @ b.data.T, a.data.T @ g

    return Tensor._from_op(data, (a, b), grad_fn, "matmul")


def relu(x) -> Tensor:
    x = as_tensor(x)
    keep = x.data > 0
    data = np.where(keep, x.data, 0.0)

    def grad_fn(g):
        return (g * keep,)

    return Tensor._from_op(data, (x,), grad_fn, "relu")


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    data = _sigmoid(x.data)

    def grad_fn(g):
        return (g * data * (1.0 - data),)

    return Tensor._from_op(data, (x,), grad_fn, "sigmoid")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softplus(x) -> Tensor:
    """log(1 + e^x), computed stably."""
    x = as_tensor(x)
    data = np.logaddexp(0.0, x.data)

    def grad_fn(g):
        return (g * _sigmoid(x.data),)

    return Tensor._from_op(data, (x,), grad_fn, "softplus")


def log(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(invalid="ignore", divide="ignore"):
        data = np.log(x.data)

    def grad_fn(g):
        return (g / x.data,)

    return Tensor._from_op(data, (x,), grad_fn, "log")


def exp(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(over="ignore"):
        data = np.exp(x.data)

    def grad_fn(g):
        return (g * data,)

    return Tensor._from_op(data, (x,), grad_fn, "exp")


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(invalid="ignore"):
        data = np.sqrt(x.data)

    def grad_fn(g):
        return (g * 0.5 / data,)

    return Tensor._from_op(data, (x,), grad_fn, "sqrt")


def log_softmax(x) -> Tensor:
    """Row-wise log-softmax of a 2D tensor."""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    data = shifted - lse

    def grad_fn(g):
        softmax = np.exp(data)
        return (g - softmax * g.sum(axis=1, keepdims=True),)

    return Tensor._from_op(data, (x,), grad_fn, "log_softmax")


def tsum(x) -> Tensor:
    x = as_tensor(x)
    data = np.asarray(x.data.sum())

    def grad_fn(g):
        return (np.broadcast_to(g, x.shape).copy(),)

    return Tensor._from_op(data, (x,), grad_fn, "sum")


def tmean(x) -> Tensor:
    x = as_tensor(x)
    data = np.asarray(x.data.mean())
    size = x.data.size

    def grad_fn(g):
        return (np.broadcast_to(g / size, x.shape).copy(),)

    return Tensor._from_op(data, (x,), grad_fn, "mean")


# -- sparse -------------------------------------------------------------------


class SparseMatrix:
    """Immutable CSR matrix. Column indices are strictly increasing per row."""

    def __init__(self, indptr, indices, values, shape):
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        self.shape = (int(shape[0]), int(shape[1]))
        self._validate()
        self._csr = sp.csr_matrix(
            (self.values, self.indices, self.indptr), shape=self.shape
        )
        self._csr_t = None

    def _validate(self):
        if len(self.indptr) != self.shape[0] + 1:
            raise ValueError("indptr length must be rows + 1")
        if self.indptr[0] != 0 or self.indptr[-1] != len(self.indices):
            raise ValueError("indptr must start at 0 and end at nnz")
        if np.any(np.diff(self.indptr) < 0):
            raise ValueError("indptr must be monotone")
        if len(self.indices) != len(self.values):
            raise ValueError("indices and values must align")
        if len(self.indices) and (
            self.indices.min() < 0 or self.indices.max() >= self.shape[1]
        ):
            raise ValueError("column index out of range")
        if len(self.indices) > 1:
            deltas = np.diff(self.indices)
            crossings = self.indptr[1:-1] - 1  # deltas spanning a row boundary
            crossings = crossings[(crossings >= 0) & (crossings < deltas.size)]
            within = np.ones(deltas.size, dtype=bool)
            within[crossings] = False
            if np.any(deltas[within] <= 0):
                raise ValueError("column indices not strictly increasing within a row")

    @classmethod
    def from_coo(cls, rows, cols, vals, shape) -> "SparseMatrix":
        coo = sp.coo_matrix((vals, (rows, cols)), shape=shape)
        csr = coo.tocsr()
        csr.sum_duplicates()
        csr.sort_indices()
        return cls(csr.indptr, csr.indices, csr.data, shape)

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        return cls(np.arange(n + 1), np.arange(n), np.ones(n), (n, n))

    @classmethod
    def block_diag(cls, blocks: list["SparseMatrix"]) -> "SparseMatrix":
        if not blocks:
            raise ValueError("need at least one block")
        rows = sum(b.shape[0] for b in blocks)
        cols = sum(b.shape[1] for b in blocks)
        indptr = [np.zeros(1, dtype=np.int64)]
        indices = []
        values = []
        col_off = 0
        nnz_off = 0
        for b in blocks:
            indptr.append(b.indptr[1:] + nnz_off)
            indices.append(b.indices + col_off)
            values.append(b.values)
            col_off += b.shape[1]
            nnz_off += len(b.values)
        return cls(
            np.concatenate(indptr),
            np.concatenate(indices) if indices else np.zeros(0),
            np.concatenate(values) if values else np.zeros(0),
            (rows, cols),
        )

    def to_dense(self) -> np.ndarray:
        return np.asarray(self._csr.todense(), dtype=np.float64)

    @property
    def nnz(self) -> int:
        return len(self.values)

    def _transposed(self):
        if self._csr_t is None:
            self._csr_t = self._csr.T.tocsr()
        return self._csr_t


def spmm(a: SparseMatrix, h) -> Tensor:
    """Sparse @ dense product, differentiable w.r.t. the dense operand."""
    h = as_tensor(h)
    if h.data.ndim != 2 or a.shape[1] != h.shape[0]:
        raise ValueError(f"spmm shape mismatch {a.shape} @ {h.shape}")
    data = a._csr @ h.data

    def grad_fn(g):
        return (a._transposed() @ g,)

    return Tensor._from_op(data, (h,), grad_fn, "spmm")


def segment_mean(z, graph_ids, num_segments: int) -> Tensor:
    """Row-wise mean per segment; ids must be sorted with no empty segment."""
    z = as_tensor(z)
    ids = np.asarray(graph_ids, dtype=np.int64)
    if z.data.ndim != 2 or len(ids) != z.shape[0]:
        raise ValueError("segment_mean needs one id per row")
    if len(ids) and np.any(np.diff(ids) < 0):
        raise ValueError("graph ids must be sorted")
    counts = np.bincount(ids, minlength=num_segments).astype(np.float64)
    if np.any(counts == 0):
        raise ValueError("empty segment")
    sums = np.zeros((num_segments, z.shape[1]))
    np.add.at(sums, ids, z.data)
    data = sums / counts[:, None]

    def grad_fn(g):
        return (g[ids] / counts[ids][:, None],)

    return Tensor._from_op(data, (z,), grad_fn, "segment_mean")

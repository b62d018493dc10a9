"""Dense reverse-mode automatic differentiation on a define-by-run tape.

Tensors are 2-D float64 matrices. A Tape records every operation whose
inputs touch it; Tape.backward replays the records in reverse, once each,
accumulating vector-Jacobian products into the leaves. Every forward op
validates that its output is finite, so NaN/Inf surface at the op that
produced them instead of corrupting a gradient three calls later.

The engine is deliberately small: exactly the ops needed by a two-layer
graph-convolution encoder, an MLP edge decoder, and the training losses.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .sparse import SparseMatrix


class NonFiniteError(ArithmeticError):
    """An op produced NaN or Inf."""


class Tensor:
    """A 2-D float64 matrix, optionally attached to a tape node."""

    __slots__ = ("values", "tape", "node_id")

    def __init__(self, values: np.ndarray, tape: "Optional[Tape]" = None,
                 node_id: Optional[int] = None):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.ndim != 2:
            raise ValueError(f"tensors are 2-D matrices, got ndim={values.ndim}")
        self.values = values
        self.tape = tape
        self.node_id = node_id

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def item(self) -> float:
        if self.values.size != 1:
            raise ValueError("item() requires a 1x1 tensor")
        return float(self.values[0, 0])

    def __repr__(self):
        tag = "leaf/op" if self.tape is not None else "const"
        return f"Tensor({self.rows}x{self.cols}, {tag})"


def constant(values) -> Tensor:
    """A tensor that participates in ops but receives no gradient."""
    return Tensor(values)


class _Node:
    __slots__ = ("inputs", "vjps")

    def __init__(self, inputs: tuple[int, ...],
                 vjps: tuple[Callable[[np.ndarray], np.ndarray], ...]):
        self.inputs = inputs
        self.vjps = vjps


class Tape:
    """Ordered operation record; recording order is topological order."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self._leaves: list[Tensor] = []

    def leaf(self, values) -> Tensor:
        """Register a differentiable leaf (copies the input array)."""
        t = Tensor(np.array(values, dtype=np.float64, copy=True), tape=self)
        t.node_id = self._push(_Node((), ()))
        self._leaves.append(t)
        return t

    def _push(self, node: _Node) -> int:
        self.nodes.append(node)
        return len(self.nodes) - 1

    def backward(self, loss: Tensor) -> dict[Tensor, np.ndarray]:
        """Accumulate d(loss)/d(leaf) for every leaf on this tape.

        Leaves the loss never touched get an explicit zero gradient.
        """
        if loss.tape is not self:
            raise ValueError("loss was not recorded on this tape")
        if loss.values.shape != (1, 1):
            raise ValueError("backward requires a scalar (1x1) loss")
        grads: list[Optional[np.ndarray]] = [None] * len(self.nodes)
        grads[loss.node_id] = np.ones((1, 1))
        for nid in range(loss.node_id, -1, -1):
            g = grads[nid]
            if g is None:
                continue
            node = self.nodes[nid]
            for inp, vjp in zip(node.inputs, node.vjps):
                contrib = vjp(g)
                if grads[inp] is None:
                    # pass-through vjps return g itself; copy before owning it
                    grads[inp] = contrib.copy() if contrib is g else contrib
                else:
                    grads[inp] += contrib
        out = {}
        for t in self._leaves:
            g = grads[t.node_id]
            out[t] = g if g is not None else np.zeros_like(t.values)
        return out


def _check_finite(values: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(f"{op} produced a non-finite value")
    return values


def _result(op: str, values: np.ndarray, operands: list[Tensor],
            vjps: list[Optional[Callable]]) -> Tensor:
    """Record an op on the (unique) tape of its operands, if any."""
    tape = None
    for t in operands:
        if t.tape is None:
            continue
        if tape is None:
            tape = t.tape
        elif tape is not t.tape:
            raise ValueError(f"{op}: operands recorded on different tapes")
    values = _check_finite(values, op)
    out = Tensor(values, tape=tape)
    if tape is not None:
        inputs, rules = [], []
        for t, vjp in zip(operands, vjps):
            if t.tape is not None and vjp is not None:
                inputs.append(t.node_id)
                rules.append(vjp)
        out.node_id = tape._push(_Node(tuple(inputs), tuple(rules)))
    return out


def _same_shape(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# matrix products
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ValueError(f"matmul: inner dims disagree {a.shape} @ {b.shape}")
    av, bv = a.values, b.values
    return _result("matmul", av @ bv, [a, b],
                   [lambda g: g @ bv.T, lambda g: av.T @ g])


def spmm(s: SparseMatrix, d: Tensor) -> Tensor:
    """Sparse (structure-constant) times dense; gradient flows to d only."""
    out = s.matmul(d.values)
    return _result("spmm", out, [d], [lambda g: s.t_matmul(g)])


def gather_rows(t: Tensor, indices: np.ndarray) -> Tensor:
    """Select rows (duplicates allowed); backward scatter-adds."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ValueError("gather_rows: indices must be 1-D")
    if len(idx) and (idx.min() < 0 or idx.max() >= t.rows):
        raise ValueError("gather_rows: index out of range")
    shape = t.shape

    def vjp(g):
        full = np.zeros(shape)
        np.add.at(full, idx, g)
        return full

    return _result("gather_rows", t.values[idx], [t], [vjp])


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return _result("add", a.values + b.values, [a, b],
                   [lambda g: g, lambda g: g])


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return _result("sub", a.values - b.values, [a, b],
                   [lambda g: g, lambda g: -g])


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard product."""
    _same_shape(a, b, "mul")
    av, bv = a.values, b.values
    return _result("mul", av * bv, [a, b],
                   [lambda g: g * bv, lambda g: g * av])


def mul_scalar(t: Tensor, c: float) -> Tensor:
    c = float(c)
    return _result("mul_scalar", t.values * c, [t], [lambda g: g * c])


def add_scalar(t: Tensor, c: float) -> Tensor:
    return _result("add_scalar", t.values + float(c), [t], [lambda g: g])


def relu(t: Tensor) -> Tensor:
    # subgradient at exactly 0 is 0
    mask = t.values > 0.0
    return _result("relu", np.where(mask, t.values, 0.0), [t],
                   [lambda g: g * mask])


def sigmoid(t: Tensor) -> Tensor:
    v = t.values
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return _result("sigmoid", out, [t], [lambda g: g * out * (1.0 - out)])


def log(t: Tensor) -> Tensor:
    if np.any(t.values <= 0.0):
        raise ValueError("log requires strictly positive inputs")
    v = t.values
    return _result("log", np.log(v), [t], [lambda g: g / v])


def square(t: Tensor) -> Tensor:
    v = t.values
    return _result("square", v * v, [t], [lambda g: 2.0 * v * g])


def clamp(t: Tensor, lo: float, hi: float) -> Tensor:
    """Clip to [lo, hi]; gradient passes only strictly inside the bounds."""
    v = t.values
    mask = (v > lo) & (v < hi)
    return _result("clamp", np.clip(v, lo, hi), [t], [lambda g: g * mask])


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def _nonempty(t: Tensor, op: str):
    if t.values.size == 0:
        raise ValueError(f"{op} of an empty tensor")


def reduce_sum(t: Tensor) -> Tensor:
    _nonempty(t, "sum")
    shape = t.shape
    return _result("sum", np.array([[t.values.sum()]]), [t],
                   [lambda g: np.full(shape, g[0, 0])])


def reduce_mean(t: Tensor) -> Tensor:
    _nonempty(t, "mean")
    shape = t.shape
    n = t.values.size
    return _result("mean", np.array([[t.values.mean()]]), [t],
                   [lambda g: np.full(shape, g[0, 0] / n)])


def row_sum(t: Tensor) -> Tensor:
    """N x D -> N x 1 column of row sums."""
    _nonempty(t, "row_sum")
    cols = t.cols
    return _result("row_sum", t.values.sum(axis=1, keepdims=True), [t],
                   [lambda g: np.repeat(g, cols, axis=1)])


# ---------------------------------------------------------------------------
# row-wise cosine similarity
# ---------------------------------------------------------------------------

def cosine_rows(a: Tensor, b: Tensor, eps: float = 1e-12) -> Tensor:
    """Per-row cosine similarity, N x 1.

    Row norms are clamped below by eps, so zero rows score 0 instead of
    dividing by zero. Rows at or below the clamp get zero gradient: their
    direction is undefined, and the callers mask such rows out anyway.
    """
    _same_shape(a, b, "cosine_rows")
    av, bv = a.values, b.values
    na = np.sqrt((av * av).sum(axis=1, keepdims=True))
    nb = np.sqrt((bv * bv).sum(axis=1, keepdims=True))
    ca = np.maximum(na, eps)
    cb = np.maximum(nb, eps)
    dot = (av * bv).sum(axis=1, keepdims=True)
    r = dot / (ca * cb)

    def vjp_a(g):
        live = na > eps
        safe = np.where(live, na, 1.0)
        return np.where(live, g * (bv / (ca * cb) - dot * av / (safe ** 2 * ca * cb)), 0.0)

    def vjp_b(g):
        live = nb > eps
        safe = np.where(live, nb, 1.0)
        return np.where(live, g * (av / (ca * cb) - dot * bv / (safe ** 2 * cb * ca)), 0.0)

    return _result("cosine_rows", r, [a, b], [vjp_a, vjp_b])


# ---------------------------------------------------------------------------
# finite-difference oracle
# ---------------------------------------------------------------------------

def finite_diff_check(f, params: dict[str, np.ndarray], h: float = 1e-5) -> float:
    """Compare reverse-mode gradients of f against central differences.

    f maps a dict of leaf Tensors (same keys as params) to a scalar Tensor
    on a fresh tape, and must be deterministic. Returns the worst relative
    error across all coordinates, where each parameter block is normalized
    by max(|grad_ad|, |grad_fd|, 1e-8) over the block so that coordinates
    with tiny gradients are judged against the block's scale, not their own.
    """
    if h <= 0.0:
        raise ValueError("finite differences require h > 0")

    tape = Tape()
    leaves = {k: tape.leaf(v) for k, v in params.items()}
    loss = f(leaves)
    grad_map = tape.backward(loss)
    ad = {k: grad_map[leaves[k]] for k in params}

    def value_at(p: dict[str, np.ndarray]) -> float:
        t = Tape()
        lv = {k: t.leaf(v) for k, v in p.items()}
        out = f(lv)
        val = out.item()
        if not np.isfinite(val):
            raise NonFiniteError("finite_diff_check: non-finite evaluation")
        return val

    worst = 0.0
    for key in params:
        base = np.array(params[key], dtype=np.float64, copy=True)
        fd = np.zeros_like(base)
        flat = base.reshape(-1)
        perturbed = {k: (v if k != key else base) for k, v in params.items()}
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = value_at(perturbed)
            flat[i] = orig - h
            down = value_at(perturbed)
            flat[i] = orig
            fd.reshape(-1)[i] = (up - down) / (2.0 * h)
        scale = max(np.abs(ad[key]).max(initial=0.0),
                    np.abs(fd).max(initial=0.0), 1e-8)
        err = np.abs(ad[key] - fd).max(initial=0.0) / scale
        worst = max(worst, err)
    return worst

"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

A Tape records operations in execution order (a Wengert list); backward()
replays it once in reverse, accumulating vector-Jacobian products. Tensors
are thin wrappers around numpy arrays. There is no broadcasting beyond
scalar-tensor; shape mismatches raise immediately instead of silently
broadcasting.

Typical use::

    with Tape() as tape:
        y = matmul(w, x)
        loss = asum(y * y)
    grads = tape.backward(loss)   # {leaf: ndarray}

Ops executed with no tape active run as plain numpy (inference fast path).
"""

from __future__ import annotations

import threading

import numpy as np

from .errors import NonFiniteValue, NotScalar, ShapeMismatch

_state = threading.local()

_CHECK_FINITE = False


def set_check_finite(on: bool) -> None:
    """Toggle NaN/Inf detection on every op output (slow, for debugging)."""
    global _CHECK_FINITE
    _CHECK_FINITE = bool(on)


def _active_tape():
    return getattr(_state, "tape", None)


class Tensor:
    """Dense float64 tensor, optionally tracked on the active tape."""

    __slots__ = ("data", "requires_grad", "node_id", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.node_id = None
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise NotScalar(f"item() on shape {self.data.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """Constant view of this tensor; gradients do not flow through it."""
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    # operator sugar; scalars are allowed, other tensors must match shape
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        # other - self with other a scalar
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _const_like(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of operations for one backward pass.

    Entries are appended in execution order, so iterating them in reverse
    is a valid topological order; each node's adjoint is final when its
    recording op is visited.
    """

    def __init__(self):
        self._entries = []  # (out_id, in_ids, backward_fn)
        self._n_nodes = 0
        self._leaves = []  # leaf Tensors registered on this tape

    # -- context manager installs this tape as the thread's active tape --

    def __enter__(self):
        if _active_tape() is not None:
            raise RuntimeError("a Tape is already active on this thread")
        _state.tape = self
        return self

    def __exit__(self, *exc):
        _state.tape = None
        return False

    def _new_node(self) -> int:
        nid = self._n_nodes
        self._n_nodes += 1
        return nid

    def watch(self, t: Tensor) -> Tensor:
        """Register a leaf; it will appear in the gradient map."""
        if t.node_id is None:
            t.node_id = self._new_node()
            self._leaves.append(t)
        return t

    def _track(self, t: Tensor):
        # leaves with requires_grad are registered lazily on first use
        if t.node_id is None and t.requires_grad:
            self.watch(t)
        return t.node_id

    def record(self, out: Tensor, inputs, backward_fn):
        in_ids = [t.node_id for t in inputs]
        if all(i is None for i in in_ids):
            return out  # nothing tracked, no need to record
        out.node_id = self._new_node()
        self._entries.append((out.node_id, in_ids, backward_fn))
        return out

    def backward(self, loss: Tensor) -> dict:
        """Accumulate d(loss)/d(leaf) for every watched leaf.

        Returns a mapping Tensor -> ndarray and also sets leaf.grad.
        Unreached leaves get zeros.
        """
        if loss.data.size != 1:
            raise NotScalar(f"loss has shape {loss.data.shape}")
        adj = {}
        borrowed = set()  # adjoints aliasing a producer's output; copy-on-write
        if loss.node_id is not None:
            adj[loss.node_id] = np.ones_like(loss.data)
        for out_id, in_ids, backward_fn in reversed(self._entries):
            g = adj.pop(out_id, None)
            borrowed.discard(out_id)
            if g is None:
                continue
            for nid, gin in zip(in_ids, backward_fn(g)):
                if nid is None or gin is None:
                    continue
                if nid in adj:
                    if nid in borrowed:
                        adj[nid] = adj[nid] + gin
                        borrowed.discard(nid)
                    else:
                        adj[nid] += gin
                else:
                    adj[nid] = gin
                    borrowed.add(nid)
        grads = {}
        for leaf in self._leaves:
            g = adj.get(leaf.node_id)
            if g is None:
                g = np.zeros_like(leaf.data)
            leaf.grad = g
            grads[leaf] = g
        return grads


# --------------------------------------------------------------------------
# op plumbing
# --------------------------------------------------------------------------


def _finish(out_data, inputs, backward_fn) -> Tensor:
    if _CHECK_FINITE and not np.all(np.isfinite(out_data)):
        raise NonFiniteValue("op produced NaN/Inf")
    out = Tensor(out_data)
    tape = _active_tape()
    if tape is not None:
        tracked = [t for t in inputs]
        ids = [tape._track(t) for t in tracked]
        if any(i is not None for i in ids):
            tape.record(out, tracked, backward_fn)
    return out


def _check_same_shape(a: Tensor, b: Tensor, op: str):
    if a.data.shape != b.data.shape:
        raise ShapeMismatch(f"{op}: {a.data.shape} vs {b.data.shape}")


# --------------------------------------------------------------------------
# elementwise arithmetic
# --------------------------------------------------------------------------


def add(a, b) -> Tensor:
    if not isinstance(b, Tensor):
        a = _const_like(a)
        s = float(b)
        return _finish(a.data + s, [a], lambda g: (g,))
    a = _const_like(a)
    _check_same_shape(a, b, "add")
    return _finish(a.data + b.data, [a, b], lambda g: (g, g))


def sub(a, b) -> Tensor:
    if not isinstance(b, Tensor):
        a = _const_like(a)
        s = float(b)
        return _finish(a.data - s, [a], lambda g: (g,))
    a = _const_like(a)
    _check_same_shape(a, b, "sub")
    return _finish(a.data - b.data, [a, b], lambda g: (g, -g))


def mul(a, b) -> Tensor:
    if not isinstance(b, Tensor):
        a = _const_like(a)
        s = float(b)
        return _finish(a.data * s, [a], lambda g: (g * s,))
    a = _const_like(a)
    _check_same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return _finish(ad * bd, [a, b], lambda g: (g * bd, g * ad))


def div(a, b) -> Tensor:
    if not isinstance(b, Tensor):
        a = _const_like(a)
        s = float(b)
        return _finish(a.data / s, [a], lambda g: (g / s,))
    a = _const_like(a)
    _check_same_shape(a, b, "div")
    ad, bd = a.data, b.data
    out = ad / bd
    return _finish(out, [a, b], lambda g: (g / bd, -g * ad / (bd * bd)))


# --------------------------------------------------------------------------
# elementwise nonlinearities
# --------------------------------------------------------------------------


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _finish(out, [a], lambda g: (g * out,))


def reciprocal(a: Tensor) -> Tensor:
    out = 1.0 / a.data
    return _finish(out, [a], lambda g: (-g * out * out,))


def softplus(a: Tensor) -> Tensor:
    # log(1 + e^x) computed stably for both signs of x
    x = a.data
    out = np.logaddexp(0.0, x)
    sig = 1.0 / (1.0 + np.exp(-x))
    return _finish(out, [a], lambda g: (g * sig,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                   np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    return _finish(out, [a], lambda g: (g * out * (1.0 - out),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _finish(a.data * mask, [a], lambda g: (g * mask,))


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise min; on ties the gradient goes to the first argument."""
    _check_same_shape(a, b, "minimum")
    take_a = a.data <= b.data
    out = np.where(take_a, a.data, b.data)
    return _finish(out, [a, b], lambda g: (g * take_a, g * ~take_a))


# --------------------------------------------------------------------------
# linear algebra
# --------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    if ad.ndim == 2 and bd.ndim == 2:
        if ad.shape[1] != bd.shape[0]:
            raise ShapeMismatch(f"matmul: {ad.shape} @ {bd.shape}")
        out = ad @ bd

        def bwd(g):
            return g @ bd.T, ad.T @ g

        return _finish(out, [a, b], bwd)
    if ad.ndim == 2 and bd.ndim == 1:
        if ad.shape[1] != bd.shape[0]:
            raise ShapeMismatch(f"matmul: {ad.shape} @ {bd.shape}")
        out = ad @ bd

        def bwd(g):
            return np.outer(g, bd), ad.T @ g

        return _finish(out, [a, b], bwd)
    if ad.ndim == 1 and bd.ndim == 2:
        if ad.shape[0] != bd.shape[0]:
            raise ShapeMismatch(f"matmul: {ad.shape} @ {bd.shape}")
        out = ad @ bd

        def bwd(g):
            return bd @ g, np.outer(ad, g)

        return _finish(out, [a, b], bwd)
    raise ShapeMismatch(f"matmul: unsupported ranks {ad.ndim} and {bd.ndim}")


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeMismatch("transpose expects a matrix")
    return _finish(a.data.T.copy(), [a], lambda g: (g.T,))


# --------------------------------------------------------------------------
# reductions and shaping
# --------------------------------------------------------------------------


def asum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = a.data.shape
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, shape).copy(),)

    return _finish(out, [a], bwd)


def amean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = a.data.shape
    n = a.data.size if axis is None else shape[axis]
    out = a.data.mean(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g / n, shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg / n, shape).copy(),)

    return _finish(out, [a], bwd)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.data.shape
    return _finish(a.data.reshape(shape).copy(), [a],
                   lambda g: (g.reshape(old),))


def concat(tensors, axis: int = 0) -> Tensor:
    datas = [t.data for t in tensors]
    out = np.concatenate(datas, axis=axis)
    sizes = [d.shape[axis] for d in datas]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.array_split(g, splits, axis=axis))

    return _finish(out, list(tensors), bwd)


def slice_cols(a: Tensor, j0: int, j1: int) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeMismatch("slice_cols expects a matrix")
    shape = a.data.shape
    out = a.data[:, j0:j1].copy()

    def bwd(g):
        full = np.zeros(shape)
        full[:, j0:j1] = g
        return (full,)

    return _finish(out, [a], bwd)


# --------------------------------------------------------------------------
# softmax family
# --------------------------------------------------------------------------


def row_softmax(a: Tensor) -> Tensor:
    """Softmax along the last axis of a matrix."""
    if a.data.ndim != 2:
        raise ShapeMismatch("row_softmax expects a matrix")
    z = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=1, keepdims=True)

    def bwd(g):
        dot = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - dot),)

    return _finish(out, [a], bwd)


def masked_softmax(scores: Tensor, mask: np.ndarray) -> Tensor:
    """Softmax of a score vector restricted to mask==1 entries.

    Off-mask outputs are exactly zero and receive zero gradient. The mask is
    a plain binary array, never differentiated. Stable for arbitrarily
    negative scores (max-shift inside the masked support).
    """
    if scores.data.ndim != 1 or scores.data.shape != mask.shape:
        raise ShapeMismatch(f"masked_softmax: {scores.data.shape} vs mask {mask.shape}")
    m = mask.astype(bool)
    if not m.any():
        raise ShapeMismatch("masked_softmax: empty mask")
    z = scores.data
    shift = z[m].max()
    # clamp keeps excluded entries from overflowing before the mask zeroes them
    e = np.where(m, np.exp(np.minimum(z - shift, 0.0)), 0.0)
    out = e / e.sum()

    def bwd(g):
        dot = float((g * out).sum())
        return (out * (g - dot),)

    return _finish(out, [scores], bwd)


def one_hot_argmax_st(w: Tensor) -> Tensor:
    """Hard argmax as a one-hot vector; straight-through identity backward.

    Ties resolve to the lowest index (numpy argmax convention).
    """
    if w.data.ndim != 1:
        raise ShapeMismatch("one_hot_argmax_st expects a vector")
    out = np.zeros_like(w.data)
    out[int(np.argmax(w.data))] = 1.0
    return _finish(out, [w], lambda g: (g,))


# --------------------------------------------------------------------------
# message passing helpers
# --------------------------------------------------------------------------


def pick(a: Tensor, idx: int) -> Tensor:
    """Scalar a[idx] from a vector; backward scatters into a zero vector.

    Unlike mul-by-onehot this never touches the other entries, so +inf
    sentinels elsewhere in `a` cannot poison the forward value.
    """
    if a.data.ndim != 1:
        raise ShapeMismatch("pick expects a vector")
    shape = a.data.shape
    i = int(idx)
    out = np.asarray(a.data[i])

    def bwd(g):
        full = np.zeros(shape)
        full[i] = g
        return (full,)

    return _finish(out, [a], bwd)


def broadcast_scalar(a: Tensor, n: int) -> Tensor:
    """Repeat a scalar into an n-vector; backward sums."""
    if a.data.size != 1:
        raise ShapeMismatch("broadcast_scalar expects a scalar")
    out = np.full(n, float(a.data.reshape(())))
    return _finish(out, [a], lambda g: (np.asarray(g.sum()),))


def gather_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    """Select rows a[idx]; backward scatter-adds into the source rows."""
    shape = a.data.shape
    out = a.data[idx]

    def bwd(g):
        full = np.zeros(shape)
        np.add.at(full, idx, g)
        return (full,)

    return _finish(out, [a], bwd)


def scatter_add_rows(msgs: Tensor, idx: np.ndarray, n_rows: int) -> Tensor:
    """Accumulate msgs[k] into row idx[k] of an n_rows output."""
    out = np.zeros((n_rows,) + msgs.data.shape[1:])
    np.add.at(out, idx, msgs.data)
    return _finish(out, [msgs], lambda g: (g[idx],))


def add_rowvec(a: Tensor, b: Tensor) -> Tensor:
    """Matrix plus a row vector (explicit bias broadcast)."""
    if a.data.ndim != 2 or b.data.ndim != 1 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeMismatch(f"add_rowvec: {a.data.shape} + {b.data.shape}")
    return _finish(a.data + b.data, [a, b], lambda g: (g, g.sum(axis=0)))


def layer_norm_rows(a: Tensor, gamma: Tensor, beta: Tensor,
                    eps: float = 1e-5) -> Tensor:
    """Per-row layer normalization with affine parameters."""
    x = a.data
    if x.ndim != 2:
        raise ShapeMismatch("layer_norm_rows expects a matrix")
    d = x.shape[1]
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def bwd(g):
        gg = g * gamma.data
        gx = inv * (gg - gg.mean(axis=1, keepdims=True)
                    - xhat * (gg * xhat).mean(axis=1, keepdims=True))
        return gx, (g * xhat).sum(axis=0), g.sum(axis=0)

    return _finish(out, [a, gamma, beta], bwd)


def backward(loss: Tensor) -> dict:
    """Convenience wrapper: backward on the thread's active tape."""
    tape = _active_tape()
    if tape is None:
        raise RuntimeError("no active Tape")
    return tape.backward(loss)

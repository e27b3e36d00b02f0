"""Minimal reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps an ndarray plus a backward closure; calling backward() on a
scalar loss walks the tape in reverse topological order and accumulates
gradients into every reachable parameter. Only the primitives the models
need are provided, each with a hand-derived adjoint:

    add / mul / matmul / reshape / concat / sum / mean
    leaky_relu, conv2d (stride/pad), batch_norm, pixel_norm,
    upsample_nearest, gather / scatter_sum over graph edges,
    edge_softmax (neighbourhood softmax), mse_loss

Gradient accumulation order is fixed by construction order, so runs are
bit-reproducible.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse

from .errors import NumericError, ShapeError


class Tensor:
    __slots__ = ("value", "grad", "parents", "_backward", "requires_grad")

    def __init__(self, value, parents=(), backward=None, requires_grad=False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = tuple(parents)
        self._backward = backward
        self.requires_grad = requires_grad or any(p.requires_grad for p in self.parents)

    @property
    def shape(self):
        return self.value.shape

    def accumulate(self, grad, owned: bool = False):
        # ``owned`` promises the array is freshly allocated and unaliased,
        # so it can be adopted without a defensive copy
        if self.grad is None:
            self.grad = grad if owned else np.array(grad)
        else:
            self.grad += grad

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self.value.size != 1:
            raise ShapeError("backward() needs a scalar loss")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def parameter(value) -> Tensor:
    return Tensor(np.array(value, dtype=np.float64), requires_grad=True)


def constant(value) -> Tensor:
    return Tensor(value)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad, shape):
    # reduce a broadcast gradient back to the operand's shape
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.value + b.value, (a, b))

    def backward(g):
        if a.requires_grad:
            ga = _unbroadcast(g, a.value.shape)
            a.accumulate(ga, owned=ga is not g)
        if b.requires_grad:
            gb = _unbroadcast(g, b.value.shape)
            b.accumulate(gb, owned=gb is not g)

    out._backward = backward
    return out


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.value * b.value, (a, b))

    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g * b.value, a.value.shape), owned=True)
        if b.requires_grad:
            b.accumulate(_unbroadcast(g * a.value, b.value.shape), owned=True)

    out._backward = backward
    return out


def matmul(a, b) -> Tensor:
    """a @ b for a (n,k) or (batch,n,k) against b (k,m)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.value.ndim not in (2, 3) or b.value.ndim != 2:
        raise ShapeError(f"matmul supports (n,k)|(B,n,k) @ (k,m); got {a.shape} @ {b.shape}")
    if a.value.shape[-1] != b.value.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out = Tensor(a.value @ b.value, (a, b))

    def backward(g):
        if a.requires_grad:
            a.accumulate(g @ b.value.T, owned=True)
        if b.requires_grad:
            if a.value.ndim == 2:
                b.accumulate(a.value.T @ g, owned=True)
            else:
                b.accumulate(np.tensordot(a.value, g, axes=([0, 1], [0, 1])), owned=True)

    out._backward = backward
    return out


def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(x.value.reshape(shape), (x,))

    def backward(g):
        if x.requires_grad:
            x.accumulate(g.reshape(x.value.shape))

    out._backward = backward
    return out


def concat(tensors, axis=-1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.value for t in tensors], axis=axis), tuple(tensors))
    sizes = [t.value.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            if t.requires_grad:
                t.accumulate(piece)

    out._backward = backward
    return out


def tsum(x, axis=None, keepdims=False) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(x.value.sum(axis=axis, keepdims=keepdims), (x,))

    def backward(g):
        if not x.requires_grad:
            return
        if axis is None:
            x.accumulate(np.broadcast_to(g, x.value.shape).copy(), owned=True)
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        x.accumulate(np.broadcast_to(g, x.value.shape).copy(), owned=True)

    out._backward = backward
    return out


def tmean(x, axis=None, keepdims=False) -> Tensor:
    x = _as_tensor(x)
    count = x.value.size if axis is None else x.value.shape[axis]
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def dot_lastaxis(x, a) -> Tensor:
    """Per-head feature dot: (B,N,H,F) x (H,F) -> (B,N,H).

    Equivalent to mul + sum over the last axis, fused to avoid the large
    broadcast intermediate on the forward pass.
    """
    x, a = _as_tensor(x), _as_tensor(a)
    if x.value.ndim != 4 or a.value.ndim != 2 or x.value.shape[2:] != a.value.shape:
        raise ShapeError(f"dot_lastaxis needs (B,N,H,F) x (H,F); got {x.shape} x {a.shape}")
    b, n, h, f = x.value.shape
    xt = x.value.transpose(0, 2, 1, 3)  # (B,H,N,F) view
    out_val = np.matmul(xt, a.value[:, :, None])[..., 0].transpose(0, 2, 1)
    out = Tensor(np.ascontiguousarray(out_val), (x, a))

    def backward(g):
        if x.requires_grad:
            x.accumulate(g[..., None] * a.value, owned=True)
        if a.requires_grad:
            a.accumulate(np.einsum("bnh,bnhf->hf", g, x.value), owned=True)

    out._backward = backward
    return out


def scale_lastdim(x, s) -> Tensor:
    """(B,E,H,F) scaled per (B,E,H); fused mul avoiding the reduce pass."""
    x, s = _as_tensor(x), _as_tensor(s)
    if x.value.ndim != 4 or s.value.shape != x.value.shape[:3]:
        raise ShapeError(f"scale_lastdim needs (B,E,H,F) x (B,E,H); got {x.shape} x {s.shape}")
    out = Tensor(x.value * s.value[..., None], (x, s))

    def backward(g):
        if x.requires_grad:
            x.accumulate(g * s.value[..., None], owned=True)
        if s.requires_grad:
            gs = np.matmul(g[..., None, :], x.value[..., :, None])[..., 0, 0]
            s.accumulate(gs, owned=True)

    out._backward = backward
    return out


def leaky_relu(x, slope: float = 0.2) -> Tensor:
    x = _as_tensor(x)
    pos = x.value > 0
    out = Tensor(np.where(pos, x.value, slope * x.value), (x,))

    def backward(g):
        if x.requires_grad:
            x.accumulate(np.where(pos, g, slope * g), owned=True)

    out._backward = backward
    return out


# ---------------------------------------------------------------------------
# convolution

def _im2col(xp, kh, kw, stride, h_out, w_out):
    n, c = xp.shape[:2]
    cols = np.empty((n, c, kh, kw, h_out, w_out))
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + stride * h_out : stride,
                                  j : j + stride * w_out : stride]
    return cols


def conv2d(x, w, b=None, stride: int = 1, pad: int = 0) -> Tensor:
    """2D convolution, NCHW layout, kernel (F, C, kh, kw)."""
    x, w = _as_tensor(x), _as_tensor(w)
    if x.value.ndim != 4 or w.value.ndim != 4:
        raise ShapeError(f"conv2d needs 4D input/kernel, got {x.shape} and {w.shape}")
    n, c, h, wd = x.value.shape
    f, c_k, kh, kw = w.value.shape
    if c != c_k:
        raise ShapeError(f"conv2d channels differ: input {c}, kernel {c_k}")
    h_out = (h + 2 * pad - kh) // stride + 1
    w_out = (wd + 2 * pad - kw) // stride + 1
    if h_out < 1 or w_out < 1:
        raise ShapeError("conv2d output would be empty")
    xp = np.pad(x.value, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.value
    cols = _im2col(xp, kh, kw, stride, h_out, w_out)
    cols2 = np.ascontiguousarray(cols.reshape(n, c * kh * kw, h_out * w_out))
    wf = w.value.reshape(f, c * kh * kw)
    out_val = np.matmul(wf, cols2).reshape(n, f, h_out, w_out)
    parents = (x, w)
    if b is not None:
        b = _as_tensor(b)
        out_val = out_val + b.value.reshape(1, f, 1, 1)
        parents = (x, w, b)
    out = Tensor(out_val, parents)

    def backward(g):
        gf = np.ascontiguousarray(g.reshape(n, f, h_out * w_out))
        if b is not None and b.requires_grad:
            b.accumulate(g.sum(axis=(0, 2, 3)), owned=True)
        if w.requires_grad:
            gw = np.tensordot(gf, cols2, axes=([0, 2], [0, 2]))
            w.accumulate(gw.reshape(f, c, kh, kw), owned=True)
        if x.requires_grad:
            gcols = np.matmul(wf.T, gf).reshape(n, c, kh, kw, h_out, w_out)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + stride * h_out : stride,
                        j : j + stride * w_out : stride] += gcols[:, :, i, j]
            x.accumulate(np.ascontiguousarray(gxp[:, :, pad : pad + h, pad : pad + wd]) if pad else gxp, owned=True)

    out._backward = backward
    return out


def upsample_nearest(x, factor: int = 2) -> Tensor:
    x = _as_tensor(x)
    if x.value.ndim != 4:
        raise ShapeError("upsample_nearest needs NCHW input")
    out = Tensor(x.value.repeat(factor, axis=2).repeat(factor, axis=3), (x,))
    n, c, h, wd = x.value.shape

    def backward(g):
        if x.requires_grad:
            g4 = g.reshape(n, c, h, factor, wd, factor)
            x.accumulate(g4.sum(axis=(3, 5)), owned=True)

    out._backward = backward
    return out


# ---------------------------------------------------------------------------
# normalizations

def batch_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize per channel (axis 1) over batch and spatial axes."""
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    nd = x.value.ndim
    if nd not in (2, 4):
        raise ShapeError(f"batch_norm expects (N,F) or (N,C,H,W), got {x.shape}")
    axes = (0,) if nd == 2 else (0, 2, 3)
    c = x.value.shape[1]
    if gamma.value.shape != (c,) or beta.value.shape != (c,):
        raise ShapeError("gamma/beta must have one entry per channel")
    bshape = (1, c) if nd == 2 else (1, c, 1, 1)
    m = x.value.mean(axis=axes, keepdims=True)
    v = x.value.var(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(v + eps)
    xhat = (x.value - m) * inv
    out = Tensor(gamma.value.reshape(bshape) * xhat + beta.value.reshape(bshape),
                 (x, gamma, beta))
    count = x.value.size // c

    def backward(g):
        if beta.requires_grad:
            beta.accumulate(g.sum(axis=axes), owned=True)
        if gamma.requires_grad:
            gamma.accumulate((g * xhat).sum(axis=axes), owned=True)
        if x.requires_grad:
            gxh = g * gamma.value.reshape(bshape)
            s1 = gxh.sum(axis=axes, keepdims=True)
            s2 = (gxh * xhat).sum(axis=axes, keepdims=True)
            x.accumulate(inv * (gxh - (s1 + xhat * s2) / count), owned=True)

    out._backward = backward
    return out


def pixel_norm(x, eps: float = 1e-8) -> Tensor:
    """x / sqrt(mean over channels of x^2 + eps), channel axis 1."""
    x = _as_tensor(x)
    if x.value.ndim < 2:
        raise ShapeError("pixel_norm needs a channel axis")
    c = x.value.shape[1]
    m = np.mean(x.value**2, axis=1, keepdims=True)
    r = 1.0 / np.sqrt(m + eps)
    out = Tensor(x.value * r, (x,))

    def backward(g):
        if x.requires_grad:
            dot = np.sum(g * x.value, axis=1, keepdims=True)
            x.accumulate(r * g - (r**3 / c) * x.value * dot, owned=True)

    out._backward = backward
    return out


# ---------------------------------------------------------------------------
# graph ops: edge gather / scatter and neighbourhood softmax
#
# Segment sums over edges are sparse matrix products (CSR row order is
# fixed, so accumulation is deterministic); segment max uses a sorted-run
# reduction.

def _segment_sum(values2d, index, n_bins):
    """Sum (E, D) rows into (n_bins, D) groups."""
    e = values2d.shape[0]
    s = sparse.csr_matrix(
        (np.ones(e), (index, np.arange(e, dtype=np.int64))), shape=(n_bins, e)
    )
    return s @ values2d


def _segment_max(values2d, index, n_bins, fill=-np.inf):
    """Max-reduce (E, D) rows into (n_bins, D) groups via ``reduceat``."""
    index = np.asarray(index, dtype=np.int64)
    if index.size and np.all(index[1:] >= index[:-1]):
        rows, sorted_idx = values2d, index
    else:
        order = np.argsort(index, kind="stable")
        rows, sorted_idx = values2d[order], index[order]
    starts = np.flatnonzero(np.append(True, sorted_idx[1:] != sorted_idx[:-1]))
    out = np.full((n_bins, values2d.shape[1]), fill)
    if rows.shape[0]:
        out[sorted_idx[starts]] = np.maximum.reduceat(rows, starts, axis=0)
    return out


def _edge_matrix(x):
    """(B, E, ...) -> contiguous (E, B*rest) plus a restorer."""
    moved = np.moveaxis(x, 1, 0)
    shape = moved.shape
    flat = np.ascontiguousarray(moved).reshape(shape[0], -1)

    def restore(arr2d):
        return np.moveaxis(arr2d.reshape(shape), 0, 1)

    return flat, restore


def gather_nodes(x, index) -> Tensor:
    """Select rows along the node axis: (B,N,...) -> (B,E,...) via x[:, index]."""
    x = _as_tensor(x)
    index = np.asarray(index, dtype=np.int64)
    out = Tensor(x.value[:, index], (x,))

    def backward(g):
        if x.requires_grad:
            n = x.value.shape[1]
            g2, _ = _edge_matrix(g)
            acc = _segment_sum(g2, index, n)
            gx = np.moveaxis(acc.reshape((n,) + g.shape[:1] + g.shape[2:]), 0, 1)
            x.accumulate(np.ascontiguousarray(gx), owned=True)

    out._backward = backward
    return out


def scatter_sum(x, index, n_nodes: int) -> Tensor:
    """Sum edge values into node bins: (B,E,...) -> (B,N,...)."""
    x = _as_tensor(x)
    index = np.asarray(index, dtype=np.int64)
    x2, _ = _edge_matrix(x.value)
    acc = _segment_sum(x2, index, n_nodes)
    out_shape = (n_nodes,) + (x.value.shape[0],) + x.value.shape[2:]
    out = Tensor(np.ascontiguousarray(np.moveaxis(acc.reshape(out_shape), 0, 1)), (x,))

    def backward(g):
        if x.requires_grad:
            x.accumulate(g[:, index], owned=True)  # fancy indexing copies

    out._backward = backward
    return out


def edge_softmax(scores, dst, n_nodes: int) -> Tensor:
    """Softmax over all edges sharing a destination node; (B,E,H) -> (B,E,H)."""
    scores = _as_tensor(scores)
    dst = np.asarray(dst, dtype=np.int64)
    s2, restore = _edge_matrix(scores.value)
    seg_max = _segment_max(s2, dst, n_nodes)
    ex = np.exp(s2 - seg_max[dst])
    denom = _segment_sum(ex, dst, n_nodes)
    alpha2 = ex / denom[dst]
    out = Tensor(restore(alpha2), (scores,))

    def backward(g):
        if scores.requires_grad:
            g2, _ = _edge_matrix(g)
            weighted = _segment_sum(alpha2 * g2, dst, n_nodes)
            gs = restore(alpha2 * (g2 - weighted[dst]))
            scores.accumulate(np.ascontiguousarray(gs), owned=True)

    out._backward = backward
    return out


# ---------------------------------------------------------------------------
# loss

def mse_loss(pred, target, mask=None) -> Tensor:
    """Mean squared error; with a mask, mean over masked entries only."""
    pred = _as_tensor(pred)
    target = np.asarray(target, dtype=np.float64)
    if pred.value.shape != target.shape:
        raise ShapeError(f"mse_loss shapes differ: {pred.value.shape} vs {target.shape}")
    diff = pred.value - target
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), diff.shape)
        count = int(np.count_nonzero(mask))
        if count == 0:
            raise ShapeError("mse_loss mask selects nothing")
        diff = np.where(mask, diff, 0.0)
    else:
        count = diff.size
    out = Tensor(np.sum(diff * diff) / count, (pred,))

    def backward(g):
        if pred.requires_grad:
            pred.accumulate((2.0 / count) * diff * g, owned=True)

    out._backward = backward
    return out


def check_finite(t: Tensor, where: str = "") -> Tensor:
    if not np.all(np.isfinite(t.value)):
        raise NumericError(f"non-finite values in forward pass {where}".strip())
    return t


# ---------------------------------------------------------------------------
# finite-difference verification

def gradcheck(build_loss, params, eps: float = 1e-6, rtol: float = 1e-4,
              atol: float = 1e-7, max_entries: int = None, rng=None):
    """Compare analytic gradients of ``build_loss()`` (a fresh scalar Tensor
    per call) against central finite differences for every parameter entry.

    Returns the worst (absolute_error, reference) pair; raises AssertionError
    on the first mismatch so test output names the offending parameter.
    """
    for p in params:
        p.zero_grad()
    loss = build_loss()
    loss.backward()
    analytic = [None if p.grad is None else p.grad.copy() for p in params]
    worst = (0.0, 0.0)
    for pi, p in enumerate(params):
        flat = p.value.reshape(-1)
        n = flat.size
        if max_entries is not None and n > max_entries:
            picker = rng if rng is not None else np.random.default_rng(0)
            idx_iter = picker.choice(n, size=max_entries, replace=False)
        else:
            idx_iter = range(n)
        ag = np.zeros_like(flat) if analytic[pi] is None else analytic[pi].reshape(-1)
        for k in idx_iter:
            orig = flat[k]
            flat[k] = orig + eps
            up = float(build_loss().value)
            flat[k] = orig - eps
            dn = float(build_loss().value)
            flat[k] = orig
            numeric = (up - dn) / (2 * eps)
            err = abs(ag[k] - numeric)
            tol = atol + rtol * max(abs(ag[k]), abs(numeric))
            if err > tol:
                raise AssertionError(
                    f"gradient mismatch for param {pi} entry {k}: "
                    f"analytic {ag[k]:.8g} vs numeric {numeric:.8g} (err {err:.3g})"
                )
            if err > worst[0]:
                worst = (err, numeric)
    return worst

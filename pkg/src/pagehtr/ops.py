"""Differentiable primitives.

Every function takes and returns :class:`~pagehtr.tensor.Tensor`. Backward
closures receive the upstream gradient plus a tuple saying which parents
need one, and return one gradient (or ``None``) per parent.

Broadcasting is limited to what the model uses: equal shapes, a python
scalar, or an operand whose shape is a suffix of the other's (bias rows,
positional tables).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

from . import _kernels
from .errors import ParameterError, ShapeError
from .tensor import Tensor, make

_SQRT1_2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _t(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else np.float32
    return Tensor(np.asarray(x, dtype=dtype))


def _reduce_to(g, shape):
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    if lead:
        g = g.sum(axis=tuple(range(lead)))
    if g.shape != shape:  # scalar operand stored with shape ()
        g = g.sum().reshape(shape)
    return g


def _check_broadcast(a, b, op):
    sa, sb = a.shape, b.shape
    if sa == sb or b.size == 1 and b.ndim == 0 or a.size == 1 and a.ndim == 0:
        return
    if len(sb) < len(sa) and sa[len(sa) - len(sb):] == sb:
        return
    if len(sa) < len(sb) and sb[len(sb) - len(sa):] == sa:
        return
    raise ShapeError(f"{op}: incompatible shapes {sa} and {sb}")


# ----------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a = _t(a, b if isinstance(b, Tensor) else None)
    b = _t(b, a)
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape

    def back(g, need):
        return (_reduce_to(g, sa) if need[0] else None,
                _reduce_to(g, sb) if need[1] else None)

    return make(a.data + b.data, (a, b), back)


def sub(a, b) -> Tensor:
    a = _t(a, b if isinstance(b, Tensor) else None)
    b = _t(b, a)
    _check_broadcast(a, b, "sub")
    sa, sb = a.shape, b.shape

    def back(g, need):
        return (_reduce_to(g, sa) if need[0] else None,
                -_reduce_to(g, sb) if need[1] else None)

    return make(a.data - b.data, (a, b), back)


def mul(a, b) -> Tensor:
    if not isinstance(b, Tensor) and np.ndim(b) == 0:
        return scale(a, float(b))
    if not isinstance(a, Tensor) and np.ndim(a) == 0:
        return scale(b, float(a))
    a = _t(a, b if isinstance(b, Tensor) else None)
    b = _t(b, a)
    _check_broadcast(a, b, "mul")
    ad, bd = a.data, b.data

    def back(g, need):
        return (_reduce_to(g * bd, ad.shape) if need[0] else None,
                _reduce_to(g * ad, bd.shape) if need[1] else None)

    return make(ad * bd, (a, b), back)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def back(g, need):
        return (g * np.asarray(c, dtype=g.dtype),)

    return make(a.data * np.asarray(c, dtype=a.dtype), (a,), back)


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0

    def back(g, need):
        return (g * pos,)

    return make(np.where(pos, x.data, np.zeros((), dtype=x.dtype)), (x,), back)


def gelu(x: Tensor) -> Tensor:
    """x * Phi(x) with the exact Gaussian CDF."""
    xd = x.data
    cdf = 0.5 * (1.0 + erf(xd * _SQRT1_2))

    def back(g, need):
        pdf = np.exp(-0.5 * xd * xd) * _INV_SQRT_2PI
        return (g * (cdf + xd * pdf),)

    return make((xd * cdf).astype(xd.dtype, copy=False), (x,), back)


# ------------------------------------------------------------------ structural

def reshape(x: Tensor, shape) -> Tensor:
    src = x.shape

    def back(g, need):
        return (g.reshape(src),)

    return make(x.data.reshape(shape), (x,), back)


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def back(g, need):
        return (g.transpose(inv),)

    return make(x.data.transpose(axes), (x,), back)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = tuple(tensors)
    datas = [t.data for t in tensors]
    axis = axis % datas[0].ndim
    bounds = np.cumsum([d.shape[axis] for d in datas])[:-1]

    def back(g, need):
        parts = np.split(g, bounds, axis=axis)
        return tuple(p if n else None for p, n in zip(parts, need))

    return make(np.concatenate(datas, axis=axis), tensors, back)


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    src = x.shape

    def back(g, need):
        return (np.broadcast_to(g, src).copy(),)

    return make(x.data.sum(), (x,), back)


def mean(x: Tensor) -> Tensor:
    src, n = x.shape, x.size

    def back(g, need):
        return (np.broadcast_to(g / n, src).copy(),)

    return make(x.data.mean(), (x,), back)


# ---------------------------------------------------------------------- linear

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``(..., m, k) @ (k, n)`` or batched ``(..., m, k) @ (..., k, n)``."""
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2:
        raise ShapeError(f"matmul needs matrices, got {ad.shape} @ {bd.shape}")
    if ad.shape[-1] != bd.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {ad.shape} @ {bd.shape}")
    if bd.ndim == 2:
        def back(g, need):
            ga = g @ bd.T if need[0] else None
            gb = None
            if need[1]:
                gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            return ga, gb
    elif bd.ndim == ad.ndim and bd.shape[:-2] == ad.shape[:-2]:
        def back(g, need):
            ga = g @ np.swapaxes(bd, -1, -2) if need[0] else None
            gb = np.swapaxes(ad, -1, -2) @ g if need[1] else None
            return ga, gb
    else:
        raise ShapeError(f"matmul batch dimensions differ: {ad.shape} @ {bd.shape}")
    return make(ad @ bd, (a, b), back)


def embedding(weight: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    V = weight.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= V):
        raise ShapeError(f"token id out of range [0, {V})")

    def back(g, need):
        gw = np.zeros_like(weight.data)
        np.add.at(gw, ids.ravel(), g.reshape(-1, weight.shape[1]))
        return (gw,)

    return make(weight.data[ids], (weight,), back)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride: int = 1,
           padding: int = 0) -> Tensor:
    """Cross-correlation of ``[C,H,W]`` or ``[B,C,H,W]`` input."""
    if stride < 1 or padding < 0:
        raise ParameterError("stride must be >= 1 and padding >= 0")
    xd, wd = x.data, kernel.data
    squeeze = xd.ndim == 3
    if squeeze:
        xd = xd[None]
    if xd.ndim != 4 or wd.ndim != 4:
        raise ShapeError(f"conv2d expects [B,C,H,W] x [O,C,kh,kw], got {x.shape}, {kernel.shape}")
    B, C, H, W = xd.shape
    O, Ck, kh, kw = wd.shape
    if Ck != C:
        raise ShapeError(f"conv2d channel mismatch: input {C}, kernel {Ck}")
    Hp, Wp = H + 2 * padding, W + 2 * padding
    if kh > Hp or kw > Wp:
        raise ShapeError(f"kernel {kh}x{kw} larger than padded input {Hp}x{Wp}")
    Ho = (Hp - kh) // stride + 1
    Wo = (Wp - kw) // stride + 1
    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else xd
    xp = np.ascontiguousarray(xp)
    if kh == 1 and kw == 1:
        cols = np.ascontiguousarray(xp[:, :, ::stride, ::stride][:, :, :Ho, :Wo]).reshape(B, C, Ho * Wo)
    else:
        cols = _kernels.im2col(xp, kh, kw, stride)
    w2 = wd.reshape(O, -1)
    out = np.matmul(w2, cols)
    if bias is not None:
        out += bias.data[:, None]
    out = out.reshape(B, O, Ho, Wo)
    if squeeze:
        out = out[0]
    parents = (x, kernel) if bias is None else (x, kernel, bias)

    def back(g, need):
        g3 = g.reshape(B, O, Ho * Wo)
        gx = gw = gb = None
        if need[1]:
            gw = np.tensordot(g3, cols, axes=([0, 2], [0, 2])).reshape(wd.shape)
        if len(need) > 2 and need[2]:
            gb = g3.sum(axis=(0, 2))
        if need[0]:
            gcols = np.matmul(w2.T, g3)
            if kh == 1 and kw == 1:
                gxp = np.zeros((B, C, Hp, Wp), dtype=g.dtype)
                gxp[:, :, :stride * (Ho - 1) + 1:stride, :stride * (Wo - 1) + 1:stride] = gcols.reshape(B, C, Ho, Wo)
            else:
                gxp = _kernels.col2im(np.ascontiguousarray(gcols), C, Hp, Wp, kh, kw, stride)
            gx = gxp[:, :, padding:padding + H, padding:padding + W] if padding else gxp
            if squeeze:
                gx = gx[0]
        return (gx, gw) if bias is None else (gx, gw, gb)

    return make(out, parents, back)


# --------------------------------------------------------------- normalizing

def softmax(x: Tensor, axis: int = -1, mask=None) -> Tensor:
    """Stable softmax; ``mask`` (broadcastable bool, True = keep) zeroes entries exactly."""
    z = x.data
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def back(g, need):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make(y, (x,), back)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse

    def back(g, need):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return make(out, (x,), back)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    xd = x.data
    d = xd.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm affine must have shape ({d},)")
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    out = xhat * gain.data + bias.data

    def back(g, need):
        gx = gg = gb = None
        if need[0]:
            gh = g * gain.data
            gx = rstd * (gh - gh.mean(axis=-1, keepdims=True)
                         - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        if need[1]:
            gg = (g * xhat).reshape(-1, d).sum(axis=0)
        if need[2]:
            gb = g.reshape(-1, d).sum(axis=0)
        return gx, gg, gb

    return make(out.astype(xd.dtype, copy=False), (x, gain, bias), back)


def group_norm(x: Tensor, groups: int, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-sample normalization over channel groups of a ``[B,C,H,W]`` map."""
    xd = x.data
    squeeze = xd.ndim == 3
    if squeeze:
        xd = xd[None]
    B, C, H, W = xd.shape
    if C % groups:
        raise ParameterError(f"{C} channels do not split into {groups} groups")
    xg = xd.reshape(B, groups, -1)
    mu = xg.mean(axis=-1, keepdims=True)
    xc = xg - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = (xc * rstd).reshape(B, C, H, W)
    gd = gain.data[:, None, None]
    out = xhat * gd + bias.data[:, None, None]
    if squeeze:
        out = out[0]

    def back(g, need):
        g4 = g[None] if squeeze else g
        gx = gg = gb = None
        if need[0]:
            gh = (g4 * gd).reshape(B, groups, -1)
            xh = xhat.reshape(B, groups, -1)
            gx = rstd * (gh - gh.mean(axis=-1, keepdims=True)
                         - xh * (gh * xh).mean(axis=-1, keepdims=True))
            gx = gx.reshape(B, C, H, W)
            if squeeze:
                gx = gx[0]
        if need[1]:
            gg = (g4 * xhat).sum(axis=(0, 2, 3))
        if need[2]:
            gb = g4.sum(axis=(0, 2, 3))
        return gx, gg, gb

    return make(out.astype(xd.dtype, copy=False), (x, gain, bias), back)


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors scaled by 1/(1-p) at train time, identity in eval."""
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ParameterError("train-mode dropout needs an explicit rng")
    keep = (rng.random(x.shape) >= p).astype(x.dtype) * np.asarray(1.0 / (1.0 - p), dtype=x.dtype)

    def back(g, need):
        return (g * keep,)

    return make(x.data * keep, (x,), back)


# ------------------------------------------------------------------------ loss

def cross_entropy(logits: Tensor, targets, mask=None, denom: float | None = None) -> Tensor:
    """Summed token NLL over ``mask`` divided by ``denom`` (default: mask total).

    ``logits`` is ``[..., V]`` and ``targets`` the matching integer array.
    """
    z = logits.data
    t = np.asarray(targets, dtype=np.int64)
    if z.shape[:-1] != t.shape:
        raise ShapeError(f"logits {z.shape} do not align with targets {t.shape}")
    m = np.ones(t.shape, dtype=z.dtype) if mask is None else np.asarray(mask, dtype=z.dtype)
    if denom is None:
        denom = float(m.sum())
    zs = z - z.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(zs).sum(axis=-1, keepdims=True))
    logp_t = np.take_along_axis(zs, t[..., None], axis=-1)[..., 0] - lse[..., 0]
    loss = -(logp_t * m).sum() / denom

    def back(g, need):
        p = np.exp(zs - lse)
        np.put_along_axis(p, t[..., None], np.take_along_axis(p, t[..., None], axis=-1) - 1.0, axis=-1)
        return (p * (m / denom * g)[..., None],)

    return make(np.asarray(loss, dtype=z.dtype), (logits,), back)

"""Spatial ops: 2-D cross-correlation and bilinear upsampling.

Both operate on single images laid out channels-first ([C, H, W]); batching
happens one frame at a time in the callers, which is the right grain at
desk-scale resolutions.
"""

from __future__ import annotations

import numpy as np

from .tensor import DimensionError, Tensor, _make


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlate x[C_in,H,W] with weight[C_out,C_in,kh,kw].

    Zero padding; output extent is floor((H + 2p - k) / stride) + 1.
    """
    if x.ndim != 3 or weight.ndim != 4:
        raise DimensionError(f"conv2d expects [C,H,W] and [O,C,kh,kw], got {x.shape}, {weight.shape}")
    if weight.shape[1] != x.shape[0]:
        raise DimensionError(f"conv2d channel mismatch: input {x.shape[0]}, kernel {weight.shape[1]}")
    if stride < 1 or padding < 0:
        raise DimensionError(f"conv2d invalid stride={stride} padding={padding}")
    cin, h, w = x.shape
    cout, _, kh, kw = weight.shape
    hp, wp = h + 2 * padding, w + 2 * padding
    if kh > hp or kw > wp:
        raise DimensionError(f"kernel {kh}x{kw} larger than padded input {hp}x{wp}")
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1

    xp = np.pad(x.values, ((0, 0), (padding, padding), (padding, padding))) if padding else x.values
    cols = np.empty((cin, kh, kw, ho, wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xp[:, i : i + stride * ho : stride, j : j + stride * wo : stride]
    cols2 = cols.reshape(cin * kh * kw, ho * wo)
    wmat = weight.values.reshape(cout, cin * kh * kw)
    out = wmat @ cols2
    if bias is not None:
        out = out + bias.values[:, None]
    out = out.reshape(cout, ho, wo)

    def bwd(g):
        g2 = np.ascontiguousarray(g.reshape(cout, ho * wo))
        dw = (g2 @ cols2.T).reshape(weight.shape)
        dcols = (wmat.T @ g2).reshape(cin, kh, kw, ho, wo)
        dxp = np.zeros((cin, hp, wp), dtype=x.dtype)
        for i in range(kh):
            for j in range(kw):
                dxp[:, i : i + stride * ho : stride, j : j + stride * wo : stride] += dcols[:, i, j]
        dx = dxp[:, padding : padding + h, padding : padding + w] if padding else dxp
        grads = [dx, dw]
        if bias is not None:
            grads.append(g2.sum(axis=1))
        return tuple(grads)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    macs = cout * ho * wo * cin * kh * kw
    return _make("conv2d", out, inputs, bwd, macs=macs)


def _axis_weights(n: int, factor: int, dtype):
    """Source indices and blend weight per output coordinate (align_corners=False)."""
    coords = (np.arange(n * factor, dtype=dtype) + 0.5) / factor - 0.5
    coords = np.clip(coords, 0.0, n - 1)
    i0 = np.floor(coords).astype(np.int64)
    i1 = np.minimum(i0 + 1, n - 1)
    t = (coords - i0).astype(dtype)
    return i0, i1, t


def bilinear_upsample(x: Tensor, factor: int) -> Tensor:
    """Upsample x[C,h,w] by an integer factor with bilinear interpolation."""
    if x.ndim != 3:
        raise DimensionError(f"bilinear_upsample expects [C,h,w], got {x.shape}")
    if int(factor) != factor or factor < 1:
        raise DimensionError(f"upsample factor must be a positive integer, got {factor}")
    factor = int(factor)
    if factor == 1:
        return _make("bilinear_upsample", x.values.copy(), (x,), lambda g: (g,))
    c, h, w = x.shape
    iy0, iy1, ty = _axis_weights(h, factor, x.dtype)
    ix0, ix1, tx = _axis_weights(w, factor, x.dtype)

    v = x.values
    top = v[:, iy0][:, :, ix0] * (1 - tx) + v[:, iy0][:, :, ix1] * tx
    bot = v[:, iy1][:, :, ix0] * (1 - tx) + v[:, iy1][:, :, ix1] * tx
    out = top * (1 - ty)[:, None] + bot * ty[:, None]

    def bwd(g):
        dx = np.zeros_like(v)
        ci = np.arange(c)[:, None, None]
        for iy, wy in ((iy0, (1 - ty)), (iy1, ty)):
            for ix, wx in ((ix0, (1 - tx)), (ix1, tx)):
                np.add.at(dx, (ci, iy[None, :, None], ix[None, None, :]), g * (wy[:, None] * wx))
        return (dx,)

    return _make("bilinear_upsample", out, (x,), bwd)

"""Pure-numpy implementations of the hot array kernels.

Used when the compiled extension module is unavailable (or when
COOPBEV_FORCE_FALLBACK=1 is set).  Semantics are identical to the
compiled versions; only the summation order differs, so results agree
to float64 round-off.
"""

import numpy as np

_swv = np.lib.stride_tricks.sliding_window_view


def conv2d_forward(x, k, stride, pad):
    kh, kw = k.shape[0], k.shape[1]
    if pad:
        x = np.pad(x, ((pad, pad), (pad, pad), (0, 0)))
    win = _swv(x, (kh, kw), axis=(0, 1))[::stride, ::stride]
    # win: [H', W', Cin, kh, kw]; k: [kh, kw, Cin, Cout]
    return np.tensordot(win, k, axes=([3, 4, 2], [0, 1, 2]))


def conv2d_backward_input(gy, k, stride, pad, h, w):
    kh, kw = k.shape[0], k.shape[1]
    ho, wo = gy.shape[0], gy.shape[1]
    gxp = np.zeros((h + 2 * pad, w + 2 * pad, k.shape[2]))
    for a in range(kh):
        for b in range(kw):
            g = gy @ k[a, b].T  # [H', W', Cin]
            gxp[a : a + ho * stride : stride, b : b + wo * stride : stride] += g
    return np.ascontiguousarray(gxp[pad : pad + h, pad : pad + w])


def conv2d_backward_kernel(x, gy, stride, pad, kh, kw):
    ho, wo = gy.shape[0], gy.shape[1]
    if pad:
        x = np.pad(x, ((pad, pad), (pad, pad), (0, 0)))
    gk = np.empty((kh, kw, x.shape[2], gy.shape[2]))
    for a in range(kh):
        for b in range(kw):
            xs = x[a : a + ho * stride : stride, b : b + wo * stride : stride]
            gk[a, b] = np.tensordot(xs, gy, axes=([0, 1], [0, 1]))
    return gk


def depthwise_pair_forward(x, k):
    l = k.shape[0]
    pad = l // 2
    xp = np.pad(x, ((pad, pad), (pad, pad), (0, 0)))
    win = _swv(xp, (l, l), axis=(0, 1))  # [H, W, 2C, l, l]
    d = np.einsum("hwcab,abc->hwc", win, k)
    return np.ascontiguousarray(d[:, :, 0::2] + d[:, :, 1::2])


def depthwise_pair_backward(x, k, gy):
    l = k.shape[0]
    pad = l // 2
    h, w, c2 = x.shape
    gd = np.repeat(gy, 2, axis=2)  # pair channels share the output gradient
    xp = np.pad(x, ((pad, pad), (pad, pad), (0, 0)))
    gxp = np.zeros_like(xp)
    gk = np.empty_like(k)
    for a in range(l):
        for b in range(l):
            gxp[a : a + h, b : b + w] += gd * k[a, b]
            gk[a, b] = np.einsum("hwc,hwc->c", xp[a : a + h, b : b + w], gd)
    return np.ascontiguousarray(gxp[pad : pad + h, pad : pad + w]), gk


def tconv2x2_forward(x, k):
    h, w = x.shape[0], x.shape[1]
    out = np.empty((2 * h, 2 * w, k.shape[3]))
    for a in range(2):
        for b in range(2):
            out[a::2, b::2] = x @ k[a, b]
    return out


def tconv2x2_backward(x, k, gy):
    gx = np.zeros_like(x)
    gk = np.empty_like(k)
    for a in range(2):
        for b in range(2):
            g = gy[a::2, b::2]
            gx += g @ k[a, b].T
            gk[a, b] = np.tensordot(x, g, axes=([0, 1], [0, 1]))
    return gx, gk


def _corners(rows, cols, h, w):
    r0 = np.floor(rows).astype(np.int64)
    c0 = np.floor(cols).astype(np.int64)
    fr = rows - r0
    fc = cols - c0
    for dr, dc, wt in (
        (0, 0, (1.0 - fr) * (1.0 - fc)),
        (0, 1, (1.0 - fr) * fc),
        (1, 0, fr * (1.0 - fc)),
        (1, 1, fr * fc),
    ):
        rr = r0 + dr
        cc = c0 + dc
        ok = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
        yield np.where(ok, rr, 0), np.where(ok, cc, 0), wt * ok


def bilinear_gather(f, rows, cols):
    h, w, c = f.shape
    out = np.zeros(rows.shape + (c,))
    for rr, cc, wt in _corners(rows, cols, h, w):
        out += wt[..., None] * f[rr, cc]
    return out


def bilinear_scatter(gy, rows, cols, h, w):
    c = gy.shape[-1]
    gf = np.zeros((h, w, c))
    for rr, cc, wt in _corners(rows, cols, h, w):
        np.add.at(gf, (rr, cc), wt[..., None] * gy)
    return gf

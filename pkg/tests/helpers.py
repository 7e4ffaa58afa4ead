"""Shared test oracles: naive loop reimplementations and finite differences.

Everything here is deliberately independent of the library's compute
path (plain Python loops / direct numpy), so tests compare two routes.
"""

import numpy as np


def finite_diff_grad(f, x, delta=1e-5):
    """Central finite-difference gradient of scalar-valued f() wrt array x.

    f must read x by reference (it is perturbed in place).
    """
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + delta
        fp = f()
        x[i] = orig - delta
        fm = f()
        x[i] = orig
        g[i] = (fp - fm) / (2.0 * delta)
        it.iternext()
    return g


def assert_grad_close(analytic, numeric, tol=1e-4):
    denom = np.maximum(1.0, np.abs(numeric))
    err = np.abs(analytic - numeric) / denom
    assert err.max() < tol, f"max relative gradient error {err.max():.3e} >= {tol}"


def naive_conv2d(x, k, stride=1, padding=0):
    """Quadruple-loop cross-correlation oracle."""
    h, w, ci = x.shape
    kh, kw, _, co = k.shape
    if padding:
        xp = np.zeros((h + 2 * padding, w + 2 * padding, ci))
        xp[padding : padding + h, padding : padding + w] = x
    else:
        xp = x
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((ho, wo, co))
    for oh in range(ho):
        for ow in range(wo):
            for a in range(kh):
                for b in range(kw):
                    for c in range(ci):
                        for d in range(co):
                            out[oh, ow, d] += xp[oh * stride + a, ow * stride + b, c] * k[a, b, c, d]
    return out


def naive_depthwise_pair(x, k):
    """Same-padded depthwise conv with adjacent channel pairs summed."""
    h, w, c2 = x.shape
    l = k.shape[0]
    pad = l // 2
    xp = np.zeros((h + 2 * pad, w + 2 * pad, c2))
    xp[pad : pad + h, pad : pad + w] = x
    per_channel = np.zeros((h, w, c2))
    for oh in range(h):
        for ow in range(w):
            for a in range(l):
                for b in range(l):
                    for c in range(c2):
                        per_channel[oh, ow, c] += xp[oh + a, ow + b, c] * k[a, b, c]
    return per_channel[:, :, 0::2] + per_channel[:, :, 1::2]


def naive_nms(boxes, scores, iou_thresh):
    """O(n^2) greedy NMS oracle; boxes are (x0, y0, x1, y1)."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    keep = []
    suppressed = [False] * len(scores)
    for i in order:
        if suppressed[i]:
            continue
        keep.append(i)
        for j in order:
            if j == i or suppressed[j]:
                continue
            if naive_iou(boxes[i], boxes[j]) > iou_thresh:
                suppressed[j] = True
    return keep


def naive_iou(a, b):
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    if inter == 0.0:
        return 0.0
    ua = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / ua

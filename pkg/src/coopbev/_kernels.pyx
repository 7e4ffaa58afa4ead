# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: convolution family and bilinear grid sampling.

Mirrors coopbev._kernels_py; float64, HWC layout, C-contiguous inputs.
"""

import numpy as np

cimport numpy as cnp

from libc.math cimport floor

cnp.import_array()


def conv2d_forward(double[:, :, ::1] x, double[:, :, :, ::1] k, int stride, int pad):
    cdef int h = x.shape[0], w = x.shape[1], ci = x.shape[2]
    cdef int kh = k.shape[0], kw = k.shape[1], co = k.shape[3]
    cdef int ho = (h + 2 * pad - kh) // stride + 1
    cdef int wo = (w + 2 * pad - kw) // stride + 1
    out_np = np.zeros((ho, wo, co))
    cdef double[:, :, ::1] out = out_np
    cdef int oh, ow, a, b, c, d, ih, iw
    cdef double xv
    for oh in range(ho):
        for ow in range(wo):
            for a in range(kh):
                ih = oh * stride + a - pad
                if ih < 0 or ih >= h:
                    continue
                for b in range(kw):
                    iw = ow * stride + b - pad
                    if iw < 0 or iw >= w:
                        continue
                    for c in range(ci):
                        xv = x[ih, iw, c]
                        if xv == 0.0:
                            continue
                        for d in range(co):
                            out[oh, ow, d] += xv * k[a, b, c, d]
    return out_np


def conv2d_backward_input(double[:, :, ::1] gy, double[:, :, :, ::1] k,
                          int stride, int pad, int h, int w):
    cdef int ho = gy.shape[0], wo = gy.shape[1], co = gy.shape[2]
    cdef int kh = k.shape[0], kw = k.shape[1], ci = k.shape[2]
    gx_np = np.zeros((h, w, ci))
    cdef double[:, :, ::1] gx = gx_np
    cdef int oh, ow, a, b, c, d, ih, iw
    cdef double acc
    for oh in range(ho):
        for ow in range(wo):
            for a in range(kh):
                ih = oh * stride + a - pad
                if ih < 0 or ih >= h:
                    continue
                for b in range(kw):
                    iw = ow * stride + b - pad
                    if iw < 0 or iw >= w:
                        continue
                    for c in range(ci):
                        acc = 0.0
                        for d in range(co):
                            acc += gy[oh, ow, d] * k[a, b, c, d]
                        gx[ih, iw, c] += acc
    return gx_np


def conv2d_backward_kernel(double[:, :, ::1] x, double[:, :, ::1] gy,
                           int stride, int pad, int kh, int kw):
    cdef int h = x.shape[0], w = x.shape[1], ci = x.shape[2]
    cdef int ho = gy.shape[0], wo = gy.shape[1], co = gy.shape[2]
    gk_np = np.zeros((kh, kw, ci, co))
    cdef double[:, :, :, ::1] gk = gk_np
    cdef int oh, ow, a, b, c, d, ih, iw
    cdef double xv
    for oh in range(ho):
        for ow in range(wo):
            for a in range(kh):
                ih = oh * stride + a - pad
                if ih < 0 or ih >= h:
                    continue
                for b in range(kw):
                    iw = ow * stride + b - pad
                    if iw < 0 or iw >= w:
                        continue
                    for c in range(ci):
                        xv = x[ih, iw, c]
                        if xv == 0.0:
                            continue
                        for d in range(co):
                            gk[a, b, c, d] += xv * gy[oh, ow, d]
    return gk_np


def depthwise_pair_forward(double[:, :, ::1] x, double[:, :, ::1] k):
    cdef int h = x.shape[0], w = x.shape[1], c2 = x.shape[2]
    cdef int l = k.shape[0], pad = k.shape[0] // 2, c = c2 // 2
    out_np = np.zeros((h, w, c))
    cdef double[:, :, ::1] out = out_np
    cdef int oh, ow, a, b, m, ih, iw
    cdef double acc
    for oh in range(h):
        for ow in range(w):
            for a in range(l):
                ih = oh + a - pad
                if ih < 0 or ih >= h:
                    continue
                for b in range(l):
                    iw = ow + b - pad
                    if iw < 0 or iw >= w:
                        continue
                    for m in range(c):
                        out[oh, ow, m] += (x[ih, iw, 2 * m] * k[a, b, 2 * m]
                                           + x[ih, iw, 2 * m + 1] * k[a, b, 2 * m + 1])
    return out_np


def depthwise_pair_backward(double[:, :, ::1] x, double[:, :, ::1] k,
                            double[:, :, ::1] gy):
    cdef int h = x.shape[0], w = x.shape[1], c2 = x.shape[2]
    cdef int l = k.shape[0], pad = k.shape[0] // 2, c = c2 // 2
    gx_np = np.zeros((h, w, c2))
    gk_np = np.zeros((l, l, c2))
    cdef double[:, :, ::1] gx = gx_np
    cdef double[:, :, ::1] gk = gk_np
    cdef int oh, ow, a, b, m, ih, iw
    cdef double g
    for oh in range(h):
        for ow in range(w):
            for a in range(l):
                ih = oh + a - pad
                if ih < 0 or ih >= h:
                    continue
                for b in range(l):
                    iw = ow + b - pad
                    if iw < 0 or iw >= w:
                        continue
                    for m in range(c):
                        g = gy[oh, ow, m]
                        gx[ih, iw, 2 * m] += g * k[a, b, 2 * m]
                        gx[ih, iw, 2 * m + 1] += g * k[a, b, 2 * m + 1]
                        gk[a, b, 2 * m] += g * x[ih, iw, 2 * m]
                        gk[a, b, 2 * m + 1] += g * x[ih, iw, 2 * m + 1]
    return gx_np, gk_np


def tconv2x2_forward(double[:, :, ::1] x, double[:, :, :, ::1] k):
    cdef int h = x.shape[0], w = x.shape[1], ci = x.shape[2], co = k.shape[3]
    out_np = np.zeros((2 * h, 2 * w, co))
    cdef double[:, :, ::1] out = out_np
    cdef int i, j, a, b, c, d
    cdef double xv
    for i in range(h):
        for j in range(w):
            for c in range(ci):
                xv = x[i, j, c]
                if xv == 0.0:
                    continue
                for a in range(2):
                    for b in range(2):
                        for d in range(co):
                            out[2 * i + a, 2 * j + b, d] += xv * k[a, b, c, d]
    return out_np


def tconv2x2_backward(double[:, :, ::1] x, double[:, :, :, ::1] k,
                      double[:, :, ::1] gy):
    cdef int h = x.shape[0], w = x.shape[1], ci = x.shape[2], co = k.shape[3]
    gx_np = np.zeros((h, w, ci))
    gk_np = np.zeros((2, 2, ci, co))
    cdef double[:, :, ::1] gx = gx_np
    cdef double[:, :, :, ::1] gk = gk_np
    cdef int i, j, a, b, c, d
    cdef double acc, xv
    for i in range(h):
        for j in range(w):
            for c in range(ci):
                acc = 0.0
                xv = x[i, j, c]
                for a in range(2):
                    for b in range(2):
                        for d in range(co):
                            acc += gy[2 * i + a, 2 * j + b, d] * k[a, b, c, d]
                            gk[a, b, c, d] += xv * gy[2 * i + a, 2 * j + b, d]
                gx[i, j, c] = acc
    return gx_np, gk_np


def bilinear_gather(double[:, :, ::1] f, double[:, ::1] rows, double[:, ::1] cols):
    cdef int h = f.shape[0], w = f.shape[1], c = f.shape[2]
    cdef int ho = rows.shape[0], wo = rows.shape[1]
    out_np = np.zeros((ho, wo, c))
    cdef double[:, :, ::1] out = out_np
    cdef int i, j, m, r0, c0, rr, cc, dr, dc
    cdef double fr, fc, wt
    for i in range(ho):
        for j in range(wo):
            r0 = <int>floor(rows[i, j])
            c0 = <int>floor(cols[i, j])
            fr = rows[i, j] - r0
            fc = cols[i, j] - c0
            for dr in range(2):
                rr = r0 + dr
                if rr < 0 or rr >= h:
                    continue
                for dc in range(2):
                    cc = c0 + dc
                    if cc < 0 or cc >= w:
                        continue
                    wt = (fr if dr else 1.0 - fr) * (fc if dc else 1.0 - fc)
                    for m in range(c):
                        out[i, j, m] += wt * f[rr, cc, m]
    return out_np


def bilinear_scatter(double[:, :, ::1] gy, double[:, ::1] rows,
                     double[:, ::1] cols, int h, int w):
    cdef int ho = gy.shape[0], wo = gy.shape[1], c = gy.shape[2]
    gf_np = np.zeros((h, w, c))
    cdef double[:, :, ::1] gf = gf_np
    cdef int i, j, m, r0, c0, rr, cc, dr, dc
    cdef double fr, fc, wt
    for i in range(ho):
        for j in range(wo):
            r0 = <int>floor(rows[i, j])
            c0 = <int>floor(cols[i, j])
            fr = rows[i, j] - r0
            fc = cols[i, j] - c0
            for dr in range(2):
                rr = r0 + dr
                if rr < 0 or rr >= h:
                    continue
                for dc in range(2):
                    cc = c0 + dc
                    if cc < 0 or cc >= w:
                        continue
                    wt = (fr if dr else 1.0 - fr) * (fc if dc else 1.0 - fc)
                    for m in range(c):
                        gf[rr, cc, m] += wt * gy[i, j, m]
    return gf_np

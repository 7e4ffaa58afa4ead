"""Backend selection for the hot array kernels.

Prefers the compiled extension (coopbev._kernels, built from Cython);
falls back to the pure-numpy implementation when the extension is not
built.  Set COOPBEV_FORCE_FALLBACK=1 to force the numpy path, e.g. for
the backend-parity tests and the benchmark.
"""

import os

if os.environ.get("COOPBEV_FORCE_FALLBACK", "") == "1":
    from coopbev import _kernels_py as _impl

    BACKEND = "fallback"
else:
    try:
        from coopbev import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        from coopbev import _kernels_py as _impl

        BACKEND = "fallback"

conv2d_forward = _impl.conv2d_forward
conv2d_backward_input = _impl.conv2d_backward_input
conv2d_backward_kernel = _impl.conv2d_backward_kernel
depthwise_pair_forward = _impl.depthwise_pair_forward
depthwise_pair_backward = _impl.depthwise_pair_backward
tconv2x2_forward = _impl.tconv2x2_forward
tconv2x2_backward = _impl.tconv2x2_backward
bilinear_gather = _impl.bilinear_gather
bilinear_scatter = _impl.bilinear_scatter


def backend_name():
    return BACKEND

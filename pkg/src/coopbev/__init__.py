"""Desk-scale multi-agent cooperative BEV perception.

Synthetic worlds, sparse feature sharing over a bit-exact wire format,
attention-based cross-agent fusion, and reconstruction-supervised
training of segmentation/detection heads, on a small self-contained
autodiff engine.
"""

__version__ = "0.1.0"

from coopbev.kernels import backend_name

__all__ = ["backend_name", "__version__"]

"""Noisy-qudit simulator, graybox noise-operator learning, and pulse control."""

from ._kernels import backend as kernel_backend

__version__ = "0.1.0"

__all__ = ["kernel_backend", "__version__"]

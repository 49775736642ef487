"""Frozen differentiable reconstructors used as the training target's back end.

The mask network is trained against a fixed reconstructor so the only thing
being optimized is where to spend the sampling budget. Two interchangeable
configurations are provided:

* :class:`NormalizedConvolution` - the default: a smoothing kernel applied to
  the confidence-weighted image, divided by the smoothed confidence itself.
* :class:`WeightedHarmonic` - an implicit solve of a confidence-weighted
  Laplace system with adjoint-method gradients.

Both are differentiable with respect to the image and the confidence map and
carry no trainable state.
"""

from __future__ import annotations

import numpy as np

from ..errors import ParameterError
from .tape import Node, Tape


def gaussian_kernel(size: int = 13, sigma: float = 3.0) -> np.ndarray:
    """Isotropic normalized Gaussian kernel, shape (1, 1, size, size)."""
    if size < 1 or size % 2 == 0:
        raise ParameterError("kernel size must be a positive odd number")
    half = size // 2
    coords = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(coords[:, None] ** 2 + coords[None, :] ** 2) / (2.0 * sigma * sigma))
    g /= g.sum()
    return g[None, None, :, :]


def single_pixel_kernel() -> np.ndarray:
    return np.ones((1, 1, 1, 1))


class NormalizedConvolution:
    """Smooth the confidence-weighted image and renormalize by the smoothed confidence."""

    def __init__(self, kernel: np.ndarray | None = None, eps: float = 1e-8):
        self.kernel = gaussian_kernel() if kernel is None else np.asarray(kernel, dtype=np.float64)
        if self.kernel.ndim != 4 or self.kernel.shape[:2] != (1, 1):
            raise ParameterError("kernel must have shape (1, 1, k, k)")
        self.eps = eps

    def apply(self, tape: Tape, corrupted: Node, confidence: Node) -> Node:
        num = tape.fixed_conv2d(corrupted, self.kernel)
        den = tape.add_scalar(tape.fixed_conv2d(confidence, self.kernel), self.eps)
        return tape.divide(num, den)

    def apply_np(self, corrupted: np.ndarray, confidence: np.ndarray) -> np.ndarray:
        """Tape-free evaluation path for (h, w) arrays."""
        tape = Tape()
        out = self.apply(tape, tape.leaf(corrupted[None, None]), tape.leaf(confidence[None, None]))
        return out.value[0, 0]


class WeightedHarmonic:
    """Implicitly solve (diag(confidence) + smoothness * laplacian) r = confidence * z."""

    def __init__(self, smoothness: float = 0.5, tol: float = 1e-12, max_iters: int = 20000):
        if smoothness <= 0.0:
            raise ParameterError("smoothness must be positive")
        self.smoothness = smoothness
        self.tol = tol
        self.max_iters = max_iters

    def apply(self, tape: Tape, corrupted: Node, confidence: Node) -> Node:
        # the corrupted input is already the confidence-weighted observation,
        # which is exactly the right-hand side of the weighted data term
        return tape.harmonic_solve(corrupted, confidence, self.smoothness, self.tol, self.max_iters)

    def apply_np(self, corrupted: np.ndarray, confidence: np.ndarray) -> np.ndarray:
        tape = Tape()
        out = self.apply(tape, tape.leaf(corrupted[None, None]), tape.leaf(confidence[None, None]))
        return out.value[0, 0]

"""Quantitative comparison of reconstructed and ground-truth cubes.

The PSNR peak defaults to 1 on the [0, 1] value scale and is computed
globally over all entries; spectral angles are reported in degrees.
"""

from __future__ import annotations

import math

import numpy as np

from .core import SpectralCube
from .errors import DimensionMismatchError, UndefinedMetricError


def _entries(x) -> np.ndarray:
    if isinstance(x, SpectralCube):
        return x.data
    return np.asarray(x, dtype=np.float64)


def _spectra(x) -> np.ndarray:
    """Coerce to a (bands, pixels) matrix of per-pixel spectra."""
    if isinstance(x, SpectralCube):
        return x.matrix
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 3:
        return a.reshape(-1, a.shape[2]).T
    if a.ndim == 2:
        return a
    raise DimensionMismatchError(f"cannot interpret shape {a.shape} as spectra")


def rmse(estimate, truth) -> float:
    a = _entries(estimate)
    b = _entries(truth)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def psnr(estimate, truth, peak: float = 1.0) -> float:
    """20*log10(peak / rmse); returns +inf when the images agree exactly."""
    err = rmse(estimate, truth)
    if err == 0.0:
        return math.inf
    return 20.0 * math.log10(peak / err)


def sam_details(estimate, truth) -> tuple[float, int]:
    """Mean per-pixel spectral angle in degrees plus the skipped-pixel count.

    Pixels where either spectrum has zero norm carry no angle; they are
    skipped and counted. All pixels skipped is an error.
    """
    y = _spectra(estimate)
    g = _spectra(truth)
    if y.shape != g.shape:
        raise DimensionMismatchError(f"shape mismatch: {y.shape} vs {g.shape}")
    ny = np.linalg.norm(y, axis=0)
    ng = np.linalg.norm(g, axis=0)
    usable = (ny > 0.0) & (ng > 0.0)
    skipped = int(y.shape[1] - usable.sum())
    if not usable.any():
        raise UndefinedMetricError("every pixel spectrum was zero; spectral angle undefined")
    cosines = (y[:, usable] * g[:, usable]).sum(axis=0) / (ny[usable] * ng[usable])
    angles = np.degrees(np.arccos(np.clip(cosines, -1.0, 1.0)))
    return float(angles.mean()), skipped


def sam(estimate, truth) -> float:
    return sam_details(estimate, truth)[0]

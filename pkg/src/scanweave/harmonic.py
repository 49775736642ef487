"""Channel-wise harmonic inpainting.

Sampled pixels are fixed; every unsampled pixel is made to satisfy the
discrete Laplace equation on the 4-neighbor grid with mirrored boundary
(out-of-bounds neighbors fold back onto the pixel, i.e. the stencil degree
drops at edges). Serves both as a baseline reconstructor and as the
initializer of the fusion solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import cg

from .core import SamplingMask, SpectralCube
from .errors import EmptyMaskError, ParameterError

_BACKENDS = ("cg", "jacobi", "gauss_seidel")


@dataclass(frozen=True)
class HarmonicResult:
    image: np.ndarray
    converged: bool
    residual: float
    iterations: int


@dataclass(frozen=True)
class CubeInpaintResult:
    cube: SpectralCube
    converged: bool
    band_results: tuple[HarmonicResult, ...]


def _neighbor_sum(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    out[1:, :] += x[:-1, :]
    out[:-1, :] += x[1:, :]
    out[:, 1:] += x[:, :-1]
    out[:, :-1] += x[:, 1:]
    return out


def _degree_map(shape) -> np.ndarray:
    deg = np.full(shape, 4.0)
    deg[0, :] -= 1.0
    deg[-1, :] -= 1.0
    deg[:, 0] -= 1.0
    deg[:, -1] -= 1.0
    return deg


def _laplace_residual(image: np.ndarray, unknown: np.ndarray) -> float:
    res = _degree_map(image.shape) * image - _neighbor_sum(image)
    if not unknown.any():
        return 0.0
    return float(np.abs(res[unknown]).max())


def _interior_system(values: np.ndarray, sampled: np.ndarray):
    """Sparse Laplace system over the unsampled pixels (Dirichlet data on the rest)."""
    h, w = values.shape
    unknown = ~sampled
    n_unknown = int(unknown.sum())
    index = -np.ones(h * w, dtype=np.int64)
    index[unknown.reshape(-1)] = np.arange(n_unknown)
    deg = _degree_map(values.shape)

    rows, cols, data = [], [], []
    b = np.zeros(n_unknown)
    flat_unknown = np.flatnonzero(unknown.reshape(-1))
    rows.append(index[flat_unknown])
    cols.append(index[flat_unknown])
    data.append(deg.reshape(-1)[flat_unknown])

    ii, jj = np.divmod(flat_unknown, w)
    for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        ni, nj = ii + di, jj + dj
        valid = (ni >= 0) & (ni < h) & (nj >= 0) & (nj < w)
        nflat = ni[valid] * w + nj[valid]
        src = index[flat_unknown[valid]]
        neighbor_unknown = index[nflat] >= 0
        rows.append(src[neighbor_unknown])
        cols.append(index[nflat[neighbor_unknown]])
        data.append(np.full(int(neighbor_unknown.sum()), -1.0))
        sampled_targets = nflat[~neighbor_unknown]
        np.add.at(b, src[~neighbor_unknown], values.reshape(-1)[sampled_targets])

    matrix = sparse.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_unknown, n_unknown),
    )
    return matrix, b, unknown


def harmonic_inpaint_channel(values: np.ndarray, mask: SamplingMask, tol: float = 1e-8,
                             max_iter: int | None = None, backend: str = "cg") -> HarmonicResult:
    """Fill the unsampled pixels of one band; returns the best iterate and a flag.

    ``max_iter`` defaults to 10x the pixel count. On non-convergence the best
    iterate is returned with ``converged=False``.
    """
    if backend not in _BACKENDS:
        raise ParameterError(f"unknown backend {backend!r}; pick one of {_BACKENDS}")
    x = np.asarray(values, dtype=np.float64)
    if x.shape != mask.bits.shape:
        raise ParameterError(f"band shape {x.shape} does not match mask {mask.bits.shape}")
    sampled = mask.bits.astype(bool)
    if not sampled.any():
        raise EmptyMaskError("harmonic inpainting needs at least one sampled pixel")
    if max_iter is None:
        max_iter = 10 * x.size
    if sampled.all():
        return HarmonicResult(x.copy(), True, 0.0, 0)

    if backend == "cg":
        out, iterations = _solve_cg(x, sampled, tol, max_iter)
    elif backend == "jacobi":
        out, iterations = _solve_jacobi(x, sampled, tol, max_iter)
    else:
        out, iterations = _solve_gauss_seidel(x, sampled, tol, max_iter)
    residual = _laplace_residual(out, ~sampled)
    return HarmonicResult(out, residual <= tol, residual, iterations)


def _solve_cg(x, sampled, tol, max_iter):
    matrix, b, unknown = _interior_system(x, sampled)
    iterations = 0

    def count(_):
        nonlocal iterations
        iterations += 1

    solution, _ = cg(matrix, b, rtol=0.0, atol=0.5 * tol, maxiter=max_iter, callback=count)
    out = x.copy()
    out[unknown] = solution
    return out, iterations


def _solve_jacobi(x, sampled, tol, max_iter):
    out = x.copy()
    out[~sampled] = x[sampled].mean()
    deg = _degree_map(x.shape)
    unknown = ~sampled
    for it in range(1, max_iter + 1):
        candidate = _neighbor_sum(out) / deg
        out = np.where(unknown, candidate, out)
        if _laplace_residual(out, unknown) <= tol:
            return out, it
    return out, max_iter


def _solve_gauss_seidel(x, sampled, tol, max_iter):
    out = x.copy()
    out[~sampled] = x[sampled].mean()
    deg = _degree_map(x.shape)
    unknown = ~sampled
    ii, jj = np.indices(x.shape)
    colors = ((ii + jj) % 2).astype(bool)
    for it in range(1, max_iter + 1):
        for color in (False, True):
            cells = unknown & (colors == color)
            candidate = _neighbor_sum(out) / deg
            out[cells] = candidate[cells]
        if _laplace_residual(out, unknown) <= tol:
            return out, it
    return out, max_iter


def harmonic_inpaint_cube(cube, mask: SamplingMask, tol: float = 1e-8,
                          max_iter: int | None = None, backend: str = "cg") -> CubeInpaintResult:
    """Apply the channel operation to every band independently."""
    data = cube.data if isinstance(cube, SpectralCube) else np.asarray(cube, dtype=np.float64)
    if data.ndim == 2:
        data = data[:, :, None]
    results = []
    filled = np.empty_like(data)
    for k in range(data.shape[2]):
        res = harmonic_inpaint_channel(data[:, :, k], mask, tol=tol, max_iter=max_iter, backend=backend)
        filled[:, :, k] = res.image
        results.append(res)
    out = SpectralCube(np.clip(filled, 0.0, 1.0))
    return CubeInpaintResult(out, all(r.converged for r in results), tuple(results))

"""Domain types and the linear mixing / pixel-selection algebra.

Conventions used throughout the package:

* A spectral cube of width W, height H and B bands is stored as a
  ``(H, W, B)`` float64 array. Pixels are ordered row by row (row-major);
  within a pixel the bands are contiguous.
* The matrix view of a cube has shape ``(B, N)`` with ``N = W * H``; column
  ``k`` is the spectrum of the ``k``-th pixel in row-major order.
* All core types are immutable after construction and safe to share across
  threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateInputError,
    DimensionMismatchError,
    IndexRangeError,
    ParameterError,
)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SpectralCube:
    """Nonnegative multi-band image with values in [0, 1].

    ``data`` has shape (height, width, bands). Use :meth:`ingest` for raw
    scan data that may exceed 1 (it rescales by the cube maximum) and
    :meth:`from_matrix` to fold a solver's band-by-pixel matrix back into a
    cube (optionally clamping, which is applied only at this export point so
    solver arithmetic stays unclamped).
    """

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 3:
            raise DimensionMismatchError(f"cube data must be 3-d, got shape {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ParameterError("cube values must be finite")
        if d.min() < 0.0 or d.max() > 1.0:
            raise ParameterError("cube values must lie in [0, 1]; use SpectralCube.ingest for raw data")
        object.__setattr__(self, "data", _frozen(d))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def bands(self) -> int:
        return self.data.shape[2]

    @property
    def pixels(self) -> int:
        return self.height * self.width

    @property
    def matrix(self) -> np.ndarray:
        """(bands, pixels) view, pixel columns in row-major order."""
        return self.data.reshape(self.pixels, self.bands).T

    @classmethod
    def ingest(cls, data: np.ndarray) -> "SpectralCube":
        """Build a cube from raw scan values, rescaling to [0, 1] if needed."""
        d = np.asarray(data, dtype=np.float64)
        if d.ndim == 2:
            d = d[:, :, None]
        if not np.all(np.isfinite(d)):
            raise ParameterError("cube values must be finite")
        if d.size and d.min() < 0.0:
            raise ParameterError("cube values must be nonnegative")
        peak = d.max() if d.size else 0.0
        if peak > 1.0:
            d = d / peak
        return cls(d)

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, width: int, height: int, clamp: bool = False) -> "SpectralCube":
        """Fold a (bands, pixels) matrix into a cube; ``clamp`` clips to [0, 1]."""
        m = np.asarray(matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[1] != width * height:
            raise DimensionMismatchError(
                f"matrix has {m.shape} but {width}x{height} pixels were requested"
            )
        d = m.T.reshape(height, width, m.shape[0])
        if clamp:
            d = np.clip(d, 0.0, 1.0)
        return cls(d)


@dataclass(frozen=True)
class SamplingMask:
    """Binary per-pixel sampling decision plus the commanded budget.

    ``budget`` records the commanded sampling rate; the realized mean of a
    stochastic mask may deviate from it.
    """

    bits: np.ndarray
    budget: float

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 2:
            raise DimensionMismatchError(f"mask bits must be 2-d, got shape {b.shape}")
        if not np.isin(b, (0, 1)).all():
            raise ParameterError("mask bits must be exactly 0 or 1")
        if not 0.0 <= self.budget <= 1.0:
            raise ParameterError(f"budget must lie in [0, 1], got {self.budget}")
        object.__setattr__(self, "bits", _frozen(b.astype(np.uint8)))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def selected_count(self) -> int:
        return int(self.bits.sum())

    @property
    def realized_mean(self) -> float:
        return float(self.bits.mean())

    def to_selection(self) -> "SelectionOperator":
        return SelectionOperator.from_mask(self)


@dataclass(frozen=True)
class ProbabilityMap:
    """Continuous relaxation of a mask: per-pixel sampling probabilities.

    The mean is pinned to ``target_mean`` (within 1e-9) by the mean
    adjustment in :mod:`scanweave.mask`.
    """

    values: np.ndarray
    target_mean: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise DimensionMismatchError(f"probability map must be 2-d, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ParameterError("probability map values must be finite")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ParameterError("probability map values must lie in [0, 1]")
        if abs(float(v.mean()) - self.target_mean) > 1e-9:
            raise ParameterError(
                f"probability map mean {v.mean():.12f} deviates from target {self.target_mean}"
            )
        object.__setattr__(self, "values", _frozen(v))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SelectionOperator:
    """Kept-pixel index list derived from a mask, in row-major order."""

    indices: np.ndarray
    total_pixels: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1:
            raise DimensionMismatchError("selection indices must be 1-d")
        if idx.size:
            if idx[0] < 0 or idx[-1] >= self.total_pixels:
                raise IndexRangeError("selection index outside the pixel range")
            if not np.all(np.diff(idx) > 0):
                raise ParameterError("selection indices must be strictly increasing")
        object.__setattr__(self, "indices", _frozen(idx))

    @classmethod
    def from_mask(cls, mask: SamplingMask) -> "SelectionOperator":
        flat = mask.bits.reshape(-1)
        return cls(np.flatnonzero(flat), flat.size)

    @property
    def selected_count(self) -> int:
        return int(self.indices.size)

    def take(self, matrix: np.ndarray) -> np.ndarray:
        """Keep the selected columns of a (rows, total_pixels) matrix."""
        m = np.asarray(matrix)
        if m.ndim != 2 or m.shape[1] != self.total_pixels:
            raise DimensionMismatchError(
                f"matrix has {m.shape} but the selection addresses {self.total_pixels} pixels"
            )
        return m[:, self.indices]

    def embed(self, matrix: np.ndarray, fill: float = 0.0) -> np.ndarray:
        """Scatter selected columns back to a full-width matrix."""
        m = np.asarray(matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[1] != self.selected_count:
            raise DimensionMismatchError(
                f"matrix has {m.shape} but the selection keeps {self.selected_count} pixels"
            )
        out = np.full((m.shape[0], self.total_pixels), fill, dtype=np.float64)
        out[:, self.indices] = m
        return out


@dataclass(frozen=True)
class EndmemberDictionary:
    """Spectral basis: one column per endmember."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2:
            raise DimensionMismatchError("dictionary must be 2-d (rows x atoms)")
        if not np.all(np.isfinite(m)):
            raise ParameterError("dictionary entries must be finite")
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def atoms(self) -> int:
        return self.matrix.shape[1]

    def entries_in_unit_range(self, tol: float = 0.0) -> bool:
        return bool(self.matrix.min() >= -tol and self.matrix.max() <= 1.0 + tol)

    def max_column_norm(self) -> float:
        if self.atoms == 0:
            return 0.0
        return float(np.linalg.norm(self.matrix, axis=0).max())


@dataclass(frozen=True)
class AbundanceMap:
    """Per-pixel mixing coefficients: one row per endmember, one column per pixel."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2:
            raise DimensionMismatchError("abundances must be 2-d (atoms x pixels)")
        if not np.all(np.isfinite(m)):
            raise ParameterError("abundance entries must be finite")
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def atoms(self) -> int:
        return self.matrix.shape[0]

    @property
    def pixels(self) -> int:
        return self.matrix.shape[1]

    def is_nonnegative(self, tol: float = 0.0) -> bool:
        return bool(self.matrix.min() >= -tol)


def pair_sums_to_one(visible: AbundanceMap | np.ndarray, hidden: AbundanceMap | np.ndarray, tol: float = 1e-6) -> bool:
    """Check that the stacked per-pixel abundance columns sum to one."""
    av = _as_matrix(visible)
    anv = _as_matrix(hidden)
    if av.shape != anv.shape:
        raise DimensionMismatchError("visible/hidden abundance shapes differ")
    total = av.sum(axis=0) + anv.sum(axis=0)
    return bool(np.abs(total - 1.0).max() <= tol)


def _as_matrix(x) -> np.ndarray:
    if isinstance(x, (EndmemberDictionary, AbundanceMap)):
        return x.matrix
    if isinstance(x, SpectralCube):
        return x.matrix
    return np.asarray(x, dtype=np.float64)


def mix(dictionary, abundance) -> np.ndarray:
    """Linear mixing: every pixel spectrum is the dictionary applied to its coefficients."""
    d = _as_matrix(dictionary)
    a = _as_matrix(abundance)
    if d.ndim != 2 or a.ndim != 2 or d.shape[1] != a.shape[0]:
        raise DimensionMismatchError(
            f"cannot mix dictionary {d.shape} with abundances {a.shape}"
        )
    return d @ a


def subsample(source, selection: SelectionOperator) -> np.ndarray:
    """Keep the selected pixel columns of a cube (or matrix), order preserved."""
    return selection.take(_as_matrix(source))


def combine_visible_nonvisible(visible, hidden) -> np.ndarray:
    """Elementwise sum of the two components, unclamped.

    The [0, 1] clamp belongs to cube export (``SpectralCube.from_matrix`` with
    ``clamp=True``); the raw sum is kept for residual computations.
    """
    v = _as_matrix(visible)
    h = _as_matrix(hidden)
    if v.shape != h.shape:
        raise DimensionMismatchError(f"component shapes differ: {v.shape} vs {h.shape}")
    return v + h

"""Non-learned mask machinery: mean adjustment, binarization, heuristic samplers."""

from __future__ import annotations

import numpy as np

from .core import ProbabilityMap, SamplingMask, SpectralCube
from .errors import DegenerateInputError, ParameterError
from .rng import pixel_uniforms


def _water_fill(raw: np.ndarray, target_mean: float, max_rounds: int):
    """Scale ``raw`` to mean ``target_mean`` while keeping every entry in [0, 1].

    Plain proportional scaling can push entries above 1; those are clamped and
    the lost mass is redistributed over the remaining entries by rescaling
    them, repeatedly, until nothing new clamps. When the remaining entries
    carry no mass at all the deficit is spread uniformly over them. Returns
    the adjusted flat array plus the final bookkeeping (clamped set, fill
    mode) needed by the differentiable layer in :mod:`scanweave.masknet`.
    """
    n = raw.size
    target_sum = target_mean * n
    values = raw.astype(np.float64).copy()
    clamped = np.zeros(n, dtype=bool)
    uniform_fill = False
    for _ in range(max_rounds):
        free = ~clamped
        free_count = int(free.sum())
        if free_count == 0:
            raise DegenerateInputError("mean adjustment clamped every entry")
        need = target_sum - clamped.sum()
        free_sum = values[free].sum()
        if free_sum <= 0.0:
            values[free] = need / free_count
            uniform_fill = True
            break
        values[free] = values[free] * (need / free_sum)
        over = free & (values > 1.0)
        if not over.any():
            break
        values[over] = 1.0
        clamped |= over
    else:
        raise DegenerateInputError(
            f"mean adjustment did not reach a fixed point within {max_rounds} rounds"
        )
    np.clip(values, 0.0, 1.0, out=values)
    return values, clamped, uniform_fill


def mean_adjust(raw: np.ndarray, target_mean: float, max_rounds: int = 64, tol: float = 1e-9) -> ProbabilityMap:
    """Rescale a raw [0, 1] map so its mean equals ``target_mean`` exactly.

    Where no clamping occurs this is the pure proportional scaling
    ``(c / mean) * raw``; otherwise the water-filling redistribution keeps
    both the range and the mean. Idempotent, and order-preserving among the
    unclamped entries.
    """
    values = np.asarray(raw, dtype=np.float64)
    if values.ndim != 2:
        raise ParameterError(f"raw map must be 2-d, got shape {values.shape}")
    if not 0.0 < target_mean < 1.0:
        raise ParameterError(f"target mean must lie strictly inside (0, 1), got {target_mean}")
    if not np.all(np.isfinite(values)) or values.min() < 0.0 or values.max() > 1.0:
        raise ParameterError("raw map entries must be finite and lie in [0, 1]")
    if values.sum() <= 0.0:
        raise DegenerateInputError("raw map is identically zero; substitute a uniform map")
    adjusted, _, _ = _water_fill(values.reshape(-1), target_mean, max_rounds)
    adjusted = adjusted.reshape(values.shape)
    if abs(adjusted.mean() - target_mean) > tol:
        raise DegenerateInputError("mean adjustment failed to reach the target mean")
    return ProbabilityMap(adjusted, target_mean)


def binarize_bernoulli(prob_map: ProbabilityMap, seed: int) -> SamplingMask:
    """Independent per-pixel coin flips with the map values as probabilities.

    Pixel ``p`` compares its own counter-based uniform against the map value,
    so the draw is reproducible bit for bit under any evaluation order.
    """
    values = prob_map.values.reshape(-1)
    uniforms = pixel_uniforms(seed, values.size)
    bits = (uniforms < values).astype(np.uint8)
    return SamplingMask(bits.reshape(prob_map.values.shape), prob_map.target_mean)


def binarize_topk(prob_map: ProbabilityMap) -> SamplingMask:
    """Deterministic exact-budget binarization: the largest map values win.

    Exactly ``round(c * N)`` bits are set (round half up); ties go to the
    smaller row-major index so results are platform-independent.
    """
    values = prob_map.values.reshape(-1)
    count = int(np.floor(prob_map.target_mean * values.size + 0.5))
    order = np.argsort(-values, kind="stable")
    bits = np.zeros(values.size, dtype=np.uint8)
    bits[order[:count]] = 1
    return SamplingMask(bits.reshape(prob_map.values.shape), prob_map.target_mean)


def random_mask(width: int, height: int, rate: float, seed: int) -> SamplingMask:
    """I.i.d. Bernoulli(rate) mask; bit-reproducible for a fixed seed."""
    if not 0.0 <= rate <= 1.0:
        raise ParameterError(f"rate must lie in [0, 1], got {rate}")
    uniforms = pixel_uniforms(seed, width * height)
    bits = (uniforms < rate).astype(np.uint8)
    return SamplingMask(bits.reshape(height, width), rate)


def _sobel_magnitude(channel: np.ndarray) -> np.ndarray:
    p = np.pad(channel, 1, mode="reflect")
    gx = (
        (p[:-2, 2:] + 2.0 * p[1:-1, 2:] + p[2:, 2:])
        - (p[:-2, :-2] + 2.0 * p[1:-1, :-2] + p[2:, :-2])
    )
    gy = (
        (p[2:, :-2] + 2.0 * p[2:, 1:-1] + p[2:, 2:])
        - (p[:-2, :-2] + 2.0 * p[:-2, 1:-1] + p[:-2, 2:])
    )
    return np.sqrt(gx * gx + gy * gy)


def gradient_saliency(guide) -> np.ndarray:
    """Normalized local gradient magnitude of a guide image, channel-summed."""
    data = guide.data if isinstance(guide, SpectralCube) else np.asarray(guide, dtype=np.float64)
    if data.ndim == 2:
        data = data[:, :, None]
    mag = np.zeros(data.shape[:2], dtype=np.float64)
    for k in range(data.shape[2]):
        mag += _sobel_magnitude(data[:, :, k])
    peak = mag.max()
    if peak > 0.0:
        mag /= peak
    return mag


def gradient_adaptive_mask(guide, rate: float, seed: int, mode: str = "bernoulli") -> SamplingMask:
    """Edge-seeking sampler: gradient saliency blended with a uniform floor.

    The floor keeps half the budget spread evenly so flat regions are still
    covered; on a constant image the result is distributed exactly like
    :func:`random_mask`.
    """
    if not 0.0 < rate < 1.0:
        raise ParameterError(f"rate must lie strictly inside (0, 1), got {rate}")
    saliency = 0.5 * gradient_saliency(guide) + 0.5
    prob_map = mean_adjust(saliency, rate)
    if mode == "bernoulli":
        return binarize_bernoulli(prob_map, seed)
    if mode == "topk":
        return binarize_topk(prob_map)
    raise ParameterError(f"unknown binarization mode {mode!r}")

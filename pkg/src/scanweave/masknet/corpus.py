"""Synthetic grayscale corpora for training and evaluating the mask network."""

from __future__ import annotations

import numpy as np


def synthetic_edge_corpus(count: int, size: int = 32, seed: int = 0) -> list[np.ndarray]:
    """Piecewise-constant images split by a random line, plus a mild ramp.

    Each image has one strong oriented edge (contrast at least 0.35) and an
    optional rectangle; reconstruction error under a smoothing reconstructor
    concentrates at the edges, which is the structure an adaptive sampler
    should learn to target.
    """
    rng = np.random.default_rng(seed)
    rows, cols = np.indices((size, size))
    images = []
    for _ in range(count):
        theta = rng.uniform(0.0, np.pi)
        normal = np.array([np.cos(theta), np.sin(theta)])
        offset = rng.uniform(0.25, 0.75) * size
        side = (rows - size / 2) * normal[0] + (cols - size / 2) * normal[1] + (offset - size / 2)
        low = rng.uniform(0.05, 0.45)
        high = low + rng.uniform(0.35, 0.5)
        img = np.where(side > 0, high, low)
        if rng.random() < 0.5:
            r0, c0 = rng.integers(2, size - 10, size=2)
            h, w = rng.integers(4, 8, size=2)
            img = img.copy()
            img[r0 : r0 + h, c0 : c0 + w] = rng.uniform(0.05, 0.95)
        ramp = rng.uniform(-0.08, 0.08) * (cols / size) + rng.uniform(-0.08, 0.08) * (rows / size)
        images.append(np.clip(img + ramp, 0.0, 1.0))
    return images

"""Training loop for the mask network against a frozen reconstructor.

The reconstructor stays fixed; only the mask network is optimized, using the
continuous probability map as the differentiable surrogate for the binary
mask. Binary masks are drawn only at evaluation time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ParameterError
from ..core import ProbabilityMap
from ..mask import binarize_bernoulli, random_mask
from ..metrics import psnr, rmse
from ..rng import derive_seed
from .model import MaskNetParams, forward, netm_forward
from .reconstruct import NormalizedConvolution
from .tape import Tape


@dataclass
class TrainConfig:
    rate: float = 0.1
    epochs: int = 50
    batch_size: int = 16
    learning_rate: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0


@dataclass
class TrainResult:
    params: MaskNetParams
    epoch_losses: list[float] = field(default_factory=list)
    diverged: bool = False


class Adam:
    """Adaptive-moment stochastic gradient descent over named tensors."""

    def __init__(self, tensors: dict[str, np.ndarray], cfg: TrainConfig):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.t = 0

    def step(self, tensors: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        c = self.cfg
        self.t += 1
        bias1 = 1.0 - c.beta1**self.t
        bias2 = 1.0 - c.beta2**self.t
        for name, g in grads.items():
            self.m[name] = c.beta1 * self.m[name] + (1.0 - c.beta1) * g
            self.v[name] = c.beta2 * self.v[name] + (1.0 - c.beta2) * g * g
            update = (self.m[name] / bias1) / (np.sqrt(self.v[name] / bias2) + c.adam_eps)
            tensors[name] -= c.learning_rate * update


def _as_batch_array(corpus, in_channels: int) -> np.ndarray:
    imgs = []
    for img in corpus:
        a = np.asarray(img, dtype=np.float64)
        if a.ndim == 2:
            a = a[None, :, :]
        elif a.ndim == 3:
            a = a.transpose(2, 0, 1)
        if a.shape[0] != in_channels:
            raise ParameterError(f"corpus image has {a.shape[0]} channels, expected {in_channels}")
        imgs.append(a)
    return np.stack(imgs)


def batch_loss(params: MaskNetParams, batch: np.ndarray, rate: float,
               reconstructor, training: bool = True) -> tuple[float, dict[str, np.ndarray]]:
    """Mean squared reconstruction loss of a batch and its parameter gradients."""
    tape = Tape()
    prob, leaves = forward(tape, params, batch, rate, training=training)
    z = tape.leaf(batch)
    corrupted = tape.mul(z, prob)
    restored = reconstructor.apply(tape, corrupted, prob)
    loss = tape.mse(restored, batch)
    tape.backward(loss)
    grads = {name: (leaf.adj if leaf.adj is not None else np.zeros_like(leaf.value))
             for name, leaf in leaves.items()}
    return float(loss.value), grads


def train_netm(params: MaskNetParams, corpus, cfg: TrainConfig,
               reconstructor=None) -> TrainResult:
    """Optimize the mask network on an image corpus; returns updated params.

    Aborts on a non-finite loss and hands back the last end-of-epoch
    checkpoint. Zero epochs return the initialization unchanged.
    """
    if reconstructor is None:
        reconstructor = NormalizedConvolution()
    if len(corpus) == 0:
        raise ParameterError("training corpus is empty")
    data = _as_batch_array(corpus, params.config.in_channels)
    params = params.copy()
    result = TrainResult(params=params)
    if cfg.epochs == 0:
        return result
    opt = Adam(params.tensors, cfg)
    rng = np.random.default_rng(cfg.seed)
    checkpoint = params.copy()
    for _ in range(cfg.epochs):
        order = rng.permutation(len(data))
        losses = []
        for start in range(0, len(data), cfg.batch_size):
            batch = data[order[start : start + cfg.batch_size]]
            loss, grads = batch_loss(params, batch, cfg.rate, reconstructor)
            if not np.isfinite(loss):
                result.params = checkpoint
                result.diverged = True
                return result
            opt.step(params.tensors, grads)
            losses.append(loss)
        result.epoch_losses.append(float(np.mean(losses)))
        checkpoint = params.copy()
    result.params = params
    return result


def grad_check(params: MaskNetParams, guide: np.ndarray, rate: float,
               reconstructor=None, samples: int = 120, h: float = 1e-4, seed: int = 0) -> float:
    """Max relative error of tape adjoints vs central finite differences.

    The full training loss (forward, corruption, reconstruction, MSE) is
    differentiated; ``samples`` parameter coordinates are probed.
    """
    if reconstructor is None:
        reconstructor = NormalizedConvolution()
    batch = np.asarray(guide, dtype=np.float64)
    if batch.ndim == 2:
        batch = batch[None, None]
    _, grads = batch_loss(params, batch, rate, reconstructor, training=False)

    def loss_at(p: MaskNetParams) -> float:
        value, _ = batch_loss(p, batch, rate, reconstructor, training=False)
        return value

    rng = np.random.default_rng(seed)
    names = sorted(params.tensors)
    flat_sizes = [params.tensors[n].size for n in names]
    total = int(np.sum(flat_sizes))
    picks = rng.choice(total, size=min(samples, total), replace=False)
    offsets = np.cumsum([0] + flat_sizes)
    worst = 0.0
    for pick in picks:
        slot = int(np.searchsorted(offsets, pick, side="right") - 1)
        name = names[slot]
        local = int(pick - offsets[slot])
        probe = params.copy()
        flat = probe.tensors[name].reshape(-1)
        base = flat[local]
        flat[local] = base + h
        up = loss_at(probe)
        flat[local] = base - h
        down = loss_at(probe)
        flat[local] = base
        numeric = (up - down) / (2.0 * h)
        analytic = grads[name].reshape(-1)[local]
        # guard the denominator: below ~1e-6 the central difference itself is
        # noise-dominated and a ratio of noises says nothing
        worst = max(worst, abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-6))
    return worst


def reconstruction_psnr_binarized(params: MaskNetParams, image: np.ndarray, rate: float,
                                  reconstructor, bernoulli_seeds, base_seed: int = 0) -> float:
    """Mean reconstruction PSNR over Bernoulli draws of the learned map."""
    prob = netm_forward(params, image, rate)
    return _mask_psnr_over_seeds(prob, image, reconstructor, bernoulli_seeds, base_seed)


def reconstruction_psnr_continuous(params: MaskNetParams, image: np.ndarray, rate: float,
                                   reconstructor) -> float:
    """Reconstruction PSNR along the continuous (training-time) surrogate path."""
    prob = netm_forward(params, image, rate)
    z = np.asarray(image, dtype=np.float64)
    restored = reconstructor.apply_np(z * prob.values, prob.values)
    return psnr(restored, z)


def random_mask_psnr(image: np.ndarray, rate: float, reconstructor,
                     bernoulli_seeds, base_seed: int = 0) -> float:
    """Baseline: same reconstructor driven by uniform random masks."""
    z = np.asarray(image, dtype=np.float64)
    values = []
    for s in bernoulli_seeds:
        mask = random_mask(z.shape[1], z.shape[0], rate, derive_seed(base_seed, f"rand/{s}"))
        bits = mask.bits.astype(np.float64)
        restored = reconstructor.apply_np(z * bits, bits)
        values.append(psnr(restored, z))
    return float(np.mean(values))


def _mask_psnr_over_seeds(prob: ProbabilityMap, image, reconstructor, bernoulli_seeds, base_seed: int) -> float:
    z = np.asarray(image, dtype=np.float64)
    values = []
    for s in bernoulli_seeds:
        mask = binarize_bernoulli(prob, derive_seed(base_seed, f"ber/{s}"))
        bits = mask.bits.astype(np.float64)
        restored = reconstructor.apply_np(z * bits, bits)
        values.append(psnr(restored, z))
    return float(np.mean(values))

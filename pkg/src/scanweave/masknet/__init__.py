"""Trainable mask-generation network with its own reverse-mode tape engine."""

from .model import MaskNetConfig, MaskNetParams, forward, netm_forward
from .reconstruct import NormalizedConvolution, WeightedHarmonic, gaussian_kernel, single_pixel_kernel
from .serialize import load_params, save_params
from .tape import Node, Tape
from .training import (
    Adam,
    TrainConfig,
    TrainResult,
    batch_loss,
    grad_check,
    random_mask_psnr,
    reconstruction_psnr_binarized,
    reconstruction_psnr_continuous,
    train_netm,
)

__all__ = [
    "Adam",
    "MaskNetConfig",
    "MaskNetParams",
    "Node",
    "NormalizedConvolution",
    "Tape",
    "TrainConfig",
    "TrainResult",
    "WeightedHarmonic",
    "batch_loss",
    "forward",
    "gaussian_kernel",
    "grad_check",
    "load_params",
    "netm_forward",
    "random_mask_psnr",
    "reconstruction_psnr_binarized",
    "reconstruction_psnr_continuous",
    "save_params",
    "single_pixel_kernel",
    "train_netm",
]

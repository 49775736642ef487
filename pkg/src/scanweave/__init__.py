"""Budget-constrained adaptive sampling masks and RGB-guided spectral scan reconstruction."""

from .core import (
    AbundanceMap,
    EndmemberDictionary,
    ProbabilityMap,
    SamplingMask,
    SelectionOperator,
    SpectralCube,
    combine_visible_nonvisible,
    mix,
    pair_sums_to_one,
    subsample,
)
from .mask import (
    binarize_bernoulli,
    binarize_topk,
    gradient_adaptive_mask,
    mean_adjust,
    random_mask,
)
from .metrics import psnr, rmse, sam, sam_details

__version__ = "0.1.0"

__all__ = [
    "AbundanceMap",
    "EndmemberDictionary",
    "ProbabilityMap",
    "SamplingMask",
    "SelectionOperator",
    "SpectralCube",
    "binarize_bernoulli",
    "binarize_topk",
    "combine_visible_nonvisible",
    "gradient_adaptive_mask",
    "mean_adjust",
    "mix",
    "pair_sums_to_one",
    "psnr",
    "random_mask",
    "rmse",
    "sam",
    "sam_details",
    "subsample",
]

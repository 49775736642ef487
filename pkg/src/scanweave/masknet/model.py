"""The trainable mask-generation network.

A small fully-convolutional residual network maps a guide image to a
probability map: head convolution, a stack of residual blocks (two 3x3
convolutions each, parametric-ReLU activation, optional batch norm), a
1-channel projection, a sigmoid, and the budget-enforcing mean-adjustment
layer. Zero padding keeps spatial dimensions, so any input size >= 8x8 works
with the same weights. The mean constraint is architectural: every forward
pass ends with the adjustment layer, so the output mean is the commanded rate
no matter what the weights are.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import ProbabilityMap, SpectralCube
from ..errors import ParameterError, TrainingDivergenceError
from .tape import Node, Tape


@dataclass(frozen=True)
class MaskNetConfig:
    in_channels: int = 1
    features: int = 16
    blocks: int = 3
    batch_norm: bool = False

    def __post_init__(self):
        if self.in_channels < 1 or self.features < 1 or self.blocks < 1:
            raise ParameterError("network dimensions must be positive")


@dataclass
class MaskNetParams:
    """Named weight tensors plus (optional) batch-norm running statistics."""

    config: MaskNetConfig
    tensors: dict[str, np.ndarray]
    running_stats: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def initialize(cls, config: MaskNetConfig, seed: int = 0) -> "MaskNetParams":
        rng = np.random.default_rng(seed)
        f = config.features
        tensors: dict[str, np.ndarray] = {}

        def conv_init(name, cout, cin):
            fan_in = cin * 9
            tensors[f"{name}.w"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(cout, cin, 3, 3))
            tensors[f"{name}.b"] = np.zeros(cout)

        conv_init("head", f, config.in_channels)
        tensors["head.slope"] = np.full(f, 0.25)
        for i in range(config.blocks):
            conv_init(f"block{i}.conv1", f, f)
            tensors[f"block{i}.slope"] = np.full(f, 0.25)
            conv_init(f"block{i}.conv2", f, f)
        conv_init("proj", 1, f)
        running = {}
        if config.batch_norm:
            for i in range(config.blocks):
                for j in (1, 2):
                    tensors[f"block{i}.bn{j}.gamma"] = np.ones(f)
                    tensors[f"block{i}.bn{j}.beta"] = np.zeros(f)
                    running[f"block{i}.bn{j}.mean"] = np.zeros(f)
                    running[f"block{i}.bn{j}.var"] = np.ones(f)
        return cls(config, tensors, running)

    @classmethod
    def zeros(cls, config: MaskNetConfig) -> "MaskNetParams":
        params = cls.initialize(config, seed=0)
        for name in params.tensors:
            if not name.endswith(".gamma"):
                params.tensors[name] = np.zeros_like(params.tensors[name])
        return params

    def copy(self) -> "MaskNetParams":
        return MaskNetParams(
            self.config,
            {k: v.copy() for k, v in self.tensors.items()},
            {k: v.copy() for k, v in self.running_stats.items()},
        )

    def parameter_count(self) -> int:
        return sum(v.size for v in self.tensors.values())


def forward(tape: Tape, params: MaskNetParams, guide: np.ndarray, rate: float, training: bool = False,
            bn_momentum: float = 0.1) -> tuple[Node, dict[str, Node]]:
    """Run the network on a (batch, channels, H, W) guide batch.

    Returns the probability-map node (batch, 1, H, W) whose per-image mean is
    ``rate``, plus the leaf nodes of the trainable tensors (for reading
    gradients after the backward sweep). In training mode batch norm (when
    enabled) uses batch statistics and updates the running ones in place.
    """
    x = np.asarray(guide, dtype=np.float64)
    if x.ndim != 4 or x.shape[1] != params.config.in_channels:
        raise ParameterError(
            f"guide batch must be (n, {params.config.in_channels}, h, w), got {x.shape}"
        )
    if x.shape[2] < 8 or x.shape[3] < 8:
        raise ParameterError("guide images must be at least 8x8")
    if not 0.0 < rate < 1.0:
        raise ParameterError(f"rate must lie strictly inside (0, 1), got {rate}")

    leaves = {name: tape.leaf(value) for name, value in params.tensors.items()}
    cfg = params.config

    def apply_bn(h, key):
        if not cfg.batch_norm:
            return h
        gamma, beta = leaves[f"{key}.gamma"], leaves[f"{key}.beta"]
        if training:
            out, mu, var = tape.batch_norm_training(h, gamma, beta)
            params.running_stats[f"{key}.mean"] *= 1.0 - bn_momentum
            params.running_stats[f"{key}.mean"] += bn_momentum * mu
            params.running_stats[f"{key}.var"] *= 1.0 - bn_momentum
            params.running_stats[f"{key}.var"] += bn_momentum * var
            return out
        return tape.batch_norm(h, gamma, beta, params.running_stats[f"{key}.mean"], params.running_stats[f"{key}.var"])

    h = tape.conv2d(tape.leaf(x), leaves["head.w"], leaves["head.b"])
    h = tape.prelu(h, leaves["head.slope"])
    for i in range(cfg.blocks):
        y = tape.conv2d(h, leaves[f"block{i}.conv1.w"], leaves[f"block{i}.conv1.b"])
        y = apply_bn(y, f"block{i}.bn1")
        y = tape.prelu(y, leaves[f"block{i}.slope"])
        y = tape.conv2d(y, leaves[f"block{i}.conv2.w"], leaves[f"block{i}.conv2.b"])
        y = apply_bn(y, f"block{i}.bn2")
        h = tape.add(h, y)
    h = tape.conv2d(h, leaves["proj.w"], leaves["proj.b"])
    h = tape.sigmoid(h)
    out = tape.mean_adjust(h, rate)
    return out, leaves


def _guide_to_batch(guide, in_channels: int) -> np.ndarray:
    data = guide.data if isinstance(guide, SpectralCube) else np.asarray(guide, dtype=np.float64)
    if data.ndim == 2:
        data = data[:, :, None]
    if data.shape[2] != in_channels:
        raise ParameterError(
            f"guide has {data.shape[2]} channels but the network expects {in_channels}"
        )
    return data.transpose(2, 0, 1)[None, :, :, :]


def netm_forward(params: MaskNetParams, guide, rate: float) -> ProbabilityMap:
    """Inference on a single guide image (2-d array, (H, W, C) array, or cube)."""
    batch = _guide_to_batch(guide, params.config.in_channels)
    tape = Tape()
    out, _ = forward(tape, params, batch, rate, training=False)
    values = out.value[0, 0]
    if not np.all(np.isfinite(values)):
        raise TrainingDivergenceError("network produced non-finite activations")
    return ProbabilityMap(values, rate)

"""
Deep Convolutional Generative Prior Network
Maps a frozen uniform latent seed to the f×c discriminant matrix S
through a DCGAN-style stack of fractionally strided convolutions
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from errors import ConfigError, ContractError, DimensionError
from tensor_core import (
    ParameterSet,
    Tensor,
    batchnorm2d,
    bias_add,
    conv2d_transpose,
    matmul,
    relu,
    reshape,
    tanh,
    transpose,
)

logger = logging.getLogger(__name__)

LATENT_DIM = 100
KERNEL = 4
SEED_SIDE = 4


@dataclass
class LatentSeed:
    """Z: fixed uniform[-1, 1] generator input"""
    values: np.ndarray
    frozen: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32).reshape(-1)
        if self.values.shape[0] != LATENT_DIM:
            raise DimensionError(f"latent seed must have {LATENT_DIM} values, got {self.values.shape[0]}")

    def freeze(self):
        self.frozen = True

    def as_tensor(self) -> Tensor:
        return Tensor(self.values.reshape(1, -1))


@dataclass
class DiscriminantMatrix:
    """S: f×c projection with entries in (-1, 1)"""
    values: Tensor

    @property
    def feature_width(self) -> int:
        return self.values.shape[0]

    @property
    def classes(self) -> int:
        return self.values.shape[1]


@dataclass
class GeneratorSpec:
    """Generator geometry; f must be a square whose side is 4·2^k with k >= 1"""
    classes: int
    feature_width: int
    base_channels: int = 32
    bn_eps: float = 1e-5
    resample_latent: bool = False

    def __post_init__(self):
        if self.classes < 2:
            raise ConfigError(f"generator needs at least 2 classes, got {self.classes}")
        side = math.isqrt(self.feature_width) if self.feature_width > 0 else 0
        if side * side != self.feature_width:
            raise ConfigError(
                f"feature width f={self.feature_width} is not a perfect square "
                f"(output side {side} gives {side * side})"
            )
        ratio = side // SEED_SIDE
        if side < 2 * SEED_SIDE or side % SEED_SIDE or ratio & (ratio - 1):
            raise ConfigError(f"output side {side} (f={self.feature_width}) must be 4·2^k with side >= 8")
        if self.base_channels < 2 ** (self.stages - 1):
            raise ConfigError(
                f"base_channels={self.base_channels} cannot halve across {self.stages} stages"
            )

    @property
    def side(self) -> int:
        return math.isqrt(self.feature_width)

    @property
    def stages(self) -> int:
        return int(math.log2(self.side // SEED_SIDE))


class GeneratorParams(ParameterSet):
    """Φ: generator tensors plus the forward-call counter used by purity checks"""

    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        self.spec = spec
        self.forward_calls = 0


def sample_latent(rng_seed: int) -> LatentSeed:
    """100 i.i.d. uniform[-1, 1] values, reproducible from the seed"""
    rng = np.random.default_rng(rng_seed)
    return LatentSeed(rng.uniform(-1.0, 1.0, size=LATENT_DIM))


def build_generator(c: int, f: int, base_channels: int, rng_seed: int,
                    spec: Optional[GeneratorSpec] = None) -> GeneratorParams:
    """DCGAN initialization: conv/dense weights N(0, 0.02), batchnorm gamma N(1, 0.02)"""
    spec = spec or GeneratorSpec(classes=c, feature_width=f, base_channels=base_channels)
    rng = np.random.default_rng(rng_seed)
    params = GeneratorParams(spec)

    def normal(shape, mean=0.0):
        return Tensor(rng.normal(mean, 0.02, size=shape), requires_grad=True)

    def add_bn(prefix: str, channels: int):
        params.add(f"{prefix}.gamma", normal((channels,), mean=1.0))
        params.add(f"{prefix}.beta", Tensor(np.zeros(channels), requires_grad=True))
        params.add(f"{prefix}.running_mean", Tensor(np.zeros(channels)))
        params.add(f"{prefix}.running_var", Tensor(np.ones(channels)))

    channels = spec.base_channels
    params.add("project.weight", normal((LATENT_DIM, channels * SEED_SIDE * SEED_SIDE)))
    params.add("project.bias", Tensor(np.zeros(channels * SEED_SIDE * SEED_SIDE), requires_grad=True))
    add_bn("project.bn", channels)

    for i in range(spec.stages - 1):
        params.add(f"stage{i}.weight", normal((channels, channels // 2, KERNEL, KERNEL)))
        add_bn(f"stage{i}.bn", channels // 2)
        channels //= 2
    params.add("output.weight", normal((channels, spec.classes, KERNEL, KERNEL)))

    logger.debug(f"Built generator: {spec.stages} upsampling stages to {spec.side}×{spec.side}×{spec.classes}")
    return params


def generator_forward(z: LatentSeed, params: GeneratorParams, mode: str = 'train') -> DiscriminantMatrix:
    """Z → dense 4×4 seed → (conv_transpose → batchnorm → relu)* → conv_transpose → tanh → S"""
    if mode not in ('train', 'eval'):
        raise ContractError(f"mode must be 'train' or 'eval', got '{mode}'")
    spec = params.spec
    training = mode == 'train'

    def bn(x: Tensor, prefix: str) -> Tensor:
        return batchnorm2d(
            x, params[f"{prefix}.gamma"], params[f"{prefix}.beta"],
            eps=spec.bn_eps,
            training=training,
            running_mean=params[f"{prefix}.running_mean"],
            running_var=params[f"{prefix}.running_var"],
        )

    x = matmul(z.as_tensor(), params["project.weight"])
    x = bias_add(x, params["project.bias"], axis=1)
    x = reshape(x, (1, spec.base_channels, SEED_SIDE, SEED_SIDE))
    x = relu(bn(x, "project.bn"))

    for i in range(spec.stages - 1):
        x = conv2d_transpose(x, params[f"stage{i}.weight"], stride=2, pad=1)
        x = relu(bn(x, f"stage{i}.bn"))

    x = tanh(conv2d_transpose(x, params["output.weight"], stride=2, pad=1))
    # row r of S is spatial position (r // s, r % s) across all c channels
    s = spec.side
    volume = reshape(x, (spec.classes, s * s))
    params.forward_calls += 1
    return DiscriminantMatrix(transpose(volume))


def validate_shape_contract(feature_width: int, classes: int, params: GeneratorParams):
    """Reject a backbone/generator pairing whose f or c disagree"""
    spec = params.spec
    if spec.feature_width != feature_width:
        raise ConfigError(f"backbone feature width {feature_width} != generator S rows {spec.feature_width}")
    if spec.classes != classes:
        raise ConfigError(f"dataset has {classes} classes but generator S has {spec.classes} columns")

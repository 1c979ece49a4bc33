"""
Projective Backbone Network
Small VGG-style conv/pool/FC stack mapping images to non-negative feature vectors,
plus the CSV path for features exported from any pretrained extractor
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import ConfigError, ContractError, DatasetError, DimensionError, ParseError, ReportError
from tensor_core import (
    ParameterSet,
    Tensor,
    batchnorm2d,
    bias_add,
    conv2d,
    matmul,
    maxpool2d,
    relu,
    reshape,
)

logger = logging.getLogger(__name__)

MODES = ('train', 'eval')


@dataclass
class ImageSample:
    """One C×H×W image with values in [0, 1] and its class index"""
    pixels: np.ndarray
    label: int

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float32)
        if self.pixels.ndim != 3:
            raise DimensionError(f"image must be C×H×W, got {self.pixels.shape}")
        if not np.all((self.pixels >= 0.0) & (self.pixels <= 1.0)):
            raise DatasetError(f"image values must lie in [0, 1], got range [{self.pixels.min()}, {self.pixels.max()}]")
        if self.label < 0:
            raise ContractError(f"label must be non-negative, got {self.label}")


@dataclass
class FeatureVec:
    """Non-negative feature row of width f; label is set for dataset entries"""
    values: np.ndarray
    label: Optional[int] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32).reshape(-1)
        if np.any(self.values < 0):
            raise ContractError("feature vectors must be non-negative")

    @property
    def width(self) -> int:
        return int(self.values.shape[0])

    def as_row(self) -> Tensor:
        return Tensor(self.values.reshape(1, -1))


@dataclass
class ConvBlockSpec:
    """`convs` same-padded convolutions with `channels` outputs, then an optional 2×2 max pool"""
    channels: int
    kernel: int = 3
    convs: int = 1
    pool: bool = True

    def __post_init__(self):
        if self.channels < 1 or self.convs < 1:
            raise ConfigError(f"conv block needs positive channels and conv count, got {self}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ConfigError(f"conv kernel must be a positive odd size, got {self.kernel}")


@dataclass
class ArchitectureSpec:
    """Layer chain of the projective network"""
    input_side: int = 32
    in_channels: int = 3
    conv_blocks: List[ConvBlockSpec] = field(default_factory=lambda: [ConvBlockSpec(8), ConvBlockSpec(16)])
    fc_widths: List[int] = field(default_factory=lambda: [256])
    batch_norm: bool = False

    def __post_init__(self):
        self.conv_blocks = [b if isinstance(b, ConvBlockSpec) else ConvBlockSpec(**b) for b in self.conv_blocks]
        if self.input_side < 1 or self.in_channels < 1:
            raise ConfigError(f"invalid input geometry {self.in_channels}×{self.input_side}×{self.input_side}")
        if not self.fc_widths or any(w < 1 for w in self.fc_widths):
            raise ConfigError(f"fc_widths must be a non-empty list of positive widths, got {self.fc_widths}")
        side = self.input_side
        for i, block in enumerate(self.conv_blocks):
            if block.pool:
                if side < 2:
                    raise ConfigError(f"conv block {i} pools a {side}×{side} map")
                side //= 2
        self._final_side = side

    @property
    def feature_width(self) -> int:
        return self.fc_widths[-1]

    @property
    def flattened_width(self) -> int:
        channels = self.conv_blocks[-1].channels if self.conv_blocks else self.in_channels
        return channels * self._final_side * self._final_side


class BackboneParams(ParameterSet):
    """Θ: named tensors of the projective network, tied to its architecture"""

    def __init__(self, spec: ArchitectureSpec):
        super().__init__()
        self.spec = spec

    @property
    def feature_width(self) -> int:
        return self.spec.feature_width


def parameter_count(spec: ArchitectureSpec) -> int:
    """Analytic trainable parameter count for an architecture"""
    total = 0
    channels = spec.in_channels
    for block in spec.conv_blocks:
        for _ in range(block.convs):
            total += channels * block.channels * block.kernel * block.kernel + block.channels
            if spec.batch_norm:
                total += 2 * block.channels
            channels = block.channels
    width = spec.flattened_width
    for out in spec.fc_widths:
        total += width * out + out
        width = out
    return total


def _he_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    limit = math.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


def build_backbone(spec: ArchitectureSpec, rng_seed: int) -> BackboneParams:
    """He-uniform weights, zero biases, reproducible from the seed"""
    rng = np.random.default_rng(rng_seed)
    params = BackboneParams(spec)
    channels = spec.in_channels
    for i, block in enumerate(spec.conv_blocks):
        for j in range(block.convs):
            prefix = f"block{i}.conv{j}"
            shape = (block.channels, channels, block.kernel, block.kernel)
            fan_in = channels * block.kernel * block.kernel
            params.add(f"{prefix}.weight", Tensor(_he_uniform(rng, shape, fan_in), requires_grad=True))
            params.add(f"{prefix}.bias", Tensor(np.zeros(block.channels), requires_grad=True))
            if spec.batch_norm:
                bn = f"block{i}.bn{j}"
                params.add(f"{bn}.gamma", Tensor(np.ones(block.channels), requires_grad=True))
                params.add(f"{bn}.beta", Tensor(np.zeros(block.channels), requires_grad=True))
                params.add(f"{bn}.running_mean", Tensor(np.zeros(block.channels)))
                params.add(f"{bn}.running_var", Tensor(np.ones(block.channels)))
            channels = block.channels

    width = spec.flattened_width
    for i, out in enumerate(spec.fc_widths):
        params.add(f"fc{i}.weight", Tensor(_he_uniform(rng, (width, out), width), requires_grad=True))
        params.add(f"fc{i}.bias", Tensor(np.zeros(out), requires_grad=True))
        width = out

    logger.debug(f"Built backbone: f={spec.feature_width}, {params.count()} trainable parameters")
    return params


def forward_batch(images: Tensor, params: BackboneParams, mode: str = 'eval') -> Tensor:
    """N×C×H×W images → N×f non-negative features (differentiable)"""
    if mode not in MODES:
        raise ContractError(f"mode must be one of {MODES}, got '{mode}'")
    spec = params.spec
    expected = (spec.in_channels, spec.input_side, spec.input_side)
    if images.data.ndim != 4 or images.shape[1:] != expected:
        raise DimensionError(f"backbone expects N×{expected[0]}×{expected[1]}×{expected[2]} images, got {images.shape}")

    training = mode == 'train'
    x = images
    for i, block in enumerate(spec.conv_blocks):
        for j in range(block.convs):
            prefix = f"block{i}.conv{j}"
            x = conv2d(x, params[f"{prefix}.weight"], stride=1, pad=block.kernel // 2)
            x = bias_add(x, params[f"{prefix}.bias"], axis=1)
            if spec.batch_norm:
                bn = f"block{i}.bn{j}"
                x = batchnorm2d(
                    x, params[f"{bn}.gamma"], params[f"{bn}.beta"],
                    training=training,
                    running_mean=params[f"{bn}.running_mean"],
                    running_var=params[f"{bn}.running_var"],
                )
            x = relu(x)
        if block.pool:
            x = maxpool2d(x, 2)

    x = reshape(x, (images.shape[0], -1))
    for i in range(len(spec.fc_widths)):
        x = matmul(x, params[f"fc{i}.weight"])
        x = bias_add(x, params[f"fc{i}.bias"], axis=1)
        x = relu(x)
    return x


def backbone_forward(img: ImageSample, params: BackboneParams, mode: str = 'eval') -> FeatureVec:
    """Single-image projection onto the feature domain"""
    batch = Tensor(img.pixels[np.newaxis])
    features = forward_batch(batch, params, mode)
    return FeatureVec(features.data[0].copy(), label=img.label)


Sample = Union[ImageSample, FeatureVec]


def extract_features(samples: Sequence[Sample], params: Optional[BackboneParams], batch_size: int = 64) -> List[FeatureVec]:
    """Eval-mode features for a sample list; feature entries pass through unchanged"""
    if samples and isinstance(samples[0], FeatureVec):
        return list(samples)
    if params is None:
        raise ContractError("image samples need backbone parameters for feature extraction")

    features: List[FeatureVec] = []
    for start in range(0, len(samples), batch_size):
        chunk = samples[start:start + batch_size]
        batch = Tensor(np.stack([s.pixels for s in chunk]))
        out = forward_batch(batch, params, 'eval').data
        features.extend(FeatureVec(row.copy(), label=s.label) for row, s in zip(out, chunk))
    return features


def ingest_features(path: Union[str, Path]) -> List[Tuple[FeatureVec, int]]:
    """Parse a feature CSV: header `label,f0,...,f{f-1}`, '#' comments, non-negative floats"""
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        raise ParseError(f"cannot read feature file {path}: {e}") from e

    header: Optional[List[str]] = None
    width = 0
    samples: List[Tuple[FeatureVec, int]] = []
    for row_number, row in enumerate(csv.reader(text.splitlines()), start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if row[0].lstrip().startswith('#'):
            continue
        cells = [cell.strip() for cell in row]
        if header is None:
            expected = ['label'] + [f"f{i}" for i in range(len(cells) - 1)]
            if cells != expected or len(cells) < 2:
                raise ParseError(f"header must be 'label,f0,...', got '{','.join(cells)}'", row=row_number)
            header = cells
            width = len(cells) - 1
            continue
        if len(cells) != width + 1:
            raise ParseError(f"expected {width} features, found {len(cells) - 1}", row=row_number)
        try:
            label = int(cells[0])
            values = np.array([float(c) for c in cells[1:]], dtype=np.float64)
        except ValueError as e:
            raise ParseError(f"non-numeric cell ({e})", row=row_number) from e
        if label < 0:
            raise ParseError(f"negative label {label}", row=row_number)
        if not np.all(np.isfinite(values)):
            raise ParseError("non-finite feature value", row=row_number)
        if np.any(values < 0):
            raise ParseError("negative feature value", row=row_number)
        samples.append((FeatureVec(values, label=label), label))

    if header is None or not samples:
        raise ParseError(f"feature file {path} holds no samples")
    logger.info(f"Ingested {len(samples)} feature rows (f={width}) from {path}")
    return samples


def export_features(path: Union[str, Path], features: Sequence[FeatureVec]) -> Path:
    """Write features in the CSV format read by ingest_features"""
    path = Path(path)
    if not features:
        raise ReportError("no features to export")
    width = features[0].width
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(['label'] + [f"f{i}" for i in range(width)])
            for feature in features:
                if feature.width != width:
                    raise DimensionError(f"feature width {feature.width} differs from {width}")
                writer.writerow([feature.label] + [format(float(v), '.9g') for v in feature.values])
    except OSError as e:
        raise ReportError(f"cannot write {path}: {e}") from e
    logger.info(f"Exported {len(features)} feature rows to {path}")
    return path

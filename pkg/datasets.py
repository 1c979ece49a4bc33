"""
Scene Datasets
Class-per-directory image loading, feature-CSV loading, synthetic blob scenes
and stratified train/test splitting
"""

import colorsys
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from backbone import FeatureVec, ImageSample, Sample, ingest_features
from errors import ConfigError, DatasetError, LoadError

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = {'.png', '.jpg', '.jpeg', '.tif', '.tiff', '.bmp', '.gif'}


@dataclass
class Dataset:
    """Labelled samples (all images or all feature rows) with c classes"""
    name: str
    samples: List[Sample]
    classes: int
    class_names: List[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.class_names:
            self.class_names = [f"class_{k}" for k in range(self.classes)]
        if len(self.class_names) != self.classes:
            raise DatasetError(f"{self.classes} classes but {len(self.class_names)} class names")
        kinds = {type(s) for s in self.samples}
        if len(kinds) > 1:
            raise DatasetError(f"dataset '{self.name}' mixes images and feature rows")
        for sample in self.samples:
            if not 0 <= sample.label < self.classes:
                raise DatasetError(f"label {sample.label} outside [0, {self.classes})")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    @property
    def is_feature_set(self) -> bool:
        return bool(self.samples) and isinstance(self.samples[0], FeatureVec)

    def class_counts(self) -> Dict[int, int]:
        counts = np.bincount(self.labels, minlength=self.classes)
        return {k: int(n) for k, n in enumerate(counts)}

    def require_pairs(self):
        """Every class must hold at least two samples"""
        if self.classes < 2:
            raise DatasetError(f"dataset '{self.name}' needs at least 2 classes, has {self.classes}")
        sparse = {self.class_names[k]: n for k, n in self.class_counts().items() if n < 2}
        if sparse:
            raise DatasetError(f"dataset '{self.name}' has classes with fewer than 2 samples: {sparse}")

    def subset(self, indices: Sequence[int], name: str) -> "Dataset":
        return Dataset(name, [self.samples[i] for i in indices], self.classes, list(self.class_names))


@dataclass
class SplitSpec:
    """Per-class train fraction; splits are always stratified"""
    train_ratio: float
    rng_seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_ratio < 1.0:
            raise ConfigError(f"train_ratio must lie in (0, 1), got {self.train_ratio}")
        if not self.stratified:
            raise ConfigError("only stratified splits are supported")


@dataclass
class SyntheticSettings:
    """Desk-scale substitute for the remote-sensing benchmarks"""
    classes: int = 3
    per_class: int = 20
    image_side: int = 32
    noise: float = 0.05

    def __post_init__(self):
        if self.classes < 2:
            raise ConfigError(f"synthetic dataset needs at least 2 classes, got {self.classes}")
        if self.per_class < 4:
            raise ConfigError(f"synthetic dataset needs at least 4 images per class, got {self.per_class}")
        if self.image_side < 4:
            raise ConfigError(f"synthetic image side must be at least 4, got {self.image_side}")
        if self.noise < 0:
            raise ConfigError(f"noise must be non-negative, got {self.noise}")


def _load_image(path: Path, side: int) -> np.ndarray:
    try:
        with Image.open(path) as image:
            rgb = image.convert('RGB').resize((side, side), Image.Resampling.BILINEAR)
            pixels = np.asarray(rgb, dtype=np.float32) / 255.0
    except (UnidentifiedImageError, OSError) as e:
        raise LoadError(f"cannot decode image: {e}", path=str(path)) from e
    return np.ascontiguousarray(pixels.transpose(2, 0, 1))


def load_dataset(path: Union[str, Path], image_side: int = 32, name: Optional[str] = None) -> Dataset:
    """
    A directory loads as one class per sub-directory, indexed by sorted name,
    with every image resized to image_side. A file loads as a feature CSV.
    """
    path = Path(path)
    if not path.exists():
        raise LoadError("dataset path does not exist", path=str(path))

    if path.is_file():
        rows = ingest_features(path)
        classes = max(label for _, label in rows) + 1
        dataset = Dataset(name or path.stem, [feature for feature, _ in rows], classes)
        dataset.require_pairs()
        logger.info(f"Loaded feature dataset '{dataset.name}': {len(dataset)} rows, c={classes}")
        return dataset

    class_dirs = sorted(p for p in path.iterdir() if p.is_dir() and not p.name.startswith('.'))
    if not class_dirs:
        raise LoadError("no class directories found", path=str(path))

    samples: List[Sample] = []
    for label, class_dir in enumerate(class_dirs):
        files = sorted(p for p in class_dir.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise LoadError("empty class directory", path=str(class_dir))
        samples.extend(ImageSample(_load_image(f, image_side), label) for f in files)
        logger.debug(f"Class {label} '{class_dir.name}': {len(files)} images")

    dataset = Dataset(name or path.name, samples, len(class_dirs), [d.name for d in class_dirs])
    dataset.require_pairs()
    logger.info(f"Loaded image dataset '{dataset.name}': {len(dataset)} images, c={dataset.classes}")
    return dataset


def synth_dataset(classes: int, per_class: int, image_side: int, rng_seed: int, noise: float = 0.05) -> Dataset:
    """Each class gets its own base colour and blob position; images add jitter and gaussian noise"""
    settings = SyntheticSettings(classes, per_class, image_side, noise)
    rng = np.random.default_rng(rng_seed)
    side = settings.image_side
    rows, cols = np.mgrid[0:side, 0:side].astype(np.float32)
    radius = side / 4.0
    sigma = side / 8.0

    samples: List[Sample] = []
    for k in range(classes):
        base = np.array(colorsys.hsv_to_rgb(k / classes, 0.6, 0.7), dtype=np.float32)
        angle = 2 * math.pi * k / classes
        cy = side / 2.0 + radius * math.sin(angle)
        cx = side / 2.0 + radius * math.cos(angle)
        for _ in range(per_class):
            jy, jx = rng.uniform(-1.0, 1.0, size=2)
            blob = np.exp(-((rows - cy - jy) ** 2 + (cols - cx - jx) ** 2) / (2 * sigma * sigma))
            pixels = 0.5 * base[:, None, None] + 0.5 * blob[None]
            pixels = pixels + rng.normal(0.0, noise, size=pixels.shape)
            samples.append(ImageSample(np.clip(pixels, 0.0, 1.0).astype(np.float32), k))

    dataset = Dataset(f"synthetic-{classes}x{per_class}", samples, classes)
    logger.debug(f"Synthesized {len(samples)} images ({classes} classes, {side}×{side}, seed {rng_seed})")
    return dataset


def stratified_train_count(size: int, ratio: float) -> int:
    """round-half-up of ratio·size, clamped so both sides keep a sample"""
    if size < 2:
        raise DatasetError(f"cannot split a class with {size} sample(s)")
    return min(max(int(math.floor(ratio * size + 0.5)), 1), size - 1)


def split(dataset: Dataset, spec: SplitSpec) -> Tuple[Dataset, Dataset]:
    """Disjoint, exhaustive, per-class stratified split; both sides keep dataset order"""
    rng = np.random.default_rng(spec.rng_seed)
    labels = dataset.labels
    train_idx: List[int] = []
    test_idx: List[int] = []
    for k in range(dataset.classes):
        members = np.flatnonzero(labels == k)
        if members.size == 0:
            continue
        n_train = stratified_train_count(members.size, spec.train_ratio)
        order = rng.permutation(members)
        train_idx.extend(int(i) for i in order[:n_train])
        test_idx.extend(int(i) for i in order[n_train:])

    train = dataset.subset(sorted(train_idx), f"{dataset.name}-train")
    test = dataset.subset(sorted(test_idx), f"{dataset.name}-test")
    logger.debug(f"Split '{dataset.name}' at {spec.train_ratio}: {len(train)} train / {len(test)} test")
    return train, test

"""
Joint Triplet Trainer
Optimizes the backbone Θ and the generator Φ together under the margin hinge loss,
with the augmented variant sharing every other code path
"""

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from augmentation import AugmentationPolicy, augment
from backbone import ArchitectureSpec, BackboneParams, build_backbone, forward_batch
from checkpoint import load_checkpoint, save_checkpoint
from datasets import Dataset
from dcgpn import (
    GeneratorParams,
    GeneratorSpec,
    LatentSeed,
    build_generator,
    generator_forward,
    sample_latent,
    validate_shape_contract,
)
from errors import ConfigError, ContractError, DatasetError, LoadError, ReportError, TrainingError
from metric_head import MarginConfig, triplet_forward
from tensor_core import ParameterSet, Tensor, backward, row_slice

logger = logging.getLogger(__name__)

VARIANTS = ('ddipnet', 'ddipnet_plus')
TRIPLET_ROLES = ('anchor', 'negative', 'positive')
HISTORY_COLUMNS = ['epoch', 'mean_loss', 'mean_d1', 'mean_d2', 'wallclock_ms']


def normalize_variant(variant: str) -> str:
    """Accept the CLI spelling 'ddipnet+' for the augmented variant"""
    name = variant.strip().lower().replace('+', '_plus').replace('-', '_')
    if name not in VARIANTS:
        raise ConfigError(f"variant must be one of 'ddipnet', 'ddipnet+' (got '{variant}')")
    return name


@dataclass
class TrainConfig:
    """Joint optimization settings"""
    epochs: int = 50
    batch_size: int = 32
    lr_backbone: float = 1e-6
    lr_generator: float = 1e-4
    margin: MarginConfig = field(default_factory=MarginConfig)
    variant: str = 'ddipnet'
    rng_seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    augmentation: AugmentationPolicy = field(default_factory=AugmentationPolicy)
    augment_members: Tuple[str, ...] = TRIPLET_ROLES
    early_stop_on_zero_loss: bool = False
    record_timing: bool = True
    checkpoint_every: int = 0
    checkpoint_dir: Optional[str] = None

    def __post_init__(self):
        if isinstance(self.margin, (int, float)):
            self.margin = MarginConfig(float(self.margin))
        self.variant = normalize_variant(self.variant)
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        # zero is accepted so a frozen network can be replayed
        if self.lr_backbone < 0 or self.lr_generator < 0:
            raise ConfigError(f"learning rates must be non-negative, got {self.lr_backbone}, {self.lr_generator}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1) or self.eps <= 0:
            raise ConfigError(f"invalid Adam constants beta1={self.beta1} beta2={self.beta2} eps={self.eps}")
        self.augment_members = tuple(self.augment_members)
        unknown = set(self.augment_members) - set(TRIPLET_ROLES)
        if unknown:
            raise ConfigError(f"augment_members may only name {TRIPLET_ROLES}, got {sorted(unknown)}")
        if self.checkpoint_every < 0:
            raise ConfigError(f"checkpoint_every must be >= 0, got {self.checkpoint_every}")


@dataclass
class TripletBatch:
    """Index triples into a dataset: anchor, negative, positive"""
    anchors: np.ndarray
    negatives: np.ndarray
    positives: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return int(self.anchors.shape[0])


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    mean_d1: float
    mean_d2: float
    wallclock_ms: float = 0.0


@dataclass
class AdamState:
    """First/second moment buffers keyed by parameter name"""
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: Optional[ParameterSet], beta1: float = 0.9, beta2: float = 0.999,
                   eps: float = 1e-8) -> "AdamState":
        state = cls(beta1, beta2, eps)
        for name, tensor in (params.trainable_items() if params is not None else []):
            state.m[name] = np.zeros_like(tensor.data)
            state.v[name] = np.zeros_like(tensor.data)
        return state


def sample_triplets(dataset: Dataset, batch_size: int, rng: np.random.Generator) -> TripletBatch:
    """Anchor uniform over samples, positive from its class (not itself), negative from any other class"""
    dataset.require_pairs()
    labels = dataset.labels
    members = {k: np.flatnonzero(labels == k) for k in range(dataset.classes)}
    outsiders = {k: np.flatnonzero(labels != k) for k in range(dataset.classes)}
    if any(idx.size == 0 for idx in outsiders.values()):
        raise DatasetError("triplets need at least two populated classes")

    anchors = rng.integers(0, len(dataset), size=batch_size)
    positives = np.empty(batch_size, dtype=np.int64)
    negatives = np.empty(batch_size, dtype=np.int64)
    for i, a in enumerate(anchors):
        k = labels[a]
        same = members[k]
        # draw from the class minus the anchor by skipping over its slot
        j = int(rng.integers(0, same.size - 1))
        slot = int(np.searchsorted(same, a))
        positives[i] = same[j + 1] if j >= slot else same[j]
        negatives[i] = outsiders[k][int(rng.integers(0, outsiders[k].size))]
    return TripletBatch(anchors.astype(np.int64), negatives, positives, labels[anchors])


def adam_step(params: ParameterSet, grads: Dict[str, Optional[np.ndarray]], state: AdamState, lr: float):
    """One bias-corrected Adam update of every trainable tensor, in place"""
    step = state.step + 1
    for name, _ in params.trainable_items():
        grad = grads.get(name)
        if grad is not None and not np.all(np.isfinite(grad)):
            raise TrainingError("non-finite gradient", step=step, parameter=name)

    state.step = step
    correction1 = 1 - state.beta1 ** step
    correction2 = 1 - state.beta2 ** step
    for name, tensor in params.trainable_items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(tensor.data)
        m = state.m.setdefault(name, np.zeros_like(tensor.data))
        v = state.v.setdefault(name, np.zeros_like(tensor.data))
        m *= state.beta1
        m += (1 - state.beta1) * grad
        v *= state.beta2
        v += (1 - state.beta2) * grad * grad
        update = (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        tensor.data -= (lr * update).astype(tensor.data.dtype)


@dataclass
class TrainedModel:
    """Trained Θ (None for feature datasets), Φ and the latent seed used"""
    backbone: Optional[BackboneParams]
    generator: GeneratorParams
    latent: LatentSeed
    variant: str = 'ddipnet'
    history: List[EpochRecord] = field(default_factory=list)

    @property
    def feature_width(self) -> int:
        return self.generator.spec.feature_width

    def save(self, stem: Union[str, Path]) -> Tuple[Path, Path]:
        """Backbone, generator and latent tensors in one checkpoint"""
        tensors: Dict[str, np.ndarray] = {'latent': self.latent.values}
        if self.backbone is not None:
            tensors.update({f"backbone.{n}": a for n, a in self.backbone.arrays().items()})
        tensors.update({f"generator.{n}": a for n, a in self.generator.arrays().items()})
        meta = {
            'variant': self.variant,
            'generator_spec': json.dumps(asdict(self.generator.spec), sort_keys=True),
        }
        if self.backbone is not None:
            meta['architecture'] = json.dumps(asdict(self.backbone.spec), sort_keys=True)
        return save_checkpoint(stem, tensors, meta)


def _restore(params: ParameterSet, tensors: Dict[str, np.ndarray], prefix: str, stem):
    for name, tensor in params.items():
        key = f"{prefix}.{name}"
        if key not in tensors:
            raise LoadError(f"checkpoint lacks tensor '{key}'", path=str(stem))
        if tensors[key].shape != tensor.shape:
            raise LoadError(f"tensor '{key}' has shape {tensors[key].shape}, expected {tensor.shape}", path=str(stem))
        tensor.data = tensors[key].astype(tensor.data.dtype).copy()


def load_trained_model(stem: Union[str, Path]) -> TrainedModel:
    tensors, meta = load_checkpoint(stem)
    try:
        gen_spec = GeneratorSpec(**json.loads(meta['generator_spec']))
        arch = ArchitectureSpec(**json.loads(meta['architecture'])) if 'architecture' in meta else None
    except (KeyError, TypeError, ValueError) as e:
        raise LoadError(f"checkpoint metadata is incomplete: {e}", path=str(stem)) from e

    generator = build_generator(gen_spec.classes, gen_spec.feature_width, gen_spec.base_channels, 0, spec=gen_spec)
    _restore(generator, tensors, 'generator', stem)
    backbone = None
    if arch is not None:
        backbone = build_backbone(arch, 0)
        _restore(backbone, tensors, 'backbone', stem)
    if 'latent' not in tensors:
        raise LoadError("checkpoint lacks the latent seed", path=str(stem))
    latent = LatentSeed(tensors['latent'], frozen=True)
    return TrainedModel(backbone, generator, latent, meta.get('variant', 'ddipnet'))


def write_history_csv(history: List[EpochRecord], path: Union[str, Path]) -> Path:
    path = Path(path)
    frame = pd.DataFrame([asdict(r) for r in history], columns=HISTORY_COLUMNS)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format='%.9g', lineterminator='\n')
    except OSError as e:
        raise ReportError(f"cannot write history {path}: {e}") from e
    return path


def _grads(params: ParameterSet) -> Dict[str, Optional[np.ndarray]]:
    return {name: tensor.grad for name, tensor in params.trainable_items()}


def _member_rows(dataset: Dataset, indices: np.ndarray, augmenting: bool, cfg: TrainConfig,
                 rng: np.random.Generator) -> List[np.ndarray]:
    rows = []
    for i in indices:
        sample = dataset.samples[int(i)]
        if augmenting:
            sample = augment(sample, cfg.augmentation, rng)
        rows.append(sample.pixels if hasattr(sample, 'pixels') else sample.values)
    return rows


def train(dataset: Dataset, backbone_params: Optional[BackboneParams], generator_params: GeneratorParams,
          z: LatentSeed, cfg: TrainConfig) -> Tuple[TrainedModel, List[EpochRecord]]:
    """
    Run up to cfg.epochs epochs of ceil(N / batch_size) triplet batches.
    The inputs are cloned; the returned model owns the trained tensors.
    """
    features_only = dataset.is_feature_set
    if features_only:
        width = dataset.samples[0].width
        backbone = None
    else:
        if backbone_params is None:
            raise ContractError("image datasets need backbone parameters")
        width = backbone_params.feature_width
        backbone = backbone_params.clone()
    validate_shape_contract(width, dataset.classes, generator_params)
    dataset.require_pairs()

    generator = generator_params.clone()
    generator.forward_calls = 0
    z.freeze()
    latent = z
    latent_before = z.values.copy()

    sample_seq, augment_seq, latent_seq = np.random.SeedSequence(cfg.rng_seed).spawn(3)
    sample_rng = np.random.default_rng(sample_seq)
    augment_rng = np.random.default_rng(augment_seq)
    latent_rng = np.random.default_rng(latent_seq)

    plus = cfg.variant == 'ddipnet_plus'
    if plus and features_only:
        logger.warning("Augmented variant on a feature dataset: augmentation is skipped")
    adam_backbone = AdamState.for_params(backbone, cfg.beta1, cfg.beta2, cfg.eps)
    adam_generator = AdamState.for_params(generator, cfg.beta1, cfg.beta2, cfg.eps)

    batches = math.ceil(len(dataset) / cfg.batch_size)
    history: List[EpochRecord] = []
    step = 0
    logger.info(f"Training {cfg.variant}: {len(dataset)} samples, {batches} batches × {cfg.epochs} epochs")

    for epoch in range(1, cfg.epochs + 1):
        started = time.perf_counter()
        losses, d1s, d2s = [], [], []
        for _ in range(batches):
            step += 1
            batch = sample_triplets(dataset, cfg.batch_size, sample_rng)
            b = len(batch)
            members = []
            for role, indices in zip(TRIPLET_ROLES, (batch.anchors, batch.negatives, batch.positives)):
                augmenting = plus and not features_only and role in cfg.augment_members
                members.extend(_member_rows(dataset, indices, augmenting, cfg, augment_rng))
            stacked = Tensor(np.stack(members))

            if features_only:
                feats = stacked
            else:
                feats = forward_batch(stacked, backbone, 'train')
            f1, f2, f3 = (row_slice(feats, i * b, (i + 1) * b) for i in range(3))

            if generator.spec.resample_latent:
                latent = sample_latent(int(latent_rng.integers(0, 2 ** 31)))
                latent.freeze()
            s = generator_forward(latent, generator, 'train')
            loss, d1, d2 = triplet_forward(f1, f2, f3, s, cfg.margin)
            if not loss.is_finite():
                raise TrainingError("non-finite loss", step=step)

            generator.zero_grad()
            if backbone is not None:
                backbone.zero_grad()
            backward(loss)
            if backbone is not None:
                adam_step(backbone, _grads(backbone), adam_backbone, cfg.lr_backbone)
            adam_step(generator, _grads(generator), adam_generator, cfg.lr_generator)

            losses.append(loss.item())
            d1s.append(float(np.mean(d1.data)))
            d2s.append(float(np.mean(d2.data)))
            logger.debug(f"step {step}: loss {losses[-1]:.6f}")

        elapsed = (time.perf_counter() - started) * 1000.0 if cfg.record_timing else 0.0
        record = EpochRecord(epoch, float(np.mean(losses)), float(np.mean(d1s)), float(np.mean(d2s)), elapsed)
        if not math.isfinite(record.mean_loss):
            raise TrainingError("non-finite epoch loss", step=step)
        history.append(record)
        logger.info(f"Epoch {epoch}/{cfg.epochs}: loss {record.mean_loss:.5f}, "
                    f"d1 {record.mean_d1:.4f}, d2 {record.mean_d2:.4f}")

        model = TrainedModel(backbone, generator, latent, cfg.variant, history)
        if cfg.checkpoint_every and cfg.checkpoint_dir and epoch % cfg.checkpoint_every == 0:
            model.save(Path(cfg.checkpoint_dir) / f"epoch_{epoch:03d}")
        if cfg.early_stop_on_zero_loss and record.mean_loss == 0.0:
            logger.info(f"Mean loss reached zero at epoch {epoch}; stopping")
            break

    if not generator.spec.resample_latent and not np.array_equal(latent_before, latent.values):
        raise ContractError("latent seed changed during training")
    return TrainedModel(backbone, generator, latent, cfg.variant, history), history

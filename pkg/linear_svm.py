"""
Linear SVM Classifier
One-vs-rest L2-regularized L2-loss SVM solved by dual coordinate descent,
with the liblinear defaults (C=1, tolerance 0.1, bias as a constant-1 feature)

The prediction path depends only on the weight matrix and the feature row;
this module never touches the generator or the discriminant matrix.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from backbone import FeatureVec
from checkpoint import load_checkpoint, save_checkpoint
from errors import ConfigError, DataError, DatasetError, DimensionError, LoadError

logger = logging.getLogger(__name__)

PG_EPS = 1e-12


@dataclass
class SvmConfig:
    C: float = 1.0
    tolerance: float = 0.1
    max_iter: int = 1000

    def __post_init__(self):
        if not self.C > 0:
            raise ConfigError(f"C must be positive, got {self.C}")
        if not self.tolerance > 0:
            raise ConfigError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be >= 1, got {self.max_iter}")


@dataclass
class IterationRecord:
    """State after one outer sweep of a binary subproblem"""
    iteration: int
    dual_objective: float
    primal_objective: float
    pg_range: float


@dataclass
class SvmModel:
    """weights is c×(f+1): one hyperplane per class, bias in the last column"""
    weights: np.ndarray
    class_labels: List[int]
    config: SvmConfig = field(default_factory=SvmConfig)
    iteration_logs: Dict[int, List[IterationRecord]] = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float32)
        if self.weights.ndim != 2 or self.weights.shape[0] != len(self.class_labels):
            raise DimensionError(f"weights {self.weights.shape} do not match {len(self.class_labels)} class labels")

    @property
    def feature_width(self) -> int:
        return self.weights.shape[1] - 1


def binary_primal_objective(w: np.ndarray, x_aug: np.ndarray, y: np.ndarray, C: float) -> float:
    """0.5·|w|² + C·Σ max(0, 1 - y·w·x)²"""
    slack = np.maximum(0.0, 1.0 - y * (x_aug @ w))
    return float(0.5 * np.dot(w, w) + C * np.sum(slack * slack))


def _augment(x: np.ndarray) -> np.ndarray:
    return np.hstack([x, np.ones((x.shape[0], 1), dtype=x.dtype)])


def solve_binary(x_aug: np.ndarray, y: np.ndarray, cfg: SvmConfig,
                 rng: np.random.Generator) -> Tuple[np.ndarray, List[IterationRecord]]:
    """
    Dual coordinate descent for min_α 0.5·αᵀ(Q + D)α - Σα, α >= 0,
    with Q_ij = y_i y_j x_i·x_j and D_ii = 1/(2C).
    Stops once the projected-gradient range of a sweep falls below tolerance.
    """
    n, width = x_aug.shape
    diag = 0.5 / cfg.C
    qd = np.einsum('ij,ij->i', x_aug, x_aug) + diag
    alpha = np.zeros(n)
    w = np.zeros(width)
    log: List[IterationRecord] = []

    for iteration in range(1, cfg.max_iter + 1):
        pg_max, pg_min = -np.inf, np.inf
        for i in rng.permutation(n):
            g = y[i] * np.dot(w, x_aug[i]) - 1.0 + diag * alpha[i]
            pg = g if alpha[i] > 0 else min(g, 0.0)
            pg_max = max(pg_max, pg)
            pg_min = min(pg_min, pg)
            if abs(pg) > PG_EPS:
                previous = alpha[i]
                alpha[i] = max(alpha[i] - g / qd[i], 0.0)
                w += (alpha[i] - previous) * y[i] * x_aug[i]

        dual = 0.5 * np.dot(w, w) + 0.5 * diag * np.dot(alpha, alpha) - np.sum(alpha)
        pg_range = pg_max - pg_min
        log.append(IterationRecord(iteration, float(dual), binary_primal_objective(w, x_aug, y, cfg.C), float(pg_range)))
        if pg_range <= cfg.tolerance:
            break
    else:
        logger.warning(f"Dual coordinate descent hit max_iter={cfg.max_iter} (PG range {pg_range:.4g})")
    return w, log


def _check_inputs(x: np.ndarray, y: np.ndarray):
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise DimensionError(f"feature matrix {x.shape} does not match {y.shape[0]} labels")
    if not np.all(np.isfinite(x)):
        raise DataError("non-finite feature value in SVM input")


def svm_train_arrays(x: np.ndarray, y: np.ndarray, cfg: SvmConfig, rng_seed: int) -> SvmModel:
    """Train on an n×f matrix; rows need not be non-negative (embedding inputs)"""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    _check_inputs(x, y)
    class_labels = sorted(int(k) for k in np.unique(y))
    if len(class_labels) < 2:
        raise DatasetError(f"SVM needs at least 2 classes, got {class_labels}")

    x_aug = _augment(x)
    seeds = np.random.SeedSequence(rng_seed).spawn(len(class_labels))
    weights = np.zeros((len(class_labels), x_aug.shape[1]))
    logs: Dict[int, List[IterationRecord]] = {}
    for row, (label, seed) in enumerate(zip(class_labels, seeds)):
        targets = np.where(y == label, 1.0, -1.0)
        weights[row], logs[label] = solve_binary(x_aug, targets, cfg, np.random.default_rng(seed))
        logger.debug(f"class {label}: {len(logs[label])} sweeps, primal {logs[label][-1].primal_objective:.5f}")

    logger.info(f"Trained one-vs-rest SVM: {len(class_labels)} classes, {x.shape[0]} samples, f={x.shape[1]}")
    return SvmModel(weights, class_labels, cfg, logs)


def svm_train(features: Sequence[Tuple[FeatureVec, int]], cfg: SvmConfig, rng_seed: int) -> SvmModel:
    if not features:
        raise DatasetError("SVM training set is empty")
    widths = {fv.width for fv, _ in features}
    if len(widths) != 1:
        raise DimensionError(f"inconsistent feature widths {sorted(widths)}")
    x = np.stack([fv.values for fv, _ in features])
    y = np.array([label for _, label in features])
    return svm_train_arrays(x, y, cfg, rng_seed)


def decision_values(model: SvmModel, x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float32))
    if x.shape[1] != model.feature_width:
        raise DimensionError(f"feature width {x.shape[1]} does not match SVM width {model.feature_width}")
    return x @ model.weights[:, :-1].T + model.weights[:, -1]


def svm_predict(model: SvmModel, feature: Union[FeatureVec, np.ndarray]) -> Tuple[int, np.ndarray]:
    """Argmax of one-vs-rest scores; ties go to the lowest class index"""
    values = feature.values if isinstance(feature, FeatureVec) else np.asarray(feature)
    scores = decision_values(model, values.reshape(1, -1))[0]
    return model.class_labels[int(np.argmax(scores))], scores


def svm_predict_batch(model: SvmModel, x: np.ndarray) -> np.ndarray:
    scores = decision_values(model, x)
    return np.asarray(model.class_labels)[np.argmax(scores, axis=1)]


def svm_objective(model: SvmModel, features: Sequence[Tuple[FeatureVec, int]], cfg: SvmConfig) -> float:
    """Primal objective summed over the one-vs-rest subproblems"""
    x = _augment(np.stack([fv.values for fv, _ in features]).astype(np.float64))
    y = np.array([label for _, label in features])
    total = 0.0
    for row, label in enumerate(model.class_labels):
        targets = np.where(y == label, 1.0, -1.0)
        total += binary_primal_objective(model.weights[row].astype(np.float64), x, targets, cfg.C)
    return total


def save_svm_model(model: SvmModel, stem: Union[str, Path]) -> Tuple[Path, Path]:
    meta = {
        'classes': str(len(model.class_labels)),
        'feature_width': str(model.feature_width),
        'C': repr(model.config.C),
        'tolerance': repr(model.config.tolerance),
        'max_iter': str(model.config.max_iter),
        'class_labels': ','.join(str(k) for k in model.class_labels),
    }
    return save_checkpoint(stem, {'weights': model.weights}, meta)


def load_svm_model(stem: Union[str, Path]) -> SvmModel:
    tensors, meta = load_checkpoint(stem)
    try:
        config = SvmConfig(float(meta['C']), float(meta['tolerance']), int(meta['max_iter']))
        labels = [int(k) for k in meta['class_labels'].split(',')]
        weights = tensors['weights']
        expected = (int(meta['classes']), int(meta['feature_width']) + 1)
    except (KeyError, ValueError) as e:
        raise LoadError(f"incomplete SVM checkpoint: {e}", path=str(stem)) from e
    if weights.shape != expected:
        raise LoadError(f"SVM weights {weights.shape} do not match header {expected}", path=str(stem))
    return SvmModel(weights, labels, config)

"""
Experiment Harness
Repeated train → extract → SVM → score executions with aggregated accuracy,
the margin grid search and the evaluation-ratio presets of the benchmark datasets
"""

import asyncio
import json
import logging
import re
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.metrics import confusion_matrix

from backbone import ArchitectureSpec, build_backbone, extract_features
from datasets import Dataset, SplitSpec, split
from dcgpn import build_generator, generator_forward, sample_latent
from errors import ConfigError, ContractError, ExperimentError
from linear_svm import SvmConfig, svm_predict_batch, svm_train_arrays
from metric_head import MarginConfig, project, squash
from pipeline_config import (
    ExperimentSettings,
    GeneratorSettings,
    MarginSearchSettings,
    config_hash,
    validate_margin_grid,
)
from tensor_core import Tensor
from trainer import EpochRecord, TrainConfig, TrainedModel, normalize_variant, train

logger = logging.getLogger(__name__)

# Training ratios used by the published evaluation protocol
RATIO_PRESETS: Dict[str, Tuple[float, ...]] = {
    'ucmerced': (0.8, 0.5),
    'aid': (0.5, 0.2),
    'nwpuresisc45': (0.2, 0.1),
}

SEED_NAMES = ('split', 'backbone', 'generator', 'latent', 'train', 'svm')


def ratio_presets(dataset_name: str) -> Tuple[float, ...]:
    """Training ratios for UC-Merced, AID or NWPU-RESISC45 (name matching ignores case and punctuation)"""
    key = re.sub(r'[^a-z0-9]', '', dataset_name.lower())
    if key not in RATIO_PRESETS:
        raise ConfigError(f"no ratio preset for dataset '{dataset_name}'; known: {sorted(RATIO_PRESETS)}")
    return RATIO_PRESETS[key]


@dataclass
class ScoreCard:
    accuracy: float
    confusion: np.ndarray


def score_predictions(y_true: Sequence[int], y_pred: Sequence[int], c: int) -> ScoreCard:
    """Overall accuracy plus the c×c confusion matrix (rows are true classes)"""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape or y_true.size == 0:
        raise ContractError(f"cannot score {y_pred.shape} predictions against {y_true.shape} labels")
    matrix = confusion_matrix(y_true, y_pred, labels=list(range(c)))
    return ScoreCard(float(np.trace(matrix)) / float(y_true.size), matrix)


def aggregate_accuracies(accuracies: Sequence[float]) -> Tuple[float, float]:
    """Mean and sample (n-1) standard deviation; a single run reports std 0"""
    values = np.asarray(accuracies, dtype=np.float64)
    if values.size == 0:
        raise ContractError("no accuracies to aggregate")
    std = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    return float(np.mean(values)), std


@dataclass
class RunResult:
    index: int
    seeds: Dict[str, int]
    accuracy: float
    confusion: List[List[int]]
    train_size: int
    test_size: int
    final_loss: float
    final_d1: float
    final_d2: float
    generator_forwards_during_eval: int = 0
    history: List[Dict[str, float]] = field(default_factory=list)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunResult":
        return cls(**data)


@dataclass
class ExperimentReport:
    dataset_name: str
    variant: str
    master_seed: int
    accuracies: List[float]
    mean: float
    std: float
    runs: List[RunResult]
    config_snapshot: Dict[str, Any] = field(default_factory=dict)
    config_hash: str = ''
    notes: List[str] = field(default_factory=list)
    wallclock_ms: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentReport":
        values = dict(data)
        values['runs'] = [RunResult.from_dict(r) for r in values['runs']]
        return cls(**values)


@dataclass
class MarginSearchResult:
    dataset_name: str
    variant: str
    master_seed: int
    margins: List[float]
    means: List[float]
    stds: List[float]
    accuracies: List[List[float]]
    rounds: int
    epochs_per_round: int
    config_hash: str = ''

    def __post_init__(self):
        validate_margin_grid(self.margins)

    @property
    def best_margin(self) -> float:
        return self.margins[int(np.argmax(self.means))]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MarginSearchResult":
        return cls(**data)


def derive_run_seeds(master_seed: int, count: int) -> List[Dict[str, int]]:
    """Independent per-run seeds spawned from one master seed"""
    children = np.random.SeedSequence(master_seed).spawn(count)
    return [
        {name: int(value) for name, value in zip(SEED_NAMES, child.generate_state(len(SEED_NAMES)))}
        for child in children
    ]


def _embedding_rows(features: List, s) -> np.ndarray:
    rows = Tensor(np.stack([fv.values for fv in features]))
    return squash(project(rows, s)).data.copy()


def evaluate_model(model: TrainedModel, train_set: Dataset, test_set: Dataset, svm_cfg: SvmConfig,
                   svm_seed: int, svm_input: str = 'features') -> Tuple[ScoreCard, int]:
    """
    Fit the SVM on eval-mode train features and score the test side.
    Returns the score and the number of generator forwards made while
    classifying; the embedding path's single projection of S is not counted.
    """
    calls_before = model.generator.forward_calls
    allowed = 0
    train_features = extract_features(train_set.samples, model.backbone)
    test_features = extract_features(test_set.samples, model.backbone)
    if svm_input == 'embeddings':
        s = generator_forward(model.latent, model.generator, 'eval')
        allowed = 1
        x_train, x_test = _embedding_rows(train_features, s), _embedding_rows(test_features, s)
    else:
        x_train = np.stack([fv.values for fv in train_features])
        x_test = np.stack([fv.values for fv in test_features])

    svm = svm_train_arrays(x_train, train_set.labels, svm_cfg, svm_seed)
    predictions = svm_predict_batch(svm, x_test)
    calls_during_eval = model.generator.forward_calls - calls_before - allowed
    if calls_during_eval:
        raise ContractError(f"classification ran the generator {calls_during_eval} unexpected time(s)")
    return score_predictions(test_set.labels, predictions, train_set.classes), calls_during_eval


def execute_run(index: int, seeds: Dict[str, int], dataset: Dataset, train_cfg: TrainConfig, svm_cfg: SvmConfig,
                train_ratio: float, architecture: Optional[ArchitectureSpec],
                generator: GeneratorSettings, svm_input: str = 'features') -> Tuple[RunResult, TrainedModel]:
    """One execution: split, train, extract, fit the SVM on train features, score on test"""
    train_set, test_set = split(dataset, SplitSpec(train_ratio, seeds['split']))

    if dataset.is_feature_set:
        backbone = None
        width = dataset.samples[0].width
    else:
        arch = architecture or ArchitectureSpec()
        backbone = build_backbone(arch, seeds['backbone'])
        width = arch.feature_width
    spec = generator.spec_for(dataset.classes, width)
    generator_params = build_generator(spec.classes, spec.feature_width, spec.base_channels, seeds['generator'], spec=spec)
    latent = sample_latent(seeds['latent'])

    model, history = train(train_set, backbone, generator_params, latent, replace(train_cfg, rng_seed=seeds['train']))
    score, calls_during_eval = evaluate_model(model, train_set, test_set, svm_cfg, seeds['svm'], svm_input)
    final: EpochRecord = history[-1]
    result = RunResult(
        index=index,
        seeds=dict(seeds),
        accuracy=score.accuracy,
        confusion=score.confusion.astype(int).tolist(),
        train_size=len(train_set),
        test_size=len(test_set),
        final_loss=final.mean_loss,
        final_d1=final.mean_d1,
        final_d2=final.mean_d2,
        generator_forwards_during_eval=calls_during_eval,
        history=[asdict(record) for record in history],
    )
    logger.info(f"Run {index}: accuracy {score.accuracy:.4f} ({len(test_set)} test samples)")
    return result, model


async def _gather_indexed(jobs: List[Callable[[], Any]], max_concurrent: int) -> List[Any]:
    """Run blocking jobs on worker threads; results keep job order, first failure aborts"""
    semaphore = asyncio.Semaphore(max_concurrent)

    async def limited(job):
        async with semaphore:
            return await asyncio.to_thread(job)

    results = await asyncio.gather(*[limited(job) for job in jobs], return_exceptions=True)
    for i, result in enumerate(results):
        if isinstance(result, Exception):
            logger.error(f"Run {i} failed: {result}")
            raise ExperimentError(i, result) from result
    return results


async def run_experiment_async(dataset: Dataset, variant: str, train_cfg: TrainConfig, svm_cfg: SvmConfig,
                               split_spec: SplitSpec, runs: int = 10,
                               settings: Optional[ExperimentSettings] = None,
                               architecture: Optional[ArchitectureSpec] = None,
                               generator: Optional[GeneratorSettings] = None,
                               config_snapshot: Optional[Dict[str, Any]] = None) -> ExperimentReport:
    settings = settings or ExperimentSettings(runs=runs)
    generator = generator or GeneratorSettings()
    variant = normalize_variant(variant)
    cfg = replace(train_cfg, variant=variant)
    if runs < 1:
        raise ConfigError(f"runs must be >= 1, got {runs}")

    seeds = derive_run_seeds(settings.master_seed, runs)
    if settings.fixed_split:
        for run_seeds in seeds:
            run_seeds['split'] = split_spec.rng_seed
    started = time.perf_counter()
    logger.info(f"Experiment on '{dataset.name}': {variant}, {runs} run(s), ratio {split_spec.train_ratio}")

    jobs = [
        (lambda i=i: execute_run(i, seeds[i], dataset, cfg, svm_cfg, split_spec.train_ratio,
                                 architecture, generator, settings.svm_input)[0])
        for i in range(runs)
    ]
    results: List[RunResult] = await _gather_indexed(jobs, settings.max_concurrent_runs)

    accuracies = [r.accuracy for r in results]
    mean, std = aggregate_accuracies(accuracies)
    notes = []
    if runs == 1:
        notes.append('single run')
        logger.warning("Single run: standard deviation reported as 0")
    if settings.svm_input == 'embeddings':
        notes.append('svm on squashed embeddings')
    snapshot = config_snapshot if config_snapshot is not None else {
        'training': asdict(cfg),
        'svm': asdict(svm_cfg),
        'split': asdict(split_spec),
        'experiment': asdict(settings),
        'generator': asdict(generator),
        'backbone': asdict(architecture) if architecture is not None else None,
    }
    # tuples become lists so the report equals its own JSON reload
    snapshot = json.loads(json.dumps(snapshot, default=str))
    report = ExperimentReport(
        dataset_name=dataset.name,
        variant=variant,
        master_seed=settings.master_seed,
        accuracies=accuracies,
        mean=mean,
        std=std,
        runs=list(results),
        config_snapshot=snapshot,
        config_hash=config_hash(snapshot),
        notes=notes,
        wallclock_ms=(time.perf_counter() - started) * 1000.0,
    )
    logger.info(f"Experiment done: mean accuracy {mean:.4f} ± {std:.4f}")
    return report


def run_experiment(dataset: Dataset, variant: str, train_cfg: TrainConfig, svm_cfg: SvmConfig,
                   split_spec: SplitSpec, runs: int = 10, **kwargs) -> ExperimentReport:
    return asyncio.run(run_experiment_async(dataset, variant, train_cfg, svm_cfg, split_spec, runs, **kwargs))


async def margin_search_async(dataset: Dataset, variant: str, train_cfg: TrainConfig, svm_cfg: SvmConfig,
                              search: Optional[MarginSearchSettings] = None, master_seed: int = 0,
                              max_concurrent: int = 1,
                              architecture: Optional[ArchitectureSpec] = None,
                              generator: Optional[GeneratorSettings] = None) -> MarginSearchResult:
    """
    Every margin gets `rounds` short trainings of `epochs_per_round` epochs.
    Round r uses the same seeds for every margin, so cells differ only in m.
    """
    search = search or MarginSearchSettings()
    generator = generator or GeneratorSettings()
    variant = normalize_variant(variant)
    validate_margin_grid(search.margins)
    if 0.0 in search.margins:
        logger.warning("Margin 0 included: the hinge only penalizes d1 > d2")

    round_seeds = derive_run_seeds(master_seed, search.rounds)
    jobs = []
    for m in search.margins:
        cfg = replace(train_cfg, variant=variant, margin=MarginConfig(m), epochs=search.epochs_per_round)
        for r in range(search.rounds):
            jobs.append(lambda cfg=cfg, r=r: execute_run(
                r, round_seeds[r], dataset, cfg, svm_cfg, search.train_ratio, architecture, generator)[0])
    results: List[RunResult] = await _gather_indexed(jobs, max_concurrent)

    accuracies, means, stds = [], [], []
    for i, m in enumerate(search.margins):
        cell = [res.accuracy for res in results[i * search.rounds:(i + 1) * search.rounds]]
        mean, std = aggregate_accuracies(cell)
        accuracies.append(cell)
        means.append(mean)
        stds.append(std)
        logger.info(f"Margin {m:.1f}: {mean:.4f} ± {std:.4f}")

    snapshot = {
        'training': asdict(train_cfg), 'svm': asdict(svm_cfg), 'margin_search': asdict(search),
        'generator': asdict(generator), 'master_seed': master_seed, 'variant': variant,
    }
    result = MarginSearchResult(
        dataset_name=dataset.name,
        variant=variant,
        master_seed=master_seed,
        margins=list(search.margins),
        means=means,
        stds=stds,
        accuracies=accuracies,
        rounds=search.rounds,
        epochs_per_round=search.epochs_per_round,
        config_hash=config_hash(snapshot),
    )
    logger.info(f"Best margin {result.best_margin:.1f}")
    return result


def margin_search(dataset: Dataset, variant: str, train_cfg: TrainConfig, svm_cfg: SvmConfig,
                  search: Optional[MarginSearchSettings] = None, master_seed: int = 0, **kwargs) -> MarginSearchResult:
    return asyncio.run(margin_search_async(dataset, variant, train_cfg, svm_cfg, search, master_seed, **kwargs))

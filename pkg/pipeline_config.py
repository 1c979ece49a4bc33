"""
Pipeline Configuration
Loads config.json into typed settings, applies .env overrides and hashes the result
"""

import dataclasses
import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Type, Union

from dotenv import load_dotenv

from augmentation import AugmentationPolicy
from backbone import ArchitectureSpec
from datasets import SplitSpec, SyntheticSettings
from dcgpn import GeneratorSpec
from errors import ConfigError
from linear_svm import SvmConfig
from metric_head import MarginConfig
from trainer import TrainConfig

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = Path(__file__).parent / 'config.json'
SVM_INPUTS = ('features', 'embeddings')
MARGIN_STEP = 0.1


def default_margin_grid() -> List[float]:
    return [round(MARGIN_STEP * k, 1) for k in range(1, 11)]


@dataclass
class GeneratorSettings:
    """Generator knobs that do not depend on the dataset; c and f are filled in per run"""
    base_channels: int = 32
    bn_eps: float = 1e-5
    resample_latent: bool = False

    def __post_init__(self):
        if self.base_channels < 1 or self.bn_eps <= 0:
            raise ConfigError(f"invalid generator settings {self}")

    def spec_for(self, classes: int, feature_width: int) -> GeneratorSpec:
        return GeneratorSpec(classes, feature_width, self.base_channels, self.bn_eps, self.resample_latent)


@dataclass
class ExperimentSettings:
    runs: int = 10
    master_seed: int = 0
    fixed_split: bool = False
    max_concurrent_runs: int = 1
    svm_input: str = 'features'
    dataset: Optional[str] = None

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigError(f"runs must be >= 1, got {self.runs}")
        if self.max_concurrent_runs < 1:
            raise ConfigError(f"max_concurrent_runs must be >= 1, got {self.max_concurrent_runs}")
        if self.svm_input not in SVM_INPUTS:
            raise ConfigError(f"svm_input must be one of {SVM_INPUTS}, got '{self.svm_input}'")


@dataclass
class MarginSearchSettings:
    margins: List[float] = field(default_factory=default_margin_grid)
    rounds: int = 5
    epochs_per_round: int = 15
    train_ratio: float = 0.5

    def __post_init__(self):
        validate_margin_grid(self.margins)
        if self.rounds < 1 or self.epochs_per_round < 1:
            raise ConfigError(f"rounds and epochs_per_round must be >= 1, got {self.rounds}, {self.epochs_per_round}")
        SplitSpec(self.train_ratio)


@dataclass
class LoggingSettings:
    level: str = 'INFO'
    file: Optional[str] = None
    max_file_size_mb: int = 10
    backup_count: int = 5
    format: str = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

    def __post_init__(self):
        self.level = self.level.upper()
        if self.level not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
            raise ConfigError(f"unknown log level '{self.level}'")
        if self.max_file_size_mb < 1 or self.backup_count < 0:
            raise ConfigError("log rotation needs max_file_size_mb >= 1 and backup_count >= 0")


@dataclass
class LedgerSettings:
    enabled: bool = False
    path: str = 'runs/ledger.db'


@dataclass
class PipelineConfig:
    system_info: Dict[str, Any] = field(default_factory=dict)
    backbone: ArchitectureSpec = field(default_factory=ArchitectureSpec)
    generator: GeneratorSettings = field(default_factory=GeneratorSettings)
    training: TrainConfig = field(default_factory=TrainConfig)
    svm: SvmConfig = field(default_factory=SvmConfig)
    split: SplitSpec = field(default_factory=lambda: SplitSpec(0.8))
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)
    margin_search: MarginSearchSettings = field(default_factory=MarginSearchSettings)
    synthetic: SyntheticSettings = field(default_factory=SyntheticSettings)
    logging: LoggingSettings = field(default_factory=LoggingSettings)
    ledger: LedgerSettings = field(default_factory=LedgerSettings)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class EnvOverrides:
    config_path: Optional[str] = None
    log_level: Optional[str] = None
    out_dir: Optional[str] = None


def validate_margin_grid(margins: List[float]):
    """Non-empty, ascending, non-negative, spaced by 0.1"""
    if not margins:
        raise ConfigError("margin grid is empty")
    if any(m < 0 for m in margins):
        raise ConfigError(f"margins must be non-negative, got {margins}")
    for a, b in zip(margins, margins[1:]):
        if abs((b - a) - MARGIN_STEP) > 1e-9:
            raise ConfigError(f"margin grid must step by {MARGIN_STEP}, got {a} -> {b}")


def _build(cls: Type, section: Any, name: str, nested: Optional[Dict[str, Type]] = None):
    if not isinstance(section, dict):
        raise ConfigError(f"config section '{name}' must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {sorted(unknown)}")
    values = dict(section)
    for key, sub_cls in (nested or {}).items():
        if key in values and isinstance(values[key], dict):
            values[key] = _build(sub_cls, values[key], f"{name}.{key}")
    try:
        return cls(**values)
    except ConfigError as e:
        raise ConfigError(f"{name}: {e}") from e
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{name}: invalid value ({e})") from e


def parse_pipeline_config(raw: Dict[str, Any]) -> PipelineConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")

    training = dict(raw.get('training', {}))
    if isinstance(training.get('margin'), dict):
        training['margin'] = _build(MarginConfig, training['margin'], 'training.margin')
    split = raw.get('split', {'train_ratio': 0.8})

    return PipelineConfig(
        system_info=dict(raw.get('system_info', {})),
        backbone=_build(ArchitectureSpec, raw.get('backbone', {}), 'backbone'),
        generator=_build(GeneratorSettings, raw.get('generator', {}), 'generator'),
        training=_build(TrainConfig, training, 'training', {'augmentation': AugmentationPolicy}),
        svm=_build(SvmConfig, raw.get('svm', {}), 'svm'),
        split=_build(SplitSpec, split, 'split'),
        experiment=_build(ExperimentSettings, raw.get('experiment', {}), 'experiment'),
        margin_search=_build(MarginSearchSettings, raw.get('margin_search', {}), 'margin_search'),
        synthetic=_build(SyntheticSettings, raw.get('synthetic', {}), 'synthetic'),
        logging=_build(LoggingSettings, raw.get('logging', {}), 'logging'),
        ledger=_build(LedgerSettings, raw.get('ledger', {}), 'ledger'),
    )


def load_pipeline_config(path: Optional[Union[str, Path]] = None) -> PipelineConfig:
    """Read a JSON config; with no path, the built-in defaults apply"""
    if path is None:
        logger.debug("No config file given, using built-in defaults")
        return PipelineConfig()
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            raw = json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
    config = parse_pipeline_config(raw)
    logger.info(f"Loaded config {path} (hash {config_hash(config)[:12]})")
    return config


def config_hash(config: Union[PipelineConfig, Dict[str, Any]]) -> str:
    """SHA-256 of the canonical sorted-key JSON form"""
    payload = config.to_dict() if isinstance(config, PipelineConfig) else config
    canonical = json.dumps(payload, sort_keys=True, separators=(',', ':'), default=str)
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def read_env_overrides(dotenv_path: Optional[Union[str, Path]] = None) -> EnvOverrides:
    """DDIP_CONFIG, DDIP_LOG_LEVEL and DDIP_OUT_DIR from the process environment or a .env file"""
    load_dotenv(dotenv_path=dotenv_path, override=False)
    return EnvOverrides(
        config_path=os.getenv('DDIP_CONFIG') or None,
        log_level=os.getenv('DDIP_LOG_LEVEL') or None,
        out_dir=os.getenv('DDIP_OUT_DIR') or None,
    )

#!/usr/bin/env python3
"""
DDIPNet Scene Classification Pipeline
Command-line entry point: synth, train, evaluate, experiment, margin-search,
ingest-features and export-features
"""

import argparse
import asyncio
import json
import logging
import logging.handlers
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np
from PIL import Image

from backbone import build_backbone, export_features, extract_features, ingest_features
from datasets import Dataset, SplitSpec, load_dataset, split, synth_dataset
from dcgpn import build_generator, sample_latent
from errors import ConfigError, PipelineError, ReportError
from experiment_harness import (
    evaluate_model,
    margin_search_async,
    ratio_presets,
    run_experiment_async,
)
from pipeline_config import (
    DEFAULT_CONFIG_PATH,
    LoggingSettings,
    PipelineConfig,
    config_hash,
    load_pipeline_config,
    read_env_overrides,
)
from report_generator import DarkReportGenerator, write_manifest
from run_ledger import ExperimentLedger
from trainer import load_trained_model, normalize_variant, train, write_history_csv

logger = logging.getLogger(__name__)


def setup_logging(settings: LoggingSettings, level: Optional[str] = None) -> logging.Logger:
    """Stream handler plus an optional rotating log file, configured once on the root logger"""
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if settings.file:
        Path(settings.file).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.handlers.RotatingFileHandler(
            settings.file,
            maxBytes=settings.max_file_size_mb * 1024 * 1024,
            backupCount=settings.backup_count,
        ))
    logging.basicConfig(level=(level or settings.level).upper(), format=settings.format, handlers=handlers, force=True)
    return logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='DDIPNet / DDIPNet+ remote-sensing scene classification')
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='JSON config file (default: config.json next to this script)')
    common.add_argument('--seed', type=int, help='master seed; overrides experiment.master_seed and training.rng_seed')
    common.add_argument('--out-dir', help='directory for every artifact (default: runs/<command>)')
    common.add_argument('--variant', choices=['ddipnet', 'ddipnet+'], help='training variant')
    common.add_argument('--fixed-split', action='store_true', help='reuse one split for every run')
    common.add_argument('--data', help='class-per-directory image root or feature CSV (default: synthetic)')
    common.add_argument('--ratio', type=float, help='training ratio; overrides split.train_ratio')
    common.add_argument('--log-level', help='DEBUG, INFO, WARNING, ...')

    sub = parser.add_subparsers(dest='command', required=True)
    sub.add_parser('synth', parents=[common], help='write the synthetic dataset as PNG class directories')
    sub.add_parser('train', parents=[common], help='train once on the training split and save the model')
    evaluate = sub.add_parser('evaluate', parents=[common], help='fit the SVM with a saved model and score it')
    evaluate.add_argument('--model', required=True, help='checkpoint stem written by train')
    experiment = sub.add_parser('experiment', parents=[common], help='repeated executions with mean ± std')
    experiment.add_argument('--runs', type=int, help='overrides experiment.runs')
    sub.add_parser('margin-search', parents=[common], help='accuracy across the margin grid')
    ingest = sub.add_parser('ingest-features', parents=[common], help='validate a feature CSV')
    ingest.add_argument('features', help='feature CSV to ingest')
    export = sub.add_parser('export-features', parents=[common], help='write backbone features as CSV')
    export.add_argument('--model', required=True, help='checkpoint stem written by train')
    return parser


def apply_overrides(config: PipelineConfig, args: argparse.Namespace) -> PipelineConfig:
    if args.seed is not None:
        config.experiment = replace(config.experiment, master_seed=args.seed)
        config.training = replace(config.training, rng_seed=args.seed)
        config.split = replace(config.split, rng_seed=args.seed)
    if args.variant:
        config.training = replace(config.training, variant=normalize_variant(args.variant))
    if args.fixed_split:
        config.experiment = replace(config.experiment, fixed_split=True)
    if args.ratio is not None:
        config.split = replace(config.split, train_ratio=args.ratio)
    elif config.experiment.dataset:
        config.split = replace(config.split, train_ratio=ratio_presets(config.experiment.dataset)[0])
    if getattr(args, 'runs', None) is not None:
        config.experiment = replace(config.experiment, runs=args.runs)
    return config


class DDIPNetPipeline:
    """Ties configuration, datasets, training, evaluation and reporting together"""

    def __init__(self, config: PipelineConfig, out_dir: Path):
        self.config = config
        self.out_dir = out_dir
        self.digest = config_hash(config)
        self.reports = DarkReportGenerator()
        self.artifacts: List[Path] = []

    def load_data(self, data: Optional[str]) -> Dataset:
        side = self.config.backbone.input_side
        if data:
            return load_dataset(data, image_side=side)
        synthetic = self.config.synthetic
        if synthetic.image_side != side:
            raise ConfigError(f"synthetic.image_side={synthetic.image_side} but backbone.input_side={side}")
        return synth_dataset(synthetic.classes, synthetic.per_class, synthetic.image_side,
                             self.config.experiment.master_seed, synthetic.noise)

    def _emit_all(self, report, stem: str):
        for fmt in ('csv', 'json', 'svg'):
            self.artifacts.append(self.reports.emit(report, fmt, self.out_dir, stem))

    def synth(self) -> dict:
        dataset = self.load_data(None)
        root = self.out_dir / 'dataset'
        for i, sample in enumerate(dataset.samples):
            class_dir = root / dataset.class_names[sample.label]
            class_dir.mkdir(parents=True, exist_ok=True)
            pixels = np.clip(np.rint(sample.pixels.transpose(1, 2, 0) * 255.0), 0, 255).astype(np.uint8)
            path = class_dir / f"{i:05d}.png"
            try:
                Image.fromarray(pixels).save(path)
            except OSError as e:
                raise ReportError(f"cannot write {path}: {e}") from e
            self.artifacts.append(path)
        return {'images': len(dataset), 'classes': dataset.classes, 'root': str(root)}

    def train(self, data: Optional[str]) -> dict:
        dataset = self.load_data(data)
        train_set, _ = split(dataset, self.config.split)
        seeds = np.random.SeedSequence(self.config.training.rng_seed).generate_state(3)
        backbone = None
        width = dataset.samples[0].width if dataset.is_feature_set else self.config.backbone.feature_width
        if not dataset.is_feature_set:
            backbone = build_backbone(self.config.backbone, int(seeds[0]))
        spec = self.config.generator.spec_for(dataset.classes, width)
        generator = build_generator(spec.classes, width, spec.base_channels, int(seeds[1]), spec=spec)
        cfg = replace(self.config.training, checkpoint_dir=str(self.out_dir / 'checkpoints'))

        model, history = train(train_set, backbone, generator, sample_latent(int(seeds[2])), cfg)
        self.artifacts.extend(model.save(self.out_dir / 'model'))
        self.artifacts.append(write_history_csv(history, self.out_dir / 'history.csv'))
        self.artifacts.append(self.reports.emit(history, 'svg', self.out_dir, 'history'))
        if cfg.checkpoint_every:
            self.artifacts.extend(sorted((self.out_dir / 'checkpoints').glob('epoch_*')))
        last = history[-1]
        return {'epochs': len(history), 'final_loss': last.mean_loss, 'final_d1': last.mean_d1,
                'final_d2': last.mean_d2, 'model': str(self.out_dir / 'model')}

    def evaluate(self, data: Optional[str], model_stem: str) -> dict:
        dataset = self.load_data(data)
        model = load_trained_model(model_stem)
        train_set, test_set = split(dataset, self.config.split)
        score, calls = evaluate_model(model, train_set, test_set, self.config.svm,
                                      self.config.split.rng_seed, self.config.experiment.svm_input)
        summary = {'accuracy': score.accuracy, 'confusion': score.confusion.astype(int).tolist(),
                   'test_size': len(test_set), 'generator_forwards_during_eval': calls,
                   'config_hash': self.digest}
        path = self.out_dir / 'evaluation.json'
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(summary, indent=2) + '\n', encoding='utf-8')
        self.artifacts.append(path)
        return summary

    async def experiment(self, data: Optional[str]) -> dict:
        dataset = self.load_data(data)
        settings = self.config.experiment
        report = await run_experiment_async(
            dataset, self.config.training.variant, self.config.training, self.config.svm, self.config.split,
            runs=settings.runs, settings=settings, architecture=self.config.backbone,
            generator=self.config.generator, config_snapshot=self.config.to_dict(),
        )
        self._emit_all(report, 'experiment')
        if self.config.ledger.enabled:
            ExperimentLedger(self.config.ledger.path).record_experiment(report)
        return {'mean': report.mean, 'std': report.std, 'runs': len(report.runs), 'notes': report.notes}

    async def margin_search(self, data: Optional[str]) -> dict:
        dataset = self.load_data(data)
        result = await margin_search_async(
            dataset, self.config.training.variant, self.config.training, self.config.svm,
            self.config.margin_search, self.config.experiment.master_seed,
            max_concurrent=self.config.experiment.max_concurrent_runs,
            architecture=self.config.backbone, generator=self.config.generator,
        )
        self._emit_all(result, 'margin_search')
        if self.config.ledger.enabled:
            ExperimentLedger(self.config.ledger.path).record_margin_search(result)
        return {'best_margin': result.best_margin, 'margins': len(result.margins)}

    def ingest(self, features_path: str) -> dict:
        rows = ingest_features(features_path)
        target = export_features(self.out_dir / 'features.csv', [feature for feature, _ in rows])
        self.artifacts.append(target)
        labels = sorted({label for _, label in rows})
        return {'rows': len(rows), 'feature_width': rows[0][0].width, 'classes': len(labels)}

    def export(self, data: Optional[str], model_stem: str) -> dict:
        dataset = self.load_data(data)
        model = load_trained_model(model_stem)
        features = extract_features(dataset.samples, model.backbone)
        self.artifacts.append(export_features(self.out_dir / 'features.csv', features))
        return {'rows': len(features), 'feature_width': features[0].width}

    def finish(self, command: str) -> Path:
        return write_manifest(self.out_dir, self.artifacts, self.digest, command)


async def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code"""
    args = build_parser().parse_args(argv)
    env = read_env_overrides()

    try:
        config_path = args.config or env.config_path or (DEFAULT_CONFIG_PATH if DEFAULT_CONFIG_PATH.exists() else None)
        config = apply_overrides(load_pipeline_config(config_path), args)
        setup_logging(config.logging, args.log_level or env.log_level)
        out_dir = Path(args.out_dir or env.out_dir or Path('runs') / args.command)
        pipeline = DDIPNetPipeline(config, out_dir)

        if args.command == 'synth':
            summary = pipeline.synth()
        elif args.command == 'train':
            summary = pipeline.train(args.data)
        elif args.command == 'evaluate':
            summary = pipeline.evaluate(args.data, args.model)
        elif args.command == 'experiment':
            summary = await pipeline.experiment(args.data)
        elif args.command == 'margin-search':
            summary = await pipeline.margin_search(args.data)
        elif args.command == 'ingest-features':
            summary = pipeline.ingest(args.features)
        else:
            summary = pipeline.export(args.data, args.model)

        manifest = pipeline.finish(args.command)
        print(json.dumps(summary, indent=2))
        print(f"Manifest: {manifest}")
        return 0

    except KeyboardInterrupt:
        print("\nOperation cancelled by user")
        return 1
    except PipelineError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.error(f"System error: {e}")
        print(f"System error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(asyncio.run(main()))

#!/usr/bin/env python3
"""
Tests for the command-line entry point and its exit codes
"""

import asyncio
import json

import pytest

from main import build_parser, main

TINY_CONFIG = {
    "backbone": {
        "input_side": 8,
        "in_channels": 3,
        "conv_blocks": [{"channels": 4, "kernel": 3, "convs": 1, "pool": True}],
        "fc_widths": [64],
    },
    "generator": {"base_channels": 4},
    "training": {"epochs": 1, "batch_size": 4, "lr_backbone": 0.001, "lr_generator": 0.001,
                 "record_timing": False},
    "split": {"train_ratio": 0.5, "rng_seed": 0},
    "experiment": {"runs": 2, "max_concurrent_runs": 1},
    "margin_search": {"margins": [0.4, 0.5], "rounds": 1, "epochs_per_round": 1, "train_ratio": 0.5},
    "synthetic": {"classes": 2, "per_class": 6, "image_side": 8},
}


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / 'tiny.json'
    path.write_text(json.dumps(TINY_CONFIG), encoding='utf-8')
    return str(path)


def run_cli(*argv):
    return asyncio.run(main(list(argv)))


def read_json(path):
    return json.loads(path.read_text(encoding='utf-8'))


def test_parser_accepts_the_plus_variant():
    args = build_parser().parse_args(['experiment', '--variant', 'ddipnet+', '--runs', '3', '--seed', '4'])
    assert args.command == 'experiment'
    assert args.variant == 'ddipnet+'
    assert args.runs == 3 and args.seed == 4


def test_synth_writes_class_directories(tmp_path):
    out = tmp_path / 'synth'
    assert run_cli('synth', '--out-dir', str(out)) == 0
    class_dirs = sorted(p.name for p in (out / 'dataset').iterdir())
    assert class_dirs == ['class_0', 'class_1', 'class_2']
    assert len(list((out / 'dataset' / 'class_0').glob('*.png'))) == 20
    manifest = read_json(out / 'manifest.json')
    assert manifest['command'] == 'synth'
    assert len(manifest['artifacts']) == 60


def test_train_evaluate_and_export(tmp_path, tiny_config):
    out = tmp_path / 'train'
    assert run_cli('train', '--config', tiny_config, '--out-dir', str(out)) == 0
    assert (out / 'model.manifest').exists() and (out / 'model.bin').exists()
    assert (out / 'history.csv').read_text(encoding='utf-8').splitlines()[0].startswith('epoch,mean_loss')
    assert (out / 'history.svg').exists()

    evaluation_dir = tmp_path / 'evaluate'
    assert run_cli('evaluate', '--config', tiny_config, '--out-dir', str(evaluation_dir),
                   '--model', str(out / 'model')) == 0
    evaluation = read_json(evaluation_dir / 'evaluation.json')
    assert 0.0 <= evaluation['accuracy'] <= 1.0
    assert evaluation['generator_forwards_during_eval'] == 0
    assert evaluation['test_size'] == 6

    export_dir = tmp_path / 'export'
    assert run_cli('export-features', '--config', tiny_config, '--out-dir', str(export_dir),
                   '--model', str(out / 'model')) == 0
    lines = (export_dir / 'features.csv').read_text(encoding='utf-8').splitlines()
    assert lines[0].split(',')[:2] == ['label', 'f0']
    assert len(lines) == 13

    ingest_dir = tmp_path / 'ingest'
    assert run_cli('ingest-features', str(export_dir / 'features.csv'), '--config', tiny_config,
                   '--out-dir', str(ingest_dir)) == 0
    assert (ingest_dir / 'features.csv').exists()


def test_experiment_and_margin_search(tmp_path, tiny_config):
    out = tmp_path / 'experiment'
    assert run_cli('experiment', '--config', tiny_config, '--out-dir', str(out), '--seed', '3') == 0
    report = read_json(out / 'experiment.json')
    assert report['master_seed'] == 3
    assert len(report['runs']) == 2
    assert sorted(read_json(out / 'manifest.json')['artifacts']) == \
        ['experiment.csv', 'experiment.json', 'experiment.svg']

    search_dir = tmp_path / 'margins'
    assert run_cli('margin-search', '--config', tiny_config, '--out-dir', str(search_dir)) == 0
    result = read_json(search_dir / 'margin_search.json')
    assert result['margins'] == [0.4, 0.5]


def test_error_exit_codes(tmp_path, tiny_config):
    assert run_cli('synth', '--config', str(tmp_path / 'absent.json'), '--out-dir', str(tmp_path / 'a')) == 1

    bad_features = tmp_path / 'bad.csv'
    bad_features.write_text("label,f0\n0,-1\n", encoding='utf-8')
    assert run_cli('ingest-features', str(bad_features), '--out-dir', str(tmp_path / 'b')) == 2

    assert run_cli('train', '--config', tiny_config, '--data', str(tmp_path / 'nowhere'),
                   '--out-dir', str(tmp_path / 'c')) == 2
    assert run_cli('evaluate', '--config', tiny_config, '--model', str(tmp_path / 'no-model'),
                   '--out-dir', str(tmp_path / 'd')) == 2

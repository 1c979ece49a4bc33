#!/usr/bin/env python3
"""
Tests for CSV, JSON and SVG report artifacts and the run manifest
"""

import json
import xml.etree.ElementTree as ET

import pandas as pd
import pytest

from errors import ConfigError, ReportError
from experiment_harness import ExperimentReport, MarginSearchResult, RunResult
from report_generator import DarkReportGenerator, emit_report, load_report_json, write_manifest
from trainer import EpochRecord

SVG_NS = '{http://www.w3.org/2000/svg}'


def make_run(index, accuracy, epochs=3):
    history = [{'epoch': e, 'mean_loss': 0.5 / e, 'mean_d1': 0.3 / e, 'mean_d2': 0.6 + 0.01 * e,
                'wallclock_ms': 0.0} for e in range(1, epochs + 1)]
    return RunResult(index=index, seeds={'split': index, 'svm': 7}, accuracy=accuracy,
                     confusion=[[2, 0], [1, 1]], train_size=8, test_size=4,
                     final_loss=history[-1]['mean_loss'], final_d1=history[-1]['mean_d1'],
                     final_d2=history[-1]['mean_d2'], history=history)


def make_report():
    runs = [make_run(0, 0.75), make_run(1, 1.0)]
    return ExperimentReport(dataset_name='synthetic-2x6', variant='ddipnet', master_seed=0,
                            accuracies=[0.75, 1.0], mean=0.875, std=0.1767766953,
                            runs=runs, config_snapshot={'svm': {'C': 1.0}}, config_hash='abc123')


def make_margin_result():
    margins = [round(0.1 * k, 1) for k in range(1, 11)]
    return MarginSearchResult(dataset_name='synthetic-3x20', variant='ddipnet', master_seed=0,
                              margins=margins, means=[0.8 + 0.01 * k for k in range(10)],
                              stds=[0.02] * 10, accuracies=[[0.8, 0.82]] * 10, rounds=2, epochs_per_round=3)


def test_experiment_csv_has_one_row_per_run_plus_summary(tmp_path):
    path = emit_report(make_report(), 'csv', tmp_path, 'experiment')
    frame = pd.read_csv(path, keep_default_na=False)
    assert list(frame.columns) == ['run', 'accuracy', 'std', 'train_size', 'test_size', 'note']
    assert frame['run'].astype(str).tolist() == ['0', '1', 'summary']
    summary = frame.iloc[-1]
    assert float(summary['accuracy']) == pytest.approx(0.875)
    assert float(summary['std']) == pytest.approx(0.1767766953)


def test_margin_csv_lists_every_margin(tmp_path):
    path = emit_report(make_margin_result(), 'csv', tmp_path, 'margin_search')
    frame = pd.read_csv(path)
    assert list(frame.columns) == ['margin', 'mean_accuracy', 'std_accuracy', 'rounds']
    assert len(frame) == 10
    assert frame['margin'].tolist() == pytest.approx([0.1 * k for k in range(1, 11)])


def test_json_reports_round_trip(tmp_path):
    report = make_report()
    assert load_report_json(emit_report(report, 'json', tmp_path, 'experiment')) == report
    result = make_margin_result()
    assert load_report_json(emit_report(result, 'json', tmp_path, 'margin_search')) == result


def test_experiment_svg_has_one_polyline_per_series(tmp_path):
    path = emit_report(make_report(), 'svg', tmp_path, 'experiment')
    root = ET.parse(path).getroot()
    assert root.tag == f"{SVG_NS}svg"
    groups = root.findall(f"{SVG_NS}g")
    assert len(groups) == 3
    for group in groups:
        polylines = group.findall(f"{SVG_NS}polyline")
        assert len(polylines) == 1
        assert len(polylines[0].get('points').split()) == 3
        assert len(group.findall(f"{SVG_NS}line")) == 3


def test_margin_and_history_charts(tmp_path):
    margin_svg = emit_report(make_margin_result(), 'svg', tmp_path, 'margin_search')
    groups = ET.parse(margin_svg).getroot().findall(f"{SVG_NS}g")
    assert len(groups) == 1
    assert len(groups[0].find(f"{SVG_NS}polyline").get('points').split()) == 10

    history = [EpochRecord(e, 1.0 / e, 0.2, 0.5) for e in range(1, 5)]
    generator = DarkReportGenerator()
    history_svg = generator.emit(history, 'svg', tmp_path, 'history')
    assert len(ET.parse(history_svg).getroot().findall(f"{SVG_NS}g")) == 3
    history_json = generator.emit(history, 'json', tmp_path, 'history')
    assert json.loads(history_json.read_text(encoding='utf-8'))[0]['epoch'] == 1
    history_csv = generator.emit(history, 'csv', tmp_path, 'history')
    assert len(pd.read_csv(history_csv)) == 4


def test_chart_uses_dark_palette():
    generator = DarkReportGenerator()
    svg = generator.render_chart('t', 'x', 'y', [0, 1], {'s': ([0.0, 1.0], None)})
    assert generator.theme['bg_primary'] in svg
    assert generator.series_colors[0] in svg
    with pytest.raises(ReportError):
        generator.render_chart('t', 'x', 'y', [], {})


def test_unknown_format_is_rejected(tmp_path):
    with pytest.raises(ConfigError):
        emit_report(make_report(), 'pdf', tmp_path)


def test_manifest_lists_artifacts_relative_to_out_dir(tmp_path):
    paths = [emit_report(make_report(), fmt, tmp_path, 'experiment') for fmt in ('svg', 'csv', 'json')]
    manifest = write_manifest(tmp_path, paths, 'deadbeef', 'experiment')
    data = json.loads(manifest.read_text(encoding='utf-8'))
    assert data == {'command': 'experiment', 'config_hash': 'deadbeef',
                    'artifacts': ['experiment.csv', 'experiment.json', 'experiment.svg']}

#!/usr/bin/env python3
"""
Dark Theme Report Generator
Writes experiment, margin-search and training-history artifacts as CSV, JSON and SVG charts
"""

import json
import logging
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from jinja2 import Environment

from errors import ConfigError, ReportError
from experiment_harness import ExperimentReport, MarginSearchResult
from trainer import EpochRecord, write_history_csv

logger = logging.getLogger(__name__)

FORMATS = ('csv', 'json', 'svg')
FLOAT_FORMAT = '%.9g'

Reportable = Union[ExperimentReport, MarginSearchResult, List[EpochRecord]]

SVG_TEMPLATE = """<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{{ width }}" height="{{ height }}" viewBox="0 0 {{ width }} {{ height }}">
  <rect x="0" y="0" width="{{ width }}" height="{{ height }}" fill="{{ theme.bg_primary }}"/>
  <rect x="{{ left }}" y="{{ top }}" width="{{ plot_w }}" height="{{ plot_h }}" fill="{{ theme.bg_secondary }}" stroke="{{ theme.bg_elevated }}"/>
  <text x="{{ width / 2 }}" y="24" fill="{{ theme.text_primary }}" font-family="sans-serif" font-size="16" text-anchor="middle">{{ title }}</text>
  <text x="{{ left + plot_w / 2 }}" y="{{ height - 8 }}" fill="{{ theme.text_secondary }}" font-family="sans-serif" font-size="12" text-anchor="middle">{{ x_label }}</text>
  <text x="14" y="{{ top + plot_h / 2 }}" fill="{{ theme.text_secondary }}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 14 {{ top + plot_h / 2 }})">{{ y_label }}</text>
  {% for tick in x_ticks %}
  <text x="{{ tick.pos }}" y="{{ top + plot_h + 16 }}" fill="{{ theme.text_muted }}" font-family="sans-serif" font-size="10" text-anchor="middle">{{ tick.label }}</text>
  {% endfor %}
  {% for tick in y_ticks %}
  <line x1="{{ left }}" y1="{{ tick.pos }}" x2="{{ left + plot_w }}" y2="{{ tick.pos }}" stroke="{{ theme.bg_tertiary }}" stroke-width="1"/>
  <text x="{{ left - 6 }}" y="{{ tick.pos + 3 }}" fill="{{ theme.text_muted }}" font-family="sans-serif" font-size="10" text-anchor="end">{{ tick.label }}</text>
  {% endfor %}
  {% for series in series_list %}
  <g class="series">
    <polyline fill="none" stroke="{{ series.color }}" stroke-width="2" points="{{ series.points }}"/>
    {% for bar in series.error_bars %}
    <line x1="{{ bar.x }}" y1="{{ bar.y_low }}" x2="{{ bar.x }}" y2="{{ bar.y_high }}" stroke="{{ series.color }}" stroke-width="1"/>
    {% endfor %}
    <text x="{{ left + plot_w + 8 }}" y="{{ top + 14 + loop.index0 * 16 }}" fill="{{ series.color }}" font-family="sans-serif" font-size="11">{{ series.name }}</text>
  </g>
  {% endfor %}
</svg>
"""


class DarkReportGenerator:
    """
    Report writer sharing one dark colour palette across every chart
    """

    def __init__(self, width: int = 720, height: int = 420):
        self.theme = self._get_dark_theme_config()
        self.width = width
        self.height = height
        self.template = Environment(autoescape=True, trim_blocks=True, lstrip_blocks=True).from_string(SVG_TEMPLATE)

    def _get_dark_theme_config(self) -> Dict[str, str]:
        """Dark chart palette"""
        return {
            "bg_primary": "#0a0a0b",
            "bg_secondary": "#1a1a1d",
            "bg_tertiary": "#2d2d30",
            "bg_elevated": "#3c3c41",
            "text_primary": "#ffffff",
            "text_secondary": "#b4b4b8",
            "text_muted": "#7c7c82",
            "accent_primary": "#0084ff",
            "accent_success": "#34c759",
            "accent_warning": "#ff9500",
            "accent_error": "#ff453a",
            "accent_purple": "#af52de",
            "accent_teal": "#5ac8fa",
        }

    @property
    def series_colors(self) -> List[str]:
        return [self.theme[k] for k in ("accent_primary", "accent_success", "accent_warning",
                                        "accent_purple", "accent_teal", "accent_error")]

    # CSV

    def experiment_frame(self, report: ExperimentReport) -> pd.DataFrame:
        rows = [
            {'run': str(r.index), 'accuracy': r.accuracy, 'std': np.nan,
             'train_size': r.train_size, 'test_size': r.test_size, 'note': ''}
            for r in report.runs
        ]
        rows.append({'run': 'summary', 'accuracy': report.mean, 'std': report.std,
                     'train_size': np.nan, 'test_size': np.nan, 'note': ';'.join(report.notes)})
        frame = pd.DataFrame(rows, columns=['run', 'accuracy', 'std', 'train_size', 'test_size', 'note'])
        return frame.astype({'train_size': 'Int64', 'test_size': 'Int64'})

    def margin_frame(self, result: MarginSearchResult) -> pd.DataFrame:
        return pd.DataFrame({
            'margin': result.margins,
            'mean_accuracy': result.means,
            'std_accuracy': result.stds,
            'rounds': [result.rounds] * len(result.margins),
        })

    def _write_csv(self, frame: pd.DataFrame, path: Path) -> Path:
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep='', lineterminator='\n')
        return path

    # SVG

    def _ticks(self, lo: float, hi: float, count: int, to_pos) -> List[Dict[str, Any]]:
        values = np.linspace(lo, hi, count)
        return [{'pos': round(to_pos(v), 2), 'label': f"{v:.3g}"} for v in values]

    def render_chart(self, title: str, x_label: str, y_label: str, xs: Sequence[float],
                     series: Dict[str, Tuple[Sequence[float], Optional[Sequence[float]]]]) -> str:
        """One polyline per series; optional symmetric error bars of ± err"""
        if not xs or not series:
            raise ReportError("chart needs at least one point and one series")
        left, top, right, bottom = 60, 40, 110, 40
        plot_w = self.width - left - right
        plot_h = self.height - top - bottom

        lows, highs = [], []
        for ys, errs in series.values():
            ys = np.asarray(ys, dtype=np.float64)
            e = np.zeros_like(ys) if errs is None else np.asarray(errs, dtype=np.float64)
            lows.append(np.min(ys - e))
            highs.append(np.max(ys + e))
        y_lo, y_hi = float(min(lows)), float(max(highs))
        if y_hi - y_lo < 1e-12:
            y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
        x_lo, x_hi = float(min(xs)), float(max(xs))
        if x_hi - x_lo < 1e-12:
            x_lo, x_hi = x_lo - 0.5, x_hi + 0.5

        def x_pos(v):
            return left + (v - x_lo) / (x_hi - x_lo) * plot_w

        def y_pos(v):
            return top + plot_h - (v - y_lo) / (y_hi - y_lo) * plot_h

        series_list = []
        for i, (name, (ys, errs)) in enumerate(series.items()):
            points = ' '.join(f"{x_pos(x):.2f},{y_pos(y):.2f}" for x, y in zip(xs, ys))
            bars = []
            if errs is not None:
                bars = [{'x': f"{x_pos(x):.2f}", 'y_low': f"{y_pos(y - e):.2f}", 'y_high': f"{y_pos(y + e):.2f}"}
                        for x, y, e in zip(xs, ys, errs)]
            series_list.append({'name': name, 'color': self.series_colors[i % len(self.series_colors)],
                                'points': points, 'error_bars': bars})

        return self.template.render(
            width=self.width, height=self.height, left=left, top=top, plot_w=plot_w, plot_h=plot_h,
            theme=self.theme, title=title, x_label=x_label, y_label=y_label,
            x_ticks=self._ticks(x_lo, x_hi, min(len(xs), 10), x_pos),
            y_ticks=self._ticks(y_lo, y_hi, 5, y_pos),
            series_list=series_list,
        )

    def experiment_chart(self, report: ExperimentReport) -> str:
        """Loss and distances per epoch, averaged over runs, ± std across runs"""
        histories = [r.history for r in report.runs if r.history]
        if not histories:
            raise ReportError("experiment report carries no training history")
        epochs = min(len(h) for h in histories)
        xs = [histories[0][e]['epoch'] for e in range(epochs)]
        series = {}
        for key, name in (('mean_loss', 'loss'), ('mean_d1', 'd1'), ('mean_d2', 'd2')):
            table = np.array([[h[e][key] for e in range(epochs)] for h in histories])
            spread = table.std(axis=0, ddof=1) if len(histories) > 1 else np.zeros(epochs)
            series[name] = (table.mean(axis=0).tolist(), spread.tolist())
        return self.render_chart(f"{report.variant} on {report.dataset_name}: loss vs epoch",
                                 'epoch', 'value', xs, series)

    def margin_chart(self, result: MarginSearchResult) -> str:
        return self.render_chart(f"{result.variant} on {result.dataset_name}: accuracy vs margin",
                                 'margin', 'overall accuracy', result.margins,
                                 {'accuracy': (result.means, result.stds)})

    def history_chart(self, history: List[EpochRecord]) -> str:
        xs = [r.epoch for r in history]
        return self.render_chart('training history', 'epoch', 'value', xs, {
            'loss': ([r.mean_loss for r in history], None),
            'd1': ([r.mean_d1 for r in history], None),
            'd2': ([r.mean_d2 for r in history], None),
        })

    # Dispatch

    def emit(self, report: Reportable, fmt: str, out_dir: Union[str, Path], stem: str) -> Path:
        if fmt not in FORMATS:
            raise ConfigError(f"report format must be one of {FORMATS}, got '{fmt}'")
        out_dir = Path(out_dir)
        path = out_dir / f"{stem}.{fmt}"
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            if isinstance(report, list):
                if fmt == 'csv':
                    return write_history_csv(report, path)
                if fmt == 'json':
                    path.write_text(json.dumps([asdict(r) for r in report], indent=2) + '\n', encoding='utf-8')
                else:
                    path.write_text(self.history_chart(report), encoding='utf-8')
            elif fmt == 'csv':
                frame = self.experiment_frame(report) if isinstance(report, ExperimentReport) else self.margin_frame(report)
                self._write_csv(frame, path)
            elif fmt == 'json':
                path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + '\n', encoding='utf-8')
            else:
                chart = self.experiment_chart(report) if isinstance(report, ExperimentReport) else self.margin_chart(report)
                path.write_text(chart, encoding='utf-8')
        except OSError as e:
            logger.error(f"Failed to write report {path}: {e}")
            raise ReportError(f"cannot write {path}: {e}") from e
        logger.info(f"Report written: {path}")
        return path


def emit_report(report: Reportable, fmt: str, out_dir: Union[str, Path], stem: str = 'report') -> Path:
    return DarkReportGenerator().emit(report, fmt, out_dir, stem)


def load_report_json(path: Union[str, Path]) -> Union[ExperimentReport, MarginSearchResult]:
    try:
        data = json.loads(Path(path).read_text(encoding='utf-8'))
    except (OSError, json.JSONDecodeError) as e:
        raise ReportError(f"cannot read report {path}: {e}") from e
    if 'margins' in data:
        return MarginSearchResult.from_dict(data)
    return ExperimentReport.from_dict(data)


def write_manifest(out_dir: Union[str, Path], artifacts: Sequence[Union[str, Path]], config_digest: str,
                   command: str = '') -> Path:
    """manifest.json listing every artifact (relative to out_dir) and the config hash"""
    out_dir = Path(out_dir)
    entries = sorted({str(Path(a).resolve().relative_to(out_dir.resolve())) for a in artifacts})
    manifest = {'command': command, 'config_hash': config_digest, 'artifacts': entries}
    path = out_dir / 'manifest.json'
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + '\n', encoding='utf-8')
    except OSError as e:
        raise ReportError(f"cannot write manifest {path}: {e}") from e
    return path

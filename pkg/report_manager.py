import json
import os
from datetime import datetime
from itertools import permutations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import plotly.graph_objects as go

from errors import ComparisonError
from quality_model import COMPUTE_PROFILES

COMPARISON_COLUMNS = ['policy', 'mean_qoe', 'std_qoe', 'mean_psnr', 'mean_variation', 'mean_rebuffer',
                      'mean_startup_delay', 'enhanced_fraction', 'num_episodes']


def report_conditions(report: Dict) -> Tuple:
    """Experimental conditions two reports must share to be compared"""
    return (tuple(report['weights']), report['profile'], report['split'])


def compare_reports(reports: Sequence[Dict]) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Comparison table and pairwise relative QoE improvements

    Args:
        reports: evaluation reports with identical weights, profile and split

    Returns:
        (table with one row per report, improvements with one row per ordered pair;
         improvement_pct = (candidate - baseline) / |baseline| * 100)

    Raises:
        ComparisonError: fewer than two reports or mismatched conditions
    """
    if len(reports) < 2:
        raise ComparisonError(f"need at least two reports to compare, got {len(reports)}")
    reference = report_conditions(reports[0])
    for report in reports[1:]:
        if report_conditions(report) != reference:
            raise ComparisonError(
                f"reports ran under different conditions: {report['policy']} {report_conditions(report)} "
                f"vs {reports[0]['policy']} {reference}")

    table = pd.DataFrame([{'policy': r['policy'], **{k: r['summary'].get(k) for k in COMPARISON_COLUMNS[1:]}}
                          for r in reports], columns=COMPARISON_COLUMNS)

    rows = []
    for (i, candidate), (j, baseline) in permutations(enumerate(reports), 2):
        base = baseline['summary']['mean_qoe']
        cand = candidate['summary']['mean_qoe']
        pct = (cand - base) / abs(base) * 100.0 if base != 0 else float('nan')
        rows.append({'policy': candidate['policy'], 'baseline': baseline['policy'],
                     'mean_qoe': cand, 'baseline_qoe': base, 'improvement_pct': pct})
    improvements = pd.DataFrame(rows, columns=['policy', 'baseline', 'mean_qoe', 'baseline_qoe', 'improvement_pct'])
    return table, improvements


SWEEP_COLUMNS = ['policy', 'profile', 'scale_factor', 'mean_qoe', 'mean_psnr', 'enhanced_fraction', 'psnr_change']


def _scale_factor(report: Dict) -> float:
    if 'scale_factor' in report:
        return float(report['scale_factor'])
    if report['profile'] not in COMPUTE_PROFILES:
        raise ComparisonError(f"report for {report['policy']} has unknown profile '{report['profile']}'")
    return COMPUTE_PROFILES[report['profile']].scale_factor


def profile_sweep(reports: Sequence[Dict]) -> pd.DataFrame:
    """
    Mean quality of each policy across compute profiles, fastest device first

    Args:
        reports: evaluation reports sharing weights and split, at most one per (policy, profile)

    Returns:
        Table sorted by policy and scale factor; psnr_change is the mean PSNR
        difference to the next faster profile of the same policy (NaN for the fastest)

    Raises:
        ComparisonError: no reports, mismatched weights or split, or a repeated (policy, profile)
    """
    if not reports:
        raise ComparisonError("need at least one report for a profile sweep")
    reference = report_conditions(reports[0])
    seen = set()
    for report in reports:
        weights, _, split = report_conditions(report)
        if (weights, split) != (reference[0], reference[2]):
            raise ComparisonError(f"reports ran under different weights or split: {report['policy']} "
                                  f"{(weights, split)} vs {(reference[0], reference[2])}")
        key = (report['policy'], report['profile'])
        if key in seen:
            raise ComparisonError(f"two reports for {key[0]} on profile {key[1]}")
        seen.add(key)

    sweep = pd.DataFrame([{'policy': r['policy'], 'profile': r['profile'], 'scale_factor': _scale_factor(r),
                           **{k: r['summary'].get(k) for k in ('mean_qoe', 'mean_psnr', 'enhanced_fraction')}}
                          for r in reports])
    sweep = sweep.sort_values(['policy', 'scale_factor'], kind='stable').reset_index(drop=True)
    sweep['psnr_change'] = sweep.groupby('policy')['mean_psnr'].diff()
    return sweep[SWEEP_COLUMNS]


def psnr_falls_with_slower_devices(sweep: pd.DataFrame, tolerance: float = 1e-9) -> Dict[str, bool]:
    """Per policy: mean PSNR never rises as the scale factor grows"""
    return {policy: bool((group['psnr_change'].dropna() <= tolerance).all())
            for policy, group in sweep.groupby('policy')}


def psnr_cdf_frame(report: Dict) -> pd.DataFrame:
    values = np.asarray(report['psnr_cdf'], dtype=float)
    return pd.DataFrame({'psnr': values, 'cdf': np.arange(1, values.size + 1) / values.size})


def build_comparison_figure(reports: Sequence[Dict]) -> go.Figure:
    """Per-chunk PSNR CDF for every policy plus a mean-QoE bar chart"""
    fig = go.Figure()
    for report in reports:
        cdf = psnr_cdf_frame(report)
        fig.add_trace(go.Scatter(x=cdf['psnr'], y=cdf['cdf'], mode='lines', name=report['policy']))

    fig.add_trace(go.Bar(
        x=[r['policy'] for r in reports],
        y=[r['summary']['mean_qoe'] for r in reports],
        error_y=dict(type='data', array=[r['summary']['std_qoe'] for r in reports]),
        name='Mean QoE',
        xaxis='x2', yaxis='y2',
        marker_color='lightblue',
    ))

    weights, profile, split = report_conditions(reports[0])
    fig.update_layout(
        title=f"Policy comparison ({split} split, {profile} profile, weights {list(weights)})",
        xaxis=dict(title="PSNR (dB)", domain=[0.0, 0.55]),
        yaxis=dict(title="CDF", range=[0, 1]),
        xaxis2=dict(title="Policy", domain=[0.65, 1.0], anchor='y2'),
        yaxis2=dict(title="Mean QoE", anchor='x2'),
        width=1100,
        height=450,
    )
    return fig


class ReportManager:
    """Handles report storage, export, and analysis for evaluation runs"""

    def __init__(self, output_dir: str = "reports"):
        """Initialize the report manager

        Args:
            output_dir: Directory for reports, CDFs and figures
        """
        self.output_dir = output_dir

    def ensure_output_directory(self):
        if not os.path.exists(self.output_dir):
            os.makedirs(self.output_dir)
            print(f"📁 Created output directory: {self.output_dir}")

    def get_report_path(self, report: Dict, suffix: str = '.json') -> str:
        safe = "".join(c for c in report['policy'] if c.isalnum() or c in ('-', '_'))
        return os.path.join(self.output_dir, f"{safe}_{report['split']}_{report['profile']}{suffix}")

    def save_report(self, report: Dict, path: Optional[str] = None) -> str:
        """Write a report as JSON; returns the path"""
        self.ensure_output_directory()
        path = path or self.get_report_path(report)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(report, f, indent=2, sort_keys=True)
        print(f"💾 Saved report for {report['policy']}: {path}")
        return path

    def load_report(self, path: str) -> Dict:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)

    def export_psnr_cdf(self, report: Dict, path: Optional[str] = None) -> str:
        """CSV of the sorted per-chunk PSNR values with their empirical CDF"""
        self.ensure_output_directory()
        path = path or self.get_report_path(report, '_psnr_cdf.csv')
        psnr_cdf_frame(report).to_csv(path, index=False)
        print(f"💾 Saved PSNR CDF: {path}")
        return path

    def export_episode_table(self, report: Dict, path: Optional[str] = None) -> str:
        self.ensure_output_directory()
        path = path or self.get_report_path(report, '_episodes.csv')
        pd.DataFrame(report['episodes']).to_csv(path, index=False)
        return path

    def write_comparison(self, reports: Sequence[Dict], stem: str = "comparison") -> Dict[str, str]:
        """Comparison table, improvements and figure; returns the written paths"""
        table, improvements = compare_reports(reports)
        self.ensure_output_directory()
        paths = {
            'table': os.path.join(self.output_dir, f"{stem}_table.csv"),
            'improvements': os.path.join(self.output_dir, f"{stem}_improvements.csv"),
            'figure': os.path.join(self.output_dir, f"{stem}.html"),
        }
        table.to_csv(paths['table'], index=False)
        improvements.to_csv(paths['improvements'], index=False)
        build_comparison_figure(reports).write_html(paths['figure'])
        print(f"✅ Comparison of {len(reports)} reports written to {self.output_dir}")
        return paths

    def write_profile_sweep(self, reports: Sequence[Dict], stem: str = "profile_sweep") -> Dict[str, str]:
        """Sweep table and mean-PSNR-vs-scale-factor figure; returns the written paths"""
        sweep = profile_sweep(reports)
        self.ensure_output_directory()
        paths = {
            'sweep': os.path.join(self.output_dir, f"{stem}_sweep.csv"),
            'figure': os.path.join(self.output_dir, f"{stem}_sweep.html"),
        }
        sweep.to_csv(paths['sweep'], index=False)

        fig = go.Figure()
        for policy, group in sweep.groupby('policy'):
            fig.add_trace(go.Scatter(x=group['scale_factor'], y=group['mean_psnr'], mode='lines+markers',
                                     text=group['profile'], name=policy))
        fig.update_layout(title="Mean PSNR by compute profile", xaxis_title="Enhancement time scale factor",
                          yaxis_title="Mean PSNR (dB)", width=800, height=450)
        fig.write_html(paths['figure'])
        print(f"✅ Profile sweep over {sweep['profile'].nunique()} profiles written to {self.output_dir}")
        return paths

    def generate_analysis_report(self, report: Dict) -> str:
        """
        Generate a plain-text summary of one evaluation report

        Args:
            report: Evaluation report dictionary

        Returns:
            Formatted analysis report as string
        """
        summary = report.get('summary', {})
        lines = []
        lines.append("=" * 60)
        lines.append("STREAMING POLICY EVALUATION REPORT")
        lines.append("=" * 60)
        lines.append("")
        lines.append("CONDITIONS:")
        lines.append(f"  Policy: {report.get('policy', 'N/A')}")
        lines.append(f"  Split: {report.get('split', 'N/A')}")
        lines.append(f"  Compute profile: {report.get('profile', 'N/A')}")
        lines.append(f"  QoE weights: {report.get('weights', 'N/A')}")
        lines.append(f"  Seeds: {report.get('seeds', 'N/A')}  Episodes: {summary.get('num_episodes', 0)}")
        lines.append(f"  Config hash: {report.get('config_hash', 'N/A')[:12]}")
        lines.append("")
        lines.append("QOE (mean ± std over seed means):")
        lines.append(f"  QoE: {summary.get('mean_qoe', 0):.3f} ± {summary.get('std_qoe', 0):.3f}")
        lines.append(f"  PSNR: {summary.get('mean_psnr', 0):.3f} dB ± {summary.get('std_psnr', 0):.3f}")
        lines.append(f"  Bitrate variation: {summary.get('mean_variation', 0):.3f} Mbps")
        lines.append(f"  Re-buffering: {summary.get('mean_rebuffer', 0):.4f} s per chunk")
        lines.append(f"  Startup delay: {summary.get('mean_startup_delay', 0):.3f} s")
        lines.append(f"  Enhanced chunks: {summary.get('enhanced_fraction', 0):.1%}")
        lines.append("")

        psnr = np.asarray(report.get('psnr_cdf', []), dtype=float)
        if psnr.size:
            lines.append("PER-CHUNK PSNR PERCENTILES:")
            lines.append("  Percentile | PSNR (dB)")
            lines.append("  -----------|----------")
            for q in (5, 25, 50, 75, 95):
                lines.append(f"  {q:10d} | {np.percentile(psnr, q):8.3f}")
            lines.append("")

        lines.append("=" * 60)
        lines.append(f"Report generated on: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
        lines.append("=" * 60)
        return "\n".join(lines)

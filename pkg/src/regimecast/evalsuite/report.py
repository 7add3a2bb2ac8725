"""Regime-conditioned breakdowns and deterministic report emission."""

from __future__ import annotations

import os

import numpy as np

from .metrics import EvalReport, MetricRow, PredictionSet, _mape


def regime_breakdown(pred: PredictionSet, labels: np.ndarray,
                     label_names: dict | None = None) -> list:
    """Per-regime MAPE rows (per horizon) from per-day labels."""
    labels = np.asarray(labels)
    if labels.shape[0] != pred.days.shape[0]:
        raise ValueError("labels must align with prediction days")
    rows = []
    for h_idx, horizon in enumerate(pred.horizons):
        for value in np.unique(labels):
            day_mask = labels == value
            mask = pred.valid[:, :, h_idx] & day_mask[:, None]
            if not mask.any():
                continue
            mape, excluded = _mape(pred.y_price[:, :, h_idx][mask],
                                   pred.target_price[:, :, h_idx][mask])
            name = (label_names or {}).get(int(value), str(value))
            rows.append(MetricRow(label=f"regime={name}", horizon=horizon,
                                  mape=mape, rmse=float("nan"), da=float("nan"),
                                  theil_u=float("nan"), ctr=float("nan"),
                                  n=int(mask.sum()), n_excluded=excluded))
    return rows


def _fmt(value, width=10, decimals=4):
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return " " * (width - 3) + "---"
    return f"{value:>{width}.{decimals}f}"


def render_text(report: EvalReport) -> str:
    lines = []
    header = (f"{'label':<14}{'h':>4}{'MAPE%':>10}{'RMSE':>10}{'DA%':>10}"
              f"{'TheilU':>10}{'CTR%':>10}{'n':>8}")
    bar = "-" * len(header)
    lines.append("== per-stock metrics ==")
    lines.append(header)
    lines.append(bar)
    for row in report.rows:
        lines.append(f"{row.label:<14}{row.horizon:>4}{_fmt(row.mape)}"
                     f"{_fmt(row.rmse)}{_fmt(row.da)}{_fmt(row.theil_u)}"
                     f"{_fmt(row.ctr)}{row.n:>8}")
    lines.append(bar)
    for section, rows in (("aggregates", report.aggregates),
                          ("baselines", report.baselines),
                          ("regimes", report.regime_rows)):
        if not rows:
            continue
        lines.append(f"== {section} ==")
        for row in rows:
            lines.append(f"{row.label:<14}{row.horizon:>4}{_fmt(row.mape)}"
                         f"{_fmt(row.rmse)}{_fmt(row.da)}{_fmt(row.theil_u)}"
                         f"{_fmt(row.ctr)}{row.n:>8}")
    if report.significance:
        lines.append("== significance (paired t on daily squared errors) ==")
        for res in report.significance:
            lines.append(f"{res.comparison:<40} t={res.t_stat:+.4f} "
                         f"p={res.p_value:.6g} d={res.cohens_d:+.4f} n={res.n}"
                         + ("  [degenerate]" if res.degenerate else ""))
    for key in sorted(report.meta):
        lines.append(f"meta {key} = {report.meta[key]}")
    return "\n".join(lines) + "\n"


def _csv_row(row: MetricRow) -> str:
    def num(v):
        return "" if isinstance(v, float) and np.isnan(v) else f"{v:.10g}"

    return ",".join([row.label, str(row.horizon), num(row.mape), num(row.rmse),
                     num(row.da), num(row.theil_u), num(row.ctr), str(row.n),
                     str(row.n_excluded)])


def emit_report(report: EvalReport, out_dir, formats=("text", "csv", "plot-data")
                ) -> dict:
    """Write report files; byte output is deterministic given the report."""
    os.makedirs(out_dir, exist_ok=True)
    written = {}
    if "text" in formats:
        path = os.path.join(out_dir, "report.txt")
        with open(path, "w") as fh:
            fh.write(render_text(report))
        written["text"] = path
    if "csv" in formats:
        path = os.path.join(out_dir, "report.csv")
        with open(path, "w") as fh:
            fh.write("label,horizon,mape,rmse,da,theil_u,ctr,n,n_excluded\n")
            for row in (report.rows + report.aggregates + report.baselines
                        + report.regime_rows):
                fh.write(_csv_row(row) + "\n")
        written["csv"] = path
        sig_path = os.path.join(out_dir, "significance.csv")
        with open(sig_path, "w") as fh:
            fh.write("comparison,t_stat,p_value,cohens_d,n,degenerate\n")
            for res in report.significance:
                fh.write(f"{res.comparison},{res.t_stat:.10g},{res.p_value:.10g},"
                         f"{res.cohens_d:.10g},{res.n},{int(res.degenerate)}\n")
        written["significance"] = sig_path
    if "plot-data" in formats:
        path = os.path.join(out_dir, "trajectory.csv")
        with open(path, "w") as fh:
            fh.write("day,tau,alpha,mean_recon_error\n")
            for day, tau, alpha, err in report.trajectory:
                fh.write(f"{day},{tau:.10g},{alpha:.10g},{err:.10g}\n")
        written["trajectory"] = path
    return written

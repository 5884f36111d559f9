"""Rendering of evaluation results: JSON report, CSV tables, boxplot figures.

The condition-grid summaries mirror the usual ratio-by-SNR layout: one
panel per (r, SNR) cell, boxes for each metric. Outlier fences use
Q1 - 1.5*IQR and Q3 + 1.5*IQR.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def box_stats(values, q_fence: float = 1.5) -> dict:
    """Five-number boxplot summary with IQR outlier fences."""
    v = np.asarray(values, dtype=float)
    q1, med, q3 = (float(np.quantile(v, q)) for q in (0.25, 0.5, 0.75))
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - q_fence * iqr, q3 + q_fence * iqr
    inliers = v[(v >= lo_fence) & (v <= hi_fence)]
    outliers = v[(v < lo_fence) | (v > hi_fence)]
    return {
        "q1": q1,
        "median": med,
        "q3": q3,
        "whisker_lo": float(inliers.min()) if inliers.size else q1,
        "whisker_hi": float(inliers.max()) if inliers.size else q3,
        "outliers": [float(x) for x in outliers],
        "n": int(v.size),
    }


def write_report_json(path: str, report, config: dict):
    payload = {
        "per_recording": report.per_recording,
        "aggregates": report.aggregates,
        "quantile_rows": report.quantile_rows,
        "config": config,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def write_metric_table(path: str, aggregates: dict):
    """CSV with one row per metric: mean, sd, median."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "mean", "sd", "median"])
        for metric in sorted(aggregates):
            s = aggregates[metric]
            w.writerow([metric, f"{s['mean']:.6g}", f"{s['sd']:.6g}", f"{s['median']:.6g}"])


def write_condition_summary(path: str, grid: dict, q_fence: float = 1.5):
    """CSV boxplot summary per (condition, metric) cell.

    grid maps (r_label, snr_label) -> {metric: [values]}.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["ratio", "snr_db", "metric", "n", "q1", "median", "q3", "whisker_lo", "whisker_hi", "n_outliers"]
        )
        for (r_label, snr_label), metrics in sorted(grid.items()):
            for metric in sorted(metrics):
                if not len(metrics[metric]):
                    continue
                s = box_stats(metrics[metric], q_fence)
                w.writerow(
                    [
                        r_label,
                        snr_label,
                        metric,
                        s["n"],
                        f"{s['q1']:.6g}",
                        f"{s['median']:.6g}",
                        f"{s['q3']:.6g}",
                        f"{s['whisker_lo']:.6g}",
                        f"{s['whisker_hi']:.6g}",
                        len(s["outliers"]),
                    ]
                )


def plot_condition_grid(out_dir: str, grid: dict, metrics, fname: str, title: str):
    """Boxplot figure: panels laid out ratio (columns) by SNR (rows)."""
    ratios = sorted({k[0] for k in grid}, reverse=True)
    snrs = sorted({k[1] for k in grid}, reverse=True)
    fig, axes = plt.subplots(
        len(snrs), len(ratios), figsize=(3.2 * len(ratios), 2.6 * len(snrs)), squeeze=False
    )
    for i, snr in enumerate(snrs):
        for j, ratio in enumerate(ratios):
            ax = axes[i][j]
            cell = grid.get((ratio, snr), {})
            data = [cell.get(m, []) for m in metrics]
            data = [d if len(d) else [np.nan] for d in data]
            ax.boxplot(data, tick_labels=list(metrics), whis=1.5)
            ax.set_title(f"r={ratio}, SNR={snr} dB", fontsize=9)
            ax.tick_params(labelsize=8)
    fig.suptitle(title)
    fig.tight_layout(rect=(0, 0, 1, 0.96))
    path = os.path.join(out_dir, fname)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_decomposition(out_dir: str, record_name: str, fs, z, mecg, rfecg, fecg, fetal_peaks):
    """Stacked trace plot of one decomposition, first 10 s."""
    n = min(len(z), int(10 * fs))
    t = np.arange(n) / fs
    fig, axes = plt.subplots(4, 1, figsize=(10, 7), sharex=True)
    for ax, (sig, label, color) in zip(
        axes,
        [
            (z, "combined input", "k"),
            (mecg, "estimated maternal ECG", "tab:blue"),
            (rfecg, "rough fetal ECG", "tab:red"),
            (fecg, "denoised fetal ECG", "tab:purple"),
        ],
    ):
        ax.plot(t, sig[:n], color=color, lw=0.7)
        ax.set_ylabel(label, fontsize=8)
    pk = fetal_peaks.times / 1000.0
    pk = pk[pk < t[-1]]
    idx = np.round(pk * fs).astype(int)
    axes[3].plot(pk, np.asarray(fecg)[idx], "x", color="tab:green", ms=5)
    axes[3].set_xlabel("time (s)")
    fig.suptitle(f"{record_name}: decomposition")
    fig.tight_layout(rect=(0, 0, 1, 0.96))
    path = os.path.join(out_dir, f"{record_name}_decomposition.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path

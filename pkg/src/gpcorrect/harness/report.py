"""Result files: versioned CSV tables and the companion figures.

CSV schemas are versioned in a leading comment line; changing the column
set or order requires a bump. All floats are written with ``%.17g`` so a
fixed config and seed reproduce the files byte for byte. Wall-clock timing
lives in its own file (``timing.csv``), which is exempt from the
byte-reproducibility guarantee.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

POINTS_SCHEMA = "gpcorrect-points-v1"
TRIALS_SCHEMA = "gpcorrect-trials-v1"
SUMMARY_SCHEMA = "gpcorrect-summary-v1"
TIMING_SCHEMA = "gpcorrect-timing-v1"
GRADCHECK_SCHEMA = "gpcorrect-gradcheck-v1"


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def write_csv(path, schema, columns):
    """Write named columns with a schema comment header."""
    names = list(columns)
    rows = len(next(iter(columns.values()))) if columns else 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# schema: {schema}\n")
        fh.write(",".join(names) + "\n")
        for r in range(rows):
            fh.write(",".join(_fmt(columns[name][r]) for name in names) + "\n")
    return path


def write_points_csv(out_dir, result):
    return write_csv(os.path.join(out_dir, "points.csv"), POINTS_SCHEMA, result.points)


def write_trials_csv(out_dir, result):
    records = result.trials
    columns = {
        "trial": [r.trial for r in records],
        "norm_corrupted": [r.norm_corrupted for r in records],
        "norm_corrected": [r.norm_corrected for r in records],
        "norm_ideal": [r.norm_ideal for r in records],
        "improvement_pct": [r.improvement_pct for r in records],
        "degenerate": [r.degenerate for r in records],
    }
    return write_csv(os.path.join(out_dir, "trials.csv"), TRIALS_SCHEMA, columns)


def write_summary_csv(out_dir, result):
    s = result.summary
    columns = {
        "norm_corrupted": [s["norm_corrupted"]],
        "norm_corrected": [s["norm_corrected"]],
        "improvement_pct": [s["improvement_pct"]],
        "improved_trials": [s["improved_trials"]],
        "degenerate_trials": [s["degenerate_trials"]],
        "trials": [s["trials"]],
        "order": [s["order"]],
        "seed": [s["seed"]],
    }
    return write_csv(os.path.join(out_dir, "summary.csv"), SUMMARY_SCHEMA, columns)


def write_timing_csv(out_dir, timing):
    columns = {
        "method": ["full_retrain", "gradient_correction"],
        "median_seconds": [timing.retrain_median, timing.online_median],
        "mean_seconds": [timing.retrain_mean, timing.online_mean],
        "trials": [timing.trials, timing.trials],
        "offline_seconds": [0.0, timing.offline_seconds],
    }
    return write_csv(os.path.join(out_dir, "timing.csv"), TIMING_SCHEMA, columns)


def write_gradcheck_csv(out_dir, report):
    columns = {
        "kind": [r.kind for r in report.rows],
        "worst_normalized_error": [r.worst for r in report.rows],
        "rtol": [r.rtol for r in report.rows],
        "atol": [r.atol for r in report.rows],
        "passed": [r.passed for r in report.rows],
    }
    return write_csv(os.path.join(out_dir, "gradient_check.csv"), GRADCHECK_SCHEMA, columns)


def _band(ax, x, mean, std, label):
    ax.fill_between(x, mean - 2 * std, mean + 2 * std, alpha=0.25, label=label)


def render_1d_figures(out_dir, result):
    """Model and error figures for the first 1D trial."""
    pts = result.points
    extras = result.extras
    x = pts["X_test"]
    paths = []

    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(x, pts["y_true"], "b-", label="true function")
    ax.plot(x, pts["y_pred_corrupted"], "r-", label="corrupted mean")
    _band(ax, x, pts["y_pred_corrupted"], pts["std_corrupted"], r"$2\sigma$ region")
    ax.plot(extras["assumed_locations"][:, 0], extras["measurements"], "kx",
            label="assumed locations")
    ax.plot(extras["true_locations"][:, 0], extras["measurements"], "ko", mfc="none",
            label="true locations")
    ax.set_xlabel("x")
    ax.set_ylabel("field value")
    ax.grid(alpha=0.3)
    ax.legend(loc="upper right", fontsize=8)
    path = os.path.join(out_dir, "fig_model_corrupted.png")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    paths.append(path)

    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(x, pts["y_true"], "b-", label="true function")
    ax.plot(x, pts["y_pred_corrected"], "r-", label="corrected mean")
    _band(ax, x, pts["y_pred_corrected"], pts["std_corrected"], r"$2\sigma$ region")
    ax.set_xlabel("x")
    ax.set_ylabel("field value")
    ax.grid(alpha=0.3)
    ax.legend(loc="upper right", fontsize=8)
    path = os.path.join(out_dir, "fig_model_corrected.png")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    paths.append(path)

    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(x, pts["error_corrupted"], "r-", label="corrupted GP")
    ax.plot(x, pts["error_corrected"], "g-", label="corrected GP")
    ax.set_xlabel("x")
    ax.set_ylabel("absolute mean error")
    ax.grid(alpha=0.3)
    ax.legend(loc="upper right", fontsize=8)
    path = os.path.join(out_dir, "fig_error_comparison.png")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    paths.append(path)
    return paths


def render_2d_figures(out_dir, result):
    """Field heatmap with locations, plus per-test-point error trajectories."""
    pts = result.points
    extras = result.extras
    paths = []

    x_test = extras["x_test"]
    side = int(round(np.sqrt(x_test.shape[0])))
    fig, ax = plt.subplots(figsize=(6, 5))
    grid_x = x_test[:, 0].reshape(side, side)
    grid_y = x_test[:, 1].reshape(side, side)
    values = np.asarray(pts["y_true"]).reshape(side, side)
    mesh = ax.pcolormesh(grid_x, grid_y, values, shading="auto", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="field value")
    ax.plot(extras["true_locations"][:, 0], extras["true_locations"][:, 1], "ko",
            ms=4, label="true locations")
    ax.plot(extras["assumed_locations"][:, 0], extras["assumed_locations"][:, 1], "r.",
            ms=6, label="assumed locations")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.legend(loc="upper right", fontsize=8)
    path = os.path.join(out_dir, "fig_field_locations.png")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    paths.append(path)

    fig, ax = plt.subplots(figsize=(7, 4.5))
    idx = np.arange(len(pts["error_corrupted"]))
    ax.plot(idx, pts["error_corrupted"], "b-", label="corrupted GP")
    ax.plot(idx, pts["error_corrected"], color="orange", label="corrected GP")
    ax.set_xlabel("test point index")
    ax.set_ylabel("absolute mean error")
    ax.grid(alpha=0.3)
    ax.legend(loc="upper right", fontsize=8)
    path = os.path.join(out_dir, "fig_error_trajectories.png")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    paths.append(path)
    return paths


def write_experiment_outputs(out_dir, result, figures=True):
    """Write the CSV set and, by default, the figures for one experiment."""
    os.makedirs(out_dir, exist_ok=True)
    paths = [
        write_points_csv(out_dir, result),
        write_trials_csv(out_dir, result),
        write_summary_csv(out_dir, result),
    ]
    if figures:
        if result.config.dims == 1:
            paths += render_1d_figures(out_dir, result)
        elif result.config.dims == 2:
            paths += render_2d_figures(out_dir, result)
    return paths

"""Rendering of evaluation and correlation reports: text, JSON, CSV, figures.

The text table follows the comparison-table column order
(Model | RMSE | MAE | R^2), rows sorted worst-RMSE-first, three decimals.
Rendering is deterministic; figures are rendered to files with the Agg
backend alongside the delimited output.
"""

from __future__ import annotations

import csv
import io
import json

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .evaltune import CellResult, EvaluationReport, ModelResult

FAMILY_LABELS = {
    "linear": "Linear Regression",
    "svr": "SVR",
    "lstm": "LSTM",
    "rfr": "RFR",
}

_NAME_WIDTH = 17  # len("Linear Regression")


def family_label(family: str) -> str:
    return FAMILY_LABELS.get(family, family)


def render_report_text(report: EvaluationReport) -> str:
    """Aligned plain-text table; header only when the report is empty."""
    lines = [
        f"{'Model':<{_NAME_WIDTH}}  {'RMSE':>5}  {'MAE':>5}  {'R^2':>5}",
        f"{'-' * _NAME_WIDTH}  {'-' * 5}  {'-' * 5}  {'-' * 5}",
    ]
    for row in report.rows:
        lines.append(
            f"{family_label(row.family):<{_NAME_WIDTH}}  {row.rmse:>5.3f}  {row.mae:>5.3f}  {row.r2:>5.3f}"
        )
    return "\n".join(lines) + "\n"


def render_report_json(report: EvaluationReport) -> str:
    doc = {
        "rows": [
            {
                "family": r.family,
                "label": family_label(r.family),
                "rmse": r.rmse,
                "mae": r.mae,
                "r2": r.r2,
                "hyperparams": r.hyperparams,
                "defaults_taken": r.defaults_taken,
                "cv_score": r.cv_score,
                "rmse_vehicles": r.rmse_vehicles,
                "mae_vehicles": r.mae_vehicles,
            }
            for r in report.rows
        ],
        "dataset_fingerprint": report.dataset_fingerprint,
        "failures": report.failures,
        "evaluation_log": [list(entry) for entry in report.evaluation_log],
        "cv_cells": {
            family: [
                {
                    "params": c.params,
                    "fold_rmse": list(c.fold_rmse) if c.fold_rmse is not None else None,
                    "mean_rmse": c.mean_rmse,
                    "error": c.error,
                }
                for c in cells
            ]
            for family, cells in report.cv_cells.items()
        },
        "vehicle_scale": report.vehicle_scale,
        "seed": report.seed,
        "cv_k": report.cv_k,
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def report_from_json(text: str) -> EvaluationReport:
    doc = json.loads(text)
    rows = tuple(
        ModelResult(
            family=r["family"],
            rmse=r["rmse"],
            mae=r["mae"],
            r2=r["r2"],
            hyperparams=r["hyperparams"],
            defaults_taken=r["defaults_taken"],
            cv_score=r["cv_score"],
            rmse_vehicles=r["rmse_vehicles"],
            mae_vehicles=r["mae_vehicles"],
        )
        for r in doc["rows"]
    )
    cv_cells = {
        family: tuple(
            CellResult(
                params=c["params"],
                fold_rmse=tuple(c["fold_rmse"]) if c["fold_rmse"] is not None else None,
                mean_rmse=c["mean_rmse"],
                error=c["error"],
            )
            for c in cells
        )
        for family, cells in doc["cv_cells"].items()
    }
    return EvaluationReport(
        rows=rows,
        dataset_fingerprint=doc["dataset_fingerprint"],
        failures=doc["failures"],
        evaluation_log=tuple(tuple(entry) for entry in doc["evaluation_log"]),
        cv_cells=cv_cells,
        vehicle_scale=doc["vehicle_scale"],
        seed=doc["seed"],
        cv_k=doc["cv_k"],
    )


def render_cv_csv(report: EvaluationReport) -> str:
    """Per-cell CV results as CSV."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["family", "cell", "params", "fold_rmse", "mean_rmse", "error"])
    for family, cells in report.cv_cells.items():
        for i, c in enumerate(cells):
            writer.writerow(
                [
                    family,
                    i,
                    json.dumps(c.params, sort_keys=True),
                    ";".join(f"{v:.9f}" for v in c.fold_rmse) if c.fold_rmse else "",
                    "" if c.mean_rmse is None else f"{c.mean_rmse:.9f}",
                    c.error or "",
                ]
            )
    return out.getvalue()


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------


def save_comparison_figure(report: EvaluationReport, path) -> None:
    """Grouped bars of RMSE/MAE/R^2 per model."""
    labels = [family_label(r.family) for r in report.rows]
    metrics = {
        "RMSE": [r.rmse for r in report.rows],
        "MAE": [r.mae for r in report.rows],
        "R^2": [r.r2 for r in report.rows],
    }
    fig, ax = plt.subplots(figsize=(7, 4))
    x = range(len(labels))
    width = 0.27
    for k, (name, values) in enumerate(metrics.items()):
        ax.bar([xi + (k - 1) * width for xi in x], values, width, label=name)
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, rotation=15)
    ax.set_ylabel("score")
    ax.set_title("Model comparison on the held-out test block")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_correlation_figure(x, y, names: tuple[str, str], stats_text: str, path) -> None:
    """Scatter of the analyzed pair with the correlation summary."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.scatter(x, y, s=14, alpha=0.6, edgecolors="none")
    ax.set_xlabel(names[0])
    ax.set_ylabel(names[1])
    ax.set_title(stats_text)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_timeseries_figure(hours, x, y, names: tuple[str, str], path) -> None:
    """Two-axis hourly time series of the analyzed pair."""
    fig, ax1 = plt.subplots(figsize=(8, 4))
    ax1.plot(hours, x, color="tab:blue", label=names[0])
    ax1.set_ylabel(names[0], color="tab:blue")
    ax1.tick_params(axis="y", labelcolor="tab:blue")
    ax2 = ax1.twinx()
    ax2.plot(hours, y, color="tab:orange", label=names[1])
    ax2.set_ylabel(names[1], color="tab:orange")
    ax2.tick_params(axis="y", labelcolor="tab:orange")
    ax1.set_xlabel("hour bucket")
    fig.autofmt_xdate()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_training_curve_figure(history, path) -> None:
    """Per-epoch train/test MSE of an LSTM run."""
    epochs = [h["epoch"] for h in history]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [h["train_mse"] for h in history], label="train MSE")
    if history and "test_mse" in history[0]:
        ax.plot(epochs, [h["test_mse"] for h in history], label="test MSE")
    ax.set_xlabel("epoch")
    ax.set_ylabel("MSE")
    ax.set_title("LSTM training")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

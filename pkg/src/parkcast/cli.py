"""Pipeline orchestration: each stage reads the previous stage's artifact and
writes a fingerprinted one.

Exit codes: 0 ok, 2 usage, 3 validation (bad inputs, fingerprint drift,
missing files), 4 runtime (solver or search failure).
"""

from __future__ import annotations

import csv
import functools
import io
import json
import math
import sys
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import click
import numpy as np

from . import __version__
from .artifacts import read_verified_text, write_artifact
from .errors import (
    CampusValidationError,
    FingerprintMismatchError,
    GenerationError,
    GeoJsonParseError,
    ParkcastError,
    SchemaError,
)
from .evaltune import (
    DEFAULT_SPACES,
    SearchSpace,
    TrainData,
    compare_models,
    fit_family,
    grid_search,
    random_search,
    train_test_split,
)
from .features import (
    Dataset,
    aggregate_hourly,
    clean,
    correlation_report,
    encode_and_scale,
    pearson,
    rows_from_csv,
    rows_to_csv,
)
from .geodata import load_campus
from .models import model_to_dict
from .report import (
    render_cv_csv,
    render_report_json,
    render_report_text,
    save_comparison_figure,
    save_correlation_figure,
    save_timeseries_figure,
    save_training_curve_figure,
)
from .spatial import (
    joined_from_csv,
    joined_to_csv,
    read_observations_csv,
    spatial_join,
    write_observations_csv,
)
from .synth import generate_traces, spec_from_dict, truth_to_csv

VALIDATION_ERRORS = (
    CampusValidationError,
    SchemaError,
    GeoJsonParseError,
    FingerprintMismatchError,
    GenerationError,
    FileNotFoundError,
    ValueError,
)


def stage(fn):
    """Map exceptions onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except VALIDATION_ERRORS as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(3)
        except ParkcastError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(4)

    return wrapper


def bundled(name: str) -> str:
    return resources.files("parkcast.data").joinpath(name).read_text(encoding="utf-8")


def _load_campus_file(path: str | None):
    if path is None:
        return load_campus(bundled("campus.geojson"))
    return load_campus(Path(path).read_text(encoding="utf-8"))


def _echo(ctx, payload: dict, text: str) -> None:
    if ctx.obj.get("format") == "json":
        click.echo(json.dumps(payload, indent=2, sort_keys=True, default=str))
    else:
        click.echo(text)


@click.group()
@click.version_option(version=__version__, prog_name="parkcast")
@click.option(
    "--format",
    "output_format",
    type=click.Choice(["text", "json"]),
    default="text",
    show_default=True,
    help="Stdout rendering for stage summaries.",
)
@click.pass_context
def main(ctx, output_format):
    """Sensor-free parking availability forecasting pipeline."""
    ctx.ensure_object(dict)
    ctx.obj["format"] = output_format


@main.command()
@click.option("--campus", "campus_path", type=click.Path(), default=None, help="Campus GeoJSON (default: bundled demo campus).")
@click.option("--config", "config_path", type=click.Path(), default=None, help="Generator spec JSON (default: bundled).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.pass_context
@stage
def synth(ctx, campus_path, config_path, seed, out_dir):
    """Generate synthetic vehicle traces plus exact occupancy ground truth."""
    campus = _load_campus_file(campus_path)
    spec_doc = json.loads(
        Path(config_path).read_text(encoding="utf-8") if config_path else bundled("synth_spec.json")
    )
    spec = spec_from_dict(spec_doc)
    observations, truth = generate_traces(spec, campus, seed=seed)
    out = Path(out_dir)
    inputs = {}
    if campus_path:
        inputs["campus"] = campus_path
    if config_path:
        inputs["config"] = config_path
    write_artifact(
        out / "observations.csv",
        write_observations_csv(observations),
        inputs=inputs,
        config=spec_doc,
        seed=seed,
    )
    write_artifact(
        out / "ground_truth.csv", truth_to_csv(truth), inputs=inputs, config=spec_doc, seed=seed
    )
    _echo(
        ctx,
        {"observations": len(observations), "truth_rows": len(truth), "out": str(out)},
        f"wrote {len(observations)} observations and {len(truth)} ground-truth rows to {out}",
    )


@main.command()
@click.option("--observations", "obs_path", type=click.Path(), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.pass_context
@stage
def ingest(ctx, obs_path, out_dir):
    """Validate and normalize a raw observations CSV."""
    observations = read_observations_csv(Path(obs_path).read_text(encoding="utf-8"))
    out = Path(out_dir)
    write_artifact(
        out / "observations.csv",
        write_observations_csv(observations),
        inputs={"source": obs_path},
        config={"stage": "ingest"},
    )
    _echo(
        ctx,
        {"observations": len(observations), "out": str(out)},
        f"ingested {len(observations)} observations to {out}",
    )


@main.command()
@click.option("--campus", "campus_path", type=click.Path(), default=None)
@click.option("--observations", "obs_path", type=click.Path(), required=True)
@click.option("--threshold", type=float, default=30.0, show_default=True, help="Snap threshold in meters.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.pass_context
@stage
def join(ctx, campus_path, obs_path, threshold, out_dir):
    """Spatial-join observations onto gate-to-gate road segments."""
    if campus_path is not None and not Path(campus_path).exists():
        raise FileNotFoundError(f"campus file not found: {campus_path}")
    campus = _load_campus_file(campus_path)
    observations = read_observations_csv(read_verified_text(obs_path))
    joined = spatial_join(observations, campus, threshold_m=threshold)
    snapped = sum(1 for j in joined if j.segment_id is not None)
    out = Path(out_dir)
    inputs = {"observations": obs_path}
    if campus_path:
        inputs["campus"] = campus_path
    write_artifact(
        out / "joined.csv",
        joined_to_csv(joined),
        inputs=inputs,
        config={"threshold_m": threshold},
    )
    _echo(
        ctx,
        {"joined": len(joined), "snapped": snapped, "out": str(out)},
        f"joined {len(joined)} observations ({snapped} snapped) to {out}",
    )


@main.command("build-dataset")
@click.option("--campus", "campus_path", type=click.Path(), default=None)
@click.option("--joined", "joined_path", type=click.Path(), required=True)
@click.option("--window-start", required=True, help="First hour bucket, ISO 8601.")
@click.option("--window-end", required=True, help="Last hour bucket, ISO 8601.")
@click.option("--split-mode", type=click.Choice(["chronological", "seeded-random"]), default="chronological", show_default=True)
@click.option("--split-ratio", type=float, default=0.7, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.pass_context
@stage
def build_dataset(ctx, campus_path, joined_path, window_start, window_end, split_mode, split_ratio, seed, out_dir):
    """Aggregate hourly features, clean, split and encode the dataset."""
    campus = _load_campus_file(campus_path)
    joined = joined_from_csv(read_verified_text(joined_path))
    window = (
        datetime.fromisoformat(window_start.replace("Z", "+00:00")),
        datetime.fromisoformat(window_end.replace("Z", "+00:00")),
    )
    window = tuple(w.replace(tzinfo=timezone.utc) if w.tzinfo is None else w for w in window)
    rows = aggregate_hourly(joined, campus, window)
    kept, report = clean(rows)
    plan = train_test_split(len(kept), ratio=split_ratio, mode=split_mode, seed=seed)
    train_rows = [kept[i] for i in plan.train_idx]
    test_rows = [kept[i] for i in plan.test_idx]
    config = {
        "window": [w.isoformat() for w in window],
        "split_mode": split_mode,
        "split_ratio": split_ratio,
    }
    dataset = encode_and_scale(
        train_rows,
        test_rows,
        n_segments=len(campus.gates),
        provenance={
            "joined": str(joined_path),
            "window": [w.isoformat() for w in window],
            "split": {
                "mode": split_mode,
                "ratio": split_ratio,
                "seed": seed,
                "train_idx": list(plan.train_idx),
                "test_idx": list(plan.test_idx),
            },
            "clean_report": {
                "dropped_duplicates": report.dropped_duplicates,
                "dropped_missing_target": report.dropped_missing_target,
                "dropped_out_of_range": report.dropped_out_of_range,
            },
        },
    )
    out = Path(out_dir)
    write_artifact(
        out / "dataset.csv",
        rows_to_csv(kept),
        inputs={"joined": joined_path},
        config=config,
        seed=seed,
    )
    write_artifact(
        out / "sidecar.json",
        json.dumps(dataset.sidecar(), indent=2, sort_keys=True) + "\n",
        inputs={"joined": joined_path},
        config=config,
        seed=seed,
    )
    _echo(
        ctx,
        {
            "rows": len(kept),
            "dropped": report.total_dropped,
            "train": len(train_rows),
            "test": len(test_rows),
            "layout_hash": dataset.layout_hash,
            "out": str(out),
        },
        f"dataset: {len(kept)} rows ({report.total_dropped} dropped), "
        f"{len(train_rows)}/{len(test_rows)} train/test, layout {dataset.layout_hash[:12]} -> {out}",
    )


def load_dataset(dataset_path: str | Path) -> Dataset:
    """Rebuild the encoded Dataset from dataset.csv + sidecar.json.

    The recomputed feature layout must match the sidecar's recorded hash
    (stage fingerprint chain).
    """
    dataset_path = Path(dataset_path)
    rows = rows_from_csv(read_verified_text(dataset_path))
    sidecar_path = dataset_path.with_name("sidecar.json")
    sidecar = json.loads(read_verified_text(sidecar_path))
    split = sidecar["provenance"]["split"]
    train_rows = [rows[i] for i in split["train_idx"]]
    test_rows = [rows[i] for i in split["test_idx"]]
    dataset = encode_and_scale(
        train_rows,
        test_rows,
        n_segments=len(sidecar["one_hot"]["categories"]),
        provenance=sidecar["provenance"],
    )
    if dataset.layout_hash != sidecar["layout_hash"]:
        raise FingerprintMismatchError(
            "dataset layout", expected=sidecar["layout_hash"], actual=dataset.layout_hash
        )
    return dataset


_ANALYZE_COLUMNS = {
    "distance": lambda r: r.distance_m,
    "travel_speed": lambda r: r.travel_speed_kmh,
    "n_vehicles": lambda r: float(r.n_vehicles),
    "n_vehicles_exit": lambda r: float(r.n_vehicles_exit),
    "segment_no": lambda r: float(r.segment_no),
    "total_parking_space": lambda r: float(r.total_parking_space),
    "availability": lambda r: r.availability if r.availability is not None else float("nan"),
    "hour_of_day": lambda r: float(r.timestamp.hour),
}


@main.command()
@click.option("--dataset", "dataset_path", type=click.Path(), required=True)
@click.option("--x", "x_name", default="n_vehicles_exit", show_default=True)
@click.option("--y", "y_name", default="availability", show_default=True)
@click.option("--figures/--no-figures", default=True, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.pass_context
@stage
def analyze(ctx, dataset_path, x_name, y_name, figures, out_dir):
    """Correlation analysis of one attribute pair (plus supporting tables)."""
    rows = rows_from_csv(read_verified_text(dataset_path))
    for name in (x_name, y_name):
        if name not in _ANALYZE_COLUMNS:
            raise SchemaError(f"unknown attribute {name!r}; choose from {sorted(_ANALYZE_COLUMNS)}")
    x = [_ANALYZE_COLUMNS[x_name](r) for r in rows]
    y = [_ANALYZE_COLUMNS[y_name](r) for r in rows]
    rep = correlation_report(x, y, names=(x_name, y_name))
    out = Path(out_dir)
    config = {"x": x_name, "y": y_name}

    write_artifact(
        out / "correlation.json",
        json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n",
        inputs={"dataset": dataset_path},
        config=config,
    )

    # all-pairs coefficient matrix
    matrix = io.StringIO()
    writer = csv.writer(matrix, lineterminator="\n")
    names = sorted(_ANALYZE_COLUMNS)
    writer.writerow(["attribute"] + names)
    for a in names:
        line = [a]
        for b in names:
            try:
                r_ab = pearson(
                    [_ANALYZE_COLUMNS[a](r) for r in rows],
                    [_ANALYZE_COLUMNS[b](r) for r in rows],
                )
                line.append(f"{r_ab:.6f}" if math.isfinite(r_ab) else "")
            except ParkcastError:
                line.append("")
        writer.writerow(line)
    write_artifact(
        out / "pearson_matrix.csv", matrix.getvalue(), inputs={"dataset": dataset_path}, config=config
    )

    # hourly time series of the analyzed pair
    series = io.StringIO()
    writer = csv.writer(series, lineterminator="\n")
    writer.writerow(["timestamp", x_name, y_name])
    stamps = []
    xs_h, ys_h = [], []
    for r, xv, yv in zip(rows, x, y):
        stamps.append(r.timestamp.isoformat())
        xs_h.append(xv)
        ys_h.append(yv)
        writer.writerow([r.timestamp.isoformat(), f"{xv:.6f}", f"{yv:.6f}"])
    write_artifact(
        out / "timeseries.csv", series.getvalue(), inputs={"dataset": dataset_path}, config=config
    )

    # per-attribute value frequencies
    freq = io.StringIO()
    writer = csv.writer(freq, lineterminator="\n")
    writer.writerow(["attribute", "bin_left", "bin_right", "count"])
    for a in names:
        values = np.asarray([_ANALYZE_COLUMNS[a](r) for r in rows], dtype=np.float64)
        counts, edges = np.histogram(values[np.isfinite(values)], bins=10)
        for c, lo, hi in zip(counts, edges, edges[1:]):
            writer.writerow([a, f"{lo:.6f}", f"{hi:.6f}", int(c)])
    write_artifact(
        out / "feature_frequency.csv", freq.getvalue(), inputs={"dataset": dataset_path}, config=config
    )

    if figures:
        stats_text = f"r={rep.r:.3f}, rho={rep.rho:.3f}, p={rep.p_value:.3g}, n={rep.n}"
        save_correlation_figure(x, y, (x_name, y_name), stats_text, out / "correlation.png")
        save_timeseries_figure(stamps, xs_h, ys_h, (x_name, y_name), out / "timeseries.png")

    _echo(
        ctx,
        rep.to_dict() | {"out": str(out)},
        f"{x_name} vs {y_name}: r={rep.r:.4f}, rho={rep.rho:.4f}, p={rep.p_value:.3g} (n={rep.n}) -> {out}",
    )


@main.command()
@click.option("--dataset", "dataset_path", type=click.Path(), required=True)
@click.option("--family", type=click.Choice(["linear", "svr", "rfr", "lstm"]), required=True)
@click.option("--params", "params_json", default="{}", show_default=True, help="Hyperparameters as JSON.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.pass_context
@stage
def train(ctx, dataset_path, family, params_json, seed, out_dir):
    """Fit one model family on the training block."""
    dataset = load_dataset(dataset_path)
    params = json.loads(params_json)
    model = fit_family(
        family,
        dataset.train_X,
        dataset.train_y,
        params,
        groups=dataset.train_groups(),
        seed=seed,
        feature_names=dataset.feature_names,
        layout_hash=dataset.layout_hash,
    )
    out = Path(out_dir)
    write_artifact(
        out / "model.json",
        json.dumps(model_to_dict(model), indent=2, sort_keys=True) + "\n",
        inputs={"dataset": dataset_path},
        config={"family": family, "params": params},
        seed=seed,
    )
    if family == "lstm" and model.params.history:
        save_training_curve_figure(model.params.history, out / "training_curve.png")
    _echo(
        ctx,
        {"family": family, "fingerprint": model.train_fingerprint, "out": str(out)},
        f"trained {family}, fingerprint {model.train_fingerprint[:12]} -> {out}",
    )


@main.command()
@click.option("--dataset", "dataset_path", type=click.Path(), required=True)
@click.option("--family", type=click.Choice(["linear", "svr", "rfr", "lstm"]), required=True)
@click.option("--method", type=click.Choice(["grid", "random"]), default="grid", show_default=True)
@click.option("--space", "space_json", default=None, help="Override search space as JSON.")
@click.option("--budget", type=int, default=10, show_default=True, help="Random-search samples.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.pass_context
@stage
def tune(ctx, dataset_path, family, method, space_json, budget, seed, out_dir):
    """Hyperparameter search with 3-fold cross-validation."""
    dataset = load_dataset(dataset_path)
    data = TrainData(dataset.train_X, dataset.train_y, dataset.train_groups())
    if method == "grid":
        spaces = (
            [SearchSpace(grid=json.loads(space_json))]
            if space_json
            else DEFAULT_SPACES[family]
        )
        results = [grid_search(family, space, data, seed=seed) for space in spaces]
        best = min(results, key=lambda r: r.best_score)
        cells = [c for r in results for c in r.cells]
    else:
        ranges = json.loads(space_json) if space_json else None
        if ranges is None:
            ranges = {k: v for k, v in DEFAULT_SPACES[family][0].grid.items()}
        best = random_search(family, SearchSpace(ranges=ranges), budget, seed, data)
        cells = list(best.cells)

    out = Path(out_dir)
    doc = {
        "family": family,
        "method": method,
        "best_params": best.best_params,
        "best_cv_rmse": best.best_score,
        "cells_evaluated": len(cells),
    }
    write_artifact(
        out / "search.json",
        json.dumps(doc, indent=2, sort_keys=True) + "\n",
        inputs={"dataset": dataset_path},
        config={"method": method, "budget": budget},
        seed=seed,
    )
    table = io.StringIO()
    writer = csv.writer(table, lineterminator="\n")
    writer.writerow(["cell", "params", "fold_rmse", "mean_rmse", "error"])
    for i, c in enumerate(cells):
        writer.writerow(
            [
                i,
                json.dumps(c.params, sort_keys=True),
                ";".join(f"{v:.9f}" for v in c.fold_rmse) if c.fold_rmse else "",
                "" if c.mean_rmse is None else f"{c.mean_rmse:.9f}",
                c.error or "",
            ]
        )
    write_artifact(
        out / "cv_cells.csv",
        table.getvalue(),
        inputs={"dataset": dataset_path},
        config={"method": method, "budget": budget},
        seed=seed,
    )
    _echo(
        ctx,
        doc | {"out": str(out)},
        f"best {family} ({method}): {json.dumps(best.best_params, sort_keys=True)} "
        f"cv-rmse {best.best_score:.4f} -> {out}",
    )


@main.command()
@click.option("--dataset", "dataset_path", type=click.Path(), required=True)
@click.option(
    "--families",
    default="linear,svr,rfr,lstm",
    show_default=True,
    help="Comma-separated families to compare.",
)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--vehicle-scale", type=float, default=None, help="Vehicles per availability unit for denormalized errors.")
@click.option("--figures/--no-figures", default=True, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.pass_context
@stage
def evaluate(ctx, dataset_path, families, seed, vehicle_scale, figures, out_dir):
    """Tune every family, evaluate once on the test block, emit the table."""
    dataset = load_dataset(dataset_path)
    family_list = tuple(f.strip() for f in families.split(",") if f.strip())
    report = compare_models(dataset, families=family_list, seed=seed, vehicle_scale=vehicle_scale)
    out = Path(out_dir)
    text = render_report_text(report)
    write_artifact(out / "report.txt", text, inputs={"dataset": dataset_path}, seed=seed)
    write_artifact(
        out / "report.json", render_report_json(report), inputs={"dataset": dataset_path}, seed=seed
    )
    write_artifact(
        out / "cv_cells.csv", render_cv_csv(report), inputs={"dataset": dataset_path}, seed=seed
    )
    if figures and report.rows:
        save_comparison_figure(report, out / "comparison.png")
    if report.failures:
        for family, reason in report.failures.items():
            click.echo(f"warning: {family} failed: {reason}", err=True)
    _echo(ctx, json.loads(render_report_json(report)), text.rstrip("\n"))


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--host", default=None, help="Override the configured host.")
@click.option("--port", type=int, default=None, help="Override the configured port.")
@stage
def serve(config_path, host, port):
    """Run the availability prediction service."""
    import uvicorn

    from .service import create_app, load_service_config

    config = load_service_config(config_path)
    if host or port:
        from dataclasses import replace

        config = replace(config, host=host or config.host, port=port or config.port)
    uvicorn.run(create_app(config), host=config.host, port=config.port)


def entrypoint():
    """Console-script entry; environment overrides use the PARKCAST_ prefix."""
    main(auto_envvar_prefix="PARKCAST")


if __name__ == "__main__":
    entrypoint()

"""Report rendering: golden text table, JSON round trip, CSV export, figures."""

import json
from pathlib import Path

from parkcast.evaltune import CellResult, EvaluationReport, ModelResult
from parkcast.report import (
    render_cv_csv,
    render_report_json,
    render_report_text,
    report_from_json,
    save_comparison_figure,
    save_training_curve_figure,
)

GOLDEN = Path(__file__).parent / "golden" / "table1.txt"

PUBLISHED_ROWS = [
    ("linear", 0.208, 0.178, 0.051),
    ("svr", 0.173, 0.135, 0.353),
    ("lstm", 0.149, 0.139, 0.457),
    ("rfr", 0.142, 0.112, 0.582),
]


def published_report() -> EvaluationReport:
    rows = tuple(
        ModelResult(family=f, rmse=r, mae=m, r2=q, hyperparams={}, defaults_taken={})
        for f, r, m, q in PUBLISHED_ROWS
    )
    return EvaluationReport(rows=rows, dataset_fingerprint="paper")


class TestTextTable:
    def test_published_values_match_golden_byte_for_byte(self):
        rendered = render_report_text(published_report())
        assert rendered.encode("utf-8") == GOLDEN.read_bytes()

    def test_rfr_listed_last_with_its_rmse(self):
        lines = render_report_text(published_report()).splitlines()
        assert lines[-1].startswith("RFR")
        assert "0.142" in lines[-1]
        assert lines[2].startswith("Linear Regression")

    def test_empty_report_is_header_only(self):
        text = render_report_text(EvaluationReport(rows=(), dataset_fingerprint="x"))
        lines = text.splitlines()
        assert len(lines) == 2
        assert lines[0].split() == ["Model", "RMSE", "MAE", "R^2"]

    def test_rendering_is_deterministic(self):
        assert render_report_text(published_report()) == render_report_text(published_report())


class TestJsonRoundTrip:
    def test_parse_render_identity(self):
        report = EvaluationReport(
            rows=(
                ModelResult(
                    family="rfr",
                    rmse=0.142,
                    mae=0.112,
                    r2=0.582,
                    hyperparams={"n_trees": 100, "max_depth": None},
                    defaults_taken={"n_trees": 100},
                    cv_score=0.15,
                    rmse_vehicles=13.419,
                    mae_vehicles=10.584,
                ),
            ),
            dataset_fingerprint="abc123",
            failures={"svr": "did not converge"},
            evaluation_log=(("rfr", "fingerprint1"),),
            cv_cells={
                "rfr": (
                    CellResult(
                        params={"max_depth": 4}, fold_rmse=(0.1, 0.2, 0.15), mean_rmse=0.15
                    ),
                    CellResult(params={"max_depth": -1}, fold_rmse=None, mean_rmse=None, error="bad"),
                )
            },
            vehicle_scale=94.5,
            seed=7,
            cv_k=3,
        )
        round_tripped = report_from_json(render_report_json(report))
        assert round_tripped == report

    def test_json_is_sorted_and_stable(self):
        text = render_report_json(published_report())
        assert text == render_report_json(published_report())
        doc = json.loads(text)
        assert [r["label"] for r in doc["rows"]] == [
            "Linear Regression",
            "SVR",
            "LSTM",
            "RFR",
        ]


class TestCvCsv:
    def test_cells_exported(self):
        report = EvaluationReport(
            rows=(),
            dataset_fingerprint="x",
            cv_cells={
                "linear": (
                    CellResult(params={"lam": 0.1}, fold_rmse=(0.3, 0.2, 0.25), mean_rmse=0.25),
                )
            },
        )
        text = render_cv_csv(report)
        lines = text.splitlines()
        assert lines[0] == "family,cell,params,fold_rmse,mean_rmse,error"
        assert lines[1].startswith("linear,0,")


class TestFigures:
    def test_comparison_figure_written(self, tmp_path):
        path = tmp_path / "cmp.png"
        save_comparison_figure(published_report(), path)
        assert path.stat().st_size > 1000

    def test_training_curve_written(self, tmp_path):
        history = [
            {"epoch": e, "train_mse": 1.0 / e, "test_mse": 1.2 / e} for e in range(1, 51)
        ]
        path = tmp_path / "curve.png"
        save_training_curve_figure(history, path)
        assert path.stat().st_size > 1000

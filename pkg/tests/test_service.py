"""Availability service: endpoints, snapshot discipline, fingerprint gates."""

import json
from datetime import datetime, timezone

import numpy as np
import pytest
from fastapi.testclient import TestClient

from parkcast.errors import FingerprintMismatchError
from parkcast.evaltune import train_test_split
from parkcast.features import clean, encode_and_scale, encode_row, aggregate_hourly
from parkcast.models import predict, save_model
from parkcast.service import (
    ServiceConfig,
    ServiceState,
    build_request_row,
    create_app,
    load_service_config,
    occupancy_state,
)
from parkcast.spatial import point_at_offset, spatial_join
from parkcast.synth import default_synth_spec, generate_traces, spec_from_dict

UTC = timezone.utc


@pytest.fixture(scope="module")
def service_dir(tmp_path_factory, campus, campus_doc, segments):
    """Frozen fixture service artifacts: campus + dataset sidecar + rfr model."""
    from parkcast.evaltune import fit_family

    root = tmp_path_factory.mktemp("service")
    campus_path = root / "campus.geojson"
    campus_path.write_text(json.dumps(campus_doc))

    spec = spec_from_dict(default_synth_spec())
    obs, _ = generate_traces(spec, campus, seed=5)
    joined = spatial_join(obs, campus, threshold_m=30.0, segments=segments)
    rows, _ = clean(aggregate_hourly(joined, campus, spec.window(), segments=segments))
    plan = train_test_split(len(rows))
    dataset = encode_and_scale(
        [rows[i] for i in plan.train_idx],
        [rows[i] for i in plan.test_idx],
        n_segments=len(campus.gates),
    )
    sidecar_path = root / "sidecar.json"
    sidecar_path.write_text(json.dumps(dataset.sidecar(), indent=2, sort_keys=True))

    model = fit_family(
        "rfr",
        dataset.train_X,
        dataset.train_y,
        {"n_trees": 25},
        seed=0,
        feature_names=dataset.feature_names,
        layout_hash=dataset.layout_hash,
    )
    model_path = root / "model.json"
    save_model(model, model_path)
    return root


@pytest.fixture()
def config(service_dir):
    return ServiceConfig(
        model_path=str(service_dir / "model.json"),
        sidecar_path=str(service_dir / "sidecar.json"),
        campus_path=str(service_dir / "campus.geojson"),
    )


@pytest.fixture()
def client(config):
    return TestClient(create_app(config))


def obs_row(segments, key, segment_id, offset, minute=0, hour=9):
    seg = next(s for s in segments if s.id == segment_id)
    p = point_at_offset(seg.polyline, offset)
    return {
        "vehicle_key": key,
        "lon": f"{p.lon!r}",
        "lat": f"{p.lat!r}",
        "timestamp_iso8601": f"2022-09-05T{hour:02d}:{minute:02d}:00Z",
        "speed_kmh": "22.5",
    }


class TestOccupancyState:
    def test_reference_points(self):
        assert occupancy_state(0.0) == "low"
        assert occupancy_state(0.49999) == "low"
        assert occupancy_state(0.5) == "moderate"
        assert occupancy_state(0.85) == "moderate"
        assert occupancy_state(0.9) == "high"
        assert occupancy_state(1.0) == "high"

    def test_configurable_thresholds(self):
        assert occupancy_state(0.4, low=0.3, high=0.6) == "moderate"

    def test_domain(self):
        with pytest.raises(ValueError):
            occupancy_state(1.5)


class TestEndpoints:
    def test_health_carries_fingerprint(self, client):
        body = client.get("/health").json()
        assert body["status"] == "ok"
        assert len(body["model_fingerprint"]) == 64
        assert body["horizon"] == {"start_hour": 7, "end_hour": 15}

    def test_sections_sum_to_945(self, client):
        body = client.get("/sections").json()
        assert body["total_capacity"] == 945
        assert len(body["sections"]) == 3
        assert sum(s["capacity"] for s in body["sections"]) == 945
        assert all(len(s["polygon"]) >= 4 for s in body["sections"])

    def test_unknown_gate_is_422_naming_valid_gates(self, client):
        resp = client.post(
            "/predict",
            json={"gate_id": 9, "arrival_time": "2022-09-05T09:00:00Z"},
        )
        assert resp.status_code == 422
        assert "[1, 2, 3, 4, 5]" in resp.json()["detail"]

    def test_arrival_outside_horizon_is_422(self, client):
        resp = client.post(
            "/predict",
            json={"gate_id": 1, "arrival_time": "2022-09-05T02:00:00Z"},
        )
        assert resp.status_code == 422
        assert "horizon" in resp.json()["detail"]

    def test_predict_round_trips_offline_model(self, client, config):
        # online response equals offline predict() on the same feature row
        resp = client.post(
            "/predict", json={"gate_id": 3, "arrival_time": "2022-09-05T10:00:00Z"}
        )
        assert resp.status_code == 200
        body = resp.json()

        from parkcast.geodata import load_campus
        from parkcast.models import load_model

        campus2 = load_campus(open(config.campus_path, "rb").read())
        model2 = load_model(config.model_path)
        sidecar2 = json.loads(open(config.sidecar_path).read())
        state2 = ServiceState(campus2, model2, sidecar2, config)
        row = build_request_row(
            state2, 3, datetime(2022, 9, 5, 10, tzinfo=UTC), body["recommended_section_id"], None
        )
        vec = encode_row(row, sidecar2).reshape(1, -1)
        offline = float(np.clip(predict(model2, vec)[0], 0.0, 1.0))
        assert body["predicted_availability"] == pytest.approx(offline, abs=1e-12)
        assert body["predicted_vacant"] == int(round(offline * 315))
        assert body["occupancy_state"] in ("low", "moderate", "high")

    def test_identical_requests_between_ingests_identical(self, client):
        req = {"gate_id": 1, "arrival_time": "2022-09-05T11:00:00Z"}
        assert client.post("/predict", json=req).json() == client.post("/predict", json=req).json()

    def test_recommends_among_gate_sections_with_tie_to_lowest(self, client, config, campus):
        # gate 1 maps only to section 1 in the fixture; recommendation must honor the mapping
        body = client.post(
            "/predict", json={"gate_id": 1, "arrival_time": "2022-09-05T09:00:00Z"}
        ).json()
        assert body["recommended_section_id"] in campus.gate_sections[1]
        # with a single candidate the argmax-tie rule trivially gives that id
        assert [c["section_id"] for c in body["candidates"]] == sorted(campus.gate_sections[1])

    def test_tie_breaks_to_lowest_section_id(self, config, service_dir, campus_doc):
        # remap gate 1 to serve all three equal-capacity sections; identical
        # predicted vacancies then tie and the lowest id must win
        doc = json.loads(json.dumps(campus_doc))
        for feature in doc["features"]:
            if feature["properties"].get("kind") == "gate" and feature["properties"]["gate_id"] == 1:
                del feature["properties"]["section_id"]
                feature["properties"]["section_ids"] = [3, 2, 1]
        campus_path = service_dir / "campus_multi.geojson"
        campus_path.write_text(json.dumps(doc))
        from dataclasses import replace

        cfg = replace(config, campus_path=str(campus_path))
        client = TestClient(create_app(cfg))
        body = client.post(
            "/predict", json={"gate_id": 1, "arrival_time": "2022-09-05T09:00:00Z"}
        ).json()
        vacancies = [c["predicted_vacant"] for c in body["candidates"]]
        best = max(vacancies)
        lowest_best = min(
            c["section_id"] for c in body["candidates"] if c["predicted_vacant"] == best
        )
        assert body["recommended_section_id"] == lowest_best


class TestIngest:
    def test_inbound_batch_raises_occupancy(self, client, segments):
        before = client.get("/occupancy").json()
        s1_before = next(s for s in before["sections"] if s["section_id"] == 1)
        batch = [
            obs_row(segments, "carA", 1, 100.0, minute=1),
            obs_row(segments, "carA", 1, 180.0, minute=5),
            obs_row(segments, "carB", 1, 220.0, minute=7),
            obs_row(segments, "carC", 2, 150.0, minute=9),
        ]
        resp = client.post("/observations", json=batch)
        assert resp.status_code == 200
        body = resp.json()
        assert body["applied"] == 4
        after = body["snapshot"]
        s1_after = next(s for s in after["sections"] if s["section_id"] == 1)
        # segments 1 and 2 both feed section 1: three inbound vehicles
        assert s1_after["occupied"] == s1_before["occupied"] + 3

    def test_outflux_clamps_at_zero_with_warning(self, client, segments):
        batch = [
            obs_row(segments, "leaver", 4, 500.0, minute=0),
            obs_row(segments, "leaver", 4, 380.0, minute=3),
        ]
        resp = client.post("/observations", json=batch)
        assert resp.status_code == 200
        body = resp.json()
        assert any("clamped at 0" in w for w in body["warnings"])
        section = next(s for s in body["snapshot"]["sections"] if s["section_id"] == 3)
        assert section["occupied"] == 0

    def test_malformed_rows_reject_whole_batch(self, client, segments):
        good = obs_row(segments, "ok", 1, 100.0)
        bad = {**obs_row(segments, "bad", 1, 120.0, minute=2), "lat": "95.0"}
        before = client.get("/occupancy").json()
        resp = client.post("/observations", json=[good, bad])
        assert resp.status_code == 422
        detail = resp.json()["detail"]
        assert detail["rejected"][0]["index"] == 1
        after = client.get("/occupancy").json()
        assert [s["occupied"] for s in after["sections"]] == [
            s["occupied"] for s in before["sections"]
        ]  # nothing applied

    def test_unordered_batch_rejected(self, client, segments):
        batch = [
            obs_row(segments, "x", 1, 100.0, minute=30),
            obs_row(segments, "x", 1, 150.0, minute=10),
        ]
        assert client.post("/observations", json=batch).status_code == 422

    def test_empty_batch_advances_timestamp_only(self, client):
        before = client.get("/occupancy").json()
        resp = client.post("/observations", json=[])
        assert resp.status_code == 200
        after = resp.json()["snapshot"]
        assert after["timestamp"] > before["timestamp"]
        assert [s["occupied"] for s in after["sections"]] == [
            s["occupied"] for s in before["sections"]
        ]

    def test_capacity_conservation_invariant(self, client, segments):
        batch = [obs_row(segments, f"v{i}", 3, 100.0 + i, minute=i % 50) for i in range(10)]
        client.post("/observations", json=batch)
        snap = client.get("/occupancy").json()
        total = sum(
            (s["capacity"] - s["occupied"]) + s["occupied"] for s in snap["sections"]
        )
        assert total == 945


class TestStartupGates:
    def test_layout_mismatch_refused_with_both_fingerprints(self, config, service_dir):
        sidecar = json.loads((service_dir / "sidecar.json").read_text())
        sidecar["layout_hash"] = "0" * 64
        tampered = service_dir / "sidecar_tampered.json"
        tampered.write_text(json.dumps(sidecar))
        from dataclasses import replace

        bad = replace(config, sidecar_path=str(tampered))
        with pytest.raises(FingerprintMismatchError) as err:
            create_app(bad)
        assert err.value.expected == "0" * 64
        assert err.value.actual != err.value.expected

    def test_config_file_and_env_overrides(self, config, tmp_path):
        doc = {
            "model_path": config.model_path,
            "sidecar_path": config.sidecar_path,
            "campus_path": config.campus_path,
            "port": 9000,
            "low_threshold": 0.4,
        }
        path = tmp_path / "service.json"
        path.write_text(json.dumps(doc))
        loaded = load_service_config(path, env={})
        assert loaded.port == 9000
        assert loaded.low_threshold == 0.4
        overridden = load_service_config(
            path, env={"PARKCAST_PORT": "9999", "PARKCAST_HIGH_THRESHOLD": "0.9"}
        )
        assert overridden.port == 9999
        assert overridden.high_threshold == 0.9

    def test_cors_configured(self, config):
        app = create_app(config)
        client = TestClient(app)
        resp = client.get("/health", headers={"Origin": "http://localhost:5173"})
        assert resp.headers.get("access-control-allow-origin") == "*"

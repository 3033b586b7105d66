"""Availability prediction service: JSON over HTTP.

Many concurrent readers, one writer: GET handlers read an immutable published
snapshot; POST /observations builds a fresh snapshot and swaps it in under a
lock (copy-then-swap), so readers never observe a torn update. The model
artifact is immutable for the process lifetime and must carry the same
feature-layout hash as the dataset sidecar it is served with.
"""

from __future__ import annotations

import json
import logging
import os
import sys
import threading
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .errors import FingerprintMismatchError, ParkcastError, SchemaError
from .features import FeatureRow, batch_flux, encode_row, section_for_segment
from .geodata import Campus, load_campus
from .models import RegressionModel, load_model, predict
from .spatial import Segment, parse_observation_row, segment_roads, spatial_join

logger = logging.getLogger("parkcast.service")

DEFAULT_LOW_THRESHOLD = 0.5
DEFAULT_HIGH_THRESHOLD = 0.85


def occupancy_state(
    rate: float, low: float = DEFAULT_LOW_THRESHOLD, high: float = DEFAULT_HIGH_THRESHOLD
) -> str:
    """low below `low`; moderate in [low, high]; high above `high`."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"occupancy rate {rate} outside [0, 1]")
    if rate < low:
        return "low"
    if rate <= high:
        return "moderate"
    return "high"


@dataclass(frozen=True)
class ServiceConfig:
    model_path: str
    sidecar_path: str
    campus_path: str
    host: str = "127.0.0.1"
    port: int = 8571
    low_threshold: float = DEFAULT_LOW_THRESHOLD
    high_threshold: float = DEFAULT_HIGH_THRESHOLD
    snap_threshold_m: float = 30.0
    horizon_start_hour: int = 7
    horizon_end_hour: int = 15
    cors_origins: tuple[str, ...] = ("*",)
    initial_occupancy: dict = field(default_factory=dict)


ENV_PREFIX = "PARKCAST_"

_ENV_FIELDS = {
    "MODEL_PATH": ("model_path", str),
    "SIDECAR_PATH": ("sidecar_path", str),
    "CAMPUS_PATH": ("campus_path", str),
    "HOST": ("host", str),
    "PORT": ("port", int),
    "LOW_THRESHOLD": ("low_threshold", float),
    "HIGH_THRESHOLD": ("high_threshold", float),
    "SNAP_THRESHOLD_M": ("snap_threshold_m", float),
}


def load_service_config(path: str | Path, env: dict | None = None) -> ServiceConfig:
    """Read a JSON (or TOML, on Python 3.11+) config file with env overrides."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".toml":
        try:
            import tomllib  # py311+
        except ModuleNotFoundError as exc:
            raise SchemaError(
                "TOML config requires Python 3.11+; use the JSON form instead"
            ) from exc
        doc = tomllib.loads(text)
    else:
        doc = json.loads(text)
    if env is None:
        env = dict(os.environ)
    for key, (field_name, cast) in _ENV_FIELDS.items():
        raw = env.get(ENV_PREFIX + key)
        if raw is not None:
            doc[field_name] = cast(raw)
    if "cors_origins" in doc:
        doc["cors_origins"] = tuple(doc["cors_origins"])
    if "initial_occupancy" in doc:
        doc["initial_occupancy"] = {int(k): int(v) for k, v in doc["initial_occupancy"].items()}
    return ServiceConfig(**doc)


@dataclass(frozen=True)
class SectionOccupancy:
    section_id: int
    capacity: int
    occupied: int
    rate: float
    state: str


@dataclass(frozen=True)
class OccupancySnapshot:
    sections: tuple[SectionOccupancy, ...]
    timestamp: datetime
    influx: dict = field(default_factory=dict)  # per-section counts of the last batch
    outflux: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "timestamp": self.timestamp.isoformat(),
            "sections": [
                {
                    "section_id": s.section_id,
                    "capacity": s.capacity,
                    "occupied": s.occupied,
                    "occupancy_rate": s.rate,
                    "state": s.state,
                }
                for s in self.sections
            ],
        }


class PredictionRequest(BaseModel):
    gate_id: int
    arrival_time: datetime
    segment_id: int | None = None


def _snapshot_from_counts(
    campus: Campus,
    occupied: dict[int, int],
    timestamp: datetime,
    config: ServiceConfig,
    influx: dict | None = None,
    outflux: dict | None = None,
) -> OccupancySnapshot:
    sections = []
    for section in campus.sections:
        occ = min(section.capacity, max(0, occupied.get(section.id, 0)))
        rate = 1.0 - (section.capacity - occ) / section.capacity
        sections.append(
            SectionOccupancy(
                section_id=section.id,
                capacity=section.capacity,
                occupied=occ,
                rate=rate,
                state=occupancy_state(rate, config.low_threshold, config.high_threshold),
            )
        )
    return OccupancySnapshot(
        sections=tuple(sections),
        timestamp=timestamp,
        influx=dict(influx or {}),
        outflux=dict(outflux or {}),
    )


class ServiceState:
    """Loaded artifacts plus the atomically-published snapshot."""

    def __init__(
        self,
        campus: Campus,
        model: RegressionModel,
        sidecar: dict,
        config: ServiceConfig,
    ):
        if model.layout_hash != sidecar.get("layout_hash"):
            raise FingerprintMismatchError(
                "model feature layout vs dataset sidecar",
                expected=sidecar.get("layout_hash"),
                actual=model.layout_hash,
            )
        self.campus = campus
        self.model = model
        self.sidecar = sidecar
        self.config = config
        self.segments: list[Segment] = segment_roads(campus)
        self.section_of_segment = {
            s.id: section_for_segment(campus, s) for s in self.segments
        }
        self.segment_by_gate = {s.end_gate: s for s in self.segments}
        self._write_lock = threading.Lock()
        self.snapshot = _snapshot_from_counts(
            campus,
            dict(config.initial_occupancy),
            datetime.now(timezone.utc),
            config,
        )

    def publish(self, snapshot: OccupancySnapshot) -> None:
        self.snapshot = snapshot  # single reference assignment: atomic swap


def build_request_row(
    state: ServiceState, gate_id: int, arrival: datetime, section_id: int, segment_id: int | None
) -> FeatureRow:
    """Deterministic what-if feature row for one candidate section.

    Distance is taken at the segment midpoint (the expected position of an
    arriving vehicle); flux counts come from the last ingested batch.
    """
    seg = (
        next(s for s in state.segments if s.id == segment_id)
        if segment_id is not None
        else state.segment_by_gate[gate_id]
    )
    section = state.campus.section_by_id(section_id)
    snapshot = state.snapshot
    return FeatureRow(
        distance_m=seg.length_m / 2.0,
        timestamp=arrival.replace(minute=0, second=0, microsecond=0),
        travel_speed_kmh=0.0,
        n_vehicles=int(snapshot.influx.get(section_id, 0)),
        n_vehicles_exit=int(snapshot.outflux.get(section_id, 0)),
        segment_no=seg.id,
        total_parking_space=section.capacity,
        availability=None,
    )


def predict_for_request(state: ServiceState, req: PredictionRequest) -> dict:
    campus = state.campus
    config = state.config
    valid_gates = sorted(g.id for g in campus.gates)
    if req.gate_id not in valid_gates:
        raise HTTPException(
            status_code=422,
            detail=f"unknown gate {req.gate_id}; valid gates: {valid_gates}",
        )
    arrival = req.arrival_time
    if arrival.tzinfo is None:
        arrival = arrival.replace(tzinfo=timezone.utc)
    if not config.horizon_start_hour <= arrival.hour <= config.horizon_end_hour:
        raise HTTPException(
            status_code=422,
            detail=(
                f"arrival hour {arrival.hour} outside the serviceable horizon "
                f"{config.horizon_start_hour:02d}:00-{config.horizon_end_hour:02d}:00"
            ),
        )
    if req.segment_id is not None and req.segment_id not in {s.id for s in state.segments}:
        raise HTTPException(status_code=422, detail=f"unknown segment {req.segment_id}")
    candidate_sections = sorted(campus.gate_sections.get(req.gate_id, ()))
    if not candidate_sections:
        raise HTTPException(
            status_code=422, detail=f"gate {req.gate_id} has no mapped parking sections"
        )

    try:
        candidates = []
        for section_id in candidate_sections:
            row = build_request_row(state, req.gate_id, arrival, section_id, req.segment_id)
            vec = encode_row(row, state.sidecar).reshape(1, -1)
            raw = float(predict(state.model, vec)[0])
            avail = min(1.0, max(0.0, raw))
            capacity = campus.section_by_id(section_id).capacity
            vacant = int(round(avail * capacity))
            rate = 1.0 - avail
            candidates.append(
                {
                    "section_id": section_id,
                    "predicted_availability": avail,
                    "predicted_vacant": vacant,
                    "occupancy_state": occupancy_state(
                        rate, config.low_threshold, config.high_threshold
                    ),
                }
            )
    except ParkcastError as exc:
        raise HTTPException(
            status_code=500,
            detail=f"model failure ({state.model.train_fingerprint}): {exc}",
        ) from exc

    best = max(candidates, key=lambda c: (c["predicted_vacant"], -c["section_id"]))
    return {
        "recommended_section_id": best["section_id"],
        "predicted_availability": best["predicted_availability"],
        "predicted_vacant": best["predicted_vacant"],
        "occupancy_state": best["occupancy_state"],
        "model_fingerprint": state.model.train_fingerprint,
        "candidates": candidates,
        "thresholds": {"low": config.low_threshold, "high": config.high_threshold},
    }


def ingest_batch(state: ServiceState, rows: list[dict]) -> dict:
    """Validate, join and apply one observation batch atomically."""
    observations = []
    rejected = []
    for i, row in enumerate(rows):
        try:
            observations.append(parse_observation_row({k: str(v) for k, v in row.items()}, index=i))
        except (SchemaError, ValueError) as exc:
            rejected.append({"index": i, "reason": str(exc)})
    if rejected:
        raise HTTPException(
            status_code=422,
            detail={"message": "batch rejected, nothing applied", "rejected": rejected},
        )
    for earlier, later in zip(observations, observations[1:]):
        if later.timestamp < earlier.timestamp:
            raise HTTPException(status_code=422, detail="batch must be time-ordered")

    warnings: list[str] = []
    with state._write_lock:
        snapshot = state.snapshot
        if observations:
            joined = spatial_join(
                observations,
                state.campus,
                threshold_m=state.config.snap_threshold_m,
                segments=state.segments,
            )
            influx, outflux = batch_flux(joined, state.section_of_segment)
            occupied = {}
            for s in snapshot.sections:
                delta = influx.get(s.section_id, 0) - outflux.get(s.section_id, 0)
                new_occ = s.occupied + delta
                if new_occ < 0:
                    warnings.append(
                        f"section {s.section_id}: outflux exceeds occupancy, clamped at 0"
                    )
                if new_occ > s.capacity:
                    warnings.append(
                        f"section {s.section_id}: influx exceeds capacity, clamped at {s.capacity}"
                    )
                occupied[s.section_id] = new_occ
            stamp = max(o.timestamp for o in observations)
        else:
            influx, outflux = dict(snapshot.influx), dict(snapshot.outflux)
            occupied = {s.section_id: s.occupied for s in snapshot.sections}
            stamp = datetime.now(timezone.utc)
            if stamp <= snapshot.timestamp:
                stamp = snapshot.timestamp + timedelta(microseconds=1)
        new_snapshot = _snapshot_from_counts(
            state.campus, occupied, stamp, state.config, influx, outflux
        )
        state.publish(new_snapshot)
    for message in warnings:
        logger.warning(message)
    return {"applied": len(observations), "warnings": warnings, "snapshot": new_snapshot.to_dict()}


def create_app(config: ServiceConfig) -> FastAPI:
    """Load artifacts, fingerprint-match them, and expose the endpoints.

    Raises FingerprintMismatchError (startup refusal) when the model was not
    trained against the supplied dataset sidecar.
    """
    campus = load_campus(Path(config.campus_path).read_bytes())
    model = load_model(config.model_path)
    sidecar = json.loads(Path(config.sidecar_path).read_text(encoding="utf-8"))
    state = ServiceState(campus, model, sidecar, config)

    app = FastAPI(title="parkcast availability service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(config.cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.parkcast = state

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "model_fingerprint": state.model.train_fingerprint,
            "layout_hash": state.model.layout_hash,
            "horizon": {
                "start_hour": config.horizon_start_hour,
                "end_hour": config.horizon_end_hour,
            },
        }

    @app.get("/sections")
    def sections():
        serving = {}
        for gate_id, section_ids in state.campus.gate_sections.items():
            for sid in section_ids:
                serving.setdefault(sid, []).append(gate_id)
        return {
            "total_capacity": state.campus.declared_capacity,
            "sections": [
                {
                    "section_id": s.id,
                    "capacity": s.capacity,
                    "polygon": [[p.lon, p.lat] for p in s.polygon],
                    "gate_ids": sorted(serving.get(s.id, [])),
                }
                for s in state.campus.sections
            ],
        }

    @app.get("/occupancy")
    def occupancy():
        return state.snapshot.to_dict()

    @app.post("/predict")
    def predict_endpoint(req: PredictionRequest):
        return predict_for_request(state, req)

    @app.post("/observations")
    def observations_endpoint(rows: list[dict]):
        return ingest_batch(state, rows)

    return app


def main(argv: list[str] | None = None) -> None:
    """Entry used by the CLI `serve` subcommand."""
    import uvicorn

    config_path = (argv or sys.argv[1:])[0]
    config = load_service_config(config_path)
    uvicorn.run(create_app(config), host=config.host, port=config.port)

"""Seeded synthetic vehicle traces with exact occupancy ground truth.

Stands in for the live mobility feed: vehicles arrive along a segment toward
its terminal gate (increasing snap offset) and depart by moving away from it
(decreasing offset, always two or more points so the direction is
observable). The generator applies the same hourly balance rule as the
feature builder, so with zero GPS noise the full pipeline recovers the
emitted ground truth exactly.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone

import numpy as np

from .errors import GenerationError
from .features import section_for_segment
from .geodata import EARTH_RADIUS_M, Campus, GeoPoint
from .spatial import Segment, VehicleObservation, point_at_offset, segment_roads

_LAT_SCALE = EARTH_RADIUS_M * math.pi / 180.0  # meters per degree latitude


@dataclass(frozen=True)
class SynthSpec:
    """Generator parameters: schedule, per-gate hourly rate curves, noise."""

    days: int
    start_date: date
    start_hour: int
    end_hour: int  # exclusive; buckets run start_hour .. end_hour-1
    arrival_rates: dict[int, tuple[float, ...]]  # gate -> mean arrivals per bucket
    departure_rates: dict[int, tuple[float, ...]]
    gps_noise_sigma_m: float = 0.0
    speed_range: tuple[float, float] = (10.0, 40.0)
    initial_occupancy: dict[int, int] = field(default_factory=dict)

    @property
    def hours_per_day(self) -> int:
        return self.end_hour - self.start_hour

    def window(self) -> tuple[datetime, datetime]:
        """Matching aggregation window (first and last hour bucket)."""
        first = datetime(
            self.start_date.year,
            self.start_date.month,
            self.start_date.day,
            self.start_hour,
            tzinfo=timezone.utc,
        )
        last_day = self.start_date + timedelta(days=self.days - 1)
        last = datetime(
            last_day.year, last_day.month, last_day.day, self.end_hour - 1, tzinfo=timezone.utc
        )
        return first, last

    def validate(self, campus: Campus) -> None:
        if self.days < 1:
            raise GenerationError(f"days must be >= 1, got {self.days}")
        if not 0 <= self.start_hour < self.end_hour <= 24:
            raise GenerationError(f"bad daily window {self.start_hour}..{self.end_hour}")
        n = self.hours_per_day
        for gate in campus.gates:
            for rates in (self.arrival_rates, self.departure_rates):
                curve = rates.get(gate.id)
                if curve is None:
                    raise GenerationError(f"no rate curve for gate {gate.id}")
                if len(curve) != n:
                    raise GenerationError(
                        f"gate {gate.id}: rate curve has {len(curve)} entries, expected {n}"
                    )
                if any(r < 0 for r in curve):
                    raise GenerationError(f"gate {gate.id}: negative rate")


@dataclass(frozen=True)
class GroundTruthRow:
    hour: datetime  # bucket start
    section_id: int
    capacity: int
    occupied: int
    availability: float


def spec_from_dict(doc: dict) -> SynthSpec:
    return SynthSpec(
        days=int(doc["days"]),
        start_date=date.fromisoformat(doc["start_date"]),
        start_hour=int(doc["start_hour"]),
        end_hour=int(doc["end_hour"]),
        arrival_rates={int(k): tuple(v) for k, v in doc["arrival_rates"].items()},
        departure_rates={int(k): tuple(v) for k, v in doc["departure_rates"].items()},
        gps_noise_sigma_m=float(doc.get("gps_noise_sigma_m", 0.0)),
        speed_range=tuple(doc.get("speed_range", (10.0, 40.0))),
        initial_occupancy={int(k): int(v) for k, v in doc.get("initial_occupancy", {}).items()},
    )


def _noisy(p: GeoPoint, sigma_m: float, rng: np.random.Generator) -> GeoPoint:
    if sigma_m <= 0:
        return p
    north, east = rng.normal(0.0, sigma_m, size=2)
    lat = p.lat + north / _LAT_SCALE
    lon = p.lon + east / (_LAT_SCALE * math.cos(math.radians(p.lat)))
    return GeoPoint(lon, lat)


def _observation_times(
    hour: datetime, count: int, rng: np.random.Generator
) -> list[datetime]:
    seconds = np.sort(rng.uniform(30.0, 3570.0, size=count))
    return [hour + timedelta(seconds=float(s)) for s in seconds]


def generate_traces(
    spec: SynthSpec, campus: Campus, seed: int
) -> tuple[list[VehicleObservation], list[GroundTruthRow]]:
    """Simulate arrivals/departures; returns observations + per-hour truth.

    Occupancy follows occupied <- clamp(occupied + influx - outflux, 0, cap)
    per section and hour, resetting to the configured initial occupancy at
    the start of each day. Rates that would push a section past its capacity
    raise GenerationError. Fully reproducible from the seed.
    """
    spec.validate(campus)
    rng = np.random.default_rng(seed)
    segments = segment_roads(campus)
    seg_by_gate = {s.end_gate: s for s in segments}
    section_of = {s.id: section_for_segment(campus, s) for s in segments}
    capacities = {s.id: s.capacity for s in campus.sections}

    observations: list[VehicleObservation] = []
    truth: list[GroundTruthRow] = []

    for d in range(spec.days):
        day = spec.start_date + timedelta(days=d)
        occupied = {sid: spec.initial_occupancy.get(sid, 0) for sid in capacities}
        for hi, hour_no in enumerate(range(spec.start_hour, spec.end_hour)):
            hour = datetime(day.year, day.month, day.day, hour_no, tzinfo=timezone.utc)
            delta: dict[int, int] = {sid: 0 for sid in capacities}
            for gate in campus.gates:
                seg = seg_by_gate[gate.id]
                sid = section_of[seg.id]
                arrivals = int(rng.poisson(spec.arrival_rates[gate.id][hi]))
                departures = int(rng.poisson(spec.departure_rates[gate.id][hi]))
                delta[sid] += arrivals - departures
                for a in range(arrivals):
                    key = f"v{d:02d}{hour_no:02d}g{gate.id}a{a:03d}"
                    observations.extend(
                        _vehicle_track(key, seg, hour, rng, spec, inbound=True)
                    )
                for x in range(departures):
                    key = f"v{d:02d}{hour_no:02d}g{gate.id}x{x:03d}"
                    observations.extend(
                        _vehicle_track(key, seg, hour, rng, spec, inbound=False)
                    )
            for sid in capacities:
                new_occ = occupied[sid] + delta[sid]
                if new_occ > capacities[sid]:
                    raise GenerationError(
                        f"section {sid} would hold {new_occ} vehicles at {hour.isoformat()}"
                        f" (capacity {capacities[sid]})"
                    )
                occupied[sid] = max(0, new_occ)
                truth.append(
                    GroundTruthRow(
                        hour=hour,
                        section_id=sid,
                        capacity=capacities[sid],
                        occupied=occupied[sid],
                        availability=(capacities[sid] - occupied[sid]) / capacities[sid],
                    )
                )
    observations.sort(key=lambda o: (o.timestamp, o.vehicle_key))
    return observations, truth


def _vehicle_track(
    key: str,
    seg: Segment,
    hour: datetime,
    rng: np.random.Generator,
    spec: SynthSpec,
    inbound: bool,
) -> list[VehicleObservation]:
    """Observation points for one vehicle inside one hour bucket.

    Inbound tracks move toward the terminal gate (offsets strictly increase,
    one point suffices); departing tracks move away and always carry at least
    two points so the net direction is observable.
    """
    length = seg.length_m
    if inbound:
        n_obs = int(rng.integers(1, 4))
        offset = float(rng.uniform(0.10, 0.50)) * length
        step_sign = 1.0
    else:
        n_obs = int(rng.integers(2, 4))
        offset = float(rng.uniform(0.50, 0.90)) * length
        step_sign = -1.0
    times = _observation_times(hour, n_obs, rng)
    track = []
    for t in times:
        point = _noisy(point_at_offset(seg.polyline, offset), spec.gps_noise_sigma_m, rng)
        track.append(
            VehicleObservation(
                vehicle_key=key,
                point=point,
                timestamp=t,
                speed_kmh=float(rng.uniform(*spec.speed_range)),
            )
        )
        offset += step_sign * float(rng.uniform(5.0, 20.0))
        offset = min(max(offset, 0.05 * length), 0.95 * length)
    return track


def truth_to_csv(rows: list[GroundTruthRow]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["timestamp", "section_id", "capacity", "occupied", "availability"])
    for r in rows:
        writer.writerow(
            [
                r.hour.astimezone(timezone.utc).isoformat().replace("+00:00", "Z"),
                r.section_id,
                r.capacity,
                r.occupied,
                repr(r.availability),
            ]
        )
    return out.getvalue()


def truth_from_csv(text: str) -> list[GroundTruthRow]:
    reader = csv.DictReader(io.StringIO(text))
    rows = []
    for rec in reader:
        rows.append(
            GroundTruthRow(
                hour=datetime.fromisoformat(rec["timestamp"].replace("Z", "+00:00")),
                section_id=int(rec["section_id"]),
                capacity=int(rec["capacity"]),
                occupied=int(rec["occupied"]),
                availability=float(rec["availability"]),
            )
        )
    return rows


# ---------------------------------------------------------------------------
# Bundled demo campus: 5 gates, 3 sections of 315 spaces (945 total)
# ---------------------------------------------------------------------------


def fixture_campus_geojson(capacities: tuple[int, int, int] = (315, 315, 315)) -> dict:
    """A rectangular demo campus with 5 gates on the perimeter road.

    The per-section capacity split is configurable; only the total is fixed
    by the declared capacity.
    """

    def line(coords, **props):
        return {
            "type": "Feature",
            "properties": props,
            "geometry": {"type": "LineString", "coordinates": coords},
        }

    def gate(gate_id, lon, lat, section_id, name):
        return {
            "type": "Feature",
            "properties": {
                "kind": "gate",
                "gate_id": gate_id,
                "name": name,
                "section_id": section_id,
            },
            "geometry": {"type": "Point", "coordinates": [lon, lat]},
        }

    def parking(section_id, capacity, lo_lon, lo_lat, hi_lon, hi_lat):
        ring = [
            [lo_lon, lo_lat],
            [hi_lon, lo_lat],
            [hi_lon, hi_lat],
            [lo_lon, hi_lat],
            [lo_lon, lo_lat],
        ]
        return {
            "type": "Feature",
            "properties": {"kind": "parking", "section_id": section_id, "capacity": capacity},
            "geometry": {"type": "Polygon", "coordinates": [ring]},
        }

    boundary = [
        [55.480, 25.280],
        [55.490, 25.280],
        [55.490, 25.287],
        [55.480, 25.287],
        [55.480, 25.280],
    ]
    features = [
        line(boundary, kind="boundary"),
        line([[55.485, 25.280], [55.485, 25.287]], kind="road"),
        line([[55.480, 25.2835], [55.490, 25.2835]], kind="road"),
        gate(1, 55.483, 25.280, 1, "South-West Gate"),
        gate(2, 55.488, 25.280, 1, "South-East Gate"),
        gate(3, 55.490, 25.283, 2, "East Gate"),
        gate(4, 55.486, 25.287, 3, "North Gate"),
        gate(5, 55.480, 25.2835, 3, "West Gate"),
        parking(1, capacities[0], 55.482, 25.281, 55.486, 25.2828),
        parking(2, capacities[1], 55.487, 25.282, 55.4895, 25.285),
        parking(3, capacities[2], 55.481, 25.284, 55.4845, 25.286),
    ]
    return {
        "type": "FeatureCollection",
        "properties": {"total_capacity": sum(capacities)},
        "features": features,
    }


def default_synth_spec(nonlinear: bool = True) -> dict:
    """Bundled generator config: morning arrival peak, afternoon departures.

    Occupancy rises steeply, plateaus and empties out, so availability is a
    pronounced hump of the hour of day that a straight line cannot fit.
    """
    arrivals_base = [30, 40, 26, 13, 6, 5, 3, 3] if nonlinear else [10] * 8
    departures_base = [0, 2, 3, 7, 10, 16, 24, 30] if nonlinear else [10] * 8
    gate_scale = {1: 1.0, 2: 0.9, 3: 0.8, 4: 0.7, 5: 0.6}
    return {
        "days": 3,
        "start_date": "2022-09-05",
        "start_hour": 7,
        "end_hour": 15,
        "gps_noise_sigma_m": 5.0,
        "arrival_rates": {
            str(g): [round(a * s, 3) for a in arrivals_base] for g, s in gate_scale.items()
        },
        "departure_rates": {
            str(g): [round(dep * s, 3) for dep in departures_base] for g, s in gate_scale.items()
        },
    }

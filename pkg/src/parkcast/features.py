"""Hourly feature construction, dataset encoding and correlation analysis.

A vehicle is classified inbound in an hour when its snap offset moves toward
the segment's terminal gate across its observations in that hour (net
movement); single-observation vehicles count as inbound. Influx counts
distinct vehicles whose first sighting of the hour is inbound; outflux counts
distinct vehicles observed outbound. Occupancy is a running balance per
section, clamped to [0, capacity], reset to the configured initial value at
the start of each day's window.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone

import numpy as np

from .errors import SchemaError, UndefinedCorrelationError
from .geodata import Campus
from .spatial import JoinedObservation, Segment, segment_roads

# The eight retained attributes, by their canonical names.
ATTRIBUTE_NAMES = (
    "Distance",
    "Timestamp",
    "Travel Speed",
    "No. of Vehicles",
    "No. of Vehicles exit",
    "No. Segment",
    "Total Parking Space",
    "Availability",
)

CSV_COLUMNS = (
    "distance",
    "timestamp",
    "travel_speed",
    "n_vehicles",
    "n_vehicles_exit",
    "segment_no",
    "total_parking_space",
    "availability",
)

# Numeric (standardized) encoded features; timestamp expands to hour + day index.
NUMERIC_FEATURES = (
    "distance",
    "hour_of_day",
    "day_index",
    "travel_speed",
    "n_vehicles",
    "n_vehicles_exit",
    "total_parking_space",
)


@dataclass(frozen=True)
class FeatureRow:
    """One (hour bucket, segment) modeling row: the eight retained attributes."""

    distance_m: float
    timestamp: datetime  # hour bucket start, UTC
    travel_speed_kmh: float
    n_vehicles: int
    n_vehicles_exit: int
    segment_no: int
    total_parking_space: int
    availability: float | None  # target fraction in [0,1]; None = missing


@dataclass(frozen=True)
class CleanReport:
    dropped_duplicates: int
    dropped_missing_target: int
    dropped_out_of_range: int

    @property
    def total_dropped(self) -> int:
        return self.dropped_duplicates + self.dropped_missing_target + self.dropped_out_of_range


@dataclass(frozen=True)
class CorrelationReport:
    variable_pair: tuple[str, str]
    r: float
    rho: float
    p_value: float
    n: int

    def to_dict(self) -> dict:
        return {
            "variable_pair": list(self.variable_pair),
            "pearson_r": self.r,
            "spearman_rho": self.rho,
            "p_value": self.p_value,
            "n": self.n,
        }


def availability(capacity: int, occupied: int) -> float:
    """Vacant fraction (capacity - occupied) / capacity in [0, 1]."""
    if capacity <= 0:
        raise ValueError(f"capacity must be positive, got {capacity}")
    if occupied < 0 or occupied > capacity:
        raise ValueError(f"occupied {occupied} outside [0, {capacity}]")
    return (capacity - occupied) / capacity


def section_for_segment(campus: Campus, segment: Segment) -> int:
    """Parking section served by a segment's terminal gate (lowest id wins)."""
    served = campus.gate_sections.get(segment.end_gate)
    if not served:
        raise SchemaError(f"gate {segment.end_gate} has no section mapping in the campus file")
    return min(served)


def classify_directions(
    sightings: list[JoinedObservation],
) -> tuple[int, dict[int, bool]]:
    """Direction of one vehicle's snapped, time-sorted sightings.

    Returns (segment of the first sighting, per-segment inbound flag). A
    vehicle is inbound on a segment when its net offset movement there is
    toward the terminal gate; a single sighting counts as inbound.
    """
    per_segment: dict[int, list[float]] = defaultdict(list)
    for j in sightings:
        per_segment[j.segment_id].append(j.offset_m)
    inbound = {seg_id: offs[-1] >= offs[0] for seg_id, offs in per_segment.items()}
    return sightings[0].segment_id, inbound


def batch_flux(
    joined: list[JoinedObservation], section_of_segment: dict[int, int]
) -> tuple[dict[int, int], dict[int, int]]:
    """Per-section influx/outflux of one observation batch (no hour buckets).

    Influx counts distinct vehicles whose first snapped sighting is inbound;
    outflux counts distinct vehicles observed outbound on a segment.
    """
    by_vehicle: dict[str, list[JoinedObservation]] = defaultdict(list)
    for j in joined:
        if j.segment_id is not None:
            by_vehicle[j.observation.vehicle_key].append(j)
    influx: dict[int, int] = defaultdict(int)
    outflux: dict[int, int] = defaultdict(int)
    for sightings in by_vehicle.values():
        sightings.sort(key=lambda j: j.observation.timestamp)
        first_segment, inbound = classify_directions(sightings)
        if inbound[first_segment]:
            influx[section_of_segment[first_segment]] += 1
        for seg_id, seg_inbound in inbound.items():
            if not seg_inbound:
                outflux[section_of_segment[seg_id]] += 1
    return dict(influx), dict(outflux)


def _floor_hour(ts: datetime) -> datetime:
    return ts.replace(minute=0, second=0, microsecond=0)


def _hour_aligned(ts: datetime) -> bool:
    return ts.minute == 0 and ts.second == 0 and ts.microsecond == 0


def aggregate_hourly(
    joined: list[JoinedObservation],
    campus: Campus,
    window: tuple[datetime, datetime],
    segments: list[Segment] | None = None,
    initial_occupancy: dict[int, int] | None = None,
) -> list[FeatureRow]:
    """Aggregate joined observations into one row per (hour bucket, segment).

    ``window`` gives the first and last hour bucket; the time-of-day range of
    the endpoints defines each day's observation window (e.g. 07:00-15:00).
    Buckets are half-open [h, h+1). Buckets with no observations emit
    zero-count rows.
    """
    start, end = window
    if not (_hour_aligned(start) and _hour_aligned(end)):
        raise ValueError(f"window endpoints must be hour-aligned, got {start} / {end}")
    if start > end or start.hour > end.hour:
        raise ValueError(f"window {start}..{end} is inverted")
    if segments is None:
        segments = segment_roads(campus)
    seg_by_id = {s.id: s for s in segments}

    buckets: list[datetime] = []
    day = start.date()
    while day <= end.date():
        for hour in range(start.hour, end.hour + 1):
            buckets.append(datetime(day.year, day.month, day.day, hour, tzinfo=start.tzinfo))
        day += timedelta(days=1)
    bucket_set = set(buckets)

    # Group snapped observations by (vehicle, hour bucket), keeping time order.
    by_vehicle_hour: dict[tuple[str, datetime], list[JoinedObservation]] = defaultdict(list)
    for j in joined:
        if j.segment_id is None:
            continue
        h = _floor_hour(j.observation.timestamp)
        if h.tzinfo != start.tzinfo:
            h = h.astimezone(start.tzinfo)
        if h in bucket_set:
            by_vehicle_hour[(j.observation.vehicle_key, h)].append(j)
    for obs_list in by_vehicle_hour.values():
        obs_list.sort(key=lambda j: j.observation.timestamp)

    influx: dict[tuple[datetime, int], int] = defaultdict(int)
    outflux: dict[tuple[datetime, int], int] = defaultdict(int)
    dist_sums: dict[tuple[datetime, int], list[float]] = defaultdict(list)
    speed_sums: dict[tuple[datetime, int], list[float]] = defaultdict(list)

    for (vehicle, hour), obs_list in sorted(
        by_vehicle_hour.items(), key=lambda kv: (kv[0][1], kv[0][0])
    ):
        for j in obs_list:
            seg = seg_by_id[j.segment_id]
            dist_sums[(hour, j.segment_id)].append(max(0.0, seg.length_m - j.offset_m))
            if j.observation.speed_kmh is not None:
                speed_sums[(hour, j.segment_id)].append(j.observation.speed_kmh)
        first_segment, inbound_by_segment = classify_directions(obs_list)
        if inbound_by_segment[first_segment]:
            influx[(hour, first_segment)] += 1
        for seg_id, inbound in inbound_by_segment.items():
            if not inbound:
                outflux[(hour, seg_id)] += 1

    section_of = {s.id: section_for_segment(campus, s) for s in segments}
    capacities = {s.id: s.capacity for s in campus.sections}
    base_occupancy = dict(initial_occupancy or {})

    rows: list[FeatureRow] = []
    occupied: dict[int, int] = {}
    current_day: date | None = None
    for hour in buckets:
        if hour.date() != current_day:
            current_day = hour.date()
            occupied = {sid: base_occupancy.get(sid, 0) for sid in capacities}
        delta: dict[int, int] = defaultdict(int)
        for seg in segments:
            delta[section_of[seg.id]] += influx[(hour, seg.id)] - outflux[(hour, seg.id)]
        for sid in capacities:
            occupied[sid] = min(capacities[sid], max(0, occupied[sid] + delta[sid]))
        for seg in sorted(segments, key=lambda s: s.id):
            key = (hour, seg.id)
            sid = section_of[seg.id]
            rows.append(
                FeatureRow(
                    distance_m=float(np.mean(dist_sums[key])) if dist_sums[key] else 0.0,
                    timestamp=hour,
                    travel_speed_kmh=float(np.mean(speed_sums[key])) if speed_sums[key] else 0.0,
                    n_vehicles=influx[key],
                    n_vehicles_exit=outflux[key],
                    segment_no=seg.id,
                    total_parking_space=capacities[sid],
                    availability=availability(capacities[sid], occupied[sid]),
                )
            )
    return rows


def clean(rows: list[FeatureRow]) -> tuple[list[FeatureRow], CleanReport]:
    """Drop exact duplicates, rows without a target, and out-of-range targets.

    Idempotent; preserves first occurrences in order.
    """
    seen: set[FeatureRow] = set()
    kept: list[FeatureRow] = []
    dup = missing = out_of_range = 0
    for row in rows:
        if row in seen:
            dup += 1
            continue
        seen.add(row)
        if row.availability is None or (
            isinstance(row.availability, float) and math.isnan(row.availability)
        ):
            missing += 1
            continue
        if not 0.0 <= row.availability <= 1.0:
            out_of_range += 1
            continue
        kept.append(row)
    return kept, CleanReport(dup, missing, out_of_range)


def select_features(raw: dict[str, object]) -> FeatureRow:
    """Project a raw attribute map (e.g. 25 attributes) onto the retained 8.

    Unknown extras are ignored; a missing retained attribute raises
    SchemaError naming it.
    """
    missing = [name for name in ATTRIBUTE_NAMES if name not in raw]
    if missing:
        raise SchemaError(f"missing retained attribute(s): {missing}")
    ts = raw["Timestamp"]
    if isinstance(ts, str):
        ts = datetime.fromisoformat(ts.replace("Z", "+00:00"))
    if not isinstance(ts, datetime):
        raise SchemaError(f"Timestamp must be a datetime or ISO string, got {type(ts).__name__}")
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    avail = raw["Availability"]
    return FeatureRow(
        distance_m=float(raw["Distance"]),  # type: ignore[arg-type]
        timestamp=ts,
        travel_speed_kmh=float(raw["Travel Speed"]),  # type: ignore[arg-type]
        n_vehicles=int(raw["No. of Vehicles"]),  # type: ignore[arg-type]
        n_vehicles_exit=int(raw["No. of Vehicles exit"]),  # type: ignore[arg-type]
        segment_no=int(raw["No. Segment"]),  # type: ignore[arg-type]
        total_parking_space=int(raw["Total Parking Space"]),  # type: ignore[arg-type]
        availability=None if avail is None else float(avail),  # type: ignore[arg-type]
    )


# ---------------------------------------------------------------------------
# Encoding and scaling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """Encoded train/test matrices plus the statistics needed to re-encode.

    The scaler is fitted on training rows only; test rows are transformed
    with training statistics.
    """

    train_rows: tuple[FeatureRow, ...]
    test_rows: tuple[FeatureRow, ...]
    train_X: np.ndarray
    train_y: np.ndarray
    test_X: np.ndarray
    test_y: np.ndarray
    feature_names: tuple[str, ...]
    numeric_mean: np.ndarray
    numeric_std: np.ndarray
    n_segments: int
    day_zero: date
    provenance: dict = field(default_factory=dict)

    @property
    def layout_hash(self) -> str:
        return _layout_hash(
            self.feature_names, self.n_segments, self.numeric_mean, self.numeric_std, self.day_zero
        )

    def sidecar(self) -> dict:
        """The serving contract: encoding recipe, scaler stats, provenance."""
        return {
            "format_version": 1,
            "feature_names": list(self.feature_names),
            "numeric_features": list(NUMERIC_FEATURES),
            "one_hot": {"column": "segment_no", "categories": list(range(1, self.n_segments + 1))},
            "scaler": {
                "mean": [float(v) for v in self.numeric_mean],
                "std": [float(v) for v in self.numeric_std],
            },
            "day_zero": self.day_zero.isoformat(),
            "target": "availability",
            "distance_definition": "road distance from the snap point to the expected gate along the segment",
            "layout_hash": self.layout_hash,
            "provenance": self.provenance,
        }

    def train_groups(self) -> np.ndarray:
        return np.array([r.segment_no for r in self.train_rows], dtype=np.int64)

    def test_groups(self) -> np.ndarray:
        return np.array([r.segment_no for r in self.test_rows], dtype=np.int64)

    def train_timestamps(self) -> list[datetime]:
        return [r.timestamp for r in self.train_rows]


def _layout_hash(names, n_segments, mean, std, day_zero) -> str:
    payload = json.dumps(
        {
            "feature_names": list(names),
            "n_segments": int(n_segments),
            "mean": [float(v) for v in mean],
            "std": [float(v) for v in std],
            "day_zero": day_zero.isoformat(),
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()


def _numeric_vector(row: FeatureRow, day_zero: date) -> list[float]:
    return [
        row.distance_m,
        float(row.timestamp.hour),
        float((row.timestamp.date() - day_zero).days),
        row.travel_speed_kmh,
        float(row.n_vehicles),
        float(row.n_vehicles_exit),
        float(row.total_parking_space),
    ]


def _one_hot(segment_no: int, n_segments: int) -> list[float]:
    if not 1 <= segment_no <= n_segments:
        raise SchemaError(f"segment_no {segment_no} outside 1..{n_segments}")
    return [1.0 if k == segment_no else 0.0 for k in range(1, n_segments + 1)]


def standardize(values: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    """(x - mean) / std with zero-variance columns mapped to zero, never NaN."""
    denom = np.where(std == 0.0, 1.0, std)
    return (values - mean) / denom


def unstandardize(values: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    denom = np.where(std == 0.0, 1.0, std)
    return values * denom + mean


def encode_and_scale(
    train_rows: list[FeatureRow],
    test_rows: list[FeatureRow],
    n_segments: int | None = None,
    provenance: dict | None = None,
) -> Dataset:
    """Encode rows into model matrices; scaler fitted on the training rows."""
    if not train_rows:
        raise ValueError("no training rows")
    if n_segments is None:
        n_segments = max(r.segment_no for r in [*train_rows, *test_rows])
    day_zero = min(r.timestamp for r in train_rows).date()

    def raw_numeric(rows):
        return np.array([_numeric_vector(r, day_zero) for r in rows], dtype=np.float64)

    train_num = raw_numeric(train_rows)
    mean = train_num.mean(axis=0)
    std = train_num.std(axis=0)

    def encode(rows):
        if not rows:
            return np.zeros((0, len(NUMERIC_FEATURES) + n_segments)), np.zeros(0)
        num = standardize(raw_numeric(rows), mean, std)
        hot = np.array([_one_hot(r.segment_no, n_segments) for r in rows], dtype=np.float64)
        y = np.array(
            [r.availability if r.availability is not None else np.nan for r in rows],
            dtype=np.float64,
        )
        return np.hstack([num, hot]), y

    train_X, train_y = encode(train_rows)
    test_X, test_y = encode(test_rows)
    names = tuple(NUMERIC_FEATURES) + tuple(f"segment_{k}" for k in range(1, n_segments + 1))
    return Dataset(
        train_rows=tuple(train_rows),
        test_rows=tuple(test_rows),
        train_X=train_X,
        train_y=train_y,
        test_X=test_X,
        test_y=test_y,
        feature_names=names,
        numeric_mean=mean,
        numeric_std=std,
        n_segments=n_segments,
        day_zero=day_zero,
        provenance=provenance or {},
    )


def encode_row(row: FeatureRow, sidecar: dict) -> np.ndarray:
    """Encode a single row with a persisted sidecar's statistics."""
    day_zero = date.fromisoformat(sidecar["day_zero"])
    mean = np.asarray(sidecar["scaler"]["mean"], dtype=np.float64)
    std = np.asarray(sidecar["scaler"]["std"], dtype=np.float64)
    n_segments = len(sidecar["one_hot"]["categories"])
    num = standardize(np.asarray(_numeric_vector(row, day_zero)), mean, std)
    return np.concatenate([num, np.asarray(_one_hot(row.segment_no, n_segments))])


# ---------------------------------------------------------------------------
# Correlation analysis
# ---------------------------------------------------------------------------


def pearson(x, y) -> float:
    """Pearson correlation coefficient r in [-1, 1].

    Raises UndefinedCorrelationError on constant input; requires n >= 3.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    n = x.size
    if n < 3:
        raise ValueError(f"need at least 3 samples, got {n}")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("correlation undefined for constant input")
    r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks starting at 1, ties receive the average of their positions."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    max_iter = 300
    eps = 3e-16
    fpmin = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b), the regularized incomplete beta function."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x={x} outside [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, df: int) -> float:
    """Two-sided p-value for a Student-t statistic, via the incomplete beta."""
    if df <= 0:
        raise ValueError(f"df must be positive, got {df}")
    if math.isinf(t):
        return 5e-324  # smallest subnormal, keeps p in (0, 1]
    x = df / (df + t * t)
    p = regularized_incomplete_beta(df / 2.0, 0.5, x)
    return min(1.0, max(5e-324, p))


def spearman(x, y) -> tuple[float, float]:
    """Spearman rank correlation and two-sided p-value.

    Ranks use average positions for ties; rho is the Pearson correlation of
    the ranks (equal to the classic 1 - 6*sum(d^2)/(n(n^2-1)) form when
    untied). p uses t = rho*sqrt((n-2)/(1-rho^2)) against Student-t(n-2).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    n = x.size
    if n < 3:
        raise ValueError(f"need at least 3 samples, got {n}")
    rho = pearson(_average_ranks(x), _average_ranks(y))
    if abs(rho) >= 1.0:
        return rho, 5e-324
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    return rho, student_t_two_sided_p(abs(t), n - 2)


def correlation_report(x, y, names: tuple[str, str] = ("x", "y")) -> CorrelationReport:
    """Pearson + Spearman analysis of one variable pair."""
    r = pearson(x, y)
    rho, p = spearman(x, y)
    return CorrelationReport(variable_pair=names, r=r, rho=rho, p_value=p, n=len(x))


# ---------------------------------------------------------------------------
# CSV persistence of feature rows
# ---------------------------------------------------------------------------


def rows_to_csv(rows: list[FeatureRow]) -> str:
    import csv as _csv
    import io as _io

    out = _io.StringIO()
    writer = _csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    # repr keeps the shortest exact float form so re-encoding the CSV
    # reproduces identical scaler statistics (fingerprint chain)
    for r in rows:
        writer.writerow(
            [
                repr(r.distance_m),
                r.timestamp.astimezone(timezone.utc).isoformat().replace("+00:00", "Z"),
                repr(r.travel_speed_kmh),
                r.n_vehicles,
                r.n_vehicles_exit,
                r.segment_no,
                r.total_parking_space,
                "" if r.availability is None else repr(r.availability),
            ]
        )
    return out.getvalue()


def rows_from_csv(text: str) -> list[FeatureRow]:
    import csv as _csv
    import io as _io

    reader = _csv.DictReader(_io.StringIO(text))
    if reader.fieldnames is None:
        raise SchemaError("empty dataset CSV")
    missing = [c for c in CSV_COLUMNS if c not in reader.fieldnames]
    if missing:
        raise SchemaError(f"dataset CSV missing columns {missing}")
    rows = []
    for rec in reader:
        avail = rec["availability"].strip()
        rows.append(
            FeatureRow(
                distance_m=float(rec["distance"]),
                timestamp=datetime.fromisoformat(rec["timestamp"].replace("Z", "+00:00")),
                travel_speed_kmh=float(rec["travel_speed"]),
                n_vehicles=int(rec["n_vehicles"]),
                n_vehicles_exit=int(rec["n_vehicles_exit"]),
                segment_no=int(rec["segment_no"]),
                total_parking_space=int(rec["total_parking_space"]),
                availability=float(avail) if avail else None,
            )
        )
    return rows

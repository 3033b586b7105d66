"""Boundary segmentation, observation snapping and the bulk spatial join.

Perpendicular distances use a local equirectangular projection about the query
point's latitude (error < 1 cm at campus scale); reported distances and arc
offsets are haversine. All operations are pure.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from datetime import datetime, timezone

from .errors import AmbiguousSectionError, DegenerateGateError, GeometryError, SchemaError
from .geodata import EARTH_RADIUS_M, Campus, GeoPoint, ParkingSection, haversine

OBSERVATION_COLUMNS = ["vehicle_key", "lon", "lat", "timestamp_iso8601", "speed_kmh"]

DEFAULT_SNAP_THRESHOLD_M = 30.0


@dataclass(frozen=True)
class Segment:
    """Portion of the boundary loop between two consecutive gates.

    Segment k starts at gate k-1 (wrapping) and terminates at gate k; a
    vehicle on segment k is expected to enter gate k.
    """

    id: int
    polyline: tuple[GeoPoint, ...]
    start_gate: int
    end_gate: int
    length_m: float


@dataclass(frozen=True)
class VehicleObservation:
    vehicle_key: str
    point: GeoPoint
    timestamp: datetime  # timezone-aware UTC
    speed_kmh: float | None = None

    def __post_init__(self):
        if self.timestamp.tzinfo is None:
            raise ValueError(f"timestamp {self.timestamp} is not timezone-aware")
        if self.speed_kmh is not None and self.speed_kmh < 0:
            raise ValueError(f"negative speed {self.speed_kmh}")


@dataclass(frozen=True)
class JoinedObservation:
    observation: VehicleObservation
    segment_id: int | None
    offset_m: float | None  # arc length from segment start, present iff snapped
    snap_distance_m: float  # distance to the nearest segment (inf if none exist)
    section_id: int | None
    expected_gate: int | None  # terminal gate of the snapped segment


def _local_scale(lat_deg: float) -> float:
    """Meters per degree of longitude at the given latitude."""
    return math.cos(math.radians(lat_deg)) * EARTH_RADIUS_M * math.pi / 180.0


_LAT_SCALE = EARTH_RADIUS_M * math.pi / 180.0  # meters per degree of latitude


def project_to_polyline(
    p: GeoPoint, polyline: tuple[GeoPoint, ...] | list[GeoPoint]
) -> tuple[float, float, GeoPoint]:
    """Project a point onto a polyline.

    Returns (arc offset from the polyline start in meters, haversine distance
    from p to the projected point, the projected point). The projection is
    computed edge by edge in a planar frame centered on p.
    """
    kx = _local_scale(p.lat)
    best_dist = math.inf
    best_offset = 0.0
    best_point = polyline[0]
    cumulative = 0.0
    for i in range(len(polyline) - 1):
        a, b = polyline[i], polyline[i + 1]
        edge_len = haversine(a, b)
        ax = (a.lon - p.lon) * kx
        ay = (a.lat - p.lat) * _LAT_SCALE
        bx = (b.lon - p.lon) * kx
        by = (b.lat - p.lat) * _LAT_SCALE
        dx, dy = bx - ax, by - ay
        denom = dx * dx + dy * dy
        if denom == 0.0:
            t = 0.0
        else:
            t = -(ax * dx + ay * dy) / denom
            t = min(1.0, max(0.0, t))
        proj = GeoPoint(a.lon + t * (b.lon - a.lon), a.lat + t * (b.lat - a.lat))
        dist = haversine(p, proj)
        if dist < best_dist:
            best_dist = dist
            best_offset = cumulative + t * edge_len
            best_point = proj
        cumulative += edge_len
    return best_offset, best_dist, best_point


def point_at_offset(polyline: tuple[GeoPoint, ...], offset_m: float) -> GeoPoint:
    """Point at a given arc length along a polyline (clamped to its ends)."""
    if offset_m <= 0:
        return polyline[0]
    cumulative = 0.0
    for i in range(len(polyline) - 1):
        a, b = polyline[i], polyline[i + 1]
        edge_len = haversine(a, b)
        if cumulative + edge_len >= offset_m and edge_len > 0:
            t = (offset_m - cumulative) / edge_len
            return GeoPoint(a.lon + t * (b.lon - a.lon), a.lat + t * (b.lat - a.lat))
        cumulative += edge_len
    return polyline[-1]


def segment_roads(
    campus: Campus, snap_threshold_m: float = DEFAULT_SNAP_THRESHOLD_M
) -> list[Segment]:
    """Split the boundary loop at the gate projections into G segments.

    Gates are projected onto the loop; the loop is cut at the projection
    points and each resulting piece takes the id of the gate it terminates at.
    Requires gates to appear in cyclic id order along the loop orientation so
    that segment i ends where segment i+1 (mod G) begins.
    """
    boundary = campus.boundary
    if len(boundary) < 4 or boundary[0] != boundary[-1]:
        raise GeometryError("boundary is not a closed loop")
    if len(campus.gates) < 2:
        raise GeometryError(f"need at least 2 gates to partition the loop, got {len(campus.gates)}")

    projections: list[tuple[float, int]] = []  # (arc position, gate id)
    for gate in campus.gates:
        offset, dist, _ = project_to_polyline(gate.location, boundary)
        if dist > snap_threshold_m:
            raise GeometryError(
                f"gate {gate.id} is {dist:.1f} m from the boundary"
                f" (threshold {snap_threshold_m} m)"
            )
        projections.append((offset, gate.id))

    projections.sort()
    for (s1, g1), (s2, g2) in zip(projections, projections[1:]):
        if abs(s1 - s2) < 1e-9:
            raise DegenerateGateError(
                f"gates {g1} and {g2} project to the same loop position ({s1:.3f} m)"
            )

    # Encounter order must be a rotation of 1..G for the numbering invariant.
    order = [g for _, g in projections]
    start = order.index(1)
    rotated = order[start:] + order[:start]
    if rotated != list(range(1, len(order) + 1)):
        raise GeometryError(
            f"gates must appear in id order along the boundary loop, found {order}"
        )

    # Vertex arc positions around the loop.
    vertex_pos = [0.0]
    for i in range(len(boundary) - 1):
        vertex_pos.append(vertex_pos[-1] + haversine(boundary[i], boundary[i + 1]))
    loop_len = vertex_pos[-1]

    def cut_points(s_from: float, s_to: float) -> tuple[GeoPoint, ...]:
        """Polyline along the loop from arc position s_from to s_to (may wrap)."""
        pts: list[GeoPoint] = [point_at_offset(boundary, s_from)]
        positions: list[float] = []
        if s_to <= s_from:
            s_to += loop_len
        for vp in vertex_pos[:-1]:
            for lap in (0.0, loop_len):
                v = vp + lap
                if s_from < v < s_to:
                    positions.append(v)
        for v in sorted(positions):
            pts.append(point_at_offset(boundary, v % loop_len))
        pts.append(point_at_offset(boundary, s_to % loop_len))
        deduped = [pts[0]]
        for p in pts[1:]:
            if haversine(deduped[-1], p) > 1e-9:
                deduped.append(p)
        return tuple(deduped)

    pos_by_gate = {g: s for s, g in projections}
    n_gates = len(campus.gates)
    segments = []
    for gate_id in range(1, n_gates + 1):
        start_gate = n_gates if gate_id == 1 else gate_id - 1
        poly = cut_points(pos_by_gate[start_gate], pos_by_gate[gate_id])
        segments.append(
            Segment(
                id=gate_id,
                polyline=poly,
                start_gate=start_gate,
                end_gate=gate_id,
                length_m=sum(haversine(poly[i], poly[i + 1]) for i in range(len(poly) - 1)),
            )
        )
    return segments


def snap_to_segment(
    p: GeoPoint, segments: list[Segment], threshold_m: float = DEFAULT_SNAP_THRESHOLD_M
) -> tuple[int, float, float] | None:
    """Snap a point to the nearest segment.

    Returns (segment_id, offset along segment in meters, distance in meters),
    or None when no segment lies within the threshold. Ties in distance go to
    the lowest segment id; the nearest segment does not depend on the
    threshold, so shrinking it can only turn an assignment into None.
    """
    if threshold_m <= 0:
        raise ValueError(f"threshold must be positive, got {threshold_m}")
    best: tuple[int, float, float] | None = None
    for seg in sorted(segments, key=lambda s: s.id):
        offset, dist, _ = project_to_polyline(p, seg.polyline)
        if best is None or dist < best[2]:
            best = (seg.id, offset, dist)
    if best is None or best[2] > threshold_m:
        return None
    return best


def _on_ring_boundary(p: GeoPoint, ring: tuple[GeoPoint, ...]) -> bool:
    """Exact-ish test for p lying on a ring edge or vertex."""
    eps = 1e-12
    for i in range(len(ring) - 1):
        a, b = ring[i], ring[i + 1]
        cross = (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon)
        if abs(cross) > eps:
            continue
        if (
            min(a.lon, b.lon) - eps <= p.lon <= max(a.lon, b.lon) + eps
            and min(a.lat, b.lat) - eps <= p.lat <= max(a.lat, b.lat) + eps
        ):
            return True
    return False


def point_in_ring(p: GeoPoint, ring: tuple[GeoPoint, ...]) -> bool:
    """Ray-casting containment in lon/lat space; boundary points count inside."""
    if _on_ring_boundary(p, ring):
        return True
    inside = False
    x, y = p.lon, p.lat
    for i in range(len(ring) - 1):
        a, b = ring[i], ring[i + 1]
        if (a.lat > y) != (b.lat > y):
            x_cross = a.lon + (y - a.lat) * (b.lon - a.lon) / (b.lat - a.lat)
            if x < x_cross:
                inside = not inside
    return inside


def point_in_section(p: GeoPoint, sections: tuple[ParkingSection, ...]) -> int | None:
    """Section containing the point, None if outside all sections.

    Raises AmbiguousSectionError when overlapping sections both contain it.
    """
    hits = [s.id for s in sections if point_in_ring(p, s.polygon)]
    if len(hits) > 1:
        raise AmbiguousSectionError(hits)
    return hits[0] if hits else None


def expected_gate(segments: list[Segment], segment_id: int) -> int:
    """Terminal gate of a segment (gate k for segment k)."""
    for seg in segments:
        if seg.id == segment_id:
            return seg.end_gate
    raise LookupError(f"unknown segment id {segment_id}")


def spatial_join(
    observations: list[VehicleObservation],
    campus: Campus,
    threshold_m: float = DEFAULT_SNAP_THRESHOLD_M,
    segments: list[Segment] | None = None,
) -> list[JoinedObservation]:
    """Annotate each observation with segment, section and expected gate.

    Output order preserves input order; the join is a pure function of
    (observations, campus, threshold).
    """
    if segments is None:
        segments = segment_roads(campus, snap_threshold_m=max(threshold_m, DEFAULT_SNAP_THRESHOLD_M))
    joined = []
    for obs in observations:
        snapped = snap_to_segment(obs.point, segments, threshold_m)
        if snapped is None:
            nearest = math.inf
            for seg in segments:
                _, dist, _ = project_to_polyline(obs.point, seg.polyline)
                nearest = min(nearest, dist)
            seg_id, offset, dist = None, None, nearest
            gate = None
        else:
            seg_id, offset, dist = snapped
            gate = expected_gate(segments, seg_id)
        section = point_in_section(obs.point, campus.sections)
        joined.append(
            JoinedObservation(
                observation=obs,
                segment_id=seg_id,
                offset_m=offset,
                snap_distance_m=dist,
                section_id=section,
                expected_gate=gate,
            )
        )
    return joined


def parse_observation_row(row: dict[str, str], index: int | None = None) -> VehicleObservation:
    """Build a VehicleObservation from one CSV row dict; raises SchemaError."""
    where = "" if index is None else f"row {index}: "
    missing = [c for c in OBSERVATION_COLUMNS if c not in row or row[c] is None]
    # speed may be empty but the column must exist
    if missing:
        raise SchemaError(f"{where}missing columns {missing}")
    try:
        point = GeoPoint(float(row["lon"]), float(row["lat"]))
    except ValueError as exc:
        raise SchemaError(f"{where}{exc}") from exc
    ts_raw = row["timestamp_iso8601"].strip()
    try:
        ts = datetime.fromisoformat(ts_raw.replace("Z", "+00:00"))
    except ValueError as exc:
        raise SchemaError(f"{where}bad timestamp {ts_raw!r}") from exc
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    speed_raw = (row.get("speed_kmh") or "").strip()
    speed = None
    if speed_raw:
        try:
            speed = float(speed_raw)
        except ValueError as exc:
            raise SchemaError(f"{where}bad speed {speed_raw!r}") from exc
        if speed < 0:
            raise SchemaError(f"{where}negative speed {speed}")
    key = row["vehicle_key"].strip()
    if not key:
        raise SchemaError(f"{where}empty vehicle_key")
    return VehicleObservation(vehicle_key=key, point=point, timestamp=ts, speed_kmh=speed)


def read_observations_csv(text: str) -> list[VehicleObservation]:
    """Read observations from CSV text (UTF-8, header row required)."""
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise SchemaError("empty observations CSV (header row required)")
    header = [h.strip() for h in reader.fieldnames]
    missing = [c for c in OBSERVATION_COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"observations CSV missing columns {missing}")
    return [parse_observation_row(row, index=i) for i, row in enumerate(reader)]


def write_observations_csv(observations: list[VehicleObservation]) -> str:
    """Render observations to CSV text with the canonical column order."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(OBSERVATION_COLUMNS)
    for obs in observations:
        writer.writerow(
            [
                obs.vehicle_key,
                f"{obs.point.lon:.9f}",
                f"{obs.point.lat:.9f}",
                obs.timestamp.astimezone(timezone.utc).isoformat().replace("+00:00", "Z"),
                "" if obs.speed_kmh is None else f"{obs.speed_kmh:.3f}",
            ]
        )
    return out.getvalue()


def joined_to_csv(joined: list[JoinedObservation]) -> str:
    """Joined observations as CSV (empty fields for unsnapped records)."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(
        OBSERVATION_COLUMNS
        + ["segment_id", "offset_m", "snap_distance_m", "section_id", "expected_gate"]
    )
    for j in joined:
        obs = j.observation
        writer.writerow(
            [
                obs.vehicle_key,
                f"{obs.point.lon:.9f}",
                f"{obs.point.lat:.9f}",
                obs.timestamp.astimezone(timezone.utc).isoformat().replace("+00:00", "Z"),
                "" if obs.speed_kmh is None else f"{obs.speed_kmh:.3f}",
                "" if j.segment_id is None else j.segment_id,
                "" if j.offset_m is None else f"{j.offset_m:.6f}",
                "inf" if math.isinf(j.snap_distance_m) else f"{j.snap_distance_m:.6f}",
                "" if j.section_id is None else j.section_id,
                "" if j.expected_gate is None else j.expected_gate,
            ]
        )
    return out.getvalue()


def joined_from_csv(text: str) -> list[JoinedObservation]:
    reader = csv.DictReader(io.StringIO(text))
    joined = []
    for i, row in enumerate(reader):
        obs = parse_observation_row(row, index=i)
        seg = row.get("segment_id", "").strip()
        joined.append(
            JoinedObservation(
                observation=obs,
                segment_id=int(seg) if seg else None,
                offset_m=float(row["offset_m"]) if row.get("offset_m", "").strip() else None,
                snap_distance_m=float(row.get("snap_distance_m") or "inf"),
                section_id=int(row["section_id"]) if row.get("section_id", "").strip() else None,
                expected_gate=int(row["expected_gate"]) if row.get("expected_gate", "").strip() else None,
            )
        )
    return joined

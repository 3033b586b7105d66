"""Campus geometry: road network, gates and parking sections from GeoJSON.

The sole geometry input format is a GeoJSON FeatureCollection whose features
carry a ``kind`` property in ``{road, boundary, gate, parking}``. Distances use
a spherical Earth model, adequate at campus scale.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import CampusValidationError, GeoJsonParseError, SchemaError

EARTH_RADIUS_M = 6_371_008.8

# Serialization precision for coordinates, in degrees (~0.1 mm at the equator).
COORD_PRECISION = 1e-9

# Gates must sit within this distance of the boundary polyline.
DEFAULT_SNAP_THRESHOLD_M = 30.0

# Relative tolerance for stored-vs-recomputed edge lengths.
EDGE_LENGTH_RTOL = 1e-6


@dataclass(frozen=True, order=True)
class GeoPoint:
    """A WGS84 longitude/latitude pair in degrees."""

    lon: float
    lat: float

    def __post_init__(self):
        if not (math.isfinite(self.lon) and math.isfinite(self.lat)):
            raise ValueError(f"non-finite coordinates ({self.lon}, {self.lat})")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")


@dataclass(frozen=True)
class RoadEdge:
    from_id: str
    to_id: str
    polyline: tuple[GeoPoint, ...]
    length_m: float


@dataclass(frozen=True)
class RoadNetwork:
    nodes: dict[str, GeoPoint]
    edges: tuple[RoadEdge, ...]


@dataclass(frozen=True)
class Gate:
    id: int
    location: GeoPoint
    name: str = ""


@dataclass(frozen=True)
class ParkingSection:
    id: int
    polygon: tuple[GeoPoint, ...]  # closed ring, first point == last point
    capacity: int


@dataclass(frozen=True)
class Campus:
    """Validated campus geometry, immutable after construction.

    ``gate_sections`` maps each gate id to the parking section ids it serves;
    the mapping is data from the campus file, not code.
    """

    network: RoadNetwork
    gates: tuple[Gate, ...]
    sections: tuple[ParkingSection, ...]
    boundary: tuple[GeoPoint, ...]  # closed perimeter loop on which gates sit
    declared_capacity: int
    gate_sections: dict[int, tuple[int, ...]] = field(default_factory=dict)

    def section_by_id(self, section_id: int) -> ParkingSection:
        for s in self.sections:
            if s.id == section_id:
                return s
        raise LookupError(f"unknown section id {section_id}")

    def gate_by_id(self, gate_id: int) -> Gate:
        for g in self.gates:
            if g.id == gate_id:
                return g
        raise LookupError(f"unknown gate id {gate_id}")


def haversine(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters on a sphere of radius EARTH_RADIUS_M.

    Symmetric, non-negative and zero iff the points coincide.
    """
    lat1 = math.radians(a.lat)
    lat2 = math.radians(b.lat)
    dlat = lat2 - lat1
    dlon = math.radians(b.lon - a.lon)
    s = math.sin(dlat / 2.0) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(s)))


def polyline_length(points: tuple[GeoPoint, ...] | list[GeoPoint]) -> float:
    """Sum of haversine distances over consecutive points."""
    return sum(haversine(points[i], points[i + 1]) for i in range(len(points) - 1))


def _coords_to_points(coords, feature_index: int) -> list[GeoPoint]:
    points = []
    for c in coords:
        if not isinstance(c, (list, tuple)) or len(c) < 2:
            raise SchemaError(f"feature {feature_index}: malformed coordinate {c!r}")
        try:
            points.append(GeoPoint(float(c[0]), float(c[1])))
        except ValueError as exc:
            raise SchemaError(f"feature {feature_index}: {exc}") from exc
    return points


def _node_key(p: GeoPoint) -> tuple[float, float]:
    return (round(p.lon / COORD_PRECISION), round(p.lat / COORD_PRECISION))


def load_campus(document: bytes | str) -> Campus:
    """Parse and validate a campus GeoJSON document.

    Raises GeoJsonParseError on malformed JSON (with byte offset), SchemaError
    when a feature is missing its ``kind`` or required properties, and
    CampusValidationError listing every violated invariant.
    """
    if isinstance(document, bytes):
        document = document.decode("utf-8")
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise GeoJsonParseError(exc.msg, offset=exc.pos) from exc

    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise SchemaError("document is not a GeoJSON FeatureCollection")

    boundary: tuple[GeoPoint, ...] | None = None
    gates: list[Gate] = []
    sections: list[ParkingSection] = []
    gate_sections: dict[int, tuple[int, ...]] = {}
    road_lines: list[list[GeoPoint]] = []

    for i, feature in enumerate(doc.get("features", [])):
        props = feature.get("properties") or {}
        kind = props.get("kind")
        if kind is None:
            raise SchemaError(f"feature {i}: missing 'kind' property")
        geom = feature.get("geometry") or {}
        coords = geom.get("coordinates")

        if kind == "road":
            if geom.get("type") != "LineString":
                raise SchemaError(f"feature {i}: road must be a LineString")
            road_lines.append(_coords_to_points(coords, i))
        elif kind == "boundary":
            if geom.get("type") != "LineString":
                raise SchemaError(f"feature {i}: boundary must be a LineString")
            if boundary is not None:
                raise SchemaError(f"feature {i}: more than one boundary feature")
            boundary = tuple(_coords_to_points(coords, i))
        elif kind == "gate":
            if geom.get("type") != "Point":
                raise SchemaError(f"feature {i}: gate must be a Point")
            if "gate_id" not in props:
                raise SchemaError(f"feature {i}: gate missing 'gate_id'")
            point = _coords_to_points([coords], i)[0]
            gate_id = int(props["gate_id"])
            gates.append(Gate(id=gate_id, location=point, name=str(props.get("name", ""))))
            served = props.get("section_ids", props.get("section_id"))
            if served is not None:
                if isinstance(served, (int, float)):
                    served = [int(served)]
                gate_sections[gate_id] = tuple(int(s) for s in served)
        elif kind == "parking":
            if geom.get("type") != "Polygon":
                raise SchemaError(f"feature {i}: parking must be a Polygon")
            if "section_id" not in props or "capacity" not in props:
                raise SchemaError(f"feature {i}: parking missing 'section_id' or 'capacity'")
            ring = tuple(_coords_to_points(coords[0], i))
            sections.append(
                ParkingSection(id=int(props["section_id"]), polygon=ring, capacity=int(props["capacity"]))
            )
        else:
            raise SchemaError(f"feature {i}: unknown kind {kind!r}")

    # Build the road network from road features plus the boundary itself (the
    # perimeter is a road). Node ids assigned by first appearance.
    nodes: dict[str, GeoPoint] = {}
    key_to_id: dict[tuple[float, float], str] = {}

    def node_id(p: GeoPoint) -> str:
        key = _node_key(p)
        if key not in key_to_id:
            nid = f"n{len(key_to_id)}"
            key_to_id[key] = nid
            nodes[nid] = p
        return key_to_id[key]

    edges = []
    lines = list(road_lines)
    if boundary is not None:
        lines.append(list(boundary))
    for line in lines:
        if len(line) < 2:
            continue
        edges.append(
            RoadEdge(
                from_id=node_id(line[0]),
                to_id=node_id(line[-1]),
                polyline=tuple(line),
                length_m=polyline_length(line),
            )
        )

    fc_props = doc.get("properties") or {}
    declared = fc_props.get("total_capacity")
    if declared is None:
        declared = sum(s.capacity for s in sections)

    campus = Campus(
        network=RoadNetwork(nodes=nodes, edges=tuple(edges)),
        gates=tuple(sorted(gates, key=lambda g: g.id)),
        sections=tuple(sorted(sections, key=lambda s: s.id)),
        boundary=boundary if boundary is not None else tuple(),
        declared_capacity=int(declared),
        gate_sections=gate_sections,
    )
    violations = validate_campus(campus)
    if violations:
        raise CampusValidationError(violations)
    return campus


def validate_campus(c: Campus, snap_threshold_m: float = DEFAULT_SNAP_THRESHOLD_M) -> list[str]:
    """Return a list of invariant violations; empty iff the campus is valid."""
    violations: list[str] = []

    if not c.boundary:
        violations.append("no boundary feature")
    else:
        if len(c.boundary) < 4:
            violations.append("boundary has fewer than 4 points")
        if c.boundary[0] != c.boundary[-1]:
            violations.append("boundary ring not closed (first point != last point)")

    ids = [g.id for g in c.gates]
    if len(set(ids)) != len(ids) or sorted(ids) != list(range(1, len(ids) + 1)):
        violations.append(f"gate ids not unique and contiguous from 1: {sorted(ids)}")

    for s in c.sections:
        if len(s.polygon) < 4:
            violations.append(f"section {s.id}: ring has fewer than 4 points")
        if s.polygon and s.polygon[0] != s.polygon[-1]:
            violations.append(f"section {s.id}: ring not closed")
        if s.capacity <= 0:
            violations.append(f"section {s.id}: capacity {s.capacity} not positive")

    total = sum(s.capacity for s in c.sections)
    if total != c.declared_capacity:
        violations.append(
            f"capacity sum {total} does not equal declared total {c.declared_capacity}"
        )

    for edge in c.network.edges:
        if edge.from_id not in c.network.nodes or edge.to_id not in c.network.nodes:
            violations.append(f"edge {edge.from_id}->{edge.to_id}: endpoint not in nodes")
        recomputed = polyline_length(edge.polyline)
        if recomputed > 0 and abs(recomputed - edge.length_m) > EDGE_LENGTH_RTOL * recomputed:
            violations.append(
                f"edge {edge.from_id}->{edge.to_id}: stored length {edge.length_m:.6f}"
                f" != recomputed {recomputed:.6f}"
            )

    if c.boundary and len(c.boundary) >= 2:
        from .spatial import project_to_polyline  # local import to avoid a cycle

        for g in c.gates:
            _, dist, _ = project_to_polyline(g.location, c.boundary)
            if dist > snap_threshold_m:
                violations.append(
                    f"gate {g.id} is {dist:.1f} m from the boundary"
                    f" (threshold {snap_threshold_m} m)"
                )

    known_sections = {s.id for s in c.sections}
    known_gates = {g.id for g in c.gates}
    for gate_id, served in c.gate_sections.items():
        if gate_id not in known_gates:
            violations.append(f"gate-section mapping references unknown gate {gate_id}")
        for sid in served:
            if sid not in known_sections:
                violations.append(
                    f"gate {gate_id} mapped to unknown section {sid}"
                )

    return violations


def serialize_campus(c: Campus) -> str:
    """Render a Campus back to GeoJSON at COORD_PRECISION.

    load_campus(serialize_campus(load_campus(doc))) round-trips up to
    coordinate precision.
    """

    def coord(p: GeoPoint) -> list[float]:
        return [round(p.lon, 9), round(p.lat, 9)]

    features = []
    # Roads: every network edge except the boundary itself.
    boundary_coords = [coord(p) for p in c.boundary]
    for edge in c.network.edges:
        line = [coord(p) for p in edge.polyline]
        if line == boundary_coords:
            continue
        features.append(
            {
                "type": "Feature",
                "properties": {"kind": "road"},
                "geometry": {"type": "LineString", "coordinates": line},
            }
        )
    if c.boundary:
        features.append(
            {
                "type": "Feature",
                "properties": {"kind": "boundary"},
                "geometry": {"type": "LineString", "coordinates": boundary_coords},
            }
        )
    for g in c.gates:
        props = {"kind": "gate", "gate_id": g.id, "name": g.name}
        if g.id in c.gate_sections:
            props["section_ids"] = list(c.gate_sections[g.id])
        features.append(
            {
                "type": "Feature",
                "properties": props,
                "geometry": {"type": "Point", "coordinates": coord(g.location)},
            }
        )
    for s in c.sections:
        features.append(
            {
                "type": "Feature",
                "properties": {"kind": "parking", "section_id": s.id, "capacity": s.capacity},
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[coord(p) for p in s.polygon]],
                },
            }
        )
    doc = {
        "type": "FeatureCollection",
        "properties": {"total_capacity": c.declared_capacity},
        "features": features,
    }
    return json.dumps(doc, indent=2, sort_keys=True)

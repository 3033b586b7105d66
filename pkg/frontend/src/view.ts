// Pure view-model construction: AppState in, renderable records out. No
// fetches, no clocks; every displayed number is lifted from a service
// response (the client computes layout, never predictions).

import type { AppState } from "./state.js";
import type { OccupancyState, SectionGeometry } from "./types.js";

export const STATE_COLORS: Record<OccupancyState, string> = {
  low: "#2e8b57", // green
  moderate: "#e8a013", // amber
  high: "#c2362b", // red
};

export const REFRESH_INTERVAL_MS = 30_000;

export interface SectionView {
  sectionId: number;
  points: string; // SVG polygon points in view coordinates
  capacity: number;
  occupied: number | null;
  ratePct: string | null;
  state: OccupancyState | null;
  color: string;
  pulse: boolean;
}

export interface CardView {
  sectionId: number;
  vacant: number;
  availabilityPct: string;
  state: OccupancyState;
  color: string;
  fingerprint: string;
}

export interface FormView {
  gates: number[];
  gateId: number | null;
  time: string | null;
  submitEnabled: boolean;
  inlineError: string | null;
  retryable: boolean;
  horizonLabel: string | null;
}

export interface ViewModel {
  placeholder: string | null; // shown instead of the map when there is no data
  mapSections: SectionView[];
  banner: string | null;
  legend: { state: OccupancyState; color: string }[];
  refreshSeconds: number;
  card: CardView | null;
  form: FormView;
}

interface Projection {
  x(lon: number): number;
  y(lat: number): number;
}

const VIEW_SIZE = 600;

function projectionFor(sections: SectionGeometry[]): Projection {
  const lons = sections.flatMap((s) => s.polygon.map((p) => p[0]));
  const lats = sections.flatMap((s) => s.polygon.map((p) => p[1]));
  const lonMin = Math.min(...lons);
  const lonMax = Math.max(...lons);
  const latMin = Math.min(...lats);
  const latMax = Math.max(...lats);
  const span = Math.max(lonMax - lonMin, latMax - latMin) || 1;
  const pad = 0.08 * VIEW_SIZE;
  const scale = (VIEW_SIZE - 2 * pad) / span;
  return {
    x: (lon) => pad + (lon - lonMin) * scale,
    // SVG y grows downward; latitude grows upward
    y: (lat) => VIEW_SIZE - pad - (lat - latMin) * scale,
  };
}

export function timeWithinHorizon(time: string | null, state: AppState): boolean {
  if (time === null || state.health === null) return false;
  const hour = Number.parseInt(time.split(":")[0] ?? "", 10);
  if (Number.isNaN(hour)) return false;
  const { start_hour, end_hour } = state.health.horizon;
  return hour >= start_hour && hour <= end_hour;
}

export function buildViewModel(state: AppState): ViewModel {
  const gates = state.sections
    ? [...new Set(state.sections.sections.flatMap((s) => s.gate_ids))].sort((a, b) => a - b)
    : [];

  const occupancyById = new Map(
    (state.snapshot?.sections ?? []).map((s) => [s.section_id, s]),
  );

  let mapSections: SectionView[] = [];
  if (state.sections && state.sections.sections.length > 0) {
    const project = projectionFor(state.sections.sections);
    mapSections = state.sections.sections.map((geom) => {
      const occ = occupancyById.get(geom.section_id) ?? null;
      return {
        sectionId: geom.section_id,
        points: geom.polygon
          .map(([lon, lat]) => `${project.x(lon).toFixed(1)},${project.y(lat).toFixed(1)}`)
          .join(" "),
        capacity: geom.capacity,
        occupied: occ ? occ.occupied : null,
        ratePct: occ ? `${(occ.occupancy_rate * 100).toFixed(1)}%` : null,
        state: occ ? occ.state : null,
        color: occ ? STATE_COLORS[occ.state] : "#9aa0a6",
        pulse: state.prediction?.recommended_section_id === geom.section_id,
      };
    });
  }

  let placeholder: string | null = null;
  if (!state.sections) {
    placeholder = state.connected ? "loading campus…" : "service unreachable";
  } else if (!state.snapshot) {
    placeholder = "no data";
  }

  const banner =
    !state.connected && state.snapshot
      ? `stale data: showing the snapshot from ${state.snapshot.timestamp}; retrying…`
      : null;

  const card: CardView | null = state.prediction
    ? {
        sectionId: state.prediction.recommended_section_id,
        vacant: state.prediction.predicted_vacant,
        availabilityPct: `${(state.prediction.predicted_availability * 100).toFixed(1)}%`,
        state: state.prediction.occupancy_state,
        color: STATE_COLORS[state.prediction.occupancy_state],
        fingerprint: state.prediction.model_fingerprint.slice(0, 12),
      }
    : null;

  const submitEnabled =
    state.query.gateId !== null &&
    gates.includes(state.query.gateId) &&
    timeWithinHorizon(state.query.time, state) &&
    !state.predictionInFlight;

  const horizon = state.health?.horizon ?? null;
  const outOfHorizon =
    state.query.time !== null && horizon !== null && !timeWithinHorizon(state.query.time, state);

  return {
    placeholder,
    mapSections,
    banner,
    legend: (["low", "moderate", "high"] as OccupancyState[]).map((s) => ({
      state: s,
      color: STATE_COLORS[s],
    })),
    refreshSeconds: REFRESH_INTERVAL_MS / 1000,
    card,
    form: {
      gates,
      gateId: state.query.gateId,
      time: state.query.time,
      submitEnabled,
      inlineError:
        state.predictionError ??
        (outOfHorizon && horizon
          ? `arrival must be between ${String(horizon.start_hour).padStart(2, "0")}:00 and ${String(horizon.end_hour).padStart(2, "0")}:00`
          : null),
      retryable: state.predictionRetryable,
      horizonLabel: horizon
        ? `${String(horizon.start_hour).padStart(2, "0")}:00–${String(horizon.end_hour).padStart(2, "0")}:00`
        : null,
    },
  };
}

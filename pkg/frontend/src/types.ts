// Shapes of the availability service's JSON responses. Every number shown in
// the UI originates from one of these payloads.

export type OccupancyState = "low" | "moderate" | "high";

export interface SectionOccupancy {
  section_id: number;
  capacity: number;
  occupied: number;
  occupancy_rate: number;
  state: OccupancyState;
}

export interface OccupancySnapshot {
  timestamp: string;
  sections: SectionOccupancy[];
}

export interface SectionGeometry {
  section_id: number;
  capacity: number;
  polygon: [number, number][]; // [lon, lat] ring, closed
  gate_ids: number[];
}

export interface SectionsResponse {
  total_capacity: number;
  sections: SectionGeometry[];
}

export interface Horizon {
  start_hour: number;
  end_hour: number;
}

export interface Health {
  status: string;
  model_fingerprint: string;
  layout_hash: string;
  horizon: Horizon;
}

export interface CandidatePrediction {
  section_id: number;
  predicted_availability: number;
  predicted_vacant: number;
  occupancy_state: OccupancyState;
}

export interface Prediction {
  recommended_section_id: number;
  predicted_availability: number;
  predicted_vacant: number;
  occupancy_state: OccupancyState;
  model_fingerprint: string;
  candidates: CandidatePrediction[];
}

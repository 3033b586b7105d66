// Application state machine. The state is a pure function of the event
// history: reducers never read clocks or perform I/O, which is what makes
// snapshot-replay tests reproduce any screen.

import type { Health, OccupancySnapshot, Prediction, SectionsResponse } from "./types.js";

export interface WhatIfQuery {
  gateId: number | null;
  time: string | null; // "HH:MM" picker value
}

export interface AppState {
  health: Health | null;
  sections: SectionsResponse | null;
  snapshot: OccupancySnapshot | null;
  connected: boolean;
  query: WhatIfQuery;
  prediction: Prediction | null;
  predictionError: string | null;
  predictionRetryable: boolean;
  predictionInFlight: boolean;
}

export const initialState: AppState = {
  health: null,
  sections: null,
  snapshot: null,
  connected: true,
  query: { gateId: null, time: null },
  prediction: null,
  predictionError: null,
  predictionRetryable: false,
  predictionInFlight: false,
};

export type AppEvent =
  | { kind: "bootstrap"; health: Health; sections: SectionsResponse }
  | { kind: "snapshot"; snapshot: OccupancySnapshot }
  | { kind: "snapshot-failed" }
  | { kind: "query-gate"; gateId: number | null }
  | { kind: "query-time"; time: string | null }
  | { kind: "predict-sent" }
  | { kind: "prediction"; prediction: Prediction }
  | { kind: "predict-rejected"; message: string }
  | { kind: "predict-unavailable"; message: string };

export function reduce(state: AppState, event: AppEvent): AppState {
  switch (event.kind) {
    case "bootstrap":
      return { ...state, health: event.health, sections: event.sections };
    case "snapshot":
      // a fresh snapshot also clears any stale-data banner
      return { ...state, snapshot: event.snapshot, connected: true };
    case "snapshot-failed":
      // keep the last snapshot on screen, just flag connectivity
      return { ...state, connected: false };
    case "query-gate":
      return { ...state, query: { ...state.query, gateId: event.gateId } };
    case "query-time":
      return { ...state, query: { ...state.query, time: event.time } };
    case "predict-sent":
      return { ...state, predictionInFlight: true, predictionError: null, predictionRetryable: false };
    case "prediction":
      return {
        ...state,
        prediction: event.prediction,
        predictionError: null,
        predictionRetryable: false,
        predictionInFlight: false,
      };
    case "predict-rejected":
      // validation problem: show inline, keep the previous card untouched
      return {
        ...state,
        predictionError: event.message,
        predictionRetryable: false,
        predictionInFlight: false,
      };
    case "predict-unavailable":
      return {
        ...state,
        predictionError: event.message,
        predictionRetryable: true,
        predictionInFlight: false,
      };
  }
}

export function replay(events: AppEvent[], from: AppState = initialState): AppState {
  return events.reduce(reduce, from);
}

// Wiring: polling loop, form events, dispatch. The service base URL comes
// from the ?service= query parameter, defaulting to the page origin.

import { ApiClient, ApiError } from "./api.js";
import { initialState, reduce, type AppEvent, type AppState } from "./state.js";
import { buildViewModel, REFRESH_INTERVAL_MS } from "./view.js";
import { render, type Handlers } from "./render.js";

const params = new URLSearchParams(window.location.search);
const api = new ApiClient(params.get("service") ?? window.location.origin);
const root = document.getElementById("app");
if (!root) throw new Error("missing #app element");

let state: AppState = initialState;

const handlers: Handlers = {
  onGateChange: (gateId) => dispatch({ kind: "query-gate", gateId }),
  onTimeChange: (time) => dispatch({ kind: "query-time", time }),
  onSubmit: submitWhatIf,
};

function dispatch(event: AppEvent): void {
  state = reduce(state, event);
  render(buildViewModel(state), root as HTMLElement, handlers);
}

async function pollOccupancy(): Promise<void> {
  try {
    dispatch({ kind: "snapshot", snapshot: await api.occupancy() });
  } catch (error) {
    if ((error as Error).name !== "AbortError") {
      dispatch({ kind: "snapshot-failed" });
    }
  }
}

function arrivalIso(time: string): string {
  // what-if queries are for today at the picked local time
  const now = new Date();
  const [hours, minutes] = time.split(":").map(Number);
  now.setHours(hours ?? 0, minutes ?? 0, 0, 0);
  return now.toISOString();
}

async function submitWhatIf(): Promise<void> {
  const { gateId, time } = state.query;
  if (gateId === null || time === null) return;
  dispatch({ kind: "predict-sent" });
  try {
    dispatch({ kind: "prediction", prediction: await api.predict(gateId, arrivalIso(time)) });
  } catch (error) {
    if ((error as Error).name === "AbortError") return;
    if (error instanceof ApiError && error.status === 422) {
      dispatch({ kind: "predict-rejected", message: error.detail });
    } else {
      dispatch({ kind: "predict-unavailable", message: "prediction unavailable; try again" });
    }
  }
}

async function bootstrap(): Promise<void> {
  try {
    const [health, sections] = await Promise.all([api.health(), api.sections()]);
    dispatch({ kind: "bootstrap", health, sections });
  } catch {
    dispatch({ kind: "snapshot-failed" });
  }
  await pollOccupancy();
  setInterval(pollOccupancy, REFRESH_INTERVAL_MS);
}

void bootstrap();

// Typed fetch client. In-flight requests of the same kind are aborted when a
// newer one starts, so responses never apply out of order.

import type { Health, OccupancySnapshot, Prediction, SectionsResponse } from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

function detailText(body: unknown): string {
  if (body && typeof body === "object" && "detail" in body) {
    const detail = (body as { detail: unknown }).detail;
    return typeof detail === "string" ? detail : JSON.stringify(detail);
  }
  return JSON.stringify(body);
}

export class ApiClient {
  private controllers = new Map<string, AbortController>();

  constructor(readonly baseUrl: string) {}

  private async request<T>(kind: string, path: string, init?: RequestInit): Promise<T> {
    this.controllers.get(kind)?.abort();
    const controller = new AbortController();
    this.controllers.set(kind, controller);
    const response = await fetch(`${this.baseUrl}${path}`, {
      ...init,
      signal: controller.signal,
    });
    const body: unknown = await response.json();
    if (!response.ok) {
      throw new ApiError(response.status, detailText(body));
    }
    return body as T;
  }

  health(): Promise<Health> {
    return this.request("health", "/health");
  }

  sections(): Promise<SectionsResponse> {
    return this.request("sections", "/sections");
  }

  occupancy(): Promise<OccupancySnapshot> {
    return this.request("occupancy", "/occupancy");
  }

  predict(gateId: number, arrivalTime: string): Promise<Prediction> {
    return this.request("predict", "/predict", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ gate_id: gateId, arrival_time: arrivalTime }),
    });
  }
}

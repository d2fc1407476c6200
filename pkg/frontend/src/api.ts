/**
 * REST client for the control plane.  One class, one method per endpoint;
 * errors carry the server's status code and diagnostic so the UI can show
 * them inline (a cap rejection must not clear the draft).
 */

import type {
  CorrectionRequest,
  CorrectionSummary,
  CreateSessionRequest,
  CurveRow,
  HeatmapGrid,
  Snapshot,
} from "./protocol.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`${status}: ${detail}`);
  }
}

type FetchLike = typeof fetch;

export class CoachApi {
  constructor(
    public baseUrl: string,
    private fetchImpl: FetchLike = fetch,
  ) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const res = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? {} : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!res.ok) {
      let detail = res.statusText;
      try {
        const parsed = (await res.json()) as { detail?: string };
        if (parsed.detail) detail = parsed.detail;
      } catch {
        // non-JSON error body: keep the status text
      }
      throw new ApiError(res.status, detail);
    }
    return (await res.json()) as T;
  }

  createSession(spec: CreateSessionRequest) {
    return this.request<{ session_id: string; phase: string }>(
      "POST",
      "/sessions",
      spec,
    );
  }

  sessionState(sid: string) {
    return this.request<Snapshot>("GET", `/sessions/${sid}`);
  }

  pause(sid: string, atStep?: number) {
    return this.request<{ phase: string; step: number }>(
      "POST",
      `/sessions/${sid}/pause`,
      atStep === undefined ? undefined : { at_step: atStep },
    );
  }

  resume(sid: string) {
    return this.request<{ phase: string; step: number }>(
      "POST",
      `/sessions/${sid}/resume`,
    );
  }

  submitCorrection(sid: string, corr: CorrectionRequest) {
    return this.request<CorrectionSummary>(
      "POST",
      `/sessions/${sid}/corrections`,
      corr,
    );
  }

  curve(sid: string) {
    return this.request<{ rows: CurveRow[]; columns: string[] }>(
      "GET",
      `/sessions/${sid}/curve`,
    );
  }

  corrections(sid: string) {
    return this.request<{ corrections: CorrectionSummary[] }>(
      "GET",
      `/sessions/${sid}/corrections`,
    );
  }

  /**
   * Quality field sampled on an (x, y) grid by the service.  The remaining
   * dims are held at the supplied slice values (service defaults to the
   * probe's current pose for any omitted one).
   */
  heatmap(
    sid: string,
    opts: {
      nx?: number;
      ny?: number;
      roll?: number;
      pitch?: number;
      yaw?: number;
      fz?: number;
    } = {},
  ) {
    const params = new URLSearchParams();
    for (const [k, v] of Object.entries(opts)) {
      if (v !== undefined) params.set(k, String(v));
    }
    const qs = params.toString();
    return this.request<HeatmapGrid>(
      "GET",
      `/sessions/${sid}/heatmap${qs ? "?" + qs : ""}`,
    );
  }
}

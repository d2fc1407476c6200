/**
 * Wire types for the coaching control plane.
 *
 * Everything here mirrors the service's JSON payloads one to one; numeric
 * fields are SI units (meters, radians, newtons) exactly as streamed.  The
 * UI never transforms values beyond scaling to pixels.
 */

export const PROTOCOL_VERSION = 1;

/** Probe pose: [x, y, roll, pitch, yaw, fz]. */
export type Pose = number[];

export type Phase = "running" | "paused" | "ingesting" | "finished";

export interface TrajectoryWindow {
  poses: Pose[];
  qualities: number[];
  start_step: number;
}

/** One learning-curve row: [step, episode_return, normalized_ma]. */
export type CurveRow = [number, number, number];

export interface CorrectionSummary {
  step: number;
  anchor: number;
  delta: number[];
  window: number;
  h: number;
  weights: number[];
  weight_diagnostic: unknown;
  transitions: number;
  kl_before: number | null;
  kl_after: number | null;
  coached_updates: number;
  handoff_pose: number[];
}

export interface Snapshot {
  v: number;
  type: "snapshot";
  seq: number;
  session_id: string;
  phase: Phase;
  step: number;
  episode: number;
  total_steps: number;
  phantom: string;
  pose: Pose;
  trajectory: TrajectoryWindow;
  preferred: Pose[] | null;
  curve: CurveRow[];
  corrections: CorrectionSummary[];
  weights: number[];
  beta: number;
  caps: number[];
}

export interface StepEvent {
  v: number;
  seq: number;
  type: "step";
  step: number;
  episode: number;
  pose: Pose;
  quality: number;
  r_u: number;
  reward: number;
  done: boolean;
  correction?: { step: number; anchor: number; h: number; weights: number[] };
  curve?: CurveRow;
}

export interface PhaseEvent {
  v: number;
  seq: number;
  type: "paused" | "resumed" | "ingesting" | "finished";
  step: number;
}

export interface HeartbeatEvent {
  v: number;
  seq: number;
  type: "heartbeat";
  phase: Phase;
  step: number;
}

export interface ErrorEvent {
  v: number;
  seq: number;
  type: "error";
  message: string;
  step: number;
}

export type CorrectionEvent = CorrectionSummary & {
  v: number;
  seq: number;
  type: "correction";
  preferred: Pose[];
};

export type StreamEvent =
  | Snapshot
  | StepEvent
  | PhaseEvent
  | HeartbeatEvent
  | ErrorEvent
  | CorrectionEvent;

export interface HeatmapGrid {
  x: number[];
  y: number[];
  /** quality[iy][ix], integer 0..5, row iy corresponds to y[iy]. */
  quality: number[][];
  slice: Pose;
}

export interface CreateSessionRequest {
  session_id?: string;
  phantom?: string;
  total_steps?: number;
  seed?: number;
  start_paused?: boolean;
  agent?: Record<string, unknown>;
  coach?: Record<string, unknown>;
  loop?: Record<string, unknown>;
  env?: Record<string, unknown>;
}

export interface CorrectionRequest {
  anchor: number;
  delta: number[];
}

export function parseEvent(text: string): StreamEvent {
  const obj = JSON.parse(text) as StreamEvent;
  if (typeof obj.v !== "number" || typeof obj.type !== "string") {
    throw new Error("malformed stream frame");
  }
  if (obj.v !== PROTOCOL_VERSION) {
    throw new Error(`protocol version ${obj.v} unsupported`);
  }
  return obj;
}

/** Component-wise clamp of a correction delta into the service caps. */
export function clampToCaps(delta: number[], caps: number[]): number[] {
  return delta.map((d, i) => {
    const cap = caps[i] ?? 0;
    return Math.min(cap, Math.max(-cap, d));
  });
}

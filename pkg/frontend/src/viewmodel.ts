/**
 * Pure session view state: everything the renderer needs, folded from the
 * stream with no DOM involved.  All numeric values are kept exactly as
 * streamed (SI units); pixel mapping happens at draw time only.
 *
 * Guards mirrored from the server protocol:
 *   - a correction draft can only be submitted in paused phase,
 *   - at most one correction request is in flight,
 *   - drafts are clamped to the service caps before leaving the client,
 *   - a zero draft cannot be submitted.
 */

import {
  clampToCaps,
  type CorrectionSummary,
  type CurveRow,
  type Phase,
  type Pose,
  type Snapshot,
  type StreamEvent,
} from "./protocol.js";
import type { ConnState } from "./stream.js";

export interface CorrectionDraft {
  anchor: number;
  /** [dx, dy, droll, dpitch, dyaw, dfz] in SI units, pre-clamp. */
  delta: number[];
}

export interface ViewModel {
  connection: ConnState;
  sessionId: string;
  phase: Phase;
  step: number;
  episode: number;
  totalSteps: number;
  phantom: string;
  pose: Pose;
  /** Current-episode polyline Pi^r. */
  trajectory: Pose[];
  qualities: number[];
  trajectoryStartStep: number;
  /** Preferred trajectory Pi^c, shown only after a correction acknowledgment. */
  preferred: Pose[] | null;
  curve: CurveRow[];
  corrections: CorrectionSummary[];
  weights: number[];
  beta: number;
  caps: number[];
  draft: CorrectionDraft;
  inflight: boolean;
  /** Inline diagnostic from the last rejected submit; cleared on success. */
  submitError: string | null;
  lastError: string | null;
}

export function emptyViewModel(): ViewModel {
  return {
    connection: "connecting",
    sessionId: "",
    phase: "running",
    step: 0,
    episode: 0,
    totalSteps: 0,
    phantom: "",
    pose: [0, 0, 0, 0, 0, 0],
    trajectory: [],
    qualities: [],
    trajectoryStartStep: 0,
    preferred: null,
    curve: [],
    corrections: [],
    weights: [1, 0, 0],
    beta: 0,
    caps: [0, 0, 0, 0, 0, 0],
    draft: { anchor: 0, delta: [0, 0, 0, 0, 0, 0] },
    inflight: false,
    submitError: null,
    lastError: null,
  };
}

export function applySnapshot(vm: ViewModel, snap: Snapshot): ViewModel {
  return {
    ...vm,
    sessionId: snap.session_id,
    phase: snap.phase,
    step: snap.step,
    episode: snap.episode,
    totalSteps: snap.total_steps,
    phantom: snap.phantom,
    pose: snap.pose,
    trajectory: [...snap.trajectory.poses],
    qualities: [...snap.trajectory.qualities],
    trajectoryStartStep: snap.trajectory.start_step,
    preferred: snap.preferred,
    curve: [...snap.curve],
    corrections: [...snap.corrections],
    weights: snap.weights,
    beta: snap.beta,
    caps: snap.caps,
    draft: clampDraft(vm.draft, snap.caps),
  };
}

export function applyEvent(vm: ViewModel, ev: StreamEvent): ViewModel {
  switch (ev.type) {
    case "snapshot":
      return applySnapshot(vm, ev);
    case "step": {
      const newEpisode = ev.episode !== vm.episode;
      const trajectory = newEpisode ? [] : [...vm.trajectory];
      const qualities = newEpisode ? [] : [...vm.qualities];
      trajectory.push(ev.pose);
      qualities.push(ev.quality);
      return {
        ...vm,
        step: ev.step,
        episode: ev.episode,
        pose: ev.pose,
        trajectory,
        qualities,
        trajectoryStartStep: newEpisode
          ? ev.step - 1
          : vm.trajectoryStartStep,
        curve: ev.curve ? [...vm.curve, ev.curve] : vm.curve,
      };
    }
    case "paused":
      return { ...vm, phase: "paused", step: ev.step };
    case "resumed":
      return { ...vm, phase: "running", step: ev.step };
    case "ingesting":
      return { ...vm, phase: "ingesting", step: ev.step };
    case "finished":
      return { ...vm, phase: "finished", step: ev.step };
    case "heartbeat":
      return { ...vm, phase: ev.phase, step: ev.step };
    case "error":
      return { ...vm, phase: "finished", lastError: ev.message };
    case "correction": {
      const { v: _v, seq: _seq, type: _t, preferred, ...summary } = ev;
      return {
        ...vm,
        preferred,
        corrections: [...vm.corrections, summary as CorrectionSummary],
        weights: summary.weights,
      };
    }
  }
}

// -- correction drafting -------------------------------------------------------

export function clampDraft(
  draft: CorrectionDraft,
  caps: number[],
): CorrectionDraft {
  return { anchor: draft.anchor, delta: clampToCaps(draft.delta, caps) };
}

export function setDraftComponent(
  vm: ViewModel,
  index: number,
  value: number,
): ViewModel {
  const delta = [...vm.draft.delta];
  delta[index] = value;
  return {
    ...vm,
    draft: clampDraft({ ...vm.draft, delta }, vm.caps),
    submitError: null,
  };
}

/** Drag gesture: plane displacement in meters, clamped like everything else. */
export function setDraftDrag(vm: ViewModel, dx: number, dy: number): ViewModel {
  const delta = [...vm.draft.delta];
  delta[0] = dx;
  delta[1] = dy;
  return {
    ...vm,
    draft: clampDraft({ ...vm.draft, delta }, vm.caps),
    submitError: null,
  };
}

export function setDraftAnchor(vm: ViewModel, anchor: number): ViewModel {
  const bounded = Math.max(
    0,
    Math.min(Math.max(vm.trajectory.length - 1, 0), Math.round(anchor)),
  );
  return { ...vm, draft: { ...vm.draft, anchor: bounded }, submitError: null };
}

export function clearDraft(vm: ViewModel): ViewModel {
  return {
    ...vm,
    draft: { anchor: vm.draft.anchor, delta: [0, 0, 0, 0, 0, 0] },
    submitError: null,
  };
}

export function draftIsZero(vm: ViewModel): boolean {
  return vm.draft.delta.every((d) => d === 0);
}

/**
 * The submit guard.  Mirrors the server protocol (paused only) plus client
 * rules: a connected stream, an anchor inside the recorded window, a nonzero
 * vector, and no other correction in flight.
 */
export function canSubmit(vm: ViewModel): boolean {
  return (
    vm.connection === "live" &&
    vm.phase === "paused" &&
    !vm.inflight &&
    vm.trajectory.length > 0 &&
    vm.draft.anchor < vm.trajectory.length &&
    !draftIsZero(vm)
  );
}

export function beginSubmit(vm: ViewModel): ViewModel {
  if (!canSubmit(vm)) {
    throw new Error("submit guard violated");
  }
  return { ...vm, inflight: true, submitError: null };
}

/** Acknowledged: overlay Pi^c, log the summary, clear the draft. */
export function ackSubmit(
  vm: ViewModel,
  summary: CorrectionSummary,
  preferred: Pose[] | null,
): ViewModel {
  const already = vm.corrections.some((c) => c.step === summary.step);
  return {
    ...vm,
    inflight: false,
    submitError: null,
    preferred: preferred ?? vm.preferred,
    corrections: already ? vm.corrections : [...vm.corrections, summary],
    weights: summary.weights,
    draft: { anchor: vm.draft.anchor, delta: [0, 0, 0, 0, 0, 0] },
  };
}

/** Rejected: keep the draft so the coach can adjust and retry. */
export function failSubmit(vm: ViewModel, message: string): ViewModel {
  return { ...vm, inflight: false, submitError: message };
}

export function setConnection(vm: ViewModel, state: ConnState): ViewModel {
  return { ...vm, connection: state };
}

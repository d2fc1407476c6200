"""Live coaching control plane.

One training worker thread per session; HTTP control commands travel
through a queue the worker drains at step boundaries, so the environment
transition is always atomic: pause lands between steps, corrections are
ingested only while paused, and resume continues with the exact step
counter and episode state present at pause.

Stream protocol (WebSocket, ordered text frames): every message is a JSON
object with "v" (schema version, currently 1), "type", and "seq". A new
connection first receives a full "snapshot", then live events with
strictly increasing seq. Message types: snapshot, step, paused, resumed,
ingesting, correction, heartbeat, finished.
"""
from __future__ import annotations

import asyncio
import json
import queue
import threading
import time
import uuid
from contextlib import asynccontextmanager

import numpy as np
from fastapi import FastAPI, HTTPException, Query, WebSocket, WebSocketDisconnect
from pydantic import BaseModel, Field

from .coaching import CoachConfig, CoachingEngine
from .env import ScanEnv
from .harness import resolve_phantom
from .minjerk import Correction
from .oracle import DEFAULT_CAPS
from .sac import SacAgent, SacConfig
from .training import LoopConfig, TrainingLoop

PROTOCOL_VERSION = 1
HEARTBEAT_PERIOD = 0.1   # seconds between heartbeats while paused


def clean(obj):
    """Make numpy-bearing structures JSON-serializable."""
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, dict):
        return {k: clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    return obj


class CreateSession(BaseModel):
    session_id: str | None = None
    phantom: str = "P0"
    total_steps: int = Field(default=40_000, gt=0)
    seed: int = 0
    start_paused: bool = False
    agent: dict = Field(default_factory=dict)
    coach: dict = Field(default_factory=dict)
    loop: dict = Field(default_factory=dict)
    env: dict = Field(default_factory=dict)


class CorrectionIn(BaseModel):
    anchor: int
    delta: list[float]


class PauseIn(BaseModel):
    at_step: int | None = None


class _Command:
    __slots__ = ("op", "args", "done", "result", "error")

    def __init__(self, op, args=None):
        self.op = op
        self.args = args or {}
        self.done = threading.Event()
        self.result = None
        self.error = None   # (status_code, message)


class Subscriber:
    def __init__(self, loop: asyncio.AbstractEventLoop):
        self.loop = loop
        self.queue: asyncio.Queue = asyncio.Queue()

    def push(self, text: str) -> None:
        self.loop.call_soon_threadsafe(self.queue.put_nowait, text)


class Session:
    """A training loop plus its worker thread and stream fan-out."""

    def __init__(self, sid: str, spec: CreateSession):
        self.id = sid
        self.spec = spec
        phantom = resolve_phantom(spec.phantom)
        self.env = ScanEnv(phantom, seed=spec.seed, **spec.env)
        self.agent = SacAgent(self.env.obs_dim, self.env.act_dim,
                              SacConfig(**spec.agent), seed=spec.seed)
        self.coach = CoachingEngine(self.env, self.agent,
                                    CoachConfig(**spec.coach), seed=spec.seed)
        self.loop = TrainingLoop(self.env, self.agent,
                                 LoopConfig(total_steps=spec.total_steps,
                                            **spec.loop),
                                 coach=self.coach, buffer_seed=spec.seed)
        self.phase = "paused" if spec.start_paused else "running"
        self.lock = threading.Lock()
        self.commands: queue.Queue[_Command] = queue.Queue()
        self.subscribers: list[Subscriber] = []
        self.seq = 0
        self._stop = False
        self._pause_at: int | None = None
        self._pause_requested = False
        self.thread = threading.Thread(target=self._run, daemon=True,
                                       name=f"session-{sid}")
        self.thread.start()

    # -- fan-out (callers hold self.lock) --------------------------------------

    def _publish(self, event: dict) -> None:
        self.seq += 1
        event = {"v": PROTOCOL_VERSION, "seq": self.seq, **clean(event)}
        text = json.dumps(event)
        for sub in list(self.subscribers):
            sub.push(text)

    def subscribe(self, sub: Subscriber) -> dict:
        """Register and return a snapshot atomically: every event published
        after the snapshot reaches the subscriber, nothing is duplicated."""
        with self.lock:
            self.subscribers.append(sub)
            return self._snapshot_locked()

    def unsubscribe(self, sub: Subscriber) -> None:
        with self.lock:
            if sub in self.subscribers:
                self.subscribers.remove(sub)

    # -- views ----------------------------------------------------------------------

    def _snapshot_locked(self) -> dict:
        loop = self.loop
        traj = loop.recent_trajectory()
        last = self.coach.corrections[-1] if self.coach.corrections else None
        return clean({
            "v": PROTOCOL_VERSION,
            "type": "snapshot",
            "seq": self.seq,
            "session_id": self.id,
            "phase": self.phase,
            "step": loop.global_step,
            "episode": loop.episode,
            "total_steps": loop.cfg.total_steps,
            "phantom": self.env.phantom.id,
            "pose": self.env.pose,
            "trajectory": {"poses": traj.poses, "qualities": traj.qualities,
                           "start_step": traj.start_step},
            "preferred": last["preferred_poses"] if last else None,
            "curve": loop.curve_rows[-200:],
            "corrections": [self._correction_summary(r)
                            for r in self.coach.corrections],
            "weights": [self.coach.weights.w_u, self.coach.weights.w_c,
                        self.coach.weights.w_pi],
            "beta": self.coach.beta,
            "caps": DEFAULT_CAPS,
        })

    def snapshot(self) -> dict:
        with self.lock:
            return self._snapshot_locked()

    @staticmethod
    def _correction_summary(r: dict) -> dict:
        keys = ("step", "anchor", "delta", "window", "h", "weights",
                "weight_diagnostic", "transitions", "kl_before", "kl_after",
                "coached_updates", "handoff_pose")
        return {k: r[k] for k in keys}

    # -- worker ----------------------------------------------------------------------

    def _run(self) -> None:
        last_beat = 0.0
        while not self._stop:
            self._drain_commands()
            if self._stop:
                break
            with self.lock:
                if self.phase == "running" and self._pause_requested \
                        and (self._pause_at is None
                             or self.loop.global_step >= self._pause_at):
                    self._pause_requested = False
                    self._pause_at = None
                    self.phase = "paused"
                    self._publish({"type": "paused",
                                   "step": self.loop.global_step})
            if self.phase == "running":
                if self.loop.done:
                    with self.lock:
                        self.phase = "finished"
                        self._publish({"type": "finished",
                                       "step": self.loop.global_step})
                    continue
                try:
                    with self.lock:
                        event = self.loop.step()
                        self._publish(event)
                except Exception as exc:
                    with self.lock:
                        self.phase = "finished"
                        self._publish({"type": "error",
                                       "message": f"{type(exc).__name__}: "
                                                  f"{exc}",
                                       "step": self.loop.global_step})
            else:
                now = time.monotonic()
                if now - last_beat >= HEARTBEAT_PERIOD:
                    last_beat = now
                    with self.lock:
                        self._publish({"type": "heartbeat",
                                       "phase": self.phase,
                                       "step": self.loop.global_step})
                time.sleep(0.01)

    def _drain_commands(self) -> None:
        while True:
            try:
                cmd = self.commands.get_nowait()
            except queue.Empty:
                return
            try:
                self._handle(cmd)
            except Exception as exc:   # surface worker bugs to the caller
                cmd.error = (500, f"{type(exc).__name__}: {exc}")
            finally:
                cmd.done.set()

    def _handle(self, cmd: _Command) -> None:
        if cmd.op == "stop":
            self._stop = True
            cmd.result = {"phase": "stopped"}
            return
        if self.phase == "finished":
            cmd.error = (409, "session finished")
            return
        if cmd.op == "pause":
            if self.phase != "running":
                cmd.error = (409, f"cannot pause while {self.phase}")
                return
            at = cmd.args.get("at_step")
            self._pause_requested = True
            self._pause_at = at
            if at is None or self.loop.global_step >= at:
                with self.lock:
                    self._pause_requested = False
                    self._pause_at = None
                    self.phase = "paused"
                    self._publish({"type": "paused",
                                   "step": self.loop.global_step})
                cmd.result = {"phase": "paused",
                              "step": self.loop.global_step}
            else:
                cmd.result = {"phase": "running", "pause_at": at}
        elif cmd.op == "resume":
            if self.phase != "paused":
                cmd.error = (409, f"cannot resume while {self.phase}")
                return
            with self.lock:
                self.phase = "running"
                self._publish({"type": "resumed",
                               "step": self.loop.global_step})
            cmd.result = {"phase": "running", "step": self.loop.global_step}
        elif cmd.op == "correct":
            self._ingest(cmd)
        else:
            cmd.error = (422, f"unknown op {cmd.op}")

    def _ingest(self, cmd: _Command) -> None:
        # protocol safety: the one place corrections enter, guarded by phase
        if self.phase != "paused":
            cmd.error = (409, f"corrections require paused phase, "
                              f"currently {self.phase}")
            return
        window = self.loop.recent_trajectory()
        if len(window) == 0:
            cmd.error = (422, "no trajectory recorded yet")
            return
        anchor = cmd.args["anchor"]
        delta = np.asarray(cmd.args["delta"], dtype=float)
        if delta.shape != (6,) or not np.all(np.isfinite(delta)):
            cmd.error = (422, "delta must be 6 finite numbers")
            return
        if np.any(np.abs(delta) > DEFAULT_CAPS):
            cmd.error = (422, f"delta exceeds caps {DEFAULT_CAPS.tolist()}")
            return
        if not 0 <= anchor < len(window):
            cmd.error = (422, f"anchor {anchor} outside recent trajectory "
                              f"of length {len(window)}")
            return
        with self.lock:
            self.phase = "ingesting"
            self._publish({"type": "ingesting",
                           "step": self.loop.global_step})
        try:
            corr = Correction(anchor=anchor, delta=delta,
                              step=self.loop.global_step)
            record = self.loop.ingest_correction(corr)
        finally:
            with self.lock:
                self.phase = "paused"
        with self.lock:
            summary = self._correction_summary(record)
            self._publish({"type": "correction", **summary,
                           "preferred": record["preferred_poses"]})
        cmd.result = summary

    # -- control entry point (HTTP thread side) ----------------------------------

    def command(self, op: str, args: dict | None = None,
                timeout: float = 30.0) -> dict:
        cmd = _Command(op, args)
        self.commands.put(cmd)
        if not cmd.done.wait(timeout):
            raise HTTPException(504, "worker did not respond")
        if cmd.error:
            raise HTTPException(cmd.error[0], cmd.error[1])
        return cmd.result

    def stop(self) -> None:
        if self.thread.is_alive():
            try:
                self.command("stop", timeout=5.0)
            except HTTPException:
                self._stop = True
            self.thread.join(timeout=5.0)


def create_app() -> FastAPI:
    sessions: dict[str, Session] = {}

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        yield
        for session in list(sessions.values()):
            session.stop()
        sessions.clear()

    app = FastAPI(title="coaching control plane", lifespan=lifespan)

    def get_session(sid: str) -> Session:
        if sid not in sessions:
            raise HTTPException(404, f"no session {sid}")
        return sessions[sid]

    @app.post("/sessions", status_code=201)
    def create_session(spec: CreateSession):
        sid = spec.session_id or uuid.uuid4().hex[:12]
        if sid in sessions:
            raise HTTPException(409, f"session {sid} already exists")
        try:
            session = Session(sid, spec)
        except (ValueError, FileNotFoundError, TypeError) as exc:
            raise HTTPException(422, f"bad config: {exc}")
        sessions[sid] = session
        return {"session_id": sid, "phase": session.phase}

    @app.get("/sessions")
    def list_sessions():
        return {"sessions": [{"id": s.id, "phase": s.phase,
                              "step": s.loop.global_step}
                             for s in sessions.values()]}

    @app.get("/sessions/{sid}")
    def session_state(sid: str):
        return get_session(sid).snapshot()

    @app.delete("/sessions/{sid}")
    def delete_session(sid: str):
        session = get_session(sid)
        session.stop()
        del sessions[sid]
        return {"deleted": sid}

    @app.post("/sessions/{sid}/pause")
    def pause(sid: str, body: PauseIn | None = None):
        at = body.at_step if body else None
        return get_session(sid).command("pause", {"at_step": at})

    @app.post("/sessions/{sid}/resume")
    def resume(sid: str):
        return get_session(sid).command("resume")

    @app.post("/sessions/{sid}/corrections")
    def submit_correction(sid: str, body: CorrectionIn):
        return get_session(sid).command(
            "correct", {"anchor": body.anchor, "delta": body.delta})

    @app.get("/sessions/{sid}/trajectory")
    def trajectory(sid: str):
        snap = get_session(sid).snapshot()
        return {"trajectory": snap["trajectory"],
                "preferred": snap["preferred"], "step": snap["step"]}

    @app.get("/sessions/{sid}/curve")
    def curve(sid: str):
        session = get_session(sid)
        with session.lock:
            rows = clean(session.loop.curve_rows)
        return {"rows": rows, "columns": ["step", "episode_return",
                                          "normalized_ma"]}

    @app.get("/sessions/{sid}/corrections")
    def corrections(sid: str):
        session = get_session(sid)
        with session.lock:
            log = [Session._correction_summary(r)
                   for r in session.coach.corrections]
        return {"corrections": clean(log)}

    @app.get("/sessions/{sid}/heatmap")
    def heatmap(sid: str, nx: int = Query(default=40, ge=2, le=200),
                ny: int = Query(default=30, ge=2, le=200),
                roll: float | None = None, pitch: float | None = None,
                yaw: float | None = None, fz: float | None = None):
        session = get_session(sid)
        with session.lock:
            ref = session.env.pose.copy()
        for i, v in ((2, roll), (3, pitch), (4, yaw), (5, fz)):
            if v is not None:
                ref[i] = v
        return session.env.quality_grid(nx, ny, slice_pose=ref)

    @app.websocket("/sessions/{sid}/stream")
    async def stream(ws: WebSocket, sid: str):
        if sid not in sessions:
            await ws.close(code=4004)
            return
        session = sessions[sid]
        await ws.accept()
        sub = Subscriber(asyncio.get_running_loop())
        snapshot = session.subscribe(sub)
        try:
            await ws.send_text(json.dumps(snapshot))
            while True:
                await ws.send_text(await sub.queue.get())
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            session.unsubscribe(sub)

    return app

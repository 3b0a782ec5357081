"""Live dispatch sessions over HTTP: run a trained policy on an instance,
steer the preference vector mid-episode, and stream state frames.

All payloads carry `"api": "quaydeck-api/1"`. Preference changes take
effect at the next dispatch decision, never mid-event; every decision frame
records exactly which raw and calibrated preference produced it, so a
scripted session replays identically under the same seed.
"""

from __future__ import annotations

import asyncio
import itertools
import threading
import time
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from pydantic import BaseModel

from .calib import AnchorSet, calibrate, load_anchor_set
from .env import DispatchEnv, FeatureScales, observe
from .instance import TerminalInstance, load_instance
from .moo import evaluate_policy, normalize
from .nn import DispatchPolicy, load_checkpoint
from .preferences import as_preference, even_grid
from .sim import episode_objectives, qc_idle_gap

API_VERSION = "quaydeck-api/1"

MODE_PAUSED = "paused"
MODE_RUNNING = "running"
MODE_STEP = "step"


class SessionEngine:
    """One episode owned by one session; all entry points are serialized."""

    def __init__(self, session_id: str, inst: TerminalInstance,
                 policy: DispatchPolicy, preference, seed: int,
                 anchors: AnchorSet | None, action_mode: str = "sample"):
        self.id = session_id
        self.inst = inst
        self.policy = policy
        self.anchors = anchors
        meta = policy.meta.get("scales")
        scales = (
            FeatureScales(dist=float(meta["dist"]), count=float(meta["count"]))
            if meta else FeatureScales.for_instance(inst)
        )
        self.env = DispatchEnv(inst, seed, scales)
        self._action_rng = np.random.default_rng(self.env.sim.action_seed_seq)
        self.action_mode = action_mode
        self.mode = MODE_PAUSED
        self.speed = 60.0  # sim seconds per wall second, advisory
        self.seed = seed
        self.done = False
        self._raw_pref = as_preference(preference)
        self._used_pref = self._calibrated(self._raw_pref)
        self._pending_pref: np.ndarray | None = None
        self._frames: list[dict] = []
        self._lock = threading.RLock()
        self._new_frame = threading.Condition(self._lock)
        self._seq = itertools.count()
        self._runner: threading.Thread | None = None
        self._features = self.env.reset()
        if self._features is None:
            self.done = True
        self._emit("snapshot", decision=None)

    # -- internals ---------------------------------------------------------

    def _calibrated(self, pref: np.ndarray) -> np.ndarray:
        if self.anchors is None:
            return pref
        return calibrate(pref, self.anchors).preference

    def _objectives_so_far(self) -> tuple[float, float]:
        log = self.env.log
        if self.done and log.t_end is not None:
            return episode_objectives(log)
        idle = 0.0
        dist = 0.0
        for rec in log.records:
            if not np.isnan(rec.qc_service_start):
                idle += qc_idle_gap(rec)
            dist += rec.empty_dist
        return idle, dist

    def _frame_body(self, kind: str, decision) -> dict:
        sim = self.env.sim
        idle_by_qc = [0.0] * self.inst.qc_count
        for rec in sim.log.records:
            if not np.isnan(rec.qc_service_start):
                idle_by_qc[rec.qc_index] += qc_idle_gap(rec)
        objectives = self._objectives_so_far()
        return {
            "api": API_VERSION,
            "kind": kind,
            "session": self.id,
            "clock": sim.clock,
            "done": self.done,
            "mode": self.mode,
            "speed": self.speed,
            "qcs": [
                {
                    "queue": sim.qc_queue_len(q),
                    "remaining": sim.remaining_tasks(q),
                    "idle": idle_by_qc[q],
                }
                for q in range(self.inst.qc_count)
            ],
            "trucks": [
                {"node": t.node, "status": t.status, "dest": t.dest_node}
                for t in sim.trucks
            ],
            "objectives": {"idle": objectives[0], "dist": objectives[1]},
            "decision": decision,
        }

    def _emit(self, kind: str, decision) -> dict:
        with self._lock:
            frame = self._frame_body(kind, decision)
            frame["seq"] = next(self._seq)
            self._frames.append(frame)
            self._new_frame.notify_all()
            return frame

    def _advance_one_decision(self) -> dict | None:
        """Apply the policy at the current preference for exactly one dispatch."""
        if self.done:
            return None
        if self._pending_pref is not None:
            self._raw_pref = self._pending_pref
            self._used_pref = self._calibrated(self._raw_pref)
            self._pending_pref = None
        feats = self._features
        probs = self.policy.action_probabilities(feats.rows, self._used_pref)
        if self.action_mode == "sample":
            cum = np.cumsum(probs)
            row = int(np.searchsorted(cum, self._action_rng.random() * cum[-1], "right"))
            row = min(row, len(probs) - 1)
        else:
            row = int(np.argmax(probs))
        qc = feats.active_qcs[row]
        truck = self.env.decision.truck_id
        _, nxt = self.env.step(qc)
        self._features = nxt
        if nxt is None:
            self.done = True
        decision = {
            "truck": truck,
            "qc": qc,
            "probabilities": probs.tolist(),
            "active_qcs": list(feats.active_qcs),
            "preference": self._raw_pref.tolist(),
            "calibrated_preference": self._used_pref.tolist(),
        }
        frame = self._emit("decision", decision)
        if self.done:
            self.mode = MODE_PAUSED
            self._emit("terminal", None)
        return frame

    # -- command surface -----------------------------------------------------

    def set_preference(self, pref) -> dict:
        p = as_preference(pref)
        with self._lock:
            self._pending_pref = p
            effective = self._frames[-1]["seq"] + 1
            return {"api": API_VERSION, "accepted": p.tolist(),
                    "effective_from_seq": effective}

    def control(self, command: str, steps: int = 1, speed: float | None = None) -> dict:
        with self._lock:
            if command == "pause":
                self.mode = MODE_PAUSED
            elif command == "speed":
                if speed is None or speed <= 0:
                    raise ValueError("speed must be positive")
                self.speed = float(speed)
            elif command == "step":
                if self.done:
                    raise ValueError("session already finished")
                if steps < 1:
                    raise ValueError("steps must be at least 1")
                self.mode = MODE_STEP
                for _ in range(steps):
                    if self._advance_one_decision() is None:
                        break
                if not self.done:
                    self.mode = MODE_PAUSED
            elif command == "run":
                if self.done:
                    raise ValueError("session already finished")
                if self.mode != MODE_RUNNING:
                    self.mode = MODE_RUNNING
                    self._runner = threading.Thread(target=self._run_loop, daemon=True)
                    self._runner.start()
            else:
                raise ValueError(f"unknown control command {command!r}")
            return self.snapshot()

    def _run_loop(self) -> None:
        last_clock = self.env.sim.clock
        while True:
            with self._lock:
                if self.mode != MODE_RUNNING or self.done:
                    if self.mode == MODE_RUNNING:
                        self.mode = MODE_PAUSED
                    return
                frame = self._advance_one_decision()
                if frame is None:
                    return
                dt_sim = frame["clock"] - last_clock
                last_clock = frame["clock"]
            # Advisory pacing between decisions; capped so the UI stays live.
            # Long waits heartbeat with clock frames (sim time is event-driven
            # and never interpolated, so the clock value repeats).
            if self.speed > 0 and dt_sim > 0:
                pause = min(dt_sim / self.speed, 0.5)
                time.sleep(pause)
                if pause >= 0.25:
                    with self._lock:
                        if self.mode == MODE_RUNNING and not self.done:
                            self._emit("clock", None)

    def snapshot(self) -> dict:
        with self._lock:
            return self._frames[-1]

    def frames_after(self, seq: int, timeout: float = 0.25) -> list[dict]:
        with self._new_frame:
            fresh = [f for f in self._frames if f["seq"] > seq]
            if fresh:
                return fresh
            self._new_frame.wait(timeout)
            return [f for f in self._frames if f["seq"] > seq]


# -- HTTP layer ----------------------------------------------------------------

class CreateSession(BaseModel):
    instance_id: str
    checkpoint_id: str
    preference: list[float] = [0.5, 0.5]
    seed: int = 0
    calibrate: bool = False
    action_mode: str = "sample"


class PreferenceBody(BaseModel):
    preference: list[float]


class ControlBody(BaseModel):
    command: str
    steps: int = 1
    speed: float | None = None


class ArtifactStore:
    def __init__(self, data_dir: Path):
        self.data_dir = Path(data_dir)
        self._instances: dict[str, TerminalInstance] = {}
        self._checkpoints: dict[str, DispatchPolicy] = {}

    def _find(self, kind: str, name: str, exts) -> Path:
        for ext in exts:
            path = self.data_dir / kind / f"{name}{ext}"
            if path.exists():
                return path
        raise KeyError(f"{kind[:-1]} {name!r} not found under {self.data_dir / kind}")

    def instance(self, name: str) -> TerminalInstance:
        if name not in self._instances:
            self._instances[name] = load_instance(self._find("instances", name, [".json"]))
        return self._instances[name]

    def checkpoint(self, name: str) -> DispatchPolicy:
        if name not in self._checkpoints:
            self._checkpoints[name] = load_checkpoint(
                self._find("checkpoints", name, [".ckpt"])
            )
        return self._checkpoints[name]

    def anchors(self, checkpoint_name: str) -> AnchorSet:
        return load_anchor_set(self._find("anchors", checkpoint_name, [".txt"]))


def create_app(data_dir: str | Path) -> FastAPI:
    app = FastAPI(title="quaydeck live dispatch", version=API_VERSION)
    store = ArtifactStore(Path(data_dir))
    sessions: dict[str, SessionEngine] = {}
    counter = itertools.count(1)
    pareto_cache: dict[tuple, dict] = {}

    def get_session(session_id: str) -> SessionEngine:
        try:
            return sessions[session_id]
        except KeyError:
            raise HTTPException(404, f"unknown session {session_id!r}") from None

    @app.post("/sessions")
    def create_session(body: CreateSession):
        try:
            inst = store.instance(body.instance_id)
            policy = store.checkpoint(body.checkpoint_id)
            anchors = store.anchors(body.checkpoint_id) if body.calibrate else None
        except KeyError as exc:
            raise HTTPException(404, str(exc)) from None
        if body.action_mode not in ("sample", "greedy"):
            raise HTTPException(422, f"unknown action_mode {body.action_mode!r}")
        try:
            pref = as_preference(body.preference)
        except ValueError as exc:
            raise HTTPException(422, str(exc)) from None
        session_id = f"s{next(counter)}"
        sessions[session_id] = SessionEngine(
            session_id, inst, policy, pref, body.seed, anchors, body.action_mode
        )
        return {
            "api": API_VERSION,
            "session_id": session_id,
            "state": sessions[session_id].snapshot(),
            "layout": {
                "nodes": [
                    {"id": n.id, "kind": n.kind, "x": n.x, "y": n.y}
                    for n in inst.nodes
                ],
                "qc_count": inst.qc_count,
                "yard_count": inst.yard_count,
                "task_count": inst.task_count,
            },
        }

    @app.post("/sessions/{session_id}/preference")
    def set_preference(session_id: str, body: PreferenceBody):
        session = get_session(session_id)
        try:
            return session.set_preference(body.preference)
        except ValueError as exc:
            raise HTTPException(422, str(exc)) from None

    @app.post("/sessions/{session_id}/control")
    def control(session_id: str, body: ControlBody):
        session = get_session(session_id)
        try:
            return session.control(body.command, body.steps, body.speed)
        except ValueError as exc:
            raise HTTPException(409, str(exc)) from None

    @app.get("/sessions/{session_id}/state")
    def state(session_id: str):
        return get_session(session_id).snapshot()

    @app.websocket("/sessions/{session_id}/stream")
    async def stream(websocket: WebSocket, session_id: str):
        await websocket.accept()
        session = sessions.get(session_id)
        if session is None:
            await websocket.close(code=4404)
            return
        loop = asyncio.get_event_loop()
        snapshot = session.snapshot()
        await websocket.send_json(snapshot)
        seq = snapshot["seq"]
        try:
            while True:
                frames = await loop.run_in_executor(
                    None, session.frames_after, seq, 0.25
                )
                for frame in frames:
                    await websocket.send_json(frame)
                    seq = frame["seq"]
                    if frame["kind"] == "terminal":
                        await websocket.close()
                        return
        except (WebSocketDisconnect, RuntimeError):
            return

    @app.get("/pareto")
    def pareto(checkpoint_id: str, instance_id: str, grid: int = 11,
               C: int = 16, seed: int = 0):
        key = (checkpoint_id, instance_id, grid, C, seed)
        if key in pareto_cache:
            return pareto_cache[key]
        try:
            inst = store.instance(instance_id)
            policy = store.checkpoint(checkpoint_id)
        except KeyError as exc:
            raise HTTPException(404, str(exc)) from None
        meta = policy.meta.get("scales")
        scales = (
            FeatureScales(dist=float(meta["dist"]), count=float(meta["count"]))
            if meta else FeatureScales.for_instance(inst)
        )
        points = [
            evaluate_policy(policy, pref, inst, C, seed, scales, label="policy")
            for pref in even_grid(grid)
        ]
        values = np.array([p.objectives for p in points])
        norms: list[list[float] | None] = [None] * len(points)
        try:
            z, _ = normalize(values)
            norms = [row.tolist() for row in z]
        except ValueError:
            pass
        body = {
            "api": API_VERSION,
            "checkpoint_id": checkpoint_id,
            "instance_id": instance_id,
            "C": C,
            "seed": seed,
            "points": [
                {
                    "preference": list(p.preference),
                    "objectives": list(p.objectives),
                    "normalized": norms[i],
                    "label": p.label,
                }
                for i, p in enumerate(points)
            ],
        }
        pareto_cache[key] = body
        return body

    return app

"""Live teleoperation service: control loop plus WebSocket/REST surface.

The loop owns the plant and controllers exclusively and publishes one
snapshot per control tick. Network consumers receive snapshots through
bounded per-subscriber queues; a consumer that stops draining its queue is
disconnected rather than ever blocking the loop. Targets arrive at any time
and take effect at the next tick boundary.

Message schemas (JSON, versioned):
  state    teleop.state.v1   {tick, t, status, target, measured, nominal,
                              e_ee_real, e_ee_nominal, min_distance_real,
                              min_distance_nominal, margin, solver_status,
                              solver_iters}
           shapes are flat [x0,y0,z0, x1,y1,z1, ...] in mm, base frame
  ack      teleop.ack.v1     {command, ok, tick, inside?}
  mesh     teleop.mesh.v1    {vertices [[x,y,z]..], triangles [[a,b,c]..]}
"""

from __future__ import annotations

import json
import queue
import threading
import time
from collections import deque
from dataclasses import dataclass, field

import anyio
import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .geometry import STATE_DIM
from .local_control import local_control
from .errors import Infeasible
from .mesh_sdf import signed_distance, signed_distance_batch
from .mpc import MpcSolution, initialize, solve
from .plant import Plant
from .scenario import ScenarioConfig

_QUEUE_SIZE = 256


@dataclass
class _Subscriber:
    q: queue.Queue
    dead: bool = False


class TeleopSession:
    """Owns the closed loop; thread-safe command surface for the endpoints."""

    def __init__(self, config: ScenarioConfig, realtime: bool = False):
        if config.waypoints:
            raise ValueError("teleop sessions take targets online, not waypoint lists")
        self.config = config
        self.realtime = realtime
        self.geom = config.geometry
        self.zone = config.load_zone()
        self.plant = Plant(
            self.geom, config.disturbance, initial_state=config.initial_state(), seed=config.seed
        )
        self._lock = threading.Lock()
        self._target: np.ndarray | None = None
        self._target_tick: int | None = None
        self._status = "running"
        self._subscribers: list[_Subscriber] = []
        self._latest: dict | None = None
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self.tick = 0
        self.target_log: list[dict] = []
        self.metrics = deque(maxlen=20_000)

    # -- command surface (any thread) -------------------------------------

    def set_target(self, position) -> dict:
        p = np.asarray(position, dtype=float)
        if p.shape != (3,) or not np.all(np.isfinite(p)):
            return {"ok": False, "error": "target must be a finite 3-vector"}
        inside = None
        if self.zone is not None:
            inside = bool(signed_distance(self.zone, p).distance > 0.0)
        with self._lock:
            self._target = p
            self._target_tick = self.tick
            self.target_log.append({"tick": self.tick, "position": p.tolist(), "inside": inside})
        return {"ok": True, "inside": inside, "tick": self.tick}

    def pause(self) -> dict:
        with self._lock:
            if self._status == "running":
                self._status = "paused"
        return {"ok": True, "status": self._status}

    def resume(self) -> dict:
        with self._lock:
            if self._status == "paused":
                self._status = "running"
        return {"ok": True, "status": self._status}

    def reset(self) -> dict:
        with self._lock:
            self._status = "running"
        return {"ok": True, "status": self._status}

    def status(self) -> dict:
        with self._lock:
            return {
                "status": self._status,
                "tick": self.tick,
                "target": None if self._target is None else self._target.tolist(),
                "subscribers": len([s for s in self._subscribers if not s.dead]),
            }

    def subscribe(self) -> _Subscriber:
        sub = _Subscriber(q=queue.Queue(maxsize=_QUEUE_SIZE))
        with self._lock:
            latest = self._latest
            self._subscribers.append(sub)
        if latest is not None:
            sub.q.put(latest)   # late joiners see the current state immediately
        return sub

    def unsubscribe(self, sub: _Subscriber):
        sub.dead = True
        with self._lock:
            if sub in self._subscribers:
                self._subscribers.remove(sub)

    # -- loop (owner thread) ----------------------------------------------

    def start(self):
        self._thread = threading.Thread(target=self._run, name="teleop-loop", daemon=True)
        self._thread.start()

    def stop(self):
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)

    def _run(self):
        dt = self.config.dt
        y = self.plant.measure()
        x_nom = self.plant.x.copy()
        sol: MpcSolution | None = None
        next_deadline = time.perf_counter() + dt

        while not self._stop.is_set():
            with self._lock:
                target = None if self._target is None else self._target.copy()
                status = self._status

            u = np.zeros(STATE_DIM)
            solver_status, solver_iters = "idle", 0
            nominal_shape = None
            if status == "running":
                try:
                    solution = solve(
                        x_nom, target, self.zone, self.config.mpc_params, self.geom, warm_start=sol
                    )
                    sol = solution
                    nominal_shape = solution.outputs[0]
                    u_loc = local_control(
                        nominal_shape, y, x_nom, self.config.local_gains, self.geom
                    )
                    u = solution.inputs[0] + u_loc
                    solver_status, solver_iters = solution.status, solution.iterations
                    x_nom = initialize(sol, self.geom)
                except Infeasible:
                    with self._lock:
                        self._status = "fault"
                    status = "fault"
                    u = np.zeros(STATE_DIM)
                    solver_status = "infeasible"

            snapshot = self._snapshot(y, nominal_shape, target, status, solver_status, solver_iters)
            self._publish(snapshot)
            self.metrics.append(snapshot)

            y = self.plant.step(u, dt)
            self.tick += 1

            if self.realtime:
                now = time.perf_counter()
                if next_deadline > now:
                    time.sleep(next_deadline - now)
                next_deadline = max(next_deadline + dt, now)

    def _snapshot(self, y, nominal_shape, target, status, solver_status, solver_iters) -> dict:
        e_real = e_nom = None
        if target is not None:
            e_real = float(np.linalg.norm(y[-1] - target))
            if nominal_shape is not None:
                e_nom = float(np.linalg.norm(nominal_shape[-1] - target))
        d_real = d_nom = None
        if self.zone is not None:
            d_real = float(signed_distance_batch(self.zone, y)[0].min())
            if nominal_shape is not None:
                d_nom = float(signed_distance_batch(self.zone, nominal_shape)[0].min())
        return {
            "type": "state",
            "schema": "teleop.state.v1",
            "tick": self.tick,
            "t": self.tick * self.config.dt,
            "status": status,
            "target": None if target is None else list(map(float, target)),
            "measured": [float(v) for v in y.reshape(-1)],
            "nominal": None
            if nominal_shape is None
            else [float(v) for v in nominal_shape.reshape(-1)],
            "e_ee_real": e_real,
            "e_ee_nominal": e_nom,
            "min_distance_real": d_real,
            "min_distance_nominal": d_nom,
            "margin": self.config.mpc_params.c_d,
            "solver_status": solver_status,
            "solver_iters": solver_iters,
        }

    def _publish(self, snapshot: dict):
        with self._lock:
            self._latest = snapshot
            subs = list(self._subscribers)
        for sub in subs:
            if sub.dead:
                continue
            try:
                sub.q.put_nowait(snapshot)
            except queue.Full:
                sub.dead = True   # slow consumer: cut it loose, never block


def create_app(config: ScenarioConfig, realtime: bool = False) -> FastAPI:
    """FastAPI application hosting one teleop session."""
    from contextlib import asynccontextmanager

    session = TeleopSession(config, realtime=realtime)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        session.start()
        try:
            yield
        finally:
            session.stop()

    app = FastAPI(title="tdcr-mpc teleop", lifespan=lifespan)
    app.state.session = session

    @app.get("/config")
    def get_config():
        return {
            "schema": "teleop.config.v1",
            "name": config.name,
            "control_rate_hz": config.control_rate_hz,
            "margin": config.mpc_params.c_d,
            "mesh": config.mesh,
            "disks": config.geometry.total_disks,
            "raw": config.raw,
        }

    @app.get("/mesh")
    def get_mesh():
        if session.zone is None:
            return {"schema": "teleop.mesh.v1", "vertices": [], "triangles": []}
        return {
            "schema": "teleop.mesh.v1",
            "vertices": session.zone.vertices.tolist(),
            "triangles": session.zone.triangles.tolist(),
        }

    @app.get("/status")
    def get_status():
        return session.status()

    @app.post("/target")
    def post_target(body: dict):
        return session.set_target(body.get("position", []))

    @app.post("/pause")
    def post_pause():
        return session.pause()

    @app.post("/resume")
    def post_resume():
        return session.resume()

    @app.post("/reset")
    def post_reset():
        return session.reset()

    @app.get("/targets")
    def get_targets():
        return {"targets": session.target_log}

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        sub = session.subscribe()
        send_lock = anyio.Lock()

        async def send(payload: dict):
            async with send_lock:
                await ws.send_text(json.dumps(payload))

        async def sender():
            while not sub.dead:
                try:
                    item = await anyio.to_thread.run_sync(lambda: sub.q.get(timeout=0.25))
                except queue.Empty:
                    continue
                try:
                    await send(item)
                except (WebSocketDisconnect, RuntimeError):
                    return

        async def receiver():
            while True:
                try:
                    msg = await ws.receive_json()
                except (WebSocketDisconnect, RuntimeError):
                    return
                cmd = msg.get("type")
                if cmd == "set_target":
                    reply = session.set_target(msg.get("position", []))
                elif cmd == "pause":
                    reply = session.pause()
                elif cmd == "resume":
                    reply = session.resume()
                elif cmd == "reset":
                    reply = session.reset()
                else:
                    reply = {"ok": False, "error": f"unknown command {cmd!r}"}
                try:
                    await send({"type": "ack", "schema": "teleop.ack.v1", "command": cmd, **reply})
                except (WebSocketDisconnect, RuntimeError):
                    return

        try:
            async with anyio.create_task_group() as tg:
                tg.start_soon(sender)
                await receiver()
                tg.cancel_scope.cancel()
        finally:
            session.unsubscribe(sub)

    return app

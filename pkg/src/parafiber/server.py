"""Live session server: streams telemetry and accepts steering commands.

One WebSocket endpoint (``/ws``) speaks a versioned JSON protocol, one
message per frame:

server to client::

    {"v": 1, "type": "hello", "config": {...}, "populations": {...}}
    {"v": 1, "type": "telemetry", "frame": {"t": ..., "phi_set": ...,
        "phi_act": ..., "eps_l": ..., "eps_r": ..., "omega_l": ...,
        "omega_r": ..., "counts": {...}, "rasters": {...} | null,
        "raster_dropped": false}}
    {"v": 1, "type": "ack", "cmd": "set_pid", "ok": true}
    {"v": 1, "type": "error", "reason": "..."}
    {"v": 1, "type": "done"}

client to server (``at`` optionally pins the simulated time of effect,
which makes command timelines reproducible)::

    {"v": 1, "cmd": "set_setpoint", "value": 30.0, "at": 12.5}
    {"v": 1, "cmd": "set_waveform", "waveform": {"kind": "sine",
        "freq_hz": 0.0667, "amplitude_deg": 30.0}}
    {"v": 1, "cmd": "set_pid", "kp": 1.0, "ki": 0.0, "kd": 0.0}
    {"v": 1, "cmd": "freeze_learning", "on": true}
    {"v": 1, "cmd": "reset_weights"}
    {"v": 1, "cmd": "snapshot"}
    {"v": 1, "cmd": "subscribe_rasters", "populations": ["DCN_L", "DCN_R"]}

The simulation loop owns all model state on one thread; commands enter an
ordered queue drained at telemetry frame boundaries, so a served run with a
scripted command timeline reproduces the equivalent headless run exactly.
Telemetry fan-out uses bounded per-client buffers: when a client lags,
raster payloads are shed first and scalar frames only as a last resort;
a disconnecting client never stops the loop.
"""

from __future__ import annotations

import asyncio
import dataclasses
import json
import queue
import threading
import time

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware

from .errors import ConfigError
from .harness import ClosedLoop, Command, SessionConfig, TelemetryFrame

SCHEMA_VERSION = 1
CLIENT_QUEUE_FRAMES = 256
RASTER_BACKLOG_LIMIT = 32


def _frame_payload(frame: TelemetryFrame) -> dict:
    return {
        "t": frame.t,
        "phi_set": frame.phi_set,
        "phi_act": frame.phi_act,
        "eps_l": frame.eps_l,
        "eps_r": frame.eps_r,
        "omega_l": frame.omega_l,
        "omega_r": frame.omega_r,
        "counts": frame.spike_counts,
        "rasters": frame.rasters,
        "raster_dropped": frame.raster_dropped,
    }


def parse_command(data: dict) -> Command:
    """Validate one client command message; raises ConfigError on bad input."""
    if not isinstance(data, dict) or data.get("v") != SCHEMA_VERSION:
        raise ConfigError("missing or unsupported schema version")
    kind = data.get("cmd")
    at_s = data.get("at")
    if at_s is not None:
        at_s = float(at_s)
    if kind == "set_setpoint":
        return Command(kind=kind, at_s=at_s, value=float(data["value"]))
    if kind == "set_waveform":
        wf = data.get("waveform")
        if not isinstance(wf, dict) or "kind" not in wf:
            raise ConfigError("set_waveform needs a waveform object with a kind")
        return Command(kind=kind, at_s=at_s, waveform=wf)
    if kind == "set_pid":
        gains = (float(data["kp"]), float(data["ki"]), float(data["kd"]))
        if any(g < 0 or g != g for g in gains):
            raise ConfigError("PID gains must be finite and non-negative")
        return Command(kind=kind, at_s=at_s, gains=gains)
    if kind == "freeze_learning":
        return Command(kind=kind, at_s=at_s, on=bool(data["on"]))
    if kind in ("reset_weights", "snapshot"):
        return Command(kind=kind, at_s=at_s)
    if kind == "subscribe_rasters":
        pops = data.get("populations")
        if not isinstance(pops, list):
            raise ConfigError("subscribe_rasters needs a population list")
        return Command(kind=kind, at_s=at_s, populations=tuple(str(p) for p in pops))
    raise ConfigError(f"unknown command {kind!r}")


class _Client:
    def __init__(self) -> None:
        self.frames: "queue.Queue[dict | None]" = queue.Queue(maxsize=CLIENT_QUEUE_FRAMES)
        self.dropped_frames = 0

    def push(self, payload: dict) -> None:
        if self.frames.qsize() > RASTER_BACKLOG_LIMIT and payload.get("rasters"):
            payload = dict(payload, rasters=None, raster_dropped=True)
        try:
            self.frames.put_nowait(payload)
        except queue.Full:
            # shed the oldest frame; scalars are lost only on a stalled client
            try:
                self.frames.get_nowait()
                self.dropped_frames += 1
                self.frames.put_nowait(payload)
            except (queue.Empty, queue.Full):
                pass


class LiveSession:
    """Owns the closed loop on a worker thread and fans out telemetry."""

    def __init__(self, cfg: SessionConfig, speed: float = 1.0):
        if speed < 0:
            raise ConfigError("speed must be >= 0 (0 = unpaced)")
        self.cfg = cfg
        self.speed = speed
        self.loop = ClosedLoop(cfg)
        self._staged: "queue.Queue[Command]" = queue.Queue()
        self._clients: list[_Client] = []
        self._clients_lock = threading.Lock()
        self._thread: threading.Thread | None = None
        self._stop = threading.Event()
        self.finished = threading.Event()
        self.frames_emitted = 0

    # -- client/command surface ------------------------------------------

    def attach(self) -> _Client:
        client = _Client()
        with self._clients_lock:
            self._clients.append(client)
        return client

    def detach(self, client: _Client) -> None:
        with self._clients_lock:
            if client in self._clients:
                self._clients.remove(client)

    def submit(self, cmd: Command) -> None:
        self._staged.put(cmd)

    def hello_payload(self) -> dict:
        pops = {
            p.name: {"start": p.start, "size": p.size}
            for p in self.loop.net.populations
        }
        return {
            "v": SCHEMA_VERSION,
            "type": "hello",
            "config": self.cfg.to_dict(),
            "populations": pops,
            "telemetry_period_ms": self.cfg.telemetry_period_ms,
        }

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> None:
        if self._thread is not None:
            return
        self._thread = threading.Thread(target=self._run, name="parafiber-session", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=10.0)

    def join(self, timeout: float | None = None) -> None:
        if self._thread is not None:
            self._thread.join(timeout)

    def _drain_staged(self) -> None:
        while True:
            try:
                self.loop.queue_command(self._staged.get_nowait())
            except queue.Empty:
                return

    def _fan_out(self, message: dict) -> None:
        with self._clients_lock:
            clients = list(self._clients)
        for client in clients:
            client.push(message)

    def _run(self) -> None:
        loop = self.loop
        tick_s = loop.dt / 1000.0
        next_deadline = time.perf_counter()
        for t in range(1, loop.n_ticks + 1):
            if self._stop.is_set():
                break
            if t % loop._ticks_telemetry == 0:
                self._drain_staged()
            _, frame = loop.step_tick(t)
            if frame is not None:
                self.frames_emitted += 1
                self._fan_out(_frame_payload(frame))
            if self.speed > 0:
                next_deadline += tick_s / self.speed
                delay = next_deadline - time.perf_counter()
                if delay > 0:
                    time.sleep(delay)
        with self._clients_lock:
            for client in self._clients:
                try:
                    client.frames.put_nowait(None)
                except queue.Full:
                    pass
        self.finished.set()


def create_app(session: LiveSession) -> FastAPI:
    """FastAPI app exposing the session over ``/ws`` (plus ``/config``)."""
    app = FastAPI(title="parafiber live session")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.session = session

    @app.get("/config")
    def get_config() -> dict:
        return session.hello_payload()

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket) -> None:
        await ws.accept()
        client = session.attach()
        session.start()
        await ws.send_text(json.dumps(session.hello_payload()))

        async def reader() -> None:
            while True:
                raw = await ws.receive_text()
                try:
                    data = json.loads(raw)
                    cmd = parse_command(data)
                except (json.JSONDecodeError, KeyError, TypeError, ValueError, ConfigError) as exc:
                    await ws.send_text(
                        json.dumps({"v": SCHEMA_VERSION, "type": "error", "reason": str(exc)})
                    )
                    continue
                session.submit(cmd)
                await ws.send_text(
                    json.dumps({"v": SCHEMA_VERSION, "type": "ack", "cmd": cmd.kind, "ok": True})
                )

        async def writer() -> None:
            while True:
                try:
                    # bounded wait so a cancelled task releases its pool
                    # thread promptly instead of pinning it on a bare get()
                    payload = await asyncio.to_thread(client.frames.get, True, 0.2)
                except queue.Empty:
                    continue
                if payload is None:
                    await ws.send_text(json.dumps({"v": SCHEMA_VERSION, "type": "done"}))
                    return
                await ws.send_text(
                    json.dumps({"v": SCHEMA_VERSION, "type": "telemetry", "frame": payload})
                )

        tasks = [asyncio.create_task(reader()), asyncio.create_task(writer())]
        try:
            done, pending = await asyncio.wait(tasks, return_when=asyncio.FIRST_COMPLETED)
            for task in pending:
                task.cancel()
        except WebSocketDisconnect:
            pass
        finally:
            for task in tasks:
                task.cancel()
            session.detach(client)

    return app


def serve_session(cfg: SessionConfig, port: int = 8750, speed: float = 1.0, host: str = "127.0.0.1") -> None:
    """Run a live session until its configured duration elapses."""
    import uvicorn

    session = LiveSession(cfg, speed=speed)
    app = create_app(session)
    uvicorn.run(app, host=host, port=port, log_level="warning")

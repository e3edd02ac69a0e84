"""Operator-facing service API: HTTP request/response plus an SSE event
stream, served on the loopback of the simulation host (out-of-band, never
part of the simulated network).

Read endpoints are side-effect free, so a connected console cannot perturb
a run. Commands are queued thread-safely and picked up by the simulation
loop at its next poll, then routed through the MTU like any operator
action.

Endpoints (all JSON):

    GET  /api/status         run metadata and virtual clock
    GET  /api/topology       grid + ICT structure and the data-point map
    GET  /api/telemetry      last value per (coa, ioa) as received
    GET  /api/connections    per-RTU connection state
    GET  /api/journal        command journal with confirmation status
    GET  /api/estimate       latest state estimation output
    GET  /api/grid/actual    ground-truth grid state (debug view)
    GET  /api/events?since=N event backlog after sequence N
    GET  /api/events/stream  server-sent events, live
    POST /api/command        {"coa": int, "ioa": int, "value": num|bool}
"""

from __future__ import annotations

import json
import queue
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

NS_PER_S = 1_000_000_000


class _PendingCommand:
    def __init__(self, coa: int, ioa: int, value):
        self.coa = coa
        self.ioa = ioa
        self.value = value
        self.done = threading.Event()
        self.record_id: int | None = None
        self.error: str | None = None


class ServiceApi:
    """Bridge between the single-threaded simulation and HTTP clients."""

    def __init__(self, sim, port: int = 0, host: str = "127.0.0.1"):
        self.sim = sim
        self._lock = threading.Lock()
        self._snapshot: dict = {"status": {"running": False}}
        self._topology = self._build_topology()
        self._commands: "queue.Queue[_PendingCommand]" = queue.Queue()
        self._subscribers: list[queue.Queue] = []
        self._event_cursor = 0
        self._events_tail: list[dict] = []
        handler = self._make_handler()
        self.server = ThreadingHTTPServer((host, port), handler)
        self.port = self.server.server_address[1]
        self._thread = threading.Thread(target=self.server.serve_forever,
                                        daemon=True)
        self._thread.start()

    def close(self) -> None:
        self.server.shutdown()
        self.server.server_close()

    # -- called from the simulation thread ----------------------------------

    def pump(self) -> None:
        """Drain queued commands and publish fresh snapshots."""
        while True:
            try:
                pending = self._commands.get_nowait()
            except queue.Empty:
                break
            try:
                if self.sim.mtu is None:
                    pending.error = "no MTU in this scenario"
                else:
                    record = self.sim.mtu.send_command(
                        pending.coa, pending.ioa, pending.value)
                    pending.record_id = record.command_id
            except Exception as exc:  # surfaced to the HTTP client
                pending.error = str(exc)
            pending.done.set()
        self._publish()

    def _publish(self) -> None:
        sim = self.sim
        snapshot = {"status": {
            "scenario": sim.config.name,
            "seed": sim.config.seed,
            "clock": sim.config.clock,
            "virtual_time_s": sim.sched.now_ns / NS_PER_S,
            "running": True,
        }}
        if sim.mtu is not None:
            snapshot["telemetry"] = {
                f"{coa}:{ioa}": {"value": _jsonable(tp.value),
                                 "t_s": tp.t_ns / NS_PER_S,
                                 "count": tp.count}
                for (coa, ioa), tp in sim.mtu.telemetry.items()
            }
            snapshot["connections"] = dict(sim.mtu.conn_state)
            snapshot["journal"] = [
                {"command_id": r.command_id,
                 "issued_s": r.issued_ns / NS_PER_S,
                 "coa": r.coa, "ioa": r.ioa, "value": _jsonable(r.value),
                 "status": r.status,
                 "confirmed_s": r.confirmed_ns / NS_PER_S
                 if r.confirmed_ns else None,
                 "terminated_s": r.terminated_ns / NS_PER_S
                 if r.terminated_ns else None}
                for r in sim.mtu.journal
            ]
        if sim.estimates:
            t_ns, est = sim.estimates[-1]
            snapshot["estimate"] = {
                "t_s": t_ns / NS_PER_S,
                "observable": est.all_observable,
                "vm_pu": {b: v for b, v in est.vm_pu.items() if v == v},
                "va_deg": {b: v for b, v in est.va_deg.items() if v == v},
            }
        result = sim.coordinator.result
        if result is not None:
            snapshot["actual"] = {
                "label": "debug-only: ground truth, not operator-visible",
                "revision": result.revision,
                "vm_pu": result.vm_pu,
                "va_deg": result.va_deg,
                "p_mw": result.p_mw,
                "q_mvar": result.q_mvar,
                "i_ka": {b: f.i_ka for b, f in result.flows.items()},
                "switches": {s.id: s.closed
                             for s in sim.model.switches.values()},
            }
        new_events = sim.events.entries[self._event_cursor:]
        self._event_cursor = len(sim.events.entries)
        with self._lock:
            self._snapshot = snapshot
            if new_events:
                self._events_tail.extend(new_events)
                self._events_tail = self._events_tail[-1000:]
                dead = []
                for sub in self._subscribers:
                    for event in new_events:
                        try:
                            sub.put_nowait(event)
                        except queue.Full:
                            dead.append(sub)
                            break
                for sub in dead:
                    if sub in self._subscribers:
                        self._subscribers.remove(sub)

    def _build_topology(self) -> dict:
        sim = self.sim
        grid = sim.model
        points = []
        for rtu in sim.config.rtus:
            for p in rtu.points:
                points.append({"coa": p.coa, "ioa": p.ioa,
                               "direction": p.direction,
                               "element": p.element, "attr": p.attr,
                               "type_id": p.type_id})
        return {
            "buses": [{"id": b.id, "vn_kv": b.vn_kv}
                      for b in grid.buses.values()],
            "branches": [
                {"id": bid,
                 "from": grid.branch_buses(br)[0],
                 "to": grid.branch_buses(br)[1],
                 "kind": "line" if bid in grid.lines else "transformer"}
                for bid, br in grid.branches().items()],
            "injections": [{"id": i.id, "bus": i.bus, "kind": i.kind}
                           for i in grid.injections.values()],
            "switches": [{"id": s.id,
                          "element": list(s.element) if s.is_coupler
                          else s.element}
                         for s in grid.switches.values()],
            "rtus": [{"host": r.host, "coa": r.coa} for r in sim.config.rtus],
            "points": points,
        }

    # -- HTTP plumbing ----------------------------------------------------------

    def queue_command(self, coa: int, ioa: int, value,
                      timeout_s: float = 2.0) -> dict:
        pending = _PendingCommand(coa, ioa, value)
        self._commands.put(pending)
        if not pending.done.wait(timeout_s):
            return {"accepted": True, "command_id": None,
                    "note": "queued; simulation has not picked it up yet"}
        if pending.error:
            return {"accepted": False, "error": pending.error}
        return {"accepted": True, "command_id": pending.record_id}

    def subscribe(self) -> queue.Queue:
        sub: queue.Queue = queue.Queue(maxsize=4096)
        with self._lock:
            self._subscribers.append(sub)
        return sub

    def unsubscribe(self, sub: queue.Queue) -> None:
        with self._lock:
            if sub in self._subscribers:
                self._subscribers.remove(sub)

    def get(self, name: str):
        with self._lock:
            return self._snapshot.get(name)

    def events_since(self, seq: int) -> list[dict]:
        with self._lock:
            return [e for e in self._events_tail if e["seq"] > seq]

    def _make_handler(self):
        api = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, *args):  # quiet
                pass

            def _json(self, payload, status=200):
                body = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Access-Control-Allow-Origin", "*")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_GET(self):
                url = urlparse(self.path)
                route = url.path.rstrip("/")
                if route == "/api/status":
                    self._json(api.get("status"))
                elif route == "/api/topology":
                    self._json(api._topology)
                elif route == "/api/telemetry":
                    self._json(api.get("telemetry") or {})
                elif route == "/api/connections":
                    self._json(api.get("connections") or {})
                elif route == "/api/journal":
                    self._json(api.get("journal") or [])
                elif route == "/api/estimate":
                    self._json(api.get("estimate") or {})
                elif route == "/api/grid/actual":
                    self._json(api.get("actual") or {})
                elif route == "/api/events":
                    since = int(parse_qs(url.query).get("since", ["0"])[0])
                    self._json(api.events_since(since))
                elif route == "/api/events/stream":
                    self._stream()
                else:
                    self._json({"error": f"no such endpoint {url.path}"}, 404)

            def _stream(self):
                self.send_response(200)
                self.send_header("Content-Type", "text/event-stream")
                self.send_header("Cache-Control", "no-cache")
                self.send_header("Access-Control-Allow-Origin", "*")
                self.end_headers()
                sub = api.subscribe()
                try:
                    while True:
                        try:
                            event = sub.get(timeout=15.0)
                            data = json.dumps(event)
                            self.wfile.write(
                                f"id: {event['seq']}\ndata: {data}\n\n"
                                .encode())
                        except queue.Empty:
                            self.wfile.write(b": keepalive\n\n")
                        self.wfile.flush()
                except (BrokenPipeError, ConnectionResetError, OSError):
                    pass
                finally:
                    api.unsubscribe(sub)

            def do_POST(self):
                url = urlparse(self.path)
                if url.path.rstrip("/") != "/api/command":
                    self._json({"error": "no such endpoint"}, 404)
                    return
                length = int(self.headers.get("Content-Length", "0"))
                try:
                    body = json.loads(self.rfile.read(length) or b"{}")
                    coa = int(body["coa"])
                    ioa = int(body["ioa"])
                    value = body["value"]
                except (ValueError, KeyError, json.JSONDecodeError) as exc:
                    self._json({"accepted": False,
                                "error": f"bad request: {exc}"}, 400)
                    return
                self._json(api.queue_command(coa, ioa, value))

            def do_OPTIONS(self):
                self.send_response(204)
                self.send_header("Access-Control-Allow-Origin", "*")
                self.send_header("Access-Control-Allow-Methods",
                                 "GET, POST, OPTIONS")
                self.send_header("Access-Control-Allow-Headers",
                                 "Content-Type")
                self.send_header("Content-Length", "0")
                self.end_headers()

        return Handler


def _jsonable(value):
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, float)):
        return value
    return str(value)

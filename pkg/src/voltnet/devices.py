"""RTU and MTU applications bound to simulated hosts.

RTUs listen on 2404, report their monitoring points spontaneously
(cot=3) every report interval, answer general interrogations and realize
commands after a configurable uniform random delay. The MTU connects to
every configured RTU, interrogates on (re)connect, keeps the last value
per data point and journals every outgoing command with its confirmation
state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import iec104
from .coordinator import Coordinator, GridRef
from .estimation import (
    KIND_P_FLOW, KIND_P_INJ, KIND_Q_FLOW, KIND_Q_INJ, KIND_VM, Measurement,
)
from .grid import Injection
from .iec104 import Asdu, Iec104Connection, InfoObject
from .netsim import wire
from .netsim.stack import Host, TcpConn
from .process import RealizationDelay, RngStreams

IEC104_PORT = 2404
MONITORING = "monitoring"
CONTROL = "control"

RECONNECT_DELAY_S = 5.0
CONFIRM_TIMEOUT_S = 10.0
DEFAULT_REPORT_INTERVAL_S = 2.0


@dataclass
class DataPoint:
    """Functional link between one (coa, ioa) and one grid attribute."""

    coa: int
    ioa: int
    direction: str  # monitoring | control
    element: str
    attr: str
    type_id: int
    report_interval_s: float = DEFAULT_REPORT_INTERVAL_S
    scale: float = 1.0
    offset: float = 0.0

    @property
    def ref(self) -> GridRef:
        return GridRef(self.element, self.attr)

    def engineering(self, raw: float) -> float:
        """Wire value back to grid units."""
        return (raw - self.offset) / self.scale

    def wire_value(self, value: float) -> float:
        return value * self.scale + self.offset


@dataclass
class RtuConfig:
    host: str
    coa: int
    points: list[DataPoint]
    delay: RealizationDelay = field(default_factory=RealizationDelay)
    whitelist: list[str] = field(default_factory=list)  # empty = accept all
    port: int = IEC104_PORT

    def monitoring_points(self) -> list[DataPoint]:
        return [p for p in self.points if p.direction == MONITORING]

    def control_point(self, ioa: int) -> DataPoint | None:
        for p in self.points:
            if p.direction == CONTROL and p.ioa == ioa:
                return p
        return None


@dataclass
class RtuLink:
    """MTU-side view of one RTU."""

    name: str
    ip: str
    coa: int
    points: list[DataPoint]
    port: int = IEC104_PORT


@dataclass
class MtuConfig:
    host: str
    rtus: list[RtuLink]


class Iec104Endpoint:
    """Glue between one TCP connection and one IEC-104 state machine."""

    def __init__(self, host: Host, tcp: TcpConn, is_controller: bool, *,
                 on_asdu=None, on_started=None, on_close=None,
                 conn_kwargs: dict | None = None):
        self.host = host
        self.tcp = tcp
        self.proto = Iec104Connection(is_controller, host.now_ns,
                                      **(conn_kwargs or {}))
        self.on_asdu = on_asdu
        self.on_started = on_started
        self.on_close = on_close
        self.closed = False
        self._timer = None
        tcp.on_data = self._on_bytes
        self._reschedule()

    @property
    def started(self) -> bool:
        return self.proto.state.started

    def start_data_transfer(self) -> None:
        self._dispatch(self.proto.initiate_start(self.host.now_ns))

    def send_asdu(self, asdu: Asdu) -> None:
        if not self.closed:
            self._dispatch(self.proto.send_asdu(asdu, self.host.now_ns))

    def send_asdus(self, asdus: list[Asdu]) -> None:
        """Batch several ASDUs into one TCP segment (one report cycle)."""
        if self.closed or not asdus:
            return
        combined = iec104.StepResult()
        now = self.host.now_ns
        for asdu in asdus:
            step = self.proto.send_asdu(asdu, now)
            combined.bytes_out += step.bytes_out
            combined.deliveries.extend(step.deliveries)
            if step.close:
                combined.close = step.close
                break
        self._dispatch(combined)

    def shutdown(self) -> None:
        """Tear down without firing on_close (owner-driven)."""
        self.closed = True
        self._cancel_timer()

    def _on_bytes(self, conn: TcpConn, data: bytes) -> None:
        self._dispatch(self.proto.feed(data, self.host.now_ns))

    def _on_timer(self) -> None:
        self._timer = None
        self._dispatch(self.proto.on_timer(self.host.now_ns))

    def _dispatch(self, result: iec104.StepResult) -> None:
        if self.closed:
            return
        if result.bytes_out:
            self.tcp.send(result.bytes_out)
        if result.started is not None and self.on_started is not None:
            self.on_started(self, result.started)
        for asdu in result.deliveries:
            if self.closed:
                break
            if self.on_asdu is not None:
                self.on_asdu(self, asdu)
        if result.close is not None and not self.closed:
            self.closed = True
            self._cancel_timer()
            self.host.net.log("iec104.close", node=self.host.name,
                              reason=result.close)
            self.tcp.close()
            if self.on_close is not None:
                self.on_close(self, result.close)
            return
        self._reschedule()

    def _reschedule(self) -> None:
        self._cancel_timer()
        deadline = self.proto.next_timer_ns()
        if deadline is not None and not self.closed:
            self._timer = self.host.net.sched.call_at(deadline, self._on_timer)

    def _cancel_timer(self) -> None:
        if self._timer is not None:
            self.host.net.sched.cancel(self._timer)
            self._timer = None


class RtuApp:
    """Field device: serves measurements, realizes commands."""

    def __init__(self, config: RtuConfig, coordinator: Coordinator,
                 rng: RngStreams):
        self.config = config
        self.coordinator = coordinator
        self.rng = rng.get(f"rtu:{config.coa}:realize")
        self.host: Host | None = None
        self.endpoints: list[Iec104Endpoint] = []

    def start(self, host: Host) -> None:
        self.host = host
        policy = None
        if self.config.whitelist:
            allowed = {wire.ip_bytes(ip) for ip in self.config.whitelist}
            policy = lambda ip: ip in allowed
        host.tcp_listen(self.config.port, self._accept, accept_policy=policy)

    def _accept(self, conn: TcpConn) -> None:
        endpoint = Iec104Endpoint(
            self.host, conn, is_controller=False, on_asdu=self._handle_asdu,
            on_started=self._on_started, on_close=self._on_close)
        conn.on_closed = lambda c, reason: self._tcp_closed(endpoint, reason)
        self.endpoints.append(endpoint)

    def _tcp_closed(self, endpoint: Iec104Endpoint, reason: str) -> None:
        endpoint.shutdown()
        if endpoint in self.endpoints:
            self.endpoints.remove(endpoint)

    def _on_close(self, endpoint: Iec104Endpoint, reason: str) -> None:
        if endpoint in self.endpoints:
            self.endpoints.remove(endpoint)

    def _on_started(self, endpoint: Iec104Endpoint, started: bool) -> None:
        if not started:
            return
        by_interval: dict[float, list[DataPoint]] = {}
        for point in self.config.monitoring_points():
            by_interval.setdefault(point.report_interval_s, []).append(point)
        for interval, points in by_interval.items():
            self._schedule_report(endpoint, interval, points)

    def _schedule_report(self, endpoint: Iec104Endpoint, interval: float,
                         points: list[DataPoint]) -> None:
        self.host.call_later(
            interval, lambda: self._report(endpoint, interval, points))

    def _report(self, endpoint: Iec104Endpoint, interval: float,
                points: list[DataPoint]) -> None:
        """One report cycle: every due point, batched into one segment."""
        if endpoint.closed or not endpoint.started:
            return
        asdus = [a for a in (self._measure(p, cot=iec104.COT_SPONTANEOUS)
                             for p in points) if a is not None]
        endpoint.send_asdus(asdus)
        self._schedule_report(endpoint, interval, points)

    def _measure(self, point: DataPoint, cot: int) -> Asdu | None:
        try:
            value = self.coordinator.read(point.ref)
        except Exception:
            self.host.net.log("rtu.read-failed", node=self.host.name,
                              coa=point.coa, ioa=point.ioa)
            return None
        if point.type_id == iec104.M_SP_NA_1:
            obj = InfoObject(point.ioa, bool(value))
        else:
            obj = InfoObject(point.ioa, point.wire_value(float(value)))
        return Asdu(point.type_id, cot, point.coa, (obj,))

    # -- commands ------------------------------------------------------------

    def _handle_asdu(self, endpoint: Iec104Endpoint, asdu: Asdu) -> None:
        if asdu.cot != iec104.COT_ACTIVATION:
            return
        if asdu.coa != self.config.coa:
            endpoint.send_asdu(Asdu(asdu.type_id, iec104.COT_UNKNOWN_COA,
                                    asdu.coa, asdu.objects))
            return
        if asdu.type_id == iec104.C_IC_NA_1:
            self._interrogation(endpoint, asdu)
            return
        if asdu.type_id not in (iec104.C_SC_NA_1, iec104.C_SE_NC_1):
            endpoint.send_asdu(Asdu(asdu.type_id, iec104.COT_UNKNOWN_TYPE,
                                    asdu.coa, asdu.objects))
            return
        obj = asdu.objects[0]
        point = self.config.control_point(obj.ioa)
        if point is None or point.type_id != asdu.type_id:
            endpoint.send_asdu(Asdu(asdu.type_id, iec104.COT_UNKNOWN_IOA,
                                    asdu.coa, asdu.objects))
            return
        endpoint.send_asdu(Asdu(asdu.type_id, iec104.COT_ACTIVATION_CON,
                                asdu.coa, asdu.objects))
        delay_s = self.config.delay.draw_s(self.rng)
        self.host.net.log("rtu.command", node=self.host.name, coa=asdu.coa,
                          ioa=obj.ioa, value=obj.value if not isinstance(
                              obj.value, bool) else bool(obj.value),
                          delay_s=round(delay_s, 6))
        self.host.call_later(
            delay_s, lambda: self._realize(endpoint, point, asdu))

    def _realize(self, endpoint: Iec104Endpoint, point: DataPoint,
                 asdu: Asdu) -> None:
        obj = asdu.objects[0]
        if point.type_id == iec104.C_SC_NA_1:
            value = bool(obj.value)
        else:
            value = point.engineering(float(obj.value))
        self.coordinator.write(point.ref, value,
                               origin=f"rtu:{self.config.coa}")
        if not endpoint.closed:
            endpoint.send_asdu(Asdu(asdu.type_id, iec104.COT_ACTIVATION_TERM,
                                    asdu.coa, asdu.objects))

    def _interrogation(self, endpoint: Iec104Endpoint, asdu: Asdu) -> None:
        replies = [Asdu(iec104.C_IC_NA_1, iec104.COT_ACTIVATION_CON,
                        asdu.coa, asdu.objects)]
        for point in self.config.monitoring_points():
            reply = self._measure(point, cot=iec104.COT_INTERROGATED)
            if reply is not None:
                replies.append(reply)
        replies.append(Asdu(iec104.C_IC_NA_1, iec104.COT_ACTIVATION_TERM,
                            asdu.coa, asdu.objects))
        endpoint.send_asdus(replies)


@dataclass
class TelemetryPoint:
    value: float | bool
    t_ns: int
    count: int = 1


@dataclass
class CommandRecord:
    command_id: int
    issued_ns: int
    coa: int
    ioa: int
    value: float | bool
    status: str = "queued"  # queued|sent|confirmed|terminated|unconfirmed|failed
    confirmed_ns: int | None = None
    terminated_ns: int | None = None


class MtuApp:
    """Control center master: connects, interrogates, supervises, commands."""

    def __init__(self, config: MtuConfig, rng: RngStreams):
        self.config = config
        self.host: Host | None = None
        self.telemetry: dict[tuple[int, int], TelemetryPoint] = {}
        self.journal: list[CommandRecord] = []
        self.endpoints: dict[str, Iec104Endpoint] = {}
        self.conn_state: dict[str, str] = {}
        self.on_telemetry = None  # fn(t_ns, coa, ioa, value), exporters hook in
        self._next_command_id = 1
        self._links_by_coa = {r.coa: r for r in config.rtus}
        self._current_conn: dict[str, TcpConn] = {}
        self._attempt_started_ns: dict[str, int] = {}

    def start(self, host: Host) -> None:
        self.host = host
        for rtu in self.config.rtus:
            self.conn_state[rtu.name] = "connecting"
            self._connect(rtu)

    # -- connection management ------------------------------------------------

    def _connect(self, rtu: RtuLink) -> None:
        self.conn_state[rtu.name] = "connecting"
        self._attempt_started_ns[rtu.name] = self.host.now_ns
        self._current_conn[rtu.name] = self.host.tcp_connect(
            rtu.ip, rtu.port,
            on_established=lambda conn: self._established(rtu, conn),
            on_closed=lambda conn, reason: self._conn_lost(rtu, conn, reason))

    def _established(self, rtu: RtuLink, conn: TcpConn) -> None:
        endpoint = Iec104Endpoint(
            self.host, conn, is_controller=True,
            on_asdu=lambda ep, asdu: self._on_asdu(rtu, asdu),
            on_started=lambda ep, started: self._on_started(rtu, started),
            on_close=lambda ep, reason: self._conn_lost(rtu, ep.tcp, reason))
        self.endpoints[rtu.name] = endpoint
        endpoint.start_data_transfer()

    def _conn_lost(self, rtu: RtuLink, conn: TcpConn, reason: str) -> None:
        """Connection considered dead: a protocol-level close counts right
        away; the late transport teardown of a superseded connection is
        ignored so it cannot stomp an in-flight reconnect."""
        if self._current_conn.get(rtu.name) is not conn:
            return
        self._current_conn.pop(rtu.name, None)
        endpoint = self.endpoints.pop(rtu.name, None)
        if endpoint is not None:
            endpoint.shutdown()
        if self.conn_state.get(rtu.name) == "up":
            self.host.net.log("mtu.conn-down", node=self.host.name,
                              rtu=rtu.name, reason=reason)
        self.conn_state[rtu.name] = "down"
        # attempts start on a fixed cadence: a failed attempt re-fires 5 s
        # after it began, an established connection 5 s after it dropped
        delay = RECONNECT_DELAY_S
        if endpoint is None:
            elapsed = (self.host.now_ns
                       - self._attempt_started_ns.get(rtu.name, 0)) / 1e9
            delay = max(0.5, RECONNECT_DELAY_S - elapsed)
        self.host.call_later(delay, lambda: self._connect(rtu))

    def _on_started(self, rtu: RtuLink, started: bool) -> None:
        if not started:
            return
        self.conn_state[rtu.name] = "up"
        self.host.net.log("mtu.conn-up", node=self.host.name, rtu=rtu.name)
        self._interrogate(rtu)

    def _interrogate(self, rtu: RtuLink) -> None:
        endpoint = self.endpoints.get(rtu.name)
        if endpoint is not None:
            endpoint.send_asdu(Asdu(iec104.C_IC_NA_1, iec104.COT_ACTIVATION,
                                    rtu.coa, (InfoObject(0, 20),)))

    # -- telemetry and confirmations ---------------------------------------------

    def _on_asdu(self, rtu: RtuLink, asdu: Asdu) -> None:
        if asdu.type_id in (iec104.M_SP_NA_1, iec104.M_ME_NC_1):
            now = self.host.now_ns
            for obj in asdu.objects:
                key = (asdu.coa, obj.ioa)
                existing = self.telemetry.get(key)
                if existing is None:
                    self.telemetry[key] = TelemetryPoint(obj.value, now)
                elif now >= existing.t_ns:
                    existing.value = obj.value
                    existing.t_ns = now
                    existing.count += 1
                if self.on_telemetry is not None:
                    self.on_telemetry(now, asdu.coa, obj.ioa, obj.value)
            return
        if asdu.cot in (iec104.COT_ACTIVATION_CON, iec104.COT_ACTIVATION_TERM):
            self._match_confirmation(asdu)
        elif asdu.cot in (iec104.COT_UNKNOWN_TYPE, iec104.COT_UNKNOWN_COT,
                          iec104.COT_UNKNOWN_COA, iec104.COT_UNKNOWN_IOA):
            self._match_negative(asdu)

    def _match_confirmation(self, asdu: Asdu) -> None:
        if asdu.type_id == iec104.C_IC_NA_1:
            return
        record = self._pending_record(asdu)
        if record is None:
            self.host.net.log("mtu.unexpected-confirmation",
                              node=self.host.name, coa=asdu.coa,
                              ioa=asdu.objects[0].ioa, cot=asdu.cot)
            return
        if asdu.cot == iec104.COT_ACTIVATION_CON:
            record.status = "confirmed"
            record.confirmed_ns = self.host.now_ns
        else:
            record.status = "terminated"
            record.terminated_ns = self.host.now_ns
        self.host.net.log("mtu.command-status", node=self.host.name,
                          command_id=record.command_id, status=record.status)

    def _match_negative(self, asdu: Asdu) -> None:
        record = self._pending_record(asdu)
        if record is not None:
            record.status = "failed"
            self.host.net.log("mtu.command-status", node=self.host.name,
                              command_id=record.command_id, status="failed",
                              cot=asdu.cot)

    def _pending_record(self, asdu: Asdu) -> CommandRecord | None:
        ioa = asdu.objects[0].ioa
        for record in reversed(self.journal):
            if (record.coa == asdu.coa and record.ioa == ioa
                    and record.status in ("sent", "confirmed")):
                return record
        return None

    # -- operator commands ----------------------------------------------------------

    def send_command(self, coa: int, ioa: int, value) -> CommandRecord:
        record = CommandRecord(self._next_command_id, self.host.now_ns,
                               coa, ioa, value)
        self._next_command_id += 1
        self.journal.append(record)
        link = self._links_by_coa.get(coa)
        point = None
        if link is not None:
            point = next((p for p in link.points
                          if p.ioa == ioa and p.direction == CONTROL), None)
        endpoint = self.endpoints.get(link.name) if link else None
        if link is None or point is None:
            record.status = "failed"
            return record
        if endpoint is None or endpoint.closed or not endpoint.started:
            record.status = "sent"  # journaled; flagged unconfirmed later
        else:
            if point.type_id == iec104.C_SC_NA_1:
                obj = InfoObject(ioa, bool(value))
            else:
                obj = InfoObject(ioa, point.wire_value(float(value)))
            endpoint.send_asdu(Asdu(point.type_id, iec104.COT_ACTIVATION,
                                    coa, (obj,)))
            record.status = "sent"
        self.host.net.log("mtu.command", node=self.host.name,
                          command_id=record.command_id, coa=coa, ioa=ioa,
                          value=value)
        self.host.call_later(CONFIRM_TIMEOUT_S,
                             lambda: self._confirm_timeout(record))
        return record

    def _confirm_timeout(self, record: CommandRecord) -> None:
        if record.status == "sent":
            record.status = "unconfirmed"
            self.host.net.log("mtu.command-status", node=self.host.name,
                              command_id=record.command_id,
                              status="unconfirmed")

    # -- SE input -----------------------------------------------------------------

    def measurements(self, model) -> list[Measurement]:
        """Map received telemetry onto SE measurements (engineering units)."""
        out: list[Measurement] = []
        sigma_vm, sigma_pq = 0.005, 0.01
        inj_p: dict[str, list] = {}
        inj_q: dict[str, list] = {}
        for rtu in self.config.rtus:
            for point in rtu.points:
                if point.direction != MONITORING:
                    continue
                tp = self.telemetry.get((point.coa, point.ioa))
                if tp is None or point.type_id == iec104.M_SP_NA_1:
                    continue
                value = point.engineering(float(tp.value))
                element = model.find(point.element)
                if point.attr == "vm_pu":
                    bus = element.bus if isinstance(element, Injection) \
                        else point.element
                    out.append(Measurement(KIND_VM, bus, value, sigma_vm,
                                           received_ns=tp.t_ns,
                                           source=(point.coa, point.ioa)))
                elif point.attr in ("p_mw", "q_mvar") and isinstance(
                        element, Injection):
                    sign = -1.0 if element.kind == "load" else 1.0
                    bucket = inj_p if point.attr == "p_mw" else inj_q
                    bucket.setdefault(element.bus, []).append(
                        (sign * value, tp.t_ns, element.id))
                elif point.attr in ("p_from_mw", "q_from_mvar",
                                    "p_to_mw", "q_to_mvar"):
                    kind = KIND_P_FLOW if point.attr.startswith("p") \
                        else KIND_Q_FLOW
                    side = "from" if "from" in point.attr else "to"
                    out.append(Measurement(kind, point.element, value,
                                           sigma_pq, side=side,
                                           received_ns=tp.t_ns,
                                           source=(point.coa, point.ioa)))
        out.extend(self._bus_injections(model, inj_p, KIND_P_INJ, sigma_pq))
        out.extend(self._bus_injections(model, inj_q, KIND_Q_INJ, sigma_pq))
        return out

    @staticmethod
    def _bus_injections(model, bucket, kind, sigma) -> list[Measurement]:
        """Combine per-injection telemetry into bus injections.

        Only emitted when every live injection at the bus is covered;
        otherwise the bus injection is unknown, not approximable.
        """
        live_by_bus: dict[str, set[str]] = {}
        for inj in model.injections.values():
            if inj.in_service and inj.kind != "ext_grid":
                live_by_bus.setdefault(inj.bus, set()).add(inj.id)
        out = []
        for bus in sorted(bucket):
            covered = {inj_id for _, _, inj_id in bucket[bus]}
            if covered != live_by_bus.get(bus, set()):
                continue
            total = sum(v for v, _, _ in bucket[bus])
            oldest = min(t for _, t, _ in bucket[bus])
            out.append(Measurement(kind, bus, total, sigma,
                                   received_ns=oldest))
        return out

    def delivery_counts(self) -> dict[tuple[int, int], int]:
        return {key: tp.count for key, tp in self.telemetry.items()}

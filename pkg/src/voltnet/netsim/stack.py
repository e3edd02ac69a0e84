"""Host and router stacks: ARP resolution, IP routing, ICMP, TCP.

TCP keeps the semantics the attack scenarios depend on: three-way
handshake, in-order-only delivery with cumulative acks, a fixed 65535
window, and a deterministic retransmission schedule with exponential
backoff (1 s initial RTO, doubled per expiry; the fifth consecutive
expiry aborts, i.e. 1+2+4+8+16 = 31 s for a fully blackholed stream).
Connection attempts give up faster (third expiry, 7 s) so reconnect
loops keep their cadence. No SACK, no congestion control: flooding
impact is modeled by link bandwidth and queues, which is where it
belongs at IEC-104 traffic volumes.
"""

from __future__ import annotations

import struct
from typing import Callable

from . import wire
from .core import NS_PER_S, Link, Network, Node, s_to_ns

ARP_TIMEOUT_S = 30.0
ARP_RETRIES = 3
ARP_RETRY_GAP_NS = NS_PER_S

TCP_MSS = 1460
TCP_WINDOW = 65535
TCP_RTO_NS = NS_PER_S
TCP_MAX_RETRIES = 5       # established data / FIN
TCP_SYN_MAX_RETRIES = 2   # connection attempts fail fast (7 s)
TCP_HALF_OPEN_TIMEOUT_NS = 10 * NS_PER_S
TCP_BACKLOG = 64
TCP_TIME_WAIT_NS = 10 * NS_PER_S

ICMP_RATE_LIMIT_NS = NS_PER_S


def _seq_add(a: int, n: int) -> int:
    return (a + n) & 0xFFFFFFFF


def _seq_le(a: int, b: int) -> bool:
    return ((b - a) & 0xFFFFFFFF) < 0x80000000


def _seq_lt(a: int, b: int) -> bool:
    return a != b and _seq_le(a, b)


class ArpCache:
    """IP -> MAC map with insertion timestamps; stale entries miss."""

    def __init__(self, timeout_s: float = ARP_TIMEOUT_S):
        self.timeout_ns = s_to_ns(timeout_s)
        self.entries: dict[bytes, tuple[bytes, int]] = {}

    def lookup(self, ip: bytes, now_ns: int) -> bytes | None:
        entry = self.entries.get(ip)
        if entry is None:
            return None
        mac, inserted = entry
        if now_ns - inserted > self.timeout_ns:
            return None
        return mac

    def insert(self, ip: bytes, mac: bytes, now_ns: int) -> None:
        # unsolicited replies overwrite without validation (spoofable)
        self.entries[ip] = (mac, now_ns)


class _PendingArp:
    __slots__ = ("frames", "retries", "timer")

    def __init__(self):
        self.frames: list[wire.Ipv4] = []
        self.retries = 0
        self.timer = None


class NetworkInterface:
    def __init__(self, mac: bytes, ip: bytes, prefix_len: int):
        self.mac = mac
        self.ip = ip
        self.prefix_len = prefix_len
        self.link: Link | None = None


class IpNode(Node):
    """Shared ARP/IP/ICMP machinery for hosts and routers."""

    def __init__(self, name: str, net: Network):
        super().__init__(name, net)
        self.interfaces: list[NetworkInterface] = []
        self.arp = ArpCache()
        self._pending_arp: dict[bytes, _PendingArp] = {}
        self._ip_ident = 0
        self.packet_hook: Callable[[wire.Frame], bool] | None = None

    # -- wiring ------------------------------------------------------------

    def add_interface(self, mac: str | bytes, ip: str | bytes,
                      prefix_len: int) -> NetworkInterface:
        mac_b = wire.mac_bytes(mac) if isinstance(mac, str) else mac
        ip_b = wire.ip_bytes(ip) if isinstance(ip, str) else ip
        iface = NetworkInterface(mac_b, ip_b, prefix_len)
        self.interfaces.append(iface)
        return iface

    def attach(self, link: Link) -> None:
        super().attach(link)
        for iface in self.interfaces:
            if iface.link is None:
                iface.link = link
                return

    def iface_for_link(self, link: Link) -> NetworkInterface | None:
        for iface in self.interfaces:
            if iface.link is link:
                return iface
        return None

    def iface_for_subnet(self, ip: bytes) -> NetworkInterface | None:
        for iface in self.interfaces:
            if wire.same_subnet(ip, iface.ip, iface.prefix_len):
                return iface
        return None

    def my_ips(self) -> set[bytes]:
        return {iface.ip for iface in self.interfaces}

    @property
    def now_ns(self) -> int:
        return self.net.sched.now_ns

    def call_later(self, seconds: float, fn: Callable[[], None]):
        return self.net.sched.call_in(s_to_ns(seconds), fn)

    def next_ident(self) -> int:
        self._ip_ident = (self._ip_ident + 1) & 0xFFFF
        return self._ip_ident

    # -- frame IO ------------------------------------------------------------

    def emit(self, frame: wire.Frame, link: Link | None = None) -> None:
        iface = self.interfaces[0] if link is None else self.iface_for_link(link)
        out_link = iface.link if iface else (self.links[0] if self.links else None)
        if out_link is None:
            return
        self.net.capture(self, frame)
        out_link.transmit(self, frame)

    def receive(self, frame: wire.Frame, link: Link) -> None:
        if not self.alive:
            return
        if self.packet_hook is not None and self.packet_hook(frame):
            return
        iface = self.iface_for_link(link)
        if iface is None:
            return
        if frame.dst_mac != iface.mac and frame.dst_mac != wire.BROADCAST_MAC:
            return
        if frame.ethertype == wire.ETHERTYPE_ARP:
            self._handle_arp(frame.payload, iface, link)
        elif frame.ethertype == wire.ETHERTYPE_IPV4:
            self.handle_ip(frame.payload, iface, link)

    # -- ARP -------------------------------------------------------------------

    def _handle_arp(self, arp: wire.Arp, iface: NetworkInterface,
                    link: Link) -> None:
        if arp.op == wire.ARP_REQUEST and arp.target_ip == iface.ip:
            self.arp.insert(arp.sender_ip, arp.sender_mac, self.now_ns)
            reply = wire.Arp(wire.ARP_REPLY, iface.mac, iface.ip,
                             arp.sender_mac, arp.sender_ip)
            self.emit(wire.eth_arp(iface.mac, arp.sender_mac, reply), link)
        elif arp.op == wire.ARP_REPLY:
            self.arp.insert(arp.sender_ip, arp.sender_mac, self.now_ns)
            self._arp_resolved(arp.sender_ip)

    def _arp_resolved(self, ip: bytes) -> None:
        pending = self._pending_arp.pop(ip, None)
        if pending is None:
            return
        if pending.timer is not None:
            self.net.sched.cancel(pending.timer)
        for pkt in pending.frames:
            self._emit_ip_to(ip, pkt)

    def _emit_ip_to(self, next_hop_ip: bytes, pkt: wire.Ipv4) -> None:
        iface = self.iface_for_subnet(next_hop_ip)
        if iface is None or iface.link is None:
            self.on_route_failure(pkt)
            return
        mac = self.arp.lookup(next_hop_ip, self.now_ns)
        if mac is None:
            self._start_resolution(next_hop_ip, iface, pkt)
            return
        self.emit(wire.eth_ip(iface.mac, mac, pkt), iface.link)

    def _start_resolution(self, ip: bytes, iface: NetworkInterface,
                          pkt: wire.Ipv4 | None) -> None:
        pending = self._pending_arp.get(ip)
        if pending is not None:
            if pkt is not None and len(pending.frames) < 16:
                pending.frames.append(pkt)
            return
        pending = _PendingArp()
        if pkt is not None:
            pending.frames.append(pkt)
        self._pending_arp[ip] = pending
        self._send_arp_request(ip, iface)
        pending.timer = self.net.sched.call_in(
            ARP_RETRY_GAP_NS, lambda: self._arp_retry(ip, iface))

    def _arp_retry(self, ip: bytes, iface: NetworkInterface) -> None:
        pending = self._pending_arp.get(ip)
        if pending is None:
            return
        pending.retries += 1
        if pending.retries >= ARP_RETRIES:
            del self._pending_arp[ip]
            self.net.log("arp.resolution-failed", node=self.name,
                         ip=wire.ip_str(ip))
            self.on_arp_failure(ip, pending.frames)
            return
        self._send_arp_request(ip, iface)
        pending.timer = self.net.sched.call_in(
            ARP_RETRY_GAP_NS, lambda: self._arp_retry(ip, iface))

    def _send_arp_request(self, ip: bytes, iface: NetworkInterface) -> None:
        req = wire.Arp(wire.ARP_REQUEST, iface.mac, iface.ip,
                       b"\x00" * 6, ip)
        self.emit(wire.eth_arp(iface.mac, wire.BROADCAST_MAC, req), iface.link)

    # -- hooks for subclasses ---------------------------------------------------

    def handle_ip(self, pkt: wire.Ipv4, iface: NetworkInterface,
                  link: Link) -> None:
        raise NotImplementedError

    def on_arp_failure(self, ip: bytes, frames: list[wire.Ipv4]) -> None:
        pass

    def on_route_failure(self, pkt: wire.Ipv4) -> None:
        pass

    # -- ICMP ---------------------------------------------------------------------

    def icmp_echo_reply(self, pkt: wire.Ipv4) -> wire.Ipv4:
        icmp = pkt.payload
        return wire.Ipv4(pkt.dst, pkt.src, wire.PROTO_ICMP,
                         wire.Icmp(wire.ICMP_ECHO_REPLY, 0, icmp.rest,
                                   icmp.payload),
                         ident=self.next_ident())


class Host(IpNode):
    """End host with a single interface, a TCP stack and one application."""

    kind = "host"

    def __init__(self, name: str, net: Network, mac: str, ip: str,
                 prefix_len: int, gateway_ip: str | None = None):
        super().__init__(name, net)
        self.add_interface(mac, ip, prefix_len)
        self.gateway_ip = wire.ip_bytes(gateway_ip) if gateway_ip else None
        self.tcp = TcpStack(self)
        self.app = None
        self.on_unreachable: Callable[[bytes], None] | None = None

    @property
    def iface(self) -> NetworkInterface:
        return self.interfaces[0]

    @property
    def ip(self) -> bytes:
        return self.iface.ip

    # -- sending ------------------------------------------------------------

    def send_ip_packet(self, pkt: wire.Ipv4) -> None:
        """Route + resolve + emit; used by TCP, ICMP and raw applications."""
        if pkt.payload_len() + 20 > wire.MTU_BYTES:
            raise ValueError(
                f"oversize IP packet ({pkt.wire_len()} B): no fragmentation")
        if wire.same_subnet(pkt.dst, self.iface.ip, self.iface.prefix_len):
            next_hop = pkt.dst
        elif self.gateway_ip is not None:
            next_hop = self.gateway_ip
        else:
            self.net.log("ip.no-route", node=self.name,
                         dst=wire.ip_str(pkt.dst))
            return
        self._emit_ip_to(next_hop, pkt)

    def handle_ip(self, pkt: wire.Ipv4, iface: NetworkInterface,
                  link: Link) -> None:
        if pkt.dst != iface.ip:
            return  # hosts do not forward
        if pkt.proto == wire.PROTO_TCP and isinstance(pkt.payload, wire.Tcp):
            self.tcp.on_segment(pkt)
        elif pkt.proto == wire.PROTO_ICMP and isinstance(pkt.payload, wire.Icmp):
            self._handle_icmp(pkt)

    def _handle_icmp(self, pkt: wire.Ipv4) -> None:
        icmp = pkt.payload
        if icmp.type == wire.ICMP_ECHO_REQUEST:
            self.send_ip_packet(self.icmp_echo_reply(pkt))
        elif icmp.type in (wire.ICMP_UNREACHABLE, wire.ICMP_TIME_EXCEEDED):
            self.tcp.on_icmp_error(icmp)

    def on_arp_failure(self, ip: bytes, frames: list[wire.Ipv4]) -> None:
        if self.on_unreachable is not None:
            self.on_unreachable(ip)
        self.tcp.on_next_hop_unreachable(ip, frames)

    # -- application conveniences ------------------------------------------------

    def tcp_listen(self, port: int, on_accept,
                   accept_policy: Callable[[bytes], bool] | None = None,
                   backlog: int = TCP_BACKLOG) -> None:
        self.tcp.listen(port, on_accept, accept_policy, backlog)

    def tcp_connect(self, ip: str | bytes, port: int, *, on_established=None,
                    on_data=None, on_closed=None) -> "TcpConn":
        dst = wire.ip_bytes(ip) if isinstance(ip, str) else ip
        return self.tcp.connect(dst, port, on_established=on_established,
                                on_data=on_data, on_closed=on_closed)


class Router(IpNode):
    """Multi-interface IP forwarder with ICMP error generation."""

    kind = "router"

    def __init__(self, name: str, net: Network):
        super().__init__(name, net)
        self._icmp_last_ns: dict[bytes, int] = {}
        self.static_routes: list[tuple[bytes, int, bytes]] = []

    def add_route(self, prefix: str, prefix_len: int, next_hop: str) -> None:
        self.static_routes.append(
            (wire.ip_bytes(prefix), prefix_len, wire.ip_bytes(next_hop)))

    def handle_ip(self, pkt: wire.Ipv4, iface: NetworkInterface,
                  link: Link) -> None:
        if pkt.dst in self.my_ips():
            if (pkt.proto == wire.PROTO_ICMP
                    and isinstance(pkt.payload, wire.Icmp)
                    and pkt.payload.type == wire.ICMP_ECHO_REQUEST):
                self._send_from(self.icmp_echo_reply(pkt))
            return
        self.forward(pkt)

    def _next_hop(self, dst: bytes) -> bytes | None:
        if self.iface_for_subnet(dst) is not None:
            return dst  # directly connected
        best = None
        for prefix, plen, via in self.static_routes:
            if wire.same_subnet(dst, prefix, plen):
                if best is None or plen > best[0]:
                    best = (plen, via)
        return best[1] if best else None

    def forward(self, pkt: wire.Ipv4) -> None:
        next_hop = self._next_hop(pkt.dst)
        egress = self.iface_for_subnet(next_hop) if next_hop else None
        if egress is None:
            self._icmp_error(pkt, wire.ICMP_UNREACHABLE, wire.UNREACH_NET)
            return
        if pkt.ttl <= 1:
            self._icmp_error(pkt, wire.ICMP_TIME_EXCEEDED, 0)
            return
        fwd = wire.Ipv4(pkt.src, pkt.dst, pkt.proto, pkt.payload,
                        ttl=pkt.ttl - 1, ident=pkt.ident)
        mac = self.arp.lookup(next_hop, self.now_ns)
        if mac is None:
            self._start_resolution(next_hop, egress, fwd)
            return
        self.emit(wire.eth_ip(egress.mac, mac, fwd), egress.link)

    def on_arp_failure(self, ip: bytes, frames: list[wire.Ipv4]) -> None:
        for pkt in frames:
            self._icmp_error(pkt, wire.ICMP_UNREACHABLE, wire.UNREACH_HOST)

    def on_route_failure(self, pkt: wire.Ipv4) -> None:
        self._icmp_error(pkt, wire.ICMP_UNREACHABLE, wire.UNREACH_NET)

    def _icmp_error(self, original: wire.Ipv4, icmp_type: int,
                    code: int) -> None:
        if original.src in self.my_ips() or original.proto == wire.PROTO_ICMP:
            return
        last = self._icmp_last_ns.get(original.src, -ICMP_RATE_LIMIT_NS)
        if self.now_ns - last < ICMP_RATE_LIMIT_NS:
            return
        self._icmp_last_ns[original.src] = self.now_ns
        # quote the original IP header + 8 payload bytes, per convention
        quoted = original.serialize()[:28]
        err = wire.Ipv4(self._source_ip_toward(original.src), original.src,
                        wire.PROTO_ICMP,
                        wire.Icmp(icmp_type, code, payload=quoted),
                        ident=self.next_ident())
        self.net.log("icmp.unreachable-sent", node=self.name,
                     to=wire.ip_str(original.src), code=code,
                     about=wire.ip_str(original.dst))
        self._send_from(err)

    def _source_ip_toward(self, dst: bytes) -> bytes:
        iface = self.iface_for_subnet(dst)
        return iface.ip if iface else self.interfaces[0].ip

    def _send_from(self, pkt: wire.Ipv4) -> None:
        if self.iface_for_subnet(pkt.dst) is not None:
            self._emit_ip_to(pkt.dst, pkt)


# ---------------------------------------------------------------------------
# TCP


class TcpConn:
    """One TCP connection endpoint on a host's stack."""

    def __init__(self, stack: "TcpStack", local_ip: bytes, local_port: int,
                 remote_ip: bytes, remote_port: int, *, server: bool,
                 on_established=None, on_data=None, on_closed=None):
        self.stack = stack
        self.host = stack.host
        self.local_ip = local_ip
        self.local_port = local_port
        self.remote_ip = remote_ip
        self.remote_port = remote_port
        self.server = server
        self.state = "CLOSED"
        self.iss = stack.next_isn()
        self.snd_una = self.iss
        self.snd_nxt = self.iss
        self.rcv_nxt = 0
        self.peer_window = TCP_WINDOW
        self._send_queue = b""
        self._rtx: list[tuple[int, int, bytes]] = []  # (seq, flags, payload)
        self._rto_ns = TCP_RTO_NS
        self._retries = 0
        self._timer = None
        self._fin_pending = False
        self._app_notified_close = False
        self.on_established = on_established
        self.on_data = on_data
        self.on_closed = on_closed
        self.retransmit_count = 0  # observable for transparency assertions
        self._accept_cb = None
        self._half_open_timer = None

    # -- identity -----------------------------------------------------------

    @property
    def key(self):
        return (self.local_ip, self.local_port, self.remote_ip, self.remote_port)

    def __repr__(self):
        return (f"<TcpConn {wire.ip_str(self.local_ip)}:{self.local_port} -> "
                f"{wire.ip_str(self.remote_ip)}:{self.remote_port} {self.state}>")

    @property
    def _max_retries(self) -> int:
        if self.state in ("SYN_SENT", "SYN_RCVD"):
            return TCP_SYN_MAX_RETRIES
        return TCP_MAX_RETRIES

    # -- API ------------------------------------------------------------------

    def open(self) -> None:
        self.state = "SYN_SENT"
        self._track_and_send(wire.SYN, seq=self.iss)
        self.snd_nxt = _seq_add(self.iss, 1)
        self.host.net.log("tcp.connect", node=self.host.name,
                          dst=wire.ip_str(self.remote_ip), port=self.remote_port)

    def send(self, data: bytes) -> None:
        if self.state not in ("ESTABLISHED", "CLOSE_WAIT"):
            return
        self._send_queue += data
        self._push()

    def close(self) -> None:
        if self.state in ("ESTABLISHED", "CLOSE_WAIT", "SYN_RCVD"):
            self._fin_pending = True
            self._push()

    def abort(self, reason: str, send_rst: bool = True) -> None:
        if self.state == "CLOSED":
            return
        if send_rst and self.state not in ("SYN_SENT",):
            self._send_segment(wire.RST | wire.ACK, seq=self.snd_nxt)
        self._teardown(reason)

    # -- sending internals -------------------------------------------------------

    def _push(self) -> None:
        in_flight = (self.snd_nxt - self.snd_una) & 0xFFFFFFFF
        while self._send_queue and in_flight + TCP_MSS <= self.peer_window:
            chunk = self._send_queue[:TCP_MSS]
            self._send_queue = self._send_queue[len(chunk):]
            self._track_and_send(wire.ACK | wire.PSH, payload=chunk,
                                 seq=self.snd_nxt)
            self.snd_nxt = _seq_add(self.snd_nxt, len(chunk))
            in_flight += len(chunk)
        if self._fin_pending and not self._send_queue:
            self._fin_pending = False
            self._track_and_send(wire.FIN | wire.ACK, seq=self.snd_nxt)
            self.snd_nxt = _seq_add(self.snd_nxt, 1)
            if self.state in ("ESTABLISHED", "SYN_RCVD"):
                self.state = "FIN_WAIT_1"
            elif self.state == "CLOSE_WAIT":
                self.state = "LAST_ACK"

    def _track_and_send(self, flags: int, payload: bytes = b"",
                        seq: int | None = None) -> None:
        seq = self.snd_nxt if seq is None else seq
        self._rtx.append((seq, flags, payload))
        self._arm_timer()
        self._send_segment(flags, payload, seq)

    def _send_segment(self, flags: int, payload: bytes = b"",
                      seq: int | None = None) -> None:
        tcp = wire.Tcp(self.local_port, self.remote_port,
                       self.snd_nxt if seq is None else seq,
                       self.rcv_nxt if flags & wire.ACK else 0,
                       flags, TCP_WINDOW, payload)
        pkt = wire.Ipv4(self.local_ip, self.remote_ip, wire.PROTO_TCP, tcp,
                        ident=self.host.next_ident())
        self.host.send_ip_packet(pkt)

    def _send_ack(self) -> None:
        self._send_segment(wire.ACK)

    # -- timer ----------------------------------------------------------------------

    def _arm_timer(self) -> None:
        if self._timer is None:
            self._timer = self.host.net.sched.call_in(self._rto_ns, self._on_rto)

    def _cancel_timer(self) -> None:
        if self._timer is not None:
            self.host.net.sched.cancel(self._timer)
            self._timer = None

    def _on_rto(self) -> None:
        self._timer = None
        if self.state == "CLOSED" or not self._rtx:
            return
        self._retries += 1
        if self._retries >= self._max_retries:
            if self.state in ("SYN_RCVD",):
                self.stack.drop_half_open(self)
            else:
                self.host.net.log("tcp.abort", node=self.host.name,
                                  dst=wire.ip_str(self.remote_ip),
                                  port=self.remote_port, reason="timeout")
                self._teardown("timeout")
            return
        seq, flags, payload = self._rtx[0]
        self.retransmit_count += 1
        if self.state not in ("SYN_RCVD",):
            self.host.net.log("tcp.retransmit", node=self.host.name,
                              dst=wire.ip_str(self.remote_ip),
                              port=self.remote_port, seq=seq,
                              attempt=self._retries)
        self._send_segment(flags, payload, seq)
        self._rto_ns *= 2
        self._arm_timer()

    # -- receiving --------------------------------------------------------------------

    def on_segment(self, tcp: wire.Tcp) -> None:
        if tcp.flags & wire.RST:
            if self.state == "SYN_SENT":
                self._teardown("refused")
            else:
                self.host.net.log("tcp.reset-received", node=self.host.name,
                                  src=wire.ip_str(self.remote_ip))
                self._teardown("reset")
            return

        if self.state == "SYN_SENT":
            if tcp.flags & wire.SYN and tcp.flags & wire.ACK \
                    and tcp.ack == self.snd_nxt:
                self.rcv_nxt = _seq_add(tcp.seq, 1)
                self.snd_una = tcp.ack
                self.peer_window = tcp.window
                self._clear_rtx_through(tcp.ack)
                self.state = "ESTABLISHED"
                self._send_ack()
                self.host.net.log("tcp.established", node=self.host.name,
                                  dst=wire.ip_str(self.remote_ip),
                                  port=self.remote_port)
                if self.on_established:
                    self.on_established(self)
            return

        if self.state == "SYN_RCVD":
            if tcp.flags & wire.ACK and tcp.ack == self.snd_nxt:
                self.snd_una = tcp.ack
                self.peer_window = tcp.window
                self._clear_rtx_through(tcp.ack)
                self.state = "ESTABLISHED"
                self.stack.promote_half_open(self)
            return

        # ordinary ack processing
        if tcp.flags & wire.ACK:
            self._process_ack(tcp.ack, tcp.window)
        if self.state == "CLOSED":
            return

        if len(tcp.payload):
            if tcp.seq == self.rcv_nxt:
                self.rcv_nxt = _seq_add(self.rcv_nxt, len(tcp.payload))
                self._send_ack()
                if self.on_data and self.state in ("ESTABLISHED", "FIN_WAIT_1",
                                                   "FIN_WAIT_2"):
                    self.on_data(self, tcp.payload)
            else:
                self._send_ack()  # duplicate ack, out-of-order dropped

        if tcp.flags & wire.FIN:
            if tcp.seq == self.rcv_nxt:
                self.rcv_nxt = _seq_add(self.rcv_nxt, 1)
                self._send_ack()
                if self.state == "ESTABLISHED":
                    self.state = "CLOSE_WAIT"
                    self.close()  # devices mirror the shutdown immediately
                elif self.state == "FIN_WAIT_1":
                    self.state = "CLOSING"
                elif self.state == "FIN_WAIT_2":
                    self._enter_time_wait()
            elif _seq_lt(tcp.seq, self.rcv_nxt):
                self._send_ack()  # retransmitted FIN, re-ack

    def _process_ack(self, ack: int, window: int) -> None:
        self.peer_window = window
        if not (_seq_lt(self.snd_una, ack) and _seq_le(ack, self.snd_nxt)):
            return
        self.snd_una = ack
        self._clear_rtx_through(ack)
        self._retries = 0
        self._rto_ns = TCP_RTO_NS
        self._cancel_timer()
        if self._rtx:
            self._arm_timer()
        if self.state == "FIN_WAIT_1" and ack == self.snd_nxt:
            self.state = "FIN_WAIT_2"
        elif self.state == "CLOSING" and ack == self.snd_nxt:
            self._enter_time_wait()
        elif self.state == "LAST_ACK" and ack == self.snd_nxt:
            self._teardown("closed", quiet=True)
        self._push()

    def _clear_rtx_through(self, ack: int) -> None:
        kept = []
        for seq, flags, payload in self._rtx:
            span = len(payload) + (1 if flags & (wire.SYN | wire.FIN) else 0)
            if not _seq_le(_seq_add(seq, span), ack):
                kept.append((seq, flags, payload))
        self._rtx = kept

    def _enter_time_wait(self) -> None:
        self.state = "TIME_WAIT"
        self._cancel_timer()
        self._notify_closed("closed")
        self.host.net.sched.call_in(
            TCP_TIME_WAIT_NS, lambda: self.stack.forget(self))

    def _teardown(self, reason: str, quiet: bool = False) -> None:
        was = self.state
        self.state = "CLOSED"
        self._cancel_timer()
        self.stack.forget(self)
        if was in ("SYN_RCVD",):
            return  # never surfaced to the application
        if not quiet and reason not in ("closed",):
            self.host.net.log("tcp.closed", node=self.host.name,
                              dst=wire.ip_str(self.remote_ip),
                              port=self.remote_port, reason=reason)
        self._notify_closed(reason)

    def _notify_closed(self, reason: str) -> None:
        if self._app_notified_close:
            return
        self._app_notified_close = True
        if self.on_closed:
            self.on_closed(self, reason)


class TcpStack:
    def __init__(self, host: Host):
        self.host = host
        self.conns: dict[tuple, TcpConn] = {}
        self.listeners: dict[int, tuple] = {}  # port -> (on_accept, policy, backlog)
        self.half_open: dict[int, set] = {}  # port -> set of conn keys
        self._isn = 0
        self._ephemeral = 49152

    def next_isn(self) -> int:
        self._isn = (self._isn + 64_001) & 0xFFFFFFFF
        return self._isn

    def next_port(self) -> int:
        port = self._ephemeral
        self._ephemeral += 1
        if self._ephemeral > 65500:
            self._ephemeral = 49152
        return port

    def listen(self, port, on_accept, accept_policy=None,
               backlog=TCP_BACKLOG) -> None:
        self.listeners[port] = (on_accept, accept_policy, backlog)
        self.half_open.setdefault(port, set())

    def unlisten(self, port) -> None:
        self.listeners.pop(port, None)

    def connect(self, dst_ip: bytes, dst_port: int, *, on_established=None,
                on_data=None, on_closed=None) -> TcpConn:
        conn = TcpConn(self, self.host.ip, self.next_port(), dst_ip, dst_port,
                       server=False, on_established=on_established,
                       on_data=on_data, on_closed=on_closed)
        self.conns[conn.key] = conn
        conn.open()
        return conn

    def on_segment(self, pkt: wire.Ipv4) -> None:
        tcp: wire.Tcp = pkt.payload
        key = (pkt.dst, tcp.dst_port, pkt.src, tcp.src_port)
        conn = self.conns.get(key)
        if conn is not None:
            conn.on_segment(tcp)
            return
        if tcp.flags & wire.SYN and not (tcp.flags & wire.ACK):
            self._on_syn(pkt, tcp, key)
            return
        if tcp.flags & wire.RST:
            return
        self._send_rst(pkt, tcp)

    def _on_syn(self, pkt: wire.Ipv4, tcp: wire.Tcp, key: tuple) -> None:
        listener = self.listeners.get(tcp.dst_port)
        if listener is None:
            self._send_rst(pkt, tcp)
            return
        on_accept, policy, backlog = listener
        if policy is not None and not policy(pkt.src):
            self.host.net.log("tcp.refused", node=self.host.name,
                              src=wire.ip_str(pkt.src), port=tcp.dst_port)
            self._send_rst(pkt, tcp)
            return
        pending = self.half_open[tcp.dst_port]
        if len(pending) >= backlog:
            return  # silently dropped, half-open exhaustion
        conn = TcpConn(self, pkt.dst, tcp.dst_port, pkt.src, tcp.src_port,
                       server=True)
        conn._accept_cb = on_accept
        conn.state = "SYN_RCVD"
        conn.rcv_nxt = _seq_add(tcp.seq, 1)
        conn.peer_window = tcp.window
        self.conns[conn.key] = conn
        pending.add(conn.key)
        conn._track_and_send(wire.SYN | wire.ACK, seq=conn.iss)
        conn.snd_nxt = _seq_add(conn.iss, 1)
        conn._half_open_timer = self.host.net.sched.call_in(
            TCP_HALF_OPEN_TIMEOUT_NS, lambda: self.drop_half_open(conn))

    def promote_half_open(self, conn: TcpConn) -> None:
        self.half_open.get(conn.local_port, set()).discard(conn.key)
        timer = getattr(conn, "_half_open_timer", None)
        if timer is not None:
            self.host.net.sched.cancel(timer)
        self.host.net.log("tcp.accepted", node=self.host.name,
                          src=wire.ip_str(conn.remote_ip),
                          port=conn.local_port)
        cb = getattr(conn, "_accept_cb", None)
        if cb:
            cb(conn)

    def drop_half_open(self, conn: TcpConn) -> None:
        if conn.state != "SYN_RCVD":
            return
        conn.state = "CLOSED"
        conn._cancel_timer()
        self.half_open.get(conn.local_port, set()).discard(conn.key)
        self.conns.pop(conn.key, None)

    def forget(self, conn: TcpConn) -> None:
        self.half_open.get(conn.local_port, set()).discard(conn.key)
        self.conns.pop(conn.key, None)

    def _send_rst(self, pkt: wire.Ipv4, tcp: wire.Tcp) -> None:
        if tcp.flags & wire.ACK:
            seq, ack, flags = tcp.ack, 0, wire.RST
        else:
            span = len(tcp.payload) + (1 if tcp.flags & wire.SYN else 0)
            seq, ack, flags = 0, _seq_add(tcp.seq, span), wire.RST | wire.ACK
        rst = wire.Tcp(tcp.dst_port, tcp.src_port, seq, ack, flags, 0)
        self.host.send_ip_packet(wire.Ipv4(
            pkt.dst, pkt.src, wire.PROTO_TCP, rst,
            ident=self.host.next_ident()))

    # -- ICMP error handling ------------------------------------------------------

    def on_icmp_error(self, icmp: wire.Icmp) -> None:
        original = self._parse_quoted(icmp.payload)
        if original is None:
            return
        src_ip, dst_ip, src_port, dst_port = original
        conn = self.conns.get((src_ip, src_port, dst_ip, dst_port))
        if conn is not None and conn.state == "SYN_SENT":
            conn.abort("unreachable", send_rst=False)

    def on_next_hop_unreachable(self, ip: bytes,
                                frames: list[wire.Ipv4]) -> None:
        for pkt in frames:
            if pkt.proto != wire.PROTO_TCP or not isinstance(pkt.payload, wire.Tcp):
                continue
            key = (pkt.src, pkt.payload.src_port, pkt.dst, pkt.payload.dst_port)
            conn = self.conns.get(key)
            if conn is not None and conn.state == "SYN_SENT":
                conn.abort("unreachable", send_rst=False)

    @staticmethod
    def _parse_quoted(quoted: bytes):
        if len(quoted) < 28:
            return None
        proto = quoted[9]
        if proto != wire.PROTO_TCP:
            return None
        src_ip, dst_ip = quoted[12:16], quoted[16:20]
        src_port, dst_port = struct.unpack("!HH", quoted[20:24])
        return src_ip, dst_ip, src_port, dst_port

"""Discrete-event core: virtual clock, links with delay/bandwidth/queues,
MAC-learning switches, and the network container.

The clock is integer nanoseconds. Events execute in (timestamp,
insertion-order), which together with named RNG streams makes every run
bit-reproducible for a given scenario and seed.
"""

from __future__ import annotations

import heapq
import time
from typing import Callable

from ..process import RngStreams
from . import wire
from .pcap import PcapWriter

NS_PER_S = 1_000_000_000
NS_PER_MS = 1_000_000


def s_to_ns(seconds: float) -> int:
    return round(seconds * NS_PER_S)


class Scheduler:
    """Event queue over virtual nanoseconds with insertion-order tiebreak."""

    def __init__(self) -> None:
        self.now_ns = 0
        self._heap: list[list] = []
        self._counter = 0

    def call_at(self, t_ns: int, fn: Callable[[], None]) -> list:
        if t_ns < self.now_ns:
            t_ns = self.now_ns
        self._counter += 1
        entry = [t_ns, self._counter, fn, False]
        heapq.heappush(self._heap, entry)
        return entry

    def call_in(self, dt_ns: int, fn: Callable[[], None]) -> list:
        return self.call_at(self.now_ns + max(0, dt_ns), fn)

    @staticmethod
    def cancel(handle: list) -> None:
        handle[3] = True

    def peek_ns(self) -> int | None:
        while self._heap and self._heap[0][3]:
            heapq.heappop(self._heap)
        return self._heap[0][0] if self._heap else None

    def run_until(self, t_ns: int) -> int:
        """Run every event with timestamp <= t_ns; returns events processed."""
        processed = 0
        while self._heap:
            entry = self._heap[0]
            if entry[3]:
                heapq.heappop(self._heap)
                continue
            if entry[0] > t_ns:
                break
            heapq.heappop(self._heap)
            self.now_ns = entry[0]
            entry[2]()
            processed += 1
        if self.now_ns < t_ns:
            self.now_ns = t_ns
        return processed

    def run_one(self) -> bool:
        """Run the next pending event; False when the queue is drained."""
        while self._heap:
            entry = heapq.heappop(self._heap)
            if entry[3]:
                continue
            self.now_ns = entry[0]
            entry[2]()
            return True
        return False


class Node:
    kind = "node"

    def __init__(self, name: str, net: "Network"):
        self.name = name
        self.net = net
        self.alive = True
        self.links: list[Link] = []

    def receive(self, frame: wire.Frame, link: "Link") -> None:
        raise NotImplementedError

    def attach(self, link: "Link") -> None:
        self.links.append(link)


class _Direction:
    __slots__ = ("busy_until_ns", "queued", "sent", "delivered", "dropped",
                 "last_arrival_ns", "hop_delays_ns", "hop_waits_ns",
                 "hop_wall_ns")

    def __init__(self) -> None:
        self.busy_until_ns = 0
        self.queued = 0
        self.sent = 0
        self.delivered = 0
        self.dropped = 0
        self.last_arrival_ns = 0
        self.hop_delays_ns: list[int] = []  # enqueue -> delivery, virtual
        self.hop_waits_ns: list[int] = []   # queueing share of the above
        self.hop_wall_ns: list[int] = []    # wall clock, real-time mode


class Link:
    """Point-to-point link: serialization + propagation delay + drop-tail queue."""

    def __init__(self, net: "Network", index: int, a: Node, b: Node,
                 delay_ms: float = 2.0, jitter_ms: float = 0.0,
                 bandwidth_mbps: float = 100.0, queue_frames: int = 100):
        if bandwidth_mbps <= 0:
            raise ValueError("bandwidth_mbps must be > 0")
        if delay_ms < 0:
            raise ValueError("delay_ms must be >= 0")
        self.net = net
        self.index = index
        self.a = a
        self.b = b
        self.delay_ns = round(delay_ms * NS_PER_MS)
        self.jitter_ns = round(jitter_ms * NS_PER_MS)
        self.bandwidth_mbps = bandwidth_mbps
        self.queue_frames = queue_frames
        self._dir = {id(a): _Direction(), id(b): _Direction()}
        self._rng = None
        self._congestion_logged_ns = {id(a): -NS_PER_S, id(b): -NS_PER_S}
        a.attach(self)
        b.attach(self)

    def peer(self, node: Node) -> Node:
        return self.b if node is self.a else self.a

    def serialization_ns(self, n_bytes: int) -> int:
        return round(n_bytes * 8_000 / self.bandwidth_mbps)

    def transmit(self, origin: Node, frame: wire.Frame) -> bool:
        """Enqueue a frame from `origin`; returns False when tail-dropped."""
        sched = self.net.sched
        direction = self._dir[id(origin)]
        direction.sent += 1
        now = sched.now_ns
        if direction.queued >= self.queue_frames:
            direction.dropped += 1
            self._log_congestion(origin, direction, now)
            return False
        direction.queued += 1
        start = max(now, direction.busy_until_ns)
        done = start + self.serialization_ns(frame.wire_len())
        direction.busy_until_ns = done
        arrival = done + self.delay_ns + self._jitter()
        if arrival < direction.last_arrival_ns:  # links never reorder
            arrival = direction.last_arrival_ns
        direction.last_arrival_ns = arrival
        dest = self.peer(origin)
        sched.call_at(done, self._dequeue_cb(direction))
        sent_ns = now if self.net.record_hops else -1
        wall_ns = time.perf_counter_ns() if self.net.record_hops_wall else -1
        sched.call_at(arrival, self._deliver_cb(
            direction, dest, frame, sent_ns, start - now, wall_ns))
        return True

    def _dequeue_cb(self, direction):
        def dequeue():
            direction.queued -= 1
        return dequeue

    def _deliver_cb(self, direction, dest, frame, sent_ns, wait_ns, wall_ns):
        def deliver():
            if sent_ns >= 0:
                direction.hop_delays_ns.append(self.net.sched.now_ns - sent_ns)
                direction.hop_waits_ns.append(wait_ns)
            if wall_ns >= 0:
                direction.hop_wall_ns.append(
                    time.perf_counter_ns() - wall_ns)
            if not dest.alive:
                direction.dropped += 1
                return
            direction.delivered += 1
            self.net.capture(dest, frame)
            dest.receive(frame, self)
        return deliver

    def _jitter(self) -> int:
        if self.jitter_ns == 0:
            return 0
        if self._rng is None:
            self._rng = self.net.rng.get(f"link:{self.index}:jitter")
        return self._rng.randrange(self.jitter_ns + 1)

    def _log_congestion(self, origin: Node, direction: _Direction, now: int) -> None:
        # one event per second per direction, not one per dropped frame
        if now - self._congestion_logged_ns[id(origin)] >= NS_PER_S:
            self._congestion_logged_ns[id(origin)] = now
            self.net.log("net.link.congested", link=self.index,
                         origin=origin.name, dropped=direction.dropped)

    def stats(self) -> dict:
        out = {}
        for node, key in ((self.a, "a_to_b"), (self.b, "b_to_a")):
            d = self._dir[id(node)]
            out[key] = {
                "sent": d.sent, "delivered": d.delivered,
                "dropped": d.dropped,
                "in_flight": d.sent - d.delivered - d.dropped,
            }
        return out

    def hop_delays_ns(self) -> list[int]:
        return (self._dir[id(self.a)].hop_delays_ns
                + self._dir[id(self.b)].hop_delays_ns)

    def hop_waits_ns(self) -> list[int]:
        return (self._dir[id(self.a)].hop_waits_ns
                + self._dir[id(self.b)].hop_waits_ns)

    def hop_wall_ns(self) -> list[int]:
        return (self._dir[id(self.a)].hop_wall_ns
                + self._dir[id(self.b)].hop_wall_ns)


class Switch(Node):
    """Transparent learning switch; floods unknown and broadcast frames."""

    kind = "switch"

    def __init__(self, name: str, net: "Network"):
        super().__init__(name, net)
        self.table: dict[bytes, Link] = {}

    def receive(self, frame: wire.Frame, link: Link) -> None:
        self.table[frame.src_mac] = link
        if frame.dst_mac != wire.BROADCAST_MAC:
            out = self.table.get(frame.dst_mac)
            if out is not None:
                if out is not link:
                    out.transmit(self, frame)
                return
        for out in self.links:
            if out is not link:
                out.transmit(self, frame)


class Network:
    """Container for nodes and links plus capture and logging hooks."""

    def __init__(self, sched: Scheduler, rng: RngStreams,
                 log: Callable[..., None] | None = None):
        self.sched = sched
        self.rng = rng
        self.nodes: dict[str, Node] = {}
        self.links: list[Link] = []
        self._captures: dict[str, PcapWriter] = {}
        self._log = log or (lambda kind, **fields: None)
        self.record_hops = False
        self.record_hops_wall = False

    def log(self, kind: str, **fields) -> None:
        self._log(kind, **fields)

    def add_node(self, node: Node) -> Node:
        if node.name in self.nodes:
            raise ValueError(f"duplicate node name {node.name!r}")
        self.nodes[node.name] = node
        return node

    def add_switch(self, name: str) -> Switch:
        return self.add_node(Switch(name, self))

    def connect(self, a: str | Node, b: str | Node, *, delay_ms: float = 2.0,
                jitter_ms: float = 0.0, bandwidth_mbps: float = 100.0,
                queue_frames: int = 100) -> Link:
        node_a = self.nodes[a] if isinstance(a, str) else a
        node_b = self.nodes[b] if isinstance(b, str) else b
        link = Link(self, len(self.links), node_a, node_b, delay_ms,
                    jitter_ms, bandwidth_mbps, queue_frames)
        self.links.append(link)
        return link

    def remove_node(self, name: str) -> None:
        """Physically remove a node: frames to it vanish, its state freezes."""
        node = self.nodes[name]
        node.alive = False
        self.log("net.node.removed", node=name)

    # -- capture -------------------------------------------------------------

    def add_capture(self, node_name: str, path) -> PcapWriter:
        if node_name not in self.nodes:
            raise ValueError(f"capture point {node_name!r} is not a node")
        writer = PcapWriter(path)
        self._captures[node_name] = writer
        return writer

    def capture(self, node: Node, frame: wire.Frame) -> None:
        writer = self._captures.get(node.name)
        if writer is not None:
            writer.write(self.sched.now_ns // 1000, frame.serialize())

    def close_captures(self) -> None:
        for writer in self._captures.values():
            writer.close()

    # -- metrics ---------------------------------------------------------------

    def conservation_ok(self) -> bool:
        """frames delivered + dropped + in-flight == frames sent, per link."""
        for link in self.links:
            for stats in link.stats().values():
                if stats["in_flight"] < 0:
                    return False
                if (stats["delivered"] + stats["dropped"]
                        + stats["in_flight"] != stats["sent"]):
                    return False
        return True

    def all_hop_delays_ns(self) -> list[int]:
        out: list[int] = []
        for link in self.links:
            out.extend(link.hop_delays_ns())
        return out

    def all_hop_waits_ns(self) -> list[int]:
        out: list[int] = []
        for link in self.links:
            out.extend(link.hop_waits_ns())
        return out

    def all_hop_wall_ns(self) -> list[int]:
        out: list[int] = []
        for link in self.links:
            out.extend(link.hop_wall_ns())
        return out


def run_realtime(sched: Scheduler, until_ns: int,
                 poll: Callable[[], None] | None = None,
                 poll_interval_ns: int = 50 * NS_PER_MS) -> dict:
    """Pace the event loop 1:1 against the wall clock.

    Virtual time never runs ahead of wall time by more than a sleep quantum;
    ``poll`` runs at least every ``poll_interval_ns`` so external inputs
    (service API commands) get picked up during idle stretches.
    """
    start_wall = time.perf_counter()
    behind_ns_max = 0
    while True:
        if poll:
            poll()
        next_ns = sched.peek_ns()
        target_ns = min(x for x in (next_ns, until_ns,
                                    sched.now_ns + poll_interval_ns)
                        if x is not None)
        if target_ns > until_ns:
            target_ns = until_ns
        wall_target = start_wall + target_ns / NS_PER_S
        while True:
            remaining = wall_target - time.perf_counter()
            if remaining <= 0:
                break
            time.sleep(min(remaining, 0.005))
        behind = (time.perf_counter() - start_wall) * NS_PER_S - target_ns
        behind_ns_max = max(behind_ns_max, int(behind))
        sched.run_until(target_ns)
        if target_ns >= until_ns:
            break
    return {"behind_ns_max": behind_ns_max}

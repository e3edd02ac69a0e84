"""Packet simulation: links, switches, ARP, ICMP and wire encoding."""

import pytest

from voltnet.netsim import wire
from voltnet.netsim.core import NS_PER_MS, NS_PER_S, Network, Scheduler
from voltnet.netsim.pcap import PcapWriter, read_pcap
from voltnet.netsim.stack import Host, Router


class Net:
    """Small test harness bundling scheduler + network + event capture."""

    def __init__(self, seed=1):
        from voltnet.process import RngStreams
        self.sched = Scheduler()
        self.events = []
        self.net = Network(self.sched, RngStreams(seed),
                           log=lambda kind, **f: self.events.append((self.sched.now_ns, kind, f)))

    def host(self, name, ip, gw=None, mac=None):
        idx = len(self.net.nodes)
        mac = mac or f"02:00:00:00:00:{idx + 1:02x}"
        prefix = 24
        return self.net.add_node(Host(name, self.net, mac, ip, prefix, gw))

    def run(self, seconds):
        self.sched.run_until(round(seconds * NS_PER_S))

    def kinds(self, kind):
        return [e for e in self.events if e[1] == kind]


def two_hosts(delay_ms=2.0, bw=100.0, **link_kw):
    """h1 -- link -- h2, same subnet."""
    n = Net()
    h1 = n.host("h1", "10.0.0.1")
    h2 = n.host("h2", "10.0.0.2")
    n.net.connect(h1, h2, delay_ms=delay_ms, bandwidth_mbps=bw, **link_kw)
    return n, h1, h2


class TestScheduler:
    def test_empty_network_has_no_events(self):
        n = Net()
        assert n.sched.run_until(10 * NS_PER_S) == 0
        assert n.sched.now_ns == 10 * NS_PER_S

    def test_insertion_order_at_same_timestamp(self):
        n = Net()
        seen = []
        n.sched.call_at(5, lambda: seen.append("a"))
        n.sched.call_at(5, lambda: seen.append("b"))
        n.sched.call_at(3, lambda: seen.append("c"))
        n.sched.run_until(10)
        assert seen == ["c", "a", "b"]

    def test_cancel(self):
        n = Net()
        seen = []
        handle = n.sched.call_at(5, lambda: seen.append("x"))
        n.sched.cancel(handle)
        n.sched.run_until(10)
        assert seen == []


class TestLinkModel:
    def test_delivery_at_delay_plus_serialization(self):
        # 2 ms link at 100 Mbit: a 100-byte frame serializes in 8 us
        n, h1, h2 = two_hosts()
        arrivals = []
        h2.packet_hook = lambda f: arrivals.append(n.sched.now_ns) or True
        frame = wire.eth_ip(h1.iface.mac, h2.iface.mac,
                            wire.Ipv4(h1.ip, h2.ip, 99, b"x" * 66))
        h1.emit(frame)
        n.run(1)
        assert frame.wire_len() == 100
        assert arrivals == [2 * NS_PER_MS + 8_000]

    def test_three_link_path_delay_additive(self):
        # h1 - sw1 - sw2 - h2 over three 2 ms links; one-way >= 6 ms
        n = Net()
        h1 = n.host("h1", "10.0.0.1")
        h2 = n.host("h2", "10.0.0.2")
        sw1 = n.net.add_switch("sw1")
        sw2 = n.net.add_switch("sw2")
        n.net.connect(h1, sw1, delay_ms=2.0)
        n.net.connect(sw1, sw2, delay_ms=2.0)
        n.net.connect(sw2, h2, delay_ms=2.0)
        arrivals = []
        h2.packet_hook = lambda f: (
            arrivals.append(n.sched.now_ns) or True
            if f.ethertype == wire.ETHERTYPE_IPV4 else False)
        h1.send_ip_packet(wire.Ipv4(h1.ip, h2.ip, 99, b"y" * 30))
        n.run(2)
        assert arrivals and arrivals[0] >= 6 * NS_PER_MS

    def test_multi_router_static_routes(self):
        # h1 - r1 - r2 - h2; r1/r2 need static routes for the far subnets
        n = Net()
        h1 = n.host("h1", "10.0.0.1", gw="10.0.0.254")
        r1 = n.net.add_node(Router("r1", n.net))
        r1.add_interface("02:00:00:00:01:01", "10.0.0.254", 24)
        r1.add_interface("02:00:00:00:01:02", "10.0.1.1", 24)
        r2 = n.net.add_node(Router("r2", n.net))
        r2.add_interface("02:00:00:00:02:01", "10.0.1.2", 24)
        r2.add_interface("02:00:00:00:02:02", "10.0.2.254", 24)
        h2 = n.host("h2", "10.0.2.1", gw="10.0.2.254")
        n.net.connect(h1, r1, delay_ms=2.0)
        n.net.connect(r1, r2, delay_ms=2.0)
        n.net.connect(r2, h2, delay_ms=2.0)
        r1.add_route("10.0.2.0", 24, "10.0.1.2")
        r2.add_route("10.0.0.0", 24, "10.0.1.1")
        arrivals = []
        h2.packet_hook = lambda f: (
            arrivals.append(f) or True
            if f.ethertype == wire.ETHERTYPE_IPV4 else False)
        h1.send_ip_packet(wire.Ipv4(h1.ip, h2.ip, 99, b"routed"))
        n.run(2)
        assert len(arrivals) == 1
        assert arrivals[0].payload.ttl == 62  # two router hops

    def test_queue_drop_tail(self):
        # 1 Mbit link, 1500-byte frames serialize in 12 ms each; queue 4
        n, h1, h2 = two_hosts(delay_ms=1.0, bw=1.0, queue_frames=4)
        pkt = wire.Ipv4(h1.ip, h2.ip, 99, b"z" * 1400)
        frame = wire.eth_ip(h1.iface.mac, h2.iface.mac, pkt)
        for _ in range(10):
            h1.emit(frame)
        n.run(5)
        link = n.net.links[0]
        stats = link.stats()["a_to_b"]
        assert stats["sent"] == 10
        assert stats["dropped"] == 6
        assert stats["delivered"] == 4
        assert n.net.conservation_ok()

    def test_conservation_counts(self):
        n, h1, h2 = two_hosts()
        frame = wire.eth_ip(h1.iface.mac, h2.iface.mac,
                            wire.Ipv4(h1.ip, h2.ip, 99, b"q"))
        for _ in range(5):
            h1.emit(frame)
        n.run(0.001)  # mid-flight
        assert n.net.conservation_ok()
        n.run(1)
        assert n.net.conservation_ok()
        assert n.net.links[0].stats()["a_to_b"]["delivered"] == 5


class TestSwitch:
    def net_with_switch(self):
        n = Net()
        sw = n.net.add_switch("sw")
        hosts = [n.host(f"h{i}", f"10.0.0.{i}") for i in (1, 2, 3)]
        for h in hosts:
            n.net.connect(h, sw, delay_ms=1.0)
        return n, sw, hosts

    def test_unknown_destination_floods(self):
        n, sw, (h1, h2, h3) = self.net_with_switch()
        seen = {h.name: [] for h in (h2, h3)}
        h2.packet_hook = lambda f: seen["h2"].append(f) or True
        h3.packet_hook = lambda f: seen["h3"].append(f) or True
        frame = wire.eth_ip(h1.iface.mac, h2.iface.mac,
                            wire.Ipv4(h1.ip, h2.ip, 99, b"a"))
        h1.emit(frame)
        n.run(1)
        assert len(seen["h2"]) == 1 and len(seen["h3"]) == 1  # flooded

    def test_learned_destination_unicasts(self):
        n, sw, (h1, h2, h3) = self.net_with_switch()
        seen = {h.name: [] for h in (h2, h3)}
        h2.packet_hook = lambda f: seen["h2"].append(f) or True
        h3.packet_hook = lambda f: seen["h3"].append(f) or True
        # teach the switch h2's port (this frame floods, h1 unknown yet)
        h2.emit(wire.eth_ip(h2.iface.mac, h1.iface.mac,
                            wire.Ipv4(h2.ip, h1.ip, 99, b"t")))
        n.run(1)
        seen["h2"].clear()
        seen["h3"].clear()
        frame = wire.eth_ip(h1.iface.mac, h2.iface.mac,
                            wire.Ipv4(h1.ip, h2.ip, 99, b"b"))
        h1.emit(frame)
        n.run(2)
        assert len(seen["h2"]) == 1
        assert len(seen["h3"]) == 0


class TestArp:
    def test_cold_cache_request_reply_then_data(self):
        n, h1, h2 = two_hosts()
        frames = []
        h2.packet_hook = lambda f: frames.append(f) and False
        h1.send_ip_packet(wire.Ipv4(h1.ip, h2.ip, 99, b"hello"))
        n.run(1)
        kinds = [f.ethertype for f in frames]
        assert kinds[0] == wire.ETHERTYPE_ARP  # request reaches h2
        assert kinds[1] == wire.ETHERTYPE_IPV4  # then the data frame

    def test_warm_cache_sends_exactly_one_frame(self):
        n, h1, h2 = two_hosts()
        h1.send_ip_packet(wire.Ipv4(h1.ip, h2.ip, 99, b"warmup"))
        n.run(1)
        sent_before = n.net.links[0].stats()["a_to_b"]["sent"]
        h1.send_ip_packet(wire.Ipv4(h1.ip, h2.ip, 99, b"data"))
        n.run(1)
        sent_after = n.net.links[0].stats()["a_to_b"]["sent"]
        assert sent_after - sent_before == 1

    def test_entry_expires_after_timeout(self):
        n, h1, h2 = two_hosts()
        h1.arp.insert(h2.ip, h2.iface.mac, n.sched.now_ns)
        t = n.sched.now_ns
        assert h1.arp.lookup(h2.ip, t + 29 * NS_PER_S) is not None
        assert h1.arp.lookup(h2.ip, t + 30 * NS_PER_S + 1) is None

    def test_unsolicited_reply_overwrites(self):
        n, h1, h2 = two_hosts()
        h1.arp.insert(h2.ip, h2.iface.mac, 0)
        evil_mac = wire.mac_bytes("02:66:66:66:66:66")
        forged = wire.Arp(wire.ARP_REPLY, evil_mac, h2.ip,
                          h1.iface.mac, h1.ip)
        h2.emit(wire.eth_arp(h2.iface.mac, h1.iface.mac, forged))
        n.run(1)
        assert h1.arp.lookup(h2.ip, n.sched.now_ns) == evil_mac

    def test_resolution_fails_after_3_retries(self):
        n, h1, h2 = two_hosts()
        unreachable = []
        h1.on_unreachable = lambda ip: unreachable.append(wire.ip_str(ip))
        h1.send_ip_packet(wire.Ipv4(h1.ip, wire.ip_bytes("10.0.0.99"), 99, b"x"))
        n.run(10)
        assert unreachable == ["10.0.0.99"]
        fails = n.kinds("arp.resolution-failed")
        assert len(fails) == 1
        # 3 requests total: t=0, 1 s, 2 s; failure at 3 s
        assert fails[0][0] == 3 * NS_PER_S


class TestRouterIcmp:
    def routed_pair(self):
        n = Net()
        h1 = n.host("h1", "10.0.0.1", gw="10.0.0.254")
        r = n.net.add_node(Router("r", n.net))
        r.add_interface("02:00:00:00:0a:01", "10.0.0.254", 24)
        r.add_interface("02:00:00:00:0a:02", "10.0.1.254", 24)
        h2 = n.host("h2", "10.0.1.1", gw="10.0.1.254")
        n.net.connect(h1, r, delay_ms=1.0)
        n.net.connect(r, h2, delay_ms=1.0)
        return n, h1, r, h2

    def test_forwarding_across_subnets(self):
        n, h1, r, h2 = self.routed_pair()
        got = []
        h2.packet_hook = lambda f: (
            got.append(f) or True
            if f.ethertype == wire.ETHERTYPE_IPV4 else False)
        h1.send_ip_packet(wire.Ipv4(h1.ip, h2.ip, 99, b"cross"))
        n.run(1)
        assert len(got) == 1
        assert got[0].payload.ttl == 63  # decremented once

    def test_removed_host_triggers_icmp_unreachable(self):
        n, h1, r, h2 = self.routed_pair()
        n.net.remove_node("h2")
        icmp_seen = []
        h1.packet_hook = lambda f: (
            icmp_seen.append(f) or True
            if f.ethertype == wire.ETHERTYPE_IPV4
            and f.payload.proto == wire.PROTO_ICMP else False)
        h1.send_ip_packet(wire.Ipv4(h1.ip, h2.ip, wire.PROTO_TCP,
                                    wire.Tcp(1000, 2404, 0, 0, wire.SYN)))
        n.run(10)
        assert len(icmp_seen) == 1
        icmp = icmp_seen[0].payload.payload
        assert icmp.type == wire.ICMP_UNREACHABLE
        assert icmp.code == wire.UNREACH_HOST
        assert n.kinds("icmp.unreachable-sent")

    def test_no_route_gives_net_unreachable(self):
        n, h1, r, h2 = self.routed_pair()
        seen = []
        h1.packet_hook = lambda f: (
            seen.append(f) or True
            if f.ethertype == wire.ETHERTYPE_IPV4
            and f.payload.proto == wire.PROTO_ICMP else False)
        h1.send_ip_packet(wire.Ipv4(h1.ip, wire.ip_bytes("203.0.113.9"),
                                    wire.PROTO_TCP,
                                    wire.Tcp(1000, 80, 0, 0, wire.SYN)))
        n.run(5)
        assert seen and seen[0].payload.payload.code == wire.UNREACH_NET

    def test_echo_request_reply(self):
        n, h1, r, h2 = self.routed_pair()
        replies = []
        h1.packet_hook = lambda f: (
            replies.append(f) or True
            if f.ethertype == wire.ETHERTYPE_IPV4
            and f.payload.proto == wire.PROTO_ICMP else False)
        h1.send_ip_packet(wire.Ipv4(
            h1.ip, h2.ip, wire.PROTO_ICMP,
            wire.Icmp(wire.ICMP_ECHO_REQUEST, 0, b"\x00\x01\x00\x01", b"ping")))
        n.run(1)
        assert replies and replies[0].payload.payload.type == wire.ICMP_ECHO_REPLY
        assert replies[0].payload.payload.payload == b"ping"


class TestWireCodec:
    def test_ethernet_minimum_padding(self):
        f = wire.eth_arp(b"\x02" * 6, wire.BROADCAST_MAC,
                         wire.Arp(1, b"\x02" * 6, b"\x0a\x00\x00\x01",
                                  b"\x00" * 6, b"\x0a\x00\x00\x02"))
        data = f.serialize()
        assert len(data) == 60 == f.wire_len()

    def test_frame_roundtrip_tcp(self):
        tcp = wire.Tcp(1234, 2404, 111, 222, wire.ACK | wire.PSH,
                       65535, b"\x68\x04\x07\x00\x00\x00")
        pkt = wire.Ipv4(wire.ip_bytes("10.0.0.1"), wire.ip_bytes("10.0.1.2"),
                        wire.PROTO_TCP, tcp, ttl=63, ident=42)
        f = wire.eth_ip(wire.mac_bytes("02:00:00:00:00:01"),
                        wire.mac_bytes("02:00:00:00:00:02"), pkt)
        back = wire.parse_frame(f.serialize())
        assert back.payload.src == pkt.src
        assert back.payload.payload.payload == tcp.payload
        assert back.payload.payload.seq == 111
        assert back.payload.ttl == 63

    def test_frame_roundtrip_icmp_and_arp(self):
        icmp = wire.Icmp(3, 1, b"\x00\x00\x00\x00", b"quoted-bytes" * 2)
        pkt = wire.Ipv4(wire.ip_bytes("10.0.0.254"), wire.ip_bytes("10.0.0.1"),
                        wire.PROTO_ICMP, icmp)
        back = wire.parse_frame(wire.eth_ip(b"\x02" * 6, b"\x04" * 6, pkt).serialize())
        assert back.payload.payload.code == 1
        arp = wire.Arp(2, b"\x02" * 6, b"\x0a\x00\x00\x05",
                       b"\x04" * 6, b"\x0a\x00\x00\x06")
        back = wire.parse_frame(wire.eth_arp(b"\x02" * 6, b"\x04" * 6, arp).serialize())
        assert back.payload.sender_ip == arp.sender_ip

    def test_corrupted_checksum_detected(self):
        tcp = wire.Tcp(1, 2, 3, 4, wire.ACK, 100, b"data")
        pkt = wire.Ipv4(b"\x0a\x00\x00\x01", b"\x0a\x00\x00\x02",
                        wire.PROTO_TCP, tcp)
        raw = bytearray(wire.eth_ip(b"\x02" * 6, b"\x04" * 6, pkt).serialize())
        raw[54] ^= 0xFF  # flip a TCP payload byte (eth 14 + ip 20 + tcp 20)
        with pytest.raises(wire.ParseError):
            wire.parse_frame(bytes(raw))

    def test_oversize_send_rejected(self):
        n, h1, h2 = two_hosts()
        with pytest.raises(ValueError):
            h1.send_ip_packet(wire.Ipv4(h1.ip, h2.ip, 99, b"x" * 1481))


class TestPcap:
    def test_capture_roundtrip(self, tmp_path):
        n, h1, h2 = two_hosts()
        n.net.add_capture("h2", tmp_path / "h2.pcap")
        h1.send_ip_packet(wire.Ipv4(h1.ip, h2.ip, 99, b"captured"))
        n.run(1)
        n.net.close_captures()
        records = read_pcap(tmp_path / "h2.pcap")
        # ARP request + data frame arrive at h2; its ARP reply is sent by h2
        assert len(records) == 3
        parsed = [wire.parse_frame(data) for _, data in records]
        assert parsed[0].ethertype == wire.ETHERTYPE_ARP
        assert parsed[-1].payload.payload == b"captured"
        assert records[0][0] <= records[-1][0]

    def test_writer_golden_header(self, tmp_path):
        path = tmp_path / "empty.pcap"
        PcapWriter(path).close()
        data = path.read_bytes()
        assert data[:4] == bytes.fromhex("d4c3b2a1")  # little-endian magic
        assert data[20:24] == bytes.fromhex("01000000")  # Ethernet linktype


class TestDeterminism:
    def scenario_events(self, seed):
        n = Net(seed)
        h1 = n.host("h1", "10.0.0.1")
        h2 = n.host("h2", "10.0.0.2")
        n.net.connect(h1, h2, delay_ms=2.0, jitter_ms=1.0)
        deliveries = []
        h2.packet_hook = (lambda f: deliveries.append(
            (n.sched.now_ns, f.payload.payload)) or True)
        for i in range(20):
            n.sched.call_at(i * 10_000_000, lambda i=i: h1.emit(
                wire.eth_ip(h1.iface.mac, h2.iface.mac,
                            wire.Ipv4(h1.ip, h2.ip, 99, b"m%02d" % i))))
        n.run(5)
        return deliveries

    def test_same_seed_identical(self):
        assert self.scenario_events(7) == self.scenario_events(7)

    def test_different_seed_differs(self):
        a = self.scenario_events(7)
        b = self.scenario_events(8)
        assert [x[1] for x in a] == [x[1] for x in b]  # same frames
        assert a != b  # different jitter draws

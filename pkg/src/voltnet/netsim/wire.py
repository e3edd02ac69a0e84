"""Frame objects with exact wire encoding for Ethernet II, ARP, IPv4, TCP, ICMP.

Frames move through the simulation as objects; serialization happens only
at capture points (pcap) and in codec tests, so ``wire_len`` is computed
without building bytes. Serialization produces analyzer-clean output:
correct IPv4/TCP/ICMP checksums and minimum-size Ethernet padding.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_ARP = 0x0806

PROTO_ICMP = 1
PROTO_TCP = 6

BROADCAST_MAC = b"\xff\xff\xff\xff\xff\xff"

# TCP flag bits
FIN = 0x01
SYN = 0x02
RST = 0x04
PSH = 0x08
ACK = 0x10

ARP_REQUEST = 1
ARP_REPLY = 2

ICMP_ECHO_REPLY = 0
ICMP_UNREACHABLE = 3
ICMP_ECHO_REQUEST = 8
ICMP_TIME_EXCEEDED = 11
UNREACH_NET = 0
UNREACH_HOST = 1
UNREACH_PORT = 3

ETH_HEADER = 14
ETH_MIN_FRAME = 60  # without FCS
MTU_BYTES = 1500


class ParseError(ValueError):
    pass


def mac_bytes(text: str) -> bytes:
    parts = text.split(":")
    if len(parts) != 6:
        raise ValueError(f"bad MAC {text!r}")
    return bytes(int(p, 16) for p in parts)


def mac_str(mac: bytes) -> str:
    return ":".join(f"{b:02x}" for b in mac)


def ip_bytes(text: str) -> bytes:
    parts = text.split(".")
    if len(parts) != 4:
        raise ValueError(f"bad IPv4 address {text!r}")
    return bytes(int(p) for p in parts)


def ip_str(ip: bytes) -> str:
    return ".".join(str(b) for b in ip)


def same_subnet(a: bytes, b: bytes, prefix_len: int) -> bool:
    mask = (0xFFFFFFFF << (32 - prefix_len)) & 0xFFFFFFFF
    ai = int.from_bytes(a, "big")
    bi = int.from_bytes(b, "big")
    return (ai & mask) == (bi & mask)


def internet_checksum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\x00"
    total = sum(struct.unpack(f"!{len(data) // 2}H", data))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


@dataclass(slots=True)
class Arp:
    op: int
    sender_mac: bytes
    sender_ip: bytes
    target_mac: bytes
    target_ip: bytes

    def wire_len(self) -> int:
        return 28

    def serialize(self) -> bytes:
        return (struct.pack("!HHBBH", 1, ETHERTYPE_IPV4, 6, 4, self.op)
                + self.sender_mac + self.sender_ip
                + self.target_mac + self.target_ip)


@dataclass(slots=True)
class Tcp:
    src_port: int
    dst_port: int
    seq: int
    ack: int
    flags: int
    window: int = 65535
    payload: bytes = b""

    def wire_len(self) -> int:
        return 20 + len(self.payload)

    def serialize(self, src_ip: bytes, dst_ip: bytes) -> bytes:
        header = struct.pack(
            "!HHIIBBHHH", self.src_port, self.dst_port,
            self.seq & 0xFFFFFFFF, self.ack & 0xFFFFFFFF,
            5 << 4, self.flags, self.window, 0, 0)
        pseudo = src_ip + dst_ip + struct.pack(
            "!BBH", 0, PROTO_TCP, len(header) + len(self.payload))
        checksum = internet_checksum(pseudo + header + self.payload)
        return header[:16] + struct.pack("!H", checksum) + header[18:] + self.payload

    def flag_str(self) -> str:
        names = [("S", SYN), ("A", ACK), ("F", FIN), ("R", RST), ("P", PSH)]
        return "".join(n for n, bit in names if self.flags & bit) or "-"


@dataclass(slots=True)
class Icmp:
    type: int
    code: int = 0
    rest: bytes = b"\x00\x00\x00\x00"
    payload: bytes = b""

    def wire_len(self) -> int:
        return 8 + len(self.payload)

    def serialize(self) -> bytes:
        head = struct.pack("!BBH", self.type, self.code, 0) + self.rest
        checksum = internet_checksum(head + self.payload)
        return (struct.pack("!BBH", self.type, self.code, checksum)
                + self.rest + self.payload)


@dataclass(slots=True)
class Ipv4:
    src: bytes
    dst: bytes
    proto: int
    payload: Tcp | Icmp | bytes
    ttl: int = 64
    ident: int = 0

    def payload_len(self) -> int:
        if isinstance(self.payload, bytes):
            return len(self.payload)
        return self.payload.wire_len()

    def wire_len(self) -> int:
        return 20 + self.payload_len()

    def serialize(self) -> bytes:
        total_len = 20 + self.payload_len()
        header = struct.pack(
            "!BBHHHBBH", 0x45, 0, total_len, self.ident, 0x4000,
            self.ttl, self.proto, 0) + self.src + self.dst
        checksum = internet_checksum(header)
        header = header[:10] + struct.pack("!H", checksum) + header[12:]
        if isinstance(self.payload, Tcp):
            body = self.payload.serialize(self.src, self.dst)
        elif isinstance(self.payload, Icmp):
            body = self.payload.serialize()
        else:
            body = self.payload
        return header + body


@dataclass(slots=True)
class Frame:
    dst_mac: bytes
    src_mac: bytes
    ethertype: int
    payload: Arp | Ipv4
    _wire_len: int = 0  # cached; frames are treated as immutable

    def wire_len(self) -> int:
        if self._wire_len == 0:
            self._wire_len = max(ETH_MIN_FRAME,
                                 ETH_HEADER + self.payload.wire_len())
        return self._wire_len

    def serialize(self) -> bytes:
        body = self.payload.serialize()
        data = self.dst_mac + self.src_mac + struct.pack("!H", self.ethertype) + body
        if len(data) < ETH_MIN_FRAME:
            data += b"\x00" * (ETH_MIN_FRAME - len(data))
        return data


def eth_arp(src_mac: bytes, dst_mac: bytes, arp: Arp) -> Frame:
    return Frame(dst_mac, src_mac, ETHERTYPE_ARP, arp)


def eth_ip(src_mac: bytes, dst_mac: bytes, pkt: Ipv4) -> Frame:
    return Frame(dst_mac, src_mac, ETHERTYPE_IPV4, pkt)


# -- parsing (inverse of serialize, used by round-trip checks and tools) ----


def parse_frame(data: bytes) -> Frame:
    if len(data) < ETH_HEADER:
        raise ParseError("frame shorter than Ethernet header")
    dst, src = data[0:6], data[6:12]
    ethertype = struct.unpack("!H", data[12:14])[0]
    body = data[14:]
    if ethertype == ETHERTYPE_ARP:
        return Frame(dst, src, ethertype, parse_arp(body))
    if ethertype == ETHERTYPE_IPV4:
        return Frame(dst, src, ethertype, parse_ipv4(body))
    raise ParseError(f"unsupported ethertype 0x{ethertype:04x}")


def parse_arp(data: bytes) -> Arp:
    if len(data) < 28:
        raise ParseError("short ARP body")
    htype, ptype, hlen, plen, op = struct.unpack("!HHBBH", data[:8])
    if (htype, ptype, hlen, plen) != (1, ETHERTYPE_IPV4, 6, 4):
        raise ParseError("unsupported ARP header")
    return Arp(op, data[8:14], data[14:18], data[18:24], data[24:28])


def parse_ipv4(data: bytes) -> Ipv4:
    if len(data) < 20:
        raise ParseError("short IPv4 header")
    vihl, _tos, total_len, ident, _flags, ttl, proto, checksum = struct.unpack(
        "!BBHHHBBH", data[:12])
    if vihl != 0x45:
        raise ParseError(f"unsupported version/IHL 0x{vihl:02x}")
    if total_len < 20 or total_len > len(data):
        raise ParseError("IPv4 total length out of range")
    if internet_checksum(data[:20]) != 0:
        raise ParseError("bad IPv4 header checksum")
    src, dst = data[12:16], data[16:20]
    body = data[20:total_len]
    payload: Tcp | Icmp | bytes
    if proto == PROTO_TCP:
        payload = parse_tcp(body, src, dst)
    elif proto == PROTO_ICMP:
        payload = parse_icmp(body)
    else:
        payload = body
    return Ipv4(src, dst, proto, payload, ttl=ttl, ident=ident)


def parse_tcp(data: bytes, src_ip: bytes, dst_ip: bytes) -> Tcp:
    if len(data) < 20:
        raise ParseError("short TCP header")
    sport, dport, seq, ack, offs, flags, window, checksum, _urg = struct.unpack(
        "!HHIIBBHHH", data[:20])
    header_len = (offs >> 4) * 4
    if header_len < 20 or header_len > len(data):
        raise ParseError("bad TCP data offset")
    pseudo = src_ip + dst_ip + struct.pack("!BBH", 0, PROTO_TCP, len(data))
    if internet_checksum(pseudo + data) != 0:
        raise ParseError("bad TCP checksum")
    return Tcp(sport, dport, seq, ack, flags, window, data[header_len:])


def parse_icmp(data: bytes) -> Icmp:
    if len(data) < 8:
        raise ParseError("short ICMP body")
    if internet_checksum(data) != 0:
        raise ParseError("bad ICMP checksum")
    itype, code, _checksum = struct.unpack("!BBH", data[:4])
    return Icmp(itype, code, data[4:8], data[8:])

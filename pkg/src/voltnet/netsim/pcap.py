"""Classic pcap capture files (link-type Ethernet, microsecond stamps)."""

from __future__ import annotations

import struct
from pathlib import Path

PCAP_MAGIC = 0xA1B2C3D4
LINKTYPE_ETHERNET = 1
SNAPLEN = 65535

_GLOBAL_HEADER = struct.Struct("<IHHiIII")
_RECORD_HEADER = struct.Struct("<IIII")


class PcapWriter:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._fh = open(self.path, "wb")
        self._fh.write(_GLOBAL_HEADER.pack(
            PCAP_MAGIC, 2, 4, 0, 0, SNAPLEN, LINKTYPE_ETHERNET))

    def write(self, t_us: int, frame_bytes: bytes) -> None:
        self._fh.write(_RECORD_HEADER.pack(
            t_us // 1_000_000, t_us % 1_000_000,
            len(frame_bytes), len(frame_bytes)))
        self._fh.write(frame_bytes)

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()


def read_pcap(path: str | Path) -> list[tuple[int, bytes]]:
    """Read back (t_us, frame_bytes) records; validates the global header."""
    data = Path(path).read_bytes()
    if len(data) < _GLOBAL_HEADER.size:
        raise ValueError("truncated pcap global header")
    magic, major, minor, _tz, _sig, snaplen, linktype = _GLOBAL_HEADER.unpack(
        data[:_GLOBAL_HEADER.size])
    if magic != PCAP_MAGIC:
        raise ValueError(f"bad pcap magic 0x{magic:08x}")
    if linktype != LINKTYPE_ETHERNET:
        raise ValueError(f"unexpected linktype {linktype}")
    records = []
    pos = _GLOBAL_HEADER.size
    while pos < len(data):
        if pos + _RECORD_HEADER.size > len(data):
            raise ValueError("truncated pcap record header")
        sec, usec, incl, orig = _RECORD_HEADER.unpack(
            data[pos:pos + _RECORD_HEADER.size])
        pos += _RECORD_HEADER.size
        if incl != orig or pos + incl > len(data):
            raise ValueError("truncated pcap record")
        records.append((sec * 1_000_000 + usec, data[pos:pos + incl]))
        pos += incl
    return records

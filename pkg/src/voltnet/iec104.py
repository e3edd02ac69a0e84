"""Bit-exact IEC 60870-5-104 codec and per-connection state machine.

Supported ASDU subset (everything the bundled scenarios exercise):

    M_SP_NA_1 (1)   single-point status, monitoring
    M_ME_NC_1 (13)  short float measurement, monitoring
    C_SC_NA_1 (45)  single command, control
    C_SE_NC_1 (50)  short float setpoint, control
    C_IC_NA_1 (100) general interrogation

The connection machine keeps the standard sequence windows and timers
(k = 12, w = 8, t1 = 15 s, t2 = 10 s, t3 = 20 s) and refuses to move
I-frames before STARTDT has been confirmed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

START_BYTE = 0x68
SEQ_MODULO = 32768

# ASDU type identifiers
M_SP_NA_1 = 1
M_ME_NC_1 = 13
C_SC_NA_1 = 45
C_SE_NC_1 = 50
C_IC_NA_1 = 100
SUPPORTED_TYPES = {M_SP_NA_1, M_ME_NC_1, C_SC_NA_1, C_SE_NC_1, C_IC_NA_1}

# causes of transmission
COT_SPONTANEOUS = 3
COT_ACTIVATION = 6
COT_ACTIVATION_CON = 7
COT_ACTIVATION_TERM = 10
COT_INTERROGATED = 20
COT_UNKNOWN_TYPE = 44
COT_UNKNOWN_COT = 45
COT_UNKNOWN_COA = 46
COT_UNKNOWN_IOA = 47

_U_FUNCTIONS = {
    ("STARTDT", False): 0x07, ("STARTDT", True): 0x0B,
    ("STOPDT", False): 0x13, ("STOPDT", True): 0x23,
    ("TESTFR", False): 0x43, ("TESTFR", True): 0x83,
}
_U_BY_BYTE = {v: k for k, v in _U_FUNCTIONS.items()}


class Iec104Error(Exception):
    pass


class FramingError(Iec104Error):
    """Bad start byte or impossible length octet."""


class TruncatedApdu(Iec104Error):
    """Buffer ends mid-APDU; feed more bytes."""


class UnsupportedType(Iec104Error):
    pass


@dataclass(frozen=True)
class Apci:
    format: str  # 'I' | 'S' | 'U'
    send_seq: int = 0
    recv_seq: int = 0
    u_function: str = ""  # STARTDT | STOPDT | TESTFR
    u_confirm: bool = False

    @staticmethod
    def i(send_seq: int, recv_seq: int) -> "Apci":
        return Apci("I", send_seq % SEQ_MODULO, recv_seq % SEQ_MODULO)

    @staticmethod
    def s(recv_seq: int) -> "Apci":
        return Apci("S", recv_seq=recv_seq % SEQ_MODULO)

    @staticmethod
    def u(function: str, confirm: bool = False) -> "Apci":
        return Apci("U", u_function=function, u_confirm=confirm)


@dataclass(frozen=True)
class InfoObject:
    ioa: int
    value: float | int | bool
    quality: int = 0


@dataclass(frozen=True)
class Asdu:
    type_id: int
    cot: int
    coa: int
    objects: tuple[InfoObject, ...]


def encode_asdu(asdu: Asdu) -> bytes:
    if asdu.type_id not in SUPPORTED_TYPES:
        raise UnsupportedType(f"ASDU type {asdu.type_id} not supported")
    if not 1 <= len(asdu.objects) <= 127:
        raise Iec104Error(f"object count {len(asdu.objects)} out of range")
    out = bytearray()
    out.append(asdu.type_id)
    out.append(len(asdu.objects))  # SQ = 0, individual addresses
    out.append(asdu.cot & 0xFF)
    out.append(0)  # originator address
    out += struct.pack("<H", asdu.coa)
    for obj in asdu.objects:
        out += struct.pack("<I", obj.ioa)[:3]
        out += _encode_element(asdu.type_id, obj)
    return bytes(out)


def _encode_element(type_id: int, obj: InfoObject) -> bytes:
    if type_id == M_SP_NA_1:
        siq = (obj.quality & 0xF0) | (1 if obj.value else 0)
        return bytes([siq])
    if type_id == M_ME_NC_1:
        return struct.pack("<f", float(obj.value)) + bytes([obj.quality & 0xFF])
    if type_id == C_SC_NA_1:
        sco = (obj.quality & 0xFC) | (1 if obj.value else 0)
        return bytes([sco])
    if type_id == C_SE_NC_1:
        return struct.pack("<f", float(obj.value)) + bytes([obj.quality & 0xFF])
    if type_id == C_IC_NA_1:
        return bytes([int(obj.value) & 0xFF])  # QOI, 20 = station interrogation
    raise UnsupportedType(str(type_id))


def _decode_element(type_id: int, data: bytes, pos: int) -> tuple[InfoObject, int]:
    ioa = int.from_bytes(data[pos:pos + 3], "little")
    pos += 3
    if type_id == M_SP_NA_1:
        siq = data[pos]
        return InfoObject(ioa, bool(siq & 0x01), siq & 0xF0), pos + 1
    if type_id in (M_ME_NC_1, C_SE_NC_1):
        value = struct.unpack("<f", data[pos:pos + 4])[0]
        return InfoObject(ioa, value, data[pos + 4]), pos + 5
    if type_id == C_SC_NA_1:
        sco = data[pos]
        return InfoObject(ioa, bool(sco & 0x01), sco & 0xFC), pos + 1
    if type_id == C_IC_NA_1:
        return InfoObject(ioa, data[pos]), pos + 1
    raise UnsupportedType(str(type_id))


def decode_asdu(data: bytes) -> Asdu:
    if len(data) < 6:
        raise TruncatedApdu("ASDU header needs 6 bytes")
    type_id, vsq, cot, _orig = data[0], data[1], data[2], data[3]
    coa = struct.unpack("<H", data[4:6])[0]
    if type_id not in SUPPORTED_TYPES:
        raise UnsupportedType(f"ASDU type {type_id} not supported")
    count = vsq & 0x7F
    if vsq & 0x80:
        raise UnsupportedType("SQ=1 object sequences not supported")
    if count == 0:
        raise FramingError("VSQ promises zero objects")
    objects = []
    pos = 6
    try:
        for _ in range(count):
            obj, pos = _decode_element(type_id, data, pos)
            objects.append(obj)
    except (IndexError, struct.error) as exc:
        raise TruncatedApdu(f"ASDU shorter than VSQ promises: {exc}") from exc
    if pos != len(data):
        raise FramingError(f"{len(data) - pos} trailing bytes after ASDU objects")
    return Asdu(type_id, cot, coa, tuple(objects))


def encode_apdu(apci: Apci, asdu: Asdu | None = None) -> bytes:
    body = encode_asdu(asdu) if asdu is not None else b""
    if apci.format == "I":
        if asdu is None:
            raise Iec104Error("I-frame requires an ASDU")
        ctrl = struct.pack("<HH", (apci.send_seq << 1) & 0xFFFF,
                           (apci.recv_seq << 1) & 0xFFFF)
    elif apci.format == "S":
        ctrl = struct.pack("<HH", 0x0001, (apci.recv_seq << 1) & 0xFFFF)
    elif apci.format == "U":
        ctrl = bytes([_U_FUNCTIONS[(apci.u_function, apci.u_confirm)], 0, 0, 0])
    else:
        raise Iec104Error(f"unknown APCI format {apci.format!r}")
    if apci.format != "I" and asdu is not None:
        raise Iec104Error(f"{apci.format}-frame cannot carry an ASDU")
    length = len(ctrl) + len(body)
    if length > 253:
        raise Iec104Error(f"APDU length {length} exceeds 253")
    return bytes([START_BYTE, length]) + ctrl + body


def decode_apdu(data: bytes) -> tuple[Apci, Asdu | None]:
    apci, asdu, consumed = decode_apdu_stream(data)
    if consumed != len(data):
        raise FramingError(f"{len(data) - consumed} trailing bytes after APDU")
    return apci, asdu


def decode_apdu_stream(data: bytes) -> tuple[Apci, Asdu | None, int]:
    """Decode one APDU from the head of a byte stream; returns bytes consumed."""
    if len(data) < 2:
        raise TruncatedApdu("need at least start + length octet")
    if data[0] != START_BYTE:
        raise FramingError(f"bad start byte 0x{data[0]:02x}")
    length = data[1]
    if length < 4:
        raise FramingError(f"APDU length octet {length} below minimum 4")
    if len(data) < 2 + length:
        raise TruncatedApdu(f"APDU needs {2 + length} bytes, have {len(data)}")
    ctrl = data[2:6]
    body = bytes(data[6:2 + length])
    if ctrl[0] & 0x01 == 0:  # I format
        send_seq = struct.unpack("<H", ctrl[0:2])[0] >> 1
        recv_seq = struct.unpack("<H", ctrl[2:4])[0] >> 1
        try:
            asdu = decode_asdu(body)
        except TruncatedApdu as exc:
            # the APDU itself was complete, so a short ASDU is corruption
            raise FramingError(str(exc)) from exc
        return Apci.i(send_seq, recv_seq), asdu, 2 + length
    if ctrl[0] & 0x03 == 0x01:  # S format
        if length != 4:
            raise FramingError("S-frame must have empty body")
        recv_seq = struct.unpack("<H", ctrl[2:4])[0] >> 1
        return Apci.s(recv_seq), None, 2 + length
    # U format
    if ctrl[0] not in _U_BY_BYTE or ctrl[1:4] != b"\x00\x00\x00" or length != 4:
        raise FramingError(f"malformed U-frame control field {ctrl.hex()}")
    func, confirm = _U_BY_BYTE[ctrl[0]]
    return Apci.u(func, confirm), None, 2 + length


def split_stream(buffer: bytes) -> tuple[list[tuple[Apci, Asdu | None]], bytes]:
    """Split a TCP byte stream into complete APDUs plus unconsumed tail.

    Raises FramingError on garbage; the caller decides whether to drop the
    connection (devices do) or resynchronize.
    """
    out = []
    pos = 0
    while pos < len(buffer):
        try:
            apci, asdu, used = decode_apdu_stream(buffer[pos:])
        except TruncatedApdu:
            break
        out.append((apci, asdu))
        pos += used
    return out, buffer[pos:]


# --------------------------------------------------------------------------
# Connection state machine


NS = 1_000_000_000

K_UNACKED = 12
W_ACK_THRESHOLD = 8
T1_ACK_TIMEOUT_S = 15.0
T2_ACK_DELAY_S = 10.0
T3_IDLE_S = 20.0


@dataclass
class StepResult:
    bytes_out: bytes = b""
    deliveries: list[Asdu] = field(default_factory=list)
    close: str | None = None  # close reason, connection must be torn down
    started: bool | None = None  # STARTDT state changed to this value


@dataclass
class ConnState:
    """Sequence/timer state for one side of an IEC-104 connection."""

    is_controller: bool = False  # controller (MTU side) initiates STARTDT
    k: int = K_UNACKED
    w: int = W_ACK_THRESHOLD
    t1_s: float = T1_ACK_TIMEOUT_S
    t2_s: float = T2_ACK_DELAY_S
    t3_s: float = T3_IDLE_S

    started: bool = False
    vs: int = 0  # next send sequence
    vr: int = 0  # next expected receive sequence
    ack: int = 0  # peer has acknowledged our I-frames below this
    peer_acked_recv: int = 0  # what we last told the peer about vr
    recv_buffer: bytes = b""
    pending_send: list[Asdu] = field(default_factory=list)

    # timer deadlines in ns, None = inactive
    t1_deadline: int | None = None
    t2_deadline: int | None = None
    t3_deadline: int | None = None
    testfr_outstanding: bool = False
    closed: bool = False


def _seq_dist(a: int, b: int) -> int:
    return (a - b) % SEQ_MODULO


class Iec104Connection:
    """Drives ConnState over a reliable byte stream.

    The owner feeds received bytes and timer ticks, and gets back bytes to
    transmit plus decoded application ASDUs. All timing is virtual.
    """

    def __init__(self, is_controller: bool, t_ns: int = 0, *,
                 k: int = K_UNACKED, w: int = W_ACK_THRESHOLD,
                 t1_s: float = T1_ACK_TIMEOUT_S, t2_s: float = T2_ACK_DELAY_S,
                 t3_s: float = T3_IDLE_S):
        self.state = ConnState(is_controller, k=k, w=w, t1_s=t1_s, t2_s=t2_s,
                               t3_s=t3_s)
        self._arm_t3(t_ns)

    # -- public API --------------------------------------------------------

    def initiate_start(self, t_ns: int) -> StepResult:
        """Controller side: request data transfer (STARTDT act)."""
        frame = encode_apdu(Apci.u("STARTDT"))
        self._arm_t1(t_ns)
        return StepResult(bytes_out=frame)

    def send_asdu(self, asdu: Asdu, t_ns: int) -> StepResult:
        """Queue an ASDU; emits immediately when window and STARTDT allow."""
        st = self.state
        st.pending_send.append(asdu)
        return self._flush_sends(t_ns)

    def feed(self, data: bytes, t_ns: int) -> StepResult:
        st = self.state
        if st.closed:
            return StepResult()
        st.recv_buffer += data
        result = StepResult()
        try:
            apdus, st.recv_buffer = split_stream(st.recv_buffer)
        except (FramingError, UnsupportedType) as exc:
            result.close = f"protocol-error: {exc}"
            st.closed = True
            return result
        for apci, asdu in apdus:
            self._arm_t3(t_ns)  # any received frame resets the idle timer
            step = self._handle_apdu(apci, asdu, t_ns)
            result.bytes_out += step.bytes_out
            result.deliveries.extend(step.deliveries)
            if step.started is not None:
                result.started = step.started
            if step.close:
                result.close = step.close
                st.closed = True
                return result
        flush = self._flush_sends(t_ns)
        result.bytes_out += flush.bytes_out
        return result

    def on_timer(self, t_ns: int) -> StepResult:
        st = self.state
        if st.closed:
            return StepResult()
        result = StepResult()
        if st.t1_deadline is not None and t_ns >= st.t1_deadline:
            result.close = "t1-timeout"
            st.closed = True
            return result
        if st.t2_deadline is not None and t_ns >= st.t2_deadline:
            result.bytes_out += self._ack_now()
            st.t2_deadline = None
        if st.t3_deadline is not None and t_ns >= st.t3_deadline:
            st.t3_deadline = None
            if not st.testfr_outstanding:
                st.testfr_outstanding = True
                result.bytes_out += encode_apdu(Apci.u("TESTFR"))
                self._arm_t1(t_ns)
        return result

    def next_timer_ns(self) -> int | None:
        st = self.state
        deadlines = [d for d in (st.t1_deadline, st.t2_deadline, st.t3_deadline)
                     if d is not None]
        return min(deadlines) if deadlines else None

    @property
    def unacked_count(self) -> int:
        return _seq_dist(self.state.vs, self.state.ack)

    # -- internals -----------------------------------------------------------

    def _handle_apdu(self, apci: Apci, asdu: Asdu | None, t_ns: int) -> StepResult:
        st = self.state
        result = StepResult()
        if apci.format == "U":
            if apci.u_function == "STARTDT":
                if apci.u_confirm:
                    st.started = True
                    result.started = True
                    self._clear_t1_if_idle()
                else:
                    st.started = True
                    result.started = True
                    result.bytes_out += encode_apdu(Apci.u("STARTDT", confirm=True))
            elif apci.u_function == "STOPDT":
                if not apci.u_confirm:
                    st.started = False
                    result.started = False
                    result.bytes_out += encode_apdu(Apci.u("STOPDT", confirm=True))
            elif apci.u_function == "TESTFR":
                if apci.u_confirm:
                    st.testfr_outstanding = False
                    self._clear_t1_if_idle()
                else:
                    result.bytes_out += encode_apdu(Apci.u("TESTFR", confirm=True))
            return result
        if apci.format == "S":
            return self._accept_ack(apci.recv_seq, t_ns)
        # I format
        if not st.started:
            result.close = "i-frame-before-startdt"
            return result
        if apci.send_seq != st.vr:
            result.close = (f"sequence-error: got N(S)={apci.send_seq}, "
                            f"expected {st.vr}")
            return result
        st.vr = (st.vr + 1) % SEQ_MODULO
        ack_step = self._accept_ack(apci.recv_seq, t_ns)
        if ack_step.close:
            return ack_step
        result.bytes_out += ack_step.bytes_out
        if asdu is not None:
            result.deliveries.append(asdu)
        # w rule: ack after w unacknowledged received I-frames, else arm t2
        unacked_recv = _seq_dist(st.vr, st.peer_acked_recv)
        if unacked_recv >= st.w:
            result.bytes_out += self._ack_now()
            st.t2_deadline = None
        elif st.t2_deadline is None:
            st.t2_deadline = t_ns + int(st.t2_s * NS)
        return result

    def _accept_ack(self, recv_seq: int, t_ns: int) -> StepResult:
        st = self.state
        result = StepResult()
        outstanding = _seq_dist(st.vs, st.ack)
        advance = _seq_dist(recv_seq, st.ack)
        if advance > outstanding:
            result.close = (f"ack-regression: peer acked {recv_seq}, "
                            f"window [{st.ack}, {st.vs}]")
            return result
        if advance:
            st.ack = recv_seq
            if st.ack == st.vs and not st.testfr_outstanding:
                st.t1_deadline = None
            else:
                self._arm_t1(t_ns)
        return result

    def _flush_sends(self, t_ns: int) -> StepResult:
        st = self.state
        out = bytearray()
        while st.pending_send and st.started and self.unacked_count < st.k:
            asdu = st.pending_send.pop(0)
            out += encode_apdu(Apci.i(st.vs, st.vr), asdu)
            st.vs = (st.vs + 1) % SEQ_MODULO
            st.peer_acked_recv = st.vr  # I-frame piggybacks the ack
            st.t2_deadline = None
            self._arm_t1(t_ns)
        return StepResult(bytes_out=bytes(out))

    def _ack_now(self) -> bytes:
        st = self.state
        if st.peer_acked_recv == st.vr:
            return b""
        st.peer_acked_recv = st.vr
        return encode_apdu(Apci.s(st.vr))

    def _arm_t1(self, t_ns: int) -> None:
        self.state.t1_deadline = t_ns + int(self.state.t1_s * NS)

    def _clear_t1_if_idle(self) -> None:
        st = self.state
        if st.ack == st.vs and not st.testfr_outstanding:
            st.t1_deadline = None

    def _arm_t3(self, t_ns: int) -> None:
        self.state.t3_deadline = t_ns + int(self.state.t3_s * NS)

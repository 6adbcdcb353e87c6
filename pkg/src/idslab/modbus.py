"""Modbus-TCP framing and the master/slave endpoint logic.

Frames are cleartext and unauthenticated, exactly as on a real plant floor:
any endpoint that can reach the PLC may read or write its registers.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

from .errors import (
    FrameTooLongError,
    LengthMismatchError,
    ProtocolIdError,
    ShortBufferError,
    UnknownFunctionError,
)
from .plant import PlcState

READ_HOLDING_REGISTERS = 0x03
WRITE_SINGLE_REGISTER = 0x06
WRITE_MULTIPLE_REGISTERS = 0x10
REQUEST_CODES = frozenset({READ_HOLDING_REGISTERS, WRITE_SINGLE_REGISTER, WRITE_MULTIPLE_REGISTERS})
EXCEPTION_FLAG = 0x80
FUNCTION_CODES = REQUEST_CODES | {code | EXCEPTION_FLAG for code in REQUEST_CODES}

ILLEGAL_FUNCTION = 0x01
ILLEGAL_DATA_ADDRESS = 0x02
ILLEGAL_DATA_VALUE = 0x03

MBAP_SIZE = 7
MAX_PAYLOAD = 253
MAX_READ_COUNT = 125
MAX_WRITE_COUNT = 123
MODBUS_PORT = 502


class Role(str, enum.Enum):
    HMI = "HMI"
    PLC = "PLC"
    WEB_SERVER = "WebServer"
    ATTACKER = "Attacker"
    HISTORIAN = "Historian"


@dataclass(frozen=True)
class EndpointId:
    address: str
    port: int
    role: Role


@dataclass(frozen=True)
class ModbusFrame:
    transaction_id: int
    unit_id: int
    function_code: int
    payload: bytes = b""
    protocol_id: int = 0

    @property
    def length(self):
        return 2 + len(self.payload)

    @property
    def is_exception(self):
        return bool(self.function_code & EXCEPTION_FLAG)

    def validate(self):
        if not 0 <= self.transaction_id <= 0xFFFF:
            raise ValueError(f"transaction_id {self.transaction_id} not 16-bit")
        if self.protocol_id != 0:
            raise ValueError(f"protocol_id must be 0, got {self.protocol_id}")
        if not 0 <= self.unit_id <= 0xFF:
            raise ValueError(f"unit_id {self.unit_id} not 8-bit")
        if self.function_code not in FUNCTION_CODES:
            raise ValueError(f"unsupported function code 0x{self.function_code:02X}")
        if len(self.payload) > MAX_PAYLOAD:
            raise FrameTooLongError(
                f"payload of {len(self.payload)} bytes exceeds {MAX_PAYLOAD}"
            )


def encode_frame(frame: ModbusFrame) -> bytes:
    """MBAP header (transaction, protocol, length; unit id) + function code + payload."""
    frame.validate()
    header = struct.pack(">HHHB", frame.transaction_id, frame.protocol_id, frame.length, frame.unit_id)
    return header + bytes([frame.function_code]) + bytes(frame.payload)


def decode_frame(data: bytes) -> ModbusFrame:
    data = bytes(data)
    if len(data) < MBAP_SIZE + 1:
        raise ShortBufferError(f"need at least {MBAP_SIZE + 1} bytes, got {len(data)}")
    txn, proto, length, unit = struct.unpack(">HHHB", data[:MBAP_SIZE])
    if proto != 0:
        raise ProtocolIdError(f"protocol id {proto} != 0")
    actual = len(data) - (MBAP_SIZE - 1)
    if length != actual:
        raise LengthMismatchError(f"length field {length} but {actual} bytes follow")
    if length - 2 > MAX_PAYLOAD:
        raise LengthMismatchError(f"length field {length} exceeds Modbus-TCP maximum")
    function_code = data[MBAP_SIZE]
    if function_code not in FUNCTION_CODES:
        raise UnknownFunctionError(f"unknown function code 0x{function_code:02X}")
    return ModbusFrame(txn, unit, function_code, data[MBAP_SIZE + 1:])


def read_request(txn, unit, start, count):
    return ModbusFrame(txn, unit, READ_HOLDING_REGISTERS, struct.pack(">HH", start, count))


def write_single_request(txn, unit, address, value):
    return ModbusFrame(txn, unit, WRITE_SINGLE_REGISTER, struct.pack(">HH", address, value))


def write_multiple_request(txn, unit, start, values):
    values = list(values)
    body = struct.pack(">HHB", start, len(values), 2 * len(values))
    body += struct.pack(f">{len(values)}H", *values)
    return ModbusFrame(txn, unit, WRITE_MULTIPLE_REGISTERS, body)


def exception_response(request: ModbusFrame, code):
    return ModbusFrame(request.transaction_id, request.unit_id,
                       (request.function_code | EXCEPTION_FLAG) & 0xFF, bytes([code]))


def parse_read_response(frame: ModbusFrame):
    """Register values carried by a 0x03 response."""
    if frame.function_code != READ_HOLDING_REGISTERS:
        raise ValueError(f"not a read response: 0x{frame.function_code:02X}")
    count = frame.payload[0] // 2
    return list(struct.unpack(f">{count}H", frame.payload[1:1 + 2 * count]))


def slave_apply(plc: PlcState, request: ModbusFrame):
    """Execute one master request against the PLC image.

    Returns ``(new_plc, response)``. Protocol faults come back as exception
    responses; there is no authentication step.
    """
    fc = request.function_code
    body = request.payload
    n_regs = len(plc.holding_registers)
    if fc not in REQUEST_CODES:
        return plc, exception_response(request, ILLEGAL_FUNCTION)

    if fc == READ_HOLDING_REGISTERS:
        if len(body) != 4:
            return plc, exception_response(request, ILLEGAL_DATA_VALUE)
        start, count = struct.unpack(">HH", body)
        if not 1 <= count <= MAX_READ_COUNT:
            return plc, exception_response(request, ILLEGAL_DATA_VALUE)
        if start + count > n_regs:
            return plc, exception_response(request, ILLEGAL_DATA_ADDRESS)
        values = plc.holding_registers[start:start + count]
        payload = bytes([2 * count]) + struct.pack(f">{count}H", *values)
        return plc, ModbusFrame(request.transaction_id, request.unit_id, fc, payload)

    if fc == WRITE_SINGLE_REGISTER:
        if len(body) != 4:
            return plc, exception_response(request, ILLEGAL_DATA_VALUE)
        address, value = struct.unpack(">HH", body)
        if address >= n_regs:
            return plc, exception_response(request, ILLEGAL_DATA_ADDRESS)
        return plc.with_registers(address, [value]), ModbusFrame(
            request.transaction_id, request.unit_id, fc, body)

    if len(body) < 5:
        return plc, exception_response(request, ILLEGAL_DATA_VALUE)
    start, count, byte_count = struct.unpack(">HHB", body[:5])
    if not 1 <= count <= MAX_WRITE_COUNT or byte_count != 2 * count or len(body) != 5 + byte_count:
        return plc, exception_response(request, ILLEGAL_DATA_VALUE)
    if start + count > n_regs:
        return plc, exception_response(request, ILLEGAL_DATA_ADDRESS)
    values = struct.unpack(f">{count}H", body[5:])
    return plc.with_registers(start, list(values)), ModbusFrame(
        request.transaction_id, request.unit_id, fc, struct.pack(">HH", start, count))


class Master:
    """Client side of a Modbus session; owns its transaction counter."""

    def __init__(self, endpoint: EndpointId, unit_id=1, first_transaction=0):
        self.endpoint = endpoint
        self.unit_id = unit_id
        self._next_txn = first_transaction & 0xFFFF

    def _txn(self):
        txn = self._next_txn
        self._next_txn = (txn + 1) & 0xFFFF
        return txn

    def read(self, start, count):
        return read_request(self._txn(), self.unit_id, start, count)

    def write(self, address, value):
        return write_single_request(self._txn(), self.unit_id, address, value)

    def write_many(self, start, values):
        return write_multiple_request(self._txn(), self.unit_id, start, values)

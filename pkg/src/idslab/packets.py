"""Packet records and the packet-log CSV format.

Column order of the log (one record per row, header included)::

    timestamp, src_addr, src_port, src_role, dst_addr, dst_port, dst_role,
    direction, size, retransmission, dropped, app_tag, kind, label, info

``timestamp`` is seconds with microsecond resolution, ``size`` is the on-wire
frame size in bytes, flags are 0/1, ``info`` holds the hex-encoded Modbus ADU
for Modbus packets and is empty otherwise.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass

from .errors import ParseError
from .modbus import EndpointId, Role

# Ethernet + IPv4 + TCP headers without options.
HEADER_BYTES = 54
MSS = 1460


class AppTag(str, enum.Enum):
    MODBUS_POLL = "ModbusPoll"
    MODBUS_WRITE = "ModbusWrite"
    FILE_TRANSFER = "FileTransfer"
    HTTP_QUERY = "HttpQuery"
    OTHER = "Other"


class TrafficKind(str, enum.Enum):
    NORMAL = "normal"
    BACKDOOR = "backdoor"
    SQL_INJECTION = "sql_injection"
    COMMAND_INJECTION = "command_injection"


ATTACK_KINDS = (TrafficKind.BACKDOOR, TrafficKind.SQL_INJECTION, TrafficKind.COMMAND_INJECTION)

COLUMNS = (
    "timestamp", "src_addr", "src_port", "src_role", "dst_addr", "dst_port", "dst_role",
    "direction", "size", "retransmission", "dropped", "app_tag", "kind", "label", "info",
)


@dataclass(frozen=True, slots=True)
class PacketRecord:
    timestamp: float
    src: EndpointId
    dst: EndpointId
    size: int
    app_tag: AppTag
    label: int
    kind: TrafficKind = TrafficKind.NORMAL
    direction: str = "fwd"
    retransmission: bool = False
    dropped: bool = False
    info: str = ""

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError(f"packet size must be > 0, got {self.size}")
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")
        if self.direction not in ("fwd", "rev"):
            raise ValueError(f"direction must be fwd or rev, got {self.direction!r}")

    @property
    def lost(self):
        return self.retransmission or self.dropped


def quantize_time(t):
    """Round to the log's microsecond resolution so CSV round-trips are exact."""
    return round(t, 6)


def _row(p: PacketRecord):
    return [
        f"{p.timestamp:.6f}", p.src.address, p.src.port, p.src.role.value,
        p.dst.address, p.dst.port, p.dst.role.value, p.direction, p.size,
        int(p.retransmission), int(p.dropped), p.app_tag.value, p.kind.value, p.label, p.info,
    ]


def write_packet_log(packets, path_or_file):
    if isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__"):
        with open(path_or_file, "w", newline="") as fh:
            return write_packet_log(packets, fh)
    writer = csv.writer(path_or_file, lineterminator="\n")
    writer.writerow(COLUMNS)
    for p in packets:
        writer.writerow(_row(p))


def packet_log_text(packets):
    buf = io.StringIO()
    write_packet_log(packets, buf)
    return buf.getvalue()


def _flag(text):
    if text not in ("0", "1"):
        raise ValueError(f"flag must be 0 or 1, got {text!r}")
    return text == "1"


def read_packet_log(path_or_file):
    """Parse a packet log; any schema violation raises ``ParseError`` with its line number."""
    if isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__"):
        with open(path_or_file, newline="") as fh:
            return read_packet_log(fh)
    reader = csv.reader(path_or_file)
    header = next(reader, None)
    if header is None or tuple(header) != COLUMNS:
        raise ParseError(f"expected header {','.join(COLUMNS)}", line=1)
    packets = []
    endpoints = {}
    for row in reader:
        line = reader.line_num
        if len(row) != len(COLUMNS):
            raise ParseError(f"expected {len(COLUMNS)} fields, got {len(row)}", line=line)
        try:
            src_key = (row[1], int(row[2]), Role(row[3]))
            dst_key = (row[4], int(row[5]), Role(row[6]))
            src = endpoints.setdefault(src_key, EndpointId(*src_key))
            dst = endpoints.setdefault(dst_key, EndpointId(*dst_key))
            packets.append(PacketRecord(
                timestamp=float(row[0]),
                src=src,
                dst=dst,
                direction=row[7],
                size=int(row[8]),
                retransmission=_flag(row[9]),
                dropped=_flag(row[10]),
                app_tag=AppTag(row[11]),
                kind=TrafficKind(row[12]),
                label=int(row[13]),
                info=row[14],
            ))
        except ValueError as exc:
            raise ParseError(str(exc), line=line) from None
    return packets

"""Bidirectional flow aggregation and the 23 per-flow traffic features.

Conventions (the stable schema of the dataset CSV):

* the flow initiator, i.e. the sender of the first packet, is the "source";
* durations shorter than ``min_duration`` (default: one PLC scan, 100 ms) are
  floored to it before computing loads and rates;
* ``Mean`` is the average raw duration of every flow whose lifetime overlaps
  this flow's lifetime, this flow included;
* loss counts packets flagged as retransmitted or dropped;
* inter-packet times and jitter are in milliseconds; jitter is the mean
  absolute difference of consecutive inter-arrival gaps (0 below 3 packets).
"""

from __future__ import annotations

import bisect
import csv
import io
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import EmptyDatasetError, OrderingError, ParseError

FEATURE_NAMES = (
    "Mean", "Sport", "Dport", "Spkts", "Dpkts", "Tpkts", "Sbytes", "Dbytes", "TBytes",
    "Sload", "Dload", "Tload", "Srate", "Drate", "Trate", "Sloss", "Dloss", "Tloss",
    "Ploss", "SrcJitter", "DstJitter", "SIntPkt", "DIntPkt",
)
INTEGER_FEATURES = frozenset({
    "Sport", "Dport", "Spkts", "Dpkts", "Tpkts", "Sbytes", "Dbytes", "TBytes",
    "Sloss", "Dloss", "Tloss",
})
CSV_HEADER = FEATURE_NAMES + ("label",)
DEFAULT_IDLE_TIMEOUT = 60.0
DEFAULT_MIN_DURATION = 0.1


@dataclass(slots=True)
class Flow:
    initiator: tuple  # (address, port)
    responder: tuple
    s_times: list = field(default_factory=list)
    s_sizes: list = field(default_factory=list)
    s_lost: list = field(default_factory=list)
    d_times: list = field(default_factory=list)
    d_sizes: list = field(default_factory=list)
    d_lost: list = field(default_factory=list)
    first: float = math.inf
    last: float = -math.inf
    label: int = 0

    def add(self, packet, forward):
        if forward:
            self.s_times.append(packet.timestamp)
            self.s_sizes.append(packet.size)
            self.s_lost.append(packet.lost)
        else:
            self.d_times.append(packet.timestamp)
            self.d_sizes.append(packet.size)
            self.d_lost.append(packet.lost)
        self.first = min(self.first, packet.timestamp)
        self.last = max(self.last, packet.timestamp)
        self.label = max(self.label, packet.label)

    @property
    def key(self):
        return (self.initiator, self.responder)

    @property
    def duration(self):
        return self.last - self.first

    @property
    def packet_count(self):
        return len(self.s_times) + len(self.d_times)


@dataclass(frozen=True, slots=True)
class FlowFeatureVector:
    Mean: float
    Sport: int
    Dport: int
    Spkts: int
    Dpkts: int
    Tpkts: int
    Sbytes: int
    Dbytes: int
    TBytes: int
    Sload: float
    Dload: float
    Tload: float
    Srate: float
    Drate: float
    Trate: float
    Sloss: int
    Dloss: int
    Tloss: int
    Ploss: float
    SrcJitter: float
    DstJitter: float
    SIntPkt: float
    DIntPkt: float
    label: int

    def features(self):
        return tuple(getattr(self, name) for name in FEATURE_NAMES)


assert tuple(f.name for f in fields(FlowFeatureVector)) == CSV_HEADER


def aggregate_flows(packets, idle_timeout=DEFAULT_IDLE_TIMEOUT):
    """Group packets by unordered endpoint pair, splitting on idle gaps.

    A packet joins the open flow on its key if it arrives less than
    ``idle_timeout`` after that flow's last packet; otherwise it opens a new
    flow. Flows are returned by start time, then key.
    """
    if not (idle_timeout > 0):
        raise ValueError(f"idle_timeout must be > 0, got {idle_timeout!r}")
    open_flows = {}
    flows = []
    prev = -math.inf
    for i, p in enumerate(packets):
        if p.timestamp < prev:
            raise OrderingError(f"packet {i} at {p.timestamp} precedes {prev}")
        prev = p.timestamp
        a = (p.src.address, p.src.port)
        b = (p.dst.address, p.dst.port)
        key = (a, b) if a <= b else (b, a)
        flow = open_flows.get(key)
        if flow is None or p.timestamp - flow.last >= idle_timeout:
            flow = Flow(a, b)
            open_flows[key] = flow
            flows.append(flow)
        flow.add(p, a == flow.initiator)
    flows.sort(key=lambda f: (f.first, f.key))
    return flows


def _gaps(times):
    return [b - a for a, b in zip(times, times[1:])]


def _interpacket_ms(times):
    gaps = _gaps(times)
    return 1000.0 * math.fsum(gaps) / len(gaps) if gaps else 0.0


def _jitter_ms(times):
    gaps = _gaps(times)
    if len(gaps) < 2:
        return 0.0
    diffs = [abs(b - a) for a, b in zip(gaps, gaps[1:])]
    return 1000.0 * math.fsum(diffs) / len(diffs)


def compute_features(flow: Flow, window_durations=None, min_duration=DEFAULT_MIN_DURATION):
    """Feature vector of one flow.

    ``window_durations`` are the raw durations of all flows overlapping this
    one (including it); ``None`` means the flow is alone in its window.
    """
    if flow.packet_count == 0:
        raise ValueError("flow has no packets")
    if window_durations is None:
        window_durations = [flow.duration]
    span = max(flow.duration, min_duration)
    spkts, dpkts = len(flow.s_times), len(flow.d_times)
    sbytes, dbytes = sum(flow.s_sizes), sum(flow.d_sizes)
    sloss, dloss = sum(flow.s_lost), sum(flow.d_lost)
    tpkts, tbytes, tloss = spkts + dpkts, sbytes + dbytes, sloss + dloss
    return FlowFeatureVector(
        Mean=math.fsum(window_durations) / len(window_durations),
        Sport=flow.initiator[1],
        Dport=flow.responder[1],
        Spkts=spkts, Dpkts=dpkts, Tpkts=tpkts,
        Sbytes=sbytes, Dbytes=dbytes, TBytes=tbytes,
        Sload=8.0 * sbytes / span, Dload=8.0 * dbytes / span, Tload=8.0 * tbytes / span,
        Srate=spkts / span, Drate=dpkts / span, Trate=tpkts / span,
        Sloss=sloss, Dloss=dloss, Tloss=tloss,
        Ploss=100.0 * tloss / tpkts,
        SrcJitter=_jitter_ms(flow.s_times), DstJitter=_jitter_ms(flow.d_times),
        SIntPkt=_interpacket_ms(flow.s_times), DIntPkt=_interpacket_ms(flow.d_times),
        label=flow.label,
    )


def overlapping_durations(flows):
    """For each flow, the durations of all flows whose [first, last] intersects its own."""
    starts = np.array([f.first for f in flows])
    ends = np.array([f.last for f in flows])
    order = np.argsort(starts, kind="stable")
    s_sorted, e_sorted = starts[order], ends[order]
    durations = ends - starts
    longest = float(durations.max()) if len(flows) else 0.0
    s_list = s_sorted.tolist()
    out = []
    for f in flows:
        lo = bisect.bisect_left(s_list, f.first - longest - 1.0)
        hi = bisect.bisect_right(s_list, f.last)
        idx = order[lo:hi][e_sorted[lo:hi] >= f.first]
        out.append(durations[np.sort(idx)].tolist())
    return out


@dataclass
class Dataset:
    """Feature matrix (rows x 23) and binary labels."""

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple = FEATURE_NAMES

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float).reshape(-1, len(self.feature_names))
        self.y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        if len(self.X) != len(self.y):
            raise ValueError("X and y lengths differ")

    def __len__(self):
        return len(self.y)

    def subset(self, index):
        return Dataset(self.X[index], self.y[index], self.feature_names)

    def class_shares(self):
        n = len(self)
        ones = int(self.y.sum())
        return {"normal": 100.0 * (n - ones) / n if n else 0.0,
                "attack": 100.0 * ones / n if n else 0.0}

    @classmethod
    def from_vectors(cls, vectors):
        vectors = list(vectors)
        X = np.array([v.features() for v in vectors], dtype=float).reshape(-1, len(FEATURE_NAMES))
        y = np.array([v.label for v in vectors], dtype=np.int64)
        return cls(X, y)

    def to_csv(self, path_or_file=None):
        """Write the 24-column CSV; floats use 6 significant digits. Returns the text."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        int_cols = [name in INTEGER_FEATURES for name in self.feature_names]
        for row, label in zip(self.X.tolist(), self.y.tolist()):
            writer.writerow([str(int(v)) if is_int else format(v, ".6g")
                             for v, is_int in zip(row, int_cols)] + [str(label)])
        text = buf.getvalue()
        if path_or_file is not None:
            if hasattr(path_or_file, "write"):
                path_or_file.write(text)
            else:
                with open(path_or_file, "w", newline="") as fh:
                    fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path_or_file):
        if not hasattr(path_or_file, "read"):
            with open(path_or_file, newline="") as fh:
                return cls.from_csv(fh)
        reader = csv.reader(path_or_file)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise ParseError("expected the 24-column dataset header", line=1)
        rows, labels = [], []
        for row in reader:
            line = reader.line_num
            if len(row) != len(CSV_HEADER):
                raise ParseError(f"expected {len(CSV_HEADER)} fields, got {len(row)}", line=line)
            try:
                values = [float(v) for v in row[:-1]]
                label = int(row[-1])
            except ValueError as exc:
                raise ParseError(str(exc), line=line) from None
            if label not in (0, 1):
                raise ParseError(f"label must be 0 or 1, got {label}", line=line)
            if not all(math.isfinite(v) for v in values):
                raise ParseError("non-finite feature value", line=line)
            rows.append(values)
            labels.append(label)
        return cls(np.array(rows, dtype=float).reshape(-1, len(FEATURE_NAMES)),
                   np.array(labels, dtype=np.int64))


def build_dataset(packets, idle_timeout=DEFAULT_IDLE_TIMEOUT, min_duration=DEFAULT_MIN_DURATION):
    """Flow features for a whole capture, one row per flow, in flow start order.

    ``packets`` may be a ``LabeledRun`` or any ordered packet sequence.
    """
    packets = getattr(packets, "packets", packets)
    if len(packets) == 0:
        raise EmptyDatasetError("run contains no packets")
    flows = aggregate_flows(packets, idle_timeout)
    windows = overlapping_durations(flows)
    return Dataset.from_vectors(
        compute_features(f, w, min_duration) for f, w in zip(flows, windows))

"""Discrete-event testbed: plant, PLC, HMI, historian and the capture point.

Everything runs on one thread. Scheduled callbacks fire in (time, sequence)
order between PLC scans; packets are appended to a capture buffer and sorted
once at the end, which is what a switch-mirror sniffer would have recorded.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import plant as pl
from .errors import ConfigurationError, ScenarioWindowError
from .modbus import MODBUS_PORT, EndpointId, Master, Role, encode_frame, slave_apply
from .packets import HEADER_BYTES, AppTag, PacketRecord, TrafficKind, quantize_time
from .seeding import rng_for

HTTP_PORT = 80
EPHEMERAL_WINDOWS = (49152, 65535)
EPHEMERAL_LINUX = (32768, 60999)


@dataclass(frozen=True)
class NetworkConfig:
    """Addresses, timing and loss of the simulated plant network."""

    hmi_address: str = "192.168.1.10"
    plc_address: str = "192.168.1.20"
    historian_address: str = "192.168.1.30"
    attacker_address: str = "192.168.1.66"
    poll_period: float = 0.5
    poll_jitter: float = 0.01
    historian_period: float = 60.0
    latency: float = 0.0005
    latency_jitter: float = 0.0002
    plc_delay_min: float = 0.002
    plc_delay_max: float = 0.008
    loss_prob: float = 0.001
    rto: float = 0.2

    def __post_init__(self):
        positive = ("poll_period", "historian_period", "rto")
        for name in positive:
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigurationError(f"must be > 0, got {value!r}", name)
        for name in ("latency", "latency_jitter", "plc_delay_min", "poll_jitter"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ConfigurationError(f"must be >= 0, got {value!r}", name)
        if self.plc_delay_max < self.plc_delay_min:
            raise ConfigurationError("must be >= plc_delay_min", "plc_delay_max")
        if not 0 <= self.loss_prob < 1:
            raise ConfigurationError("must lie in [0, 1)", "loss_prob")

    def endpoint(self, role, port=0):
        address = {
            Role.HMI: self.hmi_address,
            Role.WEB_SERVER: self.hmi_address,
            Role.PLC: self.plc_address,
            Role.HISTORIAN: self.historian_address,
            Role.ATTACKER: self.attacker_address,
        }[role]
        return EndpointId(address, port, role)


@dataclass(frozen=True)
class PlannedExchange:
    """A normal request/response pair whose random parts are drawn up front."""

    time: float
    kind: str  # "poll" or "http"
    client_port: int
    request_lost: bool
    response_lost: bool
    request_delay: float
    response_delay: float
    request_size: int = 0
    response_size: int = 0

    @property
    def packet_count(self):
        return 2 + int(self.request_lost) + int(self.response_lost)


class PortAllocator:
    """Sequential ephemeral ports, as Windows hosts hand them out."""

    def __init__(self, low, high, start=None):
        self.low, self.high = low, high
        self._next = low if start is None else start

    def next(self):
        port = self._next
        self._next = self.low if port >= self.high else port + 1
        return port


@dataclass
class Testbed:
    """Mutable simulation state for one run; see ``attacks.compose_run``."""

    horizon: float
    seed: int = 0
    plant_config: pl.PlantConfig = field(default_factory=pl.PlantConfig)
    net: NetworkConfig = field(default_factory=NetworkConfig)
    initial_plant: pl.PlantState = field(default_factory=pl.PlantState)
    normal_traffic: bool = True

    def __post_init__(self):
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ConfigurationError(f"must be > 0, got {self.horizon!r}", "horizon")
        self.plant = self.initial_plant
        self.plc = pl.initial_plc(self.plant, self.plant_config)
        self.clock = 0.0
        self.packets = []
        self.register_dumps = []
        self._events = []
        self._seq = 0
        self._ticks = 0
        self._plant_rng = rng_for(self.seed, "plant")
        self._hmi = self.net.endpoint(Role.HMI)
        self._plc_ep = self.net.endpoint(Role.PLC, MODBUS_PORT)
        self._hmi_master = Master(self._hmi)
        self._hmi_ports = PortAllocator(*EPHEMERAL_WINDOWS)
        self._historian_ports = PortAllocator(*EPHEMERAL_WINDOWS, start=51000)
        self.planned_normal = self._plan_normal() if self.normal_traffic else []
        for exchange in self.planned_normal:
            self.schedule(exchange.time, self._run_exchange, exchange)

    # -- planning -----------------------------------------------------------
    def _plan_normal(self):
        net = self.net
        rng = rng_for(self.seed, "traffic", "normal")
        polls = pl.hmi_poll_schedule(net.poll_period, self.horizon, net.poll_jitter,
                                     rng if net.poll_jitter > 0 else None)
        http_times = [k * net.historian_period
                      for k in range(1, math.floor(self.horizon / net.historian_period) + 1)]
        plan = []
        for poll in polls:
            plan.append(self._draw_exchange(rng, poll.time, "poll"))
        for t in http_times:
            plan.append(self._draw_exchange(rng, t, "http"))
        plan.sort(key=lambda e: (e.time, e.kind))
        # Ports are handed out in time order, independent of draw order.
        ports = {"poll": self._hmi_ports, "http": self._historian_ports}
        return [replace(e, client_port=ports[e.kind].next()) for e in plan]

    def _draw_exchange(self, rng, t, kind):
        net = self.net
        lost = rng.random(2) < net.loss_prob
        latency = net.latency + rng.uniform(0, net.latency_jitter)
        if kind == "poll":
            delay = rng.uniform(net.plc_delay_min, net.plc_delay_max)
            return PlannedExchange(t, kind, 0, bool(lost[0]), bool(lost[1]), latency, delay)
        delay = rng.uniform(0.01, 0.05)
        req = HEADER_BYTES + int(rng.integers(180, 230))
        resp = HEADER_BYTES + int(rng.integers(700, 900))
        return PlannedExchange(t, kind, 0, bool(lost[0]), bool(lost[1]), latency, delay, req, resp)

    @property
    def normal_packet_count(self):
        return sum(e.packet_count for e in self.planned_normal)

    # -- event loop ----------------------------------------------------------
    def schedule(self, t, fn, *args):
        if t < self.clock:
            raise ScenarioWindowError(f"cannot schedule at {t} before clock {self.clock}")
        if t > self.horizon:
            raise ScenarioWindowError(f"event at {t} beyond horizon {self.horizon}")
        heapq.heappush(self._events, (t, self._seq, fn, args))
        self._seq += 1

    def _next_tick_time(self):
        return (self._ticks + 1) * self.plant_config.scan_period

    def _drain(self, limit, inclusive):
        events = self._events
        while events and (events[0][0] < limit or (inclusive and events[0][0] == limit)):
            t, _, fn, args = heapq.heappop(events)
            self.clock = max(self.clock, t)
            fn(t, *args)

    def _scan(self):
        cfg = self.plant_config
        self.plc, commands = pl.scan_cycle(self.plc, self.plant, cfg)
        self.plant = pl.apply_commands(self.plant, commands)
        self.plant = pl.step_plant(self.plant, cfg.scan_period, self._plant_rng, cfg)
        self._ticks += 1

    def run_until(self, t_end):
        """Fire every event and PLC scan with time <= ``t_end``."""
        t_end = min(t_end, self.horizon)
        while self._next_tick_time() <= t_end:
            tick = self._next_tick_time()
            self._drain(tick, inclusive=True)
            self._scan()
            self.clock = max(self.clock, tick)
        self._drain(t_end, inclusive=True)
        self.clock = max(self.clock, t_end)

    # -- capture -------------------------------------------------------------
    def send(self, t, src, dst, size, tag, label, kind, direction, lost=False, info=""):
        """Log one packet; a lost one is logged as dropped and re-sent after the RTO.

        Returns the time the surviving copy left the sender.
        """
        common = dict(src=src, dst=dst, size=int(size), app_tag=tag, label=label, kind=kind,
                      direction=direction, info=info)
        if lost:
            self.packets.append(PacketRecord(quantize_time(t), dropped=True, **common))
            t += self.net.rto
            self.packets.append(PacketRecord(quantize_time(t), retransmission=True, **common))
        else:
            self.packets.append(PacketRecord(quantize_time(t), **common))
        return t

    def modbus_exchange(self, t, client, request, *, label, kind, tag, request_lost=False,
                        response_lost=False, latency=None, delay=None, rng=None):
        """Client->PLC request and the PLC's response, applied to the live register image."""
        net = self.net
        if latency is None:
            latency = net.latency + rng.uniform(0, net.latency_jitter)
        if delay is None:
            delay = rng.uniform(net.plc_delay_min, net.plc_delay_max)
        raw = encode_frame(request)
        sent = self.send(t, client, self._plc_ep, HEADER_BYTES + len(raw), tag, label, kind,
                         "fwd", request_lost, raw.hex())
        self.plc, response = slave_apply(self.plc, request)
        raw = encode_frame(response)
        self.send(sent + latency + delay, self._plc_ep, client, HEADER_BYTES + len(raw), tag,
                  label, kind, "rev", response_lost, raw.hex())
        return response

    def _run_exchange(self, t, exchange: PlannedExchange):
        if exchange.kind == "poll":
            client = replace(self._hmi, port=exchange.client_port)
            request = self._hmi_master.read(pl.HMI_POLL_START, pl.HMI_POLL_COUNT)
            self.modbus_exchange(
                t, client, request, label=0, kind=TrafficKind.NORMAL, tag=AppTag.MODBUS_POLL,
                request_lost=exchange.request_lost, response_lost=exchange.response_lost,
                latency=exchange.request_delay, delay=exchange.response_delay)
            return
        client = self.net.endpoint(Role.HISTORIAN, exchange.client_port)
        server = self.net.endpoint(Role.WEB_SERVER, HTTP_PORT)
        sent = self.send(t, client, server, exchange.request_size, AppTag.HTTP_QUERY, 0,
                         TrafficKind.NORMAL, "fwd", exchange.request_lost, "status")
        self.send(sent + exchange.request_delay + exchange.response_delay, server, client,
                  exchange.response_size, AppTag.HTTP_QUERY, 0, TrafficKind.NORMAL, "rev",
                  exchange.response_lost, "status")

    def finish(self):
        """Run to the horizon and return the capture sorted by timestamp."""
        self.run_until(self.horizon)
        order = sorted(range(len(self.packets)), key=lambda i: (self.packets[i].timestamp, i))
        return [self.packets[i] for i in order]


def ports_in(rng, count, low=EPHEMERAL_LINUX[0], high=EPHEMERAL_LINUX[1]):
    """Random ephemeral source ports, as a Linux attack box would pick them."""
    return [int(p) for p in rng.integers(low, high + 1, size=count)]


def uniform_times(start, stop, count):
    """``count`` instants evenly spread over the open interval (start, stop)."""
    if count <= 0:
        return []
    step = (stop - start) / count
    return list(start + step * (np.arange(count) + 0.5))

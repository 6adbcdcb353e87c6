"""Backdoor, command-injection and SQL-injection scenarios over a testbed run.

Each scenario emits attack packets labeled 1 into the same capture as the
plant's normal traffic. ``compose_run`` sizes the scenarios so the realized
per-class packet shares hit a target composition.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

from . import plant as pl
from .errors import ConfigurationError, ScalingError, ScenarioWindowError
from .modbus import EndpointId, Master, Role, parse_read_response
from .packets import ATTACK_KINDS, HEADER_BYTES, MSS, AppTag, TrafficKind
from .seeding import rng_for
from .testbed import HTTP_PORT, NetworkConfig, Testbed, ports_in, uniform_times

# Packet shares in percent of all packets.
DEFAULT_COMPOSITION = {
    TrafficKind.NORMAL: 99.81,
    TrafficKind.BACKDOOR: 0.085,
    TrafficKind.SQL_INJECTION: 0.065,
    TrafficKind.COMMAND_INJECTION: 0.04,
}

# Throughput ceilings used to decide whether a target is reachable.
MAX_EXFIL_PPS = 1000.0
MAX_QUERY_RATE = 50.0
MIN_ROUND_SPACING = 1.0

SYN_BYTES = 74
ACK_BYTES = 66


@dataclass(frozen=True)
class AttackScenario:
    kind: TrafficKind
    start: float
    duration: float
    repeats: int = 1
    period: float = 0.0
    # backdoor
    exfil_bytes: int = 10_000_000
    packet_size: int = 1000
    file_size: int = 4000
    commands: int = 2
    backdoor_port: int = 4444
    # command injection
    rewrite_rounds: int = 4
    restore_auto: bool = True
    # SQL injection
    query_rate: float = 5.0
    query_median: float = 420.0
    query_sigma: float = 0.9
    targets: tuple = (Role.HMI, Role.PLC)
    attacker: EndpointId = field(default_factory=lambda: NetworkConfig().endpoint(Role.ATTACKER))

    def __post_init__(self):
        object.__setattr__(self, "kind", TrafficKind(self.kind))
        if self.kind not in ATTACK_KINDS:
            raise ConfigurationError(f"not an attack kind: {self.kind.value}", "kind")
        if not (math.isfinite(self.start) and self.start >= 0):
            raise ConfigurationError(f"must be >= 0, got {self.start!r}", "start")
        if not (math.isfinite(self.duration) and self.duration > 0):
            raise ConfigurationError(f"must be > 0, got {self.duration!r}", "duration")
        if self.repeats < 1:
            raise ConfigurationError("must be >= 1", "repeats")
        if self.repeats > 1 and self.period < self.duration:
            raise ConfigurationError("repeat period shorter than the window", "period")
        if self.exfil_bytes < 0 or self.packet_size <= HEADER_BYTES or self.file_size <= 0:
            raise ConfigurationError("invalid backdoor sizing", "exfil_bytes")
        if self.commands < 0 or self.rewrite_rounds < 0:
            raise ConfigurationError("counts must be >= 0", "commands")
        if not (math.isfinite(self.query_rate) and self.query_rate >= 0):
            raise ConfigurationError("must be >= 0", "query_rate")
        if not self.targets:
            raise ConfigurationError("need at least one target", "targets")
        object.__setattr__(self, "targets", tuple(Role(t) for t in self.targets))
        if self.attacker.role is not Role.ATTACKER:
            raise ConfigurationError("attacker endpoint must have the Attacker role", "attacker")

    def windows(self):
        return [(self.start + i * self.period, self.start + i * self.period + self.duration)
                for i in range(self.repeats)]

    @property
    def end(self):
        return self.windows()[-1][1]

    def to_dict(self):
        d = asdict(self)
        d["kind"] = self.kind.value
        d["targets"] = [t.value for t in self.targets]
        d["attacker"] = {"address": self.attacker.address, "port": self.attacker.port}
        return d


@dataclass(frozen=True)
class LabeledRun:
    packets: tuple
    composition: dict
    seed: int
    config: dict
    register_dumps: tuple = ()

    def __post_init__(self):
        prev = -math.inf
        for p in self.packets:
            if p.timestamp < prev:
                raise ValueError("packet timestamps must be nondecreasing")
            prev = p.timestamp

    @property
    def attack_share(self):
        return sum(v for k, v in self.composition.items() if k != TrafficKind.NORMAL.value)

    @property
    def mean_packet_size(self):
        return sum(p.size for p in self.packets) / len(self.packets) if self.packets else 0.0

    def manifest(self):
        return {
            "seed": self.seed,
            "packets": len(self.packets),
            "composition": self.composition,
            "mean_packet_size": self.mean_packet_size,
            "config": self.config,
        }


def composition_of(packets):
    counts = {k.value: 0 for k in TrafficKind}
    for p in packets:
        counts[p.kind.value] += 1
    total = sum(counts.values())
    if total == 0:
        return {k: 0.0 for k in counts}
    return {k: 100.0 * v / total for k, v in counts.items()}


def _check_window(scenario, run: Testbed, kind):
    if scenario.kind is not kind:
        raise ConfigurationError(f"expected a {kind.value} scenario, got {scenario.kind.value}",
                                 "kind")
    for start, end in scenario.windows():
        if start < run.clock or end > run.horizon:
            raise ScenarioWindowError(
                f"{kind.value} window [{start}, {end}] outside run [{run.clock}, {run.horizon}]")


def _scenario_rng(run, scenario, *labels):
    return rng_for(run.seed, "scenario", scenario.kind.value, scenario.start, *labels)


# -- backdoor ---------------------------------------------------------------

def backdoor_packet_count(scenario):
    """Packets one window emits, ignoring loss retransmissions."""
    data = math.ceil(scenario.exfil_bytes / scenario.packet_size)
    if data == 0:
        return 3
    files = math.ceil(scenario.exfil_bytes / scenario.file_size)
    return 3 + 2 * scenario.commands + data + 2 * files


def _file_chunks(scenario):
    """Per-file list of data packet sizes."""
    remaining = scenario.exfil_bytes
    files = []
    while remaining > 0:
        take = min(scenario.file_size, remaining)
        remaining -= take
        sizes = [scenario.packet_size] * (take // scenario.packet_size)
        if take % scenario.packet_size:
            sizes.append(max(take % scenario.packet_size, HEADER_BYTES + 1))
        files.append(sizes)
    return files


def run_backdoor(scenario: AttackScenario, run: Testbed):
    """Remote session through a backdoor listening on the HMI, then file exfiltration.

    Per window: a three-packet handshake to the backdoor port, one connection
    per exfiltrated file (attacker request, HMI data packets, closing ACK), and
    interleaved shell commands on the control connection.
    """
    _check_window(scenario, run, TrafficKind.BACKDOOR)
    for w, (start, end) in enumerate(scenario.windows()):
        rng = _scenario_rng(run, scenario, w)
        run.schedule(start, _backdoor_window, run, scenario, start, end, rng)


def _backdoor_window(t, run, scenario, start, end, rng):
    kind, label = TrafficKind.BACKDOOR, 1
    net = run.net
    hmi = net.endpoint(Role.HMI, scenario.backdoor_port)
    control = replace(scenario.attacker, port=ports_in(rng, 1)[0])

    def lost():
        return bool(rng.random() < net.loss_prob)

    def hop():
        return net.latency + float(rng.uniform(0, net.latency_jitter))

    t = run.send(t, control, hmi, SYN_BYTES, AppTag.OTHER, label, kind, "fwd", lost())
    t = run.send(t + hop(), hmi, control, SYN_BYTES, AppTag.OTHER, label, kind, "rev", lost())
    run.send(t + hop(), control, hmi, ACK_BYTES, AppTag.OTHER, label, kind, "fwd", lost())

    files = _file_chunks(scenario)
    if not files:
        return
    body_start, body_end = start + 1.0, end - 1.0
    if body_end <= body_start:
        body_start, body_end = start, end
    file_times = uniform_times(body_start, body_end, len(files))
    spacing = (body_end - body_start) / len(files)
    ports = ports_in(rng, len(files))
    for at, port, sizes in zip(file_times, ports, files):
        client = replace(scenario.attacker, port=port)
        size = HEADER_BYTES + int(rng.integers(30, 90))
        t = run.send(float(at), client, hmi, size, AppTag.FILE_TRANSFER, label, kind, "fwd", lost())
        t += hop() + float(rng.uniform(0.002, 0.01))
        gap = min(0.001, spacing / (len(sizes) + 2))
        for s in sizes:
            t = run.send(t, hmi, client, s, AppTag.FILE_TRANSFER, label, kind, "rev", lost())
            t += gap * float(rng.uniform(0.5, 1.5))
        run.send(t + hop(), client, hmi, ACK_BYTES, AppTag.FILE_TRANSFER, label, kind, "fwd",
                 lost())

    for at in uniform_times(body_start, body_end, scenario.commands):
        at = float(at) + spacing / 2
        cmd = HEADER_BYTES + int(rng.integers(20, 80))
        sent = run.send(at, control, hmi, cmd, AppTag.OTHER, label, kind, "fwd", lost())
        reply = HEADER_BYTES + int(rng.integers(40, 400))
        run.send(sent + hop() + float(rng.uniform(0.01, 0.05)), hmi, control, reply,
                 AppTag.OTHER, label, kind, "rev", lost())


# -- command injection --------------------------------------------------------

def command_injection_packet_count(scenario):
    return 2 + 4 * scenario.rewrite_rounds + (2 if scenario.restore_auto else 0)


def run_command_injection(scenario: AttackScenario, run: Testbed, advance=True):
    """Read every PLC register, then rewrite the process registers.

    The sweep is logged as a register dump. Each rewrite round switches the
    PLC to manual mode, swaps the two pump commands seen in the dump and forces
    the alarm to green. With ``advance`` the run is executed through the last
    window and the resulting ``PlcState`` is returned.
    """
    _check_window(scenario, run, TrafficKind.COMMAND_INJECTION)
    for w, (start, end) in enumerate(scenario.windows()):
        rng = _scenario_rng(run, scenario, w)
        master = Master(scenario.attacker, first_transaction=int(rng.integers(0, 0x10000)))
        state = {}
        run.schedule(start, _ci_sweep, run, scenario, master, rng, state)
        first, last = start + 1.0, end - 1.0
        if last <= first:
            first, last = start + (end - start) * 0.1, start + (end - start) * 0.9
        for at in uniform_times(first, last, scenario.rewrite_rounds):
            run.schedule(float(at), _ci_round, run, scenario, master, rng, state)
        if scenario.restore_auto:
            run.schedule(end - (end - start) * 0.01, _ci_restore, run, scenario, master, rng)
    if advance:
        run.run_until(scenario.end)
    return run.plc


def _ci_exchange(run, t, scenario, rng, request, tag):
    client = replace(scenario.attacker, port=ports_in(rng, 1)[0])
    lost = rng.random(2) < run.net.loss_prob
    return run.modbus_exchange(t, client, request, label=1, kind=TrafficKind.COMMAND_INJECTION,
                               tag=tag, request_lost=bool(lost[0]), response_lost=bool(lost[1]),
                               rng=rng)


def _ci_sweep(t, run, scenario, master, rng, state):
    request = master.read(0, len(run.plc.holding_registers))
    response = _ci_exchange(run, t, scenario, rng, request, AppTag.MODBUS_POLL)
    values = parse_read_response(response)
    state["dump"] = values
    run.register_dumps.append((t, tuple(values)))


def _ci_round(t, run, scenario, master, rng, state):
    dump = state["dump"]
    run_mode = master.write(pl.REG_MODE, pl.MODE_MANUAL)
    _ci_exchange(run, t, scenario, rng, run_mode, AppTag.MODBUS_WRITE)
    forged = [dump[pl.REG_PUMP2], dump[pl.REG_PUMP1], dump[pl.REG_VALVE], int(pl.Alarm.GREEN)]
    rewrite = master.write_many(pl.REG_PUMP1, forged)
    _ci_exchange(run, t + 0.05, scenario, rng, rewrite, AppTag.MODBUS_WRITE)


def _ci_restore(t, run, scenario, master, rng):
    _ci_exchange(run, t, scenario, rng, master.write(pl.REG_MODE, pl.MODE_AUTO),
                 AppTag.MODBUS_WRITE)


def format_register_dump(dumps):
    lines = []
    for i, (t, values) in enumerate(dumps, 1):
        lines.append(f"# sweep {i} at t={t:.6f}s, {len(values)} holding registers")
        lines.extend(f"HR[{addr:02d}] = {value}" for addr, value in enumerate(values))
    return "\n".join(lines) + ("\n" if lines else "")


# -- SQL injection -------------------------------------------------------------

def sql_injection_packet_count(scenario):
    return 2 * round(scenario.query_rate * scenario.duration)


def run_sql_injection(scenario: AttackScenario, run: Testbed):
    """Malicious queries against the HMI and PLC web servers, round-robin.

    Query and response sizes are log-normal, heavier-tailed than any normal
    request; the SQL text itself is opaque.
    """
    _check_window(scenario, run, TrafficKind.SQL_INJECTION)
    for w, (start, end) in enumerate(scenario.windows()):
        rng = _scenario_rng(run, scenario, w)
        n = round(scenario.query_rate * scenario.duration)
        times = uniform_times(start, end, n)
        for i, at in enumerate(times):
            run.schedule(float(at), _sql_query, run, scenario, i, rng)


def _sql_query(t, run, scenario, i, rng):
    kind, label = TrafficKind.SQL_INJECTION, 1
    net = run.net
    target_role = scenario.targets[i % len(scenario.targets)]
    server_role = Role.WEB_SERVER if target_role is Role.HMI else Role.PLC
    server = net.endpoint(server_role, HTTP_PORT)
    client = replace(scenario.attacker, port=ports_in(rng, 1)[0])
    payload = rng.lognormal(math.log(scenario.query_median), scenario.query_sigma)
    query = HEADER_BYTES + int(min(MSS, max(120, payload)))
    answer = HEADER_BYTES + int(min(MSS, max(60, rng.lognormal(math.log(300), 1.2))))
    lost = rng.random(2) < net.loss_prob
    info = f"sqli:{query - HEADER_BYTES}"
    sent = run.send(t, client, server, query, AppTag.HTTP_QUERY, label, kind, "fwd",
                    bool(lost[0]), info)
    delay = net.latency + float(rng.uniform(0.01, 0.08))
    run.send(sent + delay, server, client, answer, AppTag.HTTP_QUERY, label, kind, "rev",
             bool(lost[1]), info)


RUNNERS = {
    TrafficKind.BACKDOOR: run_backdoor,
    TrafficKind.SQL_INJECTION: run_sql_injection,
    TrafficKind.COMMAND_INJECTION: lambda s, run: run_command_injection(s, run, advance=False),
}


# -- composition ---------------------------------------------------------------

def _scale(scenario: AttackScenario, packets_per_window):
    """Scenario whose windows each emit about ``packets_per_window`` packets."""
    n = max(int(round(packets_per_window)), 0)
    if scenario.kind is TrafficKind.BACKDOOR:
        capacity = scenario.duration * MAX_EXFIL_PPS
        if n > capacity:
            raise ScalingError(f"backdoor needs {n} packets per window, capacity {capacity:.0f}")
        # Solve 3 + 2*commands + data + 2*ceil(data*P/F) ~= n for the volume.
        per_file = scenario.file_size / scenario.packet_size
        data = max(0.0, (n - 3 - 2 * scenario.commands) / (1 + 2 / per_file))
        best = None
        for d in range(max(int(data) - 3, 0), int(data) + 4):
            cand = replace(scenario, exfil_bytes=d * scenario.packet_size)
            err = abs(backdoor_packet_count(cand) - n)
            if best is None or err < best[0]:
                best = (err, cand)
        return best[1]
    if scenario.kind is TrafficKind.SQL_INJECTION:
        rate = (n / 2) / scenario.duration
        if rate > MAX_QUERY_RATE:
            raise ScalingError(f"SQL injection needs {rate:.1f} queries/s, max {MAX_QUERY_RATE}")
        rate = round(rate * scenario.duration) / scenario.duration
        return replace(scenario, query_rate=rate)
    fixed = command_injection_packet_count(replace(scenario, rewrite_rounds=0))
    rounds = max(0, round((n - fixed) / 4))
    capacity = int((scenario.duration - 2.0) / MIN_ROUND_SPACING)
    if rounds > max(capacity, 0):
        raise ScalingError(f"command injection needs {rounds} rounds per window, "
                           f"capacity {max(capacity, 0)}")
    return replace(scenario, rewrite_rounds=rounds)


def scale_scenarios(scenarios, target, normal_packets):
    """Rescale intensities so the attack shares match ``target`` (percent per kind).

    Kinds without a scenario are dropped from the target; normal traffic takes
    the remainder.
    """
    target = {TrafficKind(k): float(v) for k, v in target.items()}
    total = sum(target.values())
    if abs(total - 100.0) > 1e-6:
        raise ConfigurationError(f"target composition sums to {total}, not 100",
                                 "target_composition")
    if any(v < 0 for v in target.values()):
        raise ConfigurationError("target shares must be >= 0", "target_composition")
    present = {s.kind for s in scenarios}
    for kind in present:
        if target.get(kind, 0.0) <= 0:
            raise ScalingError(f"scenario of kind {kind.value} but target share is 0")
    attack = sum(target.get(k, 0.0) for k in present)
    normal_share = 100.0 - attack
    if normal_share <= 0:
        raise ScalingError("target leaves no room for normal traffic")
    scaled = []
    for kind in ATTACK_KINDS:
        group = [s for s in scenarios if s.kind is kind]
        if not group:
            continue
        wanted = normal_packets * target[kind] / normal_share
        windows = sum(s.repeats for s in group)
        scaled.extend(_scale(s, wanted / windows) for s in group)
    return scaled


def compose_run(horizon, scenarios=(), target=None, seed=0, plant_config=None, net=None):
    """Simulate normal operation plus ``scenarios`` and return the labeled capture.

    With ``target`` (percent per ``TrafficKind``; defaults to none, i.e. use the
    scenarios as configured) intensities are rescaled first, see
    ``scale_scenarios``.
    """
    testbed = Testbed(horizon, seed, plant_config or pl.PlantConfig(), net or NetworkConfig())
    scenarios = list(scenarios)
    if target is not None and scenarios:
        scenarios = scale_scenarios(scenarios, target, testbed.normal_packet_count)
    for scenario in sorted(scenarios, key=lambda s: (s.start, s.kind.value)):
        RUNNERS[scenario.kind](scenario, testbed)
    packets = testbed.finish()
    config = {
        "horizon": horizon,
        "plant": asdict(testbed.plant_config),
        "network": asdict(testbed.net),
        "scenarios": [s.to_dict() for s in scenarios],
        "target_composition": None if target is None else
        {TrafficKind(k).value: v for k, v in target.items()},
    }
    json.dumps(config)  # must stay serializable for the manifest
    return LabeledRun(tuple(packets), composition_of(packets), seed, config,
                      tuple(testbed.register_dumps))


def default_scenarios(horizon):
    """Repeated attack windows spread over the run, as used by the default experiment."""
    f = horizon / 26_000.0
    return [
        AttackScenario(TrafficKind.BACKDOOR, start=3000 * f, duration=120, repeats=3,
                       period=8000 * f),
        AttackScenario(TrafficKind.SQL_INJECTION, start=6000 * f, duration=60, repeats=2,
                       period=9000 * f),
        AttackScenario(TrafficKind.COMMAND_INJECTION, start=8000 * f, duration=90, repeats=2,
                       period=14000 * f),
    ]

"""Water-tank process, PLC ladder logic and the HMI polling loop.

The tank has a fill pump, a drain pump and a valve; a turbidity sensor drives a
three-light alarm. The PLC keeps the level between two set points with
hysteresis and mirrors the sensors into holding registers that the HMI reads
over Modbus.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

from .errors import ConfigurationError

# Holding-register map (unit id 1). Scaled integers, see ``encode_level``.
REG_LEVEL = 0
REG_TURBIDITY = 1
REG_PUMP1 = 2
REG_PUMP2 = 3
REG_VALVE = 4
REG_ALARM = 5
REG_MODE = 6
REG_SCAN_COUNT = 7
REGISTER_COUNT = 16

# Registers the HMI reads every poll.
HMI_POLL_START = 0
HMI_POLL_COUNT = 8

MODE_AUTO = 0
MODE_MANUAL = 1

# Coil map: actuator outputs as seen by the field wiring.
COIL_PUMP1, COIL_PUMP2, COIL_VALVE, COIL_GREEN, COIL_YELLOW, COIL_RED = range(6)
COIL_COUNT = 6

LEVEL_SCALE = 10_000
TURBIDITY_SCALE = 100


class Alarm(enum.IntEnum):
    GREEN = 0
    YELLOW = 1
    RED = 2


@dataclass(frozen=True)
class PlantConfig:
    fill_rate: float = 0.05
    drain_rate: float = 0.05
    turbidity_step: float = 0.5
    turbidity_max: float = 100.0
    level_low: float = 0.3
    level_high: float = 0.8
    turbidity_yellow: float = 30.0
    turbidity_red: float = 70.0
    scan_period: float = 0.1

    def __post_init__(self):
        for name in ("fill_rate", "drain_rate", "turbidity_step", "turbidity_max"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ConfigurationError(f"must be finite and >= 0, got {value!r}", name)
        if not (math.isfinite(self.scan_period) and self.scan_period > 0):
            raise ConfigurationError(f"must be > 0, got {self.scan_period!r}", "scan_period")
        if not 0 < self.level_low < self.level_high < 1:
            raise ConfigurationError(
                f"need 0 < level_low < level_high < 1, got {self.level_low}, {self.level_high}",
                "level_low",
            )
        if not 0 < self.turbidity_yellow < self.turbidity_red:
            raise ConfigurationError(
                "need 0 < turbidity_yellow < turbidity_red, "
                f"got {self.turbidity_yellow}, {self.turbidity_red}",
                "turbidity_yellow",
            )


@dataclass(frozen=True)
class PlantState:
    water_level: float = 0.5
    turbidity: float = 10.0
    pump1_on: bool = True
    pump2_on: bool = False
    valve_open: bool = False
    alarm_light: Alarm = Alarm.GREEN
    sim_time: float = 0.0


@dataclass(frozen=True)
class ActuatorCommands:
    pump1_on: bool
    pump2_on: bool
    valve_open: bool
    alarm_light: Alarm


@dataclass(frozen=True)
class PlcState:
    holding_registers: tuple = field(default_factory=lambda: (0,) * REGISTER_COUNT)
    coils: tuple = field(default_factory=lambda: (False,) * COIL_COUNT)
    scan_period: float = 0.1

    def __post_init__(self):
        if len(self.holding_registers) < REGISTER_COUNT:
            raise ConfigurationError(
                f"need at least {REGISTER_COUNT} registers", "holding_registers"
            )
        for value in self.holding_registers:
            if not 0 <= value <= 0xFFFF:
                raise ConfigurationError(f"register value {value} not 16-bit", "holding_registers")

    def register(self, index):
        return self.holding_registers[index]

    def with_registers(self, start, values):
        regs = list(self.holding_registers)
        regs[start:start + len(values)] = values
        return replace(self, holding_registers=tuple(regs))


def encode_level(level):
    return int(round(min(max(level, 0.0), 1.0) * LEVEL_SCALE))


def encode_turbidity(turbidity):
    return min(int(round(max(turbidity, 0.0) * TURBIDITY_SCALE)), 0xFFFF)


def initial_plc(plant: PlantState, config: PlantConfig) -> PlcState:
    """PLC image consistent with ``plant`` before the first scan."""
    regs = [0] * REGISTER_COUNT
    regs[REG_LEVEL] = encode_level(plant.water_level)
    regs[REG_TURBIDITY] = encode_turbidity(plant.turbidity)
    regs[REG_PUMP1] = int(plant.pump1_on)
    regs[REG_PUMP2] = int(plant.pump2_on)
    regs[REG_VALVE] = int(plant.valve_open)
    regs[REG_ALARM] = int(plant.alarm_light)
    regs[REG_MODE] = MODE_AUTO
    return PlcState(tuple(regs), _coils(plant.pump1_on, plant.pump2_on, plant.valve_open,
                                        plant.alarm_light), config.scan_period)


def _coils(pump1, pump2, valve, alarm):
    return (bool(pump1), bool(pump2), bool(valve),
            alarm == Alarm.GREEN, alarm == Alarm.YELLOW, alarm == Alarm.RED)


def alarm_for(turbidity, config: PlantConfig) -> Alarm:
    if turbidity < config.turbidity_yellow:
        return Alarm.GREEN
    if turbidity < config.turbidity_red:
        return Alarm.YELLOW
    return Alarm.RED


def step_plant(state: PlantState, dt, rng=None, config: PlantConfig = PlantConfig()) -> PlantState:
    """Advance the tank by one Euler step of length ``dt``.

    ``rng`` is a ``numpy.random.Generator`` feeding the turbidity random walk;
    pass ``None`` to freeze turbidity.
    """
    if not math.isfinite(dt) or dt <= 0:
        raise ConfigurationError(f"dt must be finite and > 0, got {dt!r}", "dt")
    if dt > config.scan_period * (1 + 1e-12):
        raise ConfigurationError(
            f"dt {dt} exceeds scan period {config.scan_period}", "dt"
        )
    inflow = config.fill_rate * state.pump1_on
    outflow = config.drain_rate * (int(state.pump2_on) + int(state.valve_open))
    level = state.water_level + (inflow - outflow) * dt
    level = min(max(level, 0.0), 1.0)
    turbidity = state.turbidity
    if rng is not None and config.turbidity_step > 0:
        turbidity += rng.uniform(-config.turbidity_step, config.turbidity_step)
        turbidity = min(max(turbidity, 0.0), config.turbidity_max)
    return replace(state, water_level=level, turbidity=turbidity, sim_time=state.sim_time + dt)


def scan_cycle(plc: PlcState, plant: PlantState, config: PlantConfig = PlantConfig()):
    """One PLC scan: read sensors, evaluate the ladder rungs, write outputs.

    Returns ``(new_plc, ActuatorCommands)``. In manual mode the actuator
    registers are driven verbatim, whoever wrote them.
    """
    regs = list(plc.holding_registers)
    pump1 = bool(regs[REG_PUMP1])
    pump2 = bool(regs[REG_PUMP2])
    if regs[REG_MODE] == MODE_MANUAL:
        alarm = Alarm(min(regs[REG_ALARM], Alarm.RED))
    else:
        if plant.water_level < config.level_low:
            pump1, pump2 = True, False
        elif plant.water_level > config.level_high:
            pump1, pump2 = False, True
        alarm = alarm_for(plant.turbidity, config)
    valve = bool(regs[REG_VALVE])

    regs[REG_LEVEL] = encode_level(plant.water_level)
    regs[REG_TURBIDITY] = encode_turbidity(plant.turbidity)
    regs[REG_PUMP1] = int(pump1)
    regs[REG_PUMP2] = int(pump2)
    regs[REG_ALARM] = int(alarm)
    regs[REG_SCAN_COUNT] = (regs[REG_SCAN_COUNT] + 1) & 0xFFFF
    new_plc = PlcState(tuple(regs), _coils(pump1, pump2, valve, alarm), plc.scan_period)
    return new_plc, ActuatorCommands(pump1, pump2, valve, alarm)


def apply_commands(plant: PlantState, commands: ActuatorCommands) -> PlantState:
    return replace(
        plant,
        pump1_on=commands.pump1_on,
        pump2_on=commands.pump2_on,
        valve_open=commands.valve_open,
        alarm_light=commands.alarm_light,
    )


@dataclass(frozen=True)
class PollEvent:
    time: float
    start: int = HMI_POLL_START
    count: int = HMI_POLL_COUNT


def hmi_poll_schedule(poll_period, horizon, jitter=0.0, rng=None):
    """Evenly spaced HMI read events at ``k * poll_period`` for k = 1..floor(horizon/period).

    ``jitter`` adds a uniform offset in ``[-jitter, jitter]`` drawn from ``rng``.
    """
    if not (math.isfinite(poll_period) and poll_period > 0):
        raise ConfigurationError(f"must be > 0, got {poll_period!r}", "poll_period")
    if not (math.isfinite(horizon) and horizon > 0):
        raise ConfigurationError(f"must be > 0, got {horizon!r}", "horizon")
    if jitter < 0 or jitter >= poll_period / 2:
        raise ConfigurationError("jitter must lie in [0, poll_period/2)", "poll_jitter")
    if jitter > 0 and rng is None:
        raise ConfigurationError("jitter needs an RNG stream", "poll_jitter")
    n = math.floor(horizon / poll_period * (1 + 1e-12))
    times = [k * poll_period for k in range(1, n + 1)]
    if jitter > 0:
        offsets = rng.uniform(-jitter, jitter, size=n)
        times = [min(max(t + float(o), 0.0), horizon) for t, o in zip(times, offsets)]
    return [PollEvent(t) for t in times]

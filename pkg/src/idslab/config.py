"""Experiment configuration: INI file <-> ``ExperimentConfig``.

Layout (every key optional; omitted keys keep their defaults)::

    [experiment]    seed, out
    [simulation]    horizon
    [plant]         PlantConfig fields
    [network]       NetworkConfig fields
    [attack]        scenarios = default | none | name, name, ...
                    target = default | none | normal=99.81, backdoor=0.085, ...
    [scenario.NAME] AttackScenario fields (kind, start, duration, ...)
    [extraction]    idle_timeout, min_duration
    [learning]      algorithms, train_fraction, stratified, importance_repeats
    [hyper.ALGO]    hyperparameter overrides for one algorithm

Every seed used downstream is derived from ``seed`` (see ``ExperimentConfig.seed_for``).
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field, fields, replace

from .attacks import DEFAULT_COMPOSITION, AttackScenario, default_scenarios
from .errors import ConfigurationError
from .flows import DEFAULT_IDLE_TIMEOUT, DEFAULT_MIN_DURATION
from .learners import ALGORITHMS, resolve_hyperparameters
from .modbus import Role
from .packets import TrafficKind
from .plant import PlantConfig
from .seeding import derive_seed
from .testbed import NetworkConfig

DEFAULT_SEED = 7
DEFAULT_HORIZON = 26_000.0

_SCENARIO_FIELDS = tuple(f.name for f in fields(AttackScenario) if f.name != "attacker")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = DEFAULT_SEED
    out: str = "out"
    horizon: float = DEFAULT_HORIZON
    plant: PlantConfig = field(default_factory=PlantConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    # None means the built-in schedule for the horizon
    scenarios: tuple | None = None
    scenario_names: tuple = ()
    target: dict | None = field(default_factory=lambda: {k.value: v for k, v in
                                                         DEFAULT_COMPOSITION.items()})
    idle_timeout: float = DEFAULT_IDLE_TIMEOUT
    min_duration: float = DEFAULT_MIN_DURATION
    algorithms: tuple = ALGORITHMS
    train_fraction: float = 0.8
    stratified: bool = True
    importance_repeats: int = 5
    hyperparameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ConfigurationError(f"must be > 0, got {self.horizon!r}", "simulation.horizon")
        if self.seed < 0:
            raise ConfigurationError("must be >= 0", "experiment.seed")
        if not (math.isfinite(self.idle_timeout) and self.idle_timeout > 0):
            raise ConfigurationError("must be > 0", "extraction.idle_timeout")
        if not (math.isfinite(self.min_duration) and self.min_duration > 0):
            raise ConfigurationError("must be > 0", "extraction.min_duration")
        if not 0 < self.train_fraction < 1:
            raise ConfigurationError("must lie in (0, 1)", "learning.train_fraction")
        if self.importance_repeats < 1:
            raise ConfigurationError("must be >= 1", "learning.importance_repeats")
        if not self.algorithms:
            raise ConfigurationError("need at least one algorithm", "learning.algorithms")
        for name in self.algorithms:
            if name not in ALGORITHMS:
                raise ConfigurationError(f"unknown algorithm {name!r}", "learning.algorithms")
        for name, overrides in self.hyperparameters.items():
            try:
                resolve_hyperparameters(name, overrides)
            except ConfigurationError as exc:
                raise ConfigurationError(exc.reason, f"hyper.{name}.{exc.path}") from None
        if self.scenarios is not None and len(self.scenario_names) != len(self.scenarios):
            object.__setattr__(self, "scenario_names",
                               tuple(f"s{i}" for i in range(len(self.scenarios))))

    def resolved_scenarios(self):
        scenarios = (default_scenarios(self.horizon) if self.scenarios is None
                     else list(self.scenarios))
        attacker = self.network.endpoint(Role.ATTACKER)
        return [replace(s, attacker=attacker) for s in scenarios]

    def seed_for(self, *labels):
        return derive_seed(self.seed, *labels)

    def with_overrides(self, seed=None, out=None):
        changes = {}
        if seed is not None:
            changes["seed"] = int(seed)
        if out is not None:
            changes["out"] = str(out)
        return replace(self, **changes) if changes else self

    # -- serialization --------------------------------------------------------

    def to_ini(self, include_out=True):
        """INI text that ``from_ini`` reads back to an equal config.

        ``include_out=False`` leaves out the output directory, so the copy
        stored inside a run does not depend on where the run was written.
        """
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["experiment"] = {"seed": str(self.seed)}
        if include_out:
            cp["experiment"]["out"] = self.out
        cp["simulation"] = {"horizon": repr(self.horizon)}
        cp["plant"] = {f.name: _fmt(getattr(self.plant, f.name)) for f in fields(PlantConfig)}
        cp["network"] = {f.name: _fmt(getattr(self.network, f.name))
                         for f in fields(NetworkConfig)}
        if self.scenarios is None:
            names = "default"
        else:
            names = ", ".join(self.scenario_names) or "none"
        if self.target is None:
            target = "none"
        else:
            target = ", ".join(f"{k}={_fmt(v)}" for k, v in self.target.items())
        cp["attack"] = {"scenarios": names, "target": target}
        for name, s in zip(self.scenario_names, self.scenarios or ()):
            section = {}
            for key in _SCENARIO_FIELDS:
                value = getattr(s, key)
                if key == "kind":
                    value = value.value
                elif key == "targets":
                    value = ", ".join(t.value for t in value)
                section[key] = _fmt(value)
            cp[f"scenario.{name}"] = section
        cp["extraction"] = {"idle_timeout": repr(self.idle_timeout),
                            "min_duration": repr(self.min_duration)}
        cp["learning"] = {
            "algorithms": ", ".join(self.algorithms),
            "train_fraction": repr(self.train_fraction),
            "stratified": _fmt(self.stratified),
            "importance_repeats": str(self.importance_repeats),
        }
        for name in sorted(self.hyperparameters):
            cp[f"hyper.{name}"] = {k: _fmt(v) for k, v in self.hyperparameters[name].items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text, source="<config>"):
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigurationError(str(exc).splitlines()[0], source) from None
        reader = _Reader(cp)
        kwargs = {}
        if cp.has_section("experiment"):
            reader.known("experiment", {"seed", "out"})
            kwargs["seed"] = reader.get("experiment", "seed", int, DEFAULT_SEED)
            kwargs["out"] = reader.get("experiment", "out", str, "out")
        if cp.has_section("simulation"):
            reader.known("simulation", {"horizon"})
            kwargs["horizon"] = reader.get("simulation", "horizon", float, DEFAULT_HORIZON)
        kwargs["plant"] = reader.dataclass("plant", PlantConfig)
        kwargs["network"] = reader.dataclass("network", NetworkConfig)
        if cp.has_section("attack"):
            reader.known("attack", {"scenarios", "target"})
            names = reader.get("attack", "scenarios", str, "default").strip()
            target = reader.get("attack", "target", str, "default").strip()
        else:
            names, target = "default", "default"
        kwargs.update(reader.scenarios(names))
        kwargs["target"] = reader.target(target)
        if cp.has_section("extraction"):
            reader.known("extraction", {"idle_timeout", "min_duration"})
            kwargs["idle_timeout"] = reader.get("extraction", "idle_timeout", float,
                                                DEFAULT_IDLE_TIMEOUT)
            kwargs["min_duration"] = reader.get("extraction", "min_duration", float,
                                                DEFAULT_MIN_DURATION)
        if cp.has_section("learning"):
            reader.known("learning", {"algorithms", "train_fraction", "stratified",
                                      "importance_repeats"})
            algos = reader.get("learning", "algorithms", str, ", ".join(ALGORITHMS))
            kwargs["algorithms"] = tuple(a.strip() for a in algos.split(",") if a.strip())
            kwargs["train_fraction"] = reader.get("learning", "train_fraction", float, 0.8)
            kwargs["stratified"] = reader.get("learning", "stratified", _bool, True)
            kwargs["importance_repeats"] = reader.get("learning", "importance_repeats", int, 5)
        hyper = {}
        for section in cp.sections():
            if section.startswith("hyper."):
                algo = section[len("hyper."):]
                hyper[algo] = {k: reader.get(section, k, _number) for k in cp[section]}
            elif section.split(".")[0] not in _SECTIONS:
                raise ConfigurationError("unknown section", section)
        kwargs["hyperparameters"] = hyper
        return cls(**kwargs)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigurationError(exc.strerror or str(exc), str(path)) from None
        return cls.from_ini(text, source=str(path))


_SECTIONS = {"experiment", "simulation", "plant", "network", "attack", "scenario",
             "extraction", "learning", "hyper"}


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _bool(text):
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _number(text):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        return float(text)


class _Reader:
    def __init__(self, cp):
        self.cp = cp

    def known(self, section, keys):
        for key in self.cp[section]:
            if key not in keys:
                raise ConfigurationError("unknown key", f"{section}.{key}")

    def get(self, section, key, convert, default=None):
        if not self.cp.has_option(section, key):
            return default
        raw = self.cp[section][key]
        try:
            return convert(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"cannot parse {raw!r}: {exc}", f"{section}.{key}") from None

    def dataclass(self, section, cls):
        if not self.cp.has_section(section):
            return cls()
        types = {f.name: f.type for f in fields(cls)}
        self.known(section, set(types))
        values = {}
        for key in self.cp[section]:
            convert = {"float": float, "int": int, "str": str, "bool": _bool}.get(
                types[key] if isinstance(types[key], str) else types[key].__name__, str)
            values[key] = self.get(section, key, convert)
        try:
            return cls(**values)
        except ConfigurationError as exc:
            raise ConfigurationError(exc.reason, f"{section}.{exc.path}") from None

    def scenarios(self, names):
        if names == "default":
            return {"scenarios": None, "scenario_names": ()}
        if names == "none":
            return {"scenarios": (), "scenario_names": ()}
        listed = tuple(n.strip() for n in names.split(",") if n.strip())
        scenarios = []
        for name in listed:
            section = f"scenario.{name}"
            if not self.cp.has_section(section):
                raise ConfigurationError("scenario section missing", section)
            self.known(section, set(_SCENARIO_FIELDS))
            values = {}
            for key in self.cp[section]:
                if key == "kind":
                    values[key] = self.get(section, key, TrafficKind)
                elif key == "targets":
                    values[key] = self.get(section, key, lambda t: tuple(
                        Role(r.strip()) for r in t.split(",") if r.strip()))
                elif key == "restore_auto":
                    values[key] = self.get(section, key, _bool)
                else:
                    values[key] = self.get(section, key, _number)
            if "kind" not in values:
                raise ConfigurationError("missing key", f"{section}.kind")
            try:
                scenarios.append(AttackScenario(**values))
            except ConfigurationError as exc:
                raise ConfigurationError(exc.reason, f"{section}.{exc.path}") from None
            except TypeError as exc:
                raise ConfigurationError(str(exc), section) from None
        return {"scenarios": tuple(scenarios), "scenario_names": listed}

    def target(self, text):
        if text == "default":
            return {k.value: v for k, v in DEFAULT_COMPOSITION.items()}
        if text == "none":
            return None
        target = {}
        for part in text.split(","):
            key, sep, value = part.partition("=")
            key = key.strip()
            try:
                kind = TrafficKind(key)
                target[kind.value] = float(value)
            except ValueError:
                raise ConfigurationError(f"bad entry {part.strip()!r}", "attack.target") from None
            if not sep:
                raise ConfigurationError(f"bad entry {part.strip()!r}", "attack.target")
        return target

"""Scenario configuration loaded from JSON."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Type, TypeVar

from .errors import ConfigError
from .experiments import ExperimentConfig, WorkloadConfig
from .forwarding import FloodDetectionConfig, ForwardingConfig
from .ingestion import TESTNET_PRESET, TopologyConfig
from .prober import ProberConfig
from .scenario import AttackerConfig

T = TypeVar("T")

_NESTED = {
    (ForwardingConfig, "flood_detection"): FloodDetectionConfig,
    (ExperimentConfig, "workload"): WorkloadConfig,
    (ExperimentConfig, "topology"): TopologyConfig,
    (ExperimentConfig, "prober"): ProberConfig,
    (ExperimentConfig, "attacker"): AttackerConfig,
}


def build(cls: Type[T], data: Any, section: str) -> T:
    """Instantiate dataclass ``cls`` from a dict, naming ``section`` in any error."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{section}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{section}: unknown field(s) {unknown}")
    kwargs = dict(data)
    for name, value in data.items():
        sub = _NESTED.get((cls, name))
        if sub is not None and isinstance(value, dict):
            kwargs[name] = build(sub, value, f"{section}.{name}")
    try:
        return cls(**kwargs)
    except ConfigError as e:
        msg = str(e)
        raise ConfigError(msg if msg.startswith(section) else f"{section}: {msg}") from e
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{section}: {e}") from e


@dataclass
class ScenarioConfig:
    topology: Optional[TopologyConfig] = None
    snapshot: Optional[Path] = None
    prober: ProberConfig = field(default_factory=ProberConfig)
    forwarding: ForwardingConfig = field(default_factory=ForwardingConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    attacker: AttackerConfig = field(default_factory=AttackerConfig)
    out: Path = Path("out")
    seed: int = 0

    def __post_init__(self):
        if (self.topology is None) == (self.snapshot is None):
            raise ConfigError("exactly one of 'topology' or 'snapshot' must be given")

    @classmethod
    def from_dict(cls, d: Dict[str, Any], base_dir: Optional[Path] = None) -> "ScenarioConfig":
        if not isinstance(d, dict):
            raise ConfigError("config: expected a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"config: unknown field(s) {unknown}")
        seed = d.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ConfigError("seed: expected an integer")
        topo = None
        if "topology" in d:
            raw = d["topology"]
            if isinstance(raw, dict):
                raw = {"rng_seed": seed, **raw}
            topo = build(TopologyConfig, raw, "topology")
        snap = None
        if "snapshot" in d:
            if not isinstance(d["snapshot"], str):
                raise ConfigError("snapshot: expected a path string")
            snap = Path(d["snapshot"])
            if base_dir is not None and not snap.is_absolute():
                snap = base_dir / snap
        exp = d.get("experiment") or {}
        if not isinstance(exp, dict):
            raise ConfigError("experiment: expected an object")
        exp = dict(exp)
        exp.setdefault("seeds", [seed])
        for key in ("prober", "attacker"):
            if isinstance(d.get(key), dict):
                exp.setdefault(key, d[key])
        if topo is not None:
            exp.setdefault("topology", asdict(topo))
        return cls(
            topology=topo,
            snapshot=snap,
            prober=build(ProberConfig, d.get("prober"), "prober"),
            forwarding=build(ForwardingConfig, d.get("forwarding"), "forwarding"),
            experiment=build(ExperimentConfig, exp, "experiment"),
            attacker=build(AttackerConfig, d.get("attacker"), "attacker"),
            out=Path(d.get("out", "out")),
            seed=seed,
        )

    def with_seed(self, seed: int) -> "ScenarioConfig":
        topo = replace(self.topology, rng_seed=seed) if self.topology is not None else None
        return replace(self, seed=seed, topology=topo, experiment=replace(self.experiment, seeds=(seed,)))

    def with_preset(self, name: str) -> "ScenarioConfig":
        if name != "testnet-scale":
            raise ConfigError(f"--preset: unknown preset {name!r}")
        base = self.topology or TopologyConfig()
        topo = replace(base, **TESTNET_PRESET)
        return replace(self, topology=topo, snapshot=None,
                       experiment=replace(self.experiment, topology=replace(self.experiment.topology, **TESTNET_PRESET)))


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"config: cannot read {path}: {e.strerror}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config: invalid JSON ({e.msg} at line {e.lineno})") from e
    return ScenarioConfig.from_dict(data, base_dir=path.parent)

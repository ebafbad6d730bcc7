"""Snapshot files and synthetic topologies.

A snapshot is one UTF-8 JSON document::

    {"nodes": [{"id", "live", "latency_ms_mean", "latency_ms_jitter"}],
     "channels": [{"id", "source", "dest", "capacity_sat", "balance_source_sat",
                   "policies": [src->dst, dst->src]}]}

each policy being ``{"active", "max_htlc_msat", "base_fee_msat", "fee_ppm"}``.
Nodes may also carry ``accepts_connections`` (defaults to ``live``).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Dict, Union

import jsonschema
import numpy as np

from .core import (Channel, DirectionPolicy, GroundTruthNetwork, Node, canonical_pair,
                   sat_to_msat)
from .errors import ConfigError, InvariantError, SchemaError

SOFT_CAPACITY_SAT = 16_777_215
MIN_CAPACITY_SAT = 20_000
MAX_HTLC_PAYLOAD_MSAT = 4_294_967_295

_POLICY = {
    "type": "object",
    "required": ["active", "max_htlc_msat", "base_fee_msat", "fee_ppm"],
    "properties": {
        "active": {"type": "boolean"},
        "max_htlc_msat": {"type": "integer"},
        "base_fee_msat": {"type": "integer"},
        "fee_ppm": {"type": "integer"},
    },
}

SNAPSHOT_SCHEMA = {
    "type": "object",
    "required": ["nodes", "channels"],
    "properties": {
        "nodes": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "live", "latency_ms_mean", "latency_ms_jitter"],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "live": {"type": "boolean"},
                    "latency_ms_mean": {"type": "number"},
                    "latency_ms_jitter": {"type": "number"},
                    "accepts_connections": {"type": "boolean"},
                },
            },
        },
        "channels": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "source", "dest", "capacity_sat", "balance_source_sat", "policies"],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "source": {"type": "string"},
                    "dest": {"type": "string"},
                    "capacity_sat": {"type": "integer"},
                    "balance_source_sat": {"type": "integer"},
                    "policies": {"type": "array", "items": _POLICY, "minItems": 2, "maxItems": 2},
                },
            },
        },
    },
}


def parse_snapshot(document: Union[Dict[str, Any], str, bytes]) -> GroundTruthNetwork:
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as e:
            raise SchemaError(f"not JSON: {e}") from e
    try:
        jsonschema.validate(document, SNAPSHOT_SCHEMA)
    except jsonschema.ValidationError as e:
        path = "/".join(str(p) for p in e.absolute_path)
        raise SchemaError(f"{path or '<root>'}: {e.message}") from e

    net = GroundTruthNetwork()
    for nd in document["nodes"]:
        if nd["id"] in net.nodes:
            raise SchemaError(f"duplicate node id {nd['id']!r}")
        net.add_node(Node(nd["id"], nd["live"], float(nd["latency_ms_mean"]),
                          float(nd["latency_ms_jitter"]), nd.get("accepts_connections")))
    for cd in document["channels"]:
        for end in (cd["source"], cd["dest"]):
            if end not in net.nodes:
                raise SchemaError(f"channel {cd['id']}: unknown node {end!r}")
        if cd["id"] in net.channels:
            raise SchemaError(f"duplicate channel id {cd['id']!r}")
        p0, p1 = (DirectionPolicy(**p) for p in cd["policies"])
        net.add_channel(Channel(
            id=cd["id"], source=cd["source"], destination=cd["dest"],
            capacity_msat=sat_to_msat(cd["capacity_sat"]),
            balance_source_msat=sat_to_msat(cd["balance_source_sat"]),
            policy_src_to_dst=p0, policy_dst_to_src=p1,
        ))
    return net


def emit_snapshot(net: GroundTruthNetwork) -> Dict[str, Any]:
    """Inverse of :func:`parse_snapshot`. Balances must be whole satoshis."""
    nodes = []
    for nid in sorted(net.nodes):
        n = net.nodes[nid]
        nodes.append({
            "id": n.id, "live": n.live,
            "latency_ms_mean": n.latency_ms_mean, "latency_ms_jitter": n.latency_ms_jitter,
            "accepts_connections": n.accepts_connections,
        })
    channels = []
    for cid in sorted(net.channels):
        ch = net.channels[cid]
        if ch.capacity_msat % 1000 or ch.balance_source_msat % 1000:
            raise InvariantError(f"channel {cid}: sub-satoshi amounts cannot be written to a snapshot")
        channels.append({
            "id": ch.id, "source": ch.source, "dest": ch.destination,
            "capacity_sat": ch.capacity_msat // 1000,
            "balance_source_sat": ch.balance_source_msat // 1000,
            "policies": [asdict(ch.policy_src_to_dst), asdict(ch.policy_dst_to_src)],
        })
    return {"nodes": nodes, "channels": channels}


def dumps_snapshot(net: GroundTruthNetwork) -> str:
    return json.dumps(emit_snapshot(net), indent=1, sort_keys=True) + "\n"


def load_snapshot(path: Union[str, Path]) -> GroundTruthNetwork:
    return parse_snapshot(Path(path).read_text(encoding="utf-8"))


def save_snapshot(net: GroundTruthNetwork, path: Union[str, Path]) -> None:
    Path(path).write_text(dumps_snapshot(net), encoding="utf-8")


@dataclass
class TopologyConfig:
    node_count: int = 200
    channel_count: int = 500
    degree_distribution: str = "power_law"  # or "uniform"
    power_law_exponent: float = 2.3
    capacity_min_sat: int = MIN_CAPACITY_SAT
    capacity_max_sat: int = SOFT_CAPACITY_SAT
    balance_skew: float = 0.3
    dead_node_fraction: float = 0.1
    # live nodes that refuse inbound P2P connections (unreachable address)
    unreachable_fraction: float = 0.5
    inactive_channel_fraction: float = 0.1
    one_way_fraction: float = 0.05
    parallel_channel_fraction: float = 0.0
    latency_ms_mean: float = 400.0
    latency_ms_jitter: float = 0.5
    rng_seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("balance_skew", "dead_node_fraction", "unreachable_fraction",
                     "inactive_channel_fraction", "one_way_fraction", "parallel_channel_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"topology.{name} must be in [0, 1], got {v}")
        if self.node_count < 2:
            raise ConfigError("topology.node_count must be >= 2")
        if self.channel_count <= 0:
            raise ConfigError("topology.channel_count must be > 0")
        if self.channel_count < self.node_count - 1:
            raise ConfigError("topology.channel_count must be >= node_count - 1 (spanning tree)")
        if self.degree_distribution not in ("power_law", "uniform"):
            raise ConfigError("topology.degree_distribution must be 'power_law' or 'uniform'")
        if self.degree_distribution == "power_law" and self.power_law_exponent <= 1:
            raise ConfigError("topology.power_law_exponent must be > 1")
        if not 0 < self.capacity_min_sat <= self.capacity_max_sat:
            raise ConfigError("topology.capacity_min_sat must be in (0, capacity_max_sat]")
        if self.latency_ms_mean <= 0 or self.latency_ms_jitter <= 0:
            raise ConfigError("topology.latency parameters must be > 0")

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "TopologyConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"topology: unknown field(s) {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(f"topology: {e}") from e


TESTNET_PRESET = dict(
    node_count=1974, channel_count=5884, inactive_channel_fraction=0.57,
    dead_node_fraction=0.2, unreachable_fraction=0.85,
)


BASE_FEES_MSAT = (0, 1000)
FEE_PPMS = (1, 10, 100)


def _node_weights(cfg: TopologyConfig, n: int) -> np.ndarray:
    if cfg.degree_distribution == "uniform":
        return np.ones(n)
    # Chung-Lu expected degrees w_i ~ i^(-1/(gamma-1)) give a degree tail of exponent gamma
    return (np.arange(n) + 1.0) ** (-1.0 / (cfg.power_law_exponent - 1.0))


def generate_topology(cfg: TopologyConfig) -> GroundTruthNetwork:
    """Random network with a spanning tree plus weighted random channels.

    Deterministic for a fixed ``rng_seed``.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.rng_seed)
    n = cfg.node_count
    width = max(4, len(str(n - 1)))
    ids = [f"n{i:0{width}d}" for i in range(n)]
    w = _node_weights(cfg, n)
    # shuffle which node gets which weight so hubs are not just the low ids
    w = w[rng.permutation(n)]

    n_parallel = int(round(cfg.parallel_channel_fraction * cfg.channel_count))
    n_base = cfg.channel_count - n_parallel
    if n_base < n - 1:
        raise ConfigError("topology.parallel_channel_fraction leaves too few channels for a spanning tree")

    # weighted draws below use the cdf + searchsorted form of Generator.choice(p=...);
    # it consumes the same random stream without the per-call validation cost
    pairs = []
    seen = set()
    order = rng.permutation(n)
    for k in range(1, n):
        v = order[k]
        earlier = order[:k]
        cdf = (w[earlier] / w[earlier].sum()).cumsum()
        cdf /= cdf[-1]
        u = earlier[cdf.searchsorted(rng.random(), side="right")]
        key = canonical_pair(ids[u], ids[v])
        seen.add(key)
        pairs.append(key)
    cdf_all = (w / w.sum()).cumsum()
    cdf_all /= cdf_all[-1]
    max_pairs = n * (n - 1) // 2
    tries = 0
    while len(pairs) < n_base and len(seen) < max_pairs:
        a, b = cdf_all.searchsorted(rng.random(2), side="right")
        tries += 1
        if a == b:
            continue
        key = canonical_pair(ids[a], ids[b])
        if key in seen:
            if tries > 50 * cfg.channel_count:
                # dense corner: fall back to uniform pair choice
                a, b = rng.choice(n, size=2, replace=False)
                key = canonical_pair(ids[a], ids[b])
                if key in seen:
                    continue
            else:
                continue
        seen.add(key)
        pairs.append(key)
    for _ in range(n_parallel):
        pairs.append(pairs[int(rng.integers(len(pairs)))])

    net = GroundTruthNetwork()
    n_dead = int(round(cfg.dead_node_fraction * n))
    dead = set(rng.choice(n, size=n_dead, replace=False).tolist()) if n_dead else set()
    for i, nid in enumerate(ids):
        live = i not in dead
        reachable = live and rng.random() >= cfg.unreachable_fraction
        net.add_node(Node(nid, live, cfg.latency_ms_mean, cfg.latency_ms_jitter, reachable))

    lo, hi = math.log(cfg.capacity_min_sat), math.log(cfg.capacity_max_sat)
    cwidth = max(5, len(str(len(pairs) - 1)))
    for k, (s, d) in enumerate(pairs):
        cap = int(round(math.exp(rng.uniform(lo, hi))))
        cap = min(max(cap, cfg.capacity_min_sat), cfg.capacity_max_sat)
        if rng.random() < cfg.balance_skew:
            bal = cap if rng.random() < 0.5 else 0
        else:
            bal = int(rng.integers(0, cap + 1))
        active = [True, True]
        if rng.random() < cfg.inactive_channel_fraction:
            active = [False, False]
        elif rng.random() < cfg.one_way_fraction:
            active[int(rng.integers(2))] = False
        pols = []
        for a in active:
            pols.append(DirectionPolicy(
                active=a,
                max_htlc_msat=min(sat_to_msat(cap), MAX_HTLC_PAYLOAD_MSAT),
                base_fee_msat=BASE_FEES_MSAT[rng.integers(0, 2)],
                fee_ppm=FEE_PPMS[rng.integers(0, 3)],
            ))
        net.add_channel(Channel(f"c{k:0{cwidth}d}", s, d, sat_to_msat(cap), sat_to_msat(bal), pols[0], pols[1]))
    return net

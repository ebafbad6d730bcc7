"""Wiring: attacker entry channels, engine and prober for one run."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Dict, Optional, Tuple

from .core import (Channel, ChannelId, DirectionPolicy, GroundTruthNetwork, Node, PublicView,
                   derive_public_view, sat_to_msat)
from .errors import ConfigError
from .forwarding import ForwardingConfig, ForwardingEngine
from .ingestion import MAX_HTLC_PAYLOAD_MSAT
from .prober import AttackerSetup, EstimateTable, Observer, ProbeLog, Prober, ProberConfig

ATTACKER_ID = "attacker"


@dataclass
class AttackerConfig:
    entry_capacities_sat: Tuple[int, ...] = (16_777_215,) * 4 + (4_300_000,)
    node_id: str = ATTACKER_ID

    def __post_init__(self):
        self.entry_capacities_sat = tuple(int(c) for c in self.entry_capacities_sat)
        if not self.entry_capacities_sat or min(self.entry_capacities_sat) <= 0:
            raise ConfigError("attacker.entry_capacities_sat must be non-empty and positive")


def attach_attacker(net: GroundTruthNetwork, cfg: Optional[AttackerConfig] = None) -> AttackerSetup:
    """Open attacker-funded entry channels to the best-connected live nodes."""
    cfg = cfg or AttackerConfig()
    if cfg.node_id in net.nodes:
        raise ConfigError(f"attacker id {cfg.node_id!r} already in network")
    degree: Dict[str, int] = {n: 0 for n in net.nodes}
    for ch in net.channels.values():
        degree[ch.source] += 1
        degree[ch.destination] += 1
    peers = sorted((n for n in net.nodes if net.nodes[n].live), key=lambda n: (-degree[n], n))
    if len(peers) < len(cfg.entry_capacities_sat):
        raise ConfigError("not enough live nodes for the requested entry channels")
    net.add_node(Node(cfg.node_id, live=True))
    chans, balances = [], {}
    for i, (peer, cap_sat) in enumerate(zip(peers, cfg.entry_capacities_sat)):
        cap = sat_to_msat(cap_sat)
        ours = DirectionPolicy(True, min(cap, MAX_HTLC_PAYLOAD_MSAT), 0, 0)
        theirs = DirectionPolicy(True, min(cap, MAX_HTLC_PAYLOAD_MSAT), 1000, 1)
        cid = f"entry{i}"
        if cfg.node_id < peer:
            ch = Channel(cid, cfg.node_id, peer, cap, cap, ours, theirs)
        else:
            ch = Channel(cid, peer, cfg.node_id, cap, 0, theirs, ours)
        net.add_channel(ch)
        chans.append(cid)
        balances[cid] = cap
    return AttackerSetup(cfg.node_id, tuple(chans), balances)


@dataclass
class ProbeRun:
    net: GroundTruthNetwork
    view: PublicView
    attacker: AttackerSetup
    engine: ForwardingEngine
    prober: Prober
    initial_balances: Dict[ChannelId, int]

    @property
    def table(self) -> EstimateTable:
        return self.prober.table

    @property
    def log(self) -> ProbeLog:
        return self.prober.log


def prepare_run(net: GroundTruthNetwork, prober_cfg: Optional[ProberConfig] = None,
                fwd_cfg: Optional[ForwardingConfig] = None, seed: int = 0,
                attacker_cfg: Optional[AttackerConfig] = None,
                observer: Optional[Observer] = None) -> ProbeRun:
    prober_cfg = prober_cfg or ProberConfig()
    fwd_cfg = fwd_cfg or ForwardingConfig()
    # the sender picks its own give-up time
    fwd_cfg = replace(fwd_cfg, sender_timeout_ms=prober_cfg.timeout_ms)
    if fwd_cfg.non_strict_forwarding and not prober_cfg.assume_non_strict:
        prober_cfg = replace(prober_cfg, assume_non_strict=True)
    attacker = attach_attacker(net, attacker_cfg)
    view = derive_public_view(net)
    engine = ForwardingEngine(net, fwd_cfg, seed=seed)
    prober = Prober(engine, view, attacker, prober_cfg, observer)
    return ProbeRun(net, view, attacker, engine, prober, net.balances())


def run_probe(net: GroundTruthNetwork, prober_cfg: Optional[ProberConfig] = None,
              fwd_cfg: Optional[ForwardingConfig] = None, seed: int = 0,
              attacker_cfg: Optional[AttackerConfig] = None,
              observer: Optional[Observer] = None) -> ProbeRun:
    """Attach the attacker to ``net`` (mutating it) and run the full probing."""
    run = prepare_run(net, prober_cfg, fwd_cfg, seed, attacker_cfg, observer)
    run.prober.probe_all()
    return run

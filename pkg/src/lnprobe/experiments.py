"""Countermeasure comparisons: attack matrix and balance-disclosure efficiency."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .core import ChannelId, GroundTruthNetwork, NodeId, BalanceEstimate, derive_public_view
from .errors import ConfigError, NoRoute
from .forwarding import FloodDetectionConfig, ForwardingConfig, ForwardingEngine, Route
from .ingestion import TopologyConfig, generate_topology
from .metrics import information_coefficient
from .prober import ProberConfig
from .routing import shortest_route
from .scenario import AttackerConfig, ProbeRun, run_probe

ATTACK_MATRIX_HEADER = ["seed", "countermeasure", "channels_probed", "onions", "mean_info_coefficient",
                        "violation_rate", "mean_estimate_error"]
EFFICIENCY_HEADER = ["seed", "disclosure", "payments", "successes", "success_rate", "mean_attempts"]

COUNTERMEASURES: Dict[str, dict] = {
    "none": {},
    "merge_errors": {"merge_errors": True},
    "jit": {"jit_rebalancing": True},
    "flood_detection": {"flood_detection": FloodDetectionConfig(enabled=True)},
}


@dataclass(frozen=True)
class DisclosurePolicy:
    kind: str = "never"  # "never" | "always" | "trusted"
    trusted: FrozenSet[NodeId] = frozenset()

    def __post_init__(self):
        if self.kind not in ("never", "always", "trusted"):
            raise ConfigError(f"unknown disclosure policy {self.kind!r}")

    @classmethod
    def trusted_only(cls, nodes: Iterable[NodeId]) -> "DisclosurePolicy":
        return cls("trusted", frozenset(nodes))

    def admits(self, asker: NodeId) -> bool:
        return self.kind == "always" or (self.kind == "trusted" and asker in self.trusted)


def query_balance(net: GroundTruthNetwork, asker: NodeId, channel: ChannelId,
                  policy: DisclosurePolicy) -> Optional[int]:
    """Source-side balance of ``channel`` if ``policy`` admits ``asker``, else None (refused)."""
    ch = net.channels[channel]
    return ch.balance_source_msat if policy.admits(asker) else None


@dataclass
class WorkloadConfig:
    pairs: int = 50
    amount_min_sat: int = 10_000
    amount_max_sat: int = 1_000_000
    max_attempts: int = 10

    def __post_init__(self):
        if self.pairs <= 0:
            raise ConfigError("experiment.workload.pairs must be > 0")
        if self.amount_min_sat <= 0 or self.amount_max_sat <= 0:
            raise ConfigError("experiment.workload amounts must be > 0")
        if self.amount_min_sat > self.amount_max_sat:
            raise ConfigError("experiment.workload.amount_min_sat must not exceed amount_max_sat")
        if self.max_attempts <= 0:
            raise ConfigError("experiment.workload.max_attempts must be > 0")


@dataclass
class ExperimentConfig:
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    seeds: Tuple[int, ...] = (0,)
    countermeasures: Tuple[str, ...] = ("none", "merge_errors", "jit", "flood_detection")
    disclosure: str = "always"
    trusted_fraction: float = 0.5
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    prober: ProberConfig = field(default_factory=ProberConfig)
    attacker: AttackerConfig = field(default_factory=AttackerConfig)

    def __post_init__(self):
        if isinstance(self.workload, dict):
            self.workload = WorkloadConfig(**self.workload)
        self.seeds = tuple(int(s) for s in self.seeds)
        self.countermeasures = tuple(self.countermeasures)
        if not self.seeds:
            raise ConfigError("experiment.seeds must not be empty")
        for cm in self.countermeasures:
            if cm not in COUNTERMEASURES:
                raise ConfigError(f"experiment.countermeasures: unknown {cm!r}")
        if self.disclosure not in ("always", "never", "trusted"):
            raise ConfigError("experiment.disclosure must be always|never|trusted")
        if not 0.0 <= self.trusted_fraction <= 1.0:
            raise ConfigError("experiment.trusted_fraction must be in [0, 1]")


# -- attack matrix -------------------------------------------------------------

@dataclass
class AttackRow:
    seed: int
    countermeasure: str
    channels_probed: int
    onions: int
    mean_info_coefficient: float
    violation_rate: float
    mean_estimate_error: float


def estimate_error(est: BalanceEstimate, balance_msat: int, capacity_msat: int) -> float:
    """Distance from the true balance to the interval, as a fraction of capacity."""
    if balance_msat < est.b_min_msat:
        return (est.b_min_msat - balance_msat) / capacity_msat
    if balance_msat > est.b_max_msat:
        return (balance_msat - est.b_max_msat) / capacity_msat
    return 0.0


def score_run(run: ProbeRun, seed: int, name: str) -> AttackRow:
    targets = sorted(set(run.prober.targets))
    coefs, errors, bad = [], [], 0
    for cid in targets:
        cap = run.view.channels[cid].capacity_msat
        est = run.table[cid]
        coefs.append(information_coefficient(est, cap))
        err = estimate_error(est, run.initial_balances[cid], cap)
        errors.append(err)
        bad += err > 0
    n = len(targets)
    return AttackRow(seed, name, n, len(run.log.onions),
                     sum(coefs) / n if n else 0.0, bad / n if n else 0.0, sum(errors) / n if n else 0.0)


def _base(cfg: ExperimentConfig, seed: int, network: Optional[GroundTruthNetwork]) -> GroundTruthNetwork:
    return network.copy() if network is not None else generate_topology(replace(cfg.topology, rng_seed=seed))


def run_attack_matrix(cfg: ExperimentConfig, seed: Optional[int] = None,
                      network: Optional[GroundTruthNetwork] = None) -> List[AttackRow]:
    """Probe the same network once per countermeasure configuration.

    With ``network`` given it replaces the generated topology for every seed.
    """
    rows = []
    for s in ([seed] if seed is not None else cfg.seeds):
        base = _base(cfg, s, network)
        for name in cfg.countermeasures:
            fwd = ForwardingConfig(**COUNTERMEASURES[name])
            run = run_probe(base.copy(), cfg.prober, fwd, seed=s, attacker_cfg=cfg.attacker)
            rows.append(score_run(run, s, name))
    return rows


# -- disclosure efficiency -----------------------------------------------------

@dataclass
class EfficiencyRow:
    seed: int
    disclosure: str
    payments: int
    successes: int
    success_rate: float
    mean_attempts: float  # nan when nothing succeeded

    @property
    def attempts_rank(self) -> float:
        """Mean attempts for comparisons; no success at all ranks worst."""
        return self.mean_attempts if self.successes else math.inf


def draw_workload(net: GroundTruthNetwork, wl: WorkloadConfig, seed: int) -> List[Tuple[NodeId, NodeId, int]]:
    rng = np.random.default_rng([seed, 1])
    live = sorted(n for n, node in net.nodes.items() if node.live)
    if len(live) < 2:
        raise ConfigError("workload needs at least two live nodes")
    lo, hi = math.log(wl.amount_min_sat), math.log(wl.amount_max_sat)
    out = []
    for _ in range(wl.pairs):
        a, b = rng.choice(len(live), size=2, replace=False)
        amount = int(round(math.exp(rng.uniform(lo, hi)))) * 1000
        out.append((live[a], live[b], amount))
    return out


def assign_policies(net: GroundTruthNetwork, kind: str, trusted_fraction: float, seed: int
                    ) -> Dict[NodeId, DisclosurePolicy]:
    if kind != "trusted":
        return {n: DisclosurePolicy(kind) for n in net.nodes}
    rng = np.random.default_rng([seed, 2])
    ids = sorted(net.nodes)
    out = {}
    for n in ids:
        mask = rng.random(len(ids)) < trusted_fraction
        out[n] = DisclosurePolicy.trusted_only(i for i, m in zip(ids, mask) if m)
    return out


def _own_knowledge(net: GroundTruthNetwork, view, node: NodeId) -> Dict[ChannelId, BalanceEstimate]:
    """A sender knows the balances of its own channels."""
    return {cid: BalanceEstimate(cid, net.channels[cid].balance_source_msat, net.channels[cid].balance_source_msat)
            for cid in view.adjacent(node)}


def _pay(engine: ForwardingEngine, view, sender: NodeId, recipient: NodeId, amount: int, max_attempts: int,
         policies: Optional[Mapping[NodeId, DisclosurePolicy]]) -> Optional[int]:
    """Attempts used for a successful payment, or None if it never succeeded."""
    net = engine.net
    excluded = set()
    attempts = 0
    while attempts < max_attempts:
        known = _own_knowledge(net, view, sender)
        try:
            route = shortest_route(view, sender, recipient, amount, excluded, estimates=known)
        except NoRoute:
            return None
        if policies is not None:
            short = _first_short_hop(net, route, sender, policies)
            if short is not None:
                excluded.add(short)
                continue
        attempts += 1
        out = engine.send_probe(route, recipient_knows_preimage=True)
        if out.succeeded:
            return attempts
        if out.reported_channel is not None:
            excluded.add(out.reported_channel)
        else:
            excluded.update(h.channel for h in route.hops[1:])
    return None


def _first_short_hop(net, route: Route, sender: NodeId, policies) -> Optional[ChannelId]:
    """Ask each forwarding node about its outgoing balance; stop at the first refusal.

    An offline node never answers, so the channel leading to it is dropped too.
    """
    for prev, hop in zip(route.hops, route.hops[1:]):
        if not net.nodes[hop.sender].live:
            return prev.channel
        b = query_balance(net, sender, hop.channel, policies[hop.sender])
        if b is None:
            return None
        ch = net.channels[hop.channel]
        room = b if hop.forward else ch.capacity_msat - b
        if room < hop.amount_msat:
            return hop.channel
    return None


def run_efficiency_experiment(cfg: ExperimentConfig, seed: Optional[int] = None,
                              network: Optional[GroundTruthNetwork] = None) -> List[EfficiencyRow]:
    """Same network and workload, paid once without and once with balance queries."""
    rows = []
    for s in ([seed] if seed is not None else cfg.seeds):
        base = _base(cfg, s, network)
        work = draw_workload(base, cfg.workload, s)
        for mode in ("off", "on"):
            net = base.copy()
            view = derive_public_view(net)
            engine = ForwardingEngine(net, ForwardingConfig(), seed=s)
            policies = assign_policies(net, cfg.disclosure, cfg.trusted_fraction, s) if mode == "on" else None
            used = []
            for a, b, amt in work:
                r = _pay(engine, view, a, b, amt, cfg.workload.max_attempts, policies)
                if r is not None:
                    used.append(r)
            n = len(work)
            rows.append(EfficiencyRow(s, mode, n, len(used), len(used) / n,
                                      sum(used) / len(used) if used else math.nan))
    return rows


def write_rows(path, header: Sequence[str], rows: Iterable) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            vals = [getattr(r, h) for h in header]
            w.writerow([f"{v:.6f}" if isinstance(v, float) else v for v in vals])
    return path

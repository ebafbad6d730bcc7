"""The attacker engine.

Channel selection by liveness heuristics, interval updates from probe
outcomes, and the binary-search driver over every selected channel. The
prober talks to the network only through ``connect``/``send_probe`` on the
engine it is handed; balances and liveness stay hidden.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import (Callable, Deque, Dict, FrozenSet, Iterable, List, Mapping, Optional, Protocol,
                    Set, Tuple)

from .core import BalanceEstimate, ChannelId, NodeId, PublicView, oriented, sat_to_msat
from .errors import ConfigError, IntervalClosed, NoRoute
from .forwarding import ErrorClass, ProbeOutcome, Route
from .routing import RouteQuery, find_route, hop_distances, order_targets

log = logging.getLogger(__name__)


@dataclass
class ProberConfig:
    max_probings_per_channel: int = 7
    attempts_per_probing: int = 5
    precision_target: float = 1 / 128
    preprobe_amount_sat: int = 1000
    max_htlc_payload_msat: int = 4_294_967_295
    safe_htlc_msat: int = 4_200_000_000
    timeout_ms: float = 10_000.0
    max_hops: int = 10
    htlc_timeout_ms: float = 86_400_000.0
    second_pass: bool = True
    # Skip updates at hops whose nodes share parallel channels (non-strict forwarding).
    assume_non_strict: bool = False

    def __post_init__(self):
        if self.safe_htlc_msat > self.max_htlc_payload_msat:
            raise ConfigError("prober.safe_htlc_msat must not exceed prober.max_htlc_payload_msat")
        if not 0 < self.precision_target <= 1:
            raise ConfigError("prober.precision_target must be in (0, 1]")
        for name in ("max_probings_per_channel", "attempts_per_probing", "preprobe_amount_sat"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"prober.{name} must be > 0")
        if not 1 <= self.max_hops <= 20:
            raise ConfigError("prober.max_hops must be in 1..20")


class ProbeTransport(Protocol):
    now_ms: float

    def connect(self, node: NodeId) -> bool: ...

    def send_probe(self, route: Route, recipient_knows_preimage: bool = False) -> ProbeOutcome: ...


@dataclass
class AttackerSetup:
    node: NodeId
    entry_channels: Tuple[ChannelId, ...]
    # attacker-side balances, known to the attacker as channel owner
    entry_balances_msat: Mapping[ChannelId, int]

    @property
    def entry_set(self) -> FrozenSet[ChannelId]:
        return frozenset(self.entry_channels)


class EstimateTable:
    """Per-channel [b_min, b_max] bounds on the source-side balance."""

    def __init__(self, view: PublicView, own: Iterable[ChannelId] = ()):
        self.capacity = {cid: ch.capacity_msat for cid, ch in view.channels.items()}
        self.estimates: Dict[ChannelId, BalanceEstimate] = {}
        self.probe_counts: Dict[ChannelId, int] = {}
        self.live: Set[ChannelId] = set()
        self.own: FrozenSet[ChannelId] = frozenset(own)
        self.conflicts = 0

    def __getitem__(self, cid: ChannelId) -> BalanceEstimate:
        est = self.estimates.get(cid)
        return est if est is not None else BalanceEstimate.unknown(cid, self.capacity[cid])

    def __contains__(self, cid: ChannelId) -> bool:
        return cid in self.estimates

    def get(self, cid: ChannelId, default=None):
        return self.estimates.get(cid, default)

    def items(self):
        return self.estimates.items()

    def set_exact(self, cid: ChannelId, balance_msat: int) -> None:
        self.estimates[cid] = BalanceEstimate(cid, balance_msat, balance_msat)

    def narrow(self, cid: ChannelId, lo: Optional[int] = None, hi: Optional[int] = None) -> bool:
        """Intersect with [lo, hi]. Returns True when the interval changed.

        A contradicting bound (only possible when the network lies, e.g. under
        JIT rebalancing) replaces the interval with the new observation.
        """
        old = self[cid]
        b_min, b_max = old.b_min_msat, old.b_max_msat
        if lo is not None:
            lo = max(0, lo)
            if lo > b_max:
                self.conflicts += 1
                b_min = b_max = min(lo, self.capacity[cid])
            else:
                b_min = max(b_min, lo)
        if hi is not None:
            hi = min(hi, self.capacity[cid])
            if hi < b_min:
                self.conflicts += 1
                b_min = b_max = max(hi, 0)
            else:
                b_max = min(b_max, hi)
        if (b_min, b_max) == (old.b_min_msat, old.b_max_msat):
            self.estimates.setdefault(cid, old)
            return False
        self.estimates[cid] = BalanceEstimate(cid, b_min, b_max)
        return True

    def lower_bound(self, cid: ChannelId, forward: bool, amount: int) -> bool:
        """The sending side of ``forward`` holds at least ``amount``."""
        if forward:
            return self.narrow(cid, lo=amount)
        return self.narrow(cid, hi=self.capacity[cid] - amount)

    def upper_bound(self, cid: ChannelId, forward: bool, amount: int) -> bool:
        """The sending side of ``forward`` holds at most ``amount``."""
        if forward:
            return self.narrow(cid, hi=amount)
        return self.narrow(cid, lo=self.capacity[cid] - amount)


@dataclass(frozen=True)
class ProbeRecord:
    timestamp_ms: float
    kind: str  # "preprobe" | "probe" | "noroute"
    target: ChannelId
    forward: bool
    amount_msat: int
    route: Optional[Route]
    outcome: Optional[ProbeOutcome]
    before: BalanceEstimate
    after: BalanceEstimate
    pass_no: int = 0


@dataclass
class ProbeLog:
    records: List[ProbeRecord] = field(default_factory=list)

    def append(self, rec: ProbeRecord) -> None:
        self.records.append(rec)

    def __iter__(self):
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def onions(self) -> List[ProbeRecord]:
        return [r for r in self.records if r.outcome is not None]


def next_amount(est: BalanceEstimate, cfg: ProberConfig) -> int:
    """Binary-search amount for ``est``, clamped to the safe HTLC size."""
    if est.b_min_msat >= est.b_max_msat:
        raise IntervalClosed(est.channel)
    mid = (est.b_min_msat + est.b_max_msat) // 2
    return min(mid, cfg.safe_htlc_msat)


def update_estimates(route: Route, outcome: ProbeOutcome, table: EstimateTable,
                     pending: Optional[Mapping[Tuple[ChannelId, bool], int]] = None,
                     ambiguous: Iterable[int] = ()) -> Set[ChannelId]:
    """Fold one probe outcome into ``table``; returns the channels whose bounds moved.

    ``pending`` holds amounts of our own possibly-stuck HTLCs per channel
    direction; they may hide part of a balance, so upper bounds are widened by
    them. ``ambiguous`` lists 1-based hop indices where the forwarding node
    could have used a parallel channel; those hops learn nothing.
    """
    j = outcome.erring_hop_index
    if j is None:
        return set()
    for hop in route.hops[:j]:
        table.live.add(hop.channel)
    if outcome.error is None or not outcome.error.usable:
        return set()
    pending = pending or {}
    ambiguous = set(ambiguous)
    changed: Set[ChannelId] = set()
    for i, hop in enumerate(route.hops[:j - 1], start=1):
        if i in ambiguous or hop.channel in table.own:
            continue
        if table.lower_bound(hop.channel, hop.forward, hop.amount_msat):
            changed.add(hop.channel)
    hop = route.hops[j - 1]
    if j in ambiguous or hop.channel in table.own:
        return changed
    if outcome.error is ErrorClass.TEMPORARY_CHANNEL_FAILURE:
        hidden = pending.get((hop.channel, hop.forward), 0)
        moved = table.upper_bound(hop.channel, hop.forward, hop.amount_msat + hidden)
    else:
        moved = table.lower_bound(hop.channel, hop.forward, hop.amount_msat)
    if moved:
        changed.add(hop.channel)
    return changed


Observer = Callable[[ProbeRecord, EstimateTable], None]


class Prober:
    """Runs channel selection and both probing passes against one network."""

    def __init__(self, transport: ProbeTransport, view: PublicView, attacker: AttackerSetup,
                 cfg: Optional[ProberConfig] = None, observer: Optional[Observer] = None):
        self.net = transport
        self.view = view
        self.attacker = attacker
        self.cfg = cfg or ProberConfig()
        self.observer = observer
        self.table = EstimateTable(view, own=attacker.entry_channels)
        self.log = ProbeLog()
        self._pending: Dict[Tuple[ChannelId, bool], int] = {}
        self._reserved: Dict[ChannelId, Tuple[int, int]] = {}
        self._pending_queue: Deque[Tuple[float, Tuple[Tuple[ChannelId, bool, int], ...]]] = deque()
        for cid in attacker.entry_channels:
            ch = view.channels[cid]
            bal = attacker.entry_balances_msat[cid]
            self.table.set_exact(cid, bal if ch.source == attacker.node else ch.capacity_msat - bal)
        entry_nodes = {view.channels[c].other(attacker.node) for c in attacker.entry_channels}
        self.entry_nodes = frozenset(entry_nodes)
        self._lower = hop_distances(view, attacker.node, attacker.entry_set)
        self.pass_no = 0
        self.initial_live: Set[ChannelId] = set()
        self.targets: List[ChannelId] = []

    # -- pending (possibly hanging) HTLCs of our own ------------------------

    def pending(self) -> Dict[Tuple[ChannelId, bool], int]:
        now = self.net.now_ms
        while self._pending_queue and self._pending_queue[0][0] <= now:
            _, hops = self._pending_queue.popleft()
            for cid, fwd, amt in hops:
                left = self._pending[(cid, fwd)] - amt
                if left:
                    self._pending[(cid, fwd)] = left
                else:
                    del self._pending[(cid, fwd)]
                self._reserve(cid, fwd, -amt)
        return self._pending

    def _add_pending(self, expires_ms: float, route: Route) -> None:
        hops = tuple((h.channel, h.forward, h.amount_msat) for h in route.hops)
        self._pending_queue.append((expires_ms, hops))
        for cid, fwd, amt in hops:
            self._pending[(cid, fwd)] = self._pending.get((cid, fwd), 0) + amt
            self._reserve(cid, fwd, amt)

    def _reserve(self, cid: ChannelId, fwd: bool, delta: int) -> None:
        f, r = self._reserved.get(cid, (0, 0))
        f, r = (f + delta, r) if fwd else (f, r + delta)
        if f or r:
            self._reserved[cid] = (f, r)
        else:
            del self._reserved[cid]

    # -- single probe --------------------------------------------------------

    def _ambiguous(self, route: Route) -> Set[int]:
        if not self.cfg.assume_non_strict:
            return set()
        return {i for i, h in enumerate(route.hops, start=1)
                if i > 1 and len(self.view.parallel(h.sender, h.receiver)) > 1}

    def _route(self, cid: ChannelId, forward: bool, amount: int, excluded: Iterable[ChannelId]) -> Route:
        query = RouteQuery(
            sender=self.attacker.node,
            entry_channels=self.attacker.entry_set,
            target_channel=cid,
            target_forward=forward,
            amount_msat=amount,
            excluded=frozenset(excluded),
            max_hops=self.cfg.max_hops,
        )
        self.pending()
        return find_route(self.view, self.table.estimates, query, lower=self._lower, reserved=self._reserved)

    def _emit(self, rec: ProbeRecord) -> None:
        self.log.append(rec)
        if self.observer is not None:
            self.observer(rec, self.table)

    def _send(self, kind: str, cid: ChannelId, forward: bool, route: Route) -> Tuple[ProbeOutcome, Set[ChannelId]]:
        before = self.table[cid]
        sent_at = self.net.now_ms
        pending = dict(self.pending())
        outcome = self.net.send_probe(route, recipient_knows_preimage=False)
        if outcome.error is ErrorClass.TIMEOUT:
            # cannot tell a slow node from a stuck HTLC; assume it may hang
            self._add_pending(sent_at + self.cfg.htlc_timeout_ms, route)
        changed = update_estimates(route, outcome, self.table, pending, self._ambiguous(route))
        if kind == "probe":
            self.table.probe_counts[cid] = self.table.probe_counts.get(cid, 0) + 1
        self._emit(ProbeRecord(sent_at, kind, cid, forward, route.amount_msat, route, outcome,
                               before, self.table[cid], self.pass_no))
        return outcome, changed

    def _directions(self, cid: ChannelId) -> List[bool]:
        ch = self.view.channels[cid]
        return [fwd for fwd in (True, False) if ch.policy(fwd).active]

    # -- channel selection ---------------------------------------------------

    def select_channels(self) -> Set[ChannelId]:
        """Liveness heuristics: reachable endpoints (H1) or a usable pre-probe error (H2)."""
        me = self.attacker.node
        live_nodes = {me} | {n for n in self.view.nodes if n != me and self.net.connect(n)}
        selected: Set[ChannelId] = set()
        for cid, ch in self.view.channels.items():
            if cid in self.table.own:
                continue
            if ch.source in live_nodes and ch.destination in live_nodes:
                selected.add(cid)
        amount = sat_to_msat(self.cfg.preprobe_amount_sat)
        for cid in sorted(self.view.channels):
            ch = self.view.channels[cid]
            if cid in self.table.own or not ch.active or amount > ch.capacity_msat:
                continue
            route = fwd = None
            for d in self._directions(cid):
                try:
                    route = self._route(cid, d, amount, ())
                    fwd = d
                    break
                except NoRoute:
                    continue
            if route is None:
                continue
            outcome, _ = self._send("preprobe", cid, fwd, route)
            if outcome.error is not None and outcome.error.usable:
                selected.add(cid)
        self.table.live |= selected
        return selected

    # -- probing -------------------------------------------------------------

    def _plan(self, cid: ChannelId) -> List[Tuple[bool, int]]:
        """Informative (direction, amount) pairs; unclamped directions first."""
        cap = self.table.capacity[cid]
        est = self.table[cid]
        plans = []
        for fwd in self._directions(cid):
            e = oriented(cap, est, fwd)
            try:
                amt = next_amount(e, self.cfg)
            except IntervalClosed:
                return []
            if e.b_min_msat < amt < e.b_max_msat:
                clamped = amt == self.cfg.safe_htlc_msat and (e.b_min_msat + e.b_max_msat) // 2 > amt
                plans.append((clamped, not fwd, fwd, amt))
        plans.sort()
        return [(fwd, amt) for _, _, fwd, amt in plans]

    def precise(self, cid: ChannelId) -> bool:
        return self.table[cid].width_msat <= self.cfg.precision_target * self.table.capacity[cid]

    def probe_channel(self, cid: ChannelId) -> None:
        cfg = self.cfg
        for _ in range(cfg.max_probings_per_channel):
            if self.precise(cid):
                return
            plan = self._plan(cid)
            if not plan:
                return
            excluded: Set[ChannelId] = set()
            updated = False
            stuck = False
            for _ in range(cfg.attempts_per_probing):
                route = None
                # nothing changes between attempts that found no route, so skip the search
                for fwd, amt in ([] if stuck else plan):
                    try:
                        route = self._route(cid, fwd, amt, excluded)
                        break
                    except NoRoute:
                        continue
                if route is None:
                    stuck = True
                    est = self.table[cid]
                    self._emit(ProbeRecord(self.net.now_ms, "noroute", cid, plan[0][0], plan[0][1],
                                           None, None, est, est, self.pass_no))
                    continue
                outcome, changed = self._send("probe", cid, fwd, route)
                if outcome.error is ErrorClass.TIMEOUT:
                    return  # unresponsive: move on to the next channel
                if cid in changed:
                    updated = True
                    break
                if outcome.reported_channel is not None and outcome.reported_channel != cid:
                    excluded.add(outcome.reported_channel)
            if not updated:
                return

    def probe_all(self) -> Tuple[EstimateTable, ProbeLog]:
        self.pass_no = 0
        live = self.select_channels()
        self.initial_live = set(live)
        order = order_targets(self.view, self.entry_nodes, skip=self.table.own, attacker=self.attacker.node)
        targets = [c for c in order if c in live and self.view.channels[c].active]
        self.targets = list(targets)
        self.pass_no = 1
        for cid in targets:
            self.probe_channel(cid)
        if self.cfg.second_pass:
            self.pass_no = 2
            fresh = [c for c in order if c in self.table.live and c not in self.initial_live
                     and self.view.channels[c].active and not self.precise(c)]
            self.targets.extend(fresh)
            for cid in fresh:
                self.probe_channel(cid)
        return self.table, self.log


def probe_all(transport: ProbeTransport, view: PublicView, attacker: AttackerSetup,
              cfg: Optional[ProberConfig] = None, observer: Optional[Observer] = None
              ) -> Tuple[EstimateTable, ProbeLog]:
    return Prober(transport, view, attacker, cfg, observer).probe_all()


def select_channels(transport: ProbeTransport, view: PublicView, attacker: AttackerSetup,
                    cfg: Optional[ProberConfig] = None) -> Set[ChannelId]:
    return Prober(transport, view, attacker, cfg).select_channels()

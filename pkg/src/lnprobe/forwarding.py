"""Multi-hop payment simulation over the ground-truth network.

The engine reproduces what a sender observes: which hop erred, the error
class, and how long it took. It also keeps the in-flight HTLC ledger and
hosts the forwarding-side countermeasures (error merging, JIT rebalancing,
flood detection).
"""
from __future__ import annotations

import bisect
import math
import random
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Deque, Dict, List, Mapping, Optional, Sequence, Tuple

from .core import ChannelId, GroundTruthNetwork, NodeId
from .errors import ConfigError, MalformedRoute

PROTOCOL_MAX_HOPS = 20


class ErrorClass(str, Enum):
    TEMPORARY_CHANNEL_FAILURE = "TemporaryChannelFailure"
    UNKNOWN_PAYMENT_DETAILS = "UnknownPaymentDetails"
    TIMEOUT = "Timeout"
    UNEXPECTED_ERROR = "UnexpectedError"

    @property
    def usable(self) -> bool:
        return self in (ErrorClass.TEMPORARY_CHANNEL_FAILURE, ErrorClass.UNKNOWN_PAYMENT_DETAILS)


@dataclass(frozen=True)
class Hop:
    channel: ChannelId
    forward: bool
    sender: NodeId
    receiver: NodeId
    amount_msat: int


@dataclass(frozen=True)
class Route:
    hops: Tuple[Hop, ...]

    def __len__(self) -> int:
        return len(self.hops)

    @property
    def amount_msat(self) -> int:
        """Amount delivered over the final hop."""
        return self.hops[-1].amount_msat

    @property
    def channels(self) -> Tuple[ChannelId, ...]:
        return tuple(h.channel for h in self.hops)

    @property
    def nodes(self) -> Tuple[NodeId, ...]:
        return (self.hops[0].sender,) + tuple(h.receiver for h in self.hops)

    @property
    def fees_msat(self) -> int:
        return self.hops[0].amount_msat - self.hops[-1].amount_msat


def build_route(channels: Mapping, path: Sequence[Tuple[ChannelId, bool]], amount_msat: int) -> Route:
    """Attach per-hop amounts to ``path``.

    Each forwarding node charges its outgoing channel's fee, so hop k carries
    the amount of hop k+1 plus that fee. The first hop belongs to the sender
    and charges nothing.
    """
    if not path:
        raise MalformedRoute("empty route")
    amounts = [0] * len(path)
    amounts[-1] = amount_msat
    for k in range(len(path) - 1, 0, -1):
        cid, fwd = path[k]
        amounts[k - 1] = amounts[k] + channels[cid].policy(fwd).fee_msat(amounts[k])
    hops = []
    for (cid, fwd), amt in zip(path, amounts):
        s, r = channels[cid].endpoints(fwd)
        hops.append(Hop(cid, fwd, s, r, amt))
    return Route(tuple(hops))


@dataclass(frozen=True)
class ProbeOutcome:
    erring_hop_index: Optional[int]
    error: Optional[ErrorClass]
    reported_channel: Optional[ChannelId]
    elapsed_ms: float
    hanging: bool = False
    # Ground-truth diagnostics; the prober never reads these.
    true_channel: Optional[ChannelId] = None
    succeeded: bool = False

    def __post_init__(self):
        if self.hanging and self.error is not ErrorClass.TIMEOUT:
            raise ValueError("hanging outcome must be a timeout")


@dataclass
class InFlightHtlc:
    route: Route
    created_at_ms: float
    committed: Tuple[Tuple[ChannelId, bool, int], ...]


@dataclass
class HtlcLedger:
    in_flight: List[InFlightHtlc] = field(default_factory=list)
    _committed: Dict[Tuple[ChannelId, bool], int] = field(default_factory=dict)

    def committed(self, channel: ChannelId, forward: bool) -> int:
        return self._committed.get((channel, forward), 0)

    def add(self, htlc: InFlightHtlc) -> None:
        # kept oldest first so expiry only looks at the front
        bisect.insort(self.in_flight, htlc, key=lambda h: h.created_at_ms)
        for cid, fwd, amt in htlc.committed:
            self._committed[(cid, fwd)] = self._committed.get((cid, fwd), 0) + amt

    def remove(self, htlc: InFlightHtlc) -> None:
        self.in_flight.remove(htlc)
        for cid, fwd, amt in htlc.committed:
            left = self._committed[(cid, fwd)] - amt
            if left:
                self._committed[(cid, fwd)] = left
            else:
                del self._committed[(cid, fwd)]

    def __len__(self) -> int:
        return len(self.in_flight)


def release_hanging(ledger: HtlcLedger, now_ms: float, htlc_timeout_ms: float) -> int:
    """Expire HTLCs whose age reached ``htlc_timeout_ms``; returns how many."""
    n = 0
    while ledger.in_flight and now_ms - ledger.in_flight[0].created_at_ms >= htlc_timeout_ms:
        ledger.remove(ledger.in_flight[0])
        n += 1
    return n


@dataclass
class SimClock:
    now_ms: float = 0.0

    def advance(self, ms: float) -> None:
        self.now_ms += ms


@dataclass
class FloodDetectionConfig:
    enabled: bool = False
    window_ms: float = 60_000.0
    threshold: int = 20

    def __post_init__(self):
        if self.window_ms <= 0:
            raise ConfigError("flood_detection.window_ms must be > 0")
        if self.threshold <= 0:
            raise ConfigError("flood_detection.threshold must be > 0")


@dataclass
class ForwardingConfig:
    merge_errors: bool = False
    jit_rebalancing: bool = False
    flood_detection: FloodDetectionConfig = field(default_factory=FloodDetectionConfig)
    sender_timeout_ms: float = 10_000.0
    non_strict_forwarding: bool = False
    htlc_timeout_ms: float = 86_400_000.0

    def __post_init__(self):
        if isinstance(self.flood_detection, dict):
            self.flood_detection = FloodDetectionConfig(**self.flood_detection)
        if self.sender_timeout_ms <= 0:
            raise ConfigError("forwarding.sender_timeout_ms must be > 0")
        if self.htlc_timeout_ms <= 0:
            raise ConfigError("forwarding.htlc_timeout_ms must be > 0")


class ForwardingEngine:
    """Owns the ground truth for one simulation run.

    One payment is in flight at a time; ``send_probe`` advances the shared
    simulated clock by the elapsed time of the attempt.
    """

    JIT_BUFFER = 1.01

    def __init__(self, net: GroundTruthNetwork, cfg: Optional[ForwardingConfig] = None,
                 seed: int = 0, clock: Optional[SimClock] = None):
        self.net = net
        self.cfg = cfg or ForwardingConfig()
        self.rng = random.Random(seed)
        self.clock = clock or SimClock()
        self.ledger = HtlcLedger()
        self.fees_collected_msat = 0
        self.jit_rebalances = 0
        self.payments_attempted = 0
        self._failures: Dict[Tuple[NodeId, ChannelId], Deque[float]] = {}
        self._pairs = net.parallel_peers()

    @property
    def now_ms(self) -> float:
        return self.clock.now_ms

    def connect(self, node: NodeId) -> bool:
        """Simulated P2P connection attempt."""
        n = self.net.nodes.get(node)
        return bool(n is not None and n.live and n.accepts_connections)

    # -- helpers -----------------------------------------------------------

    def _latency(self, node: NodeId) -> float:
        n = self.net.nodes[node]
        j = n.latency_ms_jitter
        factor = self.rng.lognormvariate(0.0, j / 2)
        return n.latency_ms_mean * min(max(factor, 1 - j), 1 + j)

    def _spendable(self, cid: ChannelId, forward: bool, tentative: Dict) -> int:
        ch = self.net.channels[cid]
        return ch.balance(forward) - self.ledger.committed(cid, forward) - tentative.get((cid, forward), 0)

    def _parallels(self, cid: ChannelId) -> List[ChannelId]:
        ch = self.net.channels[cid]
        return [c for c in self._pairs.get((ch.source, ch.destination), ()) if c != cid]

    def _validate(self, route: Route) -> None:
        if not 1 <= len(route) <= PROTOCOL_MAX_HOPS:
            raise MalformedRoute(f"route length {len(route)} outside 1..{PROTOCOL_MAX_HOPS}")
        prev = None
        for hop in route.hops:
            ch = self.net.channels.get(hop.channel)
            if ch is None:
                raise MalformedRoute(f"unknown channel {hop.channel}")
            if ch.endpoints(hop.forward) != (hop.sender, hop.receiver):
                raise MalformedRoute(f"hop over {hop.channel} has wrong endpoints")
            if prev is not None and prev.receiver != hop.sender:
                raise MalformedRoute("route is not contiguous")
            if hop.amount_msat <= 0:
                raise MalformedRoute("amounts must be positive")
            prev = hop

    def _flooded(self, node: NodeId, upstream: ChannelId) -> bool:
        fd = self.cfg.flood_detection
        if not fd.enabled:
            return False
        q = self._failures.get((node, upstream))
        if not q:
            return False
        while q and q[0] < self.now_ms - fd.window_ms:
            q.popleft()
        return len(q) >= fd.threshold

    def _record_failures(self, seen: Sequence[Tuple[NodeId, ChannelId]]) -> None:
        if not self.cfg.flood_detection.enabled:
            return
        for key in seen:
            self._failures.setdefault(key, deque()).append(self.now_ms)

    def _try_jit(self, cid: ChannelId, forward: bool, amount: int, tentative: Dict) -> bool:
        """Rebalance from a parallel channel to the same peer, if one can cover the shortfall."""
        shortfall = amount - self._spendable(cid, forward, tentative)
        want = math.ceil(shortfall * self.JIT_BUFFER)
        ch = self.net.channels[cid]
        sender = ch.endpoints(forward)[0]
        back_room = self._spendable(cid, not forward, tentative)
        for other in self._parallels(cid):
            och = self.net.channels[other]
            ofwd = och.source == sender
            room = min(want, self._spendable(other, ofwd, tentative), back_room)
            if room >= shortfall:
                # circular payment: out over the parallel channel, back over this one
                och.shift(ofwd, room)
                ch.shift(not forward, room)
                self.jit_rebalances += 1
                return True
        return False

    def _substitute(self, cid: ChannelId, forward: bool, amount: int, tentative: Dict) -> Optional[ChannelId]:
        ch = self.net.channels[cid]
        sender = ch.endpoints(forward)[0]
        best, best_room = None, -1
        for other in self._parallels(cid):
            och = self.net.channels[other]
            ofwd = och.source == sender
            pol = och.policy(ofwd)
            if not pol.active or amount > pol.max_htlc_msat:
                continue
            room = self._spendable(other, ofwd, tentative)
            if room >= amount and room > best_room:
                best, best_room = other, room
        return best

    # -- main entry --------------------------------------------------------

    def send_probe(self, route: Route, recipient_knows_preimage: bool = False) -> ProbeOutcome:
        self._validate(route)
        cfg = self.cfg
        release_hanging(self.ledger, self.now_ms, cfg.htlc_timeout_ms)
        self.payments_attempted += 1

        tentative: Dict[Tuple[ChannelId, bool], int] = {}
        committed: List[Tuple[ChannelId, bool, int]] = []
        actual: List[ChannelId] = []
        elapsed = 0.0

        def hang(upto: int) -> ProbeOutcome:
            if upto:
                self.ledger.add(InFlightHtlc(route, self.now_ms, tuple(committed[:upto])))
            self.clock.advance(cfg.sender_timeout_ms)
            return ProbeOutcome(None, ErrorClass.TIMEOUT, None, cfg.sender_timeout_ms, hanging=bool(upto))

        def fail(index: int, error: ErrorClass, true_channel: ChannelId) -> ProbeOutcome:
            upto = index - 1 if error is ErrorClass.TEMPORARY_CHANNEL_FAILURE else index
            self._record_failures([(route.hops[i].receiver, actual[i]) for i in range(min(upto, len(actual)))])
            if elapsed > cfg.sender_timeout_ms:
                self.clock.advance(cfg.sender_timeout_ms)
                return ProbeOutcome(None, ErrorClass.TIMEOUT, None, cfg.sender_timeout_ms,
                                    true_channel=true_channel)
            self.clock.advance(elapsed)
            if cfg.merge_errors:
                # every upstream node re-labels the error as its own channel's failure
                return ProbeOutcome(1, ErrorClass.TEMPORARY_CHANNEL_FAILURE, route.hops[0].channel,
                                    elapsed, true_channel=true_channel)
            return ProbeOutcome(index, error, route.hops[index - 1].channel, elapsed,
                                true_channel=true_channel)

        for k, hop in enumerate(route.hops, start=1):
            if k > 1:
                if not self.net.nodes[hop.sender].live:
                    return hang(k - 1)
                if self._flooded(hop.sender, actual[k - 2]):
                    elapsed += self._latency(hop.sender)
                    return fail(k - 1, ErrorClass.UNEXPECTED_ERROR, actual[k - 2])
            # the erring hop counts as traversed: one forward and one return sample
            elapsed += self._latency(hop.sender) + self._latency(hop.sender)
            cid = hop.channel
            pol = self.net.channels[cid].policy(hop.forward)
            if not pol.active or hop.amount_msat > pol.max_htlc_msat:
                return fail(k, ErrorClass.TEMPORARY_CHANNEL_FAILURE, cid)
            if self._spendable(cid, hop.forward, tentative) < hop.amount_msat:
                sub = None
                if k > 1 and cfg.non_strict_forwarding:
                    sub = self._substitute(cid, hop.forward, hop.amount_msat, tentative)
                if sub is not None:
                    cid = sub
                elif not (k > 1 and cfg.jit_rebalancing
                          and self._try_jit(cid, hop.forward, hop.amount_msat, tentative)):
                    return fail(k, ErrorClass.TEMPORARY_CHANNEL_FAILURE, cid)
            fwd = self.net.channels[cid].source == hop.sender
            tentative[(cid, fwd)] = tentative.get((cid, fwd), 0) + hop.amount_msat
            committed.append((cid, fwd, hop.amount_msat))
            actual.append(cid)

        last = route.hops[-1]
        m = len(route)
        if not self.net.nodes[last.receiver].live:
            return hang(m)
        if self._flooded(last.receiver, actual[-1]):
            return fail(m, ErrorClass.UNEXPECTED_ERROR, actual[-1])
        if not recipient_knows_preimage:
            return fail(m, ErrorClass.UNKNOWN_PAYMENT_DETAILS, actual[-1])

        for cid, fwd, amt in committed:
            self.net.channels[cid].shift(fwd, amt)
        self.fees_collected_msat += route.fees_msat
        self.clock.advance(elapsed)
        return ProbeOutcome(None, None, None, elapsed, succeeded=True)

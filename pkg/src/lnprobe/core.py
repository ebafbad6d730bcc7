"""Network, channel and estimate types.

Ground truth (balances, liveness, latencies) lives in :class:`GroundTruthNetwork`
and is only touched by the forwarding engine. The attacker works from a
:class:`PublicView`, which carries capacities and gossip policies only.

All amounts are integer millisatoshis. Channels are oriented so that
``source < destination``; a hop is ``forward`` when it moves funds from
source to destination.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, List, Mapping, Optional, Tuple

from .errors import InvariantError

MSAT_PER_SAT = 1000

NodeId = str
ChannelId = str


def sat_to_msat(sat: int) -> int:
    return int(sat) * MSAT_PER_SAT


def msat_to_sat(msat: int) -> float:
    return msat / MSAT_PER_SAT


@dataclass(frozen=True)
class DirectionPolicy:
    active: bool = True
    max_htlc_msat: int = 0
    base_fee_msat: int = 0
    fee_ppm: int = 0

    def __post_init__(self):
        if self.max_htlc_msat < 0:
            raise InvariantError("max_htlc_msat must be >= 0")
        if self.base_fee_msat < 0 or self.fee_ppm < 0:
            raise InvariantError("fees must be >= 0")

    def fee_msat(self, forwarded_msat: int) -> int:
        return self.base_fee_msat + forwarded_msat * self.fee_ppm // 1_000_000


@dataclass
class Channel:
    id: ChannelId
    source: NodeId
    destination: NodeId
    capacity_msat: int
    balance_source_msat: int
    policy_src_to_dst: DirectionPolicy
    policy_dst_to_src: DirectionPolicy

    def __post_init__(self):
        if not self.source < self.destination:
            raise InvariantError(
                f"channel {self.id}: source {self.source!r} must sort before {self.destination!r}")
        if self.capacity_msat <= 0:
            raise InvariantError(f"channel {self.id}: capacity must be positive")
        if not 0 <= self.balance_source_msat <= self.capacity_msat:
            raise InvariantError(
                f"channel {self.id}: balance {self.balance_source_msat} outside [0, {self.capacity_msat}]")

    @property
    def balance_destination_msat(self) -> int:
        return self.capacity_msat - self.balance_source_msat

    def balance(self, forward: bool) -> int:
        """Local balance of the sending side for the given direction."""
        return self.balance_source_msat if forward else self.capacity_msat - self.balance_source_msat

    def policy(self, forward: bool) -> DirectionPolicy:
        return self.policy_src_to_dst if forward else self.policy_dst_to_src

    def endpoints(self, forward: bool) -> Tuple[NodeId, NodeId]:
        return (self.source, self.destination) if forward else (self.destination, self.source)

    def shift(self, forward: bool, amount_msat: int) -> None:
        """Move funds from the sending side to the receiving side."""
        delta = amount_msat if forward else -amount_msat
        new = self.balance_source_msat - delta
        if not 0 <= new <= self.capacity_msat:
            raise InvariantError(f"channel {self.id}: shift of {amount_msat} breaks 0<=b<=c")
        self.balance_source_msat = new


@dataclass
class Node:
    id: NodeId
    live: bool = True
    latency_ms_mean: float = 400.0
    latency_ms_jitter: float = 0.5
    # Whether a P2P connection attempt succeeds. Live nodes behind NAT refuse.
    accepts_connections: Optional[bool] = None

    def __post_init__(self):
        if self.latency_ms_mean <= 0 or self.latency_ms_jitter <= 0:
            raise InvariantError(f"node {self.id}: latency parameters must be positive")
        if self.accepts_connections is None:
            self.accepts_connections = self.live


@dataclass
class GroundTruthNetwork:
    nodes: Dict[NodeId, Node] = field(default_factory=dict)
    channels: Dict[ChannelId, Channel] = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for ch in self.channels.values():
            for end in (ch.source, ch.destination):
                if end not in self.nodes:
                    raise InvariantError(f"channel {ch.id}: unknown endpoint {end!r}")

    def add_node(self, node: Node) -> None:
        self.nodes[node.id] = node

    def add_channel(self, channel: Channel) -> None:
        if channel.id in self.channels:
            raise InvariantError(f"duplicate channel id {channel.id}")
        for end in (channel.source, channel.destination):
            if end not in self.nodes:
                raise InvariantError(f"channel {channel.id}: unknown endpoint {end!r}")
        self.channels[channel.id] = channel

    def balances(self) -> Dict[ChannelId, int]:
        return {cid: ch.balance_source_msat for cid, ch in self.channels.items()}

    def copy(self) -> "GroundTruthNetwork":
        return GroundTruthNetwork(
            nodes={k: replace(v) for k, v in self.nodes.items()},
            channels={k: replace(v) for k, v in self.channels.items()},
        )

    def parallel_peers(self) -> Dict[Tuple[NodeId, NodeId], List[ChannelId]]:
        pairs: Dict[Tuple[NodeId, NodeId], List[ChannelId]] = {}
        for ch in self.channels.values():
            pairs.setdefault((ch.source, ch.destination), []).append(ch.id)
        return pairs


@dataclass(frozen=True)
class PublicChannel:
    id: ChannelId
    source: NodeId
    destination: NodeId
    capacity_msat: int
    policy_src_to_dst: DirectionPolicy
    policy_dst_to_src: DirectionPolicy

    def policy(self, forward: bool) -> DirectionPolicy:
        return self.policy_src_to_dst if forward else self.policy_dst_to_src

    def endpoints(self, forward: bool) -> Tuple[NodeId, NodeId]:
        return (self.source, self.destination) if forward else (self.destination, self.source)

    @property
    def active(self) -> bool:
        """Gossip-active: routable in at least one direction."""
        return self.policy_src_to_dst.active or self.policy_dst_to_src.active

    def other(self, node: NodeId) -> NodeId:
        return self.destination if node == self.source else self.source


# (channel id, forward, sending node)
Edge = Tuple[ChannelId, bool, NodeId]


@dataclass(frozen=True)
class PublicView:
    nodes: Tuple[NodeId, ...] = ()
    channels: Mapping[ChannelId, PublicChannel] = field(default_factory=dict)

    @cached_property
    def _adjacency(self):
        incoming: Dict[NodeId, List[Edge]] = {n: [] for n in self.nodes}
        touching: Dict[NodeId, List[ChannelId]] = {n: [] for n in self.nodes}
        pairs: Dict[Tuple[NodeId, NodeId], List[ChannelId]] = {}
        for cid in sorted(self.channels):
            ch = self.channels[cid]
            incoming[ch.destination].append((cid, True, ch.source))
            incoming[ch.source].append((cid, False, ch.destination))
            touching[ch.source].append(cid)
            touching[ch.destination].append(cid)
            pairs.setdefault((ch.source, ch.destination), []).append(cid)
        return incoming, touching, pairs

    def incoming(self, node: NodeId) -> List[Edge]:
        """Directed edges arriving at ``node``, sorted by channel id."""
        return self._adjacency[0].get(node, [])

    @cached_property
    def _active_in(self):
        out: Dict[NodeId, list] = {}
        for v, edges in self._adjacency[0].items():
            rows = []
            for cid, fwd, u in edges:
                ch = self.channels[cid]
                pol = ch.policy(fwd)
                if pol.active:
                    rows.append((cid, fwd, u, min(pol.max_htlc_msat, ch.capacity_msat), ch.capacity_msat,
                                 pol.base_fee_msat, pol.fee_ppm))
            out[v] = rows
        return out

    def active_incoming(self, node: NodeId) -> list:
        """Active incoming edges as (cid, forward, sender, hop limit, capacity, base fee, ppm)."""
        return self._active_in.get(node, [])

    def adjacent(self, node: NodeId) -> List[ChannelId]:
        return self._adjacency[1].get(node, [])

    def degree(self, node: NodeId) -> int:
        return len(self.adjacent(node))

    def parallel(self, a: NodeId, b: NodeId) -> List[ChannelId]:
        key = (a, b) if a < b else (b, a)
        return self._adjacency[2].get(key, [])


def derive_public_view(net: GroundTruthNetwork) -> PublicView:
    """Strip balances and liveness; keep topology, capacities and policies."""
    channels = {
        cid: PublicChannel(
            id=ch.id,
            source=ch.source,
            destination=ch.destination,
            capacity_msat=ch.capacity_msat,
            policy_src_to_dst=ch.policy_src_to_dst,
            policy_dst_to_src=ch.policy_dst_to_src,
        )
        for cid, ch in sorted(net.channels.items())
    }
    return PublicView(nodes=tuple(sorted(net.nodes)), channels=channels)


@dataclass(frozen=True)
class BalanceEstimate:
    """Bounds on the source-side balance of a channel, in msat."""

    channel: ChannelId
    b_min_msat: int
    b_max_msat: int

    def check(self, capacity_msat: int) -> None:
        if not 0 <= self.b_min_msat <= self.b_max_msat <= capacity_msat:
            raise InvariantError(
                f"estimate {self.channel}: [{self.b_min_msat}, {self.b_max_msat}] invalid for c={capacity_msat}")

    @property
    def width_msat(self) -> int:
        return self.b_max_msat - self.b_min_msat

    def contains(self, balance_msat: int) -> bool:
        return self.b_min_msat <= balance_msat <= self.b_max_msat

    @classmethod
    def unknown(cls, channel: ChannelId, capacity_msat: int) -> "BalanceEstimate":
        return cls(channel, 0, capacity_msat)


def flip_estimate(capacity_msat: int, estimate: BalanceEstimate) -> BalanceEstimate:
    """Bounds for the opposite side, using b_s + b_d = c."""
    return BalanceEstimate(
        estimate.channel,
        capacity_msat - estimate.b_max_msat,
        capacity_msat - estimate.b_min_msat,
    )


def oriented(capacity_msat: int, estimate: BalanceEstimate, forward: bool) -> BalanceEstimate:
    """Estimate expressed for the sending side of the given direction."""
    return estimate if forward else flip_estimate(capacity_msat, estimate)


def canonical_pair(a: NodeId, b: NodeId) -> Tuple[NodeId, NodeId]:
    return (a, b) if a < b else (b, a)

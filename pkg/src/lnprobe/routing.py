"""Attacker-side route construction and probe ordering.

Routes are shortest by hop count; ties go to the lexicographically smallest
sequence of channel ids. Search runs backwards from the destination so that
every partial path knows exactly how much it must carry (amount plus the
downstream fees), which is what the admissibility filters need.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import AbstractSet, Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple

from .core import BalanceEstimate, ChannelId, NodeId, PublicView
from .errors import ConfigError, NoRoute
from .forwarding import PROTOCOL_MAX_HOPS, Route, build_route

DEFAULT_MAX_HOPS = 10


@dataclass(frozen=True)
class RouteQuery:
    sender: NodeId
    entry_channels: FrozenSet[ChannelId]
    target_channel: ChannelId
    target_forward: bool
    amount_msat: int
    excluded: FrozenSet[ChannelId] = frozenset()
    max_hops: int = DEFAULT_MAX_HOPS

    def __post_init__(self):
        if not 1 <= self.max_hops <= PROTOCOL_MAX_HOPS:
            raise ConfigError(f"max_hops must be in 1..{PROTOCOL_MAX_HOPS}")
        if self.amount_msat <= 0:
            raise ConfigError("amount_msat must be positive")


# Per channel (msat locked source->dest, msat locked dest->source) by the
# sender's own HTLCs that may still be hanging.
Reserved = Mapping[ChannelId, Tuple[int, int]]
_NONE_RESERVED: Dict[ChannelId, Tuple[int, int]] = {}


def _reserved_room(est: Optional[BalanceEstimate], cap: int, forward: bool, res: Tuple[int, int]) -> int:
    lo, hi = (0, cap) if est is None else (est.b_min_msat, est.b_max_msat)
    hi = max(0, hi - res[0])
    lo = min(cap, lo + res[1])
    if lo > hi:
        lo = hi
    return hi if forward else cap - lo


def directed_upper_bound(view: PublicView, estimates: Optional[Mapping[ChannelId, BalanceEstimate]],
                         cid: ChannelId, forward: bool, reserved: Optional[Reserved] = None) -> int:
    ch = view.channels[cid]
    est = estimates.get(cid) if estimates is not None else None
    res = reserved.get(cid) if reserved else None
    if res is not None:
        return _reserved_room(est, ch.capacity_msat, forward, res)
    if est is None:
        return ch.capacity_msat
    return est.b_max_msat if forward else ch.capacity_msat - est.b_min_msat


def hop_admissible(view: PublicView, estimates, cid: ChannelId, forward: bool, amount_msat: int,
                   excluded: Iterable[ChannelId] = (), reserved: Optional[Reserved] = None) -> bool:
    ch = view.channels[cid]
    pol = ch.policy(forward)
    return (cid not in excluded
            and pol.active
            and amount_msat <= pol.max_htlc_msat
            and amount_msat <= ch.capacity_msat
            and amount_msat <= directed_upper_bound(view, estimates, cid, forward, reserved))


def hop_distances(view: PublicView, sender: NodeId,
                  first_hops: Optional[FrozenSet[ChannelId]] = None) -> Dict[NodeId, int]:
    """Unfiltered hop distance from ``sender`` over active directed edges.

    Filters and exclusions only lengthen paths, so this is a lower bound for
    any admissible route and lets the search skip hopeless nodes.
    """
    dist = {sender: 0}
    frontier = [sender]
    while frontier:
        nxt = []
        for u in frontier:
            for cid in view.adjacent(u):
                ch = view.channels[cid]
                fwd = ch.source == u
                if not ch.policy(fwd).active:
                    continue
                if u == sender and first_hops is not None and cid not in first_hops:
                    continue
                v = ch.destination if fwd else ch.source
                if v not in dist:
                    dist[v] = dist[u] + 1
                    nxt.append(v)
        frontier = nxt
    return dist


def _search(view: PublicView, estimates, sender: NodeId, dest: NodeId, arrive_msat: int,
            excluded: AbstractSet[ChannelId], max_hops: int,
            first_hops: Optional[FrozenSet[ChannelId]] = None,
            lower: Optional[Mapping[NodeId, int]] = None,
            reserved: Optional[Reserved] = None) -> List[Tuple[ChannelId, bool]]:
    """Shortest admissible path from ``sender`` to ``dest`` whose last hop carries ``arrive_msat``.

    Labels are (required amount on the hop entering the node, suffix). A label
    survives only if no label with fewer hops needs less, and no label with the
    same hops and a smaller suffix needs as little. With ``lower`` (hop
    distances from the sender) the search deepens one route length at a time
    and only expands nodes that can still finish within that length.
    """
    if sender == dest:
        return []
    if lower is None:
        lengths = [max_hops]
    else:
        if dest not in lower:
            raise NoRoute(f"{dest} unreachable from {sender}")
        lengths = range(max(1, lower[dest]), max_hops + 1)
    for limit in lengths:
        path, cut = _layered(view, estimates, sender, dest, arrive_msat, excluded, limit, first_hops, lower,
                             reserved)
        if path is not None:
            return path
        if not cut:
            break  # the limit pruned nothing, so a longer one cannot help
    raise NoRoute(f"no admissible path {sender} -> {dest} within {max_hops} hops")


def _layered(view, estimates, sender, dest, arrive_msat, excluded, limit, first_hops, lower, reserved):
    est_get = estimates.get if estimates is not None else _NONE_RESERVED.get
    res_get = (reserved or _NONE_RESERVED).get
    best_req: Dict[NodeId, int] = {dest: arrive_msat}
    layer: Dict[NodeId, List[Tuple[int, Tuple]]] = {dest: [(arrive_msat, ())]}
    cut = False
    for depth in range(1, limit + 1):
        done: List[Tuple] = []
        cand: Dict[NodeId, List[Tuple[int, Tuple]]] = {}
        for v, labels in layer.items():
            for cid, fwd, u, cap, ch_cap, base, ppm in view.active_incoming(v):
                if cid in excluded or u == dest:
                    continue
                if lower is not None:
                    lu = lower.get(u)
                    if lu is None:
                        continue
                    if depth + lu > limit:
                        cut = True
                        continue
                if u == sender and first_hops is not None and cid not in first_hops:
                    continue
                est = est_get(cid)
                res = res_get(cid)
                if res is not None:
                    room = _reserved_room(est, ch_cap, fwd, res)
                    if room < cap:
                        cap = room
                elif est is not None:
                    room = est.b_max_msat if fwd else ch_cap - est.b_min_msat
                    if room < cap:
                        cap = room
                if u == sender:
                    done.extend(((cid, fwd),) + suffix for req, suffix in labels if req <= cap)
                    continue
                bound = best_req.get(u, math.inf)
                for req, suffix in labels:
                    if req > cap:
                        continue
                    need = req + base + req * ppm // 1_000_000
                    if need >= bound:
                        continue
                    cand.setdefault(u, []).append((need, ((cid, fwd),) + suffix))
        if done:
            return list(min(done, key=lambda p: tuple(c for c, _ in p))), cut
        layer = {}
        for u, labels in cand.items():
            if len(labels) > 1:
                labels.sort(key=lambda lab: tuple(c for c, _ in lab[1]))
            kept, low = [], math.inf
            for need, path in labels:
                if need < low:
                    kept.append((need, path))
                    low = need
            layer[u] = kept
            best_req[u] = min(best_req.get(u, math.inf), low)
        if not layer:
            return None, cut
    return None, True


def find_route(view: PublicView, estimates: Optional[Mapping[ChannelId, BalanceEstimate]],
               query: RouteQuery, lower: Optional[Mapping[NodeId, int]] = None,
               reserved: Optional[Reserved] = None) -> Route:
    """Route from the attacker through an entry channel ending on the target hop.

    Raises :class:`NoRoute` when no admissible path exists; the caller may then
    shrink the amount or try the other direction. ``lower`` may carry
    :func:`hop_distances` from the sender to speed up repeated queries;
    ``reserved`` holds the sender's own possibly-stuck amounts, subtracted
    from the spendable room of the affected channels.
    """
    target = view.channels.get(query.target_channel)
    if target is None:
        raise NoRoute(f"unknown target {query.target_channel}")
    fwd = query.target_forward
    amount = query.amount_msat
    if not hop_admissible(view, estimates, target.id, fwd, amount, reserved=reserved):
        raise NoRoute(f"target {target.id} cannot carry {amount} msat")
    t_send, recipient = target.endpoints(fwd)
    if t_send == query.sender:
        if target.id not in query.entry_channels:
            raise NoRoute("target leaves the sender but is not an entry channel")
        return build_route(view.channels, [(target.id, fwd)], amount)
    excluded = set(query.excluded)
    excluded.update(c for c in view.adjacent(recipient) if c != target.id)
    excluded.add(target.id)
    arrive = amount + target.policy(fwd).fee_msat(amount)
    prefix = _search(view, estimates, query.sender, t_send, arrive, excluded,
                     query.max_hops - 1, first_hops=query.entry_channels, lower=lower, reserved=reserved)
    return build_route(view.channels, prefix + [(target.id, fwd)], amount)


def shortest_route(view: PublicView, sender: NodeId, recipient: NodeId, amount_msat: int,
                   excluded: Iterable[ChannelId] = (), max_hops: int = PROTOCOL_MAX_HOPS,
                   estimates: Optional[Mapping[ChannelId, BalanceEstimate]] = None) -> Route:
    """Plain sender-to-recipient route, as an ordinary payer would compute it."""
    path = _search(view, estimates, sender, recipient, amount_msat, frozenset(excluded), max_hops)
    return build_route(view.channels, path, amount_msat)


def route_admissible(view: PublicView, estimates, route: Route, excluded: Iterable[ChannelId] = ()) -> bool:
    excluded = set(excluded)
    return all(hop_admissible(view, estimates, h.channel, h.forward, h.amount_msat, excluded)
               for h in route.hops)


def hub_nodes(view: PublicView, fraction: float = 0.01, skip: Iterable[NodeId] = ()) -> FrozenSet[NodeId]:
    skip = set(skip)
    nodes = [n for n in view.nodes if n not in skip]
    k = max(1, math.ceil(fraction * len(nodes))) if nodes else 0
    ranked = sorted(nodes, key=lambda n: (-view.degree(n), n))
    return frozenset(ranked[:k])


def order_targets(view: PublicView, entry_nodes: Iterable[NodeId], skip: Iterable[ChannelId] = (),
                  hub_fraction: float = 0.01, attacker: Optional[NodeId] = None) -> List[ChannelId]:
    """Probe order: first layer, hub-to-hub, second layer, rest.

    Within a partition channels go by descending capacity, then id.
    """
    entry_nodes = set(entry_nodes)
    placed = set(skip)
    hubs = hub_nodes(view, hub_fraction, skip=[attacker] if attacker else ())

    def take(pred) -> List[ChannelId]:
        part = [cid for cid, ch in view.channels.items() if cid not in placed and pred(ch)]
        part.sort(key=lambda cid: (-view.channels[cid].capacity_msat, cid))
        placed.update(part)
        return part

    first = take(lambda ch: ch.source in entry_nodes or ch.destination in entry_nodes)
    layer_nodes = set(entry_nodes)
    for cid in first:
        ch = view.channels[cid]
        layer_nodes.update((ch.source, ch.destination))
    layer_nodes.discard(attacker)
    hub_hub = take(lambda ch: ch.source in hubs and ch.destination in hubs)
    second = take(lambda ch: ch.source in layer_nodes or ch.destination in layer_nodes)
    rest = take(lambda ch: True)
    return first + hub_hub + second + rest

"""Hand-built networks shared by the tests."""
from __future__ import annotations

from typing import Iterable, Mapping, Optional, Sequence, Tuple

from lnprobe.core import Channel, DirectionPolicy, GroundTruthNetwork, Node, sat_to_msat
from lnprobe.forwarding import ForwardingConfig, ForwardingEngine
from lnprobe.ingestion import MAX_HTLC_PAYLOAD_MSAT

SAT = 1000


def policy(active: bool = True, max_htlc: int = MAX_HTLC_PAYLOAD_MSAT, base: int = 0, ppm: int = 0) -> DirectionPolicy:
    return DirectionPolicy(active, max_htlc, base, ppm)


def add_channel(net: GroundTruthNetwork, cid: str, a: str, b: str, cap_sat: int, bal_a_sat: int,
                pol_ab: Optional[DirectionPolicy] = None, pol_ba: Optional[DirectionPolicy] = None) -> Channel:
    """Channel between ``a`` and ``b`` where ``a`` holds ``bal_a_sat``; orientation is fixed up."""
    pol_ab = pol_ab or policy()
    pol_ba = pol_ba or policy()
    cap = sat_to_msat(cap_sat)
    bal = sat_to_msat(bal_a_sat)
    if a < b:
        ch = Channel(cid, a, b, cap, bal, pol_ab, pol_ba)
    else:
        ch = Channel(cid, b, a, cap, cap - bal, pol_ba, pol_ab)
    net.add_channel(ch)
    return ch


def network(nodes: Iterable[str], dead: Iterable[str] = (), latency_ms: float = 400.0) -> GroundTruthNetwork:
    dead = set(dead)
    net = GroundTruthNetwork()
    for n in nodes:
        net.add_node(Node(n, live=n not in dead, latency_ms_mean=latency_ms))
    return net


def line(balances_sat: Sequence[int], cap_sat: int = 100, dead: Iterable[str] = (),
         fees: Sequence[Tuple[int, int]] = (), latency_ms: float = 400.0) -> GroundTruthNetwork:
    """n0 - n1 - ... with channel ``c{k}`` from n{k} to n{k+1}; n{k} holds ``balances_sat[k]``."""
    k = len(balances_sat)
    net = network([f"n{i}" for i in range(k + 1)], dead, latency_ms)
    for i, b in enumerate(balances_sat):
        base, ppm = fees[i] if i < len(fees) else (0, 0)
        add_channel(net, f"c{i}", f"n{i}", f"n{i + 1}", cap_sat, b, policy(base=base, ppm=ppm))
    return net


def engine(net: GroundTruthNetwork, seed: int = 0, **cfg) -> ForwardingEngine:
    return ForwardingEngine(net, ForwardingConfig(**cfg), seed=seed)


def path_of(net: GroundTruthNetwork, nodes: Sequence[str], cids: Sequence[str]):
    """(channel, forward) pairs walking ``nodes`` over ``cids``."""
    out = []
    for (u, _v), cid in zip(zip(nodes, nodes[1:]), cids):
        out.append((cid, net.channels[cid].source == u))
    return out


def balances_sat(net: GroundTruthNetwork) -> Mapping[str, int]:
    return {cid: ch.balance_source_msat // SAT for cid, ch in net.channels.items()}

import math
import random

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from lnprobe.core import BalanceEstimate, derive_public_view
from lnprobe.errors import NoRoute
from lnprobe.ingestion import TopologyConfig, generate_topology
from lnprobe.routing import RouteQuery, find_route, hub_nodes, order_targets, route_admissible, shortest_route
from lnprobe.scenario import attach_attacker

from helpers import SAT, add_channel, network


def diamond():
    """attacker -e0- a, a-b-d and a-c-d, target d-t."""
    net = network(["attacker", "a", "b", "c", "d", "t"])
    add_channel(net, "e0", "attacker", "a", 1000, 1000)
    add_channel(net, "ab", "a", "b", 100, 50)
    add_channel(net, "ac", "a", "c", 100, 50)
    add_channel(net, "bd", "b", "d", 100, 50)
    add_channel(net, "cd", "c", "d", 100, 50)
    add_channel(net, "dt", "d", "t", 100, 50)
    add_channel(net, "at", "a", "t", 100, 50)
    return net


def query(target, fwd=True, amount=10 * SAT, excluded=(), entries=("e0",), max_hops=10):
    return RouteQuery("attacker", frozenset(entries), target, fwd, amount, frozenset(excluded), max_hops)


def test_target_next_to_entry_node():
    view = derive_public_view(diamond())
    r = find_route(view, {}, query("ab"))
    assert r.channels == ("e0", "ab")


def test_shortest_with_lexicographic_tie_break():
    view = derive_public_view(diamond())
    r = find_route(view, {}, query("dt"))
    # 'at' reaches t directly and is dropped as a recipient-adjacent channel
    assert r.channels == ("e0", "ab", "bd", "dt")


def test_excluded_channel_forces_other_path():
    view = derive_public_view(diamond())
    r = find_route(view, {}, query("dt", excluded={"ab"}))
    assert r.channels == ("e0", "ac", "cd", "dt")


def test_low_upper_bound_blocks():
    view = derive_public_view(diamond())
    est = {"ab": BalanceEstimate("ab", 0, 5 * SAT), "ac": BalanceEstimate("ac", 0, 5 * SAT)}
    with pytest.raises(NoRoute):
        find_route(view, est, query("dt"))


def test_reverse_direction_uses_flipped_bounds():
    view = derive_public_view(diamond())
    # b -> a needs the destination side of 'ab' to hold the amount: c - b_min
    est = {"ab": BalanceEstimate("ab", 95 * SAT, 100 * SAT)}
    with pytest.raises(NoRoute):
        find_route(view, est, query("ab", fwd=False))


def test_max_hops():
    view = derive_public_view(diamond())
    with pytest.raises(NoRoute):
        find_route(view, {}, query("dt", max_hops=3))


def test_shortest_route_for_payments():
    view = derive_public_view(diamond())
    r = shortest_route(view, "a", "d", 10 * SAT)
    assert r.channels == ("ab", "bd")
    assert shortest_route(view, "a", "d", 10 * SAT, excluded={"bd"}).channels == ("ac", "cd")


@pytest.fixture(scope="module")
def random_world():
    net = generate_topology(TopologyConfig(node_count=80, channel_count=200, rng_seed=5))
    att = attach_attacker(net)
    return derive_public_view(net), att


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(data=st.data())
def test_routes_are_admissible(random_world, data):
    view, att = random_world
    cids = sorted(c for c in view.channels if c not in att.entry_channels)
    target = data.draw(st.sampled_from(cids))
    excluded = frozenset(data.draw(st.lists(st.sampled_from(cids), max_size=15)))
    excluded -= {target}
    rng = random.Random(data.draw(st.integers(0, 10**6)))
    est = {}
    for c in rng.sample(cids, 40):
        cap = view.channels[c].capacity_msat
        lo = rng.randint(0, cap)
        est[c] = BalanceEstimate(c, lo, rng.randint(lo, cap))
    amount = data.draw(st.integers(1, 5_000_000_000))
    q = RouteQuery(att.node, att.entry_set, target, data.draw(st.booleans()), amount, excluded, 10)
    try:
        r = find_route(view, est, q)
    except NoRoute:
        return
    assert r.hops[0].channel in att.entry_channels
    assert r.hops[-1].channel == target and r.hops[-1].forward == q.target_forward
    assert len(r) <= 10
    assert not set(r.channels[:-1]) & excluded
    assert route_admissible(view, est, r, excluded - {target})
    assert find_route(view, est, q) == r


def test_star_with_entry_at_hub():
    net = network(["attacker", "h", "x1", "x2", "x3"])
    for i in (1, 2, 3):
        add_channel(net, f"s{i}", "h", f"x{i}", 100 * i, 10)
    add_channel(net, "e0", "attacker", "h", 1000, 1000)
    view = derive_public_view(net)
    assert order_targets(view, {"h"}, skip={"e0"}, attacker="attacker") == ["s3", "s2", "s1"]


def test_hub_hub_partition():
    net = network(["attacker", "p", "q", "h1", "h2"] + [f"l{i}" for i in range(8)])
    add_channel(net, "e0", "attacker", "p", 1000, 1000)
    add_channel(net, "pq", "p", "q", 100, 10)
    add_channel(net, "hh", "h1", "h2", 50, 10)
    for i in range(8):
        add_channel(net, f"x{i}", "h1" if i % 2 else "h2", f"l{i}", 100, 10)
    add_channel(net, "qh", "q", "h1", 100, 10)
    view = derive_public_view(net)
    assert hub_nodes(view, 0.01, skip=["attacker"]) == {"h1"}
    hubs = hub_nodes(view, 0.15, skip=["attacker"])
    assert hubs == {"h1", "h2"}
    order = order_targets(view, {"p"}, skip={"e0"}, hub_fraction=0.15, attacker="attacker")
    assert order[0] == "pq"
    assert order[1] == "hh"
    assert order[2] == "qh"


def independent_partitions(view, entry_nodes, skip, hub_fraction, attacker):
    """Straight re-derivation of the four partitions from their definitions."""
    chans = [c for c in view.channels if c not in skip]
    deg = {n: 0 for n in view.nodes}
    for c, ch in view.channels.items():
        deg[ch.source] += 1
        deg[ch.destination] += 1
    ranked = sorted((n for n in view.nodes if n != attacker), key=lambda n: (-deg[n], n))
    hubs = set(ranked[:max(1, math.ceil(hub_fraction * len(ranked)))])
    touch = lambda ch, s: ch.source in s or ch.destination in s
    p1 = {c for c in chans if touch(view.channels[c], entry_nodes)}
    layer = set(entry_nodes) | {v for c in p1 for v in (view.channels[c].source, view.channels[c].destination)}
    layer.discard(attacker)
    p2 = {c for c in chans if c not in p1 and view.channels[c].source in hubs and view.channels[c].destination in hubs}
    p3 = {c for c in chans if c not in p1 | p2 and touch(view.channels[c], layer)}
    p4 = set(chans) - p1 - p2 - p3
    return [p1, p2, p3, p4]


def test_partitions_cover_100_node_net():
    net = generate_topology(TopologyConfig(node_count=100, channel_count=250, rng_seed=8))
    att = attach_attacker(net)
    view = derive_public_view(net)
    entry_nodes = {view.channels[c].other(att.node) for c in att.entry_channels}
    order = order_targets(view, entry_nodes, skip=att.entry_channels, attacker=att.node)
    assert len(order) == len(set(order)) == 250
    parts = independent_partitions(view, entry_nodes, set(att.entry_channels), 0.01, att.node)
    at = 0
    for part in parts:
        block = order[at:at + len(part)]
        assert set(block) == part
        caps = [view.channels[c].capacity_msat for c in block]
        assert caps == sorted(caps, reverse=True)
        at += len(part)
    assert at == len(order)

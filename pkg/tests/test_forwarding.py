import pytest
from hypothesis import given, settings, strategies as st

from lnprobe.errors import MalformedRoute
from lnprobe.forwarding import (ErrorClass, FloodDetectionConfig, HtlcLedger, InFlightHtlc, Route,
                                build_route, release_hanging)

from helpers import SAT, add_channel, balances_sat, engine, line, network, path_of, policy


def route_over(net, n_hops, amount_sat):
    nodes = [f"n{i}" for i in range(n_hops + 1)]
    return build_route(net.channels, path_of(net, nodes, [f"c{i}" for i in range(n_hops)]), amount_sat * SAT)


def test_insufficient_second_hop():
    net = line([80, 40])
    out = engine(net).send_probe(route_over(net, 2, 50))
    assert (out.error, out.erring_hop_index, out.reported_channel) == (ErrorClass.TEMPORARY_CHANNEL_FAILURE, 2, "c1")


def test_unknown_payment_details_rolls_back():
    net = line([80, 60])
    before = balances_sat(net)
    eng = engine(net)
    out = eng.send_probe(route_over(net, 2, 50))
    assert (out.error, out.erring_hop_index) == (ErrorClass.UNKNOWN_PAYMENT_DETAILS, 2)
    assert balances_sat(net) == before
    assert eng.fees_collected_msat == 0
    assert len(eng.ledger) == 0


def test_dead_forwarder_hangs_first_hop():
    net = line([80, 80, 80], dead=["n1"])
    eng = engine(net)
    r = route_over(net, 3, 50)
    out = eng.send_probe(r)
    assert out.error is ErrorClass.TIMEOUT and out.hanging
    assert out.elapsed_ms == 10_000
    assert eng.ledger.committed("c0", True) == 50 * SAT
    assert eng.ledger.committed("c1", True) == 0
    # the stuck HTLC locks capacity: only 30 sat remain spendable on c0
    again = eng.send_probe(route_over(net, 3, 31))
    assert (again.error, again.erring_hop_index) == (ErrorClass.TEMPORARY_CHANNEL_FAILURE, 1)


def test_dead_recipient_hangs_everything():
    net = line([80, 80], dead=["n2"])
    eng = engine(net)
    out = eng.send_probe(route_over(net, 2, 10))
    assert out.hanging
    assert eng.ledger.committed("c0", True) == eng.ledger.committed("c1", True) == 10 * SAT


def test_merged_errors_blame_first_hop():
    net = line([80, 40])
    out = engine(net, merge_errors=True).send_probe(route_over(net, 2, 50))
    assert (out.error, out.erring_hop_index, out.reported_channel) == (ErrorClass.TEMPORARY_CHANNEL_FAILURE, 1, "c0")
    assert out.true_channel == "c1"


def test_payment_success_shifts_balances_and_fees():
    net = line([80, 60, 60], fees=[(0, 0), (1000, 0), (2000, 0)])
    eng = engine(net)
    r = route_over(net, 3, 50)
    # hop 3 charged by n2 (2 sat), hop 2 by n1 (1 sat); the sender's own hop is free
    assert [h.amount_msat for h in r.hops] == [53 * SAT, 52 * SAT, 50 * SAT]
    out = eng.send_probe(r, recipient_knows_preimage=True)
    assert out.succeeded
    assert balances_sat(net) == {"c0": 27, "c1": 8, "c2": 10}
    assert eng.fees_collected_msat == 3 * SAT
    for ch in net.channels.values():
        assert ch.balance_source_msat + ch.balance_destination_msat == ch.capacity_msat


def test_inactive_and_max_htlc():
    net = network(["a", "b", "c"])
    add_channel(net, "x", "a", "b", 100, 90)
    add_channel(net, "y", "b", "c", 100, 90, policy(active=False))
    r = build_route(net.channels, path_of(net, "abc", ["x", "y"]), 10 * SAT)
    assert engine(net).send_probe(r).erring_hop_index == 2
    net2 = network(["a", "b", "c"])
    add_channel(net2, "x", "a", "b", 100, 90)
    add_channel(net2, "y", "b", "c", 100, 90, policy(max_htlc=5 * SAT))
    out = engine(net2).send_probe(build_route(net2.channels, path_of(net2, "abc", ["x", "y"]), 10 * SAT))
    assert (out.error, out.erring_hop_index) == (ErrorClass.TEMPORARY_CHANNEL_FAILURE, 2)


def jit_net():
    net = network(["a", "b", "c"])
    add_channel(net, "x", "a", "b", 100, 90)
    add_channel(net, "y", "b", "c", 100, 10)
    add_channel(net, "z", "b", "c", 100, 90)
    return net


def test_jit_rebalance_masks_shortfall():
    net = jit_net()
    eng = engine(net, jit_rebalancing=True)
    out = eng.send_probe(build_route(net.channels, path_of(net, "abc", ["x", "y"]), 50 * SAT))
    assert out.error is ErrorClass.UNKNOWN_PAYMENT_DETAILS
    assert eng.jit_rebalances == 1
    y, z = net.channels["y"], net.channels["z"]
    # shortfall 40 sat, shifted with a 1% buffer
    assert y.balance(True) == 10 * SAT + 40_400
    assert z.balance(True) == 90 * SAT - 40_400
    assert y.balance_source_msat + z.balance_source_msat == 100 * SAT


def test_without_jit_same_probe_fails():
    net = jit_net()
    out = engine(net).send_probe(build_route(net.channels, path_of(net, "abc", ["x", "y"]), 50 * SAT))
    assert out.error is ErrorClass.TEMPORARY_CHANNEL_FAILURE


def test_non_strict_substitutes_parallel():
    net = jit_net()
    eng = engine(net, non_strict_forwarding=True)
    out = eng.send_probe(build_route(net.channels, path_of(net, "abc", ["x", "y"]), 50 * SAT))
    assert out.error is ErrorClass.UNKNOWN_PAYMENT_DETAILS
    assert eng.jit_rebalances == 0


def test_flood_detection_trips():
    net = line([80, 40])
    eng = engine(net, flood_detection=FloodDetectionConfig(enabled=True, window_ms=1e9, threshold=3))
    r = route_over(net, 2, 50)
    seen = [eng.send_probe(r).error for _ in range(5)]
    assert seen[:3] == [ErrorClass.TEMPORARY_CHANNEL_FAILURE] * 3
    assert seen[3:] == [ErrorClass.UNEXPECTED_ERROR] * 2


def test_slow_path_times_out_without_hanging():
    net = line([80, 80, 80], latency_ms=3000.0)
    out = engine(net).send_probe(route_over(net, 3, 10))
    assert out.error is ErrorClass.TIMEOUT and not out.hanging
    assert out.elapsed_ms == 10_000


def test_elapsed_grows_with_erring_hop():
    net = line([80, 80, 80, 80])
    for node in net.nodes.values():
        node.latency_ms_jitter = 1e-9
    eng = engine(net)
    times = []
    for k in range(1, 5):
        net.channels[f"c{k - 1}"].balance_source_msat = 0
        times.append(eng.send_probe(route_over(net, 4, 10)).elapsed_ms)
        net.channels[f"c{k - 1}"].balance_source_msat = 80 * SAT
    assert times == pytest.approx([800 * k for k in range(1, 5)], rel=1e-6)


def test_malformed_routes():
    net = line([80, 80])
    eng = engine(net)
    with pytest.raises(MalformedRoute):
        eng.send_probe(Route(()))
    good = route_over(net, 2, 10)
    with pytest.raises(MalformedRoute):
        eng.send_probe(Route(good.hops[::-1]))


def test_release_hanging():
    ledger = HtlcLedger()
    assert release_hanging(ledger, 0, 100) == 0
    r = build_route(line([80]).channels, [("c0", True)], 5 * SAT)
    ledger.add(InFlightHtlc(r, 0.0, (("c0", True, 5 * SAT),)))
    assert release_hanging(ledger, 50, 100) == 0
    assert ledger.committed("c0", True) == 5 * SAT
    assert release_hanging(ledger, 100, 100) == 1
    assert ledger.committed("c0", True) == 0


def forwarding_oracle(balances, amount):
    """Brute-force strict forwarding on a fee-free line, preimage unknown."""
    for k, b in enumerate(balances, start=1):
        if b < amount:
            return ErrorClass.TEMPORARY_CHANNEL_FAILURE, k
    return ErrorClass.UNKNOWN_PAYMENT_DETAILS, len(balances)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 100), min_size=1, max_size=8), st.integers(1, 100), st.integers(0, 50))
def test_matches_forwarding_oracle(bals, amount, seed):
    net = line(bals)
    before = balances_sat(net)
    out = engine(net, seed=seed).send_probe(route_over(net, len(bals), amount))
    assert (out.error, out.erring_hop_index) == forwarding_oracle(bals, amount)
    assert balances_sat(net) == before

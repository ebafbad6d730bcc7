"""Probe many seeded networks and check every estimate against the true balances.

    python scripts/run_soundness_suite.py --scenarios 1000
"""
import argparse
import random
import time

from lnprobe.ingestion import TopologyConfig, generate_topology
from lnprobe.scenario import prepare_run


def scenario(seed: int, lo: int, hi: int) -> TopologyConfig:
    n = lo + (seed * 37) % (hi - lo + 1)
    r = random.Random(seed)
    return TopologyConfig(node_count=n, channel_count=2 * n, dead_node_fraction=r.uniform(0, 0.3),
                          inactive_channel_fraction=r.uniform(0, 0.4), balance_skew=r.random(),
                          parallel_channel_fraction=r.choice([0.0, 0.1]), rng_seed=seed)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenarios", type=int, default=1000)
    ap.add_argument("--start-seed", type=int, default=0)
    ap.add_argument("--min-nodes", type=int, default=100)
    ap.add_argument("--max-nodes", type=int, default=500)
    args = ap.parse_args()

    t0 = time.perf_counter()
    violations = checks = 0
    for seed in range(args.start_seed, args.start_seed + args.scenarios):
        run = prepare_run(generate_topology(scenario(seed, args.min_nodes, args.max_nodes)), seed=seed)
        truth = run.initial_balances

        def observe(rec, table):
            nonlocal violations, checks
            if rec.route is None:
                return
            for h in rec.route.hops:
                checks += 1
                violations += not table[h.channel].contains(truth[h.channel])

        run.prober.observer = observe
        run.prober.probe_all()
        for cid, est in run.table.items():
            checks += 1
            violations += not est.contains(truth[cid])
    took = time.perf_counter() - t0
    print(f"scenarios={args.scenarios} checks={checks} violations={violations} seconds={took:.1f}")


if __name__ == "__main__":
    main()

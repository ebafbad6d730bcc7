"""Pay a random workload with and without balance queries; write efficiency.csv.

    python scripts/run_efficiency.py --seeds 100 --skew 1.0 --out out/efficiency
"""
import argparse
from pathlib import Path

from lnprobe.experiments import EFFICIENCY_HEADER, ExperimentConfig, WorkloadConfig, run_efficiency_experiment, write_rows
from lnprobe.ingestion import TopologyConfig


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20, help="number of paired seeds, starting at 0")
    ap.add_argument("--skew", type=float, default=1.0)
    ap.add_argument("--pairs", type=int, default=50)
    ap.add_argument("--disclosure", choices=["always", "trusted", "never"], default="always")
    ap.add_argument("--out", type=Path, default=Path("out/efficiency"))
    args = ap.parse_args()

    exp = ExperimentConfig(topology=TopologyConfig(node_count=150, channel_count=300, balance_skew=args.skew),
                           seeds=tuple(range(args.seeds)), disclosure=args.disclosure,
                           workload=WorkloadConfig(pairs=args.pairs))
    rows = run_efficiency_experiment(exp)
    path = write_rows(args.out / "efficiency.csv", EFFICIENCY_HEADER, rows)
    pairs = list(zip(rows[::2], rows[1::2]))
    better = sum(on.attempts_rank < off.attempts_rank for off, on in pairs)
    worse = sum(on.attempts_rank > off.attempts_rank for off, on in pairs)
    print(f"seeds={len(pairs)} fewer_attempts_with_queries={better} more={worse}")
    print(f"wrote {path}")


if __name__ == "__main__":
    main()

"""Generate the testnet-scale network, probe it once and write all reports.

    python scripts/probe_testnet_scale.py --seed 0 --out out/testnet
"""
import argparse
import time
from pathlib import Path

from lnprobe.config import ScenarioConfig
from lnprobe.cli import probe_once
from lnprobe.ingestion import TopologyConfig


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("out/testnet"))
    args = ap.parse_args()

    cfg = ScenarioConfig(topology=TopologyConfig()).with_preset("testnet-scale").with_seed(args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    summary = probe_once(cfg, args.out)
    print(f"{summary} in {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()

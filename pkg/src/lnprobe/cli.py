"""Command-line entry point: ``lnprobe generate|probe|experiment``.

Exit codes: 0 on success, 2 on configuration or input errors, 3 on runtime
failures.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .config import ScenarioConfig, load_config
from .core import GroundTruthNetwork
from .errors import ConfigError, SchemaError
from .experiments import (ATTACK_MATRIX_HEADER, EFFICIENCY_HEADER, run_attack_matrix,
                          run_efficiency_experiment, write_rows)
from .ingestion import TopologyConfig, generate_topology, load_snapshot, save_snapshot
from .metrics import summarize, write_reports
from .scenario import run_probe

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("lnprobe")


def _config(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig(topology=TopologyConfig())
    if getattr(args, "preset", None):
        cfg = cfg.with_preset(args.preset)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "out", None):
        cfg = replace(cfg, out=Path(args.out))
    return cfg


def load_network(cfg: ScenarioConfig) -> GroundTruthNetwork:
    if cfg.snapshot is not None:
        if not cfg.snapshot.is_file():
            raise ConfigError(f"snapshot: file not found: {cfg.snapshot}")
        return load_snapshot(cfg.snapshot)
    return generate_topology(cfg.topology)


def probe_once(cfg: ScenarioConfig, outdir: Path) -> Dict[str, object]:
    net = load_network(cfg)
    run = run_probe(net, cfg.prober, cfg.forwarding, seed=cfg.seed, attacker_cfg=cfg.attacker)
    entry_caps = [run.view.channels[c].capacity_msat for c in run.attacker.entry_channels]
    report = summarize(run.log, run.table, run.view, targets=run.prober.targets,
                       safe_htlc_msat=cfg.prober.safe_htlc_msat, entry_capacities_msat=entry_caps,
                       htlc_timeout_ms=cfg.prober.htlc_timeout_ms)
    write_reports(report, outdir)
    onions = run.log.onions
    usable = sum(1 for r in onions if r.outcome.error is not None and r.outcome.error.usable)
    summary = {
        "seed": cfg.seed,
        "onions_total": len(onions),
        "onions_usable_fraction": round(usable / len(onions), 6) if onions else 0.0,
        "channels_probed": len(set(run.prober.targets)),
        "mean_info_coefficient": round(report.mean_information_coefficient(), 6),
        "simulated_ms": round(run.engine.clock.now_ms, 3),
    }
    (outdir / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return summary


def _probe_seed(cfg: ScenarioConfig, seed: int, outdir: Path) -> Dict[str, object]:
    return probe_once(cfg.with_seed(seed), outdir)


def _seeds(cfg: ScenarioConfig, runs: int) -> List[int]:
    if runs < 1:
        raise ConfigError("--runs must be >= 1")
    return [cfg.seed + i for i in range(runs)]


def cmd_generate(args) -> int:
    cfg = _config(args)
    net = load_network(cfg)
    out = Path(args.out) if args.out else cfg.out / "snapshot.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_snapshot(net, out)
    print(f"nodes={len(net.nodes)} channels={len(net.channels)} -> {out}")
    return EXIT_OK


def cmd_probe(args) -> int:
    cfg = _config(args)
    out = cfg.out
    if args.runs == 1:
        out.mkdir(parents=True, exist_ok=True)
        s = probe_once(cfg, out)
        print(json.dumps(s, sort_keys=True))
        return EXIT_OK
    seeds = _seeds(cfg, args.runs)
    dirs = [out / f"seed_{s}" for s in seeds]
    for d in dirs:
        d.mkdir(parents=True, exist_ok=True)
    with ProcessPoolExecutor(max_workers=min(len(seeds), args.jobs)) as pool:
        for s in pool.map(_probe_seed, [cfg] * len(seeds), seeds, dirs):
            print(json.dumps(s, sort_keys=True))
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = _config(args)
    exp = cfg.experiment
    if args.runs > 1:
        exp = replace(exp, seeds=tuple(_seeds(cfg, args.runs)))
    network = load_network(cfg) if cfg.snapshot is not None else None
    cfg.out.mkdir(parents=True, exist_ok=True)
    matrix = run_attack_matrix(exp, network=network)
    eff = run_efficiency_experiment(exp, network=network)
    write_rows(cfg.out / "attack_matrix.csv", ATTACK_MATRIX_HEADER, matrix)
    write_rows(cfg.out / "efficiency.csv", EFFICIENCY_HEADER, eff)
    print(f"attack_matrix rows={len(matrix)} efficiency rows={len(eff)} -> {cfg.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lnprobe", description="Channel balance probing simulator.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("--config", help="scenario JSON file")
        sp.add_argument("--out", help=out_help)
        sp.add_argument("--seed", type=int, help="master seed (overrides the file)")
        sp.add_argument("--preset", choices=["testnet-scale"], help="topology preset")

    g = sub.add_parser("generate", help="write a network snapshot")
    common(g, "snapshot file path")
    g.set_defaults(func=cmd_generate)

    for name, func, helptext in (("probe", cmd_probe, "run the probing attack"),
                                 ("experiment", cmd_experiment, "run countermeasure comparisons")):
        sp = sub.add_parser(name, help=helptext)
        common(sp, "report directory")
        sp.add_argument("--runs", type=int, default=1, help="number of consecutive seeds")
        sp.add_argument("--jobs", type=int, default=4, help="worker processes for --runs")
        sp.set_defaults(func=func)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, SchemaError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

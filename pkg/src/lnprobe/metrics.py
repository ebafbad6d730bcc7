"""Coefficients, result distributions and attack cost.

Each figure family is written as one CSV; plotting is left to the reader.
"""
from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .core import BalanceEstimate, ChannelId, PublicView
from .prober import EstimateTable, ProbeLog

TIMINGS_HEADER = ["onion_id", "hops", "erring_hop", "elapsed_ms", "error_class"]
CHANNEL_TIMES_HEADER = ["channel", "probes", "total_ms"]
INFO_HEADER = ["channel", "capacity", "b_min", "b_max", "coefficient", "size_class"]
BALANCE_HEADER = ["channel", "capacity", "balance_estimate", "coefficient"]
USAGE_HEADER = ["channel", "count"]
COST_HEADER = ["committed_sat", "fees_paid_sat", "run_ms", "hanging_htlcs", "lock_ms"]

HIGH_ACCURACY = 0.9


def information_coefficient(est: BalanceEstimate, capacity_msat: int) -> float:
    """1 - (b_max - b_min)/c: 0 means nothing beyond the capacity is known, 1 means exact."""
    return 1.0 - (est.b_max_msat - est.b_min_msat) / capacity_msat


def balance_coefficient(balance_msat: float, capacity_msat: int) -> float:
    """1 for a perfectly balanced channel, 0 when everything sits on one side."""
    return 1.0 - abs(2 * balance_msat - capacity_msat) / capacity_msat


def ecdf(values: Iterable[float]) -> Tuple[List[float], List[float]]:
    xs = sorted(values)
    n = len(xs)
    return xs, [(i + 1) / n for i in range(n)]


@dataclass
class TimingRow:
    onion_id: int
    hops: int
    erring_hop: Optional[int]
    elapsed_ms: float
    error_class: str


@dataclass
class InfoRow:
    channel: ChannelId
    capacity_msat: int
    b_min_msat: int
    b_max_msat: int
    coefficient: float
    size_class: str


@dataclass
class CostReport:
    committed_msat: int
    fees_paid_msat: int
    run_ms: float
    hanging_htlcs: int
    lock_ms: float


@dataclass
class MetricsReport:
    timings: List[TimingRow] = field(default_factory=list)
    channel_times: Dict[ChannelId, Tuple[int, float]] = field(default_factory=dict)
    info: List[InfoRow] = field(default_factory=list)
    balance: List[Tuple[ChannelId, int, float, float]] = field(default_factory=list)
    usage: Dict[ChannelId, int] = field(default_factory=dict)
    cost: Optional[CostReport] = None

    def median_elapsed_by_hop(self) -> Dict[int, float]:
        groups: Dict[int, List[float]] = {}
        for t in self.timings:
            if t.erring_hop is not None:
                groups.setdefault(t.erring_hop, []).append(t.elapsed_ms)
        return {k: statistics.median(v) for k, v in sorted(groups.items())}

    def mean_information_coefficient(self, size_class: Optional[str] = None) -> float:
        vals = [r.coefficient for r in self.info if size_class is None or r.size_class == size_class]
        return sum(vals) / len(vals) if vals else 0.0


def attack_cost(entry_capacities_msat: Sequence[int], log: ProbeLog, htlc_timeout_ms: float) -> CostReport:
    """Capital committed, fees paid and how long the capital stays locked."""
    onions = log.onions
    end = max((r.timestamp_ms + r.outcome.elapsed_ms for r in onions), default=0.0)
    fees = sum(r.route.fees_msat for r in onions if r.outcome.succeeded)
    hanging = sum(1 for r in onions if r.outcome.hanging and r.timestamp_ms + htlc_timeout_ms > end)
    lock = end + (htlc_timeout_ms if hanging else 0.0)
    return CostReport(sum(entry_capacities_msat), fees, end, hanging, lock)


def summarize(log: ProbeLog, table: EstimateTable, view: PublicView,
              targets: Optional[Iterable[ChannelId]] = None,
              safe_htlc_msat: int = 4_200_000_000,
              entry_capacities_msat: Sequence[int] = (),
              htlc_timeout_ms: float = 86_400_000.0) -> MetricsReport:
    report = MetricsReport()
    small_limit = 2 * safe_htlc_msat
    onion_id = 0
    for rec in log:
        if rec.outcome is None:
            continue
        out = rec.outcome
        report.timings.append(TimingRow(onion_id, len(rec.route), out.erring_hop_index, out.elapsed_ms,
                                        out.error.value if out.error else "Success"))
        onion_id += 1
        for h in rec.route.hops:
            report.usage[h.channel] = report.usage.get(h.channel, 0) + 1
        if rec.kind == "probe":
            n, ms = report.channel_times.get(rec.target, (0, 0.0))
            report.channel_times[rec.target] = (n + 1, ms + out.elapsed_ms)

    if targets is None:
        targets = [c for c in table.live if c not in table.own and view.channels[c].active]
    for cid in sorted(set(targets)):
        cap = view.channels[cid].capacity_msat
        est = table[cid]
        coef = information_coefficient(est, cap)
        size = "small" if cap <= small_limit else "large"
        report.info.append(InfoRow(cid, cap, est.b_min_msat, est.b_max_msat, coef, size))
        if size == "small" and coef > HIGH_ACCURACY:
            b = (est.b_min_msat + est.b_max_msat) / 2
            report.balance.append((cid, cap, b, balance_coefficient(b, cap)))
    report.cost = attack_cost(entry_capacities_msat, log, htlc_timeout_ms)
    return report


def _sat(msat: float) -> str:
    return f"{msat / 1000:.3f}"


def write_reports(report: MetricsReport, outdir) -> Dict[str, Path]:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    files: Dict[str, List] = {
        "timings.csv": [TIMINGS_HEADER] + [
            [t.onion_id, t.hops, "" if t.erring_hop is None else t.erring_hop, f"{t.elapsed_ms:.3f}", t.error_class]
            for t in report.timings],
        "channel_times.csv": [CHANNEL_TIMES_HEADER] + [
            [cid, n, f"{ms:.3f}"] for cid, (n, ms) in sorted(report.channel_times.items())],
        "info_coeffs.csv": [INFO_HEADER] + [
            [r.channel, _sat(r.capacity_msat), _sat(r.b_min_msat), _sat(r.b_max_msat), f"{r.coefficient:.6f}",
             r.size_class] for r in report.info],
        "balance_coeffs.csv": [BALANCE_HEADER] + [
            [cid, _sat(cap), _sat(b), f"{coef:.6f}"] for cid, cap, b, coef in report.balance],
        "usage.csv": [USAGE_HEADER] + [
            [cid, n] for cid, n in sorted(report.usage.items(), key=lambda kv: (-kv[1], kv[0]))],
    }
    c = report.cost
    if c is not None:
        files["cost.csv"] = [COST_HEADER, [_sat(c.committed_msat), _sat(c.fees_paid_msat), f"{c.run_ms:.3f}",
                                           c.hanging_htlcs, f"{c.lock_ms:.3f}"]]
    paths = {}
    for name, rows in files.items():
        path = out / name
        with open(path, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)
        paths[name] = path
    return paths

"""Simulator for channel balance probing in payment channel networks."""
from .core import (BalanceEstimate, Channel, DirectionPolicy, GroundTruthNetwork, Node, PublicView,
                   derive_public_view, flip_estimate, msat_to_sat, sat_to_msat)
from .errors import ConfigError, IntervalClosed, InvariantError, MalformedRoute, NoRoute, SchemaError
from .forwarding import ErrorClass, ForwardingConfig, ForwardingEngine, ProbeOutcome, Route, build_route
from .ingestion import TopologyConfig, generate_topology, load_snapshot, parse_snapshot, save_snapshot
from .prober import EstimateTable, ProberConfig, next_amount, probe_all, update_estimates
from .routing import RouteQuery, find_route, order_targets, shortest_route
from .scenario import AttackerConfig, run_probe

__version__ = "0.1.0"

__all__ = [
    "AttackerConfig", "BalanceEstimate", "Channel", "ConfigError", "DirectionPolicy", "ErrorClass",
    "EstimateTable", "ForwardingConfig", "ForwardingEngine", "GroundTruthNetwork", "IntervalClosed",
    "InvariantError", "MalformedRoute", "NoRoute", "Node", "ProbeOutcome", "ProberConfig", "PublicView",
    "Route", "RouteQuery", "SchemaError", "TopologyConfig", "build_route", "derive_public_view",
    "find_route", "flip_estimate", "generate_topology", "load_snapshot", "msat_to_sat", "next_amount",
    "order_targets", "parse_snapshot", "probe_all", "run_probe", "sat_to_msat", "save_snapshot",
    "shortest_route", "update_estimates",
]

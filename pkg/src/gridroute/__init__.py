"""Deterministic detailed-routing simulator and RL environment on a 3D grid."""

__version__ = "0.1.0"

from .drc import DrcConfig, Violation, ViolationKind
from .envs import OrderingEnv, RoutingEnv, rrr_iterate
from .grid import Direction, GridDim, GridGraph, Node, NodeType, build_grid
from .metrics import CostWeights, MetricsSnapshot, cost, discounted_return, hpwl
from .policies import exhaustive_best_order, make_policy, next_net
from .regions import (
    BenchmarkRow,
    GeneratorParams,
    NetSpec,
    RegionDescriptor,
    fig1_fixture,
    generate_region,
    parse_region,
    partition_design,
    serialize_region,
    sparsity,
)
from .router import Path, RoutedNet, astar, ripup, route_net

__all__ = [
    "BenchmarkRow",
    "CostWeights",
    "Direction",
    "DrcConfig",
    "GeneratorParams",
    "GridDim",
    "GridGraph",
    "MetricsSnapshot",
    "NetSpec",
    "Node",
    "NodeType",
    "OrderingEnv",
    "Path",
    "RegionDescriptor",
    "RoutedNet",
    "RoutingEnv",
    "Violation",
    "ViolationKind",
    "astar",
    "build_grid",
    "cost",
    "discounted_return",
    "exhaustive_best_order",
    "fig1_fixture",
    "generate_region",
    "hpwl",
    "make_policy",
    "next_net",
    "parse_region",
    "partition_design",
    "ripup",
    "route_net",
    "rrr_iterate",
    "serialize_region",
    "sparsity",
]

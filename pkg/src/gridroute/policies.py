"""Scripted net-ordering policies: baselines and test oracles.

Every policy induces a total order over any net set; ties always break
toward the lowest net id so episodes replay identically.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from typing import Iterable

from .metrics import CostWeights, MetricsSnapshot
from .regions import RegionDescriptor, net_hpwl

MAX_EXHAUSTIVE_NETS = 8


@dataclass(frozen=True)
class FifoPolicy:
    """Lowest net id first."""

    name = "fifo"

    def select(self, remaining: set[int], region: RegionDescriptor) -> int:
        if not remaining:
            raise ValueError("no remaining nets")
        return min(remaining)


@dataclass(frozen=True)
class MostPinsFirstPolicy:
    name = "most-pins"

    def select(self, remaining: set[int], region: RegionDescriptor) -> int:
        if not remaining:
            raise ValueError("no remaining nets")
        return min(remaining, key=lambda n: (-region.net(n).pin_count, n))


@dataclass(frozen=True)
class MinHpwlFirstPolicy:
    name = "min-hpwl"

    def select(self, remaining: set[int], region: RegionDescriptor) -> int:
        if not remaining:
            raise ValueError("no remaining nets")
        return min(remaining, key=lambda n: (net_hpwl(region, n), n))


@dataclass(frozen=True)
class RandomPolicy:
    """Seeded permutation of the region's nets, fixed for a whole episode."""

    seed: int = 0
    name = "random"

    def _permutation(self, region: RegionDescriptor) -> list[int]:
        ids = sorted(region.net_ids())
        random.Random(self.seed).shuffle(ids)
        return ids

    def select(self, remaining: set[int], region: RegionDescriptor) -> int:
        if not remaining:
            raise ValueError("no remaining nets")
        for net_id in self._permutation(region):
            if net_id in remaining:
                return net_id
        raise ValueError("remaining nets are not part of the region")


@dataclass(frozen=True)
class FixedOrderPolicy:
    """Replay an explicit ordering (used for oracle-chosen sequences)."""

    order: tuple[int, ...]
    name = "fixed"

    def select(self, remaining: set[int], region: RegionDescriptor) -> int:
        for net_id in self.order:
            if net_id in remaining:
                return net_id
        raise ValueError("remaining nets are not covered by the fixed order")


POLICY_NAMES = ("fifo", "most-pins", "min-hpwl", "random")


def make_policy(name: str, seed: int = 0):
    if name == "fifo":
        return FifoPolicy()
    if name == "most-pins":
        return MostPinsFirstPolicy()
    if name == "min-hpwl":
        return MinHpwlFirstPolicy()
    if name == "random":
        return RandomPolicy(seed)
    raise ValueError(f"unknown policy {name!r}")


def next_net(policy, remaining: Iterable[int], region: RegionDescriptor) -> int:
    """One policy decision over the remaining net set."""
    return policy.select(set(remaining), region)


def run_ordering_episode(
    region: RegionDescriptor,
    policy,
    weights: CostWeights | None = None,
    drc_config=None,
) -> tuple[tuple[int, ...], MetricsSnapshot]:
    """Route a whole region under a policy; returns (order used, final snapshot)."""
    from .envs import OrderingEnv

    env = OrderingEnv(region, weights=weights, drc_config=drc_config)
    order = []
    while not env.done:
        choice = policy.select(set(env.remaining), region)
        order.append(choice)
        env.step(choice)
    return tuple(order), env.snapshot


def exhaustive_best_order(
    region: RegionDescriptor,
    weights: CostWeights | None = None,
    drc_config=None,
) -> tuple[tuple[int, ...], MetricsSnapshot]:
    """Try every ordering and keep the cheapest final snapshot.

    Ties go to the lexicographically smallest ordering. Refuses regions
    with more than MAX_EXHAUSTIVE_NETS nets.
    """
    from . import metrics as _metrics
    from .envs import OrderingEnv

    ids = sorted(region.net_ids())
    if len(ids) > MAX_EXHAUSTIVE_NETS:
        raise ValueError(f"too many nets for exhaustive search: {len(ids)}")
    w = weights or CostWeights()
    best: tuple[int, tuple[int, ...], MetricsSnapshot] | None = None
    for order in itertools.permutations(ids):
        env = OrderingEnv(region, weights=w, drc_config=drc_config)
        for net_id in order:
            env.step(net_id)
        final_cost = _metrics.cost(env.snapshot, w)
        if best is None or final_cost < best[0]:
            best = (final_cost, order, env.snapshot)
    if best is None:
        from .metrics import MetricsSnapshot as _Snap

        return (), _Snap()
    return best[1], best[2]

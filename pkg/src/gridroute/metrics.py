"""Cost and reward arithmetic for the routing tasks.

All money is kept in integer half-units (two half-units = one real cost
unit) so that the 0.5 wirelength weight never touches floating point and
reward telescoping is exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence


@dataclass(frozen=True)
class CostWeights:
    """Per-metric cost weights stored in half-units.

    Defaults correspond to real weights 0.5 per DBU of wire, 4 per via
    and 500 per design-rule violation.
    """

    wl_half: int = 1
    via_half: int = 8
    drv_half: int = 1000

    def __post_init__(self) -> None:
        if self.wl_half < 0 or self.via_half < 0 or self.drv_half < 0:
            raise ValueError("cost weights must be non-negative")

    @classmethod
    def from_real(cls, w_wl: float = 0.5, w_via: float = 4.0, w_drv: float = 500.0) -> "CostWeights":
        halves = (w_wl * 2, w_via * 2, w_drv * 2)
        if any(h != int(h) for h in halves):
            raise ValueError("real weights must be multiples of 0.5")
        return cls(*(int(h) for h in halves))

    @property
    def w_wl(self) -> float:
        return self.wl_half / 2

    @property
    def w_via(self) -> float:
        return self.via_half / 2

    @property
    def w_drv(self) -> float:
        return self.drv_half / 2


@dataclass
class MetricsSnapshot:
    """Routing totals at one point in time: wirelength in DBU, vias, DRVs."""

    wirelength: int = 0
    via_count: int = 0
    drv_count: int = 0
    runtime: float = 0.0


def cost(snapshot: MetricsSnapshot, weights: CostWeights | None = None) -> int:
    """Weighted cost of a snapshot in half-units (real cost = value / 2)."""
    w = weights or CostWeights()
    return (
        w.wl_half * snapshot.wirelength
        + w.via_half * snapshot.via_count
        + w.drv_half * snapshot.drv_count
    )


def ordering_reward(
    before: MetricsSnapshot, after: MetricsSnapshot, weights: CostWeights | None = None
) -> int:
    """Reward for routing one net: cost delta in half-units, negative when cost grew."""
    return cost(before, weights) - cost(after, weights)


def hpwl(pins: Iterable[tuple[int, int]]) -> int:
    """Half-perimeter of the bounding box of the given (x, y) points, in DBU."""
    pts = list(pins)
    if not pts:
        raise ValueError("hpwl requires at least one pin")
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    return (max(xs) - min(xs)) + (max(ys) - min(ys))


def routing_reward(
    before: MetricsSnapshot,
    after: MetricsSnapshot,
    completed: bool,
    net_hpwl_dbu: int,
    weights: CostWeights | None = None,
) -> int:
    """Per-move reward in half-units for the path-building task.

    A move that connects the final pin earns the net's HPWL; any other
    move earns the (normally negative) cost delta it caused.
    """
    if completed:
        return 2 * net_hpwl_dbu
    return cost(before, weights) - cost(after, weights)


def t_min(net_hpwl_dbu: int, pin_count: int) -> int:
    """Reward floor for one net's routing episode, in half-units."""
    if pin_count < 1:
        raise ValueError("net must have at least one pin")
    return -2 * net_hpwl_dbu * pin_count


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    """Sum of gamma**t * r_t."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    total = 0.0
    factor = 1.0
    for r in rewards:
        total += factor * r
        factor *= gamma
    return total

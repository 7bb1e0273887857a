"""Violation detection over the occupied grid.

All checks are read-only. Shorts and spacing look only at grid occupancy;
opens and min-area look at routed nets. A SHORT or SPACING violation
names exactly two nets, an OPEN or MIN_AREA exactly one.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .grid import GridGraph, MazeIndex, NodeType
from .router import RoutedNet


class ViolationKind(Enum):
    OPEN = "open"
    SHORT = "short"
    SPACING = "spacing"
    MIN_AREA = "min_area"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    location: MazeIndex | int
    nets: tuple[int, ...]


@dataclass(frozen=True)
class DrcConfig:
    """Tunable rule thresholds; zero disables a check."""

    min_sep: int = 0        # same-layer L-infinity lattice separation
    min_area_len: int = 0   # minimum same-layer segment length, DBU


def check_open(routed_nets: Iterable[RoutedNet]) -> list[Violation]:
    """One OPEN per routed net that still has an unconnected pin."""
    out = []
    for rn in sorted(routed_nets, key=lambda r: r.net_id):
        if rn.unconnected_pins:
            out.append(Violation(ViolationKind.OPEN, rn.net_id, (rn.net_id,)))
    return out


def check_short(g: GridGraph) -> list[Violation]:
    """One SHORT per node claimed by two or more distinct nets."""
    out = []
    for flat, nets in sorted(g.occupied_flats().items()):
        if len(nets) >= 2:
            pair = tuple(sorted(nets)[:2])
            out.append(Violation(ViolationKind.SHORT, g.unflat(flat), pair))
    return out


def _spacing_pairs(
    g: GridGraph, min_sep: int
) -> list[tuple[MazeIndex, MazeIndex, tuple[int, int]]]:
    """Same-layer node pairs of different nets closer than min_sep (L-inf)."""
    if min_sep <= 1:
        return []
    by_layer: dict[int, list[tuple[MazeIndex, frozenset[int]]]] = {}
    for flat, nets in sorted(g.occupied_flats().items()):
        idx = g.unflat(flat)
        by_layer.setdefault(idx[2], []).append((idx, nets))
    pairs = []
    for _, entries in sorted(by_layer.items()):
        for i, (a, nets_a) in enumerate(entries):
            for b, nets_b in entries[i + 1 :]:
                if max(abs(a[0] - b[0]), abs(a[1] - b[1])) >= min_sep:
                    continue
                cross = sorted(
                    (na, nb) if na < nb else (nb, na)
                    for na in nets_a
                    for nb in nets_b
                    if na != nb
                )
                if cross:
                    pairs.append((a, b, cross[0]))
    return pairs


def check_spacing_lite(g: GridGraph, min_sep: int) -> list[Violation]:
    """One SPACING per too-close same-layer pair of different-net nodes."""
    if min_sep < 0:
        raise ValueError("min_sep must be >= 0")
    return [
        Violation(ViolationKind.SPACING, min(a, b), nets)
        for a, b, nets in _spacing_pairs(g, min_sep)
    ]


def _segments(routed: RoutedNet, pitch: tuple[int, int]):
    """Maximal same-layer connected wire pieces: (nodes, length, layer)."""
    planar: dict[int, dict[MazeIndex, set[MazeIndex]]] = {}
    via_nodes: set[MazeIndex] = set()
    lengths: dict[tuple[MazeIndex, MazeIndex], int] = {}
    for a, b in routed.edges():
        if a[2] != b[2]:
            via_nodes.add(a)
            via_nodes.add(b)
            continue
        layer = planar.setdefault(a[2], {})
        layer.setdefault(a, set()).add(b)
        layer.setdefault(b, set()).add(a)
        lengths[(a, b)] = pitch[0] if a[0] != b[0] else pitch[1]
    for _, adj in sorted(planar.items()):
        seen: set[MazeIndex] = set()
        for start in sorted(adj):
            if start in seen:
                continue
            component = [start]
            seen.add(start)
            queue = [start]
            while queue:
                cur = queue.pop()
                for nxt in adj[cur]:
                    if nxt not in seen:
                        seen.add(nxt)
                        component.append(nxt)
                        queue.append(nxt)
            length = sum(
                lengths[(a, b) if a < b else (b, a)]
                for a in component
                for b in adj[a]
                if a < b
            )
            yield sorted(component), length, via_nodes


def check_min_area_lite(
    routed: RoutedNet, min_len: int, pitch: tuple[int, int], g: GridGraph
) -> list[Violation]:
    """Flag short same-layer wire pieces that are not anchored at both ends.

    A piece passes when its length reaches min_len or when at least two of
    its nodes carry a via or sit on one of the net's access points.
    """
    if min_len < 0:
        raise ValueError("min_len must be >= 0")
    if min_len == 0:
        return []
    out = []
    for component, length, via_nodes in _segments(routed, pitch):
        if length >= min_len:
            continue
        anchors = 0
        for idx in component:
            node = g.node_at(idx)
            is_own_ap = node.node_type is NodeType.ACCESS and node.net == routed.net_id
            if idx in via_nodes or is_own_ap:
                anchors += 1
        if anchors < 2:
            out.append(Violation(ViolationKind.MIN_AREA, component[0], (routed.net_id,)))
    return out


def run_checks(
    g: GridGraph,
    routed_nets: Sequence[RoutedNet],
    config: DrcConfig | None = None,
    include_open: bool = True,
) -> list[Violation]:
    cfg = config or DrcConfig()
    out = list(check_short(g))
    out += check_spacing_lite(g, cfg.min_sep)
    for rn in sorted(routed_nets, key=lambda r: r.net_id):
        out += check_min_area_lite(rn, cfg.min_area_len, g.pitch, g)
    if include_open:
        out += check_open(routed_nets)
    return out


def count_by_kind(violations: Iterable[Violation]) -> dict[str, int]:
    counts = {k.value: 0 for k in ViolationKind}
    for v in violations:
        counts[v.kind.value] += 1
    return counts


def drv_count(violations: Iterable[Violation]) -> int:
    """Total findings across all kinds, opens included."""
    return sum(1 for _ in violations)

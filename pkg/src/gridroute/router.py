"""Deterministic A* search and multi-pin net realisation on the grid.

Searches are exact: ties break on (f, h, flat node index) so identical
queries always return the identical path, and the returned cost equals
the Dijkstra optimum on the same effective-cost graph.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .grid import Direction, GridGraph, MazeIndex, NodeType
from .metrics import CostWeights
from .regions import NetSpec


class NoPathError(Exception):
    """All targets unreachable from the source set."""


@dataclass
class Path:
    """Node sequence where consecutive entries are lattice neighbours."""

    nodes: list[MazeIndex]

    @property
    def via_count(self) -> int:
        return sum(1 for a, b in zip(self.nodes, self.nodes[1:]) if a[2] != b[2])

    def wirelength(self, pitch: tuple[int, int]) -> int:
        total = 0
        for a, b in zip(self.nodes, self.nodes[1:]):
            if a[0] != b[0]:
                total += pitch[0]
            elif a[1] != b[1]:
                total += pitch[1]
        return total

    def canonical(self) -> "Path":
        """Copy with immediate backtrack pairs (a, b, a) collapsed."""
        out: list[MazeIndex] = []
        for node in self.nodes:
            if len(out) >= 2 and out[-2] == node:
                out.pop()
            else:
                out.append(node)
        return Path(out)


@dataclass
class RoutedNet:
    """Realised wiring of one net: a tree of paths over the grid."""

    net_id: int
    paths: list[Path] = field(default_factory=list)
    connected_pins: set[int] = field(default_factory=set)
    unconnected_pins: set[int] = field(default_factory=set)
    # access points claimed for connected pins (part of the net's metal)
    pin_nodes: set[MazeIndex] = field(default_factory=set)

    @property
    def fully_connected(self) -> bool:
        return not self.unconnected_pins

    def nodes(self) -> set[MazeIndex]:
        out = set(self.pin_nodes)
        for p in self.paths:
            out.update(p.nodes)
        return out

    def edges(self) -> set[tuple[MazeIndex, MazeIndex]]:
        out = set()
        for p in self.paths:
            for a, b in zip(p.nodes, p.nodes[1:]):
                out.add((a, b) if a < b else (b, a))
        return out

    @property
    def via_count(self) -> int:
        return sum(1 for a, b in self.edges() if a[2] != b[2])

    def wirelength(self, pitch: tuple[int, int]) -> int:
        total = 0
        for a, b in self.edges():
            if a[0] != b[0]:
                total += pitch[0]
            elif a[1] != b[1]:
                total += pitch[1]
        return total


def _default_blocked(g: GridGraph) -> Callable[[MazeIndex], bool]:
    return lambda idx: not g.is_traversable(idx)


def net_blocked_fn(g: GridGraph, net_id: int) -> Callable[[MazeIndex], bool]:
    """Strict legality for one net: blockages, foreign wiring, foreign pins."""

    def blocked(idx: MazeIndex) -> bool:
        node = g.node_at(idx)
        if node.node_type in (NodeType.NOTEXIST, NodeType.BLOCKAGE):
            return True
        if node.node_type is NodeType.ACCESS and node.net != net_id:
            return True
        occ = g.occupied_by(idx)
        return bool(occ - {net_id})

    return blocked


def net_overlap_penalty_fn(
    g: GridGraph, net_id: int, penalty: int
) -> Callable[[MazeIndex], int]:
    """Permissive-mode surcharge for entering another net's metal or pin."""

    def node_penalty(idx: MazeIndex) -> int:
        node = g.node_at(idx)
        if node.node_type is NodeType.ACCESS and node.net != net_id:
            return penalty
        if g.occupied_by(idx) - {net_id}:
            return penalty
        return 0

    return node_penalty


def astar(
    g: GridGraph,
    sources: Iterable[MazeIndex],
    targets: Iterable[MazeIndex],
    weights: CostWeights | None = None,
    blocked: Callable[[MazeIndex], bool] | None = None,
    node_penalty: Callable[[MazeIndex], int] | None = None,
) -> tuple[Path, int]:
    """Minimum-cost path from any source to any target; returns (path, cost).

    Edge costs are the grid's effective half-unit costs plus an optional
    per-node entry surcharge. The heuristic is the per-axis minimum step
    cost times lattice distance to the nearest target, which stays
    admissible for any non-negative surcharge and history.
    """
    del weights  # cost model lives on the grid; kept for call-site symmetry
    if blocked is None:
        blocked = _default_blocked(g)
    src = [s for s in set(sources) if not blocked(s)]
    tgt = {t for t in set(targets) if not blocked(t)}
    if not src or not tgt:
        raise NoPathError("no traversable sources or targets")

    min_x, min_y, min_z = g.min_axis_costs()

    def h(idx: MazeIndex) -> int:
        best = None
        for t in tgt:
            est = (
                abs(idx[0] - t[0]) * min_x
                + abs(idx[1] - t[1]) * min_y
                + abs(idx[2] - t[2]) * min_z
            )
            if best is None or est < best:
                best = est
        return best or 0

    g_score: dict[int, int] = {}
    parent: dict[int, int] = {}
    heap: list[tuple[int, int, int]] = []
    for s in sorted(src, key=g.flat):
        flat = g.flat(s)
        g_score[flat] = 0
        heapq.heappush(heap, (h(s), h(s), flat))

    done: set[int] = set()
    while heap:
        f, _, flat = heapq.heappop(heap)
        if flat in done:
            continue
        done.add(flat)
        idx = g.unflat(flat)
        if idx in tgt:
            nodes = [idx]
            while flat in parent:
                flat = parent[flat]
                nodes.append(g.unflat(flat))
            nodes.reverse()
            return Path(nodes), g_score[g.flat(idx)]
        base = g_score[flat]
        for d in Direction:
            nxt = g.shift(idx, d)
            if nxt is None or blocked(nxt):
                continue
            nflat = g.flat(nxt)
            if nflat in done:
                continue
            step = g.edge_cost(idx, d)
            if node_penalty is not None:
                step += node_penalty(nxt)
            cand = base + step
            if nflat not in g_score or cand < g_score[nflat]:
                g_score[nflat] = cand
                parent[nflat] = g.flat(idx)
                hn = h(nxt)
                heapq.heappush(heap, (cand + hn, hn, nflat))
    raise NoPathError("all targets unreachable")


def route_net(
    g: GridGraph,
    net: NetSpec,
    weights: CostWeights | None = None,
    permissive: bool = False,
    overlap_penalty: int | None = None,
) -> RoutedNet:
    """Connect a net's pins by growing a tree, then occupy it on the grid.

    Pins are attached nearest-first from the current tree. Unreachable
    pins are reported in unconnected_pins rather than raised; they later
    count as opens.
    """
    if not net.pins:
        raise ValueError(f"net {net.net_id} has no pins")
    if permissive:
        penalty = overlap_penalty if overlap_penalty is not None else (weights or CostWeights()).drv_half
        blocked = _default_blocked(g)
        node_penalty = net_overlap_penalty_fn(g, net.net_id, penalty)
    else:
        blocked = net_blocked_fn(g, net.net_id)
        node_penalty = None

    routed = RoutedNet(net.net_id)
    seed_pin = net.pins[0]
    routed.connected_pins.add(seed_pin.pin_id)
    tree: set[MazeIndex] = set()

    def source_set() -> set[MazeIndex]:
        return tree if tree else set(seed_pin.access_points)

    def lattice_l1(a: MazeIndex, b: MazeIndex) -> int:
        px, py = g.pitch
        return abs(a[0] - b[0]) * px + abs(a[1] - b[1]) * py + abs(a[2] - b[2])

    def nearest_pin(pending_ids: list[int]) -> int:
        src = source_set()
        best = None
        for pid in sorted(pending_ids):
            pin = net.pins[pid]
            dist = min(lattice_l1(ap, s) for ap in pin.access_points for s in src)
            if best is None or dist < best[0]:
                best = (dist, pid)
        assert best is not None
        return best[1]

    def mark_free_riders(pending: set[int], failed: set[int]) -> None:
        for pin in net.pins:
            if pin.pin_id in routed.connected_pins:
                continue
            if any(ap in tree for ap in pin.access_points):
                routed.connected_pins.add(pin.pin_id)
                pending.discard(pin.pin_id)
                failed.discard(pin.pin_id)

    pending = {p.pin_id for p in net.pins[1:]}
    failed: set[int] = set()
    while pending:
        target_pin = nearest_pin(sorted(pending))
        targets = net.pins[target_pin].access_points
        try:
            path, _ = astar(g, source_set(), targets, weights, blocked, node_penalty)
        except NoPathError:
            pending.discard(target_pin)
            failed.add(target_pin)
            continue
        routed.paths.append(path)
        tree.update(path.nodes)
        routed.connected_pins.add(target_pin)
        pending.discard(target_pin)
        # a fresh path may unlock pins that previously had no route
        pending |= failed
        failed.clear()
        mark_free_riders(pending, failed)

    routed.unconnected_pins = failed
    # the net's metal: its tree plus every access point of connected pins
    for pin in net.pins:
        if pin.pin_id in routed.connected_pins:
            routed.pin_nodes.update(pin.access_points)
    g.occupy_path(net.net_id, routed.nodes())
    return routed


def ripup(g: GridGraph, routed: RoutedNet) -> None:
    """Release everything the net held; the caller returns it to the unrouted set."""
    g.release_net(routed.net_id)

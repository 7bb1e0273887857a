"""The 3D routing lattice: node storage, occupancy and edge costs.

Nodes live on a dense x-fastest array indexed by maze index (ix, iy, iz).
Each node carries six per-direction base costs in half-units; the
effective cost of a directed step is the max of the two endpoint-facing
costs plus any accumulated history penalty on that edge.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Iterable

from .metrics import CostWeights

MazeIndex = tuple[int, int, int]


class GridError(Exception):
    """Raised for malformed grid construction or out-of-range access."""


class NodeType(Enum):
    NOTEXIST = "notexist"
    BLOCKAGE = "blockage"
    NORMAL = "normal"
    ACCESS = "access"


class Direction(IntEnum):
    """Unit moves on the lattice. Opposite pairs share all bits but the last."""

    UP = 0     # +z
    DOWN = 1   # -z
    NORTH = 2  # +y
    SOUTH = 3  # -y
    EAST = 4   # +x
    WEST = 5   # -x

    @property
    def delta(self) -> MazeIndex:
        return _DELTAS[self.value]

    @property
    def opposite(self) -> "Direction":
        return Direction(self.value ^ 1)

    @property
    def is_vertical(self) -> bool:
        return self.value < 2


_DELTAS: tuple[MazeIndex, ...] = (
    (0, 0, 1),
    (0, 0, -1),
    (0, 1, 0),
    (0, -1, 0),
    (1, 0, 0),
    (-1, 0, 0),
)


@dataclass(frozen=True)
class GridDim:
    dx: int
    dy: int
    dz: int

    def __post_init__(self) -> None:
        if self.dx < 1 or self.dy < 1 or self.dz < 1:
            raise GridError(f"dimension mismatch: all axes must be >= 1, got {self}")

    @property
    def count(self) -> int:
        return self.dx * self.dy * self.dz

    def contains(self, idx: MazeIndex) -> bool:
        ix, iy, iz = idx
        return 0 <= ix < self.dx and 0 <= iy < self.dy and 0 <= iz < self.dz


@dataclass
class Node:
    maze_index: MazeIndex
    point: tuple[int, int, int]
    node_type: NodeType = NodeType.NORMAL
    usage: bool = False
    net: int | None = None
    pin: int | None = None
    cost: list[int] = field(default_factory=lambda: [0] * 6)


class GridGraph:
    """Dense 3D lattice with occupancy tracking and history costs.

    Single-writer: one environment owns and mutates a graph instance.
    """

    def __init__(
        self,
        dim: GridDim,
        pitch: tuple[int, int] = (1, 1),
        origin: tuple[int, int] = (0, 0),
    ):
        if pitch[0] < 1 or pitch[1] < 1:
            raise GridError("pitch must be positive")
        self.dim = dim
        self.pitch = pitch
        self.origin = origin
        self.nodes: list[Node] = [
            Node(self.unflat(i), self._point(self.unflat(i))) for i in range(dim.count)
        ]
        # flat index -> set of net ids whose wiring sits on the node
        self._occupants: dict[int, set[int]] = {}
        # canonical (min_flat, max_flat) -> accumulated half-unit penalty
        self._history: dict[tuple[int, int], int] = {}

    # -- indexing -----------------------------------------------------------

    def flat(self, idx: MazeIndex) -> int:
        ix, iy, iz = idx
        return ix + self.dim.dx * (iy + self.dim.dy * iz)

    def unflat(self, flat: int) -> MazeIndex:
        dx, dy = self.dim.dx, self.dim.dy
        ix = flat % dx
        iy = (flat // dx) % dy
        iz = flat // (dx * dy)
        return (ix, iy, iz)

    def _point(self, idx: MazeIndex) -> tuple[int, int, int]:
        ix, iy, iz = idx
        return (self.origin[0] + ix * self.pitch[0], self.origin[1] + iy * self.pitch[1], iz)

    def in_bounds(self, idx: MazeIndex) -> bool:
        return self.dim.contains(idx)

    def node_at(self, idx: MazeIndex) -> Node:
        if not self.in_bounds(idx):
            raise GridError(f"maze index out of bounds: {idx}")
        return self.nodes[self.flat(idx)]

    def shift(self, idx: MazeIndex, d: Direction) -> MazeIndex | None:
        """Neighbouring maze index in direction d, or None off-grid."""
        dxi, dyi, dzi = d.delta
        nxt = (idx[0] + dxi, idx[1] + dyi, idx[2] + dzi)
        return nxt if self.in_bounds(nxt) else None

    def is_traversable(self, idx: MazeIndex) -> bool:
        return self.nodes[self.flat(idx)].node_type not in (NodeType.NOTEXIST, NodeType.BLOCKAGE)

    def neighbors(self, idx: MazeIndex) -> list[tuple[Direction, MazeIndex]]:
        """In-bounds neighbours whose node exists and is not a blockage."""
        if not self.in_bounds(idx):
            raise GridError(f"maze index out of bounds: {idx}")
        out = []
        for d in Direction:
            nxt = self.shift(idx, d)
            if nxt is not None and self.is_traversable(nxt):
                out.append((d, nxt))
        return out

    # -- occupancy ----------------------------------------------------------

    def occupy_path(self, net: int, nodes: Iterable[MazeIndex]) -> None:
        """Claim nodes for a net; re-claiming by the same net is a no-op."""
        for idx in nodes:
            node = self.node_at(idx)
            flat = self.flat(idx)
            self._occupants.setdefault(flat, set()).add(net)
            node.usage = True

    def release_net(self, net: int) -> None:
        """Free every node held by the net; shared nodes stay used by others."""
        empty = []
        for flat, nets in self._occupants.items():
            nets.discard(net)
            if not nets:
                empty.append(flat)
        for flat in empty:
            del self._occupants[flat]
            self.nodes[flat].usage = False

    def occupied_by(self, idx: MazeIndex) -> frozenset[int]:
        return frozenset(self._occupants.get(self.flat(idx), ()))

    def occupied_flats(self) -> dict[int, frozenset[int]]:
        return {flat: frozenset(nets) for flat, nets in self._occupants.items()}

    def usage_bytes(self) -> bytes:
        return bytes(1 if n.usage else 0 for n in self.nodes)

    # -- edge costs ---------------------------------------------------------

    def add_history_cost(self, edge: tuple[MazeIndex, Direction], delta: int) -> None:
        """Raise the search cost of an undirected edge by delta half-units."""
        idx, d = edge
        if delta < 0:
            raise GridError("history delta must be non-negative")
        if not self.in_bounds(idx):
            raise GridError(f"nonexistent edge: {idx} out of bounds")
        nxt = self.shift(idx, d)
        if nxt is None:
            raise GridError(f"nonexistent edge: {idx} has no neighbour {d.name}")
        key = self._edge_key(self.flat(idx), self.flat(nxt))
        self._history[key] = self._history.get(key, 0) + delta

    @staticmethod
    def _edge_key(a: int, b: int) -> tuple[int, int]:
        return (a, b) if a < b else (b, a)

    def history_between(self, a: MazeIndex, b: MazeIndex) -> int:
        return self._history.get(self._edge_key(self.flat(a), self.flat(b)), 0)

    def edge_cost(self, idx: MazeIndex, d: Direction) -> int:
        """Effective half-unit cost of stepping from idx in direction d.

        Symmetric in the two endpoints: max of the endpoint-facing base
        costs plus the edge's history penalty.
        """
        nxt = self.shift(idx, d)
        if nxt is None:
            raise GridError(f"nonexistent edge: {idx} has no neighbour {d.name}")
        a = self.nodes[self.flat(idx)]
        b = self.nodes[self.flat(nxt)]
        base = max(a.cost[d.value], b.cost[d.opposite.value])
        return base + self._history.get(self._edge_key(self.flat(idx), self.flat(nxt)), 0)

    def min_axis_costs(self) -> tuple[int, int, int]:
        """Per-axis lower bounds on any single-step cost (admissible heuristic input)."""
        best = [None, None, None]  # x, y, z
        pairs = ((Direction.EAST, Direction.WEST, 0), (Direction.NORTH, Direction.SOUTH, 1), (Direction.UP, Direction.DOWN, 2))
        for node in self.nodes:
            for dpos, dneg, axis in pairs:
                m = min(node.cost[dpos.value], node.cost[dneg.value])
                if best[axis] is None or m < best[axis]:
                    best[axis] = m
        return tuple(0 if b is None else b for b in best)  # type: ignore[return-value]


def build_grid(region, weights: CostWeights | None = None) -> GridGraph:
    """Materialise a region descriptor into a grid graph.

    Base edge costs come from the weights: planar steps cost wl_half per
    DBU of pitch, vertical steps cost via_half.
    """
    w = weights or CostWeights()
    region.validate()
    g = GridGraph(GridDim(*region.dim), pitch=region.pitch, origin=region.origin)
    ew = w.wl_half * region.pitch[0]
    ns = w.wl_half * region.pitch[1]
    ud = w.via_half
    base = [ud, ud, ns, ns, ew, ew]
    for node in g.nodes:
        node.cost = list(base)
    for idx in region.blockages:
        g.node_at(idx).node_type = NodeType.BLOCKAGE
    for net in region.nets:
        for pin in net.pins:
            for ap in pin.access_points:
                node = g.node_at(ap)
                if node.node_type is NodeType.ACCESS:
                    raise GridError(f"duplicate maze_index for access points: {ap}")
                if node.node_type is NodeType.BLOCKAGE:
                    raise GridError(f"access point on blockage: {ap}")
                node.node_type = NodeType.ACCESS
                node.net = net.net_id
                node.pin = pin.pin_id
    return g

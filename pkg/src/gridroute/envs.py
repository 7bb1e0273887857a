"""The two MDP environments: net ordering and single-net path building.

Both follow the reset / step(action) -> (observation, reward, done)
lifecycle. Rewards are computed in exact integer half-units internally
and returned as real-unit floats (always an exact multiple of 0.5).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from . import drc, metrics
from .grid import Direction, GridGraph, MazeIndex, NodeType, build_grid
from .metrics import CostWeights, MetricsSnapshot
from .regions import RegionDescriptor, net_hpwl
from .router import RoutedNet, ripup, route_net

BLOCKED_COST = 2**31 - 1  # sentinel for untraversable edges in observations

MODES = ("trainer", "validator")


class IllegalActionError(Exception):
    """Action outside the current action set; episode state is unchanged."""


class EpisodeDoneError(Exception):
    """step() called on a finished episode."""


@dataclass
class OrderingObservation:
    dim: tuple[int, int, int]
    pitch: tuple[int, int]
    origin: tuple[int, int]
    obstacles: np.ndarray                  # (dx, dy, dz) 0/1
    nets: dict[int, np.ndarray]            # net id -> (7, dx, dy, dz) 0/1
    action_set: tuple[int, ...]
    done: bool

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OrderingObservation):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.pitch == other.pitch
            and self.origin == other.origin
            and self.action_set == other.action_set
            and self.done == other.done
            and np.array_equal(self.obstacles, other.obstacles)
            and self.nets.keys() == other.nets.keys()
            and all(np.array_equal(self.nets[k], other.nets[k]) for k in self.nets)
        )

    def to_payload(self) -> dict:
        return {
            "dim": list(self.dim),
            "pitch": list(self.pitch),
            "origin": list(self.origin),
            "obstacles": self.obstacles.tolist(),
            "nets": {str(k): v.tolist() for k, v in sorted(self.nets.items())},
            "action_set": list(self.action_set),
            "done": self.done,
        }


@dataclass
class RoutingObservation:
    """12 entries: head xyz, lattice delta to the target pin, six edge costs."""

    vector: np.ndarray
    dim: tuple[int, int, int]
    pitch: tuple[int, int]
    done: bool

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RoutingObservation):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.pitch == other.pitch
            and self.done == other.done
            and np.array_equal(self.vector, other.vector)
        )

    def to_payload(self) -> dict:
        return {
            "vector": [int(v) for v in self.vector],
            "dim": list(self.dim),
            "pitch": list(self.pitch),
            "done": self.done,
        }


class OrderingEnv:
    """Pick-the-next-net episodes over one region.

    Each step routes the chosen net with the deterministic router and pays
    the exact cost delta as reward. Opens join the violation count only on
    the final step, when every net has been given its chance.
    """

    def __init__(
        self,
        region: RegionDescriptor,
        mode: str = "trainer",
        seed: int = 0,
        weights: CostWeights | None = None,
        drc_config: drc.DrcConfig | None = None,
        permissive: bool = False,
        overlap_penalty: int | None = None,
    ):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        region.validate()
        self.region = region
        self.mode = mode
        self.seed = seed
        self.weights = weights or CostWeights()
        self.drc_config = drc_config or drc.DrcConfig()
        self.permissive = permissive
        self.overlap_penalty = overlap_penalty
        self.reset()

    def reset(self) -> OrderingObservation:
        self.grid: GridGraph = build_grid(self.region, self.weights)
        self.remaining: set[int] = set(self.region.net_ids())
        self.routed: dict[int, RoutedNet] = {}
        self.snapshot = MetricsSnapshot()
        self.violations: list[drc.Violation] = []
        self.steps = 0
        self.total_reward_half = 0
        self._runtime = 0.0
        return self.observe()

    @property
    def done(self) -> bool:
        return not self.remaining

    def _recompute_snapshot(self, include_open: bool) -> MetricsSnapshot:
        routed = list(self.routed.values())
        self.violations = drc.run_checks(self.grid, routed, self.drc_config, include_open)
        return MetricsSnapshot(
            wirelength=sum(r.wirelength(self.grid.pitch) for r in routed),
            via_count=sum(r.via_count for r in routed),
            drv_count=len(self.violations),
            runtime=self._runtime,
        )

    def step(self, action: int) -> tuple[OrderingObservation, float, bool]:
        if self.done:
            raise EpisodeDoneError("all nets are already routed")
        if action not in self.remaining:
            raise IllegalActionError(f"net {action} is not in the remaining set")
        t0 = time.perf_counter()
        before = metrics.cost(self.snapshot, self.weights)
        routed = route_net(
            self.grid,
            self.region.net(action),
            self.weights,
            permissive=self.permissive,
            overlap_penalty=self.overlap_penalty,
        )
        self.routed[action] = routed
        self.remaining.discard(action)
        self.steps += 1
        self._runtime += time.perf_counter() - t0
        self.snapshot = self._recompute_snapshot(include_open=self.done)
        reward_half = before - metrics.cost(self.snapshot, self.weights)
        self.total_reward_half += reward_half
        return self.observe(), reward_half / 2, self.done

    def observe(self) -> OrderingObservation:
        dx, dy, dz = self.region.dim
        obstacles = np.zeros((dx, dy, dz), dtype=np.int8)
        for node in self.grid.nodes:
            if node.usage or node.node_type in (NodeType.BLOCKAGE, NodeType.NOTEXIST):
                obstacles[node.maze_index] = 1
        nets: dict[int, np.ndarray] = {}
        for net_id in sorted(self.remaining):
            arr = np.zeros((7, dx, dy, dz), dtype=np.int8)
            for ap in self.region.net(net_id).access_points():
                ix, iy, iz = ap.maze_index
                arr[0, ix, iy, iz] = 1
                for d in Direction:
                    nxt = self.grid.shift(ap.maze_index, d)
                    if nxt is None:
                        continue
                    nb = self.grid.node_at(nxt)
                    if nb.node_type is NodeType.ACCESS and nb.net == ap.net and nb.pin == ap.pin:
                        arr[1 + d.value, ix, iy, iz] = 1
            nets[net_id] = arr
        return OrderingObservation(
            dim=self.region.dim,
            pitch=self.region.pitch,
            origin=self.region.origin,
            obstacles=obstacles,
            nets=nets,
            action_set=tuple(sorted(self.remaining)),
            done=self.done,
        )


@dataclass(frozen=True)
class RoutingAction:
    d: int
    s: int = 1
    start: MazeIndex | None = None


def _parse_routing_action(action) -> RoutingAction:
    if isinstance(action, RoutingAction):
        return action
    if isinstance(action, (int, np.integer)):
        return RoutingAction(int(action))
    if isinstance(action, dict):
        start = action.get("start")
        return RoutingAction(
            int(action["d"]),
            int(action.get("s", 1)),
            tuple(start) if start is not None else None,
        )
    if isinstance(action, (tuple, list)):
        if len(action) == 1:
            return RoutingAction(int(action[0]))
        if len(action) == 2:
            return RoutingAction(int(action[0]), int(action[1]))
        if len(action) == 3:
            d, s, start = action
            return RoutingAction(int(d), int(s), tuple(start) if start is not None else None)
    raise IllegalActionError(f"unparseable routing action: {action!r}")


class RoutingEnv:
    """Grow one net's path step by step inside a region.

    The walk pays for every unit move it makes, revisits included, so any
    unfruitful action strictly lowers the cumulative reward. The episode
    truncates before the cumulative reward could fall to the t_min floor.
    """

    def __init__(
        self,
        region: RegionDescriptor,
        net_id: int,
        seed: int = 0,
        weights: CostWeights | None = None,
    ):
        region.validate()
        self.region = region
        self.net = region.net(net_id)
        self.seed = seed
        self.weights = weights or CostWeights()
        self.hpwl_dbu = net_hpwl(region, net_id)
        self.t_min_half = metrics.t_min(self.hpwl_dbu, self.net.pin_count)
        self.reset()

    def reset(self) -> RoutingObservation:
        self.grid = build_grid(self.region, self.weights)
        self.head: MazeIndex = self.net.pins[0].access_points[0]
        self.walk: list[MazeIndex] = [self.head]
        self._walk_set = {self.head}
        self.grid.occupy_path(self.net.net_id, [self.head])
        self.connected: set[int] = {self.net.pins[0].pin_id}
        self.cumulative_half = 0
        self.steps = 0
        self.walk_wirelength = 0
        self.walk_vias = 0
        self.completed = self.net.pin_count == 1
        self.truncated = False
        self.illegal = False
        self.done = self.completed
        return self.observe()

    def _legal(self, idx: MazeIndex | None) -> bool:
        if idx is None:
            return False
        node = self.grid.node_at(idx)
        if node.node_type in (NodeType.BLOCKAGE, NodeType.NOTEXIST):
            return False
        if node.node_type is NodeType.ACCESS and node.net != self.net.net_id:
            return False
        return not (self.grid.occupied_by(idx) - {self.net.net_id})

    def _step_cost_half(self, d: Direction) -> tuple[int, int, int]:
        """(half-unit cost, wirelength DBU, vias) of one unit move."""
        if d.is_vertical:
            return self.weights.via_half, 0, 1
        px, py = self.grid.pitch
        dbu = px if d in (Direction.EAST, Direction.WEST) else py
        return self.weights.wl_half * dbu, dbu, 0

    def step(self, action) -> tuple[RoutingObservation, float, bool]:
        if self.done:
            raise EpisodeDoneError("routing episode is finished")
        self.steps += 1
        try:
            act = _parse_routing_action(action)
        except IllegalActionError:
            self.illegal = True
            self.done = True
            return self.observe(), 0.0, True
        if not (0 <= act.d <= 5) or act.s < 1:
            self.illegal = True
            self.done = True
            return self.observe(), 0.0, True
        if act.start is not None and act.start not in self._walk_set:
            self.illegal = True
            self.done = True
            return self.observe(), 0.0, True

        cur = act.start if act.start is not None else self.head
        d = Direction(act.d)
        delta_half = 0
        applied = 0
        for _ in range(act.s):
            nxt = self.grid.shift(cur, d)
            if not self._legal(nxt):
                self.illegal = True
                self.done = True
                break
            step_half, step_dbu, step_via = self._step_cost_half(d)
            # a unit move that would sink the cumulative reward to the
            # floor is refused: the episode truncates instead
            if self.cumulative_half - delta_half - step_half <= self.t_min_half:
                self.truncated = True
                self.done = True
                break
            cur = nxt
            applied += 1
            delta_half += step_half
            self.walk_wirelength += step_dbu
            self.walk_vias += step_via
            self.walk.append(cur)
            self._walk_set.add(cur)
            self.grid.occupy_path(self.net.net_id, [cur])
            node = self.grid.node_at(cur)
            if (
                node.node_type is NodeType.ACCESS
                and node.net == self.net.net_id
                and node.pin not in self.connected
            ):
                self.connected.add(node.pin)
                if len(self.connected) == self.net.pin_count:
                    self.completed = True
                    self.done = True
                    break

        if applied:
            self.head = cur
        if self.completed:
            reward_half = metrics.routing_reward(
                MetricsSnapshot(), MetricsSnapshot(), True, self.hpwl_dbu, self.weights
            )
        else:
            reward_half = -delta_half
        self.cumulative_half += reward_half
        return self.observe(), reward_half / 2, self.done

    def snapshot(self) -> MetricsSnapshot:
        open_count = 0 if self.completed or not self.done else 1
        return MetricsSnapshot(
            wirelength=self.walk_wirelength, via_count=self.walk_vias, drv_count=open_count
        )

    def _target_delta(self) -> tuple[int, int, int]:
        pendings = [p for p in self.net.pins if p.pin_id not in self.connected]
        if not pendings:
            return (0, 0, 0)
        px, py = self.grid.pitch

        def l1(a: MazeIndex, b: MazeIndex) -> int:
            return abs(a[0] - b[0]) * px + abs(a[1] - b[1]) * py + abs(a[2] - b[2])

        best_pin = min(pendings, key=lambda p: (min(l1(ap, self.head) for ap in p.access_points), p.pin_id))
        best_ap = min(best_pin.access_points, key=lambda ap: l1(ap, self.head))
        return (
            best_ap[0] - self.head[0],
            best_ap[1] - self.head[1],
            best_ap[2] - self.head[2],
        )

    def observe(self) -> RoutingObservation:
        delta = self._target_delta()
        edges = []
        for d in Direction:
            nxt = self.grid.shift(self.head, d)
            if self._legal(nxt):
                edges.append(self.grid.edge_cost(self.head, d))
            else:
                edges.append(BLOCKED_COST)
        vec = np.array([*self.head, *delta, *edges], dtype=np.int64)
        return RoutingObservation(
            vector=vec, dim=self.region.dim, pitch=self.region.pitch, done=self.done
        )


def _policy_order(policy, net_ids: Iterable[int], region: RegionDescriptor) -> list[int]:
    remaining = set(net_ids)
    order = []
    while remaining:
        choice = policy.select(remaining, region)
        if choice not in remaining:
            raise ValueError(f"policy chose net {choice} outside the remaining set")
        order.append(choice)
        remaining.discard(choice)
    return order


def rrr_iterate(
    region: RegionDescriptor,
    policy,
    iterations: int,
    weights: CostWeights | None = None,
    drc_config: drc.DrcConfig | None = None,
    overlap_penalty: int | None = None,
    history_increment: int = 2,
) -> list[MetricsSnapshot]:
    """Route permissively, then rip and reroute violating nets.

    Returns iterations + 1 snapshots: the initial routing pass plus one
    per rip-up round. Edges touching a violation gain history cost so
    reroutes drift away from contested resources.
    """
    snapshots, _ = rrr_run(
        region, policy, iterations, weights, drc_config, overlap_penalty, history_increment
    )
    return snapshots


def rrr_run(
    region: RegionDescriptor,
    policy,
    iterations: int,
    weights: CostWeights | None = None,
    drc_config: drc.DrcConfig | None = None,
    overlap_penalty: int | None = None,
    history_increment: int = 2,
) -> tuple[list[MetricsSnapshot], list[drc.Violation]]:
    """rrr_iterate plus the final iteration's violation list.

    Every round attempts a rip-up and reroute of the implicated nets and
    commits the attempt only when it does not worsen the weighted cost;
    a rejected attempt rolls back to the checkpoint but keeps the added
    history, so the next round explores a different routing.
    """
    if not 1 <= iterations <= 65:
        raise ValueError("iterations must be between 1 and 65")
    w = weights or CostWeights()
    cfg = drc_config or drc.DrcConfig()
    grid = build_grid(region, w)
    routed: dict[int, RoutedNet] = {}
    base_penalty = overlap_penalty if overlap_penalty is not None else w.drv_half

    def route_in_policy_order(net_ids: Iterable[int], penalty: int) -> None:
        for net_id in _policy_order(policy, net_ids, region):
            routed[net_id] = route_net(
                grid, region.net(net_id), w, permissive=True, overlap_penalty=penalty
            )

    def snap(runtime: float) -> tuple[MetricsSnapshot, list[drc.Violation]]:
        nets = list(routed.values())
        violations = drc.run_checks(grid, nets, cfg, include_open=True)
        return (
            MetricsSnapshot(
                wirelength=sum(r.wirelength(grid.pitch) for r in nets),
                via_count=sum(r.via_count for r in nets),
                drv_count=len(violations),
                runtime=runtime,
            ),
            violations,
        )

    def restore(checkpoint: dict[int, RoutedNet]) -> None:
        for net_id in list(routed):
            grid.release_net(net_id)
        routed.clear()
        for net_id, rn in checkpoint.items():
            routed[net_id] = rn
            grid.occupy_path(net_id, rn.nodes())

    t0 = time.perf_counter()
    route_in_policy_order(region.net_ids(), base_penalty)
    snapshot, violations = snap(time.perf_counter() - t0)
    snapshots = [snapshot]

    for it in range(1, iterations + 1):
        if not violations:
            snapshots.append(replace(snapshots[-1], runtime=0.0))
            continue
        t0 = time.perf_counter()
        checkpoint = dict(routed)
        best_cost = metrics.cost(snapshots[-1], w)
        hot_nodes = _violation_nodes(grid, violations, cfg)
        _escalate_history(grid, hot_nodes, history_increment)
        implicated = sorted({n for v in violations for n in v.nets})
        for net_id in implicated:
            if net_id in routed:
                ripup(grid, routed.pop(net_id))
        # overlap gets pricier every round, so avoidable conflicts drain
        # away while truly walled-in nets keep their (short) connection
        route_in_policy_order(implicated, base_penalty * (it + 1))
        snapshot, violations = snap(time.perf_counter() - t0)
        if metrics.cost(snapshot, w) > best_cost:
            restore(checkpoint)
            snapshot, violations = snap(snapshot.runtime)
        snapshots.append(snapshot)
    return snapshots, violations


def _violation_nodes(
    grid: GridGraph, violations: Sequence[drc.Violation], cfg: drc.DrcConfig
) -> set[MazeIndex]:
    nodes: set[MazeIndex] = set()
    for v in violations:
        if v.kind in (drc.ViolationKind.SHORT, drc.ViolationKind.MIN_AREA):
            nodes.add(v.location)  # type: ignore[arg-type]
    for a, b, _ in drc._spacing_pairs(grid, cfg.min_sep):
        nodes.add(a)
        nodes.add(b)
    return nodes


def _escalate_history(grid: GridGraph, hot_nodes: set[MazeIndex], increment: int) -> None:
    seen: set[tuple[int, int]] = set()
    for idx in sorted(hot_nodes):
        for d in Direction:
            nxt = grid.shift(idx, d)
            if nxt is None:
                continue
            key = grid._edge_key(grid.flat(idx), grid.flat(nxt))
            if key in seen:
                continue
            seen.add(key)
            grid.add_history_cost((idx, d), increment)

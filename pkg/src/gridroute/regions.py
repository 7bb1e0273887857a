"""Routing problem ingestion: region files, partitioning, generation, fixtures.

The region file format is line-oriented UTF-8:

    region <name>
    dim <dx> <dy> <dz>
    pitch <px> <py>
    origin <x> <y>
    blockage <ix> <iy> <iz>
    net <id>
    pin <pid> ap <ix> <iy> <iz> [ap <ix> <iy> <iz> ...]
    end

Comments run from ``#`` to end of line. Unknown keys are errors.
"""

from __future__ import annotations

import csv
import importlib.resources
import random
from dataclasses import dataclass, field
from typing import Iterator

from . import metrics
from .grid import MazeIndex

MAX_GENERATOR_RETRIES = 16


class RegionError(Exception):
    """Base class for region file and descriptor problems."""


class RegionSyntaxError(RegionError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class RegionSemanticError(RegionError):
    pass


class GenerationError(RegionError):
    pass


@dataclass(frozen=True)
class AccessPoint:
    maze_index: MazeIndex
    net: int
    pin: int


@dataclass
class PinSpec:
    pin_id: int
    access_points: list[MazeIndex]


@dataclass
class NetSpec:
    net_id: int
    pins: list[PinSpec]

    @property
    def pin_count(self) -> int:
        return len(self.pins)

    def access_points(self) -> Iterator[AccessPoint]:
        for pin in self.pins:
            for ap in pin.access_points:
                yield AccessPoint(ap, self.net_id, pin.pin_id)


@dataclass
class RegionDescriptor:
    """One routing problem: a lattice extent plus blockages and nets."""

    name: str
    dim: tuple[int, int, int]
    pitch: tuple[int, int] = (1, 1)
    origin: tuple[int, int] = (0, 0)
    blockages: list[MazeIndex] = field(default_factory=list)
    nets: list[NetSpec] = field(default_factory=list)
    # provenance; in-memory only, not part of the file format
    source: str = ""
    box: tuple[int, int, int, int] | None = None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RegionDescriptor):
            return NotImplemented
        return (
            self.name == other.name
            and self.dim == other.dim
            and self.pitch == other.pitch
            and self.origin == other.origin
            and self.blockages == other.blockages
            and self.nets == other.nets
        )

    @property
    def node_count(self) -> int:
        return self.dim[0] * self.dim[1] * self.dim[2]

    def in_bounds(self, idx: MazeIndex) -> bool:
        return all(0 <= idx[a] < self.dim[a] for a in range(3))

    def net_ids(self) -> list[int]:
        return [n.net_id for n in self.nets]

    def net(self, net_id: int) -> NetSpec:
        for n in self.nets:
            if n.net_id == net_id:
                return n
        raise RegionSemanticError(f"unknown net {net_id}")

    def point(self, idx: MazeIndex) -> tuple[int, int]:
        """Absolute (x, y) position of a node in DBU."""
        return (
            self.origin[0] + idx[0] * self.pitch[0],
            self.origin[1] + idx[1] * self.pitch[1],
        )

    def validate(self) -> None:
        if any(d < 1 for d in self.dim):
            raise RegionSemanticError(f"dimension mismatch: {self.dim}")
        if self.pitch[0] < 1 or self.pitch[1] < 1:
            raise RegionSemanticError(f"pitch must be positive: {self.pitch}")
        blocked = set()
        for idx in self.blockages:
            if not self.in_bounds(idx):
                raise RegionSemanticError(f"blockage out of bounds: {idx}")
            if idx in blocked:
                raise RegionSemanticError(f"duplicate blockage: {idx}")
            blocked.add(idx)
        seen_nets: set[int] = set()
        ap_nodes: set[MazeIndex] = set()
        for net in self.nets:
            if net.net_id in seen_nets:
                raise RegionSemanticError(f"duplicate net id {net.net_id}")
            seen_nets.add(net.net_id)
            if not net.pins:
                raise RegionSemanticError(f"net {net.net_id} has no pins")
            pin_ids = [p.pin_id for p in net.pins]
            if pin_ids != list(range(len(pin_ids))):
                raise RegionSemanticError(
                    f"net {net.net_id}: pin ids must be dense from 0, got {pin_ids}"
                )
            for pin in net.pins:
                if not pin.access_points:
                    raise RegionSemanticError(
                        f"net {net.net_id} pin {pin.pin_id} has no access points"
                    )
                for ap in pin.access_points:
                    if not self.in_bounds(ap):
                        raise RegionSemanticError(f"access point out of bounds: {ap}")
                    if ap in blocked:
                        raise RegionSemanticError(f"access point on blockage: {ap}")
                    if ap in ap_nodes:
                        raise RegionSemanticError(f"duplicate access point: {ap}")
                    ap_nodes.add(ap)


def net_hpwl(region: RegionDescriptor, net_id: int) -> int:
    """Half-perimeter wirelength of a net's access-point bounding box, in DBU."""
    net = region.net(net_id)
    return metrics.hpwl(region.point(ap.maze_index) for ap in net.access_points())


# -- parsing ---------------------------------------------------------------


def _ints(parts: list[str], n: int, line_no: int, key: str) -> list[int]:
    if len(parts) != n:
        raise RegionSyntaxError(line_no, f"'{key}' expects {n} integers")
    try:
        return [int(p) for p in parts]
    except ValueError:
        raise RegionSyntaxError(line_no, f"'{key}' expects integers, got {parts!r}") from None


def parse_region(text: str | bytes) -> RegionDescriptor:
    """Parse a region file; raises RegionSyntaxError / RegionSemanticError."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise RegionSyntaxError(0, f"not valid UTF-8: {exc}") from None

    name: str | None = None
    dim: tuple[int, int, int] | None = None
    pitch = (1, 1)
    origin = (0, 0)
    blockages: list[MazeIndex] = []
    nets: list[NetSpec] = []
    current_net: NetSpec | None = None
    ended = False

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ended:
            raise RegionSyntaxError(line_no, "content after 'end'")
        parts = line.split()
        key, rest = parts[0], parts[1:]
        if key == "region":
            if name is not None:
                raise RegionSyntaxError(line_no, "duplicate 'region' line")
            if len(rest) != 1:
                raise RegionSyntaxError(line_no, "'region' expects one name")
            name = rest[0]
        elif name is None:
            raise RegionSyntaxError(line_no, "file must start with a 'region' line")
        elif key == "dim":
            if dim is not None:
                raise RegionSyntaxError(line_no, "duplicate 'dim' line")
            dim = tuple(_ints(rest, 3, line_no, "dim"))  # type: ignore[assignment]
        elif key == "pitch":
            pitch = tuple(_ints(rest, 2, line_no, "pitch"))  # type: ignore[assignment]
        elif key == "origin":
            origin = tuple(_ints(rest, 2, line_no, "origin"))  # type: ignore[assignment]
        elif key == "blockage":
            blockages.append(tuple(_ints(rest, 3, line_no, "blockage")))  # type: ignore[arg-type]
        elif key == "net":
            ids = _ints(rest, 1, line_no, "net")
            current_net = NetSpec(ids[0], [])
            nets.append(current_net)
        elif key == "pin":
            if current_net is None:
                raise RegionSyntaxError(line_no, "'pin' before any 'net'")
            if len(rest) < 5 or (len(rest) - 1) % 4 != 0:
                raise RegionSyntaxError(line_no, "'pin' expects: pin <pid> ap <ix> <iy> <iz> [ap ...]")
            try:
                pid = int(rest[0])
            except ValueError:
                raise RegionSyntaxError(line_no, f"bad pin id {rest[0]!r}") from None
            aps: list[MazeIndex] = []
            for i in range(1, len(rest), 4):
                if rest[i] != "ap":
                    raise RegionSyntaxError(line_no, f"expected 'ap', got {rest[i]!r}")
                aps.append(tuple(_ints(rest[i + 1 : i + 4], 3, line_no, "ap")))  # type: ignore[arg-type]
            current_net.pins.append(PinSpec(pid, aps))
        elif key == "end":
            if rest:
                raise RegionSyntaxError(line_no, "'end' takes no arguments")
            ended = True
        else:
            raise RegionSyntaxError(line_no, f"unknown key {key!r}")

    if name is None:
        raise RegionSyntaxError(0, "empty region file")
    if dim is None:
        raise RegionSyntaxError(0, "missing 'dim' line")
    if not ended:
        raise RegionSyntaxError(0, "missing 'end' line")

    region = RegionDescriptor(name, dim, pitch, origin, blockages, nets)
    region.validate()
    return region


def serialize_region(region: RegionDescriptor) -> str:
    """Region file text for a descriptor; parse(serialize(r)) == r."""
    lines = [
        f"region {region.name}",
        f"dim {region.dim[0]} {region.dim[1]} {region.dim[2]}",
        f"pitch {region.pitch[0]} {region.pitch[1]}",
        f"origin {region.origin[0]} {region.origin[1]}",
    ]
    for idx in region.blockages:
        lines.append(f"blockage {idx[0]} {idx[1]} {idx[2]}")
    for net in region.nets:
        lines.append(f"net {net.net_id}")
        for pin in net.pins:
            aps = " ".join(f"ap {a[0]} {a[1]} {a[2]}" for a in pin.access_points)
            lines.append(f"pin {pin.pin_id} {aps}")
    lines.append("end")
    return "\n".join(lines) + "\n"


# -- partitioning ----------------------------------------------------------


def partition_design(design_dim: tuple[int, int], clip_size: int) -> list[tuple[int, int, int, int]]:
    """Split a GCell grid into half-open boxes (x0, y0, x1, y1), row-major.

    Interior boxes are clip_size square; edge boxes are clipped, never padded.
    """
    if clip_size < 1:
        raise ValueError("clip_size must be >= 1")
    gx, gy = design_dim
    boxes = []
    for y0 in range(0, gy, clip_size):
        for x0 in range(0, gx, clip_size):
            boxes.append((x0, y0, min(x0 + clip_size, gx), min(y0 + clip_size, gy)))
    return boxes


def crop_region(region: RegionDescriptor, box: tuple[int, int, int, int]) -> RegionDescriptor:
    """Sub-region covering a half-open (x0, y0, x1, y1) node box.

    Nets are kept only when every access point falls inside the box;
    cross-boundary stitching is out of scope.
    """
    x0, y0, x1, y1 = box
    if not (0 <= x0 < x1 <= region.dim[0] and 0 <= y0 < y1 <= region.dim[1]):
        raise RegionSemanticError(f"crop box {box} outside region dim {region.dim}")

    def inside(idx: MazeIndex) -> bool:
        return x0 <= idx[0] < x1 and y0 <= idx[1] < y1

    def shifted(idx: MazeIndex) -> MazeIndex:
        return (idx[0] - x0, idx[1] - y0, idx[2])

    nets = []
    for net in region.nets:
        if all(inside(ap) for pin in net.pins for ap in pin.access_points):
            nets.append(
                NetSpec(net.net_id, [PinSpec(p.pin_id, [shifted(a) for a in p.access_points]) for p in net.pins])
            )
    cropped = RegionDescriptor(
        name=f"{region.name}@{x0},{y0}",
        dim=(x1 - x0, y1 - y0, region.dim[2]),
        pitch=region.pitch,
        origin=(region.origin[0] + x0 * region.pitch[0], region.origin[1] + y0 * region.pitch[1]),
        blockages=[shifted(b) for b in region.blockages if inside(b)],
        nets=nets,
        source=region.source,
    )
    cropped.validate()
    return cropped


def sparsity(total_nodes: int, net_count: int) -> float:
    """Grid nodes per net; a difficulty proxy (higher is easier)."""
    if net_count < 1:
        raise ValueError("sparsity undefined for zero nets")
    return total_nodes / net_count


# -- generation ------------------------------------------------------------


@dataclass(frozen=True)
class GeneratorParams:
    dim: tuple[int, int, int] = (6, 6, 2)
    net_count: int = 4
    pins_per_net: tuple[int, int] = (2, 2)
    aps_per_pin: tuple[int, int] = (1, 1)
    blockage_density: float = 0.0
    pitch: tuple[int, int] = (1, 1)
    origin: tuple[int, int] = (0, 0)


def generate_region(seed: int, params: GeneratorParams | None = None) -> RegionDescriptor:
    """Deterministically sample a valid region for the given seed."""
    p = params or GeneratorParams()
    last_error: Exception | None = None
    for attempt in range(MAX_GENERATOR_RETRIES):
        rng = random.Random(seed * 1000003 + attempt)
        try:
            region = _generate_once(seed, p, rng)
        except GenerationError as exc:
            last_error = exc
            continue
        region.validate()
        return region
    raise GenerationError(f"unsatisfiable generator params after {MAX_GENERATOR_RETRIES} retries: {last_error}")


def _generate_once(seed: int, p: GeneratorParams, rng: random.Random) -> RegionDescriptor:
    dx, dy, dz = p.dim
    all_nodes = [(ix, iy, iz) for iz in range(dz) for iy in range(dy) for ix in range(dx)]
    n_block = int(round(p.blockage_density * len(all_nodes)))
    blockages = sorted(rng.sample(all_nodes, n_block))
    free = [n for n in all_nodes if n not in set(blockages)]
    rng.shuffle(free)

    nets = []
    cursor = 0
    for net_id in range(p.net_count):
        pins = []
        n_pins = rng.randint(*p.pins_per_net)
        for pid in range(n_pins):
            n_aps = rng.randint(*p.aps_per_pin)
            if cursor + n_aps > len(free):
                raise GenerationError(
                    f"not enough free nodes for net {net_id} (need {n_aps}, have {len(free) - cursor})"
                )
            pins.append(PinSpec(pid, [free[cursor + k] for k in range(n_aps)]))
            cursor += n_aps
        nets.append(NetSpec(net_id, pins))

    return RegionDescriptor(
        name=f"gen{seed}",
        dim=p.dim,
        pitch=p.pitch,
        origin=p.origin,
        blockages=blockages,
        nets=nets,
    )


# -- fixtures ----------------------------------------------------------------


def fig1_fixture() -> RegionDescriptor:
    """Order-sensitive four-net region on two layers.

    Nets 3 and 4 need the middle row; nets 1 and 2, routed greedily first,
    cut it and strand them. Routed as 3, 4, 1, 2 everything fits: nets 1
    and 2 take the two spare crossings at x = 3 and x = 4.
    """
    dx, dy, dz = 8, 3, 2
    blockages = [(ix, iy, 1) for iy in range(dy) for ix in range(dx)]
    nets = [
        NetSpec(1, [PinSpec(0, [(1, 0, 0)]), PinSpec(1, [(1, 2, 0)])]),
        NetSpec(2, [PinSpec(0, [(6, 0, 0)]), PinSpec(1, [(6, 2, 0)])]),
        NetSpec(3, [PinSpec(0, [(0, 1, 0)]), PinSpec(1, [(2, 1, 0)])]),
        NetSpec(4, [PinSpec(0, [(5, 1, 0)]), PinSpec(1, [(7, 1, 0)])]),
    ]
    region = RegionDescriptor(
        name="fig1",
        dim=(dx, dy, dz),
        pitch=(2, 2),
        origin=(0, 0),
        blockages=blockages,
        nets=nets,
        source="order-sensitivity fixture",
    )
    region.validate()
    return region


# -- benchmark metadata -------------------------------------------------------

BENCHMARK_CSV_HEADER = ["name", "source", "size", "nets", "pins", "sparsity", "llx", "lly", "urx", "ury"]


@dataclass(frozen=True)
class BenchmarkRow:
    name: str
    source: str
    size: str
    nets: int
    pins: int
    sparsity: float
    box: tuple[int, int, int, int]

    def __post_init__(self) -> None:
        if self.sparsity <= 0:
            raise RegionSemanticError(f"sparsity must be > 0: {self.sparsity}")
        if self.nets < 0 or self.pins < 0:
            raise RegionSemanticError("counts must be >= 0")


def load_benchmark_rows(path: str | None = None) -> list[BenchmarkRow]:
    """Read benchmark metadata CSV; defaults to the packaged static-region table."""
    if path is None:
        ref = importlib.resources.files("gridroute").joinpath("data/static_regions.csv")
        text = ref.read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    rows = []
    reader = csv.DictReader(text.splitlines())
    if reader.fieldnames != BENCHMARK_CSV_HEADER:
        raise RegionSemanticError(f"bad benchmark CSV header: {reader.fieldnames}")
    for rec in reader:
        rows.append(
            BenchmarkRow(
                name=rec["name"],
                source=rec["source"],
                size=rec["size"],
                nets=int(rec["nets"]),
                pins=int(rec["pins"]),
                sparsity=float(rec["sparsity"]),
                box=(int(rec["llx"]), int(rec["lly"]), int(rec["urx"]), int(rec["ury"])),
            )
        )
    return rows

"""Batch router, benchmark harness and server launcher.

Exit codes: 0 clean, 1 routing finished with violations, 2 usage or
input errors, 3 server bind failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path

from . import __version__, drc, metrics
from .envs import rrr_run
from .metrics import CostWeights, MetricsSnapshot
from .policies import (
    MAX_EXHAUSTIVE_NETS,
    POLICY_NAMES,
    FixedOrderPolicy,
    exhaustive_best_order,
    make_policy,
)
from .protocol import EnvServer, ReportSink, ServerConfig
from .regions import (
    GeneratorParams,
    RegionDescriptor,
    RegionError,
    fig1_fixture,
    generate_region,
    parse_region,
    serialize_region,
)

TREND_HEADER = ["iteration", "wirelength", "vias", "drv", "cost_half", "cost"]
SUMMARY_HEADER = [
    "name",
    "policy",
    "iterations",
    "wirelength",
    "vias",
    "drv_open",
    "drv_short",
    "drv_spacing",
    "drv_min_area",
    "drv_total",
    "runtime_s",
]
BENCH_HEADER = [
    "region",
    "policy",
    "status",
    "wirelength",
    "vias",
    "drv_open",
    "drv_short",
    "drv_spacing",
    "drv_min_area",
    "drv_total",
    "cost_half",
    "cost",
]


def _iteration_count(value: str) -> int:
    n = int(value)
    if not 1 <= n <= 65:
        raise argparse.ArgumentTypeError("iteration count must be between 1 and 65")
    return n


def _load_region_paths(spec: str) -> list[Path]:
    p = Path(spec)
    if p.is_dir():
        return sorted(p.glob("*.region"))
    if p.suffix == ".region":
        return [p]
    if p.is_file():
        base = p.parent
        out = []
        for line in p.read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                out.append((base / line) if not Path(line).is_absolute() else Path(line))
        return out
    raise FileNotFoundError(f"no such region set: {spec}")


def _load_regions(spec: str) -> list[RegionDescriptor]:
    regions = []
    for path in _load_region_paths(spec):
        regions.append(parse_region(path.read_text(encoding="utf-8")))
    if not regions:
        raise RegionError(f"region set {spec!r} is empty")
    return regions


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")


def _write_manifest(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _trend_rows(snapshots: list[MetricsSnapshot], weights: CostWeights) -> list[list]:
    rows = []
    for i, snap in enumerate(snapshots):
        half = metrics.cost(snap, weights)
        rows.append([i, snap.wirelength, snap.via_count, snap.drv_count, half, half / 2])
    return rows


def _resolve_policy(name: str, seed: int, region: RegionDescriptor):
    if name == "exhaustive":
        if len(region.nets) > MAX_EXHAUSTIVE_NETS:
            raise RegionError(
                f"exhaustive policy supports at most {MAX_EXHAUSTIVE_NETS} nets"
            )
        order, _ = exhaustive_best_order(region)
        return FixedOrderPolicy(order)
    return make_policy(name, seed)


def cmd_route(args: argparse.Namespace) -> int:
    try:
        region = parse_region(Path(args.region).read_text(encoding="utf-8"))
        policy = _resolve_policy(args.policy, args.seed, region)
    except (OSError, RegionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    cfg = drc.DrcConfig(min_sep=args.min_sep, min_area_len=args.min_area)
    t0 = time.perf_counter()
    snapshots, violations = rrr_run(region, policy, args.iterations, drc_config=cfg)
    runtime = time.perf_counter() - t0
    weights = CostWeights()
    final = snapshots[-1]
    kinds = drc.count_by_kind(violations)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(
        out / "summary.csv",
        SUMMARY_HEADER,
        [[
            region.name,
            args.policy,
            args.iterations,
            final.wirelength,
            final.via_count,
            kinds["open"],
            kinds["short"],
            kinds["spacing"],
            kinds["min_area"],
            final.drv_count,
            f"{runtime:.3f}",
        ]],
    )
    _write_csv(out / "trend.csv", TREND_HEADER, _trend_rows(snapshots, weights))
    _write_csv(
        out / "violations.csv",
        ["kind", "location", "nets"],
        [[v.kind.value, str(v.location), " ".join(map(str, v.nets))] for v in violations],
    )
    _write_manifest(
        out / "manifest.json",
        {
            "version": __version__,
            "command": "route",
            "region": region.name,
            "policy": args.policy,
            "iterations": args.iterations,
            "seed": args.seed,
            "files": ["summary.csv", "trend.csv", "violations.csv"],
        },
    )
    print(
        f"{region.name}: policy={args.policy} wirelength={final.wirelength} "
        f"vias={final.via_count} drv={final.drv_count} ({runtime:.3f}s)"
    )
    return 0 if final.drv_count == 0 else 1


def cmd_bench(args: argparse.Namespace) -> int:
    weights = CostWeights()
    cfg = drc.DrcConfig(min_sep=args.min_sep, min_area_len=args.min_area)
    try:
        if args.generate:
            params = GeneratorParams(
                dim=tuple(args.gen_dim),
                net_count=args.gen_nets,
                pins_per_net=(args.gen_pins[0], args.gen_pins[1]),
                blockage_density=args.gen_blockage,
            )
            regions = [generate_region(args.seed + i, params) for i in range(args.generate)]
        else:
            if not args.regions:
                print("error: provide --regions or --generate", file=sys.stderr)
                return 2
            regions = _load_regions(args.regions)
    except (OSError, RegionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    policy_names = [p.strip() for p in args.policies.split(",") if p.strip()]
    out = Path(args.out)
    (out / "trend").mkdir(parents=True, exist_ok=True)

    bench_rows = []
    timing_rows = []
    failures = 0
    for region in regions:
        for name in policy_names:
            t0 = time.perf_counter()
            try:
                policy = _resolve_policy(name, args.seed, region)
                snapshots, violations = rrr_run(
                    region, policy, args.iterations, drc_config=cfg
                )
            except Exception as exc:  # a bad region must not sink the whole run
                failures += 1
                bench_rows.append([region.name, name, f"error: {exc}"] + [""] * 9)
                timing_rows.append([region.name, name, f"{time.perf_counter() - t0:.3f}"])
                continue
            runtime = time.perf_counter() - t0
            final = snapshots[-1]
            kinds = drc.count_by_kind(violations)
            half = metrics.cost(final, weights)
            bench_rows.append(
                [
                    region.name,
                    name,
                    "ok",
                    final.wirelength,
                    final.via_count,
                    kinds["open"],
                    kinds["short"],
                    kinds["spacing"],
                    kinds["min_area"],
                    final.drv_count,
                    half,
                    half / 2,
                ]
            )
            timing_rows.append([region.name, name, f"{runtime:.3f}"])
            _write_csv(
                out / "trend" / f"{region.name}__{name}.csv",
                TREND_HEADER,
                _trend_rows(snapshots, weights),
            )

    _write_csv(out / "bench.csv", BENCH_HEADER, bench_rows)
    # wall-clock timings are intentionally kept out of the deterministic set
    _write_csv(out / "timings.csv", ["region", "policy", "runtime_s"], timing_rows)
    _write_manifest(
        out / "manifest.json",
        {
            "version": __version__,
            "command": "bench",
            "policies": policy_names,
            "iterations": args.iterations,
            "seed": args.seed,
            "regions": [r.name for r in regions],
            "deterministic_files": ["bench.csv", "manifest.json"]
            + sorted(f"trend/{p.name}" for p in (out / "trend").glob("*.csv")),
        },
    )
    print(f"bench: {len(bench_rows)} rows over {len(regions)} regions -> {out}")
    return 0 if failures == 0 else 1


def cmd_serve(args: argparse.Namespace) -> int:
    try:
        regions = _load_regions(args.region_set) if args.region_set else []
    except (OSError, RegionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    sink = ReportSink(Path(args.out) / "episodes.csv") if args.out else None
    config = ServerConfig(
        regions=regions,
        mode=args.mode,
        seed=args.seed,
        clip_size=args.clip_size,
        clip_location=tuple(args.clip_location) if args.clip_location else None,
        clip_loop=args.clip_loop,
        region_set_loop=args.region_set_loop,
        iteration_count=args.iteration_count or 0,
        net_loop=args.net_loop,
        drc_config=drc.DrcConfig(min_sep=args.min_sep, min_area_len=args.min_area),
        report_sink=sink,
    )
    try:
        server = EnvServer(args.host, args.port, config, thread_count=args.thread_count)
    except OSError as exc:
        print(f"error: cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return 3
    print(f"listening on {server.host}:{server.port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.close()
    return 0


def cmd_gen(args: argparse.Namespace) -> int:
    if args.fixture:
        if args.fixture != "fig1":
            print(f"error: unknown fixture {args.fixture!r}", file=sys.stderr)
            return 2
        region = fig1_fixture()
    else:
        params = GeneratorParams(
            dim=tuple(args.dim),
            net_count=args.nets,
            pins_per_net=(args.pins[0], args.pins[1]),
            blockage_density=args.blockage_density,
            pitch=tuple(args.pitch),
        )
        region = generate_region(args.seed, params)
    text = serialize_region(region)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out} ({region.name}: {len(region.nets)} nets)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridroute", description=__doc__)
    parser.add_argument("--version", action="version", version=f"gridroute {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_route = sub.add_parser("route", help="route one region with rip-up and reroute")
    p_route.add_argument("--region", required=True, help="region file path")
    p_route.add_argument(
        "--policy", default="fifo", choices=list(POLICY_NAMES) + ["exhaustive"]
    )
    p_route.add_argument("--iterations", type=_iteration_count, default=3)
    p_route.add_argument("--seed", type=int, default=0)
    p_route.add_argument("--out", default="route_report")
    p_route.add_argument("--min-sep", type=int, default=0)
    p_route.add_argument("--min-area", type=int, default=0)
    p_route.set_defaults(func=cmd_route)

    p_bench = sub.add_parser("bench", help="compare policies across a region set")
    p_bench.add_argument("--regions", help="region file, directory, or list file")
    p_bench.add_argument("--generate", type=int, default=0, help="generate N seeded regions")
    p_bench.add_argument("--gen-dim", type=int, nargs=3, default=[7, 7, 2])
    p_bench.add_argument("--gen-nets", type=int, default=8)
    p_bench.add_argument("--gen-pins", type=int, nargs=2, default=[2, 3])
    p_bench.add_argument("--gen-blockage", type=float, default=0.05)
    p_bench.add_argument("--policies", default="fifo,most-pins,min-hpwl")
    p_bench.add_argument("--iterations", type=_iteration_count, default=3)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--out", default="bench_report")
    p_bench.add_argument("--min-sep", type=int, default=0)
    p_bench.add_argument("--min-area", type=int, default=0)
    p_bench.set_defaults(func=cmd_bench)

    p_serve = sub.add_parser("serve", help="serve environments over TCP")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=7788)
    p_serve.add_argument("--mode", choices=["trainer", "validator"], default="trainer")
    p_serve.add_argument("--region-set", help="region file, directory, or list file")
    p_serve.add_argument("--region-set-loop", type=int, default=0, help="0 = unlimited")
    p_serve.add_argument("--clip-size", type=int)
    p_serve.add_argument("--clip-location", type=int, nargs=2)
    p_serve.add_argument("--clip-loop", type=int, default=1)
    p_serve.add_argument("--iteration-count", type=_iteration_count, default=None)
    p_serve.add_argument("--thread-count", type=int, default=4)
    p_serve.add_argument("--net-loop", type=int, default=1)
    p_serve.add_argument("--seed", type=int, default=0)
    p_serve.add_argument("--out", help="directory for the episodes.csv completion log")
    p_serve.add_argument("--min-sep", type=int, default=0)
    p_serve.add_argument("--min-area", type=int, default=0)
    p_serve.set_defaults(func=cmd_serve)

    p_gen = sub.add_parser("gen", help="write a region file")
    p_gen.add_argument("--fixture", help="named fixture (fig1)")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--dim", type=int, nargs=3, default=[6, 6, 2])
    p_gen.add_argument("--nets", type=int, default=4)
    p_gen.add_argument("--pins", type=int, nargs=2, default=[2, 2])
    p_gen.add_argument("--blockage-density", type=float, default=0.0)
    p_gen.add_argument("--pitch", type=int, nargs=2, default=[1, 1])
    p_gen.add_argument("--out", default="-")
    p_gen.set_defaults(func=cmd_gen)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

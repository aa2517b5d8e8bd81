"""Command-line front end: gen-map, simulate, build, eval, bench."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import bench, evaluation, mapping, simulator, world
from .config import ConfigError, RunConfig, load_config, override

log = logging.getLogger("fastgpom")

ALGOS = {"gpom": "gpom", "fast": "fast_gpom", "fast_gpom": "fast_gpom"}


class CommandError(RuntimeError):
    """Runtime failure reported with exit code 1."""


def _run_config(args) -> RunConfig:
    return load_config(args.config) if getattr(args, "config", None) else RunConfig()


def _read_meta(pgm_path: Path) -> dict:
    meta_path = pgm_path.with_suffix(".meta")
    if not meta_path.exists():
        return {}
    meta = {}
    for line in meta_path.read_text().splitlines():
        if line.strip():
            key, _, value = line.partition(" ")
            meta[key] = value.strip()
    return meta


def _load_truth(path, resolution=None) -> world.GridMap:
    path = Path(path)
    meta = _read_meta(path)
    res = resolution if resolution is not None else float(meta.get("resolution", 0.05))
    return world.load_pgm(path, resolution=res)


def _parse_waypoints(text: str) -> list:
    points = []
    for chunk in text.replace(";", " ").split():
        try:
            x, y = (float(v) for v in chunk.split(","))
        except ValueError:
            raise ConfigError(f"bad waypoint {chunk!r}; expected x,y") from None
        points.append((x, y))
    return points


def _read_pose_file(path) -> list:
    poses = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            x, y, theta = (float(v) for v in line.replace(",", " ").split())
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: expected 'x y theta'") from None
        poses.append(world.Pose2D(x, y, theta))
    return poses


# ---------------------------------------------------------------------------
# commands


def cmd_gen_map(args) -> None:
    cfg = _run_config(args).simulation
    kind = args.kind or cfg.kind
    width = args.width or args.size or cfg.width
    height = args.height or args.size or cfg.height
    res = args.res if args.res is not None else cfg.resolution
    seed = args.seed if args.seed is not None else cfg.seed
    try:
        grid = simulator.generate_synthetic_map(kind, width, height, res, seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    world.save_pgm(grid, out / f"{kind}.pgm")
    (out / f"{kind}.meta").write_text(
        f"kind {kind}\nwidth {width}\nheight {height}\nresolution {res!r}\nseed {seed}\n")
    print(out / f"{kind}.pgm")


def _scanner(args, cfg: RunConfig) -> simulator.ScannerSpec:
    return override(cfg.scanner, beam_count=args.beams, max_range=args.max_range,
                    noise_mean=args.noise_mean, noise_std=args.noise_std)


def cmd_simulate(args) -> None:
    cfg = _run_config(args)
    grid = _load_truth(args.map, args.res)
    meta = _read_meta(Path(args.map))
    step = args.step if args.step is not None else cfg.simulation.step
    seed = args.seed if args.seed is not None else cfg.simulation.seed
    if args.pose_file or cfg.simulation.pose_file:
        poses = _read_pose_file(args.pose_file or cfg.simulation.pose_file)
    else:
        text = args.waypoints or cfg.simulation.waypoints
        if text:
            waypoints = _parse_waypoints(text)
        elif "kind" in meta:
            waypoints = simulator.synthetic_waypoints(meta["kind"], grid.width, grid.height,
                                                      grid.resolution, int(meta.get("seed", 0)))
        else:
            raise ConfigError("no trajectory: pass --waypoints or --pose-file")
        poses = simulator.interpolate_waypoints(waypoints, step)
    try:
        log_ = simulator.simulate_trajectory(grid, poses, _scanner(args, cfg), seed)
    except simulator.SimulationError as exc:
        raise CommandError(str(exc)) from None
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    simulator.write_scanlog(log_, out)
    print(f"{out}: {len(log_)} frames")


def _mapper(args, cfg: RunConfig) -> mapping.MapperConfig:
    return override(cfg.mapper, d=args.d, decimation=args.decimation,
                    window_width=args.window, window_height=args.window,
                    squash_denominator=args.squash,
                    optimize_hyperparams=False if args.fixed_params else None)


def _load_dataset(args):
    dataset = simulator.read_scanlog(args.log)
    if not dataset.frames:
        raise CommandError(f"{args.log}: scan log has no frames")
    truth = _load_truth(args.map, args.res)
    if abs(truth.resolution - dataset.map_resolution) > 1e-12:
        raise CommandError(f"map resolution {truth.resolution} does not match scan log "
                           f"resolution {dataset.map_resolution}")
    return dataset, truth


def _timing_outputs(out: Path, prefix: str, timings: dict) -> None:
    summaries = {k: bench.summarize(t) for k, t in timings.items()}
    bench.write_table(summaries, out / f"{prefix}timings.csv")
    bench.write_histogram(timings, out / f"{prefix}frames.csv")


def cmd_build(args) -> None:
    cfg = _run_config(args)
    dataset, truth = _load_dataset(args)
    config = _mapper(args, cfg)
    algo = ALGOS[args.algo]
    timings, state = bench.instrument(algo, dataset, truth.geometry, config)
    if not timings.records:
        raise CommandError("every frame failed or was skipped; no map produced")
    out = Path(args.output or cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    name = args.name or algo
    world.render_probability_png(mapping.squash_map(state), out / f"{name}.png")
    mapping.write_latent_dump(state, out / f"{name}.latent")
    _timing_outputs(out, f"{name}_", {(algo, Path(args.map).stem): timings})
    print(f"{out / name}.png ({len(timings)} frames)")


def cmd_eval(args) -> None:
    truth = _load_truth(args.truth, args.res)
    maps = {}
    for item in args.dump:
        name, sep, path = item.partition("=")
        if not sep:
            name, path = Path(item).stem, item
        geometry, _, _, prob = mapping.read_latent_dump(path)
        if not geometry.same_as(truth.geometry):
            raise CommandError(f"{path}: geometry does not match ground truth")
        maps[name] = prob
    rows = evaluation.auc_report(maps, truth)
    curves = {name: evaluation.roc_auc(evaluation.make_pairs(p, truth))[0] for name, p in maps.items()}
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    evaluation.write_auc_csv(rows, out / "auc.csv")
    evaluation.write_roc_csv(curves, out / "roc.csv")
    for row in rows:
        print(f"{row.name},{row.auc:.6f},{row.cells}")


def cmd_bench(args) -> None:
    cfg = _run_config(args)
    dataset, truth = _load_dataset(args)
    config = _mapper(args, cfg)
    map_name = Path(args.map).stem
    timings = {}
    for algo in ("gpom", "fast_gpom"):
        timings[(algo, map_name)], _ = bench.instrument(algo, dataset, truth.geometry, config)
    out = Path(args.output or cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    _timing_outputs(out, "bench_", timings)
    summaries = {k: bench.summarize(t) for k, t in timings.items()}
    print("step," + ",".join(f"{p}/{m}" for p, m in summaries))
    for step in bench.TIMED_STEPS:
        print(step + "," + ",".join(f"{s.mean(step):.3f}" for s in summaries.values()))


# ---------------------------------------------------------------------------


def _add_mapper_flags(p) -> None:
    p.add_argument("--log", required=True, help="scan log (JSONL)")
    p.add_argument("--map", required=True, help="ground-truth PGM defining the map geometry")
    p.add_argument("--res", type=float, help="map resolution; default from the .meta sidecar")
    p.add_argument("--d", type=float, help="free-sample interval in meters")
    p.add_argument("--decimation", type=int, help="keep every k-th beam")
    p.add_argument("--window", type=int, help="local window side in cells")
    p.add_argument("--squash", choices=mapping.SQUASH_MODES)
    p.add_argument("--fixed-params", action="store_true", help="skip first-frame hyperparameter fit")
    p.add_argument("--threads", type=int, choices=[1], default=1,
                   help="worker threads; per-cell work is single-threaded")
    p.add_argument("-o", "--output", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fastgpom", description=__doc__)
    parser.add_argument("--config", help="INI run configuration")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-map", help="generate a synthetic ground-truth map")
    p.add_argument("--kind", choices=simulator.MAP_KINDS)
    p.add_argument("--size", type=int, help="square map side in cells")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--res", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_map)

    p = sub.add_parser("simulate", help="record a scan log along a trajectory")
    p.add_argument("--map", required=True)
    p.add_argument("--res", type=float)
    p.add_argument("--waypoints", help="'x,y;x,y;...' in meters")
    p.add_argument("--pose-file", help="text file with one 'x y theta' pose per line")
    p.add_argument("--step", type=float, help="pose spacing along the waypoints (m)")
    p.add_argument("--seed", type=int)
    p.add_argument("--beams", type=int)
    p.add_argument("--max-range", type=float)
    p.add_argument("--noise-mean", type=float)
    p.add_argument("--noise-std", type=float)
    p.add_argument("-o", "--output", required=True, help="scan log path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("build", help="build a probability map from a scan log")
    p.add_argument("--algo", choices=sorted(ALGOS), default="fast")
    p.add_argument("--name", help="output file stem (default: pipeline name)")
    _add_mapper_flags(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("eval", help="ROC/AUC of latent dumps against ground truth")
    p.add_argument("--truth", required=True)
    p.add_argument("--res", type=float)
    p.add_argument("--dump", action="append", required=True, help="[name=]path to a .latent dump")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="time both pipelines on a scan log")
    _add_mapper_flags(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"fastgpom {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (CommandError, ValueError, OSError) as exc:
        print(f"fastgpom {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

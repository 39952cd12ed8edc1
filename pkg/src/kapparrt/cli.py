"""Command line: ``plan``, ``bench``, ``gen`` and ``validate``.

Exit codes: 0 success, 1 the planner found no path (or a path failed
validation), 2 bad input.  Output files go to ``--out`` or, by default, to the
directory named by ``KAPPARRT_OUT``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

from .bench import BenchConfig, default_out_dir, run_bench, validate_export
from .planner import PLANNERS, PlannerConfig, run_planner
from .scenes import (
    TEMPLATES,
    Scene,
    SceneFormatError,
    TemplateParams,
    export_csv,
    generate_scene,
    load_scene,
    read_csv_path,
    save_scene,
)

EXIT_OK, EXIT_NO_PATH, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _add_scene_args(p: argparse.ArgumentParser, multiple: bool = False) -> None:
    action = "append" if multiple else "store"
    p.add_argument("--scene", action=action, help="scene file (JSON)")
    p.add_argument("--template", action=action, choices=TEMPLATES, help="generate a canonical template instead")
    p.add_argument("--width", type=float, default=0.0, help="bottleneck width in mm (0: template default)")
    p.add_argument("--length", type=float, default=40.0, help="start-goal distance in mm")
    p.add_argument("--jitter-seed", type=int, default=0)
    p.add_argument("--jitter-scale", type=float, default=0.0, help="mm")
    p.add_argument("--blocker", action="store_true", help="seal the passage (rl template: jugular bulb)")


def _add_spec_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("problem overrides")
    g.add_argument("--kappa-max", type=float, help="1/mm")
    g.add_argument("--epsilon-g", type=float, help="goal position tolerance, mm")
    g.add_argument("--phi-g", type=float, help="goal angular tolerance, degrees")
    g.add_argument("--r-d", type=float, help="drill radius, mm")
    g.add_argument("--d-max", type=float, help="safety distance, mm")
    g.add_argument("--t-max", type=float, help="time budget, s")


def _add_planner_args(p: argparse.ArgumentParser) -> None:
    d = PlannerConfig()
    g = p.add_argument_group("planner")
    g.add_argument("--goal-bias", type=float, default=d.goal_bias)
    g.add_argument("--k-nearest", type=int, default=d.k_nearest)
    g.add_argument("--cone-height", type=float, default=d.cone_height, help="mm")
    g.add_argument("--cone-angle", type=float, default=math.degrees(d.cone_half_angle), help="half angle, degrees")
    g.add_argument("--delta-t", type=float, default=d.delta_t, help="extension step, mm")
    g.add_argument("--max-iterations", type=int, default=None,
                   help="iteration budget instead of wall clock (reproducible runs)")
    g.add_argument("--max-connect-attempts", type=int, default=d.max_connect_attempts)


def _planner_config(args, **extra) -> PlannerConfig:
    return PlannerConfig(
        goal_bias=args.goal_bias,
        k_nearest=args.k_nearest,
        cone_height=args.cone_height,
        cone_half_angle=math.radians(args.cone_angle),
        delta_t=args.delta_t,
        max_iterations=args.max_iterations,
        max_connect_attempts=args.max_connect_attempts,
        **extra,
    )


def _template_params(args, template: str) -> TemplateParams:
    return TemplateParams(
        template=template,
        bottleneck_width=args.width,
        corridor_length=args.length,
        jitter_seed=args.jitter_seed,
        jitter_scale=args.jitter_scale,
        blocker=args.blocker,
    )


def _load_one(args) -> Scene:
    if bool(args.scene) == bool(args.template):
        raise InputError("give exactly one of --scene or --template")
    scene = load_scene(args.scene) if args.scene else generate_scene(_template_params(args, args.template))
    return _with_overrides(scene, args)


def _with_overrides(scene: Scene, args) -> Scene:
    changes = {}
    for name, attr in (("kappa_max", "kappa_max"), ("epsilon_g", "epsilon_g"), ("r_d", "r_d"),
                       ("d_max", "d_max"), ("t_max", "t_max")):
        v = getattr(args, name, None)
        if v is not None:
            changes[attr] = v
    if getattr(args, "phi_g", None) is not None:
        changes["phi_g"] = math.radians(args.phi_g)
    if not changes:
        return scene
    return dataclasses.replace(scene, spec=dataclasses.replace(scene.spec, **changes))


def _out_dir(args) -> Path:
    out = Path(args.out or default_out_dir())
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_plan(args) -> int:
    scene = _load_one(args)
    cfg = _planner_config(args, rng_seed=args.seed, collect_all=args.collect_all)
    res = run_planner(args.planner, scene.spec, cfg, scene)
    print(f"scene {scene.name}  planner {args.planner}  seed {args.seed}")
    print(f"paths {res.n_paths}  failed {res.failed}  iterations {res.iterations}  "
          f"wall time {res.wall_time:.3f} s  tree sizes {list(res.tree_sizes)}")
    if res.failed:
        print("no path found within the time budget")
        return EXIT_NO_PATH
    out = _out_dir(args)
    for i, sol in enumerate(res.trajectories):
        print(f"  path {i}: length {sol.length:.3f} mm  goal error {sol.goal_position_error:.2e} mm / "
              f"{math.degrees(sol.goal_angular_error):.3f} deg  clearance {sol.surface_clearance:.3f} mm "
              f"({sol.nearest_structure})")
        export_csv(sol.trajectory, out / f"path_{i}.csv")
    print(f"exported {res.n_paths} path(s) to {out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    scenes = []
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InputError(f"{args.config}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        scenes += list(doc.get("scenes", []))
        scenes += [TemplateParams(**t) for t in doc.get("templates", [])]
        planners = tuple(doc.get("planners", args.planners or PLANNERS))
        duration = float(doc.get("duration", args.duration))
        seeds = tuple(doc.get("seeds", args.seeds))
    else:
        planners = tuple(args.planners or PLANNERS)
        duration = args.duration
        seeds = tuple(args.seeds)
    scenes += list(args.scene or [])
    scenes += [_template_params(args, t) for t in args.template or []]
    cfg = BenchConfig(scenes=scenes, planners=planners, duration=duration, seeds=seeds,
                      out_dir=str(_out_dir(args)), planner_config=_planner_config(args), workers=args.workers)
    report = run_bench(cfg)
    print(report.aggregate_csv(), end="")
    print(f"wrote raw.csv and aggregate.csv to {cfg.out_dir}")
    return EXIT_OK


def cmd_gen(args) -> int:
    scene = generate_scene(_template_params(args, args.template))
    out = Path(args.output) if args.output else _out_dir(args) / f"{scene.name}.json"
    save_scene(scene, out)
    print(f"{scene.name}: {len(scene.index.points)} obstacle points, tags {list(scene.tags)} -> {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    scene = _load_one(args)
    try:
        rows = read_csv_path(args.path)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read path {args.path}: {exc}") from None
    check = validate_export(rows, scene.spec, scene)
    print(f"start {'ok' if check.start_ok else 'FAIL'}  goal {'ok' if check.goal_ok else 'FAIL'}  "
          f"curvature {'ok' if check.curvature_ok else 'FAIL'} ({check.max_curvature:.5f} 1/mm)  "
          f"clearance {'ok' if check.clearance_ok else 'FAIL'} ({check.min_clearance:.3f} mm)")
    return EXIT_OK if check.passed else EXIT_NO_PATH


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kapparrt", description="Curvature-constrained access path planning.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="run one planner on one scene")
    _add_scene_args(p)
    _add_spec_args(p)
    _add_planner_args(p)
    p.add_argument("--planner", choices=sorted(PLANNERS), default="kappa-b-rrt-connect")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--collect-all", action="store_true", help="keep planning until t_max")
    p.add_argument("--out", help="output directory (default: $KAPPARRT_OUT)")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("bench", help="seeded benchmark over scenes and planners")
    _add_scene_args(p, multiple=True)
    _add_planner_args(p)
    p.add_argument("--config", help="JSON file with scenes, templates, planners, duration, seeds")
    p.add_argument("--planners", nargs="+", choices=sorted(PLANNERS))
    p.add_argument("--duration", type=float, default=20.0, help="seconds per run")
    p.add_argument("--seeds", type=int, nargs="+", default=list(range(10)))
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="output directory (default: $KAPPARRT_OUT)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen", help="generate a template scene file")
    p.add_argument("--template", choices=TEMPLATES, required=True)
    p.add_argument("--width", type=float, default=0.0)
    p.add_argument("--length", type=float, default=40.0)
    p.add_argument("--jitter-seed", type=int, default=0)
    p.add_argument("--jitter-scale", type=float, default=0.0)
    p.add_argument("--blocker", action="store_true")
    p.add_argument("--output", "-o", help="scene file to write")
    p.add_argument("--out", help="output directory when --output is not given")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("validate", help="re-check an exported path CSV against a scene")
    _add_scene_args(p)
    _add_spec_args(p)
    p.add_argument("path", help="CSV exported by plan or bench")
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (InputError, SceneFormatError, FileNotFoundError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

"""Benchmark harness: many seeded planner runs, raw and aggregate CSV tables.

A bench runs every (scene, planner, seed) combination with ``collect_all`` and
the configured duration, re-validates each returned path independently of the
planner and writes three artefacts to the output directory:

``raw.csv``
    one row per path (a run without paths contributes a single row with empty
    path columns).  Columns: ``scene, planner, seed, n_paths, paths_per_second,
    failed, iterations, path, length_mm, goal_position_error_mm,
    goal_angular_error_rad, min_clearance_mm, valid, error``.
``aggregate.csv``
    one row per (scene, planner): ``scene, planner, runs, median_paths,
    median_paths_per_second, failure_percent``.
``best_<scene>.csv`` / ``best_<scene>.ply``
    the path with the largest clearance found for each scene.

``paths_per_second`` divides by the configured duration rather than the
measured wall time so the tables do not depend on timer jitter.
"""

from __future__ import annotations

import csv
import io
import logging
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .geometry import DEFAULT_CIRCLE, DEFAULT_STEP, circle_offsets
from .planner import (
    CURVATURE_RTOL,
    PLANNERS,
    PlannerConfig,
    ProblemSpec,
    run_planner,
    validate_trajectory,
)
from .scenes import Scene, TemplateParams, export_csv, export_ply, generate_scene, load_scene
from .se3core import Pose, quat_distance
from .steering import circumradius_curvature

log = logging.getLogger(__name__)

RAW_COLUMNS = (
    "scene",
    "planner",
    "seed",
    "n_paths",
    "paths_per_second",
    "failed",
    "iterations",
    "path",
    "length_mm",
    "goal_position_error_mm",
    "goal_angular_error_rad",
    "min_clearance_mm",
    "valid",
    "error",
)
AGGREGATE_COLUMNS = ("scene", "planner", "runs", "median_paths", "median_paths_per_second", "failure_percent")
DEFAULT_SEEDS = tuple(range(10))
DEFAULT_DURATION = 20.0


@dataclass(frozen=True)
class BenchConfig:
    """What to run.  ``scenes`` holds scene files, :class:`TemplateParams` or scenes."""

    scenes: tuple
    planners: tuple = tuple(PLANNERS)
    duration: float = DEFAULT_DURATION
    seeds: tuple = DEFAULT_SEEDS
    out_dir: str | None = None
    planner_config: PlannerConfig = field(default_factory=PlannerConfig)
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "scenes", tuple(self.scenes))
        object.__setattr__(self, "planners", tuple(self.planners))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.duration > 0:
            raise ValueError("duration must be > 0")
        if not self.scenes:
            raise ValueError("at least one scene is required")
        if not self.planners:
            raise ValueError("at least one planner is required")
        unknown = [p for p in self.planners if p not in PLANNERS]
        if unknown:
            raise ValueError(f"unknown planners {unknown}; expected a subset of {sorted(PLANNERS)}")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class RawRow:
    scene: str
    planner: str
    seed: int
    n_paths: int
    paths_per_second: float
    failed: bool
    iterations: int
    path: int | None = None
    length_mm: float | None = None
    goal_position_error_mm: float | None = None
    goal_angular_error_rad: float | None = None
    min_clearance_mm: float | None = None
    valid: bool | None = None
    error: str = ""

    def cells(self) -> list[str]:
        out = []
        for name in RAW_COLUMNS:
            v = getattr(self, name)
            if v is None:
                out.append("")
            elif isinstance(v, bool):
                out.append("1" if v else "0")
            elif isinstance(v, float):
                out.append(repr(v))
            else:
                out.append(str(v))
        return out


@dataclass(frozen=True)
class AggregateRow:
    scene: str
    planner: str
    runs: int
    median_paths: float
    median_paths_per_second: float
    failure_percent: float


@dataclass(frozen=True)
class BenchReport:
    rows: tuple
    aggregates: tuple
    best: dict = field(default_factory=dict, compare=False)

    def raw_csv(self) -> str:
        return _csv_text(RAW_COLUMNS, (r.cells() for r in self.rows))

    def aggregate_csv(self) -> str:
        def cells(a: AggregateRow):
            return [a.scene, a.planner, str(a.runs), repr(float(a.median_paths)),
                    repr(float(a.median_paths_per_second)), repr(float(a.failure_percent))]

        return _csv_text(AGGREGATE_COLUMNS, (cells(a) for a in self.aggregates))

    def aggregate(self, scene: str, planner: str) -> AggregateRow:
        for a in self.aggregates:
            if a.scene == scene and a.planner == planner:
                return a
        raise KeyError((scene, planner))


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _resolve_scene(item) -> Scene:
    if isinstance(item, Scene):
        return item
    if isinstance(item, TemplateParams):
        return generate_scene(item)
    return load_scene(item)


def _scene_label(item) -> str:
    if isinstance(item, Scene):
        return item.name
    if isinstance(item, TemplateParams):
        return item.template
    return Path(item).stem


def _run_one(scene: Scene, planner: str, seed: int, cfg: BenchConfig):
    spec = replace(scene.spec, t_max=cfg.duration)
    pcfg = replace(cfg.planner_config, rng_seed=seed, collect_all=True)
    res = run_planner(planner, spec, pcfg, scene)
    pps = res.n_paths / cfg.duration
    base = dict(scene=scene.name, planner=planner, seed=seed, n_paths=res.n_paths,
                paths_per_second=pps, failed=res.failed, iterations=res.iterations)
    if res.failed:
        return [RawRow(**base)], res
    rows = []
    for i, sol in enumerate(res.trajectories):
        # independent re-check, not the planner's own verdict
        rep = validate_trajectory(sol.trajectory, spec, scene, pcfg.step, pcfg.n_circle)
        rows.append(RawRow(**base, path=i, length_mm=float(sol.length),
                           goal_position_error_mm=float(rep.goal_position_error),
                           goal_angular_error_rad=float(rep.goal_angular_error),
                           min_clearance_mm=float(rep.surface_clearance), valid=rep.passed))
    return rows, res


def _job(args):
    item, planner, seed, cfg = args
    try:
        scene = _resolve_scene(item)
    except Exception as exc:  # a broken scene only costs its own rows
        return [RawRow(scene=_scene_label(item), planner=planner, seed=seed, n_paths=0,
                       paths_per_second=0.0, failed=True, iterations=0, error=f"{type(exc).__name__}: {exc}")], None
    rows, res = _run_one(scene, planner, seed, cfg)
    best = None
    if not res.failed:
        good = [(r, s) for r, s in zip(rows, res.trajectories) if r.valid]
        if good:
            r, s = max(good, key=lambda rs: (rs[0].min_clearance_mm, -rs[0].length_mm))
            best = (r.min_clearance_mm, -r.length_mm, planner, seed, r.path, s.trajectory)
    return rows, best


def aggregate_rows(rows) -> tuple:
    """Per (scene, planner) medians and failure rate, recomputed from raw rows."""
    runs = {}
    for r in rows:
        runs.setdefault((r.scene, r.planner), {})[r.seed] = r
    out = []
    for (scene, planner), by_seed in sorted(runs.items()):
        rs = [by_seed[s] for s in sorted(by_seed)]
        out.append(AggregateRow(
            scene=scene,
            planner=planner,
            runs=len(rs),
            median_paths=float(statistics.median(r.n_paths for r in rs)),
            median_paths_per_second=float(statistics.median(r.paths_per_second for r in rs)),
            failure_percent=100.0 * sum(r.failed for r in rs) / len(rs),
        ))
    return tuple(out)


def run_bench(cfg: BenchConfig) -> BenchReport:
    """Run every (scene, planner, seed) job and write the CSV tables when ``out_dir`` is set."""
    jobs = [(item, planner, seed, cfg) for item in cfg.scenes for planner in cfg.planners for seed in cfg.seeds]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]
    rows = []
    best = {}
    for job_rows, cand in results:
        rows.extend(job_rows)
        if cand is not None:
            scene = job_rows[0].scene
            if scene not in best or cand[:5] > best[scene][:5]:
                best[scene] = cand
    rows.sort(key=lambda r: (r.scene, r.planner, r.seed, -1 if r.path is None else r.path))
    for r in rows:
        if r.error:
            log.warning("scene %s skipped: %s", r.scene, r.error)
        elif r.valid is False:
            log.warning("path %s of %s/%s seed %d failed re-validation", r.path, r.scene, r.planner, r.seed)
    report = BenchReport(rows=tuple(rows), aggregates=aggregate_rows(rows),
                         best={k: v[5] for k, v in best.items()})
    if cfg.out_dir is not None:
        write_report(report, cfg.out_dir)
    return report


def write_report(report: BenchReport, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "raw.csv").write_text(report.raw_csv(), encoding="utf-8")
    (out / "aggregate.csv").write_text(report.aggregate_csv(), encoding="utf-8")
    for scene, traj in sorted(report.best.items()):
        export_csv(traj, out / f"best_{scene}.csv")
        pts, _ = traj.sample(DEFAULT_STEP)
        export_ply(pts, out / f"best_{scene}.ply")


def read_raw_csv(path) -> tuple:
    """Parse ``raw.csv`` back into :class:`RawRow` records."""

    def num(v, kind):
        return None if v == "" else kind(v)

    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for d in csv.DictReader(fh):
            rows.append(RawRow(
                scene=d["scene"],
                planner=d["planner"],
                seed=int(d["seed"]),
                n_paths=int(d["n_paths"]),
                paths_per_second=float(d["paths_per_second"]),
                failed=d["failed"] == "1",
                iterations=int(d["iterations"]),
                path=num(d["path"], int),
                length_mm=num(d["length_mm"], float),
                goal_position_error_mm=num(d["goal_position_error_mm"], float),
                goal_angular_error_rad=num(d["goal_angular_error_rad"], float),
                min_clearance_mm=num(d["min_clearance_mm"], float),
                valid=None if d["valid"] == "" else d["valid"] == "1",
                error=d["error"],
            ))
    return tuple(rows)


@dataclass(frozen=True)
class Comparison:
    scene: str
    planner_a: str
    planner_b: str
    median_paths_diff: float
    failure_percent_diff: float

    @property
    def sign(self) -> int:
        return int(np.sign(self.median_paths_diff))


def compare_report(a: BenchReport, b: BenchReport, pairing: dict | None = None) -> list[Comparison]:
    """Per-scene differences ``a - b`` of median path counts and failure rates.

    ``pairing`` maps planner names of ``a`` onto those of ``b`` (identity by
    default), so one report can be compared with itself, e.g. connect planners
    against their one-directional counterparts.
    """
    keys_a = {(x.scene, x.planner) for x in a.aggregates}
    keys_b = {(x.scene, x.planner) for x in b.aggregates}
    if pairing is None:
        pairing = {p: p for _, p in keys_a}
        missing_a = sorted(keys_b - keys_a)
    else:
        missing_a = []
    wanted = {(s, p) for s, p in keys_a if p in pairing}
    missing_b = sorted((s, pairing[p]) for s, p in wanted if (s, pairing[p]) not in keys_b)
    if missing_a or missing_b or not wanted:
        raise KeyError(f"report keys do not match: missing in a {missing_a}, missing in b {missing_b}")
    out = []
    for scene, planner in sorted(wanted):
        x = a.aggregate(scene, planner)
        y = b.aggregate(scene, pairing[planner])
        out.append(Comparison(scene, planner, pairing[planner], x.median_paths - y.median_paths,
                              x.failure_percent - y.failure_percent))
    return out


# -- validation of exported polylines ----------------------------------------------


@dataclass(frozen=True)
class ExportCheck:
    start_ok: bool
    goal_ok: bool
    curvature_ok: bool
    clearance_ok: bool
    max_curvature: float
    min_clearance: float

    @property
    def passed(self) -> bool:
        return self.start_ok and self.goal_ok and self.curvature_ok and self.clearance_ok


def validate_export(rows: np.ndarray, spec: ProblemSpec, scene: Scene, n_circle: int = DEFAULT_CIRCLE,
                    pose_tol: float = 1e-9) -> ExportCheck:
    """Re-check an exported ``t, x, y, z, qa, qb, qc, qd`` polyline against a scene.

    The start must reproduce an initial state up to ``pose_tol`` (text
    round-off); the other checks are those of :func:`validate_trajectory`
    applied to the exported samples.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[1] != 8 or len(rows) < 2:
        raise ValueError("expected at least two rows of t, x, y, z, qa, qb, qc, qd")
    pts, quats = rows[:, 1:4], rows[:, 4:8]
    first = Pose(pts[0], quats[0])
    start_ok = any(
        np.linalg.norm(first.position - s.position) <= pose_tol
        and quat_distance(first.orientation, s.orientation) <= pose_tol
        for s in spec.initial_states
    )
    dp, da, _ = spec.goal_error(Pose(pts[-1], quats[-1]))
    goal_ok = dp <= spec.epsilon_g and da <= spec.phi_g
    kmax = float(circumradius_curvature(pts).max()) if len(pts) >= 3 else 0.0
    curvature_ok = kmax <= spec.kappa_max * (1.0 + CURVATURE_RTOL)
    tangents = np.array([Pose(p, q).tangent for p, q in zip(pts, quats)])
    idx = scene.index
    centre = float(idx.closest_pair(pts)[0])
    rim = (pts[:, None, :] + circle_offsets(tangents, spec.r_d, n_circle)).reshape(-1, 3)
    surface = float(idx.closest_pair(rim)[0])
    clearance_ok = centre > spec.clearance and surface + spec.r_d > spec.clearance
    return ExportCheck(bool(start_ok), bool(goal_ok), bool(curvature_ok), bool(clearance_ok), kmax,
                       min(centre, surface + spec.r_d))


def default_out_dir() -> str:
    return os.environ.get("KAPPARRT_OUT", "kapparrt-out")

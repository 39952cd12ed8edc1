"""Bidirectional curvature-constrained RRT-Connect and the one-directional RRT baselines.

Both planners run an anytime loop under a wall-clock budget.  The initial tree
grows forward from the start states; in the connect planner a second tree
grows backward from the goal states and, after every extension, the newest
node is offered to the opposite tree's nodes inside a forward cone.  A weld
produced by the 3D Dubins solver (arc flavour) or the iterative spline
connection (spline flavour) joins the two branches into one trajectory.
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .connect import PHI_CONNECT, ConeQuery, cone_candidates, dubins3d, spline_connect, weldable
from .geometry import (
    DEFAULT_CIRCLE,
    DEFAULT_STEP,
    SpatialIndex,
    centerline_clearance,
    path_clearance,
    segment_clear,
)
from .se3core import MetricConfig, Pose, quat_distance, roll_free_distance
from .steering import SteerConfig, Trajectory, steer
from .tree import GOAL, INITIAL, SearchTree

FLAVORS = ("arc", "spline")
CURVATURE_RTOL = 1e-6
SAMPLE_RETRIES = 100


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """One problem formulation: start and goal states, tolerances and the drill model.

    ``bounds`` is the axis-aligned sampling box ``((xmin, ymin, zmin), (xmax, ymax, zmax))``.
    With ``roll_invariant`` the goal angular error ignores roll about the
    axisymmetric drill axis; otherwise the quaternion distance is applied to the full orientations.
    """

    initial_states: tuple
    goal_states: tuple
    epsilon_g: float
    phi_g: float
    kappa_max: float
    r_d: float
    d_max: float
    t_max: float
    bounds: tuple
    roll_invariant: bool = True

    def __post_init__(self):
        object.__setattr__(self, "initial_states", tuple(self.initial_states))
        object.__setattr__(self, "goal_states", tuple(self.goal_states))
        if not self.initial_states:
            raise ValueError("initial_states must not be empty")
        if not self.goal_states:
            raise ValueError("goal_states must not be empty")
        for p in self.initial_states + self.goal_states:
            if not isinstance(p, Pose):
                raise TypeError(f"states must be Pose instances, got {type(p).__name__}")
        positive = ("epsilon_g", "kappa_max", "t_max")
        for name in positive:
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be > 0, got {v!r}")
        for name in ("r_d", "d_max"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be >= 0, got {v!r}")
        if not 0.0 <= self.phi_g <= math.pi:
            raise ValueError(f"phi_g must lie in [0, pi], got {self.phi_g!r}")
        lo, hi = (np.asarray(b, dtype=float) for b in self.bounds)
        if lo.shape != (3,) or hi.shape != (3,) or not np.all(lo < hi):
            raise ValueError(f"bounds must be a non-degenerate box, got {self.bounds!r}")
        object.__setattr__(self, "bounds", (tuple(map(float, lo)), tuple(map(float, hi))))

    @property
    def clearance(self) -> float:
        return self.r_d + self.d_max

    def check_states(self, index: SpatialIndex) -> None:
        """Raise if a start or goal state lies within ``r_d + d_max`` of an obstacle."""
        for kind, states in (("initial", self.initial_states), ("goal", self.goal_states)):
            for i, p in enumerate(states):
                d, _ = index.nearest(p.position)
                if not d > self.clearance:
                    raise ValueError(f"{kind} state {i} is in collision (clearance {d:.4g} mm)")

    def angular_error(self, pose: Pose, goal: Pose) -> float:
        if self.roll_invariant:
            return roll_free_distance(pose.orientation, goal.orientation)
        return quat_distance(pose.orientation, goal.orientation)

    def goal_error(self, pose: Pose) -> tuple[float, float, int]:
        """(position error, angular error, goal index) against the best-matching goal.

        Goals within ``epsilon_g`` are preferred and ranked by angular error;
        otherwise the nearest goal position is reported.
        """
        best = None
        for i, g in enumerate(self.goal_states):
            dp = float(np.linalg.norm(pose.position - g.position))
            da = self.angular_error(pose, g)
            key = (dp > self.epsilon_g, da if dp <= self.epsilon_g else dp, i)
            if best is None or key < best[0]:
                best = (key, dp, da, i)
        return best[1], best[2], best[3]


@dataclass(frozen=True)
class PlannerConfig:
    """Planner knobs.  ``max_iterations`` replaces the wall-clock budget by an
    iteration budget, which makes a run reproducible bit for bit."""

    goal_bias: float = 0.25
    k_nearest: int = 5
    cone_height: float = 5.0
    cone_half_angle: float = math.radians(20.0)
    delta_t: float = 2.0
    rng_seed: int = 0
    collect_all: bool = False
    max_iterations: int | None = None
    max_connect_attempts: int = 1
    angular_weight: float = 1.0
    step: float = DEFAULT_STEP
    n_circle: int = DEFAULT_CIRCLE
    spline_rounds: int = 20
    phi_connect: float = PHI_CONNECT
    debug_checks: bool = False

    def __post_init__(self):
        if not 0.0 <= self.goal_bias <= 1.0:
            raise ValueError("goal_bias must lie in [0, 1]")
        if self.k_nearest < 1:
            raise ValueError("k_nearest must be >= 1")
        if not self.delta_t > 0:
            raise ValueError("delta_t must be > 0")
        if not self.step > 0:
            raise ValueError("step must be > 0")
        if self.max_iterations is not None and self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if self.max_connect_attempts < 1:
            raise ValueError("max_connect_attempts must be >= 1")
        # validated by the query type itself
        ConeQuery(np.zeros(3), np.array([0.0, 0.0, 1.0]), self.cone_height, self.cone_half_angle)

    @property
    def metric(self) -> MetricConfig:
        return MetricConfig(self.angular_weight)


@dataclass(frozen=True, eq=False)
class SolutionPath:
    trajectory: Trajectory
    length: float
    goal_position_error: float
    goal_angular_error: float
    min_clearance: float
    surface_clearance: float
    nearest_structure: str
    weld: tuple

    def digest(self) -> str:
        """Hash of the sampled geometry, used to compare runs bit for bit."""
        pts, tans = self.trajectory.sample(DEFAULT_STEP)
        h = hashlib.sha256(pts.tobytes())
        h.update(tans.tobytes())
        return h.hexdigest()

    def key(self) -> tuple:
        return (
            self.length,
            self.goal_position_error,
            self.goal_angular_error,
            self.min_clearance,
            self.surface_clearance,
            self.nearest_structure,
            self.weld,
            self.digest(),
        )


@dataclass(frozen=True, eq=False)
class PlanResult:
    """Solutions plus run statistics.  Equality ignores the timings."""

    trajectories: tuple
    wall_time: float
    iterations: int
    tree_sizes: tuple = field(default=())
    longest_iteration: float = 0.0

    @property
    def n_paths(self) -> int:
        return len(self.trajectories)

    @property
    def failed(self) -> bool:
        return self.n_paths == 0

    def key(self) -> tuple:
        return (self.iterations, self.tree_sizes, tuple(s.key() for s in self.trajectories))

    def __eq__(self, other) -> bool:
        if not isinstance(other, PlanResult):
            return NotImplemented
        return self.key() == other.key()

    __hash__ = None


@dataclass(frozen=True)
class ValidationReport:
    start_ok: bool
    goal_ok: bool
    curvature_ok: bool
    clearance_ok: bool
    goal_position_error: float
    goal_angular_error: float
    max_curvature: float
    min_clearance: float
    surface_clearance: float
    nearest_structure: str

    @property
    def passed(self) -> bool:
        return self.start_ok and self.goal_ok and self.curvature_ok and self.clearance_ok

    def items(self) -> dict:
        return {
            "start": self.start_ok,
            "goal": self.goal_ok,
            "curvature": self.curvature_ok,
            "clearance": self.clearance_ok,
        }


def _index_of(scene) -> SpatialIndex:
    if isinstance(scene, SpatialIndex):
        return scene
    idx = getattr(scene, "index", None)
    if isinstance(idx, SpatialIndex):
        return idx
    raise TypeError("scene must be a SpatialIndex or provide one as .index")


def _same_pose(a: Pose, b: Pose) -> bool:
    if not np.array_equal(a.position, b.position):
        return False
    return bool(np.array_equal(a.orientation, b.orientation) or np.array_equal(a.orientation, -b.orientation))


def validate_trajectory(traj: Trajectory, spec: ProblemSpec, scene, step: float = DEFAULT_STEP,
                        n_circle: int = DEFAULT_CIRCLE) -> ValidationReport:
    """Check the four path constraints.

    (i) the start pose is exactly one of the initial states; (ii) the end is
    within ``epsilon_g`` and ``phi_g`` of a goal state; (iii) the discrete
    curvature never exceeds ``kappa_max`` (relative slack 1e-6); (iv) every
    centreline sample is farther than ``r_d + d_max`` from all obstacles and
    the swept drill surface (circles of radius ``r_d``) keeps more than ``d_max``.
    """
    idx = _index_of(scene)
    start_ok = any(_same_pose(traj.start_pose, s) for s in spec.initial_states)
    dp, da, _ = spec.goal_error(traj.end_pose)
    goal_ok = dp <= spec.epsilon_g and da <= spec.phi_g
    kmax = traj.max_curvature(step)
    curvature_ok = kmax <= spec.kappa_max * (1.0 + CURVATURE_RTOL)
    centre = centerline_clearance(idx, traj, step)
    report = path_clearance(idx, traj, spec.r_d, n_circle=n_circle, step=step)
    clearance_ok = centre > spec.clearance and report.min_distance + spec.r_d > spec.clearance
    return ValidationReport(
        start_ok=bool(start_ok),
        goal_ok=bool(goal_ok),
        curvature_ok=bool(curvature_ok),
        clearance_ok=bool(clearance_ok),
        goal_position_error=dp,
        goal_angular_error=da,
        max_curvature=kmax,
        min_clearance=centre,
        surface_clearance=report.min_distance,
        nearest_structure=report.nearest_structure,
    )


def sample_state(spec: ProblemSpec, cfg: PlannerConfig, rng: np.random.Generator, targets=None,
                 index: SpatialIndex | None = None) -> np.ndarray:
    """Random position: one of ``targets`` with probability ``goal_bias``, else uniform in the bounds.

    ``targets`` defaults to the goal positions; the connect planners pass the
    node positions of the opposite tree.  Uniform samples closer than ``r_d + d_max`` to an obstacle are
    redrawn up to 100 times; the last draw is returned regardless.
    """
    if targets is None:
        targets = np.array([g.position for g in spec.goal_states])
    if rng.random() < cfg.goal_bias:
        return np.array(targets[int(rng.integers(len(targets)))], dtype=float)
    lo, hi = spec.bounds
    p = rng.uniform(lo, hi)
    if index is None:
        return p
    for _ in range(SAMPLE_RETRIES - 1):
        if index.nearest(p)[0] > spec.clearance:
            break
        p = rng.uniform(lo, hi)
    return p


def k_nearest(tree: SearchTree, p, k: int, cfg: MetricConfig = MetricConfig()) -> list[int]:
    """The ``k`` nodes minimising ``||x - p|| + w * rho`` (ties by node id).

    A position-only sample carries no orientation, so ``rho`` compares each
    node's orientation with the minimal-twist orientation facing the sample,
    which is half the angle between the node's tangent and the direction to ``p``.
    """
    P = tree.positions
    T = tree.tangents
    p = np.asarray(p, dtype=float)
    dx = p[0] - P[:, 0]
    dy = p[1] - P[:, 1]
    dz = p[2] - P[:, 2]
    dist = np.sqrt(dx * dx + dy * dy + dz * dz)
    with np.errstate(invalid="ignore", divide="ignore"):
        c = (T[:, 0] * dx + T[:, 1] * dy + T[:, 2] * dz) / dist
    c = np.where(dist > 0, np.clip(c, -1.0, 1.0), 1.0)
    d = dist + cfg.angular_weight * 0.5 * np.arccos(c)
    ids = np.arange(len(P))
    order = np.lexsort((ids, d))
    return [int(i) for i in order[:k]]


class _Run:
    """State of one planning run; keeps the main loops short."""

    def __init__(self, spec: ProblemSpec, cfg: PlannerConfig, flavor: str, scene):
        if flavor not in FLAVORS:
            raise ValueError(f"unknown flavor {flavor!r}; expected one of {FLAVORS}")
        self.spec = spec
        self.cfg = cfg
        self.flavor = flavor
        self.index = _index_of(scene)
        spec.check_states(self.index)
        self.steer_cfg = SteerConfig(spec.kappa_max, cfg.delta_t)
        self.metric = cfg.metric
        self.rng = np.random.default_rng(cfg.rng_seed)
        self.solutions: list[SolutionPath] = []
        self._seen: set = set()
        self.t0 = time.perf_counter()
        self._tick = self.t0
        self.longest = 0.0
        self.iterations = 0

    def running(self) -> bool:
        now = time.perf_counter()
        self.longest = max(self.longest, now - self._tick)
        self._tick = now
        if self.cfg.max_iterations is not None:
            return self.iterations < self.cfg.max_iterations
        return now - self.t0 < self.spec.t_max

    def clear(self, seg) -> bool:
        return segment_clear(self.index, seg, self.spec.r_d, self.spec.d_max, self.cfg.step)

    def extend(self, tree: SearchTree, p) -> list[int]:
        """Steer every one of the k nearest nodes toward ``p``; return the new node ids."""
        added = []
        for near in k_nearest(tree, p, self.cfg.k_nearest, self.metric):
            if tree.terminal[near]:
                continue
            out = steer(self.flavor, tree.poses[near], p, self.steer_cfg)
            if out is None:
                continue
            seg, q_next = out
            if not self.clear(seg):
                continue
            added.append(tree.add(q_next, near, seg))
        return added

    def record(self, traj: Trajectory, weld: tuple) -> bool:
        rep = validate_trajectory(traj, self.spec, self.index, self.cfg.step, self.cfg.n_circle)
        if not rep.passed:
            return False
        length = traj.length
        for other in self.solutions:
            if other.weld == weld and abs(other.length - length) <= 0.01:
                return False
        self.solutions.append(
            SolutionPath(
                trajectory=traj,
                length=length,
                goal_position_error=rep.goal_position_error,
                goal_angular_error=rep.goal_angular_error,
                min_clearance=rep.min_clearance,
                surface_clearance=rep.surface_clearance,
                nearest_structure=rep.nearest_structure,
                weld=weld,
            )
        )
        return True

    def result(self, trees) -> PlanResult:
        return PlanResult(
            trajectories=tuple(self.solutions),
            wall_time=time.perf_counter() - self.t0,
            iterations=self.iterations,
            tree_sizes=tuple(len(t) for t in trees),
            longest_iteration=self.longest,
        )


def _connector(run: _Run, q_a: Pose, q_b: Pose):
    if run.flavor == "arc":
        sol = dubins3d(q_a, q_b, run.spec.kappa_max)
        if sol is None:
            return None
        return [s for s in sol.segments if s.length > 0.0]
    traj = spline_connect(q_a, q_b, run.steer_cfg, run.cfg.spline_rounds, run.cfg.phi_connect)
    return None if traj is None else list(traj.segments)


def _weld_first(run: _Run, tree_a: SearchTree, node: int, tree_b: SearchTree, cands: list[int]) -> list[int]:
    """Stable reorder putting candidates an immediate spiral weld can reach first."""
    ids = np.asarray(cands)
    x_n, t_n = tree_a.positions[node], tree_a.tangents[node]
    x_c, t_c = tree_b.positions[ids], -tree_b.tangents[ids]
    if tree_a.side == INITIAL:
        mask = weldable(x_n, t_n, x_c, t_c, run.spec.kappa_max)
    else:
        mask = weldable(x_c, -t_c, x_n, -t_n, run.spec.kappa_max)
    return [int(i) for i in ids[mask]] + [int(i) for i in ids[~mask]]


def _attempt_connection(run: _Run, tree_a: SearchTree, node: int, tree_b: SearchTree) -> bool:
    q_next = tree_a.poses[node]
    query = ConeQuery.at(q_next, run.cfg.cone_height, run.cfg.cone_half_angle)
    cands = cone_candidates(tree_b, q_next, query, run.metric)
    if run.flavor == "spline" and len(cands) > 1:
        cands = _weld_first(run, tree_a, node, tree_b, cands)
    for cand in cands[: run.cfg.max_connect_attempts]:
        if tree_a.side == INITIAL:
            init_tree, init_node, goal_tree, goal_node = tree_a, node, tree_b, cand
        else:
            init_tree, init_node, goal_tree, goal_node = tree_b, cand, tree_a, node
        q_a = init_tree.poses[init_node]
        q_b = goal_tree.poses[goal_node].flipped()
        weld = _connector(run, q_a, q_b)
        if not weld or not all(run.clear(s) for s in weld):
            continue
        back = [s.reversed() for s in reversed(goal_tree.branch(goal_node))]
        traj = Trajectory(init_tree.branch(init_node) + weld + back)
        if run.record(traj, (init_node, goal_node)):
            return True
    return False


def plan_connect(spec: ProblemSpec, cfg: PlannerConfig, flavor: str, scene) -> PlanResult:
    """Bidirectional RRT-Connect with arc or Bezier-spiral steering.

    The two trees alternate.  Each iteration samples a position (biased toward
    a random node of the opposite tree), extends the k nearest nodes toward it and
    offers every new node to the opposite tree through the cone test.  Without
    ``collect_all`` the first valid solution ends the run.
    """
    run = _Run(spec, cfg, flavor, scene)
    t_init = SearchTree(spec.initial_states, INITIAL)
    t_goal = SearchTree([g.flipped() for g in spec.goal_states], GOAL)
    while run.running():
        tree_a, tree_b = (t_init, t_goal) if run.iterations % 2 == 0 else (t_goal, t_init)
        run.iterations += 1
        p = sample_state(spec, cfg, run.rng, tree_b.positions, run.index)
        for node in run.extend(tree_a, p):
            if _attempt_connection(run, tree_a, node, tree_b) and not cfg.collect_all:
                return run.result((t_init, t_goal))
        if cfg.debug_checks:
            t_init.check()
            t_goal.check()
    return run.result((t_init, t_goal))


def plan_rrt(spec: ProblemSpec, cfg: PlannerConfig, flavor: str, scene) -> PlanResult:
    """One-directional RRT from the initial states with a goal-region test.

    A new node solves the problem when it lies within ``epsilon_g`` of a goal
    position with angular error at most ``phi_g``; solution nodes are not
    expanded further.
    """
    run = _Run(spec, cfg, flavor, scene)
    tree = SearchTree(spec.initial_states, INITIAL)
    goals = np.array([g.position for g in spec.goal_states])
    while run.running():
        run.iterations += 1
        p = sample_state(spec, cfg, run.rng, goals, run.index)
        for node in run.extend(tree, p):
            dp, da, _ = spec.goal_error(tree.poses[node])
            if dp <= spec.epsilon_g and da <= spec.phi_g:
                tree.terminal[node] = True
                if run.record(Trajectory(tree.branch(node)), (node, -1)) and not cfg.collect_all:
                    return run.result((tree,))
        if cfg.debug_checks:
            tree.check()
    return run.result((tree,))


PLANNERS = {
    "kappa-b-rrt-connect": (plan_connect, "arc"),
    "kappa-sb-rrt-connect": (plan_connect, "spline"),
    "bevel-tip-rrt": (plan_rrt, "arc"),
    "spline-rrt": (plan_rrt, "spline"),
}


def run_planner(name: str, spec: ProblemSpec, cfg: PlannerConfig, scene) -> PlanResult:
    try:
        fn, flavor = PLANNERS[name]
    except KeyError:
        raise ValueError(f"unknown planner {name!r}; expected one of {sorted(PLANNERS)}") from None
    return fn(spec, cfg, flavor, scene)

"""Scene files and the procedural access-canal templates.

A scene is a JSON document (``version`` "1", ``units`` "mm") holding named
obstacle structures (point lists or triangle meshes), initial and goal poses
and the problem parameters.  Meshes are sampled to surface points on load.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .geometry import ObstacleSet, SpatialIndex, sample_triangle_mesh
from .planner import ProblemSpec
from .se3core import Pose, unit

FORMAT_VERSION = "1"
UNITS = "mm"
DEFAULT_DENSITY = 4.0  # points per mm^2
POINT_SPACING = 1.0 / math.sqrt(DEFAULT_DENSITY)
TEMPLATES = ("cochlea", "ssc", "rl", "corridor")
INFEASIBLE = "infeasible-by-construction"

# Per-structure rows: (d_max, r_d); kappa_max, epsilon_g, phi_g and t_max are shared
STRUCTURE_PARAMS = {
    "cochlea": (0.3, 0.5),
    "ssc": (0.5, 1.0),
    "rl": (1.0, 1.0),
    "corridor": (0.3, 0.5),
}
KAPPA_MAX = 0.05
EPSILON_G = 1.0
PHI_G = math.radians(5.0)
T_MAX = 0.5

TUBE_RADIUS = 5.0
CORRIDOR_RADIUS = 10.0
LATERAL_BOUND = 15.0


class SceneFormatError(ValueError):
    """Malformed or invalid scene file; the message names the line or field."""


@dataclass(frozen=True)
class TemplateParams:
    template: str = "cochlea"
    bottleneck_width: float = 0.0  # 0 selects the template's canonical width
    corridor_length: float = 40.0
    jitter_seed: int = 0
    jitter_scale: float = 0.0
    blocker: bool = False
    tilt_deg: float = 15.0

    def __post_init__(self):
        if self.template not in TEMPLATES:
            raise ValueError(f"unknown template {self.template!r}; expected one of {TEMPLATES}")
        if self.bottleneck_width < 0:
            raise ValueError("bottleneck_width must be >= 0 (0 selects the canonical width)")
        if not self.corridor_length > 0:
            raise ValueError("corridor_length must be > 0")
        if self.jitter_scale < 0:
            raise ValueError("jitter_scale must be >= 0")
        if not 0 <= self.jitter_seed < 2**64:
            raise ValueError("jitter_seed must be a 64-bit unsigned integer")

    @property
    def width(self) -> float:
        if self.bottleneck_width > 0:
            return self.bottleneck_width
        return canonical_width(self.template)

    def as_dict(self) -> dict:
        return {
            "template": self.template,
            "bottleneck_width": self.width,
            "corridor_length": self.corridor_length,
            "jitter_seed": self.jitter_seed,
            "jitter_scale": self.jitter_scale,
            "blocker": self.blocker,
            "tilt_deg": self.tilt_deg,
        }


def canonical_width(template: str) -> float:
    d_max, r_d = STRUCTURE_PARAMS[template]
    return 2.0 * (r_d + d_max) + 1.0


@dataclass(frozen=True, eq=False)
class Scene:
    name: str
    obstacles: ObstacleSet
    spec: ProblemSpec
    tags: tuple = ()
    provenance: str = ""
    template: dict | None = field(default=None)

    @cached_property
    def index(self) -> SpatialIndex:
        return SpatialIndex(self.obstacles)

    @property
    def feasible(self) -> bool:
        return INFEASIBLE not in self.tags

    def __eq__(self, other) -> bool:
        if not isinstance(other, Scene):
            return NotImplemented
        return (
            self.name == other.name
            and self.obstacles == other.obstacles
            and _spec_doc(self.spec) == _spec_doc(other.spec)
            and _states_doc(self.spec) == _states_doc(other.spec)
            and tuple(self.tags) == tuple(other.tags)
            and self.provenance == other.provenance
            and self.template == other.template
        )

    __hash__ = None


# -- serialisation -------------------------------------------------------------


def _pose_doc(p: Pose) -> dict:
    return {"position": [float(v) for v in p.position], "orientation": [float(v) for v in p.orientation]}


def _spec_doc(spec: ProblemSpec) -> dict:
    return {
        "kappa_max": spec.kappa_max,
        "epsilon_g": spec.epsilon_g,
        "phi_g": spec.phi_g,
        "r_d": spec.r_d,
        "d_max": spec.d_max,
        "t_max": spec.t_max,
        "bounds": [list(spec.bounds[0]), list(spec.bounds[1])],
        "roll_invariant": spec.roll_invariant,
    }


def _states_doc(spec: ProblemSpec) -> dict:
    return {
        "initial_states": [_pose_doc(p) for p in spec.initial_states],
        "goal_states": [_pose_doc(p) for p in spec.goal_states],
    }


def scene_to_doc(scene: Scene) -> dict:
    doc = {
        "version": FORMAT_VERSION,
        "units": UNITS,
        "name": scene.name,
        "provenance": scene.provenance,
        "tags": list(scene.tags),
        "problem": _spec_doc(scene.spec),
    }
    doc.update(_states_doc(scene.spec))
    if scene.template is not None:
        doc["template"] = dict(scene.template)
    doc["obstacles"] = [
        {"name": name, "points": [[float(v) for v in p] for p in pts]} for name, pts in scene.obstacles.structures
    ]
    return doc


def _format(obj, indent: int = 0) -> str:
    """JSON with one line per innermost number list (a point, a pose component)."""
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(k)}: {_format(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, list):
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(json.dumps(v) for v in obj) + "]"
        if not obj:
            return "[]"
        items = [inner + _format(v, indent + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    return json.dumps(obj)


def dumps_scene(scene: Scene) -> str:
    return _format(scene_to_doc(scene)) + "\n"


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(dumps_scene(scene), encoding="utf-8")


def _field(doc: dict, key: str, where: str):
    if not isinstance(doc, dict):
        raise SceneFormatError(f"field '{where}' must be an object")
    if key not in doc:
        name = f"{where}.{key}" if where else key
        raise SceneFormatError(f"missing field '{name}'")
    return doc[key]


def _number(doc: dict, key: str, where: str) -> float:
    v = _field(doc, key, where)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SceneFormatError(f"field '{where}.{key}' must be a number, got {v!r}")
    return float(v)


def _pose_from(doc, where: str) -> Pose:
    try:
        return Pose(_field(doc, "position", where), _field(doc, "orientation", where))
    except SceneFormatError:
        raise
    except (TypeError, ValueError) as e:
        raise SceneFormatError(f"field '{where}': {e}") from None


def _obstacle_points(item, where: str) -> np.ndarray:
    if "points" in item:
        try:
            pts = np.array(item["points"], dtype=float)
        except (TypeError, ValueError) as e:
            raise SceneFormatError(f"field '{where}.points': {e}") from None
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise SceneFormatError(f"field '{where}.points' must be a list of 3-vectors")
        return pts
    if "mesh" in item:
        mesh = item["mesh"]
        density = float(item.get("density", DEFAULT_DENSITY))
        if not density > 0:
            raise SceneFormatError(f"field '{where}.density' must be > 0")
        try:
            v = np.array(_field(mesh, "vertices", f"{where}.mesh"), dtype=float)
            f = np.array(_field(mesh, "faces", f"{where}.mesh"), dtype=int)
        except (TypeError, ValueError) as e:
            raise SceneFormatError(f"field '{where}.mesh': {e}") from None
        if v.ndim != 2 or v.shape[1] != 3 or f.ndim != 2 or f.shape[1] != 3:
            raise SceneFormatError(f"field '{where}.mesh' needs (n, 3) vertices and (m, 3) faces")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise SceneFormatError(f"field '{where}.mesh.faces' indexes a missing vertex")
        return sample_triangle_mesh(v, f, density)
    raise SceneFormatError(f"field '{where}' needs 'points' or 'mesh'")


def scene_from_doc(doc: dict) -> Scene:
    if not isinstance(doc, dict):
        raise SceneFormatError("scene document must be a JSON object")
    version = _field(doc, "version", "")
    if str(version) != FORMAT_VERSION:
        raise SceneFormatError(f"field 'version': unsupported version {version!r}")
    units = _field(doc, "units", "")
    if units != UNITS:
        raise SceneFormatError(f"field 'units': expected {UNITS!r}, got {units!r}")
    prob = _field(doc, "problem", "")
    values = {k: _number(prob, k, "problem") for k in ("kappa_max", "epsilon_g", "phi_g", "r_d", "d_max", "t_max")}
    bounds = _field(prob, "bounds", "problem")
    initial = [_pose_from(p, f"initial_states[{i}]") for i, p in enumerate(_field(doc, "initial_states", ""))]
    goals = [_pose_from(p, f"goal_states[{i}]") for i, p in enumerate(_field(doc, "goal_states", ""))]
    try:
        spec = ProblemSpec(
            initial_states=initial,
            goal_states=goals,
            bounds=(tuple(bounds[0]), tuple(bounds[1])),
            roll_invariant=bool(prob.get("roll_invariant", True)),
            **values,
        )
    except (TypeError, ValueError, IndexError) as e:
        raise SceneFormatError(f"invalid problem parameters: {e}") from None
    items = []
    for i, item in enumerate(_field(doc, "obstacles", "")):
        where = f"obstacles[{i}]"
        name = _field(item, "name", where)
        items.append((name, _obstacle_points(item, where)))
    try:
        obstacles = ObstacleSet(tuple(items))
    except ValueError as e:
        raise SceneFormatError(f"field 'obstacles': {e}") from None
    if len(obstacles) == 0:
        raise SceneFormatError("field 'obstacles': no obstacles")
    return Scene(
        name=str(doc.get("name", "")),
        obstacles=obstacles,
        spec=spec,
        tags=tuple(doc.get("tags", ())),
        provenance=str(doc.get("provenance", "")),
        template=doc.get("template"),
    )


def loads_scene(text: str) -> Scene:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SceneFormatError(f"line {e.lineno}, column {e.colno}: {e.msg}") from None
    return scene_from_doc(doc)


def load_scene(path) -> Scene:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise SceneFormatError(f"{path}: {e.strerror}") from None
    try:
        return loads_scene(text)
    except SceneFormatError as e:
        raise SceneFormatError(f"{path}: {e}") from None


# -- primitive surfaces ----------------------------------------------------------


def tube_points(a, b, radius: float, spacing: float = POINT_SPACING) -> np.ndarray:
    """Lateral surface of the cylinder with axis ``a -> b`` on a regular grid."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    axis = b - a
    length = float(np.linalg.norm(axis))
    t = axis / length
    helper = np.array([1.0, 0.0, 0.0]) if abs(t[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = unit(np.cross(t, helper))
    e2 = np.cross(t, e1)
    n_ax = max(2, int(math.ceil(length / spacing)) + 1)
    n_ci = max(8, int(math.ceil(2 * math.pi * radius / spacing)))
    s = np.linspace(0.0, length, n_ax)
    ang = 2 * math.pi * np.arange(n_ci) / n_ci
    ring = radius * (np.cos(ang)[:, None] * e1 + np.sin(ang)[:, None] * e2)
    return (a + s[:, None, None] * t + ring[None, :, :]).reshape(-1, 3)


def sphere_points(center, radius: float, spacing: float = POINT_SPACING) -> np.ndarray:
    """Fibonacci lattice on a sphere with one point per ``spacing**2`` of area."""
    n = max(16, int(round(4 * math.pi * radius * radius / (spacing * spacing))))
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = math.pi * (3.0 - math.sqrt(5.0)) * i
    pts = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    return np.asarray(center, dtype=float) + radius * pts


def _segment_distance(p0, p1, q0, q1, n: int = 401) -> float:
    """Minimum distance between two segments (dense sampling is ample here)."""
    s = np.linspace(0.0, 1.0, n)[:, None]
    a = p0 + s * (p1 - p0)
    b = q0 + s * (q1 - q0)
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    return float(d.min())


# -- templates -------------------------------------------------------------------


def _tilted(angle_deg: float) -> np.ndarray:
    a = math.radians(angle_deg)
    return np.array([math.sin(a), 0.0, math.cos(a)])


def generate_scene(params: TemplateParams) -> Scene:
    """Deterministic synthetic scene for one template.

    The canal runs from the origin along +z to ``(0, 0, corridor_length)``.
    Start and goal tangents are tilted by ``tilt_deg`` in the xz-plane in
    opposite senses, so a path has to turn to match the goal orientation.

    * ``cochlea`` / ``ssc``: two parallel tubes across the canal at mid-depth
      leave a slot of ``bottleneck_width`` around the axis.
    * ``rl``: a tube across the canal and a sphere beside it force a detour
      to +x; ``blocker`` encloses the goal in a closed spherical shell.
    * ``corridor``: open space with two small marker spheres well off the canal.
    """
    tpl = params.template
    L = params.corridor_length
    d_max, r_d = STRUCTURE_PARAMS[tpl]
    clearance = r_d + d_max
    rng = np.random.default_rng(params.jitter_seed)
    tags = [tpl]

    def jitter(p):
        p = np.asarray(p, dtype=float)
        if params.jitter_scale == 0:
            return p
        return p + rng.normal(0.0, params.jitter_scale, size=3)

    mid = 0.5 * L
    span = LATERAL_BOUND + 5.0
    structures = []
    start_dir = _tilted(params.tilt_deg)
    goal_dir = _tilted(-params.tilt_deg)
    if tpl in ("cochlea", "ssc"):
        w = params.width
        off = 0.5 * w + TUBE_RADIUS
        names = ("facial_nerve", "chorda_tympani") if tpl == "cochlea" else ("ssc_ampulla", "ssc_crus")
        axes = []
        for name, sgn in zip(names, (1.0, -1.0)):
            a, b = jitter([-span, sgn * off, mid]), jitter([span, sgn * off, mid])
            axes.append((a, b))
            structures.append((name, tube_points(a, b, TUBE_RADIUS)))
        w_eff = _segment_distance(*axes[0], *axes[1]) - 2 * TUBE_RADIUS
        if w_eff <= 2 * clearance:
            tags.append(INFEASIBLE)
    elif tpl == "rl":
        a, b = jitter([-2.0, -span, mid]), jitter([-2.0, span, mid])
        structures.append(("facial_nerve", tube_points(a, b, 3.0)))
        structures.append(("sigmoid_sinus", sphere_points(jitter([13.0, 0.0, mid]), 4.0)))
    else:
        for name, x in (("marker_left", -CORRIDOR_RADIUS), ("marker_right", CORRIDOR_RADIUS)):
            structures.append((name, sphere_points(jitter([x, 0.0, mid]), 1.0)))
    goal_pos = np.array([0.0, 0.0, L])
    if params.blocker:
        structures.append(("jugular_bulb", sphere_points(goal_pos, 2.0 * clearance + 2.0)))
        tags.append("sealed")
        if INFEASIBLE not in tags:
            tags.append(INFEASIBLE)
    start = Pose.from_direction([0.0, 0.0, 0.0], start_dir)
    goal = Pose.from_direction(goal_pos, goal_dir)
    lo = (-LATERAL_BOUND, -LATERAL_BOUND, -5.0)
    hi = (LATERAL_BOUND, LATERAL_BOUND, L + 5.0)
    spec = ProblemSpec(
        initial_states=(start,),
        goal_states=(goal,),
        epsilon_g=EPSILON_G,
        phi_g=PHI_G,
        kappa_max=KAPPA_MAX,
        r_d=r_d,
        d_max=d_max,
        t_max=T_MAX,
        bounds=(lo, hi),
    )
    name = f"{tpl}-w{params.width:g}-s{params.jitter_seed}" + ("-blocked" if params.blocker else "")
    return Scene(
        name=name,
        obstacles=ObstacleSet(tuple(structures)),
        spec=spec,
        tags=tuple(tags),
        provenance="procedural template (synthetic stand-in for shape-model anatomies)",
        template=params.as_dict(),
    )


def canonical_scene(template: str, **overrides) -> Scene:
    return generate_scene(TemplateParams(template=template, **overrides))


# -- path export -----------------------------------------------------------------


def export_csv(traj, path, step: float = 0.1) -> None:
    """Polyline with columns ``t, x, y, z, qa, qb, qc, qd`` every ``step`` mm."""
    rows = traj.poses(step)
    total = rows[-1][0] if rows and rows[-1][0] > 0 else 1.0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,x,y,z,qa,qb,qc,qd\n")
        for s, p, q in rows:
            vals = [s / total, *p, *q]
            fh.write(",".join(repr(float(v)) for v in vals) + "\n")


def read_csv_path(path) -> np.ndarray:
    """Rows of an exported path as an (n, 8) array."""
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def export_ply(points, path) -> None:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {len(pts)}\n")
        fh.write("property double x\nproperty double y\nproperty double z\nend_header\n")
        for p in pts:
            fh.write(f"{p[0]!r} {p[1]!r} {p[2]!r}\n")

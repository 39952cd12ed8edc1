"""Risk structures as point clouds, a kd-tree over them and clearance queries."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

DEFAULT_STEP = 0.1
DEFAULT_CIRCLE = 16


@dataclass(frozen=True, eq=False)
class ObstacleSet:
    """Named risk structures, each a dense sample of its surface (mm)."""

    structures: tuple

    def __post_init__(self):
        items = []
        for name, pts in self.structures:
            arr = np.array(pts, dtype=float).reshape(-1, 3)
            if arr.shape[0] == 0:
                raise ValueError(f"structure {name!r} has no points")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"structure {name!r} has non-finite points")
            arr.setflags(write=False)
            items.append((str(name), arr))
        object.__setattr__(self, "structures", tuple(items))

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.structures]

    def __len__(self) -> int:
        return len(self.structures)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ObstacleSet) or len(self) != len(other):
            return NotImplemented if not isinstance(other, ObstacleSet) else False
        return all(
            na == nb and np.array_equal(pa, pb)
            for (na, pa), (nb, pb) in zip(self.structures, other.structures)
        )


@dataclass(frozen=True)
class ClearanceReport:
    min_distance: float
    nearest_structure: str
    location_t: float


class SpatialIndex:
    """kd-tree over the union of all obstacle points, tagged by structure.

    Points are stored in structure order, so among equidistant neighbours the
    lowest global point index also has the lowest structure index.
    """

    def __init__(self, obstacles: ObstacleSet):
        if obstacles is None or len(obstacles) == 0:
            raise ValueError("no obstacles")
        self.obstacles = obstacles
        self.names = obstacles.names
        self.points = np.concatenate([p for _, p in obstacles.structures])
        self.points.setflags(write=False)
        self.labels = np.concatenate(
            [np.full(len(p), i, dtype=np.int64) for i, (_, p) in enumerate(obstacles.structures)]
        )
        self.labels.setflags(write=False)
        self._tree = cKDTree(self.points, balanced_tree=True, compact_nodes=True)

    def __len__(self) -> int:
        return len(self.points)

    def nearest(self, p) -> tuple[float, int]:
        """Distance to and global index of the nearest obstacle point."""
        p = np.asarray(p, dtype=float)
        k = min(8, len(self.points))
        d, i = self._tree.query(p, k=k)
        d = np.atleast_1d(d)
        i = np.atleast_1d(i)
        best = d[0]
        if k > 1 and d[-1] == best:
            # the probe may not have caught every tied point
            i = np.asarray(self._tree.query_ball_point(p, best * (1 + 1e-9) + 1e-12), dtype=np.int64)
            d = np.sqrt(((self.points[i] - p) ** 2).sum(axis=1))
            best = d.min()
        return float(best), int(i[d == best].min())

    def distances(self, pts, upper: float = np.inf) -> np.ndarray:
        """Nearest-obstacle distances for many points (``inf`` beyond ``upper``)."""
        d, _ = self._tree.query(np.asarray(pts, dtype=float), k=1, distance_upper_bound=upper)
        return d

    def nearest_many(self, pts) -> tuple[np.ndarray, np.ndarray]:
        d, i = self._tree.query(np.asarray(pts, dtype=float), k=1)
        return d, i

    def closest_pair(self, pts, probe_stride: int = 16) -> tuple[float, int, int]:
        """Smallest distance between ``pts`` and the obstacles: ``(d, row of pts, point index)``.

        A sparse probe of exact queries bounds the minimum from above; the full
        query then only resolves points below that bound, which keeps the cost
        low when most samples are far from every obstacle.  Among equal minima
        the first row wins and, within it, the lowest obstacle point index.
        """
        pts = np.asarray(pts, dtype=float).reshape(-1, 3)
        probe, _ = self._tree.query(pts[::probe_stride], k=1)
        bound = float(probe.min())
        d, _ = self._tree.query(pts, k=1, distance_upper_bound=bound * (1 + 1e-9) + 1e-12)
        row = int(np.argmin(d))
        dist, i = self.nearest(pts[row])
        return dist, row, i


def build_index(obs: ObstacleSet) -> SpatialIndex:
    return SpatialIndex(obs)


def min_distance(idx: SpatialIndex, p) -> tuple[float, str]:
    d, i = idx.nearest(p)
    return d, idx.names[idx.labels[i]]


def points_clear(idx: SpatialIndex, pts, threshold: float) -> bool:
    """True iff every point is strictly farther than ``threshold`` from all obstacles."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 3)
    # a bound slightly above the threshold keeps the pruning and still reports
    # every distance that could violate it
    d = idx.distances(pts, upper=threshold * (1 + 1e-9) + 1e-12)
    return bool(np.all(d > threshold))


def segment_clear(idx: SpatialIndex, seg, r_d: float, d_max: float, step: float = DEFAULT_STEP) -> bool:
    """Clearance test of a segment's centreline sampled every ``step`` mm (endpoints included)."""
    if step <= 0:
        raise ValueError("step must be > 0")
    return points_clear(idx, seg.points(step), r_d + d_max)


def circle_offsets(tangents: np.ndarray, radius: float, n: int) -> np.ndarray:
    """Offsets (m, n, 3) of ``n`` points on circles of ``radius`` orthogonal to each tangent."""
    t = np.asarray(tangents, dtype=float)
    helper = np.where(np.abs(t[:, :1]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    e1 = np.cross(t, helper)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(t, e1)
    ang = 2.0 * np.pi * np.arange(n) / n
    return radius * (
        np.cos(ang)[None, :, None] * e1[:, None, :] + np.sin(ang)[None, :, None] * e2[:, None, :]
    )


def path_clearance(
    idx: SpatialIndex, traj, r_d: float, n_circle: int = DEFAULT_CIRCLE, step: float = DEFAULT_STEP
) -> ClearanceReport:
    """Minimal obstacle distance of the drill's cross-section swept along ``traj``.

    At every centreline sample the disc of radius ``r_d`` orthogonal to the
    tangent is represented by its centre and ``n_circle`` rim points; the
    smallest nearest-obstacle distance over all of them is reported together
    with the structure realising it and its arc-length fraction along the path.
    """
    if n_circle < 8:
        raise ValueError("n_circle must be >= 8")
    pts, tans, s = traj.sample(step, with_arclength=True)
    if r_d > 0:
        rim = pts[:, None, :] + circle_offsets(tans, r_d, n_circle)
        allpts = np.concatenate([pts[:, None, :], rim], axis=1)
    else:
        allpts = pts[:, None, :]
    c = allpts.shape[1]
    d, flat, i = idx.closest_pair(allpts.reshape(-1, 3))
    row = flat // c
    total = s[-1] if len(s) and s[-1] > 0 else 1.0
    return ClearanceReport(
        min_distance=d,
        nearest_structure=idx.names[idx.labels[i]],
        location_t=float(s[row] / total) if len(s) > 1 else 0.0,
    )


def centerline_clearance(idx: SpatialIndex, traj, step: float = DEFAULT_STEP) -> float:
    pts, _ = traj.sample(step)
    return idx.closest_pair(pts)[0]


def brute_force_nearest(points: np.ndarray, p) -> tuple[float, int]:
    """Linear-scan reference for :meth:`SpatialIndex.nearest`."""
    d = np.sqrt(((points - np.asarray(p, dtype=float)) ** 2).sum(axis=1))
    best = d.min()
    return float(best), int(np.flatnonzero(d == best)[0])


def sample_triangle_mesh(vertices, faces, density: float) -> np.ndarray:
    """Deterministic surface points on a triangle mesh at ``density`` points per mm^2.

    The total ``round(area * density)`` is split over the triangles by
    cumulative rounding of their areas; inside each triangle points follow an
    R2 low-discrepancy sequence folded into the triangle.
    """
    v = np.asarray(vertices, dtype=float)
    f = np.asarray(faces, dtype=int).reshape(-1, 3)
    a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    cum = np.round(np.cumsum(areas) * density).astype(int)
    counts = np.diff(np.concatenate([[0], cum]))
    g = 1.32471795724474602596  # plastic number
    alpha = np.array([1.0 / g, 1.0 / (g * g)])
    out = []
    for k in np.flatnonzero(counts):
        n = np.arange(1, counts[k] + 1)[:, None]
        uv = (0.5 + n * alpha) % 1.0
        flip = uv.sum(axis=1) > 1.0
        uv[flip] = 1.0 - uv[flip]
        out.append(a[k] + uv[:, :1] * (b[k] - a[k]) + uv[:, 1:] * (c[k] - a[k]))
    return np.concatenate(out) if out else np.zeros((0, 3))


def mesh_area(vertices, faces) -> float:
    v = np.asarray(vertices, dtype=float)
    f = np.asarray(faces, dtype=int).reshape(-1, 3)
    return float(0.5 * np.linalg.norm(np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]]), axis=1).sum())

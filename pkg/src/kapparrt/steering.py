"""Curvature-bounded segments and the two local steering functions.

Segments carry their geometry in the direction they were built.  A
``backward`` flag reverses the direction of travel without touching the
geometry, so a reversed segment samples exactly the same points as the
original (in reverse order) and planning-time clearance checks stay valid
after goal-tree branches are turned around.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .se3core import Pose, cross3, minimal_twist_orientation, quat_from_axis_angle, quat_mul, quat_normalize

# Bezier-spiral shape constants.  c1 is chosen so that the two spirals of a
# corner meet exactly at the midpoint of their inner control points.
C2 = 0.4 * (math.sqrt(6.0) - 1.0)
C1 = (C2 + 4.0) * (C2 + 1.0)
C3 = (C2 + 4.0) / (C1 + 6.0)
C4 = (C2 + 4.0) ** 2 / (54.0 * C3)

_DEDUP = 1e-7
_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)
_GL_T = 0.5 * (_GL_X + 1.0)
# derivative basis at the quadrature nodes: d1 = _GL_D @ diff(P)
_GL_D = 3.0 * np.stack([(1 - _GL_T) ** 2, 2 * (1 - _GL_T) * _GL_T, _GL_T**2], axis=1)


@dataclass(frozen=True)
class SteerConfig:
    kappa_max: float
    delta_t: float = 2.0

    def __post_init__(self):
        if not self.delta_t > 0:
            raise ValueError("delta_t must be > 0")
        if not self.kappa_max > 0:
            raise ValueError("kappa_max must be > 0")


def _intervals(length: float, step: float) -> int:
    return max(1, math.ceil(length / step - 1e-9))


@dataclass(frozen=True, eq=False)
class ArcSegment:
    """Circular arc (or straight line when ``radius`` is infinite).

    ``start`` is the pose where construction began, ``axis`` the plane normal
    (binormal), ``center`` the circle centre (the start position for lines).
    """

    start: Pose
    center: np.ndarray
    axis: np.ndarray
    angle: float
    radius: float
    length: float
    end: Pose = field(repr=False)
    backward: bool = False

    @property
    def straight(self) -> bool:
        return math.isinf(self.radius)

    @property
    def curvature(self) -> float:
        return 0.0 if self.straight else 1.0 / self.radius

    @property
    def start_pose(self) -> Pose:
        return self.end.flipped() if self.backward else self.start

    @property
    def end_pose(self) -> Pose:
        return self.start.flipped() if self.backward else self.end

    def reversed(self) -> "ArcSegment":
        return replace(self, backward=not self.backward)

    def _frame(self):
        t = self.start.tangent
        if self.straight:
            return t, None
        n = (self.center - self.start.position) / self.radius
        return t, n

    def points(self, step: float) -> np.ndarray:
        return self.sample(step)[0]

    def sample(self, step: float):
        """Positions and travel-direction tangents every <= ``step`` mm, endpoints included."""
        m = _intervals(self.length, step) if self.length > 0 else 0
        s = np.linspace(0.0, self.length, m + 1)
        t, n = self._frame()
        x = self.start.position
        if n is None:
            pts = x + s[:, None] * t
            tans = np.repeat(t[None, :], len(s), axis=0)
        else:
            th = s / self.radius
            pts = x + self.radius * (np.sin(th)[:, None] * t + (1.0 - np.cos(th))[:, None] * n)
            tans = np.cos(th)[:, None] * t + np.sin(th)[:, None] * n
        if self.backward:
            return pts[::-1].copy(), -tans[::-1]
        return pts, tans

    def analytic_max_curvature(self) -> float:
        return self.curvature


def make_arc(start: Pose, normal, radius: float, length: float) -> ArcSegment:
    """Arc leaving ``start`` along its z-axis and bending toward unit ``normal``."""
    t = start.tangent
    x = start.position
    if math.isinf(radius):
        end = Pose(x + length * t, start.orientation)
        return ArcSegment(start, x.copy(), np.zeros(3), 0.0, math.inf, float(length), end)
    if length == 0.0:
        return ArcSegment(start, x.copy(), np.zeros(3), 0.0, float(radius), 0.0, start)
    n = np.asarray(normal, dtype=float)
    angle = length / radius
    axis = cross3(t, n)
    pos = x + radius * (math.sin(angle) * t + (1.0 - math.cos(angle)) * n)
    q = quat_normalize(quat_mul(quat_from_axis_angle(axis, angle), start.orientation))
    end = Pose(pos, q)
    return ArcSegment(start, x + radius * n, axis, float(angle), float(radius), float(length), end)


# Bernstein to power basis: a cubic is sum_k (_TO_POWER @ P)[k] t^k
_TO_POWER = np.array([[1, 0, 0, 0], [-3, 3, 0, 0], [3, -6, 3, 0], [-1, 3, -3, 1]], dtype=float)


def _bezier(P: np.ndarray, t: np.ndarray):
    """Points, first and second derivatives of a cubic with control points ``P`` (4, 3)."""
    C = _TO_POWER @ P
    V = np.vander(np.asarray(t, dtype=float), 4, increasing=True)
    return V @ C, V[:, :3] @ (C[1:] * [[1.0], [2.0], [3.0]]), V[:, :2] @ (C[2:] * [[2.0], [6.0]])


def _bezier_length(P: np.ndarray) -> float:
    d1 = _GL_D @ np.diff(P, axis=0)
    return float(0.5 * (_GL_W * np.linalg.norm(d1, axis=1)).sum())


def bezier_curvature(P: np.ndarray, t) -> np.ndarray:
    _, d1, d2 = _bezier(P, np.atleast_1d(t))
    sp = np.linalg.norm(d1, axis=1)
    return np.linalg.norm(np.cross(d1, d2), axis=1) / sp**3


@dataclass(frozen=True, eq=False)
class SplineSegment:
    """Two cubic Bezier spirals sharing a junction: ``ctrl[0]`` then ``ctrl[1]``.

    Curvature rises monotonically from zero to its maximum at the junction and
    falls back to zero, so chained splines are G2 at every node.
    """

    ctrl: np.ndarray
    start: Pose
    end: Pose = field(repr=False)
    lengths: tuple = (0.0, 0.0)
    backward: bool = False

    @property
    def control_points(self) -> np.ndarray:
        return self.ctrl.reshape(8, 3)

    @property
    def length(self) -> float:
        return self.lengths[0] + self.lengths[1]

    @property
    def start_pose(self) -> Pose:
        return self.end.flipped() if self.backward else self.start

    @property
    def end_pose(self) -> Pose:
        return self.start.flipped() if self.backward else self.end

    def reversed(self) -> "SplineSegment":
        return replace(self, backward=not self.backward)

    def _sample_curve(self, P: np.ndarray, length: float, step: float):
        m = _intervals(length, step * 0.999)
        fine = np.linspace(0.0, 1.0, 16 * m + 1)
        pts, _, _ = _bezier(P, fine)
        cum = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
        target = np.linspace(0.0, cum[-1], m + 1)
        tt = np.interp(target, cum, fine)
        tt[0], tt[-1] = 0.0, 1.0
        p, d1, _ = _bezier(P, tt)
        sp = np.linalg.norm(d1, axis=1, keepdims=True)
        return p, d1 / sp

    def sample(self, step: float):
        p1, t1 = self._sample_curve(self.ctrl[0], self.lengths[0], step)
        p2, t2 = self._sample_curve(self.ctrl[1], self.lengths[1], step)
        pts = np.concatenate([p1, p2[1:]])
        tans = np.concatenate([t1, t2[1:]])
        if self.backward:
            return pts[::-1].copy(), -tans[::-1]
        return pts, tans

    def points(self, step: float) -> np.ndarray:
        """Centreline points no farther than ``step`` apart (uniform in the curve parameter).

        Cheaper than :meth:`sample`: the speed of a cubic never exceeds three
        times its longest control leg, which fixes the parameter spacing.
        """
        out = []
        for P in self.ctrl:
            D = np.diff(P, axis=0)
            vmax = 3.0 * math.sqrt(float(np.einsum("ij,ij->i", D, D).max()))
            m = max(1, math.ceil(vmax / step))
            out.append(np.vander(np.linspace(0.0, 1.0, m + 1), 4, increasing=True) @ (_TO_POWER @ P))
        return np.concatenate([out[0], out[1][1:]])

    def analytic_max_curvature(self, n: int = 2001) -> float:
        t = np.linspace(0.0, 1.0, n)
        return float(max(bezier_curvature(self.ctrl[0], t).max(), bezier_curvature(self.ctrl[1], t).max()))


Segment = Union[ArcSegment, SplineSegment]


def corner_leg_for(gamma: float, kappa: float) -> float:
    """Shortest corner leg whose smoothing spirals stay within curvature ``kappa``."""
    beta = 0.5 * gamma
    return C4 * math.sin(beta) / (kappa * math.cos(beta) ** 2)


def max_turn_for_leg(leg: float, kappa: float) -> float:
    """Largest corner angle smoothable with leg ``leg`` at curvature ``kappa``."""
    a = kappa * leg / C4
    if a <= 0:
        return 0.0
    s = (-1.0 + math.sqrt(1.0 + 4.0 * a * a)) / (2.0 * a)
    return 2.0 * math.asin(min(1.0, s))


def corner_spline(start: Pose, corner, out_dir, leg: float) -> SplineSegment:
    """Smooth the corner ``start -> corner -> corner + leg*out_dir`` with two Bezier spirals.

    ``start`` must lie on the incoming line at distance ``leg`` from the corner.
    """
    W = np.asarray(corner, dtype=float)
    u_out = np.asarray(out_dir, dtype=float)
    x = start.position
    u_in = (x - W) / leg
    g, h = C2 * C3 * leg, C3 * leg
    B0 = x
    B1 = B0 - g * u_in
    B2 = B1 - h * u_in
    E0 = W + leg * u_out
    E1 = E0 - g * u_out
    E2 = E1 - h * u_out
    J = 0.5 * (B2 + E2)
    ctrl = np.array([[B0, B1, B2, J], [J, E2, E1, E0]])
    end = Pose(E0, minimal_twist_orientation(u_out, start.orientation))
    return SplineSegment(ctrl, start, end, (_bezier_length(ctrl[0]), _bezier_length(ctrl[1])))


def straight_spline(start: Pose, length: float) -> SplineSegment:
    t = start.tangent
    return corner_spline(start, start.position + 0.5 * length * t, t, 0.5 * length)


def steer_arc(q_near: Pose, p_rand, cfg: SteerConfig):
    """Extend along the circle tangent to ``q_near`` through ``p_rand``.

    Curvature above ``kappa_max`` saturates at radius ``1/kappa_max`` in the
    same plane.  The step is ``delta_t`` or the arc length to the closest
    approach of ``p_rand``, whichever is shorter.  Returns ``(segment, end)``
    or ``None`` when no forward motion on the arc gets closer to the target.
    """
    x = q_near.position
    t = q_near.tangent
    v = np.asarray(p_rand, dtype=float) - x
    dist = math.sqrt(float(v @ v))
    if dist == 0.0:
        return None
    d = float(v @ t)
    w = v - d * t
    e = math.sqrt(float(w @ w))
    if e <= 1e-12 * dist:
        if d <= 0:
            return None
        seg = make_arc(q_near, None, math.inf, min(cfg.delta_t, dist))
        return seg, seg.end
    n = w / e
    r = dist * dist / (2.0 * e)
    r = max(r, 1.0 / cfg.kappa_max)
    rel = v - r * n
    phi = math.atan2(float(rel @ t), -float(rel @ n)) % (2.0 * math.pi)
    if not 0.0 < phi <= math.pi:
        return None
    seg = make_arc(q_near, n, r, min(cfg.delta_t, r * phi))
    gap = seg.end.position - p_rand
    if float(gap @ gap) >= dist * dist:
        return None
    return seg, seg.end


def steer_spline(q_near: Pose, p_rand, cfg: SteerConfig):
    """Extend with a pair of Bezier spirals turning toward ``p_rand``.

    The virtual corner sits ``delta_t/2`` ahead on the current tangent; the
    outgoing leg points at ``p_rand`` unless that turn would exceed
    ``kappa_max`` with this leg length, in which case the turn is clamped to
    the largest admissible angle in the same plane.  Returns ``(segment, end)``
    or ``None`` when the extension does not approach the target.
    """
    x = q_near.position
    t = q_near.tangent
    p = np.asarray(p_rand, dtype=float)
    v = p - x
    dist = math.sqrt(float(v @ v))
    if dist == 0.0:
        return None
    step = min(cfg.delta_t, dist)
    d = float(v @ t)
    w = v - d * t
    e = math.sqrt(float(w @ w))
    if e <= 1e-12 * dist:
        if d <= 0:
            return None
        seg = straight_spline(q_near, step)
        return seg, seg.end
    leg = 0.5 * step
    W = x + leg * t
    u = p - W
    un = math.sqrt(float(u @ u))
    n = w / e
    gamma = math.atan2(float(u @ n), float(u @ t)) if un > 0 else 0.0
    gamma = min(max(gamma, 0.0), max_turn_for_leg(leg, cfg.kappa_max))
    out = math.cos(gamma) * t + math.sin(gamma) * n
    seg = corner_spline(q_near, W, out, leg)
    gap = seg.end.position - p
    if float(gap @ gap) >= dist * dist:
        return None
    return seg, seg.end


def circumradius_curvature(pts: np.ndarray) -> np.ndarray:
    """Curvature ``1/R`` of the circle through each consecutive point triple."""
    a = pts[1:-1] - pts[:-2]
    b = pts[2:] - pts[1:-1]
    c = pts[2:] - pts[:-2]
    cr = np.linalg.norm(np.cross(a, c), axis=1)
    den = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1) * np.linalg.norm(c, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(den > 0, 2.0 * cr / den, 0.0)
    return k


def _dedup(pts: np.ndarray, *others):
    if len(pts) < 2:
        return (pts,) + others
    keep = np.concatenate([[True], np.linalg.norm(np.diff(pts, axis=0), axis=1) > _DEDUP])
    return (pts[keep],) + tuple(o[keep] for o in others)


def segment_max_curvature(seg: Segment, step: float = 0.1) -> float:
    """Largest three-point circumradius curvature over samples every ``step`` mm."""
    if step <= 0:
        raise ValueError("step must be > 0")
    if seg.length < 2.0 * step:
        if isinstance(seg, ArcSegment):
            return seg.curvature
        mid = np.array([1.0])
        return float(bezier_curvature(seg.ctrl[0], mid)[0])
    pts, _ = seg.sample(step)
    (pts,) = _dedup(pts)
    if len(pts) < 3:
        return 0.0
    return float(circumradius_curvature(pts).max())


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Ordered chain of segments from an initial state to a goal state."""

    segments: tuple

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ValueError("empty trajectory")

    @property
    def start_pose(self) -> Pose:
        return self.segments[0].start_pose

    @property
    def end_pose(self) -> Pose:
        return self.segments[-1].end_pose

    @property
    def length(self) -> float:
        return float(sum(s.length for s in self.segments))

    def sample(self, step: float = 0.1, with_arclength: bool = False):
        """Concatenated per-segment samples; coincident junction points are merged."""
        parts_p, parts_t = [], []
        for seg in self.segments:
            p, t = seg.sample(step)
            parts_p.append(p)
            parts_t.append(t)
        pts = np.concatenate(parts_p)
        tans = np.concatenate(parts_t)
        pts, tans = _dedup(pts, tans)
        if not with_arclength:
            return pts, tans
        s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
        return pts, tans, s

    def max_curvature(self, step: float = 0.1) -> float:
        """Discrete curvature over each segment and across every junction."""
        k = max(segment_max_curvature(s, step) for s in self.segments)
        pts, _ = self.sample(step)
        if len(pts) >= 3:
            k = max(k, float(circumradius_curvature(pts).max()))
        return k

    def poses(self, step: float = 0.1):
        """(arc length, position, quaternion) rows; roll follows each segment's start pose."""
        rows = []
        s0 = 0.0
        for seg in self.segments:
            p, t = seg.sample(step)
            s = s0 + np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(p, axis=0), axis=1))])
            ref = seg.start_pose.orientation
            for i in range(len(p)):
                if rows and i == 0 and np.linalg.norm(p[0] - rows[-1][1]) <= _DEDUP:
                    continue
                rows.append((float(s[i]), p[i], minimal_twist_orientation(t[i], ref)))
            s0 = float(s[-1])
        return rows

    def reversed(self) -> "Trajectory":
        return Trajectory(tuple(s.reversed() for s in reversed(self.segments)))


def steer(flavor: str, q_near: Pose, p_rand, cfg: SteerConfig):
    if flavor == "arc":
        return steer_arc(q_near, p_rand, cfg)
    if flavor == "spline":
        return steer_spline(q_near, p_rand, cfg)
    raise ValueError(f"unknown steering flavor {flavor!r}")

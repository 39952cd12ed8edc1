"""Two-point boundary-value connectors between the trees and the cone test.

``dubins3d`` solves for the straight-line direction of an arc-line-arc path;
once the direction is known both arcs are fixed (each turns in the plane of
its two tangents), which leaves a two-dimensional nonlinear system.
``spline_connect`` alternates Bezier-spiral steering from both ends and
closes the gap with an exact two-corner spiral weld.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .se3core import MetricConfig, Pose, cross3, minimal_twist_orientation
from .steering import (
    ArcSegment,
    C4,
    SteerConfig,
    Trajectory,
    corner_leg_for,
    corner_spline,
    make_arc,
    steer_spline,
)

DUBINS_TOL = 1e-8
DUBINS_MAX_ITER = 50
STALL_ITER = 6  # Newton gives up after this many steps without halving the residual
PHI_CONNECT = 1e-3


@dataclass(frozen=True)
class ConeQuery:
    apex: np.ndarray
    axis: np.ndarray
    height: float = 5.0
    half_angle: float = math.radians(20.0)

    def __post_init__(self):
        if not self.height > 0:
            raise ValueError("cone height must be > 0")
        if not 0 < self.half_angle < math.pi / 2:
            raise ValueError("cone half_angle must lie in (0, pi/2)")

    @classmethod
    def at(cls, pose: Pose, height: float = 5.0, half_angle: float = math.radians(20.0)) -> "ConeQuery":
        return cls(pose.position, pose.tangent, height, half_angle)


def cone_candidates(tree, q_next: Pose, query: ConeQuery, cfg: MetricConfig = MetricConfig()) -> list[int]:
    """Nodes of ``tree`` inside the cone, nearest first.

    Candidates belong to the opposite tree and therefore point the other way;
    they are ranked by the pose metric after flipping them into ``q_next``'s
    direction convention.  Ties are broken by node id.
    """
    P = tree.positions
    rel = P - query.apex
    ax = query.axis
    h = rel[:, 0] * ax[0] + rel[:, 1] * ax[1] + rel[:, 2] * ax[2]
    r2 = rel[:, 0] * rel[:, 0] + rel[:, 1] * rel[:, 1] + rel[:, 2] * rel[:, 2]
    cos_a = math.cos(query.half_angle)
    inside = (h >= 0.0) & (h <= query.height) & (h >= np.sqrt(r2) * cos_a)
    ids = np.flatnonzero(inside)
    if len(ids) == 0:
        return []
    d = _flipped_pose_metric(tree, ids, q_next, cfg)
    order = np.lexsort((ids, d))
    return [int(i) for i in ids[order]]


def _flipped_pose_metric(tree, ids, q: Pose, cfg: MetricConfig) -> np.ndarray:
    P = tree.positions[ids]
    Q = tree.quaternions[ids]
    x = q.position
    dx = P[:, 0] - x[0]
    dy = P[:, 1] - x[1]
    dz = P[:, 2] - x[2]
    pos = np.sqrt(dx * dx + dy * dy + dz * dz)
    h = q.orientation
    # flipped quaternion is (-b, a, d, -c)
    dot = -Q[:, 1] * h[0] + Q[:, 0] * h[1] + Q[:, 3] * h[2] + -Q[:, 2] * h[3]
    dot = np.clip(dot, -1.0, 1.0)
    ang = np.minimum(np.arccos(dot), np.arccos(-dot))
    return pos + cfg.angular_weight * ang


# -- 3D Dubins ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DubinsSolution:
    segments: tuple
    total_length: float
    iterations: int
    residual: float

    def trajectory(self) -> Trajectory:
        return Trajectory(self.segments)


def _turn(a, b, long=False):
    """Turn angle from unit ``a`` to unit ``b`` and the unit normal it bends toward.

    The short turn bends toward ``b``; the long turn (``2 pi`` minus the short
    angle) bends away from it.  The normal is None when ``a`` and ``b`` are
    parallel, where only the zero turn is well defined.
    """
    c = a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
    px, py, pz = b[0] - c * a[0], b[1] - c * a[1], b[2] - c * a[2]
    s = math.sqrt(px * px + py * py + pz * pz)
    ang = math.atan2(s, c)
    if s < 1e-14:
        if c > 0 and not long:
            return 0.0, None
        return math.pi, None
    if long:
        return 2.0 * math.pi - ang, (-px / s, -py / s, -pz / s)
    return ang, (px / s, py / s, pz / s)


def _csc_gap(u, ta, tb, chord, r, word=(False, False)):
    """Chord minus both arc displacements for line direction ``u``; None if a U-turn is implied."""
    tha, na = _turn(ta, u, word[0])
    thb, nb = _turn(u, tb, word[1])
    if (na is None and tha > 0) or (nb is None and thb > 0):
        return None
    gx, gy, gz = chord
    if na is not None:
        s, c1 = r * math.sin(tha), r * (1.0 - math.cos(tha))
        gx -= s * ta[0] + c1 * na[0]
        gy -= s * ta[1] + c1 * na[1]
        gz -= s * ta[2] + c1 * na[2]
    if nb is not None:
        s, c1 = r * math.sin(thb), r * (1.0 - math.cos(thb))
        gx -= s * u[0] + c1 * nb[0]
        gy -= s * u[1] + c1 * nb[1]
        gz -= s * u[2] + c1 * nb[2]
    return gx, gy, gz


def _normalize3(v):
    n = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    return (v[0] / n, v[1] / n, v[2] / n), n


def _cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def _dot(a, b) -> float:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _planar_guesses(ta, tb, chord, r):
    """Straight-line directions of the planar CSC paths in the plane of the chord and ``ta``.

    Tangents are projected into that plane; each guess is the direction of a
    common tangent of the start and end turning circles, paired with flags
    telling whether either arc of that planar path turns by more than pi.
    """
    e1, L = _normalize3(chord)
    m = _cross(e1, ta)
    if _dot(m, m) < 1e-18:
        m = _cross(e1, tb)
    if _dot(m, m) < 1e-18:
        m = _cross(e1, (1.0, 0.0, 0.0) if abs(e1[0]) < 0.9 else (0.0, 1.0, 0.0))
    m, _ = _normalize3(m)
    e2 = _cross(m, e1)

    def proj(v):
        x, y = _dot(v, e1), _dot(v, e2)
        n = math.hypot(x, y)
        return (1.0, 0.0) if n < 1e-12 else (x / n, y / n)

    a = proj(ta)
    b = proj(tb)
    head_a = math.atan2(a[1], a[0])
    head_b = math.atan2(b[1], b[0])
    guesses = []
    for sa in (1.0, -1.0):
        ca = (-sa * a[1] * r, sa * a[0] * r)  # left (+1) / right (-1) circle centres
        for sb in (1.0, -1.0):
            cb = (L - sb * b[1] * r, sb * b[0] * r)
            dx, dy = cb[0] - ca[0], cb[1] - ca[1]
            D = math.hypot(dx, dy)
            if D < 1e-12:
                continue
            if sa == sb:
                ux, uy = dx / D, dy / D
            else:
                # inner tangent: rotate the centre line by asin(2r/D)
                if D <= 2 * r:
                    continue
                th = math.asin(2 * r / D) * sa
                ux = dx / D * math.cos(th) - dy / D * math.sin(th)
                uy = dx / D * math.sin(th) + dy / D * math.cos(th)
            hu = math.atan2(uy, ux)
            long_a = (sa * (hu - head_a)) % (2 * math.pi) > math.pi
            long_b = (sb * (head_b - hu)) % (2 * math.pi) > math.pi
            u3 = tuple(ux * e1[i] + uy * e2[i] for i in range(3))
            guesses.append((u3, (long_a, long_b)))
    return guesses


def _direction_residual(u, ta, tb, chord, r, word):
    """Part of ``gap(u)`` orthogonal to ``u`` (mm), plus the gap vector.

    It vanishes exactly when the straight piece can bridge the gap; working
    in millimetres rather than with the normalised gap keeps the system well
    conditioned when the straight piece shrinks to zero length.
    """
    g = _csc_gap(u, ta, tb, chord, r, word)
    if g is None:
        return None
    along = _dot(g, u)
    return (g[0] - along * u[0], g[1] - along * u[1], g[2] - along * u[2]), g


def _solve_direction(u0, ta, tb, chord, r, tol, max_iter, word=(False, False)):
    """Damped Newton on a tangent-plane parametrisation of the line direction ``u``.

    Returns ``(u, line_length, residual, iterations)`` or ``None``.
    """
    u, _ = _normalize3(u0)
    h = 1e-7
    best, since = math.inf, 0
    for it in range(1, max_iter + 1):
        out = _direction_residual(u, ta, tb, chord, r, word)
        if out is None:
            return None
        F, g = out
        along = _dot(g, u)
        res = math.sqrt(_dot(F, F))
        if res <= tol:
            if along < -tol:
                return None
            return u, max(along, 0.0), res, it
        if res < 0.5 * best:
            best, since = res, 0
        else:
            since += 1
            if since >= STALL_ITER:
                return None
        e1, _ = _normalize3(_cross(u, (1.0, 0.0, 0.0) if abs(u[0]) < 0.9 else (0.0, 1.0, 0.0)))
        e2 = _cross(u, e1)
        f = (_dot(F, e1), _dot(F, e2))
        cols = []
        for e in (e1, e2):
            up, _ = _normalize3((u[0] + h * e[0], u[1] + h * e[1], u[2] + h * e[2]))
            op = _direction_residual(up, ta, tb, chord, r, word)
            if op is None:
                break
            cols.append(((_dot(op[0], e1) - f[0]) / h, (_dot(op[0], e2) - f[1]) / h))
        det = cols[0][0] * cols[1][1] - cols[1][0] * cols[0][1] if len(cols) == 2 else 0.0
        if det == 0.0 or not math.isfinite(det):
            if _dot(g, g) == 0.0:
                return None
            u, _ = _normalize3(g)  # fixed-point fallback
            continue
        sa = -(f[0] * cols[1][1] - cols[1][0] * f[1]) / det
        sb = -(cols[0][0] * f[1] - f[0] * cols[0][1]) / det
        norm = math.hypot(sa, sb)
        if norm > 0.5:
            sa, sb = sa * 0.5 / norm, sb * 0.5 / norm
        u, _ = _normalize3(tuple(u[i] + sa * e1[i] + sb * e2[i] for i in range(3)))
    return None


def _build_dubins(q_a: Pose, q_b: Pose, u, r, word=(False, False)):
    ta = tuple(float(v) for v in q_a.tangent)
    tb = tuple(float(v) for v in q_b.tangent)
    u = tuple(float(v) for v in u)
    tha, na = _turn(ta, u, word[0])
    thb, nb = _turn(u, tb, word[1])
    arc_a = make_arc(q_a, na, r, r * tha) if na is not None else make_arc(q_a, None, r, 0.0)
    # end arc grown backward from the goal pose so it ends there exactly; walking
    # it backward it bends toward -u, i.e. opposite to the forward normal's tb part
    back = q_b.flipped()
    if nb is not None:
        c = _dot(u, tb)
        n_end = np.array([c * tb[i] - u[i] for i in range(3)]) / math.sqrt(max(1e-300, 1.0 - c * c))
        if word[1]:
            n_end = -n_end
        arc_b = make_arc(back, n_end, r, r * thb).reversed()
    else:
        arc_b = make_arc(back, None, r, 0.0).reversed()
    P = arc_a.end_pose.position
    S = arc_b.start_pose.position
    line_vec = S - P
    L = float(np.linalg.norm(line_vec))
    if L > 0:
        line_start = Pose(P, minimal_twist_orientation(line_vec, arc_a.end_pose.orientation))
    else:
        line_start = arc_a.end_pose
    line = make_arc(line_start, None, math.inf, L)
    return arc_a, line, arc_b


def dubins3d(
    q_a: Pose,
    q_b: Pose,
    kappa_max: float,
    tol: float = DUBINS_TOL,
    max_iter: int = DUBINS_MAX_ITER,
    exhaustive: bool = True,
):
    """Arc-line-arc path from ``q_a`` to ``q_b`` with turning radius ``1/kappa_max``.

    Each start guess (the chord and the planar CSC lines in the plane of the
    chord and the start tangent) is refined with damped Newton; the shortest
    converged path is returned.  ``None`` signals that no CSC path was found.
    """
    r = 1.0 / kappa_max
    chord = q_b.position - q_a.position
    if float(np.linalg.norm(chord)) < 1e-9:
        return None
    ta = tuple(float(v) for v in q_a.tangent)
    tb = tuple(float(v) for v in q_b.tangent)
    ch = tuple(float(v) for v in chord)
    guesses = [(_normalize3(ch)[0], (False, False))] + _planar_guesses(ta, tb, ch, r)
    found = []
    total_iter = 0
    for g, word in guesses:
        out = _solve_direction(g, ta, tb, ch, r, tol, max_iter, word)
        if out is None:
            continue
        u, line, res, it = out
        total_iter += it
        length = r * (_turn(ta, u, word[0])[0] + _turn(u, tb, word[1])[0]) + line
        found.append((length, u, res, word))
        if not exhaustive:
            break
    if not found:
        return None
    length, u, res, word = min(found, key=lambda f: f[0])
    segs = _build_dubins(q_a, q_b, u, r, word)
    best = DubinsSolution(tuple(segs), float(sum(s.length for s in segs)), total_iter, res)
    # endpoint check on the assembled geometry
    end_gap = best.segments[1].end_pose.position - best.segments[2].start_pose.position
    if float(np.linalg.norm(end_gap)) > 1e-6:
        return None
    return best


# -- spline connection ---------------------------------------------------------


def _angle(a, b) -> float:
    c = float(np.clip(a @ b, -1.0, 1.0))
    s = math.sqrt(float(np.square(cross3(a, b)).sum()))
    return math.atan2(s, c)


WELD_FRACTIONS = tuple(np.round(np.linspace(0.05, 0.95, 19), 2))


def _weld_grid(xa, ta, xb, tb, kappa_max: float, fractions=WELD_FRACTIONS):
    """Admissible corner placements for pose pairs given as broadcastable (m, 3) arrays.

    Returns ``ok`` of shape (m, n*n) together with ``s1``, ``s2`` and ``lm`` of
    the same shape, ``n`` being the number of fractions.
    """
    xa, ta, xb, tb = (np.atleast_2d(np.asarray(v, dtype=float)) for v in (xa, ta, xb, tb))
    d = xb - xa
    chord = np.sqrt(np.einsum("ij,ij->i", d, d))[:, None]
    f = np.asarray(fractions, dtype=float)
    n = len(f)
    s1 = np.repeat(f, n)[None, :] * chord
    s2 = np.tile(f, n)[None, :] * chord
    mid = d[:, None, :] - s2[:, :, None] * tb[:, None, :] - s1[:, :, None] * ta[:, None, :]
    lm = np.sqrt(np.einsum("ijk,ijk->ij", mid, mid))
    with np.errstate(invalid="ignore", divide="ignore"):
        c1 = np.einsum("ijk,ik->ij", mid, ta) / lm
        c2 = np.einsum("ijk,ik->ij", mid, tb) / lm
        # corner_leg_for written with the half-angle identities of cos(g)
        l1 = C4 * np.sqrt(np.maximum(0.5 * (1.0 - c1), 0.0)) / (kappa_max * 0.5 * (1.0 + c1))
        l2 = C4 * np.sqrt(np.maximum(0.5 * (1.0 - c2), 0.0)) / (kappa_max * 0.5 * (1.0 + c2))
    ok = (chord > 1e-9) & (lm > 1e-9) & (c1 > 0.0) & (c2 > 0.0) & (l1 <= s1) & (l2 <= s2) & (l1 + l2 <= lm)
    return ok, np.broadcast_to(s1, ok.shape), np.broadcast_to(s2, ok.shape), lm


def weldable(xa, ta, xb, tb, kappa_max: float, fractions=WELD_FRACTIONS) -> np.ndarray:
    """Vectorised test whether :func:`spline_weld` succeeds for each pose pair."""
    xa, ta, xb, tb = (np.atleast_2d(np.asarray(v, dtype=float)) for v in (xa, ta, xb, tb))
    d = xb - xa
    chord = np.sqrt(np.einsum("ij,ij->i", d, d))
    with np.errstate(invalid="ignore", divide="ignore"):
        e = d / chord[:, None]
    aligned = (
        (np.einsum("ij,ij->i", e, ta) > 0.0)
        & (np.einsum("ij,ij->i", e, tb) > 0.0)
        & (np.linalg.norm(np.cross(e, ta), axis=1) < 1e-12)
        & (np.linalg.norm(np.cross(e, tb), axis=1) < 1e-12)
    )
    ok = _weld_grid(xa, ta, xb, tb, kappa_max, fractions)[0].any(axis=1)
    return (chord >= 1e-9) & (ok | aligned)


def spline_weld(q_a: Pose, q_b: Pose, kappa_max: float, fractions=WELD_FRACTIONS):
    """Exact spiral connection ``q_a -> W1 -> W2 -> q_b`` with corners on both tangent lines.

    ``W1 = x_a + s1 t_a`` and ``W2 = x_b - s2 t_b`` with ``s1``, ``s2`` taken
    from ``fractions`` of the chord; both corners are smoothed with Bezier
    spirals of the shortest admissible legs.  Among the admissible pairs the
    shortest control polygon wins.  The last piece is built backward from
    ``q_b`` so the weld ends on it exactly.
    """
    xa, xb = q_a.position, q_b.position
    ta, tb = q_a.tangent, q_b.tangent
    chord = float(np.linalg.norm(xb - xa))
    if chord < 1e-9:
        return None
    e = (xb - xa) / chord
    if _angle(ta, e) < 1e-12 and _angle(e, tb) < 1e-12:
        return [make_arc(q_a, None, math.inf, chord)]
    ok, s1, s2, lm = (v[0] for v in _weld_grid(xa, ta, xb, tb, kappa_max, fractions))
    if not ok.any():
        return None
    cand = np.flatnonzero(ok)
    k = int(cand[np.argmin((s1 + s2 + lm)[cand])])
    W1 = xa + s1[k] * ta
    W2 = xb - s2[k] * tb
    uk = (W2 - W1) / float(np.linalg.norm(W2 - W1))
    # recompute the legs from the exact corner angles
    a1, a2 = _angle(ta, uk), _angle(uk, tb)
    leg1 = corner_leg_for(a1, kappa_max) if a1 > 1e-12 else 0.0
    leg2 = corner_leg_for(a2, kappa_max) if a2 > 1e-12 else 0.0
    return _assemble_weld(q_a, q_b, W1, W2, uk, leg1, leg2, float(s1[k]), float(s2[k]))


def _assemble_weld(q_a, q_b, W1, W2, u, l1, l2, s1, s2):
    segs = []
    cur = q_a
    head = s1 - l1 if l1 > 0 else 0.0
    if head > 0:
        seg = make_arc(cur, None, math.inf, head)
        segs.append(seg)
        cur = seg.end_pose
    if l1 > 0:
        seg = corner_spline(cur, W1, u, l1)
        segs.append(seg)
        cur = seg.end_pose
    back = q_b.flipped()
    tail = s2 - l2 if l2 > 0 else s2
    tail_seg = make_arc(back, None, math.inf, tail)
    tail_start = tail_seg.end  # position W2 + ..., grown backward from q_b
    corner_end = tail_start.position
    if l2 > 0:
        corner_start_pos = W2 - l2 * u
        mid_len = float(np.linalg.norm(corner_start_pos - cur.position))
        if mid_len > 1e-12:
            seg = make_arc(cur, None, math.inf, mid_len)
            segs.append(seg)
            cur = seg.end_pose
        corner = corner_spline(Pose(corner_start_pos, cur.orientation), W2, q_b.tangent, l2)
        segs.append(corner)
    else:
        mid_len = float(np.linalg.norm(corner_end - cur.position))
        if mid_len > 1e-12:
            seg = make_arc(cur, None, math.inf, mid_len)
            segs.append(seg)
    segs.append(tail_seg.reversed())
    return segs


def spline_connect(q_a: Pose, q_b: Pose, cfg: SteerConfig, max_rounds: int = 20, phi_connect: float = PHI_CONNECT):
    """Connect two poses with Bezier spirals by steering alternately from both ends.

    Each round first tries an exact weld between the current ends; otherwise
    the forward end steers toward the backward end's position and vice versa.
    Fails when the ends drift apart for three consecutive rounds, when either
    side cannot steer, or after ``max_rounds``.
    """
    fwd, bwd = [], []
    a = q_a
    b = q_b.flipped()  # grows backward
    last = float(np.linalg.norm(a.position - b.position))
    worse = 0
    for rnd in range(max_rounds + 1):
        weld = spline_weld(a, b.flipped(), cfg.kappa_max)
        if weld is not None:
            end_err = _angle(weld[-1].end_pose.tangent, q_b.tangent)
            if end_err <= phi_connect:
                segs = fwd + weld + [s.reversed() for s in reversed(bwd)]
                return Trajectory(segs)
        if rnd == max_rounds:
            break
        if float((b.position - a.position) @ a.tangent) <= 2.0 * cfg.delta_t:
            return None  # one more step from each side and the ends pass each other
        step = steer_spline(a, b.position, cfg)
        if step is None:
            return None
        fwd.append(step[0])
        a = step[1]
        step = steer_spline(b, a.position, cfg)
        if step is None:
            return None
        bwd.append(step[0])
        b = step[1]
        dist = float(np.linalg.norm(a.position - b.position))
        worse = worse + 1 if dist > last else 0
        if worse >= 3:
            return None
        last = dist
        if float((b.position - a.position) @ a.tangent) <= 0:
            return None  # the ends passed each other
    return None

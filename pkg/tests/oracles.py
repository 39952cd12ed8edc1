"""Independent reference computations used by the test-suite."""

from __future__ import annotations

import math

import numpy as np

TWO_PI = 2.0 * math.pi


def _mod(a: float) -> float:
    return a % TWO_PI


def planar_dubins_csc(start, goal, r):
    """Shortest planar CSC (LSL, RSR, LSR, RSL) length via the Shkel-Lumelsky closed forms.

    ``start`` and ``goal`` are ``(x, y, heading)``.  Returns ``(length, word, (t, p, q))``
    with the arc angles ``t``, ``q`` in radians and ``p`` the normalised straight length.
    """
    dx, dy = goal[0] - start[0], goal[1] - start[1]
    D = math.hypot(dx, dy)
    d = D / r
    th = math.atan2(dy, dx)
    a = _mod(start[2] - th)
    b = _mod(goal[2] - th)
    sa, sb, ca, cb = math.sin(a), math.sin(b), math.cos(a), math.cos(b)
    cab = math.cos(a - b)
    out = []
    p2 = 2 + d * d - 2 * cab + 2 * d * (sa - sb)
    if p2 >= 0:
        tmp = math.atan2(cb - ca, d + sa - sb)
        out.append(("LSL", _mod(-a + tmp), math.sqrt(p2), _mod(b - tmp)))
    p2 = 2 + d * d - 2 * cab + 2 * d * (sb - sa)
    if p2 >= 0:
        tmp = math.atan2(ca - cb, d - sa + sb)
        out.append(("RSR", _mod(a - tmp), math.sqrt(p2), _mod(-b + tmp)))
    p2 = -2 + d * d + 2 * cab + 2 * d * (sa + sb)
    if p2 >= 0:
        p = math.sqrt(p2)
        tmp = math.atan2(-ca - cb, d + sa + sb) - math.atan2(-2.0, p)
        out.append(("LSR", _mod(-a + tmp), p, _mod(-_mod(b) + tmp)))
    p2 = d * d - 2 + 2 * cab - 2 * d * (sa + sb)
    if p2 >= 0:
        p = math.sqrt(p2)
        tmp = math.atan2(ca + cb, d - sa - sb) - math.atan2(2.0, p)
        out.append(("RSL", _mod(a - tmp), p, _mod(b - tmp)))
    word, t, p, q = min(out, key=lambda o: o[1] + o[2] + o[3])
    return (t + p + q) * r, word, (t, p, q)


def simulate_planar_word(start, word, tpq, r):
    """Integrate a planar Dubins word and return the final ``(x, y, heading)``."""
    x, y, h = start
    t, p, q = tpq
    for kind, amount in zip(word, (t, p * r, q)):
        if kind == "S":
            x += amount * math.cos(h)
            y += amount * math.sin(h)
        else:
            s = 1.0 if kind == "L" else -1.0
            nh = h + s * amount
            x += s * r * (math.sin(nh) - math.sin(h))
            y += s * r * (-math.cos(nh) + math.cos(h))
            h = nh
    return x, y, h


def brute_force_cone(positions, apex, axis, height, half_angle):
    out = []
    for i, p in enumerate(positions):
        rel = np.asarray(p) - apex
        h = float(rel @ axis)
        n = float(np.linalg.norm(rel))
        if h < 0 or h > height:
            continue
        ang = 0.0 if n == 0 else math.acos(max(-1.0, min(1.0, h / n)))
        if ang <= half_angle + 1e-12:
            out.append(i)
    return out


def axis_angle_between(q1, q2) -> float:
    """Rotation angle of ``q1^-1 q2`` computed through rotation matrices."""
    from kapparrt.se3core import quat_to_matrix

    R = quat_to_matrix(q1).T @ quat_to_matrix(q2)
    c = (np.trace(R) - 1.0) / 2.0
    return math.acos(max(-1.0, min(1.0, c)))

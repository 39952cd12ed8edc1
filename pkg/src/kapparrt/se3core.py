"""Poses on SE(3), the quaternion rotation metric and the combined pose metric.

Quaternions are stored scalar-first as ``(a, b, c, d)``.  The local z-axis of
a pose is the drill's line of view; every steering function only controls
that axis, roll about it is carried along by minimal-twist transport.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])
_NORM_TOL = 1e-9
_RENORM_DRIFT = 1e-12


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    if n == 0.0:
        raise ValueError("zero quaternion")
    if abs(n - 1.0) > _RENORM_DRIFT:
        return q / n
    return q


def quat_mul(p, q) -> np.ndarray:
    """Hamilton product ``p * q`` (apply ``q`` first, then ``p``)."""
    a1, b1, c1, d1 = p
    a2, b2, c2, d2 = q
    return np.array(
        [
            a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
            a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
            a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
            a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
        ]
    )


def quat_conj(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]], dtype=float)


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    x, y, z = axis
    s = math.sin(0.5 * angle) / math.sqrt(x * x + y * y + z * z)
    return np.array([math.cos(0.5 * angle), x * s, y * s, z * s])


def cross3(a, b) -> np.ndarray:
    return np.array(
        [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
    )


def quat_to_matrix(q) -> np.ndarray:
    a, b, c, d = q
    return np.array(
        [
            [1 - 2 * (c * c + d * d), 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), 1 - 2 * (b * b + d * d), 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), 1 - 2 * (b * b + c * c)],
        ]
    )


def quat_rotate(q, v) -> np.ndarray:
    return quat_to_matrix(q) @ np.asarray(v, dtype=float)


def z_axis(q) -> np.ndarray:
    """Third column of the rotation matrix: the local z-axis in world frame."""
    a, b, c, d = q
    return np.array([2 * (b * d + a * c), 2 * (c * d - a * b), 1 - 2 * (b * b + c * c)])


def quat_distance(h1, h2) -> float:
    """Rotation metric ``min(rho(h1, h2), rho(h1, -h2))`` with ``rho = arccos(h1 . h2)``.

    Antipodal quaternions encode the same rotation and are at distance zero.
    The result lies in ``[0, pi/2]`` and equals half the relative rotation angle.
    """
    dot = h1[0] * h2[0] + h1[1] * h2[1] + h1[2] * h2[2] + h1[3] * h2[3]
    dot = min(1.0, max(-1.0, float(dot)))
    return min(math.acos(dot), math.acos(-dot))


@dataclass(frozen=True)
class MetricConfig:
    """Weight converting the radian term of the pose metric into millimetres.

    The literal metric ``||x - y|| + rho(h1, h2)`` adds mm to rad, which is
    what the default weight of 1 mm/rad reproduces.
    """

    angular_weight: float = 1.0

    def __post_init__(self):
        if not self.angular_weight > 0:
            raise ValueError("angular_weight must be > 0")


@dataclass(frozen=True, eq=False)
class Pose:
    position: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: IDENTITY.copy())

    def __post_init__(self):
        pos = _frozen(self.position)
        if pos.shape != (3,) or not math.isfinite(pos[0] + pos[1] + pos[2]):
            raise ValueError(f"position must be a finite 3-vector, got {self.position!r}")
        q = np.array(self.orientation, dtype=float)
        if q.shape != (4,):
            raise ValueError(f"orientation must be a quaternion, got {self.orientation!r}")
        n = math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
        if not math.isfinite(n) or n == 0.0:
            raise ValueError(f"orientation must be a finite non-zero quaternion, got {self.orientation!r}")
        if abs(n - 1.0) > _RENORM_DRIFT:
            q = q / n
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "orientation", _frozen(q))

    @classmethod
    def from_direction(cls, position, direction, reference=IDENTITY) -> "Pose":
        """Pose at ``position`` whose z-axis is ``direction`` (minimal twist from ``reference``)."""
        return cls(position, minimal_twist_orientation(direction, reference))

    @property
    def tangent(self) -> np.ndarray:
        return z_axis(self.orientation)

    def flipped(self) -> "Pose":
        """Same position, rotated by pi about the local x-axis (z-axis reversed).

        Flipping twice returns the negated quaternion, i.e. the same rotation;
        the component shuffle is exact in floating point.
        """
        a, b, c, d = self.orientation
        return Pose(self.position, np.array([-b, a, d, -c]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Pose):
            return NotImplemented
        return bool(
            np.array_equal(self.position, other.position)
            and np.array_equal(self.orientation, other.orientation)
        )

    def __hash__(self) -> int:
        return hash((self.position.tobytes(), self.orientation.tobytes()))

    def __repr__(self) -> str:
        p = ", ".join(f"{v:.6g}" for v in self.position)
        q = ", ".join(f"{v:.6g}" for v in self.orientation)
        return f"Pose(position=[{p}], orientation=[{q}])"


def pose_distance(q1: Pose, q2: Pose, cfg: MetricConfig = MetricConfig()) -> float:
    a, b = q1.position, q2.position
    dx, dy, dz = a[0] - b[0], a[1] - b[1], a[2] - b[2]
    return math.sqrt(dx * dx + dy * dy + dz * dz) + cfg.angular_weight * quat_distance(
        q1.orientation, q2.orientation
    )


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    if n == 0.0:
        raise ValueError("cannot normalise a zero vector")
    return v / n


def minimal_twist_orientation(direction, reference=IDENTITY) -> np.ndarray:
    """Rotate ``reference`` by the smallest rotation that carries its z-axis onto ``direction``.

    The rotation axis is orthogonal to both z-axes.  For ``direction`` exactly
    opposite the reference z-axis the axis is the world x-axis projected onto
    the plane orthogonal to z (world y if that projection vanishes).  With an
    identity reference, a direction along +x gives +90 degrees about +y.
    """
    v = unit(direction)
    ref = quat_normalize(reference)
    z = z_axis(ref)
    c = z[0] * v[0] + z[1] * v[1] + z[2] * v[2]
    if c >= 1.0 - 1e-15 and max(abs(z[0] - v[0]), abs(z[1] - v[1]), abs(z[2] - v[2])) <= 1e-15:
        return np.array(ref, dtype=float)
    axis = cross3(z, v)
    if c < 0.0 and axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2] < 1e-24:
        ax = np.array([1.0, 0.0, 0.0]) - z[0] * z
        if float(ax @ ax) < 1e-12:
            ax = np.array([0.0, 1.0, 0.0]) - z[1] * z
        ax = unit(ax)
        rot = np.array([0.0, ax[0], ax[1], ax[2]])
    else:
        # half-way quaternion: (1 + cos t, sin t * axis) normalised
        rot = np.array([1.0 + c, axis[0], axis[1], axis[2]])
        rot = rot / math.sqrt(rot[0] * rot[0] + rot[1] * rot[1] + rot[2] * rot[2] + rot[3] * rot[3])
    return quat_normalize(quat_mul(rot, ref))


def roll_free_distance(h, g) -> float:
    """Quaternion metric between ``g`` and ``h`` after discarding roll about the z-axis.

    ``g`` is rotated onto ``h``'s z-axis by minimal twist and compared with
    ``h``; the result is half the angle between the two z-axes.
    """
    aligned = minimal_twist_orientation(z_axis(h), g)
    return quat_distance(aligned, g)

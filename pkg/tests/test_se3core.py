import math

import numpy as np
import pytest

from kapparrt.se3core import (
    IDENTITY,
    MetricConfig,
    Pose,
    minimal_twist_orientation,
    pose_distance,
    quat_conj,
    quat_distance,
    quat_from_axis_angle,
    quat_mul,
    quat_normalize,
    quat_rotate,
    quat_to_matrix,
    roll_free_distance,
    z_axis,
)
from oracles import axis_angle_between


def _random_quats(rng, n):
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def test_quat_mul_matches_matrix_product():
    rng = np.random.default_rng(1)
    for p, q in zip(_random_quats(rng, 200), _random_quats(rng, 200)):
        np.testing.assert_allclose(quat_to_matrix(quat_mul(p, q)), quat_to_matrix(p) @ quat_to_matrix(q), atol=1e-12)


def test_rotation_matrix_is_orthonormal_and_z_axis_is_third_column():
    rng = np.random.default_rng(2)
    for q in _random_quats(rng, 200):
        R = quat_to_matrix(q)
        np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(z_axis(q), R[:, 2], atol=1e-12)
        v = rng.normal(size=3)
        np.testing.assert_allclose(quat_rotate(q, v), R @ v, atol=1e-12)


def test_axis_angle_round_trip():
    q = quat_from_axis_angle([0, 1, 0], math.pi / 2)
    np.testing.assert_allclose(quat_rotate(q, [0, 0, 1]), [1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(quat_mul(q, quat_conj(q)), IDENTITY, atol=1e-15)


def test_quat_distance_is_half_relative_angle_and_sign_invariant():
    rng = np.random.default_rng(3)
    for h1, h2 in zip(_random_quats(rng, 500), _random_quats(rng, 500)):
        d = quat_distance(h1, h2)
        assert 0.0 <= d <= math.pi / 2 + 1e-15
        assert d == pytest.approx(0.5 * axis_angle_between(h1, h2), abs=1e-6)
        assert quat_distance(h1, -h2) == pytest.approx(d, abs=1e-15)
        assert quat_distance(h2, h1) == pytest.approx(d, abs=1e-15)
    assert quat_distance(IDENTITY, -IDENTITY) == 0.0


def test_pose_distance_triangle_inequality():
    rng = np.random.default_rng(4)
    cfg = MetricConfig(2.0)
    for _ in range(300):
        a, b, c = (Pose(rng.normal(size=3), q) for q in _random_quats(rng, 3))
        assert pose_distance(a, c, cfg) <= pose_distance(a, b, cfg) + pose_distance(b, c, cfg) + 1e-12


def test_pose_validation():
    with pytest.raises(ValueError):
        Pose([0, 0])
    with pytest.raises(ValueError):
        Pose([0, 0, math.nan])
    with pytest.raises(ValueError):
        Pose([0, 0, 0], [0, 0, 0, 0])
    with pytest.raises(ValueError):
        MetricConfig(0.0)
    p = Pose([1, 2, 3], [2, 0, 0, 0])
    np.testing.assert_array_equal(p.orientation, IDENTITY)
    with pytest.raises(ValueError):
        p.position[0] = 5.0


def test_flipped_reverses_tangent_exactly():
    rng = np.random.default_rng(5)
    for q in _random_quats(rng, 200):
        p = Pose(rng.normal(size=3), q)
        f = p.flipped()
        np.testing.assert_allclose(f.tangent, -p.tangent, atol=1e-15)
        ff = f.flipped()
        np.testing.assert_array_equal(ff.orientation, -p.orientation)
        # arccos near 1 is ill-conditioned: one ulp of the dot product is ~2e-8 rad
        assert quat_distance(ff.orientation, p.orientation) < 1e-7


def test_minimal_twist():
    np.testing.assert_allclose(
        minimal_twist_orientation([1, 0, 0]), quat_from_axis_angle([0, 1, 0], math.pi / 2), atol=1e-15
    )
    rng = np.random.default_rng(6)
    for ref in _random_quats(rng, 200):
        v = rng.normal(size=3)
        q = minimal_twist_orientation(v, ref)
        np.testing.assert_allclose(z_axis(q), v / np.linalg.norm(v), atol=1e-12)
        # the rotation taking ref to q is exactly the angle between the two z-axes
        ang = math.acos(np.clip(z_axis(ref) @ z_axis(q), -1, 1))
        assert axis_angle_between(ref, q) == pytest.approx(ang, abs=1e-6)
    q = minimal_twist_orientation([0, 0, -1])
    np.testing.assert_allclose(z_axis(q), [0, 0, -1], atol=1e-15)


def test_roll_free_distance_ignores_roll():
    rng = np.random.default_rng(7)
    for g in _random_quats(rng, 200):
        roll = quat_from_axis_angle([0, 0, 1], rng.uniform(-math.pi, math.pi))
        h = quat_normalize(quat_mul(g, roll))
        assert roll_free_distance(h, g) == pytest.approx(0.0, abs=1e-7)
        tilt = quat_from_axis_angle([1, 0, 0], 0.2)
        h2 = quat_normalize(quat_mul(h, tilt))
        assert roll_free_distance(h2, g) == pytest.approx(0.1, abs=1e-9)

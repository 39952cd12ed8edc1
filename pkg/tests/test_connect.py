import math

import numpy as np
import pytest

from conftest import random_pose
from kapparrt.connect import (
    ConeQuery,
    cone_candidates,
    dubins3d,
    spline_connect,
    spline_weld,
    weldable,
)
from kapparrt.se3core import MetricConfig, Pose, pose_distance, quat_from_axis_angle, quat_mul, quat_to_matrix
from kapparrt.steering import SteerConfig, Trajectory
from kapparrt.tree import GOAL, SearchTree
from oracles import brute_force_cone, planar_dubins_csc, simulate_planar_word

KAPPA = 0.05


def _random_tree(rng, n=300, side=GOAL):
    tree = SearchTree([random_pose(rng)], side)
    for _ in range(n):
        tree.add(random_pose(rng), 0, None)
    return tree


def test_cone_candidates_match_brute_force():
    rng = np.random.default_rng(0)
    cfg = MetricConfig()
    for _ in range(100):
        tree = _random_tree(rng)
        q = random_pose(rng)
        query = ConeQuery.at(q, height=float(rng.uniform(3, 15)), half_angle=float(rng.uniform(0.1, 1.2)))
        got = cone_candidates(tree, q, query, cfg)
        ref = brute_force_cone(tree.positions, query.apex, query.axis, query.height, query.half_angle)
        assert sorted(got) == ref
        dist = [pose_distance(q, tree.poses[i].flipped(), cfg) for i in got]
        assert dist == sorted(dist)


def test_cone_query_validation():
    with pytest.raises(ValueError):
        ConeQuery(np.zeros(3), np.array([0, 0, 1.0]), height=0.0)
    with pytest.raises(ValueError):
        ConeQuery(np.zeros(3), np.array([0, 0, 1.0]), half_angle=math.pi / 2)


def _check_dubins(sol, a, b):
    traj = sol.trajectory()
    np.testing.assert_array_equal(traj.start_pose.position, a.position)
    np.testing.assert_allclose(traj.end_pose.position, b.position, atol=1e-9)
    np.testing.assert_allclose(traj.end_pose.tangent, b.tangent, atol=1e-9)
    for s, t in zip(traj.segments, traj.segments[1:]):
        np.testing.assert_allclose(s.end_pose.position, t.start_pose.position, atol=1e-6)
        np.testing.assert_allclose(s.end_pose.tangent, t.start_pose.tangent, atol=1e-6)
    assert traj.max_curvature(0.1) <= KAPPA * (1 + 1e-6)
    assert sol.total_length == pytest.approx(traj.length, rel=1e-12)


def test_dubins_random_instances():
    rng = np.random.default_rng(1)
    solved = 0
    for _ in range(200):
        a, b = random_pose(rng, 50.0), random_pose(rng, 50.0)
        sol = dubins3d(a, b, KAPPA)
        if sol is not None:
            solved += 1
            _check_dubins(sol, a, b)
    assert solved >= 190


def _planar_pose(x, y, heading):
    # plane coordinates (x, y) map to world (z, x); heading is measured from +z toward +x
    q = quat_from_axis_angle([0, 1, 0], heading)
    return Pose([y, 0.0, x], q)


def test_dubins_matches_planar_oracle():
    rng = np.random.default_rng(2)
    r = 1.0 / KAPPA
    for _ in range(200):
        s = (0.0, 0.0, float(rng.uniform(-math.pi, math.pi)))
        g = (float(rng.uniform(-80, 80)), float(rng.uniform(-80, 80)), float(rng.uniform(-math.pi, math.pi)))
        ref, word, tpq = planar_dubins_csc(s, g, r)
        # the oracle itself must reach the goal
        end = simulate_planar_word(s, word, tpq, r)
        assert math.hypot(end[0] - g[0], end[1] - g[1]) < 1e-6
        sol = dubins3d(_planar_pose(*s), _planar_pose(*g), KAPPA)
        assert sol is not None
        assert sol.total_length == pytest.approx(ref, rel=1e-3)


def test_dubins_rigid_transform_invariance():
    rng = np.random.default_rng(3)
    for _ in range(100):
        a, b = random_pose(rng, 50.0), random_pose(rng, 50.0)
        rot = rng.normal(size=4)
        rot /= np.linalg.norm(rot)
        R = quat_to_matrix(rot)
        shift = rng.uniform(-100, 100, 3)

        def move(p):
            return Pose(R @ p.position + shift, quat_mul(rot, p.orientation))

        s1 = dubins3d(a, b, KAPPA)
        s2 = dubins3d(move(a), move(b), KAPPA)
        assert (s1 is None) == (s2 is None)
        if s1 is not None:
            assert s2.total_length == pytest.approx(s1.total_length, rel=1e-9)


def test_dubins_degenerate_inputs():
    a = Pose([0, 0, 0])
    assert dubins3d(a, a, KAPPA) is None
    sol = dubins3d(a, Pose([0, 0, 10]), KAPPA)
    assert sol.total_length == pytest.approx(10.0)


def test_spline_weld_ends_exactly():
    rng = np.random.default_rng(4)
    made = 0
    for _ in range(500):
        a = random_pose(rng)
        b = Pose.from_direction(a.position + 30 * a.tangent + rng.normal(0, 6, 3), a.tangent + rng.normal(0, 0.2, 3))
        segs = spline_weld(a, b, KAPPA)
        if segs is None:
            continue
        made += 1
        traj = Trajectory(segs)
        np.testing.assert_array_equal(traj.start_pose.position, a.position)
        np.testing.assert_allclose(traj.end_pose.position, b.position, atol=1e-9)
        np.testing.assert_allclose(traj.end_pose.tangent, b.tangent, atol=1e-9)
        assert traj.max_curvature(0.1) <= KAPPA * (1 + 1e-6)
    assert made > 50


def test_weldable_agrees_with_spline_weld():
    rng = np.random.default_rng(5)
    pairs = []
    for _ in range(1000):
        a = random_pose(rng)
        b = Pose.from_direction(a.position + 20 * a.tangent + rng.normal(0, 5, 3), a.tangent + rng.normal(0, 0.4, 3))
        pairs.append((a, b))
    pairs.append((Pose([0, 0, 0]), Pose([0, 0, 5])))
    xa = np.array([a.position for a, _ in pairs])
    ta = np.array([a.tangent for a, _ in pairs])
    xb = np.array([b.position for _, b in pairs])
    tb = np.array([b.tangent for _, b in pairs])
    ok = weldable(xa, ta, xb, tb, KAPPA)
    ref = [spline_weld(a, b, KAPPA) is not None for a, b in pairs]
    assert ok.tolist() == ref
    assert ok[-1] and 0 < ok.sum() < len(ok)


def test_spline_connect_is_exact_and_bounded():
    rng = np.random.default_rng(6)
    cfg = SteerConfig(KAPPA, 2.0)
    made = 0
    for _ in range(200):
        a = random_pose(rng)
        b = Pose.from_direction(a.position + 25 * a.tangent + rng.normal(0, 3, 3), a.tangent + rng.normal(0, 0.15, 3))
        traj = spline_connect(a, b, cfg)
        if traj is None:
            continue
        made += 1
        np.testing.assert_array_equal(traj.start_pose.position, a.position)
        np.testing.assert_allclose(traj.end_pose.position, b.position, atol=1e-9)
        assert math.acos(min(1.0, traj.end_pose.tangent @ b.tangent)) <= 1e-6
        assert traj.max_curvature(0.1) <= KAPPA * (1 + 1e-6)
    assert made > 20
    # straight behind: nothing to connect
    assert spline_connect(Pose([0, 0, 0]), Pose([0, 0, -10]), cfg) is None

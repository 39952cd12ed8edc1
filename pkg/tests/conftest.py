import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from kapparrt.connect import dubins3d  # noqa: E402
from kapparrt.se3core import Pose  # noqa: E402
from kapparrt.steering import SteerConfig, Trajectory, steer  # noqa: E402


def random_pose(rng, scale=10.0):
    q = rng.normal(size=4)
    return Pose(rng.uniform(-scale, scale, 3), q / np.linalg.norm(q))


def random_trajectory(rng, kappa=0.05, n=8, flavor=None):
    """Chain of arc and spline extensions plus, sometimes, a Dubins connection."""
    cfg = SteerConfig(kappa, delta_t=float(rng.uniform(1.0, 4.0)))
    pose = random_pose(rng)
    segs = []
    while len(segs) < n:
        fl = flavor or ("arc", "spline")[int(rng.integers(2))]
        target = pose.position + 6.0 * pose.tangent + rng.normal(0.0, 4.0, 3)
        out = steer(fl, pose, target, cfg)
        if out is None:
            continue
        seg, pose = out
        segs.append(seg)
    if flavor is None and rng.random() < 0.5:
        goal = Pose(pose.position + 40.0 * pose.tangent + rng.normal(0, 10, 3), rng.normal(size=4))
        sol = dubins3d(pose, goal, kappa)
        if sol is not None:
            segs.extend(sol.segments)
    return Trajectory(segs)


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")

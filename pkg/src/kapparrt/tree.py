"""Search trees with array-backed node storage for vectorised queries."""

from __future__ import annotations

import numpy as np

from .se3core import Pose

INITIAL = "initial"
GOAL = "goal"


class SearchTree:
    """Rooted forest of poses; each non-root node keeps its incoming segment.

    Goal-side trees store poses with the z-axis reversed (they grow backward
    from the goal states), so every stored tangent is the direction of growth.
    """

    def __init__(self, roots, side: str, capacity: int = 1024):
        if side not in (INITIAL, GOAL):
            raise ValueError(f"unknown side {side!r}")
        self.side = side
        self._pos = np.empty((capacity, 3))
        self._tan = np.empty((capacity, 3))
        self._quat = np.empty((capacity, 4))
        self.poses: list[Pose] = []
        self.parents: list[int] = []
        self.segments: list = []
        self.roots: list[int] = []
        self.terminal: list[bool] = []
        for pose in roots:
            self.roots.append(self.add(pose, -1, None))
        if not self.roots:
            raise ValueError("a tree needs at least one root")

    def __len__(self) -> int:
        return len(self.poses)

    def add(self, pose: Pose, parent: int, segment) -> int:
        n = len(self.poses)
        if n == len(self._pos):
            grow = 2 * n
            self._pos = np.resize(self._pos, (grow, 3))
            self._tan = np.resize(self._tan, (grow, 3))
            self._quat = np.resize(self._quat, (grow, 4))
        self._pos[n] = pose.position
        self._tan[n] = pose.tangent
        self._quat[n] = pose.orientation
        self.poses.append(pose)
        self.parents.append(parent)
        self.segments.append(segment)
        self.terminal.append(False)
        return n

    @property
    def positions(self) -> np.ndarray:
        return self._pos[: len(self.poses)]

    @property
    def tangents(self) -> np.ndarray:
        return self._tan[: len(self.poses)]

    @property
    def quaternions(self) -> np.ndarray:
        return self._quat[: len(self.poses)]

    @property
    def root_positions(self) -> np.ndarray:
        return self._pos[self.roots]

    def branch(self, node: int) -> list:
        """Segments from the node's root down to ``node``."""
        segs = []
        while self.parents[node] >= 0:
            segs.append(self.segments[node])
            node = self.parents[node]
        segs.reverse()
        return segs

    def root_of(self, node: int) -> int:
        while self.parents[node] >= 0:
            node = self.parents[node]
        return node

    def check(self) -> None:
        """Raise if the tree is not acyclic or a segment does not start at its parent."""
        for i, par in enumerate(self.parents):
            if par < 0:
                continue
            if par >= i:
                raise AssertionError(f"node {i} has parent {par} added after it")
            seg = self.segments[i]
            start = seg.start_pose
            if not np.allclose(start.position, self.poses[par].position, atol=1e-9, rtol=0):
                raise AssertionError(f"segment of node {i} does not start at its parent")
            if float(start.tangent @ self.poses[par].tangent) < 1 - 1e-12:
                raise AssertionError(f"segment of node {i} is not tangent to its parent")

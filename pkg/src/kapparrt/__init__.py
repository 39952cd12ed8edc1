"""Curvature-constrained RRT-Connect planners for drilling access paths.

The main entry points are :func:`kapparrt.planner.run_planner` with a
:class:`kapparrt.planner.ProblemSpec`, scenes from :mod:`kapparrt.scenes` and the
benchmark harness in :mod:`kapparrt.bench`.
"""

from .planner import PLANNERS, PlannerConfig, PlanResult, ProblemSpec, run_planner, validate_trajectory
from .scenes import Scene, TemplateParams, canonical_scene, generate_scene, load_scene, save_scene
from .se3core import Pose

__version__ = "0.1.0"

__all__ = [
    "PLANNERS",
    "PlanResult",
    "PlannerConfig",
    "Pose",
    "ProblemSpec",
    "Scene",
    "TemplateParams",
    "canonical_scene",
    "generate_scene",
    "load_scene",
    "run_planner",
    "save_scene",
    "validate_trajectory",
]

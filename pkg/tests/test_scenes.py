import json
import math

import numpy as np
import pytest

from kapparrt.planner import PlannerConfig, run_planner
from kapparrt.scenes import (
    INFEASIBLE,
    TEMPLATES,
    SceneFormatError,
    TemplateParams,
    canonical_scene,
    dumps_scene,
    export_csv,
    generate_scene,
    load_scene,
    loads_scene,
    read_csv_path,
    save_scene,
    scene_to_doc,
    sphere_points,
    tube_points,
)


@pytest.mark.parametrize("template", TEMPLATES)
def test_round_trip(template, tmp_path):
    scene = canonical_scene(template, jitter_seed=4, jitter_scale=0.2)
    path = tmp_path / "s.json"
    save_scene(scene, path)
    again = load_scene(path)
    assert again == scene
    assert dumps_scene(again) == path.read_text(encoding="utf-8")


@pytest.mark.parametrize("template", TEMPLATES)
def test_canonical_scenes_are_feasible_with_clear_endpoints(template):
    scene = canonical_scene(template)
    assert scene.feasible and template in scene.tags
    scene.spec.check_states(scene.index)
    assert scene.spec.kappa_max == 0.05 and scene.spec.epsilon_g == 1.0
    assert scene.spec.phi_g == pytest.approx(math.radians(5.0))


def test_generation_is_deterministic_and_jitter_changes_geometry():
    a = canonical_scene("cochlea", jitter_seed=1, jitter_scale=0.3)
    b = canonical_scene("cochlea", jitter_seed=1, jitter_scale=0.3)
    c = canonical_scene("cochlea", jitter_seed=2, jitter_scale=0.3)
    assert a == b
    assert a != c


def test_narrow_bottleneck_is_tagged_infeasible():
    scene = canonical_scene("ssc", bottleneck_width=2.0)
    assert INFEASIBLE in scene.tags and not scene.feasible


@pytest.mark.parametrize("template", TEMPLATES)
def test_blocker_seals_the_goal(template):
    scene = canonical_scene(template, blocker=True)
    assert "sealed" in scene.tags and not scene.feasible
    goal = scene.spec.goal_states[0].position
    shell = dict(scene.obstacles.structures)["jugular_bulb"]
    radius = np.linalg.norm(shell - goal, axis=1)
    assert np.ptp(radius) < 1e-9
    # the lattice has no hole the drill fits through
    assert radius[0] > scene.spec.clearance


def test_sealed_scene_fails():
    scene = canonical_scene("corridor", blocker=True)
    scene.spec.check_states(scene.index)  # the goal itself is clear, only enclosed
    res = run_planner("kappa-b-rrt-connect", scene.spec, PlannerConfig(max_iterations=300), scene)
    assert res.failed


def test_template_params_validation():
    with pytest.raises(ValueError):
        TemplateParams(template="liver")
    with pytest.raises(ValueError):
        TemplateParams(bottleneck_width=-1.0)
    with pytest.raises(ValueError):
        TemplateParams(corridor_length=0.0)


def test_primitive_surfaces():
    pts = tube_points([0, 0, 0], [10, 0, 0], 2.0)
    np.testing.assert_allclose(np.hypot(pts[:, 1], pts[:, 2]), 2.0)
    sp = sphere_points([1, 2, 3], 4.0)
    np.testing.assert_allclose(np.linalg.norm(sp - [1, 2, 3], axis=1), 4.0)
    assert len(sp) == round(4 * math.pi * 16 * 4.0)


def _doc():
    return scene_to_doc(canonical_scene("corridor"))


@pytest.mark.parametrize(
    "mutate, needle",
    [
        (lambda d: d.pop("version"), "version"),
        (lambda d: d.update(version="9"), "version"),
        (lambda d: d.update(units="m"), "units"),
        (lambda d: d["problem"].pop("kappa_max"), "problem.kappa_max"),
        (lambda d: d["problem"].update(r_d="wide"), "problem.r_d"),
        (lambda d: d["problem"].update(kappa_max=-1), "kappa_max"),
        (lambda d: d["initial_states"][0].update(position=[0, 0]), "initial_states[0]"),
        (lambda d: d["goal_states"][0].pop("orientation"), "goal_states[0].orientation"),
        (lambda d: d["obstacles"][0].pop("points"), "obstacles[0]"),
        (lambda d: d["obstacles"][1].update(points=[[1, 2]]), "obstacles[1].points"),
        (lambda d: d.update(obstacles=[]), "obstacles"),
    ],
)
def test_invalid_documents_name_the_field(mutate, needle):
    doc = _doc()
    mutate(doc)
    with pytest.raises(SceneFormatError, match=needle.replace("[", r"\[").replace("]", r"\]")):
        loads_scene(json.dumps(doc))


def test_syntax_error_reports_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "version": "1",\n  oops\n}\n')
    with pytest.raises(SceneFormatError, match="line 3"):
        load_scene(path)
    with pytest.raises(SceneFormatError):
        load_scene(tmp_path / "missing.json")


def test_mesh_obstacles_are_sampled():
    doc = _doc()
    doc["obstacles"].append({
        "name": "plate",
        "mesh": {"vertices": [[20, 20, 0], [24, 20, 0], [20, 24, 0]], "faces": [[0, 1, 2]]},
        "density": 2.0,
    })
    scene = loads_scene(json.dumps(doc))
    plate = dict(scene.obstacles.structures)["plate"]
    assert len(plate) == 16
    doc["obstacles"][-1]["mesh"]["faces"] = [[0, 1, 5]]
    with pytest.raises(SceneFormatError, match="missing vertex"):
        loads_scene(json.dumps(doc))


def test_csv_export_round_trip(tmp_path):
    scene = canonical_scene("corridor")
    res = run_planner("kappa-b-rrt-connect", scene.spec, PlannerConfig(max_iterations=2000), scene)
    traj = res.trajectories[0].trajectory
    export_csv(traj, tmp_path / "p.csv")
    rows = read_csv_path(tmp_path / "p.csv")
    assert rows.shape[1] == 8
    assert rows[0, 0] == 0.0 and rows[-1, 0] == pytest.approx(1.0)
    np.testing.assert_allclose(rows[0, 1:4], scene.spec.initial_states[0].position, atol=1e-12)
    np.testing.assert_allclose(rows[-1, 1:4], scene.spec.goal_states[0].position, atol=1e-9)
    np.testing.assert_allclose(np.linalg.norm(rows[:, 4:], axis=1), 1.0, atol=1e-12)
    steps = np.linalg.norm(np.diff(rows[:, 1:4], axis=0), axis=1)
    assert steps.max() <= 0.1 + 1e-9

import json

from kapparrt.cli import main


def test_gen_plan_validate(tmp_path, capsys):
    scene = tmp_path / "corridor.json"
    assert main(["gen", "--template", "corridor", "-o", str(scene)]) == 0
    out = tmp_path / "out"
    rc = main(["plan", "--scene", str(scene), "--max-iterations", "2000", "--out", str(out)])
    assert rc == 0
    assert main(["validate", "--scene", str(scene), str(out / "path_0.csv")]) == 0
    text = capsys.readouterr().out
    assert "clearance ok" in text


def test_no_path_exits_1(tmp_path):
    rc = main(["plan", "--template", "corridor", "--blocker", "--max-iterations", "50", "--out", str(tmp_path)])
    assert rc == 1


def test_bad_input_exits_2(tmp_path, capsys):
    assert main(["plan", "--scene", str(tmp_path / "missing.json")]) == 2
    assert main(["plan"]) == 2
    bad = tmp_path / "cfg.json"
    bad.write_text("{\n nope")
    assert main(["bench", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "error:" in capsys.readouterr().err


def test_bench_with_config(tmp_path):
    cfg = tmp_path / "bench.json"
    cfg.write_text(json.dumps({
        "templates": [{"template": "corridor"}],
        "planners": ["kappa-b-rrt-connect"],
        "duration": 1.0,
        "seeds": [0],
    }))
    rc = main(["bench", "--config", str(cfg), "--max-iterations", "30", "--out", str(tmp_path / "b")])
    assert rc == 0
    assert (tmp_path / "b" / "raw.csv").exists()


def test_problem_overrides(tmp_path, capsys):
    rc = main(["plan", "--template", "corridor", "--epsilon-g", "2", "--phi-g", "10",
               "--max-iterations", "2000", "--out", str(tmp_path)])
    assert rc == 0
    assert main(["plan", "--template", "corridor", "--kappa-max", "-1"]) == 2

import math

import yaml

from cohtree.cli import main


def write_config(tmp_path, name="run.yaml", **over):
    doc = {
        "flow": {
            "kind": "double-gyre",
            "params": {"A": 0.25, "eps": 0.25, "omega": 2 * math.pi},
            "t0": 0.0,
            "tau": 1.0,
            "integrator_step": 0.05,
        },
        "domain": {"xmin": 0.0, "xmax": 2.0, "ymin": 0.0, "ymax": 1.0,
                   "nx": 8, "ny": 4},
        "points": 3000,
        "seed": 2,
        "rho0": 0.5,
        "max_depth": 2,
        "min_mass": 0.05,
    }
    doc.update(over)
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc))
    return path


def test_tree_then_verify_and_render(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "bundle"
    assert main(["tree", "--config", str(cfg), "--out", str(out)]) == 0
    captured = capsys.readouterr().out
    assert "n_leaves" in captured

    assert main(["verify", "--out", str(out)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines and all(ln.startswith("pass") for ln in lines)

    assert main(["render", "--out", str(out), "--format", "svg"]) == 0
    rendered = capsys.readouterr().out
    assert (out / f"render_initial_depth2.svg").exists() or "wrote" in rendered


def test_verify_fails_on_corruption(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "bundle"
    main(["tree", "--config", str(cfg), "--out", str(out)])
    capsys.readouterr()
    lines = (out / "matrix.txt").read_text().splitlines()
    i, j, v = lines[1].split()
    lines[1] = f"{i} {j} {float(v) * 0.25!r}"
    (out / "matrix.txt").write_text("\n".join(lines) + "\n")
    assert main(["verify", "--out", str(out)]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_stage_commands_and_overrides(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["advect", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    capsys.readouterr()
    assert main([
        "matrix", "--config", str(cfg), "--out", str(tmp_path / "m"),
        "--workers", "2",
    ]) == 0
    capsys.readouterr()
    assert main([
        "tree", "--config", str(cfg), "--out", str(tmp_path / "t"),
        "--rho0", "0.4", "--seed", "9", "--depth", "1",
    ]) == 0
    doc = yaml.safe_load((tmp_path / "t" / "config.yaml").read_text())
    assert doc["rho0"] == 0.4
    assert doc["seed"] == 9
    assert doc["max_depth"] == 1


def test_cli_error_is_stage_tagged(tmp_path, capsys):
    cfg = write_config(tmp_path, points=10)
    out = tmp_path / "x"
    out.mkdir()
    (out / "junk").write_text("j")
    assert main(["tree", "--config", str(cfg), "--out", str(out)]) == 1
    err = capsys.readouterr().err
    assert "[validate]" in err


def test_cli_config_validation_error(tmp_path, capsys):
    cfg = write_config(tmp_path, points=0)
    assert main(["tree", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "error" in capsys.readouterr().err


def test_advise_command(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main([
        "advise", "--config", str(cfg), "--samples", "2000", "--safety", "1.1",
    ]) == 0
    out = capsys.readouterr().out
    for key in ("q ", "M_raw ", "M_used ", "epsilon ", "points_per_box ",
                "total_points "):
        assert key in out


def test_advise_with_explicit_lipschitz(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main([
        "advise", "--config", str(cfg), "--lipschitz", str(math.log(10.0)),
    ]) == 0
    out = capsys.readouterr().out
    assert "points_per_box" in out

import json

import numpy as np
import pytest
import yaml

from liftreach.cli import (
    EXIT_ERROR,
    EXIT_OK,
    EXIT_UNSAFE,
    EXIT_UNSOUND,
    build_model,
    execute_run,
    load_config,
    main,
    resolve_run_config,
)
from liftreach.errors import ConfigError

VDP_CFG = {
    "model": {"kind": "vanderpol", "l": 2},
    "refinement": {"kind": "sampling", "s": 10},
    "t_final": 0.5,
    "mc_trials": 10,
    "seed": 42,
}


def write_cfg(tmp_path, cfg, name="run.yaml", output_subdir="out"):
    cfg = dict(cfg)
    cfg["output_dir"] = str(tmp_path / output_subdir)
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return path


def test_run_writes_artifacts(tmp_path):
    code = main(["run", str(write_cfg(tmp_path, VDP_CFG))])
    assert code == EXIT_OK
    out = tmp_path / "out"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["model"].startswith("vanderpol")
    assert summary["final_bound_size_base"] > 0
    assert summary["steps"] == 50
    # refinement applied once per integrator stage
    assert summary["refinement_calls"] == summary["steps"] * 4
    assert (out / "trajectory.csv").exists()
    val = json.loads((out / "validation.json").read_text())
    assert val["trials"] == 10 and val["max_violation"] <= 1e-6
    header = (out / "trajectory.csv").read_text().splitlines()[0]
    assert header.split(",")[:2] == ["t", "y_lo_1"]
    assert header.split(",")[-1] == "y_hi_4"


def test_run_no_validation_file_without_trials(tmp_path):
    cfg = dict(VDP_CFG, mc_trials=0)
    assert main(["run", str(write_cfg(tmp_path, cfg))]) == EXIT_OK
    assert not (tmp_path / "out" / "validation.json").exists()


def test_run_determinism_bit_identical(tmp_path):
    p1 = write_cfg(tmp_path, VDP_CFG, name="a.yaml", output_subdir="out1")
    p2 = write_cfg(tmp_path, VDP_CFG, name="b.yaml", output_subdir="out2")
    assert main(["run", str(p1)]) == EXIT_OK
    assert main(["run", str(p2)]) == EXIT_OK
    b1 = (tmp_path / "out1" / "trajectory.csv").read_bytes()
    b2 = (tmp_path / "out2" / "trajectory.csv").read_bytes()
    assert b1 == b2


def test_summary_config_echo_round_trips(tmp_path):
    assert main(["run", str(write_cfg(tmp_path, VDP_CFG))]) == EXIT_OK
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    echoed = summary["config"]
    echoed["output_dir"] = str(tmp_path / "out2")
    rerun = tmp_path / "rerun.yaml"
    rerun.write_text(yaml.safe_dump(echoed))
    assert main(["run", str(rerun)]) == EXIT_OK
    assert (tmp_path / "out" / "trajectory.csv").read_bytes() == (
        tmp_path / "out2" / "trajectory.csv"
    ).read_bytes()


def test_exit_error_on_bad_config(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("model: {kind: warp_drive}\n")
    assert main(["run", str(path)]) == EXIT_ERROR
    assert "model.kind" in capsys.readouterr().err
    path2 = tmp_path / "broken.yaml"
    path2.write_text("model: [unclosed\n")
    assert main(["run", str(path2)]) == EXIT_ERROR
    assert main(["run", str(tmp_path / "missing.yaml")]) == EXIT_ERROR


def test_exit_unsound_after_face_collapse(tmp_path):
    # dt > 1 on x' = -x inverts the endpoints; the collapse clamp keeps the
    # run alive but voids soundness, which the validator then reports
    cfg = {
        "model": {
            "kind": "custom",
            "state_dim": 1,
            "dist_dim": 0,
            "dynamics": ["(neg x1)"],
            "H": [[1.0]],
            "x0": {"lo": [1.0], "hi": [2.0]},
        },
        "refinement": {"kind": "none"},
        "integrator": "euler",
        "dt": 1.5,
        "t_final": 3.0,
        "mc_trials": 5,
        "seed": 1,
    }
    assert main(["run", str(write_cfg(tmp_path, cfg))]) == EXIT_UNSOUND
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["validation"]["max_violation"] > 1e-6
    assert summary["collapsed_steps"] > 0


def test_exit_unsafe_on_obstacle_hit(tmp_path):
    cfg = {
        "model": {"kind": "platoon", "P": 1},
        "refinement": {"kind": "sampling", "s": 2},
        "t_final": 0.2,
        "mc_trials": 0,
        "seed": 0,
        "overrides": {"obstacle": {"cx": 8.0, "cy": 7.0, "radius": 1.0}},
    }
    assert main(["run", str(write_cfg(tmp_path, cfg))]) == EXIT_UNSAFE
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["safety"][0]["safe"] is False


def test_env_seed_override(tmp_path, monkeypatch):
    monkeypatch.setenv("LIFTREACH_SEED", "777")
    cfg = resolve_run_config(dict(VDP_CFG, output_dir="x"))
    assert cfg.seed == 777
    monkeypatch.setenv("LIFTREACH_SEED", "not-an-int")
    with pytest.raises(ConfigError):
        resolve_run_config(dict(VDP_CFG, output_dir="x"))


def test_model_timing_defaults():
    cfg = resolve_run_config({"model": {"kind": "enzyme"}})
    assert cfg.dt == pytest.approx(1e-3)
    assert cfg.t_final == pytest.approx(0.04)
    assert cfg.integrator == "rk4"
    cfg2 = resolve_run_config({"model": {"kind": "platoon", "P": 2}})
    assert cfg2.integrator == "euler" and cfg2.t_final == 3.0


def test_custom_model_requires_timing():
    with pytest.raises(ConfigError):
        resolve_run_config({"model": {"kind": "custom"}})


def test_overrides_boxes():
    cfg = resolve_run_config(
        {
            "model": {"kind": "vanderpol", "l": 2},
            "overrides": {"x0": {"lo": [0.0, 0.0], "hi": [0.1, 0.1]}},
        }
    )
    spec = build_model(cfg)
    assert np.allclose(spec.x0box.hi, [0.1, 0.1])
    bad = resolve_run_config(
        {
            "model": {"kind": "vanderpol", "l": 2},
            "overrides": {"w": {"lo": [0.0], "hi": [0.1]}},
        }
    )
    with pytest.raises(ConfigError):
        build_model(bad)  # vanderpol has no disturbance channel


def test_platoon_w_override_rejected():
    cfg = resolve_run_config(
        {
            "model": {"kind": "platoon", "P": 1},
            "overrides": {"w": {"lo": [0.0], "hi": [0.1]}},
        }
    )
    with pytest.raises(ConfigError):
        build_model(cfg)


def test_unknown_override_rejected():
    cfg = resolve_run_config(
        {"model": {"kind": "vanderpol"}, "overrides": {"frobnicate": 1}}
    )
    with pytest.raises(ConfigError):
        build_model(cfg)


def test_execute_run_library_path():
    cfg = resolve_run_config(dict(VDP_CFG, t_final=0.2, mc_trials=0))
    out = execute_run(cfg)
    assert out.exit_code == EXIT_OK
    assert out.summary["m"] == 4
    assert out.summary["config"]["seed"] == 42


# --- inspect ------------------------------------------------------------------

def test_inspect_reports_row_count_formula(tmp_path, capsys):
    assert main(["inspect", str(write_cfg(tmp_path, VDP_CFG))]) == EXIT_OK
    out = capsys.readouterr().out
    assert "N = 22 rows" in out and "= 22" in out


def test_inspect_enzyme_count(tmp_path, capsys):
    cfg = {"model": {"kind": "enzyme"}, "refinement": {"kind": "sampling", "s": 10}}
    assert main(["inspect", str(write_cfg(tmp_path, cfg))]) == EXIT_OK
    assert "N = 63 rows" in capsys.readouterr().out


def test_inspect_custom_prints_null_basis(tmp_path, capsys):
    cfg = {
        "model": {
            "kind": "custom",
            "state_dim": 2,
            "dist_dim": 0,
            "dynamics": ["(neg x1)", "(neg x2)"],
            "H": [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.5]],
            "x0": {"lo": [0.0, 0.0], "hi": [1.0, 1.0]},
        },
        "integrator": "rk4",
        "dt": 0.1,
        "t_final": 1.0,
    }
    assert main(["inspect", str(write_cfg(tmp_path, cfg))]) == EXIT_OK
    out = capsys.readouterr().out
    assert "[-1, -1, 1, 0]" in out
    assert "[-1, -0.5, 0, 1]" in out


def test_inspect_bad_model_exits_error(tmp_path, capsys):
    cfg = {
        "model": {
            "kind": "custom",
            "state_dim": 1,
            "dynamics": ["x1"],
            "H": [[0.0]],  # singular
            "x0": {"lo": [0.0], "hi": [1.0]},
        },
        "integrator": "euler",
        "dt": 0.1,
        "t_final": 1.0,
    }
    assert main(["inspect", str(write_cfg(tmp_path, cfg))]) == EXIT_ERROR


# --- bench ---------------------------------------------------------------------

def test_bench_table_and_csv(tmp_path, capsys):
    bench = {
        "repeat": 2,
        "output_dir": str(tmp_path / "bench"),
        "runs": [
            dict(VDP_CFG, name="vdp-ss", t_final=0.2, mc_trials=0),
            {
                "name": "vdp-none",
                "model": {"kind": "vanderpol", "l": 2},
                "refinement": {"kind": "none"},
                "t_final": 0.2,
            },
            {"name": "broken", "model": {"kind": "warp"}},
        ],
    }
    path = tmp_path / "bench.yaml"
    path.write_text(yaml.safe_dump(bench))
    assert main(["bench", str(path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "vdp-ss" in out and "vdp-none" in out and "broken" in out
    lines = (tmp_path / "bench" / "bench.csv").read_text().strip().splitlines()
    assert len(lines) == 4  # header + 3 rows
    assert lines[0].startswith("name,model,refinement,repeat,mean_time_s")
    broken_row = lines[3]
    assert "model.kind" in broken_row  # error recorded, bench continued
    # unrefined beats refined on wallclock but not on bound size
    table = (tmp_path / "bench" / "bench.txt").read_text()
    assert "final_bound_base" in table


def test_bench_parallel_flag(tmp_path, capsys):
    bench = {
        "repeat": 1,
        "parallel": True,
        "output_dir": str(tmp_path / "bench"),
        "runs": [
            dict(VDP_CFG, name="a", t_final=0.1, mc_trials=0),
            dict(VDP_CFG, name="b", t_final=0.1, mc_trials=0),
        ],
    }
    path = tmp_path / "bench.yaml"
    path.write_text(yaml.safe_dump(bench))
    assert main(["bench", str(path)]) == EXIT_OK
    lines = (tmp_path / "bench" / "bench.csv").read_text().strip().splitlines()
    assert len(lines) == 3


def test_bench_empty_runs(tmp_path, capsys):
    path = tmp_path / "bench.yaml"
    path.write_text(yaml.safe_dump({"repeat": 1, "runs": [],
                                    "output_dir": str(tmp_path / "b")}))
    assert main(["bench", str(path)]) == EXIT_OK
    assert (tmp_path / "b" / "bench.csv").read_text().startswith("name,")


def test_load_config_requires_mapping(tmp_path):
    path = tmp_path / "list.yaml"
    path.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(path)

import json

import pytest
import yaml

from trapscape import cli
from trapscape.config import ConfigError, load_config, model_from_config, parse_sweep
from trapscape.io import read_csv_meta


def run_cli(args):
    return cli.main(args)


def test_parse_sweep():
    vals = parse_sweep("0.8:1.0:0.05")
    assert vals == pytest.approx([0.8, 0.85, 0.9, 0.95, 1.0])
    with pytest.raises(ConfigError):
        parse_sweep("0.8:1.0")
    with pytest.raises(ConfigError):
        parse_sweep("1.0:0.8:0.1")


def test_missing_config_exits_3_without_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    code = run_cli(["nodes", "--config", str(tmp_path / "nope.yaml"), "--out", str(out)])
    assert code == 3
    assert not out.exists()
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["exit_code"] == 3


def test_bad_yaml_exits_3(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("drive: [unclosed\n")
    code = run_cli(["critical", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert code == 3
    msg = json.loads(capsys.readouterr().err)["error"]["message"]
    assert "line" in msg  # yaml parse errors carry line/column information


def test_invalid_values_exit_3(tmp_path, capsys):
    cfg = tmp_path / "neg.yaml"
    cfg.write_text(yaml.safe_dump({"drive": {"v_rf": -5.0, "r": 0.9, "f_rf_mhz": 27.2}}))
    code = run_cli(["critical", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert code == 3
    capsys.readouterr()


def test_unknown_command_exits_2(capsys):
    with pytest.raises(SystemExit) as info:
        run_cli(["frobnicate"])
    assert info.value.code == 2
    capsys.readouterr()


def test_numerical_failure_exits_4(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({
        "drive": {"v_rf": 42.5, "r": 0.0, "f_rf_mhz": 27.2},
        "critical": {"r_hi": 0.3},
    }))
    code = run_cli(["critical", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert code == 4
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["kind"] == "numerical"


def test_critical_command(tmp_path, capsys):
    out = tmp_path / "crit"
    assert run_cli(["critical", "--out", str(out)]) == 0
    capsys.readouterr()
    doc = json.loads((out / "critical.json").read_text())
    assert doc["r_lo"] < doc["r_mid"] < doc["r_hi"]
    assert 0.84 <= doc["r_mid"] <= 0.89
    assert doc["meta"]["version"]
    assert doc["meta"]["config"]["drive"]["v_rf"] == 42.5


def test_nodes_sweep_csv_and_determinism(tmp_path, capsys):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    args = ["nodes", "--sweep", "0.86:0.92:0.02", "--no-figures"]
    assert run_cli(args + ["--out", str(out1)]) == 0
    assert run_cli(args + ["--out", str(out2), "--threads", "2"]) == 0
    capsys.readouterr()
    b1 = (out1 / "node_sweep.csv").read_bytes()
    b2 = (out2 / "node_sweep.csv").read_bytes()
    assert b1 == b2
    lines = b1.decode().splitlines()
    assert lines[0].startswith("# {")
    assert lines[1] == "R,d_um,barrier_meV,topology"
    assert len(lines) == 2 + 4
    meta = read_csv_meta(out1 / "node_sweep.csv")
    assert meta["command"] == "nodes"


def test_config_echo_round_trips(tmp_path, capsys):
    out1 = tmp_path / "run1"
    assert run_cli(["nodes", "--sweep", "0.88:0.9:0.02", "--no-figures",
                    "--out", str(out1)]) == 0
    meta = read_csv_meta(out1 / "node_sweep.csv")
    echo = tmp_path / "echo.yaml"
    echo.write_text(json.dumps(meta["config"]))  # JSON is valid YAML
    out2 = tmp_path / "run2"
    assert run_cli(["nodes", "--sweep", "0.88:0.9:0.02", "--no-figures",
                    "--config", str(echo), "--out", str(out2)]) == 0
    capsys.readouterr()
    assert (out1 / "node_sweep.csv").read_bytes() == (out2 / "node_sweep.csv").read_bytes()


def test_potential_grid_artifacts(tmp_path, capsys):
    out = tmp_path / "grid"
    cfg = tmp_path / "grid.yaml"
    cfg.write_text(yaml.safe_dump({
        "drive": {"v_rf": 42.5, "r": 0.9, "f_rf_mhz": 27.2},
        "grid": {"x_um": [-60, 60], "y_um": [40, 120], "n_x": 31, "n_y": 21},
    }))
    assert run_cli(["potential-grid", "--config", str(cfg), "--out", str(out)]) == 0
    capsys.readouterr()
    lines = (out / "grid.csv").read_text().splitlines()
    assert lines[1] == "x_um,y_um,phi_meV"
    assert len(lines) == 2 + 31 * 21
    assert (out / "grid_meta.json").exists()
    assert (out / "fig_potential_grid.png").exists()


def test_crystal_command(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({
        "drive": {"v_rf": 42.5, "r": 0.0, "f_rf_mhz": 27.2},
        "wells": [{"f_z_hz": 190e3}],
        "crystal": {"n_ions": 2},
    }))
    out = tmp_path / "cry"
    assert run_cli(["crystal", "--config", str(cfg), "--out", str(out),
                    "--no-figures"]) == 0
    capsys.readouterr()
    doc = json.loads((out / "crystal.json").read_text())
    assert doc["converged"] is True
    z = sorted(p[2] for p in doc["positions_um"])
    assert abs(z[1] - z[0]) == pytest.approx(17.0, abs=0.2)
    lines = (out / "crystal_positions.csv").read_text().splitlines()
    assert lines[1] == "ion,x_um,y_um,z_um,string"


def test_crystal_requires_wells(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"drive": {"v_rf": 42.5, "r": 0.0, "f_rf_mhz": 27.2}}))
    assert run_cli(["crystal", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
    capsys.readouterr()


def test_modes_sweep_command(tmp_path, capsys):
    out = tmp_path / "modes"
    assert run_cli(["modes-sweep", "--sweep", "0.88:0.9:0.02", "--out", str(out),
                    "--no-figures"]) == 0
    capsys.readouterr()
    lines = (out / "mode_sweep.csv").read_text().splitlines()
    assert lines[1] == "R,d_um,f_com_in,f_com_out,f_str_in,f_str_out"
    row = lines[2].split(",")
    assert float(row[2]) == pytest.approx(1.0, abs=1e-6)


def test_corrugation_command_with_d_target(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({
        "drive": {"v_rf": 60.0, "d_target_um": 30.0, "f_rf_mhz": 27.2},
        "wells": [{"f_z_hz": 15e3}, {"f_z_hz": 15e3}],
        "corrugation": {"n_ions": 6, "n_samples": 201},
    }))
    out = tmp_path / "corr"
    assert run_cli(["corrugation", "--config", str(cfg), "--out", str(out),
                    "--no-figures"]) == 0
    capsys.readouterr()
    doc = json.loads((out / "corrugation.json").read_text())
    assert doc["node_separation_um"] == pytest.approx(30.0, rel=1e-4)
    assert doc["eta"] > 0
    lines = (out / "corrugation_samples.csv").read_text().splitlines()
    assert lines[1] == "z_um,U_meV,U_coulomb_meV,U_trap_meV"
    assert len(lines) == 2 + 201


def test_slide_command(tmp_path, capsys):
    cfg = tmp_path / "s.yaml"
    cfg.write_text(yaml.safe_dump({
        "drive": {"v_rf": 60.0, "d_target_um": 40.0, "f_rf_mhz": 27.2},
        "wells": [{"f_z_hz": 15e3}, {"f_z_hz": 15e3}],
        "slide": {"n_per_string": 2, "offset_start_um": 0.0,
                  "offset_stop_um": 10.0, "n_steps": 3},
    }))
    out = tmp_path / "slide"
    assert run_cli(["slide", "--config", str(cfg), "--out", str(out),
                    "--no-figures"]) == 0
    capsys.readouterr()
    lines = (out / "slide.csv").read_text().splitlines()
    assert lines[1] == "offset_um,max_disp_um,slip_flag,energy_meV"
    assert len(lines) == 2 + 6  # forward + backward
    summary = json.loads((out / "slide_summary.json").read_text())
    assert summary["error"] is None


def test_dc_solve_command(tmp_path, capsys):
    cfg = tmp_path / "dc.yaml"
    cfg.write_text(yaml.safe_dump({
        "dc": {
            "electrodes": [
                {"label": "a", "x_min_um": -50, "x_max_um": 50,
                 "z_min_um": -50, "z_max_um": 50},
                {"label": "b", "x_min_um": 60, "x_max_um": 160,
                 "z_min_um": -50, "z_max_um": 50},
            ],
            "null_points_um": [[0.0, 60.0, 0.0]],
        }
    }))
    out = tmp_path / "dc"
    assert run_cli(["dc-solve", "--config", str(cfg), "--out", str(out)]) == 0
    capsys.readouterr()
    doc = json.loads((out / "dc_solution.json").read_text())
    assert doc["electrodes"] == ["a", "b"]
    assert len(doc["voltages"]) == 2
    assert doc["feasible"] is True


def test_format_json_tables(tmp_path, capsys):
    out = tmp_path / "j"
    assert run_cli(["nodes", "--sweep", "0.9:0.9:0.01", "--format", "json",
                    "--no-figures", "--out", str(out)]) == 0
    capsys.readouterr()
    doc = json.loads((out / "node_sweep.json").read_text())
    assert doc["columns"] == ["R", "d_um", "barrier_meV", "topology"]
    assert len(doc["rows"]) == 1


def test_figures_rendered_by_default(tmp_path, capsys):
    out = tmp_path / "figs"
    assert run_cli(["nodes", "--sweep", "0.88:0.9:0.02", "--out", str(out)]) == 0
    capsys.readouterr()
    assert (out / "fig_node_separation.png").stat().st_size > 0


def test_repro_suite(tmp_path, capsys):
    out = tmp_path / "repro"
    assert run_cli(["repro", "--out", str(out), "--no-figures"]) == 0
    capsys.readouterr()
    assert (out / "potential-grids" / "r0.00" / "grid.csv").exists()
    assert (out / "potential-grids" / "r0.90" / "grid.csv").exists()
    assert (out / "node-separation" / "node_sweep.csv").exists()
    assert (out / "mode-degeneracy" / "mode_sweep.csv").exists()
    doc = json.loads((out / "corrugation" / "corrugation.json").read_text())
    assert doc["eta"] == pytest.approx(1.0, abs=0.15)


def test_model_from_config_defaults():
    model, d_target = model_from_config({"drive": {"v_rf": 42.5, "r": 0.9, "f_rf_mhz": 27.2}})
    assert d_target is None
    assert model.geometry.is_mirror_symmetric()
    assert model.species.mass == pytest.approx(40 * 1.66053906660e-27)
    with pytest.raises(ConfigError, match="exactly one"):
        model_from_config({"drive": {"v_rf": 1.0, "f_rf_mhz": 27.2}})
    with pytest.raises(ConfigError, match="exactly one"):
        model_from_config({"drive": {"v_rf": 1.0, "r": 0.5, "d_target_um": 30.0,
                                     "f_rf_mhz": 27.2}})


def test_load_config_requires_mapping(tmp_path):
    cfg = tmp_path / "list.yaml"
    cfg.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError, match="mapping"):
        load_config(cfg)

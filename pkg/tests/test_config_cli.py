import json
import os

import numpy as np
import pytest
import yaml

from forchpi import cli
from forchpi.config import dump_scenario, load_scenario, parse_scenario, shipped_path, shipped_scenario
from forchpi.errors import ConfigError


def _write(tmp_path, data, name="sc.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return str(path)


def _run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out.strip(), err


SMALL_TRANSIENT = {
    "name": "small",
    "geometry": {"kind": "radial", "n": 32},
    "kernel": {"alpha": 1.0, "beta": 1.0},
    "boundary": {"kind": "ibvp1", "q_s": 2.0, "q": "2*(1+exp(-t))"},
    "initial": {"kind": "bump", "amplitude": 0.2},
    "numerics": {"dt_tau": 0.1, "t_end_tau": 2.0},
}


class TestConfig:
    @pytest.mark.parametrize("name", ["radial-darcy", "transient", "diagnose", "fig1", "sweep", "identity"])
    def test_round_trip(self, name):
        sc = shipped_scenario(name)
        assert parse_scenario(yaml.safe_load(dump_scenario(sc))) == sc

    def test_defaults(self):
        sc = parse_scenario({"name": "x"})
        assert sc["kernel"]["coeffs"] == [1.0] and sc["model"] == "liquid"
        assert sc["output"]["stride"] == 1

    @pytest.mark.parametrize(
        "raw",
        [
            {},
            {"name": "x", "bogus": 1},
            {"name": "x", "geometry": {"nn": 3}},
            {"name": "x", "kernel": {"alpha": 1.0, "coeffs": [1.0], "exponents": [0.0]}},
            {"name": "x", "kernel": {"coeffs": [1.0]}},
            {"name": "x", "geometry": {"n": 0}},
            {"name": "x", "boundary": {"kind": "ibvp2", "q": "1"}},
            {"name": "x", "boundary": {"phi": "sin("}},
            {"name": "x", "numerics": {"dt": -1.0}},
            {"name": "x", "model": "gas", "gas": {"t_end": 5000.0}},
            {"name": "x", "geometry": "radial"},
        ],
    )
    def test_rejects(self, raw):
        with pytest.raises(Exception) as info:
            parse_scenario(raw)
        assert info.type.__name__ in ("ConfigError", "ExpressionError")

    def test_missing_and_broken_files(self, tmp_path):
        with pytest.raises(ConfigError):
            load_scenario(str(tmp_path / "nope.yaml"))
        bad = tmp_path / "bad.yaml"
        bad.write_text("name: [unclosed")
        with pytest.raises(ConfigError):
            load_scenario(str(bad))
        with pytest.raises(ConfigError):
            shipped_path("no-such-scenario")


class TestCli:
    def test_pss_oracle(self, tmp_path, capsys):
        code, path, _ = _run(["pss", "--config", shipped_path("radial-darcy"), "--out", str(tmp_path)], capsys)
        assert code == 0 and path == str(tmp_path / "radial-darcy-pss.csv")
        summary, cols, data = cli.read_table(path)
        assert float(summary["J_rel_error"]) < 0.01
        assert float(summary["W_max_error"]) < 1e-3
        assert cols == ["x", "W", "W_exact"]
        assert data.shape[0] == 512

    def test_header_round_trip_and_determinism(self, tmp_path, capsys, monkeypatch):
        cfg = _write(tmp_path, SMALL_TRANSIENT)
        a, b = tmp_path / "a", tmp_path / "b"
        assert _run(["transient", "--config", cfg, "--out", str(a)], capsys)[0] == 0
        monkeypatch.setenv("FORCHPI_OUT", str(b))
        assert _run(["transient", "--config", cfg], capsys)[0] == 0
        fa, fb = a / "small-transient.csv", b / "small-transient.csv"
        assert fa.read_bytes() == fb.read_bytes()
        assert cli.read_scenario_header(str(fa)) == load_scenario(cfg)

    def test_out_beats_env(self, tmp_path, capsys, monkeypatch):
        cfg = _write(tmp_path, SMALL_TRANSIENT)
        monkeypatch.setenv("FORCHPI_OUT", str(tmp_path / "env"))
        code, path, _ = _run(["pss", "--config", cfg, "--out", str(tmp_path / "flag")], capsys)
        assert code == 0 and path.startswith(str(tmp_path / "flag"))
        assert not (tmp_path / "env").exists()

    def test_stride(self, tmp_path, capsys):
        cfg = _write(tmp_path, SMALL_TRANSIENT)
        _, p1, _ = _run(["transient", "--config", cfg, "--out", str(tmp_path / "s1"), "--stride", "1"], capsys)
        _, p4, _ = _run(["transient", "--config", cfg, "--out", str(tmp_path / "s4"), "--stride", "4"], capsys)
        d1, d4 = cli.read_table(p1)[2], cli.read_table(p4)[2]
        assert len(d4) < len(d1)
        assert d4[-1, 0] == pytest.approx(d1[-1, 0])
        assert cli.read_scenario_header(p4)["output"]["stride"] == 4

    def test_plot(self, tmp_path, capsys):
        cfg = _write(tmp_path, SMALL_TRANSIENT)
        code, path, _ = _run(["transient", "--config", cfg, "--out", str(tmp_path), "--plot"], capsys)
        assert code == 0
        png = path[:-4] + ".png"
        with open(png, "rb") as fh:
            assert fh.read(8) == b"\x89PNG\r\n\x1a\n"

    @pytest.mark.parametrize(
        "patch",
        [
            {"geometry": {"kind": "radial", "n": -3}},
            {"boundary": {"phi": "1/"}},
            {"bogus": True},
        ],
    )
    def test_exit_config(self, tmp_path, capsys, patch):
        data = dict(SMALL_TRANSIENT, **patch)
        cfg = _write(tmp_path, data)
        code, _, err = _run(["transient", "--config", cfg, "--out", str(tmp_path / "o")], capsys)
        assert code == cli.EXIT_CONFIG
        block = json.loads(err.strip().splitlines()[-1])
        assert block["exit_code"] == 2 and block["command"] == "transient"
        assert not (tmp_path / "o").exists()

    def test_exit_missing_file(self, tmp_path, capsys):
        code, _, err = _run(["pss", "--config", str(tmp_path / "none.yaml")], capsys)
        assert code == cli.EXIT_CONFIG and "not found" in err

    def test_exit_solver(self, tmp_path, capsys):
        data = dict(SMALL_TRANSIENT, numerics={"dt_tau": 0.5, "t_end_tau": 2.0, "max_iter": 1, "tol": 1e-14})
        cfg = _write(tmp_path, data)
        code, _, err = _run(["transient", "--config", cfg, "--out", str(tmp_path / "o")], capsys)
        assert code == cli.EXIT_SOLVER
        block = json.loads(err.strip().splitlines()[-1])
        assert "residual_history" in block and "step" in block
        assert not (tmp_path / "o").exists()

    def test_exit_io(self, tmp_path, capsys):
        cfg = _write(tmp_path, SMALL_TRANSIENT)
        blocker = tmp_path / "file"
        blocker.write_text("x")
        code, _, _ = _run(["pss", "--config", cfg, "--out", str(blocker / "sub")], capsys)
        assert code == cli.EXIT_IO
        assert sorted(os.listdir(tmp_path)) == ["file", "sc.yaml"]

    def test_gas_requires_gas_model(self, tmp_path, capsys):
        cfg = _write(tmp_path, SMALL_TRANSIENT)
        assert _run(["gas", "--config", cfg, "--out", str(tmp_path)], capsys)[0] == cli.EXIT_CONFIG

    def test_gas_small(self, tmp_path, capsys):
        data = {
            "name": "g",
            "model": "gas",
            "geometry": {"kind": "radial", "n": 32},
            "gas": {"alpha": 1.0, "beta": 0.0, "B": 20.0, "A": 1.0, "dt": 0.2, "t_end": 5.0},
        }
        cfg = _write(tmp_path, data)
        code, path, _ = _run(["gas", "--config", cfg, "--out", str(tmp_path)], capsys)
        assert code == 0
        summary, cols, rows = cli.read_table(path)
        assert float(summary["max_p_minus_p0"]) <= 1e-8 * 20
        assert np.all(np.diff(rows[:, cols.index("t")]) > 0)

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as info:
            cli.main(["--version"])
        assert info.value.code == 0
        assert "forchpi" in capsys.readouterr().out

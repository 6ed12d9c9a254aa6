import json

import pytest

from esplab import cli
from esplab.config import ConfigError, merge, parse_override, parse_value


def test_parse_value():
    assert parse_value("3") == 3
    assert parse_value("0.5") == 0.5
    assert parse_value("[1, 2]") == [1, 2]
    assert parse_value("0.5,1.0") == [0.5, 1.0]
    assert parse_value("tanh") == "tanh"
    assert parse_value("tanh,relu") == ["tanh", "relu"]
    assert parse_value("true") is True


def test_parse_override():
    assert parse_override("input-scaling=2") == ("input_scaling", 2)
    with pytest.raises(ConfigError):
        parse_override("novalue")


def test_merge_precedence_and_coercion():
    defaults = {"n": 10, "rho": 0.9, "seeds": [0], "flag": False}
    out = merge(defaults, {"n": 20, "rho": 1}, [("n", 30), ("seeds", 4), ("flag", "true")])
    assert out == {"n": 30, "rho": 1.0, "seeds": [4], "flag": True}
    with pytest.raises(ConfigError, match="unknown key 'm'"):
        merge(defaults, {"m": 1}, [])
    with pytest.raises(ConfigError, match="'n' expects an integer"):
        merge(defaults, {}, [("n", "ten")])


def test_esp_test_command(tmp_path, capsys):
    assert cli.main(["esp-test", "--n", "30", "--trials", "2", "--out", str(tmp_path)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2 and lines[0].startswith("trial 0: tanh n=30")
    doc = json.loads((tmp_path / "esp_test.json").read_text())
    assert len(doc["results"]) == 2
    assert (tmp_path / "trace_trial1.csv").exists()


def test_sweep_command_with_config(tmp_path, capsys):
    cfg = tmp_path / "run.toml"
    cfg.write_text('activations = ["cantor-set"]\nrho_values = [0.5, 2.0]\nleak_values = [0.7]\n'
                   "n_values = [12]\ntrials_per_cell = 2\nseeds = [0]\nhorizon = 50\n")
    out = tmp_path / "out"
    assert cli.main(["sweep", "--config", str(cfg), "--set", "horizon=40", "--out", str(out)]) == 0
    assert len(capsys.readouterr().out.strip().splitlines()) == 2
    assert (out / "sweep.csv").exists() and (out / "sweep.json").exists()
    assert json.loads((out / "sweep.json").read_text())["grid"]["horizon"] == 40


def test_scalar_flags_pin_grid_axes(tmp_path):
    args = cli.build_parser().parse_args(["sweep", "--n", "7", "--rho", "2", "--seed", "3", "--trials", "4"])
    s = cli.resolve_settings(args)
    assert s["n_values"] == [7] and s["rho_values"] == [2.0] and s["seeds"] == [3] and s["trials_per_cell"] == 4


def test_full_paper_scale_defaults():
    args = cli.build_parser().parse_args(["sweep", "--full-paper-scale"])
    s = cli.resolve_settings(args)
    assert s["trials_per_cell"] == 50 and s["seeds"] == [0, 1, 2, 3, 4]


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert cli.main(["curves", "--family", "relu", "--set", "points=5"]) == 0
    assert (tmp_path / "env" / "curve_relu.csv").read_text().count("\n") == 6


@pytest.mark.parametrize(
    "argv, token",
    [
        (["esp-test", "--set", "bogus=1"], "bogus"),
        (["esp-test", "--n", "0"], "n must be >= 1"),
        (["esp-test", "--family", "sinc"], "sinc"),
        (["sweep", "--set", "leak_values=2.0"], "leak values"),
        (["lipschitz", "--rho", "2"], "--rho"),
    ],
)
def test_usage_errors_exit_2(argv, token, tmp_path, capsys):
    assert cli.main(argv + ["--out", str(tmp_path)]) == 2
    assert token in capsys.readouterr().err


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as info:
        cli.main(["plot"])
    assert info.value.code == 2


def test_io_error_exit(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["curves", "--out", str(blocker / "sub")]) == 3


def test_oracle_and_spectral_commands(tmp_path, capsys):
    assert cli.main(["oracle", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "attractors.json").read_text())
    assert sum(doc["basin_counts"]) == 16
    assert cli.main(["verify-spectral", "--n", "60", "--rho", "3", "--out", str(tmp_path)]) == 0
    assert "relative error" in capsys.readouterr().out


def test_non_convergence_is_not_an_error(tmp_path):
    assert cli.main(["esp-test", "--family", "weierstrass", "--n", "50", "--out", str(tmp_path)]) == 0

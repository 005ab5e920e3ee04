import csv
import hashlib
import json
import os

import numpy as np
import pytest

from stablelike import cli
from stablelike.cli import ExperimentConfig, main, parse_index_set, spectrum_table
from stablelike.errors import ParameterError
from stablelike.fractal import NEG_INF, g_spectrum, spectrum_envelope


def digest(folder):
    h = hashlib.sha256()
    for p in sorted(q for q in folder.iterdir() if q.name != "config.json"):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_config_round_trip():
    cfg = ExperimentConfig(seed=4, trials=3, alpha=0.4, out="x", format="json")
    back = ExperimentConfig.from_json(cfg.to_json())
    assert back == cfg and back.to_json() == cfg.to_json()


def test_config_unknown_key():
    with pytest.raises(ParameterError):
        ExperimentConfig.from_json('{"sed": 1}')


@pytest.mark.parametrize(
    "field, value",
    [("z_min", 0.0), ("z_min", 1.0), ("alpha", 1.0), ("horizon", -1.0), ("r_min", 1.0), ("format", "xml"), ("trials", -1)],
)
def test_config_validation(field, value):
    cfg = ExperimentConfig(**{field: value})
    with pytest.raises(ParameterError):
        cfg.validate()


def test_simulate_reproducible(tmp_path):
    args = ["simulate", "--alpha", "0.5", "--z-min", "1e-3", "--seed", "3", "--trials", "1"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert digest(tmp_path / "a") == digest(tmp_path / "b")
    assert main(["simulate", "--alpha", "0.5", "--z-min", "1e-3", "--seed", "4", "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "a" / "simulate_0000.csv").read_bytes() != (tmp_path / "c" / "simulate_0000.csv").read_bytes()
    meta = json.loads((tmp_path / "a" / "simulate_0000.json").read_text())
    assert meta["z_min"] == 1e-3 and {b for _, b in meta["beta_knots"]} == {0.5} and "epsilon0" in meta


def test_zero_trials_writes_no_trial_files(tmp_path):
    assert main(["simulate", "--trials", "0", "--out", str(tmp_path)]) == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["config.json"]


def test_config_file_and_flag_override(tmp_path):
    cfg = ExperimentConfig(seed=1, trials=2, z_min=1e-2, out=str(tmp_path / "o"))
    path = tmp_path / "c.json"
    path.write_text(cfg.to_json())
    assert main(["occupation", "--config", str(path), "--trials", "3"]) == 0
    written = ExperimentConfig.from_json((tmp_path / "o" / "config.json").read_text())
    assert written.trials == 3 and written.seed == 1
    assert len(read_csv(tmp_path / "o" / "occupation_summary.csv")) == 3


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.ENV_OUT, str(tmp_path / "env"))
    assert main(["simulate", "--z-min", "1e-2"]) == 0
    assert (tmp_path / "env" / "simulate_0000.csv").exists()


def test_invalid_config_exit_code(tmp_path, capsys):
    assert main(["simulate", "--z-min", "2", "--out", str(tmp_path)]) != 0
    assert "z_min" in capsys.readouterr().err


def test_unwritable_output(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["simulate", "--out", str(blocker / "sub")]) != 0
    assert "error" in capsys.readouterr().err


def test_partial_failure_lists_trials(tmp_path, monkeypatch, capsys):
    real = cli._trial

    def flaky(cmd, cfg, opts, trial):
        if trial == 1:
            raise RuntimeError("boom")
        return real(cmd, cfg, opts, trial)

    monkeypatch.setattr(cli, "_trial", flaky)
    assert main(["occupation", "--z-min", "1e-2", "--trials", "3", "--out", str(tmp_path)]) != 0
    err = capsys.readouterr().err
    assert "trial 1 failed" in err and "trial 0" not in err
    assert len(read_csv(tmp_path / "occupation_summary.csv")) == 2


def test_parallel_matches_serial(tmp_path):
    base = ["images", "--z-min", "1e-4", "--trials", "3", "--seed", "2"]
    assert main(base + ["--out", str(tmp_path / "s")]) == 0
    assert main(base + ["--jobs", "2", "--out", str(tmp_path / "p")]) == 0
    assert (tmp_path / "s" / "images_summary.csv").read_bytes() == (tmp_path / "p" / "images_summary.csv").read_bytes()


def test_spectrum_constant_alpha_curve(tmp_path):
    assert main(["spectrum", "--alpha", "0.6", "--h-min", "0.5", "--h-max", "1.3", "--h-steps", "17", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "spectrum.csv")
    assert len(rows) == 17
    for row in rows:
        h = float(row["h"])
        want = g_spectrum(0.6, h, "half_open")
        if want is NEG_INF:
            assert row["value"] == "-inf"
        else:
            assert float(row["value"]) == pytest.approx(want, rel=1e-14)
    assert float(rows[2]["value"]) == pytest.approx(0.6)  # h = alpha


def test_spectrum_empty_index_set(tmp_path):
    assert main(["spectrum", "--index-set", "", "--h-steps", "9", "--out", str(tmp_path)]) == 0
    assert {r["value"] for r in read_csv(tmp_path / "spectrum.csv")} == {"-inf"}


def test_spectrum_json_neg_inf(tmp_path):
    assert main(["spectrum", "--alpha", "0.5", "--h-steps", "4", "--format", "json", "--out", str(tmp_path)]) == 0
    rows = json.loads((tmp_path / "spectrum.json").read_text())
    assert rows[0]["value"] is None and rows[0]["value_neg_inf"] is True
    assert "value_neg_inf" not in rows[1] or not rows[1]["value_neg_inf"]


def test_spectrum_envelope_rows_match_library(tmp_path):
    text = "0.3:0.45,0.6"
    assert main(["spectrum", "--index-set", text, "--mode", "time", "--h-steps", "31", "--out", str(tmp_path)]) == 0
    I = parse_index_set(text)
    for row, h in zip(read_csv(tmp_path / "spectrum.csv"), np.linspace(0, 1.5, 31)):
        want = spectrum_envelope(float(h), I, "time")
        assert row["case"] == want.case
        assert row["value"] == ("-inf" if want.value is NEG_INF else format(want.value, ".17g"))
    assert spectrum_table([0.6], I)[0]["value"] == spectrum_envelope(0.6, I).value


def test_spectrum_from_simulated_path(tmp_path):
    assert main(["spectrum", "--z-min", "1e-3", "--h-steps", "11", "--out", str(tmp_path)]) == 0
    assert len(read_csv(tmp_path / "spectrum.csv")) == 11
    assert isinstance(json.loads((tmp_path / "spectrum_exceptional.json").read_text()), list)


@pytest.mark.parametrize(
    "cmd, extra, column",
    [
        ("localdim", ["--z-min", "1e-5"], "lower_est"),
        ("images", ["--z-min", "1e-4"], "inside"),
        ("census", ["--n", "4,6"], "E_6"),
        ("concentration", ["--z-min", "1e-5", "--n", "8"], "stat_8"),
    ],
)
def test_report_subcommands(tmp_path, cmd, extra, column):
    assert main([cmd, "--trials", "2", "--out", str(tmp_path)] + extra) == 0
    rows = read_csv(tmp_path / f"{cmd}_summary.csv")
    assert len(rows) == 2 and column in rows[0]


def test_localdim_json_per_trial(tmp_path):
    assert main(["localdim", "--z-min", "1e-5", "--format", "json", "--out", str(tmp_path)]) == 0
    rows = json.loads((tmp_path / "localdim_0000.json").read_text())
    assert {"r", "mass", "ratio", "usable", "sparse"} <= set(rows[0])

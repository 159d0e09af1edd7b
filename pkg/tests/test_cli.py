import json
from pathlib import Path

import pytest

from idprisk.cli import COMMANDS, OUT_ENV, main, schema_for

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SMALL_SPEC = {"groups": [{"eps": 2, "delta": 1e-5, "size": 600},
                         {"eps": 3, "delta": 1e-5, "size": 400}]}
TRAINING = {"rate": 0.1, "steps": 50}


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps({"version": 1, **cfg}))
    return str(path)


def run(tmp_path, command, cfg, *extra, out="out"):
    cfg_path = cfg if isinstance(cfg, str) else write(tmp_path, cfg)
    return main(["--config", cfg_path, "--out", str(tmp_path / out), *extra, command])


def test_calibrate_writes_certified_params(tmp_path, capsys):
    assert run(tmp_path, "calibrate", {"spec": SMALL_SPEC, "training": TRAINING}) == 0
    data = json.loads((tmp_path / "out/params.json").read_text())
    assert data["certified"] is True and data["seed"] == 0
    assert len(data["params"]["rates"]) == 2
    assert "sampling-based" in capsys.readouterr().out
    assert (tmp_path / "out/summary.txt").exists()


def test_calibrate_sensitivity_kind(tmp_path):
    cfg = {"spec": SMALL_SPEC, "training": TRAINING, "calibration": {"kind": "sensitivity"}}
    assert run(tmp_path, "calibrate", cfg) == 0
    params = json.loads((tmp_path / "out/params.json").read_text())["params"]
    assert params["kind"] == "sensitivity"


def test_profile_tradeoff_advantage_on_shipped_pair(tmp_path, capsys):
    cfg = str(CONFIGS / "same_guarantee_pair.json")
    for cmd, name in (("profile", "profile.csv"), ("tradeoff", "tradeoff.csv"),
                      ("advantage", "advantage.csv")):
        assert run(tmp_path, cmd, cfg) == 0
        assert (tmp_path / "out" / name).exists()
    out = capsys.readouterr().out
    assert "full-batch: advantage 0.48" in out and "subsampled: advantage 0.42" in out
    assert (tmp_path / "out/tradeoff.svg").read_text().startswith("<svg")


def test_advantage_from_a_spec(tmp_path):
    assert run(tmp_path, "advantage", {"spec": SMALL_SPEC, "training": TRAINING}) == 0
    text = (tmp_path / "out/advantage.csv").read_text()
    assert "group0" in text and "group1" in text


def test_sweep(tmp_path, capsys):
    cfg = {"training": TRAINING, "surface": {"eps1": 2, "eps2": [1, 2], "shares": [0.3, 0.7],
                                             "delta": 1e-5, "total": 1000}}
    assert run(tmp_path, "sweep", cfg) == 0
    lines = [l for l in (tmp_path / "out/surface.csv").read_text().splitlines()
             if not l.startswith("#")]
    assert len(lines) == 1 + 4
    assert "group-1 advantage range" in capsys.readouterr().out


def test_delta_on_shipped_config(tmp_path, capsys):
    assert run(tmp_path, "delta", str(CONFIGS / "delta_band.json")) == 0
    res = json.loads((tmp_path / "out/delta.json").read_text())["results"]
    assert [r["passed"] for r in res] == [True, False]
    assert (tmp_path / "out/band.csv").exists() and (tmp_path / "out/band.svg").exists()


def test_delta_needs_a_baseline(tmp_path, capsys):
    assert run(tmp_path, "delta", {"contract": {"bound": 0.05}}) == 2
    assert "baseline" in capsys.readouterr().err


def test_validate(tmp_path):
    cfg = {"spec": SMALL_SPEC, "training": TRAINING, "contract": {"bound": 0.05}}
    assert run(tmp_path, "validate", cfg) == 0
    verdict = json.loads((tmp_path / "out/verdict.json").read_text())
    assert verdict["passed"] is True


def test_attack(tmp_path, capsys):
    cfg = {"training": {"rate": 0.05, "steps": 100},
           "threat": {"mode": "central", "target": 0, "eps_max": [8, 8], "sizes": [1, 999],
                      "candidate_budgets": [1, 8], "delta": 1e-5, "bound": 0.05}}
    assert run(tmp_path, "attack", cfg) == 0
    data = json.loads((tmp_path / "out/attack.json").read_text())
    assert data["plan"]["assignment"] == [8.0, 1.0]
    assert data["excess_report"]["rejected"] and data["excess_report"]["certified"]


def test_simulate_mechanism_and_sweep(tmp_path, capsys):
    cfg = {"seed": 5, "training": {"rate": 0.2, "steps": 20},
           "simulation": {"n_trials": 2000, "mechanism": {"rate": 1.0, "sigma": 1.0, "steps": 1},
                          "sweep": {"eps": [1, 4], "delta": 1e-5, "total": 1000,
                                    "proportions": [0.2, 0.8], "replicates": 2, "mode": "both"}}}
    assert run(tmp_path, "simulate", cfg) == 0
    out = capsys.readouterr().out
    assert "sampling: JT=" in out and "sensitivity: JT=" in out
    sim = json.loads((tmp_path / "out/simulation.json").read_text())
    assert sim["seed"] == 5
    assert (tmp_path / "out/trend_sensitivity.csv").exists()


def test_simulate_needs_something_to_do(tmp_path):
    assert run(tmp_path, "simulate", {"simulation": {"n_trials": 10}}) == 2


def test_splits_on_shipped_config(tmp_path, capsys):
    assert run(tmp_path, "splits", str(CONFIGS / "splits.json")) == 0
    lines = (tmp_path / "out/splits.csv").read_text().splitlines()
    assert lines[0] == "# seed=0" and len(lines) == 2 + 512
    assert "all pass" in capsys.readouterr().out


def test_odd_split_is_a_domain_error(tmp_path, capsys):
    assert run(tmp_path, "splits", {"splits": {"group_sizes": [5, 4], "m": 4}}) == 3
    assert "pad" in capsys.readouterr().err


@pytest.mark.parametrize("cfg", [
    {"spec": {"groups": [{"eps": 1, "delta": 0, "size": 10}]}, "training": TRAINING},
    {"spec": SMALL_SPEC, "training": TRAINING, "colour": "blue"},
    {"spec": SMALL_SPEC, "training": {"rate": 0.1}},
    {"spec": SMALL_SPEC},
])
def test_schema_rejections(tmp_path, cfg, capsys):
    assert run(tmp_path, "calibrate", cfg) == 2
    assert "config rejected" in capsys.readouterr().err


def test_schema_rejects_zero_trials_and_wrong_version(tmp_path):
    assert run(tmp_path, "simulate", {"simulation": {"n_trials": 0}}) == 2
    path = tmp_path / "v2.json"
    path.write_text(json.dumps({"version": 2, "splits": {"group_sizes": [2], "m": 2}}))
    assert run(tmp_path, "splits", str(path)) == 2


def test_unreadable_config(tmp_path, capsys):
    assert run(tmp_path, "splits", str(tmp_path / "missing.json")) == 2
    (tmp_path / "bad.json").write_text("{not json")
    assert run(tmp_path, "splits", str(tmp_path / "bad.json")) == 2


def test_bad_flags_exit_via_argparse():
    with pytest.raises(SystemExit) as info:
        main(["--seed", "-1", "splits"])
    assert info.value.code == 2
    with pytest.raises(SystemExit):
        main(["nonsense"])


def test_reruns_are_byte_identical(tmp_path):
    cfg = write(tmp_path, {"seed": 9, "simulation": {"n_trials": 3000, "mechanism":
                                                     {"rate": 0.1, "sigma": 1.0, "steps": 20}}})
    assert run(tmp_path, "simulate", cfg, out="a") == 0
    assert run(tmp_path, "simulate", cfg, "--jobs", "2", out="b") == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_flags_after_the_command_and_seed_override(tmp_path):
    cfg = write(tmp_path, {"seed": 1, "splits": {"group_sizes": [4], "m": 4}})
    assert main(["splits", "--config", cfg, "--out", str(tmp_path / "o"), "--seed", "3",
                 "--no-svg"]) == 0
    assert (tmp_path / "o/splits.csv").read_text().startswith("# seed=3")


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env-out"))
    cfg = write(tmp_path, {"splits": {"group_sizes": [4], "m": 4}})
    assert main(["--config", cfg, "splits"]) == 0
    assert (tmp_path / "env-out/splits.csv").exists()


def test_every_command_has_a_schema():
    for command in COMMANDS:
        assert schema_for(command)["additionalProperties"] is False


# worked examples


def test_single_group_calibration_keeps_the_target_rate(tmp_path):
    cfg = {"spec": {"groups": [{"eps": 2, "delta": 1e-5, "size": 1000}]}, "training": TRAINING}
    assert run(tmp_path, "calibrate", cfg) == 0
    params = json.loads((tmp_path / "out/params.json").read_text())["params"]
    assert params["rates"][0] == pytest.approx(TRAINING["rate"], rel=1e-3)


def test_shipped_two_group_calibration(tmp_path):
    assert run(tmp_path, "calibrate", str(CONFIGS / "two_group_calibrate.json")) == 0
    params = json.loads((tmp_path / "out/params.json").read_text())["params"]
    assert len(params["rates"]) == 2 and isinstance(params["sigma"], float)
    assert params["rates"][0] != params["rates"][1]


def test_unsampled_mechanism_has_a_flat_zero_profile(tmp_path):
    cfg = {"mechanisms": [{"name": "idle", "rate": 0.0, "sigma": 1.0, "steps": 10}]}
    assert run(tmp_path, "profile", cfg) == 0
    rows = [l.split(",") for l in (tmp_path / "out/profile.csv").read_text().splitlines()
            if not l.startswith("#")]
    assert all(float(r[-1]) == 0.0 for r in rows[1:])


def test_one_point_sweep(tmp_path):
    cfg = {"training": TRAINING, "surface": {"eps1": 2, "eps2": [3], "shares": [0.5],
                                             "delta": 1e-5, "total": 1000}}
    assert run(tmp_path, "sweep", cfg) == 0
    lines = [l for l in (tmp_path / "out/surface.csv").read_text().splitlines()
             if not l.startswith("#")]
    assert len(lines) == 2


def test_delta_with_zero_bound(tmp_path):
    base = {"name": "base", "rate": 0.1, "sigma": 0.66, "steps": 10}
    cfg = {"contract": {"bound": 0.0, "baseline": base,
                        "candidates": [dict(base, name="self"), dict(base, name="other", sigma=2.0)]}}
    assert run(tmp_path, "delta", cfg) == 0
    res = json.loads((tmp_path / "out/delta.json").read_text())["results"]
    assert [r["passed"] for r in res] == [True, False]

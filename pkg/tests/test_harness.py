import json
from pathlib import Path

import numpy as np
import pytest

from sonocoach.env import builtin_phantom
from sonocoach.harness import (CORRECTION_HEADER, METRIC_HEADER,
                               ExperimentConfig, evaluate_policy,
                               format_report, load_experiment_config, report,
                               resolve_phantom, run_experiment,
                               save_experiment_config, svg_line_chart,
                               write_csv)
from sonocoach.sac import SacAgent


class TeleportPolicy:
    """Heads straight to a fixed pose; the evaluation upper bound."""

    def __init__(self, env_bounds, target, obs_dim=32):
        self.obs_dim = obs_dim
        self.action = np.clip(env_bounds.normalize(target), -1, 1)

    def select_action(self, obs, deterministic=False):
        return self.action


def fast_agent_overrides():
    return {"start_steps": 20, "update_after": 10 ** 9, "hidden": (16, 16),
            "autotune_alpha": False}


# -- config --------------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(total_steps=0)
    with pytest.raises(ValueError):
        ExperimentConfig(eval_trials=0)
    with pytest.raises(ValueError):
        ExperimentConfig(coaching_interval=-5)
    with pytest.raises(ValueError):
        ExperimentConfig(seeds=())


def test_config_ini_roundtrip(tmp_path):
    cfg = ExperimentConfig(phantom="P1", total_steps=5000,
                           coaching_interval=500, seeds=(3, 4),
                           eval_trials=4, eval_max_steps=25,
                           out_dir=str(tmp_path / "run"),
                           agent={"lr": 0.001, "autotune_alpha": False,
                                  "hidden": (32, 32)},
                           coach={"coached_updates": 10},
                           loop={"curve_window": 5})
    path = tmp_path / "exp.ini"
    save_experiment_config(cfg, path)
    back = load_experiment_config(path)
    assert back == cfg


def test_config_optional_numeric_override(tmp_path):
    # fields whose default is None (an unset entropy target) still need a
    # numeric parse; "none" keeps the default
    path = tmp_path / "exp.ini"
    path.write_text("[experiment]\nphantom = P0\n"
                    "[agent]\ntarget_entropy = -12\n")
    cfg = load_experiment_config(path)
    assert cfg.agent["target_entropy"] == -12.0
    path.write_text("[experiment]\nphantom = P0\n"
                    "[agent]\ntarget_entropy = none\n")
    assert load_experiment_config(path).agent["target_entropy"] is None


def test_config_load_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_experiment_config(tmp_path / "missing.ini")
    bad = tmp_path / "bad.ini"
    bad.write_text("[other]\nx = 1\n")
    with pytest.raises(ValueError):
        load_experiment_config(bad)
    unknown = tmp_path / "unknown.ini"
    unknown.write_text("[experiment]\nphantom = P0\n[agent]\nbogus = 1\n")
    with pytest.raises(ValueError):
        load_experiment_config(unknown)


def test_resolve_phantom():
    assert resolve_phantom("P1").id == "P1"
    with pytest.raises(ValueError):
        resolve_phantom("P9")


# -- evaluation -----------------------------------------------------------------------

def test_teleport_policy_upper_bound():
    phantom = builtin_phantom("P0")
    from sonocoach.env import ActionBounds
    agent = TeleportPolicy(ActionBounds(), phantom.optimum)
    m = evaluate_policy(agent, phantom, trials=3, max_steps=50, seed=0)
    for t in m.trials:
        assert t["hqi"] == 50          # stays on the optimum every step
        assert t["first_hqi"] == 1
        assert t["err_pos"] < 1e-9
        assert t["err_rot"] < 1e-9
        assert t["err_force"] < 1e-9
    assert m.hqi.sum() <= 3 * 50


def test_untrained_policy_scores_low():
    phantom = builtin_phantom("P0")
    agent = SacAgent(32, 6, seed=0)
    m = evaluate_policy(agent, phantom, trials=5, max_steps=50, seed=1)
    assert m.summary()["hqi_mean"] <= 10.0
    # no trial reached an HQI: the first-HQI aggregate falls back to the cap
    if all(t["first_hqi"] is None for t in m.trials):
        assert m.summary()["first_hqi_mean"] == 50.0


def test_eval_rejects_mismatched_dims():
    phantom = builtin_phantom("P0")
    agent = SacAgent(16, 6, seed=0)
    with pytest.raises(ValueError):
        evaluate_policy(agent, phantom, trials=1)


def test_eval_deterministic():
    phantom = builtin_phantom("P0")
    agent = SacAgent(32, 6, seed=3)
    a = evaluate_policy(agent, phantom, trials=3, seed=5)
    b = evaluate_policy(agent, phantom, trials=3, seed=5)
    assert a.trials == b.trials


# -- experiment runs --------------------------------------------------------------------

def small_cfg(out_dir, interval=0, seeds=(0,)):
    return ExperimentConfig(
        phantom="P0", total_steps=250, coaching_interval=interval,
        seeds=seeds, eval_trials=2, eval_max_steps=10, out_dir=str(out_dir),
        agent=fast_agent_overrides(),
        coach={"coached_updates": 2, "approx_iters": 20})


def test_run_experiment_artifacts(tmp_path):
    out = tmp_path / "uncoached"
    result = run_experiment(small_cfg(out))
    assert (out / "curves_seed0.csv").exists()
    assert (out / "trials_seed0.csv").exists()
    assert (out / "checkpoint_seed0.npz").exists()
    assert (out / "metrics.csv").exists()
    assert (out / "curves.svg").exists()
    # interval 0: correction log holds only its header
    lines = (out / "corrections_seed0.csv").read_text().strip().splitlines()
    assert lines == [",".join(CORRECTION_HEADER)]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["schema"] == 1
    assert manifest["config"]["phantom"] == "P0"
    assert result["per_seed"][0]["n_corrections"] == 0


def test_run_experiment_repeats_byte_identical(tmp_path):
    run_experiment(small_cfg(tmp_path / "a"))
    run_experiment(small_cfg(tmp_path / "b"))
    for name in ("metrics.csv", "curves_seed0.csv", "trials_seed0.csv"):
        assert (tmp_path / "a" / name).read_bytes() \
            == (tmp_path / "b" / name).read_bytes()


def test_coached_run_logs_corrections(tmp_path):
    out = tmp_path / "coached"
    result = run_experiment(small_cfg(out, interval=60))
    rows = (out / "corrections_seed0.csv").read_text().strip().splitlines()
    assert len(rows) - 1 == result["per_seed"][0]["n_corrections"]
    assert result["per_seed"][0]["n_corrections"] >= 1


# -- report ------------------------------------------------------------------------------

def fake_run(dirpath, phantom, interval, total, conv, hqi, first=20.0,
             err=(0.01, 0.05, 1.0)):
    dirpath.mkdir(parents=True)
    cfg = {"phantom": phantom, "coaching_interval": interval,
           "total_steps": total}
    (dirpath / "manifest.json").write_text(
        json.dumps({"schema": 1, "config": cfg}))
    rows = []
    for seed, (c, h) in enumerate(zip(conv, hqi)):
        rows.append([seed, c, h, 0.1, first, 1.0,
                     err[0], 0.0, err[1], 0.0, err[2], 0.0])
    write_csv(dirpath / "metrics.csv", METRIC_HEADER, rows)


def test_report_paper_percent_conventions(tmp_path):
    # HQI 2.1 -> 8.2 must read +74.4% (over the coached value);
    # convergence 200k -> 150k must read -25% (over the baseline)
    fake_run(tmp_path / "base", "P0", 0, 400_000, [200_000], [2.1])
    fake_run(tmp_path / "coached", "P0", 2000, 400_000, [150_000], [8.2])
    result = report(tmp_path / "base", tmp_path / "coached")
    assert result["deltas"]["hqi_mean"] == pytest.approx((8.2 - 2.1) / 8.2)
    assert result["deltas"]["convergence_median"] == pytest.approx(-0.25)
    text = format_report(result)
    assert "+74.4%" in text
    assert "-25.0%" in text


def test_report_identical_runs_zero_deltas(tmp_path):
    fake_run(tmp_path / "r", "P0", 0, 40_000, [10_000, 12_000], [5.0, 6.0])
    result = report(tmp_path / "r", tmp_path / "r")
    assert all(d == pytest.approx(0.0) for d in result["deltas"].values())


def test_report_rejects_phantom_mismatch(tmp_path):
    fake_run(tmp_path / "a", "P0", 0, 40_000, [10_000], [5.0])
    fake_run(tmp_path / "b", "P1", 2000, 40_000, [8_000], [7.0])
    with pytest.raises(ValueError):
        report(tmp_path / "a", tmp_path / "b")


def test_report_nonconverged_counts_as_total(tmp_path):
    fake_run(tmp_path / "a", "P0", 0, 40_000, ["", ""], [2.0, 2.0])
    fake_run(tmp_path / "b", "P0", 2000, 40_000, [10_000, 20_000], [5.0, 5.0])
    result = report(tmp_path / "a", tmp_path / "b")
    assert result["baseline"]["convergence_median"] == 40_000
    out_csv = tmp_path / "cmp.csv"
    report(tmp_path / "a", tmp_path / "b", out_csv=out_csv)
    assert out_csv.exists()


def test_svg_chart(tmp_path):
    path = tmp_path / "chart.svg"
    svg_line_chart({"a": ([0, 1, 2], [0.0, 0.5, 0.25]),
                    "b": ([0, 1, 2], [0.1, 0.2, 0.3])}, path, title="demo")
    text = path.read_text()
    assert text.startswith("<svg")
    assert text.count("<polyline") == 2
    with pytest.raises(ValueError):
        svg_line_chart({}, tmp_path / "empty.svg")

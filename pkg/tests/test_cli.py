import json

import pytest

from sonocoach.cli import main
from sonocoach.harness import (ExperimentConfig, save_experiment_config)


def write_cfg(tmp_path, **over):
    cfg = ExperimentConfig(
        phantom="P0", total_steps=200, coaching_interval=0, seeds=(0,),
        eval_trials=2, eval_max_steps=10, out_dir=str(tmp_path / "run"),
        agent={"start_steps": 20, "update_after": 10 ** 9,
               "hidden": (16, 16), "autotune_alpha": False}, **over)
    path = tmp_path / "exp.ini"
    save_experiment_config(cfg, path)
    return path


def test_train_then_eval_then_report(tmp_path, capsys):
    cfg_path = write_cfg(tmp_path)
    assert main(["train", "--config", str(cfg_path)]) == 0
    out = capsys.readouterr().out
    assert "seed 0" in out
    assert "artifacts in" in out

    ckpt = tmp_path / "run" / "checkpoint_seed0.npz"
    assert main(["eval", "--checkpoint", str(ckpt), "--phantom", "P0",
                 "--trials", "2", "--max-steps", "10"]) == 0
    out = capsys.readouterr().out
    assert "HQI" in out

    assert main(["report", str(tmp_path / "run"), str(tmp_path / "run")]) == 0
    out = capsys.readouterr().out
    assert "+0.0%" in out


def test_train_seed_and_out_overrides(tmp_path, capsys):
    cfg_path = write_cfg(tmp_path)
    alt = tmp_path / "alt"
    assert main(["train", "--config", str(cfg_path), "--seeds", "1",
                 "--out", str(alt)]) == 0
    capsys.readouterr()
    assert (alt / "metrics.csv").exists()
    manifest = json.loads((alt / "manifest.json").read_text())
    assert manifest["config"]["seeds"] == [1]


def test_unknown_subcommand_exits():
    with pytest.raises(SystemExit):
        main(["frobnicate"])

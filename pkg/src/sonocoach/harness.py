"""Headless experiment runner: seed sweeps of coached vs uncoached training,
deterministic evaluation, CSV artifacts, and comparison reports.

Artifact layout per run directory (schema version 1, see manifest.json):
  curves_seed{k}.csv       step, episode_return, normalized_ma
  corrections_seed{k}.csv  one row per accepted correction (empty if none)
  trials_seed{k}.csv       per-evaluation-trial metrics
  checkpoint_seed{k}.npz   trained agent
  metrics.csv              one row per seed, aggregates of the trial rows
  manifest.json            config echo + schema version
  curves.svg               learning curves, one polyline per seed
"""
from __future__ import annotations

import configparser
import csv
import json
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .coaching import CoachConfig, CoachingEngine
from .env import ScanEnv, builtin_phantom, load_phantom
from .oracle import CoachSchedule, OracleCoach
from .sac import SacAgent, SacConfig
from .training import LoopConfig, TrainingLoop

SCHEMA_VERSION = 1

HQI_THRESHOLD = 4


@dataclass
class ExperimentConfig:
    phantom: str = "P0"
    total_steps: int = 40_000
    coaching_interval: int = 2000   # 0 disables coaching entirely
    seeds: tuple = (0, 1, 2, 3, 4)
    eval_trials: int = 10
    eval_max_steps: int = 50
    out_dir: str = "runs/exp"
    agent: dict = field(default_factory=dict)   # SacConfig overrides
    coach: dict = field(default_factory=dict)   # CoachConfig overrides
    loop: dict = field(default_factory=dict)    # LoopConfig overrides
    oracle: dict = field(default_factory=dict)  # CoachSchedule overrides

    def __post_init__(self):
        if self.total_steps <= 0:
            raise ValueError("total_steps must be positive")
        if self.eval_trials <= 0:
            raise ValueError("eval_trials must be positive")
        if self.coaching_interval < 0:
            raise ValueError("coaching_interval cannot be negative")
        if "interval" in self.oracle:
            raise ValueError("set coaching_interval, not oracle interval")
        if not self.seeds:
            raise ValueError("need at least one seed")
        self.seeds = tuple(int(s) for s in self.seeds)


def _parse_override(raw: str, default):
    """Cast an INI string to the type of a dataclass default."""
    if isinstance(default, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        parts = [p for p in raw.replace(",", " ").split() if p]
        kind = type(default[0]) if default else int
        return tuple(kind(p) for p in parts)
    if isinstance(default, np.ndarray):
        parts = [p for p in raw.replace(",", " ").split() if p]
        return tuple(float(p) for p in parts)
    if default is None:
        # optional numeric fields (e.g. an entropy target); "none" keeps None
        s = raw.strip().lower()
        if s in ("", "none", "null"):
            return None
        try:
            return float(raw)
        except ValueError:
            return raw
    return raw


def _section_overrides(parser, section, config_cls) -> dict:
    if not parser.has_section(section):
        return {}
    proto = config_cls()
    out = {}
    for key, raw in parser.items(section):
        if not hasattr(proto, key):
            raise ValueError(f"unknown {section} option: {key}")
        out[key] = _parse_override(raw, getattr(proto, key))
    return out


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(path)
    if not parser.has_section("experiment"):
        raise ValueError("config needs an [experiment] section")
    sec = parser["experiment"]
    kwargs = {}
    for key in ("phantom", "out_dir"):
        if key in sec:
            kwargs[key] = sec[key]
    for key in ("total_steps", "coaching_interval", "eval_trials",
                "eval_max_steps"):
        if key in sec:
            kwargs[key] = sec.getint(key)
    if "seeds" in sec:
        kwargs["seeds"] = tuple(int(p) for p in
                                sec["seeds"].replace(",", " ").split())
    kwargs["agent"] = _section_overrides(parser, "agent", SacConfig)
    kwargs["coach"] = _section_overrides(parser, "coach", CoachConfig)
    kwargs["loop"] = _section_overrides(parser, "loop", LoopConfig)
    kwargs["oracle"] = _section_overrides(parser, "oracle", CoachSchedule)
    return ExperimentConfig(**kwargs)


def save_experiment_config(cfg: ExperimentConfig, path: str | Path) -> None:
    parser = configparser.ConfigParser()
    parser["experiment"] = {
        "phantom": cfg.phantom,
        "total_steps": str(cfg.total_steps),
        "coaching_interval": str(cfg.coaching_interval),
        "seeds": ", ".join(str(s) for s in cfg.seeds),
        "eval_trials": str(cfg.eval_trials),
        "eval_max_steps": str(cfg.eval_max_steps),
        "out_dir": cfg.out_dir,
    }
    for section in ("agent", "coach", "loop", "oracle"):
        over = getattr(cfg, section)
        if over:
            parser[section] = {k: (", ".join(map(str, v))
                                   if isinstance(v, tuple) else str(v))
                               for k, v in over.items()}
    with open(path, "w") as fh:
        parser.write(fh)


def resolve_phantom(spec: str):
    """Builtin id (P0/P1) or a path to a phantom INI file."""
    if spec in ("P0", "P1"):
        return builtin_phantom(spec)
    return load_phantom(spec)


# -- evaluation ------------------------------------------------------------------

@dataclass
class EvalMetrics:
    phantom_id: str
    trials: list            # dicts: hqi, first_hqi (None if absent), errors
    max_steps: int

    def _arr(self, key, absent=None):
        vals = [t[key] if t[key] is not None else absent for t in self.trials]
        return np.array(vals, dtype=float)

    @property
    def hqi(self) -> np.ndarray:
        return self._arr("hqi")

    @property
    def first_hqi(self) -> np.ndarray:
        # trials that never reach an HQI count as the step cap
        return self._arr("first_hqi", absent=self.max_steps)

    def errors(self, key) -> np.ndarray:
        return self._arr(key)

    def summary(self) -> dict:
        out = {"n_trials": len(self.trials)}
        for key, arr in (("hqi", self.hqi), ("first_hqi", self.first_hqi),
                         ("err_pos", self.errors("err_pos")),
                         ("err_rot", self.errors("err_rot")),
                         ("err_force", self.errors("err_force"))):
            out[f"{key}_mean"] = float(arr.mean())
            out[f"{key}_std"] = float(arr.std())
        return out


def evaluate_policy(agent: SacAgent, phantom, trials: int = 10,
                    max_steps: int = 50, seed: int = 0,
                    env_kwargs: dict | None = None) -> EvalMetrics:
    """Deterministic-mode rollouts; never terminates early on a top-grade
    image, so the HQI count reflects holding quality, not reaching it once."""
    env = ScanEnv(phantom, max_steps=max_steps,
                  terminate_on_max_quality=False, seed=seed,
                  **(env_kwargs or {}))
    if env.obs_dim != agent.obs_dim:
        raise ValueError(
            f"checkpoint expects obs_dim {agent.obs_dim}, env has {env.obs_dim}")
    gt = phantom.optimum
    rows = []
    for trial in range(trials):
        obs = env.reset(seed=seed * 1000 + trial)
        hqi = 0
        first_hqi = None
        best_r = -np.inf
        best_pose = None
        for _ in range(max_steps):
            action = agent.select_action(obs, deterministic=True)
            res = env.step(action)
            obs = res.observation
            if res.quality >= HQI_THRESHOLD:
                hqi += 1
                if first_hqi is None:
                    first_hqi = res.step_index
            if res.reward > best_r:
                best_r = res.reward
                best_pose = res.pose
            if res.done:
                break
        d = best_pose - gt
        rows.append({
            "trial": trial,
            "hqi": hqi,
            "first_hqi": first_hqi,
            "err_pos": float(np.linalg.norm(d[:2])),
            "err_rot": float(np.linalg.norm(d[2:5])),
            "err_force": float(abs(d[5])),
        })
    return EvalMetrics(phantom_id=phantom.id, trials=rows, max_steps=max_steps)


# -- CSV plumbing ---------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return format(x, ".10g")
    return str(x)


def write_csv(path: Path, header: list[str], rows: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


CURVE_HEADER = ["step", "episode_return", "normalized_ma"]
CORRECTION_HEADER = ["step", "anchor", "h", "w_c", "weight_diagnostic",
                     "transitions", "kl_before", "kl_after",
                     "d_x", "d_y", "d_roll", "d_pitch", "d_yaw", "d_fz"]
TRIAL_HEADER = ["trial", "hqi", "first_hqi", "err_pos", "err_rot", "err_force"]
METRIC_HEADER = ["seed", "convergence_step", "hqi_mean", "hqi_std",
                 "first_hqi_mean", "first_hqi_std", "err_pos_mean",
                 "err_pos_std", "err_rot_mean", "err_rot_std",
                 "err_force_mean", "err_force_std"]


def correction_rows(records: list[dict]) -> list:
    rows = []
    for r in records:
        rows.append([r["step"], r["anchor"], r["h"], r["weights"][1],
                     int(r["weight_diagnostic"]), r["transitions"],
                     r["kl_before"], r["kl_after"], *r["delta"]])
    return rows


# -- the experiment itself ---------------------------------------------------------

def run_seed(cfg: ExperimentConfig, seed: int, out: Path) -> dict:
    phantom = resolve_phantom(cfg.phantom)
    env = ScanEnv(phantom, seed=seed)
    agent = SacAgent(env.obs_dim, env.act_dim, SacConfig(**cfg.agent),
                     seed=seed)
    coach = oracle = None
    if cfg.coaching_interval > 0:
        coach = CoachingEngine(env, agent, CoachConfig(**cfg.coach), seed=seed)
        oracle = OracleCoach(phantom,
                             CoachSchedule(interval=cfg.coaching_interval,
                                           **cfg.oracle))
    loop = TrainingLoop(env, agent,
                        LoopConfig(total_steps=cfg.total_steps, **cfg.loop),
                        coach=coach, oracle=oracle, buffer_seed=seed)
    loop.run()

    write_csv(out / f"curves_seed{seed}.csv", CURVE_HEADER, loop.curve_rows)
    records = coach.corrections if coach else []
    write_csv(out / f"corrections_seed{seed}.csv", CORRECTION_HEADER,
              correction_rows(records))
    ckpt = out / f"checkpoint_seed{seed}.npz"
    agent.save(ckpt, extra_meta={"phantom": phantom.id, "seed": seed,
                                 "total_steps": cfg.total_steps,
                                 "coaching_interval": cfg.coaching_interval})
    metrics = evaluate_policy(agent, phantom, trials=cfg.eval_trials,
                              max_steps=cfg.eval_max_steps, seed=seed)
    write_csv(out / f"trials_seed{seed}.csv", TRIAL_HEADER,
              [[t["trial"], t["hqi"], t["first_hqi"], t["err_pos"],
                t["err_rot"], t["err_force"]] for t in metrics.trials])
    return {"seed": seed, "convergence_step": loop.convergence_step,
            "metrics": metrics, "n_corrections": len(records)}


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Train + evaluate every seed, write all artifacts. Returns a summary
    dict mirroring metrics.csv plus per-seed convergence steps."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    per_seed = [run_seed(cfg, seed, out) for seed in cfg.seeds]

    metric_rows = []
    for r in per_seed:
        s = r["metrics"].summary()
        metric_rows.append([r["seed"], r["convergence_step"],
                            s["hqi_mean"], s["hqi_std"],
                            s["first_hqi_mean"], s["first_hqi_std"],
                            s["err_pos_mean"], s["err_pos_std"],
                            s["err_rot_mean"], s["err_rot_std"],
                            s["err_force_mean"], s["err_force_std"]])
    write_csv(out / "metrics.csv", METRIC_HEADER, metric_rows)

    manifest = {"schema": SCHEMA_VERSION, "config": asdict(cfg)}
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)

    series = {}
    for seed in cfg.seeds:
        rows = read_csv_rows(out / f"curves_seed{seed}.csv")
        if rows:
            series[f"seed {seed}"] = ([float(r[0]) for r in rows],
                                      [float(r[2]) for r in rows])
    if series:
        svg_line_chart(series, out / "curves.svg",
                       title=f"{cfg.phantom} normalized reward")
    return {"out_dir": str(out), "per_seed": per_seed}


def read_csv_rows(path: Path) -> list[list[str]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[1:]


# -- comparison report -----------------------------------------------------------------

def _load_run(run_dir: str | Path) -> dict:
    run_dir = Path(run_dir)
    with open(run_dir / "manifest.json") as fh:
        manifest = json.load(fh)
    rows = read_csv_rows(run_dir / "metrics.csv")
    total = manifest["config"]["total_steps"]
    conv = [float(r[1]) if r[1] else float(total) for r in rows]
    return {
        "dir": str(run_dir),
        "phantom": manifest["config"]["phantom"],
        "interval": manifest["config"]["coaching_interval"],
        "total_steps": total,
        "convergence_median": statistics.median(conv),
        "convergence": conv,
        "hqi_mean": statistics.fmean(float(r[2]) for r in rows),
        "hqi": [float(r[2]) for r in rows],
        "first_hqi_mean": statistics.fmean(float(r[4]) for r in rows),
        "err_pos_mean": statistics.fmean(float(r[6]) for r in rows),
        "err_rot_mean": statistics.fmean(float(r[8]) for r in rows),
        "err_force_mean": statistics.fmean(float(r[10]) for r in rows),
    }


def report(baseline_dir: str | Path, coached_dir: str | Path,
           out_csv: str | Path | None = None) -> dict:
    """Compare two runs. Delta conventions: HQI improvement is expressed
    relative to the coached value, convergence and error changes relative
    to the baseline value."""
    base = _load_run(baseline_dir)
    coached = _load_run(coached_dir)
    if base["phantom"] != coached["phantom"]:
        raise ValueError(
            f"phantom mismatch: {base['phantom']} vs {coached['phantom']}")

    def rel(over, c, u):
        return (c - u) / over if over else 0.0

    deltas = {
        "hqi_mean": rel(coached["hqi_mean"], coached["hqi_mean"],
                        base["hqi_mean"]),
        "convergence_median": rel(base["convergence_median"],
                                  coached["convergence_median"],
                                  base["convergence_median"]),
        "first_hqi_mean": rel(base["first_hqi_mean"],
                              coached["first_hqi_mean"],
                              base["first_hqi_mean"]),
        "err_pos_mean": rel(base["err_pos_mean"], coached["err_pos_mean"],
                            base["err_pos_mean"]),
        "err_rot_mean": rel(base["err_rot_mean"], coached["err_rot_mean"],
                            base["err_rot_mean"]),
        "err_force_mean": rel(base["err_force_mean"],
                              coached["err_force_mean"],
                              base["err_force_mean"]),
    }
    result = {"baseline": base, "coached": coached, "deltas": deltas}
    if out_csv is not None:
        rows = [[k, base[k], coached[k], deltas[k]] for k in deltas]
        write_csv(Path(out_csv), ["metric", "baseline", "coached", "delta"],
                  rows)
    return result


def format_report(result: dict) -> str:
    base, coached, deltas = (result["baseline"], result["coached"],
                             result["deltas"])
    labels = {
        "hqi_mean": "HQI (mean of 50)",
        "first_hqi_mean": "first HQI step",
        "convergence_median": "convergence step (median)",
        "err_pos_mean": "position error [m]",
        "err_rot_mean": "orientation error [rad]",
        "err_force_mean": "force error [N]",
    }
    lines = [f"{'metric':<28}{'baseline':>12}{'coached':>12}{'delta':>9}",
             "-" * 61]
    for key, label in labels.items():
        d = deltas[key]
        lines.append(f"{label:<28}{base[key]:>12.4g}{coached[key]:>12.4g}"
                     f"{100 * d:>+8.1f}%")
    return "\n".join(lines)


# -- tiny dependency-free SVG chart ---------------------------------------------------

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#17becf")


def svg_line_chart(series: dict, path: str | Path, width: int = 640,
                   height: int = 360, title: str = "") -> None:
    """series: {label: (xs, ys)}. One polyline per entry, shared axes."""
    pad = 46
    all_x = [x for xs, _ in series.values() for x in xs]
    all_y = [y for _, ys in series.values() for y in ys]
    if not all_x:
        raise ValueError("nothing to plot")
    x0, x1 = min(all_x), max(all_x)
    y0, y1 = min(all_y), max(all_y)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def py(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width / 2}" y="18" text-anchor="middle" '
             f'font-size="13">{title}</text>']
    axis = (f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" '
            f'y2="{height - pad}" stroke="black"/>'
            f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" '
            f'stroke="black"/>')
    parts.append(axis)
    for txt, x, y, anchor in ((f"{x0:.4g}", pad, height - pad + 14, "middle"),
                              (f"{x1:.4g}", width - pad, height - pad + 14,
                               "middle"),
                              (f"{y0:.4g}", pad - 6, height - pad, "end"),
                              (f"{y1:.4g}", pad - 6, pad + 4, "end")):
        parts.append(f'<text x="{x}" y="{y}" text-anchor="{anchor}" '
                     f'font-size="10">{txt}</text>')
    for i, (label, (xs, ys)) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{pts}" fill="none" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{width - pad + 4}" '
                     f'y="{pad + 14 * i}" font-size="10" '
                     f'fill="{color}">{label}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts))

"""Command-line entry points: train, eval, report, serve."""
from __future__ import annotations

import argparse
import sys

from . import harness
from .sac import SacAgent


def _add_train(sub):
    p = sub.add_parser("train", help="run a seed-sweep experiment")
    p.add_argument("--config", required=True, help="experiment INI file")
    p.add_argument("--seeds", help="override seed list, e.g. 0,1,2")
    p.add_argument("--out", help="override output directory")


def _add_eval(sub):
    p = sub.add_parser("eval", help="evaluate a checkpoint deterministically")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--phantom", default="P0",
                   help="builtin id (P0/P1) or phantom INI path")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--max-steps", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)


def _add_report(sub):
    p = sub.add_parser("report", help="compare a baseline and a coached run")
    p.add_argument("baseline", help="run directory (coaching interval 0)")
    p.add_argument("coached", help="run directory with coaching")
    p.add_argument("--out", help="also write the comparison as CSV")


def _add_serve(sub):
    p = sub.add_parser("serve", help="start the live coaching service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8777)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="sonocoach")
    sub = parser.add_subparsers(dest="cmd", required=True)
    _add_train(sub)
    _add_eval(sub)
    _add_report(sub)
    _add_serve(sub)
    args = parser.parse_args(argv)

    if args.cmd == "train":
        cfg = harness.load_experiment_config(args.config)
        if args.seeds:
            cfg.seeds = tuple(int(s) for s in
                              args.seeds.replace(",", " ").split())
        if args.out:
            cfg.out_dir = args.out
        result = harness.run_experiment(cfg)
        for r in result["per_seed"]:
            s = r["metrics"].summary()
            conv = r["convergence_step"]
            print(f"seed {r['seed']}: convergence="
                  f"{conv if conv is not None else 'none'} "
                  f"hqi={s['hqi_mean']:.1f} "
                  f"corrections={r['n_corrections']}")
        print(f"artifacts in {result['out_dir']}")
        return 0

    if args.cmd == "eval":
        agent, meta = SacAgent.load(args.checkpoint)
        phantom = harness.resolve_phantom(args.phantom)
        metrics = harness.evaluate_policy(agent, phantom, trials=args.trials,
                                          max_steps=args.max_steps,
                                          seed=args.seed)
        s = metrics.summary()
        print(f"phantom {phantom.id}, {args.trials} trials x "
              f"{args.max_steps} steps (checkpoint meta: {meta})")
        print(f"  HQI         {s['hqi_mean']:.2f} +- {s['hqi_std']:.2f}")
        print(f"  first HQI   {s['first_hqi_mean']:.1f} +- "
              f"{s['first_hqi_std']:.1f}")
        print(f"  err pos     {s['err_pos_mean']:.4f} m")
        print(f"  err rot     {s['err_rot_mean']:.4f} rad")
        print(f"  err force   {s['err_force_mean']:.3f} N")
        return 0

    if args.cmd == "report":
        result = harness.report(args.baseline, args.coached, out_csv=args.out)
        print(harness.format_report(result))
        return 0

    if args.cmd == "serve":
        import uvicorn

        from .service import create_app
        uvicorn.run(create_app(), host=args.host, port=args.port)
        return 0

    return 1


if __name__ == "__main__":
    sys.exit(main())

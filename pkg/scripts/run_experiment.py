"""Run a sweep or phase grid from a TOML config, then render its figures.

    python scripts/run_experiment.py sweep scripts/configs/sweep_mc.toml --out-dir results/sweep_mc
    python scripts/run_experiment.py phase scripts/configs/phase_mc.toml --out-dir results/phase_mc
"""
import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from icra.harness import SweepConfig, monotonicity_flags, run_phase_transition, run_sweep
from icra.plots import emit_plots


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("kind", choices=["sweep", "phase"])
    p.add_argument("config")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--trials", type=int, help="override the trial count")
    p.add_argument("--parallelism", type=int)
    p.add_argument("--paper-scale", action="store_true",
                   help="n=30 with 100 trials per sweep cell or 50 per grid cell (hours of runtime)")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    cfg = SweepConfig.from_toml(args.config)
    if args.paper_scale:
        cfg = cfg.paper_scale(trials=50 if args.kind == "phase" else 100)
    if args.trials:
        cfg = dataclasses.replace(cfg, trials=args.trials)
    if args.parallelism:
        cfg = dataclasses.replace(cfg, parallelism=args.parallelism)

    out = Path(args.out_dir)
    run = run_sweep if args.kind == "sweep" else run_phase_transition
    res = run(cfg, out=out / f"{args.kind}.csv")
    for s in res.summary:
        print(f"{s.algo:5s} r={s.r:<3d} m={s.m:<4d} ck={s.checkpoint:<2d} "
              f"{s.successes:3d}/{s.trials} mean outer {s.mean_outer_iters:.1f}")
    for flag in monotonicity_flags(res.summary):
        print("non-monotone:", flag)
    for path in emit_plots(res.csv_path, out / "plots"):
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: ``icra {solve,sweep,phase,analyze,plot}``.

Exit codes: 0 on success, 1 for configuration or input errors, 2 when a
solver or decomposition fails.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .errors import (ConfigError, ContractViolation, DimensionMismatch, DomainError, IcraError,
                     SchemaError)
from .harness import (ALGOS, ARM, MC, ProblemSpec, SweepConfig, gen_operator, load_toml,
                      make_instance, run_phase_transition, run_sweep)
from .icra import IcraConfig, icra_solve, lgd_solve, nnm_report
from .ua import UAFamily, verify_property1

log = logging.getLogger("icra")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _write_json(obj, out) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, default=_default)
    if out in (None, "-"):
        print(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n")


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if dataclasses.is_dataclass(o):
        return dataclasses.asdict(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def cmd_solve(args) -> int:
    spec = ProblemSpec(args.problem, args.n1, args.n2 or args.n1, args.rank, args.m, args.seed)
    X, op, b = make_instance(spec)
    if args.algo == "icra":
        cfg = IcraConfig(c=args.c, eps1=args.eps1, eps2=args.eps2)
        rep = icra_solve(op, b, cfg, x_true=X)
    elif args.algo == "lgd":
        rep = lgd_solve(op, b, alpha=args.alpha, x_true=X)
    else:
        rep = nnm_report(op, b, x_true=X)
    payload = {"problem": dataclasses.asdict(spec), "d_r": spec.d_r, "report": rep.to_dict()}
    if not args.include_matrix:
        payload["report"].pop("X_hat")
    _write_json(payload, args.out)
    log.info("%s: snr %.2f dB, %d outer iterations, %.0f ms", args.algo, rep.snr_db,
             rep.outer_iters, rep.wall_ms)
    return EXIT_OK


def _sweep_config(args, phase: bool) -> SweepConfig:
    cfg = SweepConfig.from_toml(args.config)
    if args.paper_scale:
        cfg = cfg.paper_scale(trials=50 if phase else 100)
    if args.parallelism:
        cfg = dataclasses.replace(cfg, parallelism=args.parallelism)
    return cfg


def _report_flags(res) -> None:
    for s in res.summary:
        log.info("%s r=%d m=%d ck=%d: %d/%d", s.algo, s.r, s.m, s.checkpoint, s.successes, s.trials)


def cmd_sweep(args) -> int:
    res = run_sweep(_sweep_config(args, False), out=args.out)
    _report_flags(res)
    return EXIT_OK


def cmd_phase(args) -> int:
    res = run_phase_transition(_sweep_config(args, True), out=args.out)
    _report_flags(res)
    return EXIT_OK


def _surrogate(d: dict) -> analysis.Surrogate:
    kind = d.get("surrogate", "ua")
    if kind == "ua":
        return analysis.Surrogate.ua(UAFamily.from_name(d.get("family", "exponential")),
                                     float(d.get("delta", 1.0)))
    if kind == "rank":
        return analysis.Surrogate.rank()
    if kind == "nuclear":
        return analysis.Surrogate.nuclear()
    raise ConfigError(f"unknown surrogate {kind!r}")


def _analysis_operator(d: dict):
    try:
        problem = d.get("problem", ARM)
        n1 = int(d["n1"])
        n2 = int(d.get("n2", n1))
        m = int(d["m"])
    except KeyError as exc:
        raise ConfigError(f"analysis config needs key {exc.args[0]!r}") from None
    if problem not in (MC, ARM):
        raise ConfigError(f"problem must be 'mc' or 'arm', got {problem!r}")
    return gen_operator(problem, n1, n2, m, int(d.get("operator_seed", 0)))


def cmd_analyze(args) -> int:
    d = load_toml(args.config)
    out: dict = {"mode": args.mode}
    n_samples = int(d.get("n_samples", 1000))
    seed = int(d.get("seed", 0))
    if args.mode == "theta":
        op = _analysis_operator(d)
        sur = _surrogate(d)
        ranks = d.get("ranks")
        prof = analysis.theta_profile(op, sur, n_samples, seed, ranks)
        out["theta"] = {str(r): dataclasses.asdict(e) for r, e in sorted(prof.items())}
    elif args.mode == "spherical":
        op = _analysis_operator(d)
        est = analysis.estimate_spherical_constant(op, n_samples, seed)
        out["delta_estimate"] = dataclasses.asdict(est)
    elif args.mode == "prop4":
        fam = UAFamily.from_name(d.get("family", "exponential"))
        if "spherical" in d:
            big_delta = float(d["spherical"])
        else:
            est = analysis.estimate_spherical_constant(_analysis_operator(d), n_samples, seed)
            out["delta_estimate"] = dataclasses.asdict(est)
            big_delta = est.min_ratio
        if "n" in d:
            n = int(d["n"])
        elif "n1" in d:
            n = min(int(d["n1"]), int(d.get("n2", d["n1"])))
        else:
            raise ConfigError("prop4 needs n (or n1/n2)")
        bounds = {}
        for delta in d.get("deltas", [1.0, 0.1, 0.01]):
            try:
                bounds[repr(float(delta))] = analysis.prop4_bound(big_delta, n, float(delta), fam)
            except IcraError as exc:
                bounds[repr(float(delta))] = f"undefined: {exc}"
        out["spherical_constant"] = big_delta
        out["prop4_bounds"] = bounds
    else:
        reports = {}
        grid = np.geomspace(1e-6, 1e3, int(d.get("grid_points", 2001)))
        for name in d.get("families", ["exponential", "rational"]):
            rep = verify_property1(UAFamily.from_name(name))
            growth = verify_property1(UAFamily.from_name(name), grid=grid).growth
            reports[name] = {**dataclasses.asdict(rep), "growth_log_grid": growth,
                             "all_pass": rep.all_pass}
        out["properties"] = reports
    _write_json(out, args.out)
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plots import emit_plots

    for p in emit_plots(args.input, args.out_dir):
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="icra", description="Low-rank matrix recovery experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="solve one random instance")
    s.add_argument("--problem", choices=[MC, ARM], required=True)
    s.add_argument("--n1", type=int, required=True)
    s.add_argument("--n2", type=int)
    s.add_argument("--rank", type=int, required=True)
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--algo", choices=ALGOS, default="icra")
    s.add_argument("--c", type=float, default=0.2)
    s.add_argument("--eps1", type=float, default=1e-2)
    s.add_argument("--eps2", type=float, default=1e-2)
    s.add_argument("--alpha", type=float, default=1e-2)
    s.add_argument("--include-matrix", action="store_true", help="store X_hat in the report")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_solve)

    for name, func, helptext in (("sweep", cmd_sweep, "success rates over an (r, m) sweep"),
                                 ("phase", cmd_phase, "phase-transition grid with checkpoints")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", required=True)
        s.add_argument("--out", required=True)
        s.add_argument("--paper-scale", action="store_true",
                       help="n=30 with 100 trials per sweep cell or 50 per grid cell (hours of runtime)")
        s.add_argument("--parallelism", type=int)
        s.set_defaults(func=func)

    s = sub.add_parser("analyze", help="sampled null-space constants and bounds")
    s.add_argument("mode", choices=["theta", "spherical", "prop4", "properties"])
    s.add_argument("--config", required=True)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("plot", help="render SVG figures from a results CSV")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SchemaError, DomainError, ContractViolation, DimensionMismatch,
            FileNotFoundError) as exc:
        print(f"icra: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IcraError, np.linalg.LinAlgError) as exc:
        print(f"icra: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

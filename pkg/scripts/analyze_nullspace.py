"""Sampled null-space constants for one operator: theta profiles and the recovery-error bound.

    python scripts/analyze_nullspace.py scripts/configs/analyze.toml --out results/analyze.json
"""
import argparse
import dataclasses
import json
import sys
from pathlib import Path

from icra.analysis import Surrogate, estimate_spherical_constant, prop4_bound, theta_profile
from icra.errors import IcraError
from icra.harness import gen_operator, load_toml
from icra.ua import UAFamily


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("config")
    p.add_argument("--out", default="-")
    args = p.parse_args(argv)

    d = load_toml(args.config)
    n1, n2 = int(d["n1"]), int(d.get("n2", d["n1"]))
    op = gen_operator(d.get("problem", "arm"), n1, n2, int(d["m"]), int(d.get("operator_seed", 0)))
    n_samples, seed = int(d.get("n_samples", 1000)), int(d.get("seed", 0))
    fam = UAFamily.from_name(d.get("family", "exponential"))

    surrogates = [Surrogate.rank(), Surrogate.ua(fam, float(d.get("delta", 1.0))), Surrogate.nuclear()]
    profiles = {}
    for sur in surrogates:
        prof = theta_profile(op, sur, n_samples, seed)
        profiles[sur.label()] = {r: e.max_ratio for r, e in sorted(prof.items())}
    sph = estimate_spherical_constant(op, n_samples, seed)
    bounds = {}
    for delta in d.get("deltas", [1.0, 0.1, 0.01]):
        try:
            bounds[str(delta)] = prop4_bound(sph.min_ratio, min(n1, n2), float(delta), fam)
        except IcraError as exc:
            bounds[str(delta)] = f"undefined: {exc}"
    payload = {"theta_max_ratio": profiles, "spherical": dataclasses.asdict(sph), "bounds": bounds}
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out == "-":
        print(text)
    else:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())

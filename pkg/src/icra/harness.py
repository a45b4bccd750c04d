"""Monte Carlo experiments: instance generation, sweeps and phase-transition grids.

Every trial is identified by ``(master_seed, r, m, trial)``; the instance seed
is derived from that tuple alone, so all algorithms in a sweep see the same
matrix and operator for a given trial.  Rows are sorted cell-major and
seed-minor before they are written, which makes the CSV independent of the
worker count.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError, IcraError, SchemaError
from .icra import DEFAULT_LGD_ALPHA, DEFAULT_LGD_TOL, IcraConfig, icra_solve, lgd_solve, snr_db
from .nnm import SplitSolverConfig, solve_nnm
from .operators import DenseOperator, MeasurementOperator, SamplingOperator

log = logging.getLogger(__name__)

MC = "mc"
ARM = "arm"
ALGOS = ("icra", "nnm", "lgd")
CSV_HEADER = ["problem", "algo", "n1", "n2", "r", "m", "seed", "checkpoint", "snr_db",
              "success", "outer_iters", "inner_total", "wall_ms"]
FINAL = -1


def degrees_of_freedom(n1: int, n2: int, r: int) -> int:
    return r * (n1 + n2 - r)


@dataclass(frozen=True)
class ProblemSpec:
    problem: str
    n1: int
    n2: int
    r: int
    m: int
    seed: int

    def __post_init__(self):
        if self.problem not in (MC, ARM):
            raise ConfigError(f"problem must be 'mc' or 'arm', got {self.problem!r}")
        if not 1 <= self.r <= min(self.n1, self.n2):
            raise ConfigError(f"rank {self.r} outside [1, {min(self.n1, self.n2)}]")
        if not self.d_r <= self.m <= self.n1 * self.n2:
            raise ConfigError(f"m = {self.m} outside [d_r = {self.d_r}, {self.n1 * self.n2}]")

    @property
    def d_r(self) -> int:
        return degrees_of_freedom(self.n1, self.n2, self.r)


def gen_low_rank(n1: int, n2: int, r: int, seed) -> np.ndarray:
    """``X_l @ X_r`` with iid standard normal ``X_l`` (n1 x r) and ``X_r`` (r x n2)."""
    if not 1 <= r <= min(n1, n2):
        raise DomainError(f"rank {r} outside [1, {min(n1, n2)}]")
    rng = np.random.default_rng(seed)
    left = rng.standard_normal((n1, r))
    right = rng.standard_normal((r, n2))
    return left @ right


def gen_operator(problem: str, n1: int, n2: int, m: int, seed) -> MeasurementOperator:
    """Gaussian sensing matrix (ARM) or ``m`` distinct uniformly drawn entries (MC)."""
    if m > n1 * n2 or m < 0:
        raise DomainError(f"m = {m} outside [0, {n1 * n2}]")
    rng = np.random.default_rng(seed)
    if problem == ARM:
        return DenseOperator.gaussian(n1, n2, m, rng, seed=seed)
    if problem == MC:
        return SamplingOperator.uniform(n1, n2, m, rng, seed=seed)
    raise ConfigError(f"unknown problem {problem!r}")


def trial_seed(master: int, r: int, m: int, trial: int) -> int:
    """64-bit seed for one trial, independent of the algorithm."""
    ss = np.random.SeedSequence([int(master), int(r), int(m), int(trial)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_instance(spec: ProblemSpec):
    """Ground truth, operator and measurements; matrix and operator use separate streams."""
    x_seed, op_seed = (int(s) for s in np.random.SeedSequence(spec.seed).generate_state(2, dtype=np.uint64))
    X = gen_low_rank(spec.n1, spec.n2, spec.r, x_seed)
    op = gen_operator(spec.problem, spec.n1, spec.n2, spec.m, op_seed)
    return X, op, op.apply(X)


def snr_rec(X_true: np.ndarray, X_hat: np.ndarray) -> float:
    return snr_db(X_true, X_hat)


@dataclass
class TrialRecord:
    spec: ProblemSpec
    algo: str
    snr_db: float
    success: bool
    outer_iters: int
    inner_total: int
    wall_ms: float
    checkpoint: int = FINAL
    failure: str = ""

    def row(self) -> list[str]:
        s = self.spec
        return [s.problem, self.algo, str(s.n1), str(s.n2), str(s.r), str(s.m), str(s.seed),
                str(self.checkpoint), format(self.snr_db, ".17g"),
                "true" if self.success else "false", str(self.outer_iters),
                str(self.inner_total), format(self.wall_ms, ".17g")]


@dataclass
class SweepConfig:
    """Ranks and measurement counts to sweep, plus solver settings.

    Measurement counts come from exactly one of ``m_values`` (absolute),
    ``m_ratios`` (multiples of d_r) or ``m_fracs`` (fractions of n1 n2).
    Cells with ``m < d_r`` are skipped.
    """

    problem: str = MC
    n1: int = 30
    n2: int = 30
    ranks: list = field(default_factory=lambda: [2])
    m_values: list | None = None
    m_ratios: list | None = None
    m_fracs: list | None = None
    trials: int = 20
    algos: list = field(default_factory=lambda: list(ALGOS))
    success_threshold_db: float = 60.0
    parallelism: int = 1
    master_seed: int = 0
    checkpoints: int = 3
    c: float = 0.2
    eps1: float = 1e-2
    eps2: float = 1e-2
    max_outer: int = 25
    max_inner: int = 30
    alpha: float = DEFAULT_LGD_ALPHA
    lgd_tol: float = DEFAULT_LGD_TOL
    lgd_max_iters: int = 100
    solver_max_iters: int = 20000
    solver_tol: float = 1e-9
    out: str | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.problem not in (MC, ARM):
            raise ConfigError(f"problem must be 'mc' or 'arm', got {self.problem!r}")
        given = [g for g in (self.m_values, self.m_ratios, self.m_fracs) if g is not None]
        if len(given) != 1:
            raise ConfigError("give exactly one of m_values, m_ratios, m_fracs")
        bad = [a for a in self.algos if a not in ALGOS]
        if bad or not self.algos:
            raise ConfigError(f"unknown algorithms {bad}")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be at least 1")
        if self.checkpoints < 0:
            raise ConfigError("checkpoints must be nonnegative")
        nmin = min(self.n1, self.n2)
        for r in self.ranks:
            if not 1 <= int(r) <= nmin:
                raise ConfigError(f"rank {r} outside [1, {nmin}]")
        try:
            self.icra_config()
        except IcraError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        d = dict(d)
        if "n" in d:
            n = d.pop("n")
            d.setdefault("n1", n)
            d.setdefault("n2", n)
        known = {f.name for f in dataclasses.fields(cls)}
        extra = sorted(set(d) - known)
        if extra:
            raise ConfigError(f"unknown config keys: {', '.join(extra)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_toml(cls, path) -> "SweepConfig":
        return cls.from_dict(load_toml(path))

    def paper_scale(self, trials: int = 100) -> "SweepConfig":
        return dataclasses.replace(self, n1=30, n2=30, trials=trials)

    def icra_config(self) -> IcraConfig:
        return IcraConfig(c=self.c, eps1=self.eps1, eps2=self.eps2, max_outer=self.max_outer,
                          max_inner=self.max_inner, inner=self.solver_config())

    def solver_config(self) -> SplitSolverConfig:
        return SplitSolverConfig(max_iters=self.solver_max_iters, primal_tol=self.solver_tol,
                                 dual_tol=self.solver_tol)

    def cells(self) -> list[tuple[int, int]]:
        nn = self.n1 * self.n2
        out = []
        for r in sorted({int(r) for r in self.ranks}):
            dr = degrees_of_freedom(self.n1, self.n2, r)
            if self.m_values is not None:
                ms = [int(m) for m in self.m_values]
            elif self.m_ratios is not None:
                ms = [int(round(q * dr)) for q in self.m_ratios]
            else:
                ms = [int(round(q * nn)) for q in self.m_fracs]
            for m in sorted(set(ms)):
                if dr <= m <= nn:
                    out.append((r, m))
        return out

    def specs(self) -> list[tuple[ProblemSpec, int]]:
        return [(ProblemSpec(self.problem, self.n1, self.n2, r, m,
                             trial_seed(self.master_seed, r, m, t)), t)
                for r, m in self.cells() for t in range(self.trials)]


def load_toml(path) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc


def _failed(spec: ProblemSpec, algo: str, tag: str, checkpoint: int = FINAL) -> TrialRecord:
    return TrialRecord(spec, algo, float("nan"), False, 0, 0, 0.0, checkpoint, tag)


def run_trial(spec: ProblemSpec, cfg: SweepConfig, phase: bool = False) -> list[TrialRecord]:
    """Solve one instance with every configured algorithm, sharing the NNM solve.

    In phase mode only ICRA runs and one record is produced per outer-loop
    checkpoint ``0..cfg.checkpoints`` (0 is the nuclear norm initialization).
    """
    algos = ["icra"] if phase else list(cfg.algos)
    thr = cfg.success_threshold_db
    X, op, b = make_instance(spec)
    t0 = time.perf_counter()
    try:
        nnm = solve_nnm(op, b, cfg.solver_config())
    except (IcraError, np.linalg.LinAlgError) as exc:
        tag = f"nnm:{type(exc).__name__}"
        if phase:
            return [_failed(spec, "icra", tag, k) for k in range(cfg.checkpoints + 1)]
        return [_failed(spec, a, tag) for a in algos]
    nnm_ms = 1e3 * (time.perf_counter() - t0)
    out = []
    for algo in algos:
        try:
            if algo == "nnm":
                snr = snr_rec(X, nnm.X_hat)
                out.append(TrialRecord(spec, algo, snr, snr >= thr, 1, 0, nnm_ms))
                continue
            if algo == "lgd":
                rep = lgd_solve(op, b, cfg.alpha, cfg.lgd_tol, cfg.lgd_max_iters,
                                cfg.solver_config(), x_true=X, init=nnm)
                out.append(TrialRecord(spec, algo, rep.snr_db, rep.snr_db >= thr, rep.outer_iters,
                                       rep.inner_total, nnm_ms + rep.wall_ms))
                continue
            rep = icra_solve(op, b, cfg.icra_config(), x_true=X, init=nnm, keep_iterates=phase)
            wall = nnm_ms + rep.wall_ms
            if not phase:
                out.append(TrialRecord(spec, algo, rep.snr_db, rep.snr_db >= thr, rep.outer_iters,
                                       rep.inner_total, wall))
                continue
            for k in range(cfg.checkpoints + 1):
                j = min(k, len(rep.iterates) - 1)
                snr = snr_rec(X, rep.iterates[j])
                out.append(TrialRecord(spec, algo, snr, snr >= thr, j,
                                       int(sum(rep.inner_counts[:j])), wall, k))
        except (IcraError, np.linalg.LinAlgError) as exc:
            tag = f"{algo}:{type(exc).__name__}"
            log.warning("trial %s failed: %s", spec, exc)
            if phase:
                out.extend(_failed(spec, algo, tag, k) for k in range(cfg.checkpoints + 1))
            else:
                out.append(_failed(spec, algo, tag))
    return out


def _task(args):
    spec, trial, cfg, phase = args
    return trial, run_trial(spec, cfg, phase)


def thread_cap(requested: int) -> int:
    env = os.environ.get("ICRA_THREADS")
    if env:
        try:
            cap = int(env)
        except ValueError as exc:
            raise ConfigError(f"ICRA_THREADS must be an integer, got {env!r}") from exc
        if cap < 1:
            raise ConfigError("ICRA_THREADS must be at least 1")
        return max(1, min(requested, cap))
    return max(1, requested)


def _sort_key(cfg: SweepConfig):
    order = {a: i for i, a in enumerate(ALGOS)}

    def key(item):
        trial, rec = item
        return (rec.spec.r, rec.spec.m, trial, order[rec.algo], rec.checkpoint)
    return key


def _execute(cfg: SweepConfig, phase: bool) -> list[TrialRecord]:
    tasks = [(spec, t, cfg, phase) for spec, t in cfg.specs()]
    workers = thread_cap(cfg.parallelism)
    items = []
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for trial, recs in pool.map(_task, tasks, chunksize=1):
                items.extend((trial, r) for r in recs)
    else:
        for task in tasks:
            trial, recs = _task(task)
            items.extend((trial, r) for r in recs)
    items.sort(key=_sort_key(cfg))
    return [r for _, r in items]


@dataclass
class CellSummary:
    algo: str
    r: int
    m: int
    checkpoint: int
    trials: int
    successes: int
    failures: int
    mean_outer_iters: float

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials if self.trials else float("nan")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["success_rate"] = self.success_rate
        return d


def summarize(records: list[TrialRecord]) -> list[CellSummary]:
    groups: dict = {}
    for rec in records:
        groups.setdefault((rec.algo, rec.spec.r, rec.spec.m, rec.checkpoint), []).append(rec)
    out = []
    for (algo, r, m, ck), recs in groups.items():
        out.append(CellSummary(algo, r, m, ck, len(recs), sum(x.success for x in recs),
                               sum(bool(x.failure) for x in recs),
                               float(np.mean([x.outer_iters for x in recs]))))
    order = {a: i for i, a in enumerate(ALGOS)}
    out.sort(key=lambda s: (order[s.algo], s.r, s.m, s.checkpoint))
    return out


def monotonicity_flags(summary: list[CellSummary], min_drop: int = 2) -> list[dict]:
    """Cells where the success count falls by ``min_drop`` or more as m grows."""
    flags = []
    by_key: dict = {}
    for s in summary:
        by_key.setdefault((s.algo, s.r, s.checkpoint), []).append(s)
    for (algo, r, ck), cells in by_key.items():
        cells.sort(key=lambda s: s.m)
        for a, b in zip(cells, cells[1:]):
            if a.successes - b.successes >= min_drop:
                flags.append({"algo": algo, "r": r, "checkpoint": ck, "m_from": a.m, "m_to": b.m,
                              "drop": a.successes - b.successes})
    return flags


@dataclass
class SweepResult:
    records: list
    summary: list
    csv_path: Path | None = None
    summary_path: Path | None = None

    def rate(self, algo: str, r: int, m: int, checkpoint: int = FINAL) -> float:
        for s in self.summary:
            if (s.algo, s.r, s.m, s.checkpoint) == (algo, r, m, checkpoint):
                return s.success_rate
        raise KeyError((algo, r, m, checkpoint))


def _finish(cfg: SweepConfig, records, out, kind: str) -> SweepResult:
    summary = summarize(records)
    res = SweepResult(records, summary)
    out = out if out is not None else cfg.out
    if out is not None:
        out = Path(out)
        write_csv(records, out)
        side = out.with_suffix(".summary.json")
        failures = [{"seed": r.spec.seed, "r": r.spec.r, "m": r.spec.m, "algo": r.algo,
                     "checkpoint": r.checkpoint, "tag": r.failure} for r in records if r.failure]
        payload = {"kind": kind, "config": dataclasses.asdict(cfg),
                   "cells": [s.to_dict() for s in summary],
                   "monotonicity_flags": monotonicity_flags(summary),
                   "failures": failures}
        side.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default))
        res.csv_path, res.summary_path = out, side
    return res


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def run_sweep(cfg: SweepConfig, out=None) -> SweepResult:
    """Final-iterate success of each algorithm on every (r, m) cell."""
    return _finish(cfg, _execute(cfg, phase=False), out, "sweep")


def run_phase_transition(cfg: SweepConfig, out=None) -> SweepResult:
    """ICRA recovery rates at outer-loop checkpoints ``0..cfg.checkpoints``."""
    return _finish(cfg, _execute(cfg, phase=True), out, "phase")


def write_csv(records: list[TrialRecord], path) -> None:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for rec in records:
            w.writerow(rec.row())


_INT_COLS = ("n1", "n2", "r", "m", "seed", "checkpoint", "outer_iters", "inner_total")
_FLOAT_COLS = ("snr_db", "wall_ms")


def read_csv(path) -> list[dict]:
    """Parse a results CSV, raising SchemaError with the offending row and column."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected header") from None
        if header != CSV_HEADER:
            for col, (got, want) in enumerate(zip(header + [""] * len(CSV_HEADER), CSV_HEADER)):
                if got != want:
                    raise SchemaError(f"{path}: row 1, column {col + 1}: expected {want!r}, got {got!r}")
            raise SchemaError(f"{path}: row 1: {len(header)} columns, expected {len(CSV_HEADER)}")
        for lineno, raw in enumerate(reader, start=2):
            if not raw:
                continue
            if len(raw) != len(CSV_HEADER):
                raise SchemaError(f"{path}: row {lineno}: {len(raw)} columns, expected {len(CSV_HEADER)}")
            row = dict(zip(CSV_HEADER, raw))
            for col, name in enumerate(CSV_HEADER, start=1):
                val = row[name]
                try:
                    if name in _INT_COLS:
                        row[name] = int(val)
                    elif name in _FLOAT_COLS:
                        row[name] = float(val)
                    elif name == "success":
                        if val not in ("true", "false"):
                            raise ValueError(val)
                        row[name] = val == "true"
                    elif name == "problem" and val not in (MC, ARM):
                        raise ValueError(val)
                    elif name == "algo" and val not in ALGOS:
                        raise ValueError(val)
                except ValueError:
                    raise SchemaError(f"{path}: row {lineno}, column {col} ({name}): bad value {val!r}") from None
            rows.append(row)
    return rows


def rate_table(rows: list[dict], algo: str | None = None) -> dict:
    """``{(algo, r, m, checkpoint): (successes, trials)}`` from parsed CSV rows."""
    out: dict = {}
    for row in rows:
        if algo is not None and row["algo"] != algo:
            continue
        key = (row["algo"], row["r"], row["m"], row["checkpoint"])
        s, t = out.get(key, (0, 0))
        out[key] = (s + int(row["success"]), t + 1)
    return out


def perfect_region(rows: list[dict], checkpoint: int, algo: str = "icra") -> set:
    """Cells ``(r, m)`` recovered in every trial at a checkpoint."""
    return {(r, m) for (a, r, m, ck), (s, t) in rate_table(rows, algo).items()
            if ck == checkpoint and s == t}


def region_growth_violations(rows: list[dict], checkpoints=None, algo: str = "icra") -> list:
    """Cells that were perfect at one checkpoint but not at the next."""
    cks = sorted({row["checkpoint"] for row in rows}) if checkpoints is None else list(checkpoints)
    cks = [c for c in cks if c >= 0]
    out = []
    for a, b in zip(cks, cks[1:]):
        lost = perfect_region(rows, a, algo) - perfect_region(rows, b, algo)
        out.append({"from": a, "to": b, "lost": sorted(lost)})
    return out

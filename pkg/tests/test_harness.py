import csv
import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from icra.errors import ConfigError, DomainError, SchemaError
from icra.harness import (CSV_HEADER, FINAL, ProblemSpec, SweepConfig, TrialRecord, degrees_of_freedom,
                          gen_low_rank, gen_operator, make_instance, monotonicity_flags, rate_table,
                          read_csv, region_growth_violations, run_phase_transition, run_sweep,
                          snr_rec, summarize, thread_cap, trial_seed, write_csv)


def small(**kw):
    base = dict(problem="mc", n=6, ranks=[1], m_values=[20], trials=2, algos=["icra", "nnm"])
    base.update(kw)
    return SweepConfig.from_dict(base)


def without_wall(path):
    with open(path, newline="") as fh:
        return [row[:-1] for row in csv.reader(fh)]


def test_gen_low_rank_rank_and_determinism():
    for seed in range(100):
        X = gen_low_rank(30, 30, 5, seed)
        s = np.linalg.svd(X, compute_uv=False)
        assert int(np.sum(s > 1e-12 * s[0])) == 5
    np.testing.assert_array_equal(gen_low_rank(4, 6, 2, 9), gen_low_rank(4, 6, 2, 9))
    assert np.linalg.matrix_rank(gen_low_rank(4, 6, 4, 1)) == 4
    with pytest.raises(DomainError):
        gen_low_rank(3, 3, 4, 0)


def test_gen_operator_contracts():
    op = gen_operator("mc", 4, 5, 20, 3)
    assert op.mask.all()
    for seed in range(20):
        op = gen_operator("mc", 6, 7, 25, seed)
        assert len(set(zip(op.rows.tolist(), op.cols.tolist()))) == 25
    A = gen_operator("arm", 6, 6, 30, 1).A
    assert np.linalg.matrix_rank(A) == 30
    np.testing.assert_array_equal(A, gen_operator("arm", 6, 6, 30, 1).A)
    with pytest.raises(DomainError):
        gen_operator("mc", 3, 3, 10, 0)
    with pytest.raises(ConfigError):
        gen_operator("cs", 3, 3, 4, 0)


def test_snr_rec_examples(rng):
    X = rng.standard_normal((5, 4))
    assert snr_rec(X, X) == 300.0
    assert snr_rec(X, np.zeros_like(X)) == pytest.approx(0.0, abs=1e-12)
    E = rng.standard_normal((5, 4))
    E /= np.linalg.norm(E)
    assert snr_rec(X, X + 1e-3 * np.linalg.norm(X) * E) == pytest.approx(60.0, abs=1e-9)
    with pytest.raises(DomainError):
        snr_rec(np.zeros((2, 2)), X[:2, :2])


def test_problem_spec_invariants():
    assert ProblemSpec("mc", 30, 30, 2, 116, 0).d_r == 116 == degrees_of_freedom(30, 30, 2)
    for bad in (("mc", 5, 5, 0, 10, 0), ("mc", 5, 5, 6, 25, 0), ("mc", 5, 5, 2, 15, 0),
                ("mc", 5, 5, 1, 26, 0), ("cs", 5, 5, 1, 10, 0)):
        with pytest.raises(ConfigError):
            ProblemSpec(*bad)


def test_trial_seed_ignores_algorithm_and_separates_cells():
    seeds = {trial_seed(0, r, m, t) for r in (1, 2) for m in (10, 20) for t in range(5)}
    assert len(seeds) == 20
    assert trial_seed(3, 1, 10, 0) == trial_seed(3, 1, 10, 0)
    X1, op1, b1 = make_instance(ProblemSpec("arm", 5, 5, 1, 12, 77))
    X2, op2, b2 = make_instance(ProblemSpec("arm", 5, 5, 1, 12, 77))
    np.testing.assert_array_equal(X1, X2)
    np.testing.assert_array_equal(b1, b2)


def test_config_validation(tmp_path):
    for bad in (dict(trials=0), dict(m_values=None), dict(m_ratios=[1.5]), dict(algos=["svt"]),
                dict(algos=[]), dict(parallelism=0), dict(checkpoints=-1), dict(ranks=[7]),
                dict(c=1.5), dict(bogus=1)):
        with pytest.raises(ConfigError):
            small(**bad)
    path = tmp_path / "bad.toml"
    path.write_text("trials = [")
    with pytest.raises(ConfigError):
        SweepConfig.from_toml(path)
    with pytest.raises(ConfigError):
        SweepConfig.from_toml(tmp_path / "missing.toml")


def test_cells_respect_degrees_of_freedom():
    cfg = small(ranks=[1, 2], m_values=None, m_ratios=[0.5, 1.0, 1.5])
    for r, m in cfg.cells():
        assert m >= degrees_of_freedom(6, 6, r)
    assert cfg.cells() == [(1, 11), (1, 16), (2, 20), (2, 30)]
    assert small(m_values=None, m_fracs=[0.5, 1.0]).cells() == [(1, 18), (1, 36)]


def test_config_from_toml(tmp_path):
    path = tmp_path / "sweep.toml"
    path.write_text('problem = "arm"\nn = 5\nranks = [1, 2]\nm_ratios = [1.1]\ntrials = 3\n')
    cfg = SweepConfig.from_toml(path)
    assert (cfg.problem, cfg.n1, cfg.n2, cfg.trials) == ("arm", 5, 5, 3)
    assert cfg.success_threshold_db == 60.0
    assert cfg.paper_scale().n1 == 30 and cfg.paper_scale().trials == 100


def test_fully_observed_single_trial(tmp_path):
    cfg = small(trials=1, m_values=[36], algos=["icra"])
    res = run_sweep(cfg, out=tmp_path / "r.csv")
    assert len(res.records) == 1
    rec = res.records[0]
    assert rec.success and rec.snr_db >= 60 and rec.checkpoint == FINAL
    assert res.rate("icra", 1, 36) == 1.0
    rows = read_csv(res.csv_path)
    assert len(rows) == 1 and rows[0]["success"] is True


def test_sweep_rows_summary_and_roundtrip(tmp_path):
    cfg = small(ranks=[1, 2], m_values=[22, 30], trials=3, algos=["icra", "nnm", "lgd"])
    res = run_sweep(cfg, out=tmp_path / "s.csv")
    assert len(res.records) == 2 * 2 * 3 * 3
    for rec in res.records:
        assert rec.success == (rec.snr_db >= cfg.success_threshold_db)
    # aggregate rate is a plain count
    for s in res.summary:
        recs = [r for r in res.records if (r.algo, r.spec.r, r.spec.m) == (s.algo, s.r, s.m)]
        assert s.trials == len(recs) == 3
        assert s.success_rate == sum(r.success for r in recs) / 3
    rows = read_csv(res.csv_path)
    assert len(rows) == len(res.records)
    for row, rec in zip(rows, res.records):
        assert row["snr_db"] == rec.snr_db and row["seed"] == rec.spec.seed
    side = json.loads(res.summary_path.read_text())
    assert side["kind"] == "sweep" and len(side["cells"]) == len(res.summary)
    with open(res.csv_path) as fh:
        assert fh.readline().strip() == ",".join(CSV_HEADER)


def test_row_order_is_cell_major_seed_minor(tmp_path):
    res = run_sweep(small(ranks=[1, 2], m_values=[24, 30], trials=2), out=tmp_path / "o.csv")
    keys = [(r.spec.r, r.spec.m) for r in res.records]
    assert keys == sorted(keys)
    algos = [r.algo for r in res.records[:4]]
    assert algos == ["icra", "nnm", "icra", "nnm"]


def test_full_determinism_modulo_wall_time(tmp_path):
    cfg = small(ranks=[1, 2], m_values=[24], trials=2, algos=["icra", "nnm", "lgd"])
    a = run_sweep(cfg, out=tmp_path / "a.csv")
    b = run_sweep(cfg, out=tmp_path / "b.csv")
    assert without_wall(a.csv_path) == without_wall(b.csv_path)


def test_parallel_matches_serial(tmp_path, monkeypatch):
    monkeypatch.delenv("ICRA_THREADS", raising=False)
    cfg = small(ranks=[1], m_values=[18, 24], trials=2)
    serial = run_sweep(cfg, out=tmp_path / "serial.csv")
    par = run_sweep(dataclasses.replace(cfg, parallelism=2), out=tmp_path / "par.csv")
    assert without_wall(serial.csv_path) == without_wall(par.csv_path)


def test_thread_cap(monkeypatch):
    monkeypatch.delenv("ICRA_THREADS", raising=False)
    assert thread_cap(4) == 4
    monkeypatch.setenv("ICRA_THREADS", "2")
    assert thread_cap(4) == 2 and thread_cap(1) == 1
    for bad in ("0", "two"):
        monkeypatch.setenv("ICRA_THREADS", bad)
        with pytest.raises(ConfigError):
            thread_cap(4)


def test_solver_failures_become_rows(tmp_path, monkeypatch):
    from icra import harness
    from icra.errors import DecompositionError

    def boom(*args, **kwargs):
        raise DecompositionError("forced")

    monkeypatch.setattr(harness, "icra_solve", boom)
    res = run_sweep(small(trials=2), out=tmp_path / "f.csv")
    failed = [r for r in res.records if r.algo == "icra"]
    assert len(failed) == 2 and all(not r.success and r.failure == "icra:DecompositionError" for r in failed)
    assert all(r.failure == "" for r in res.records if r.algo == "nnm")
    side = json.loads(res.summary_path.read_text())
    assert len(side["failures"]) == 2
    assert [s.failures for s in res.summary if s.algo == "icra"] == [2]


def test_phase_grid_checkpoints(tmp_path):
    cfg = small(ranks=[1], m_values=[16, 36], trials=2, checkpoints=3)
    res = run_phase_transition(cfg, out=tmp_path / "p.csv")
    assert {r.checkpoint for r in res.records} == {0, 1, 2, 3}
    assert all(r.algo == "icra" for r in res.records)
    assert len(res.records) == 2 * 2 * 4
    assert res.rate("icra", 1, 36, 0) == 1.0
    rows = read_csv(res.csv_path)
    assert len(rows) == len(res.records)
    # the first checkpoint is the shared nuclear norm start
    first = [r for r in res.records if r.checkpoint == 0]
    assert all(r.outer_iters == 0 and r.inner_total == 0 for r in first)
    for v in region_growth_violations(rows):
        assert len(v["lost"]) <= 1


def rec(algo, r, m, seed, success, ck=FINAL):
    spec = ProblemSpec("mc", 5, 5, r, m, seed)
    return TrialRecord(spec, algo, 80.0 if success else 1.0, success, 2, 3, 1.5, ck)


def test_monotonicity_flags():
    recs = ([rec("icra", 1, 10, s, True) for s in range(4)]
            + [rec("icra", 1, 12, s, s < 2) for s in range(4)]
            + [rec("icra", 1, 14, s, s < 3) for s in range(4)])
    flags = monotonicity_flags(summarize(recs))
    assert flags == [{"algo": "icra", "r": 1, "checkpoint": FINAL, "m_from": 10, "m_to": 12, "drop": 2}]


def test_region_growth_helpers():
    rows = [dict(algo="icra", r=1, m=m, checkpoint=ck, success=ok)
            for m, ck, ok in [(10, 0, False), (10, 1, True), (12, 0, True), (12, 1, False)]]
    assert rate_table(rows)[("icra", 1, 10, 1)] == (1, 1)
    assert region_growth_violations(rows) == [{"from": 0, "to": 1, "lost": [(1, 12)]}]


def write_rows(path, rows, header=CSV_HEADER):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


GOOD = ["mc", "icra", "5", "5", "1", "10", "3", "-1", "61.5", "true", "2", "4", "12.5"]


def test_schema_errors_name_row_and_column(tmp_path):
    p = tmp_path / "x.csv"
    bad_header = list(CSV_HEADER)
    bad_header[3] = "cols"
    write_rows(p, [GOOD], bad_header)
    with pytest.raises(SchemaError, match="row 1, column 4"):
        read_csv(p)
    write_rows(p, [GOOD, GOOD[:-1]])
    with pytest.raises(SchemaError, match="row 3: 12 columns"):
        read_csv(p)
    for col, val in ((5, "two"), (9, "abc"), (10, "yes"), (1, "cs"), (2, "svt")):
        row = list(GOOD)
        row[col - 1] = val
        write_rows(p, [GOOD, row])
        with pytest.raises(SchemaError, match=f"row 3, column {col} "):
            read_csv(p)
    p.write_text("")
    with pytest.raises(SchemaError, match="empty"):
        read_csv(p)


def test_header_only_is_empty(tmp_path):
    p = tmp_path / "h.csv"
    write_csv([], p)
    assert read_csv(p) == []
    assert p.read_text() == ",".join(CSV_HEADER) + "\n"


@given(st.floats(allow_nan=False, allow_infinity=False, width=64), st.booleans())
def test_float_columns_roundtrip_exactly(tmp_path_factory, value, ok):
    p = tmp_path_factory.mktemp("rt") / "v.csv"
    r = TrialRecord(ProblemSpec("arm", 3, 3, 1, 5, 2 ** 63 + 5), "lgd", value, ok, 1, 0, value)
    write_csv([r], p)
    row = read_csv(p)[0]
    assert row["snr_db"] == value and row["wall_ms"] == value
    assert row["success"] is ok and row["seed"] == 2 ** 63 + 5

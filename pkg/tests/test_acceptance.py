"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from genbound import LearningTuple, bernstein_check, cgf, closed_form, eta_c_bound, eta_c_check, gaussian_lower_bounds
from genbound.cli import main
from genbound.mc import reproduce_example

_CACHE: dict = {}


def bundle(example_id):
    if example_id not in _CACHE:
        t0 = time.perf_counter()
        b = reproduce_example(example_id, seed=0)
        b.meta["wall_seconds"] = time.perf_counter() - t0
        _CACHE[example_id] = b
    return _CACHE[example_id]


def verdict(example_id, criterion):
    return next(v for v in bundle(example_id).verdicts if v.criterion == criterion)


def record(criterion, checks: dict, detail=""):
    ok = all(bool(v) for v in checks.values())
    failed = [k for k, v in checks.items() if not v]
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}"
    if failed:
        line += f" (failed: {', '.join(failed)})"
    if detail:
        line += f" {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_criterion_01_gaussian_closed_vs_mc():
    v = verdict("example_2", "1")
    d = v.detail
    checks = {"reps": d["reps"] == 50_000, "runtime_10s": d["seconds"] < 10}
    for n in (10, 100):
        r = d[f"n={n}"]
        checks[f"gen_n{n}"] = abs(r["mc_gen"] - 2 / n) <= 4 * r["se"]
        checks[f"emp_n{n}"] = abs(r["mc_emp_excess"] + 1 / n) <= 4 * r["se_emp"]
    record("1", checks, f"seconds={d['seconds']:.2f}")


def test_criterion_02_rate_contrast():
    fits = bundle("example_2").fits
    checks = {
        "sqrt_slope": abs(fits["bound_sqrt"].slope + 0.5) <= 0.02,
        "eta_c_slope": abs(fits["bound_eta_c"].slope + 1) <= 0.02,
        "true_slope": abs(fits["true_gen"].slope + 1) <= 1e-12,
    }
    record("2", checks, f"slopes={fits['bound_sqrt'].slope:.4f},{fits['bound_eta_c'].slope:.4f},{fits['true_gen'].slope:.6f}")


def test_criterion_03_central_constant():
    tup = LearningTuple.of("gaussian_mean")
    worst = -math.inf
    ok = True
    for n in list(range(10, 2001)) + [int(x) for x in np.geomspace(2000, 10**7, 200)]:
        rep = closed_form(tup, n)
        gap = eta_c_bound(0.125, 0.5, rep.empirical_excess, [rep.mi_exact[0]] if rep.mi_exact else rep.mi_per_sample[:1]).value - 7 / n
        ok &= 0 < gap <= 10 / n**2
        worst = max(worst, gap * n**2)
    record("3", {"gap_in_(0,10/n^2]": ok, "example_verdict": verdict("example_5_6", "3").passed}, f"max n^2*gap={worst:.4f}")


def test_criterion_04_mi_sandwich():
    ok = True
    for n in (2, 10, 100, 10_000, 10**6):
        mi = 0.5 * math.log(n / (n - 1))
        ok &= (n - 1) / n * mi < 1 / (2 * n) < mi
    record("4", {"sandwich": ok, "example_verdict": verdict("lemma_1_2", "4").passed})


def test_criterion_05_lower_bound_ordering():
    tup = LearningTuple.of("gaussian_mean")
    checks = {}
    for n in (2, 10, 100, 10_000, 10**6):
        rep = closed_form(tup, n)
        mi = [0.5 * math.log(n / (n - 1))] * n
        lower, _ = gaussian_lower_bounds(1.0, n, mi, rep.empirical_excess, rep.gen_error)
        upper = eta_c_bound(0.125, 0.5, rep.empirical_excess, mi).value
        checks[f"order_n{n}"] = lower.value <= 2 / n <= upper
        if n >= 50:
            checks[f"ratio_n{n}"] = 0.45 <= lower.value / (2 / n) <= 0.50
    checks["example_verdict"] = verdict("lemma_1_2", "5").passed
    record("5", checks)


def test_criterion_06_counterexamples():
    checks = {}
    n = 20
    for model, formula in (
        ("zero_mean_discrete", lambda eta: math.log(0.5 + 0.5 * math.exp(8 * eta**2))),
        ("hypothesis_selection", lambda eta: math.log(1 / n + (n - 1) / n * math.exp(eta**2))),
    ):
        tup = LearningTuple.of(model)
        mean = closed_form(tup, n).mean_r
        for eta in (0.1, 0.5, 1.0, 2.0):
            val = cgf(tup, n, "excess_neg", eta)
            checks[f"{model}_cgf_{eta}"] = abs(val - formula(eta)) <= 1e-12 * max(1.0, abs(formula(eta)))
            checks[f"{model}_fails_{eta}"] = not eta_c_check(val, mean, eta).holds
    checks["example_7_verdict"] = verdict("example_7", "6a").passed
    checks["example_8_verdict"] = verdict("example_8", "6b").passed
    record("6", checks)


def test_criterion_07_exponential_rate():
    d = verdict("sec_5_1", "7").detail
    checks = {
        "true_semilog_slope": abs(d["true_gen"] + 0.5) <= 0.01,
        "bound_semilog_slope": abs(d["bound_eta_c"] + 0.5) <= 0.05,
        "mc_n4": abs(d["mc_gen_n4"] - 0.107982) <= 4 * d["mc_gen_se"],
        "reps": d["reps"] == 100_000,
    }
    record("7", checks, f"slopes={d['true_gen']:.4f},{d['bound_eta_c']:.4f} mc={d['mc_gen_n4']:.5f}")


def test_criterion_08_linear_regression():
    b = bundle("sec_5_2")
    rows = b.tables["curves"].rows
    checks = {"grid": [r["n"] for r in rows] == [10, 40, 160]}
    for r in rows:
        n = r["n"]
        checks[f"gen_n{n}"] = abs(r["true_gen"] - 2 / n) <= 1e-12
        checks[f"dominates_n{n}"] = r["bound_eta_c"] >= r["true_gen"]
    checks["verdict"] = verdict("sec_5_2", "8").passed
    slope = next(f for k, f in b.fits.items() if "eta_c" in k).slope
    checks["slope"] = abs(slope + 1) <= 0.05
    record("8", checks, f"slope={slope:.4f}")


def test_criterion_09_ksg():
    t = bundle("ksg").tables["curves"]
    checks = {}
    for rho in (0.0, 0.5, 0.9):
        rows = {r["n"]: r for r in t.rows if r["rho"] == rho}
        checks[f"mean_rho{rho}"] = rows[5000]["abs_error_of_mean"] <= 0.05
        e = [rows[n]["mean_abs_error"] for n in (500, 2000, 8000)]
        checks[f"monotone_rho{rho}"] = e[0] >= e[1] >= e[2]
    record("9", checks)


def test_criterion_10_logistic_reproduction():
    d = verdict("sec_5_3", "10").detail
    record("10", d["checks"], f"pooled_c={d['pooled_c']:.3f} spread={d['spread']:.3f} gen_slope={d['gen_slope']:.3f} "
           f"seconds={d['seconds']:.1f}")


def test_criterion_11_implications():
    b_min, rep = bernstein_check(LearningTuple.of("gaussian_mean"), 1.0, B=7.0, n=100)
    t = bundle("table_1").tables["curves"]
    checks = {"B_min": abs(b_min - 4.03) < 1e-9, "B_le_7": rep.holds and b_min <= 7,
              "all_pairs_hold": all(r["holds"] for r in t.rows), "three_ops": {r["source"] for r in t.rows} >= {"bernstein", "witness", "sub_exponential"}}
    record("11", checks, f"B_min={b_min:.6g}")


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if not p.name.endswith("_manifest.json")}


def test_criterion_12_determinism(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    commands = [
        ["example", "example_2", "--seed", "11", "--reps", "3000", "--json"],
        ["example", "sec_5_3", "--seed", "11", "--reps", "40", "--json"],
    ]
    checks = {}
    for i, cmd in enumerate(commands):
        outs = []
        for j, threads in enumerate(("1", "1", "4")):
            d = tmp_path / f"{i}_{j}"
            main(cmd + ["--out", str(d), "--threads", threads])
            outs.append(_files(d))
        checks[f"{cmd[1]}_rerun"] = outs[0] == outs[1]
        checks[f"{cmd[1]}_threads"] = outs[0] == outs[2]
    capsys.readouterr()
    stdout = []
    for _ in range(2):
        main(["check", "logistic_regression", "--eta-grid", "0.8", "--n", "50", "--source", "mc", "--reps", "30", "--seed", "5"])
        main(["mi", "--estimator", "ksg", "--rho", "0.5", "--size", "800", "--seed", "5"])
        stdout.append(capsys.readouterr().out)
    checks["stdout_nonempty"] = bool(stdout[0].strip())
    checks["stdout_commands"] = stdout[0] == stdout[1]
    record("12", checks)

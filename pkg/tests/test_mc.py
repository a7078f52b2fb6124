import math

import numpy as np
import pytest

from genbound import mc
from genbound.core import LearningTuple
from genbound.mc import SweepAborted, SweepConfig, fit_exponential, fit_rate, reproduce_example, run_sweep
from genbound.model_suite import ErmResult, closed_form

GAUSS = LearningTuple.of("gaussian_mean")


def test_fit_rate_exact_laws():
    ns = [10, 100, 1000, 10**4]
    assert fit_rate([(n, 3.0 / n) for n in ns]).slope == pytest.approx(-1.0, abs=1e-9)
    assert fit_rate([(n, 3.0 / math.sqrt(n)) for n in ns]).slope == pytest.approx(-0.5, abs=1e-9)


def test_fit_rate_excludes_nonpositive_points():
    fit = fit_rate([(10, 0.1), (20, -0.05), (40, 0.025), (80, 0.0125), (160, 0.0)])
    assert len(fit.excluded) == 2 and fit.slope == pytest.approx(-1.0, abs=1e-12)
    with pytest.raises(ValueError):
        fit_rate([(10, 0.1), (20, -1.0), (30, 0.0), (40, 0.2)])


def test_fit_exponential():
    pts = [(n, n**-0.5 * math.exp(-0.5 * n)) for n in range(6, 25)]
    assert fit_exponential(pts, log_n_power=0.5).slope == pytest.approx(-0.5, abs=1e-12)


@pytest.mark.parametrize(
    "kwargs",
    [dict(n_grid=(10, 10), repetitions=5), dict(n_grid=(20, 10), repetitions=5), dict(n_grid=(10,), repetitions=1),
     dict(n_grid=(1,), repetitions=5), dict(n_grid=(10,), repetitions=5, eta_grid=(0.2, 0.1)),
     dict(n_grid=(10,), repetitions=5, outputs=frozenset({"plots"}))],
)
def test_sweep_config_validation(kwargs):
    with pytest.raises(ValueError):
        SweepConfig(GAUSS, **kwargs)


def test_gaussian_gen_mean_at_n100():
    row = run_sweep(SweepConfig(GAUSS, (100,), 50_000, 0, outputs=frozenset({"risks"})), threads=1).table.rows[0]
    assert abs(row["mc_gen"] - 0.02) <= 4 * row["mc_gen_se"]


def test_zero_mean_gen_mean_at_n100():
    tup = LearningTuple.of("zero_mean_discrete")
    row = run_sweep(SweepConfig(tup, (100,), 50_000, 0, outputs=frozenset({"risks"})), threads=1).table.rows[0]
    assert abs(row["mc_gen"] - 0.159577) <= 4 * row["mc_gen_se"]


def test_gaussian_mc_rate():
    res = run_sweep(SweepConfig(GAUSS, (50, 100, 200, 400, 800), 20_000, 2, outputs=frozenset({"risks"})))
    fit = fit_rate([(r["n"], r["mc_gen"]) for r in res.table.rows])
    assert abs(fit.slope + 1) <= 0.1


def test_sweep_deterministic():
    cfg = SweepConfig(GAUSS, (10, 20), 2, 42, eta_grid=(0.1,))
    assert run_sweep(cfg).table.to_csv() == run_sweep(cfg).table.to_csv()


@pytest.mark.parametrize("model", ["gaussian_mean", "discrete_mean", "hypothesis_selection"])
def test_sweep_thread_independent(model):
    cfg = SweepConfig(LearningTuple.of(model), (8, 16), 1100, 5, eta_grid=(0.1, 0.2))
    assert run_sweep(cfg, threads=1).table.to_csv() == run_sweep(cfg, threads=4).table.to_csv()


def test_env_var_overrides_threads(monkeypatch):
    monkeypatch.setenv("GENBOUND_THREADS", "3")
    assert mc.resolve_threads(8) == 3
    monkeypatch.setenv("GENBOUND_THREADS", "zero")
    with pytest.raises(ValueError):
        mc.resolve_threads(None)


def test_stderr_scaling():
    def se(reps):
        cfg = SweepConfig(GAUSS, (20,), reps, 9, outputs=frozenset({"risks"}))
        return run_sweep(cfg, threads=1).table.rows[0]["mc_gen_se"]

    assert se(4000) / se(16000) == pytest.approx(2.0, rel=0.2)


@pytest.mark.parametrize("model", ["gaussian_mean", "discrete_mean", "zero_mean_discrete", "linear_regression", "hypothesis_selection"])
def test_upper_bounds_dominate_closed_form_gen(model):
    tup = LearningTuple.of(model)
    for n in (4, 10, 50, 200, 1000):
        b = mc.closed_bounds(tup, n)
        gen = closed_form(tup, n).gen_error
        for key in ("bound_sqrt", "bound_fast_sg", "bound_eta_c"):
            if math.isfinite(b[key]):
                assert b[key] >= gen, (model, n, key)
        if model == "gaussian_mean":
            assert b["lower_bound"] <= gen


def test_logistic_sweep_small():
    tup = LearningTuple.of("logistic_regression")
    res = run_sweep(SweepConfig(tup, (40, 80), 60, 3, eta_grid=(0.8,), test_size=2000), threads=2)
    t = res.table
    for row in t.rows:
        assert row["nonconverged"] == 0
        assert math.isfinite(row["mc_gen"]) and math.isfinite(row["mi"]) and row["mi"] >= 0
        assert 0 <= row["c"] <= 1 and row["c_pooled"] == t.rows[0]["c_pooled"]
    assert set(mc.LOGISTIC_COLUMNS) <= set(t.columns)


def test_logistic_nonconvergence_aborts(monkeypatch):
    real = mc.erm_result

    def failing(tup, ds):
        res = real(tup, ds)
        return ErmResult(res.w, False, res.iterations)

    monkeypatch.setattr(mc, "erm_result", failing)
    tup = LearningTuple.of("logistic_regression")
    with pytest.raises(SweepAborted):
        run_sweep(SweepConfig(tup, (30,), 10, 0, test_size=100), threads=1)


def test_reproduce_unknown_example():
    with pytest.raises(KeyError):
        reproduce_example("example_99")


@pytest.mark.parametrize("example_id", ["example_3", "example_5_6", "example_loss_central", "lemma_1_2", "table_1", "example_7", "example_8"])
def test_closed_form_examples_pass(example_id):
    bundle = reproduce_example(example_id, reps=0)
    assert bundle.verdicts and all(v.passed for v in bundle.verdicts)
    assert "curves" in bundle.tables


def test_reproduce_example_2_schema():
    bundle = reproduce_example("example_2", reps=0)
    cols = bundle.tables["curves"].columns
    for c in ("n", "true_gen", "bound_sqrt", "bound_eta_c", "lower_bound"):
        assert c in cols
    assert bundle.fits["bound_sqrt"].slope == pytest.approx(-0.5, abs=0.02)


def test_sec_5_1_slope():
    bundle = reproduce_example("sec_5_1", reps=0)
    assert bundle.fits["bound_eta_c"].slope == pytest.approx(-0.5, abs=0.05)
    assert np.isfinite(bundle.fits["true_gen"].slope)

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from genbound.core import Dataset, LearningTuple, ModelId, RngStream
from genbound.model_suite import (
    CGF_KINDS,
    CgfDomainError,
    binary_entropy,
    cgf,
    cgf_evaluator,
    closed_form,
    design_constant,
    erm,
    erm_result,
    q_function,
    sample_dataset,
    validity_min_n,
)

CLOSED_MODELS = ["gaussian_mean", "discrete_mean", "zero_mean_discrete", "linear_regression", "hypothesis_selection"]


# ---------------------------------------------------------------- special functions


def test_q_function_values():
    assert q_function(0.0) == 0.5
    assert q_function(2.0) == pytest.approx(0.02275013194817921, rel=1e-12)
    for x in (0.5, 1.0, 3.0):
        assert q_function(-x) == pytest.approx(1 - q_function(x), rel=1e-14)


@pytest.mark.parametrize("x", np.linspace(-8, 8, 33))
def test_q_function_matches_mpmath(x):
    exact = float(mpmath.erfc(mpmath.mpf(x) / mpmath.sqrt(2)) / 2)
    assert q_function(x) == pytest.approx(exact, rel=1e-12)


@given(st.floats(0.01, 8.0))
def test_q_function_mills_sandwich(x):
    phi = math.exp(-x * x / 2) / math.sqrt(2 * math.pi)
    q = q_function(x)
    assert x / (1 + x * x) * phi <= q * (1 + 1e-12)
    assert q < phi / x


def test_binary_entropy_values():
    assert binary_entropy(0.0) == 0.0 and binary_entropy(1.0) == 0.0
    assert binary_entropy(0.5) == pytest.approx(math.log(2), rel=1e-15)
    # direct evaluation of -p ln p - (1-p) ln(1-p) at p = 0.02275
    p = 0.02275
    assert binary_entropy(p) == pytest.approx(-p * math.log(p) - (1 - p) * math.log1p(-p), rel=1e-14)
    assert binary_entropy(p) == pytest.approx(0.108557, abs=5e-7)
    with pytest.raises(ValueError):
        binary_entropy(1.2)


# ---------------------------------------------------------------- samplers and ERM


def test_gaussian_sampler_clt():
    tup = LearningTuple.of("gaussian_mean", mean=0.3, noise_sd=2.0)
    ds = sample_dataset(tup, 10**6, RngStream(0))
    assert abs(ds.samples.mean() - 0.3) <= 4 * 2.0 / 1e3


def test_linear_design_reused_once():
    design = tuple(float(i + 1) for i in range(10))
    tup = LearningTuple.of("linear_regression", design=design)
    ds = sample_dataset(tup, 10, RngStream(0))
    assert np.array_equal(ds.samples[:, 0], np.array(design))


def test_logistic_label_law_at_zero_margin():
    tup = LearningTuple.of("logistic_regression")
    ds = sample_dataset(tup, 2 * 10**5, RngStream(4)).samples
    margin = ds[:, :2] @ np.array([0.5, 0.5])
    near = np.argsort(np.abs(margin))[:10**4]
    assert abs(ds[near, 2].mean() - 0.5) <= 0.02


def test_logistic_label_sign_as_printed():
    tup = LearningTuple.of("logistic_regression")
    ds = sample_dataset(tup, 10**5, RngStream(5)).samples
    margin = ds[:, :2] @ np.array([0.5, 0.5])
    # P(Y=1 | x) = sigmoid(-x.w*): labels are 1 more often when the margin is negative
    assert ds[margin < -1, 2].mean() > 0.6 and ds[margin > 1, 2].mean() < 0.4


def test_sampler_rejects_zero_n():
    with pytest.raises(ValueError):
        sample_dataset(LearningTuple.of("gaussian_mean"), 0, RngStream(0))


def test_erm_examples():
    assert erm(LearningTuple.of("gaussian_mean"), Dataset(np.array([[1.0], [2.0], [3.0]])))[0] == 2.0
    assert erm(LearningTuple.of("discrete_mean"), Dataset(np.array([[-0.3], [0.1]])))[0] == -1.0
    assert erm(LearningTuple.of("discrete_mean"), Dataset(np.array([[-0.1], [0.1]])))[0] == 1.0
    x = np.array([1.0, 2.0, -1.5])
    assert erm(LearningTuple.of("linear_regression"), Dataset(np.column_stack([x, 2 * x])))[0] == pytest.approx(2.0)
    assert erm(LearningTuple.of("hypothesis_selection"), Dataset(np.array([[0.1], [2.0], [0.5]])))[0] == 1


def test_logistic_erm_converges_and_is_stationary():
    tup = LearningTuple.of("logistic_regression")
    ds = sample_dataset(tup, 200, RngStream(3))
    res = erm_result(tup, ds)
    assert res.converged
    x, y = ds.samples[:, :2], ds.samples[:, 2]
    p = 1 / (1 + np.exp(-x @ res.w))
    grad = x.T @ (p - y) / len(y)
    assert np.linalg.norm(grad) <= 1e-8
    assert np.linalg.norm(res.w) < 3


def test_logistic_erm_projects_separable_data():
    tup = LearningTuple.of("logistic_regression")
    x = np.array([[1.0, 0.0], [2.0, 0.5], [-1.0, 0.0], [-2.0, -0.3]])
    y = np.array([1.0, 1.0, 0.0, 0.0])
    res = erm_result(tup, Dataset(np.column_stack([x, y])))
    assert np.linalg.norm(res.w) < 3


def test_logistic_erm_iteration_cap_reports_nonconvergence():
    tup = LearningTuple.of("logistic_regression")
    ds = sample_dataset(tup, 100, RngStream(8))
    res = erm_result(tup, ds, max_iter=1)
    assert not res.converged and np.all(np.isfinite(res.w))


# ---------------------------------------------------------------- closed forms


def test_gaussian_closed_form():
    rep = closed_form(LearningTuple.of("gaussian_mean"), 100)
    assert rep.gen_error == pytest.approx(0.02, rel=1e-14)
    assert rep.excess == pytest.approx(0.01, rel=1e-14)
    assert rep.empirical_excess == pytest.approx(-0.01, rel=1e-14)
    assert rep.mi_per_sample[0] == pytest.approx(0.5 * math.log(100 / 99), rel=1e-14)
    assert rep.mi_per_sample[0] == pytest.approx(0.00502517, abs=5e-9)
    assert rep.gen_error == pytest.approx(rep.excess - rep.empirical_excess, rel=1e-14)
    assert rep.second_moment_r == pytest.approx(3 / 100**2 + 4 / 100)


def test_zero_mean_closed_form():
    rep = closed_form(LearningTuple.of("zero_mean_discrete"), 100)
    assert rep.gen_error == pytest.approx(math.sqrt(8 / (100 * math.pi)), rel=1e-12)
    assert rep.gen_error == pytest.approx(0.159577, abs=5e-7)
    assert rep.excess == 0.0


def test_discrete_closed_form_n4():
    rep = closed_form(LearningTuple.of("discrete_mean"), 4)
    assert rep.excess == pytest.approx(4 * q_function(2.0), rel=1e-12)
    assert rep.excess == pytest.approx(0.0910005, abs=5e-8)
    assert rep.gen_error == pytest.approx(math.sqrt(8 / (4 * math.pi)) * math.exp(-2), rel=1e-12)
    assert rep.gen_error == pytest.approx(0.107982, abs=5e-7)
    assert rep.mi_kind == "upper_bound"


@pytest.mark.parametrize("n", [4, 6, 10, 24])
def test_discrete_mi_upper_bound_dominates_exact(n):
    rep = closed_form(LearningTuple.of("discrete_mean"), n)
    assert rep.mi_per_sample[0] >= rep.mi_exact[0] > 0


def test_discrete_mi_exact_against_monte_carlo():
    tup = LearningTuple.of("discrete_mean")
    n, reps = 4, 400_000
    g = RngStream(9).generator()
    z = 1 + g.standard_normal((reps, n))
    w_pos = z.mean(axis=1) >= 0
    # I(W; Z_1) = h2(P(W=-1)) - E h2(P(W=-1 | Z_1)) with the conditional law in closed form
    rest = (z[:, 0] + (n - 1)) / math.sqrt(n - 1)
    cond = binary_entropy(q_function(rest))
    mc = binary_entropy(1 - w_pos.mean()) - cond.mean()
    assert mc == pytest.approx(closed_form(tup, n).mi_exact[0], abs=5e-3)


def test_linear_regression_closed_form():
    tup = LearningTuple.of("linear_regression")
    rep = closed_form(tup, 10)
    assert rep.gen_error == pytest.approx(0.2, rel=1e-14)
    assert rep.excess == pytest.approx(0.1, rel=1e-14)
    assert all(v == pytest.approx(0.5 * math.log(10 / 9), rel=1e-14) for v in rep.mi_per_sample)
    assert design_constant(tup, 10) == pytest.approx(0.9)


def test_linear_regression_nonuniform_design_mi():
    design = (1.0, 2.0, 3.0)
    tup = LearningTuple.of("linear_regression", design=design)
    rep = closed_form(tup, 3)
    total = 14.0
    for x, v in zip(design, rep.mi_per_sample):
        assert v == pytest.approx(0.5 * math.log(total / (total - x * x)), rel=1e-13)


def test_selection_closed_form():
    rep = closed_form(LearningTuple.of("hypothesis_selection"), 10)
    assert rep.mi_total == pytest.approx(math.log(10))
    assert rep.dataset_level and rep.excess == 0.0


def test_logistic_is_monte_carlo_only():
    rep = closed_form(LearningTuple.of("logistic_regression"), 50)
    assert rep.monte_carlo_only and math.isnan(rep.gen_error)


def test_closed_form_requires_n_at_least_two():
    with pytest.raises(ValueError):
        closed_form(LearningTuple.of("gaussian_mean"), 1)


def test_gaussian_validity_threshold():
    tup = LearningTuple.of("gaussian_mean")
    assert validity_min_n(tup) == 4
    assert "proxy_uncertified" in closed_form(tup, 3).flags
    assert "proxy_uncertified" not in closed_form(tup, 4).flags


# ---------------------------------------------------------------- CGFs


def test_cgf_examples():
    g = LearningTuple.of("gaussian_mean")
    assert cgf(g, 100, "excess_neg", 0.25) == pytest.approx(0.5 * math.log(100 / 100.25), rel=1e-12)
    assert cgf(g, 100, "excess_neg", 0.25) == pytest.approx(-0.00124844, abs=5e-9)
    assert cgf(g, 100, "loss_neg", 0.3) == pytest.approx(-0.5 * math.log1p(2 * 0.3 * 101 / 100), rel=1e-12)
    z = LearningTuple.of("zero_mean_discrete")
    assert cgf(z, 100, "excess_neg", 0.5) == pytest.approx(math.log(0.5 + 0.5 * math.e**2), rel=1e-13)
    assert cgf(z, 100, "excess_neg", 0.5) == pytest.approx(1.433781, abs=5e-7)
    s = LearningTuple.of("hypothesis_selection")
    assert cgf(s, 10, "excess_neg", 1.0) == pytest.approx(math.log(0.1 + 0.9 * math.e), rel=1e-13)
    d = LearningTuple.of("discrete_mean")
    p = q_function(2.0)
    assert cgf(d, 4, "excess_neg", 0.3) == pytest.approx(math.log(1 - p + p * math.exp(8 * 0.09 - 1.2)), rel=1e-12)


def test_cgf_domain_error_names_boundary():
    g = LearningTuple.of("gaussian_mean")
    with pytest.raises(CgfDomainError, match="boundary"):
        cgf(g, 100, "loss_pos", 10.0)


def test_logistic_cgf_unsupported():
    with pytest.raises(ValueError):
        cgf_evaluator(LearningTuple.of("logistic_regression"), 50, "excess_neg")


def _grid(ev, points=41):
    lo, hi = ev.domain
    hi = min(hi, 3.0) * (1 - 1e-6)
    return np.linspace(0, hi, points)


@pytest.mark.parametrize("model", CLOSED_MODELS)
@pytest.mark.parametrize("kind", CGF_KINDS)
@pytest.mark.parametrize("n", [2, 5, 40])
def test_cgf_zero_and_convex(model, kind, n):
    ev = cgf_evaluator(LearningTuple.of(model), n, kind)
    assert ev(0.0) == 0.0
    xs = _grid(ev)
    vals = np.array([ev(x) for x in xs])
    mids = np.array([ev(0.5 * (a + b)) for a, b in zip(xs[:-2], xs[2:])])
    assert np.all(mids <= 0.5 * (vals[:-2] + vals[2:]) + 1e-9)


@pytest.mark.parametrize("kind", CGF_KINDS)
def test_gaussian_cgf_matches_monte_carlo(kind):
    tup = LearningTuple.of("gaussian_mean")
    n, eta = 5, 0.1
    g = RngStream(12).generator()
    w = g.standard_normal(400_000) / math.sqrt(n)
    z = g.standard_normal(400_000)
    r = (w - z) ** 2 - z**2 if kind.startswith("excess") else (w - z) ** 2
    sign = -1 if kind.endswith("neg") else 1
    mc = math.log(np.mean(np.exp(sign * eta * r)))
    assert mc == pytest.approx(cgf(tup, n, kind, eta), abs=3e-3)


@pytest.mark.parametrize("n", [2, 10, 100, 10**4, 10**6])
def test_per_sample_mi_sandwich(n):
    tup = LearningTuple.of("gaussian_mean")
    eta = 0.5
    mi = 0.5 * math.log(n / (n - 1))
    # E[-eta r] = eta sigma^2 / n = 1/(2n)
    middle = 1 / (2 * n) - cgf(tup, n, "excess_neg", eta)
    assert cgf(tup, n, "excess_neg", eta) == pytest.approx(0.0, abs=1e-15)
    assert (n - 1) / n * mi < middle < mi


@pytest.mark.parametrize("model", ["zero_mean_discrete", "hypothesis_selection"])
@given(eta=st.floats(0.01, 3.0))
def test_counterexample_cgf_positive_with_zero_mean(model, eta):
    tup = LearningTuple.of(model)
    rep = closed_form(tup, 10)
    assert rep.mean_r == 0.0
    assert cgf(tup, 10, "excess_neg", eta) > 0


@pytest.mark.parametrize("model", ["gaussian_mean", "discrete_mean", "zero_mean_discrete", "linear_regression"])
def test_monte_carlo_matches_closed_form(model):
    from genbound.mc import SweepConfig, run_sweep

    tup = LearningTuple.of(model)
    n = 10
    res = run_sweep(SweepConfig(tup, (n,), 50_000, 3, outputs=frozenset({"risks"})), threads=1)
    row = res.table.rows[0]
    rep = closed_form(tup, n)
    assert abs(row["mc_gen"] - rep.gen_error) <= 4 * row["mc_gen_se"]
    assert abs(row["mc_excess"] - rep.excess) <= 4 * max(row["mc_excess_se"], 1e-15)
    assert abs(row["mc_emp_excess"] - rep.empirical_excess) <= 4 * max(row["mc_emp_excess_se"], 1e-15)

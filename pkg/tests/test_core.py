import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from genbound.core import (
    Dataset,
    JointDraw,
    LearningTuple,
    ModelId,
    ModelParams,
    RngStream,
    evaluate_loss,
    excess_loss,
    reference_hypothesis,
    risk_record,
)
from genbound.model_suite import erm, sample_dataset

ALL_MODELS = [m.value for m in ModelId]


def test_model_aliases():
    assert ModelId.parse("logistic") is ModelId.LOGISTIC_REGRESSION
    assert ModelId.parse("selection") is ModelId.HYPOTHESIS_SELECTION
    with pytest.raises(ValueError):
        ModelId.parse("svm")


@pytest.mark.parametrize(
    "kwargs",
    [{"noise_sd": 0.0}, {"noise_sd": math.inf}, {"mean": math.nan}, {"hypothesis_radius": -1}, {"design": (0.0, 0.0)}],
)
def test_params_validation(kwargs):
    with pytest.raises(ValueError):
        ModelParams(**kwargs)


def test_logistic_radius_must_exceed_w_star():
    with pytest.raises(ValueError):
        LearningTuple.of("logistic_regression", hypothesis_radius=0.5)


def test_loss_examples():
    g = LearningTuple.of("gaussian_mean")
    assert evaluate_loss(g, 0.0, 0.0) == 0.0
    assert evaluate_loss(g, 1.0, 3.0) == 4.0
    lg = LearningTuple.of("logistic_regression")
    assert evaluate_loss(lg, [0.0, 0.0], [0.3, -2.0, 1.0]) == pytest.approx(math.log(2), abs=1e-15)
    assert evaluate_loss(lg, [0.0, 0.0], [5.0, 1.0, 0.0]) == pytest.approx(math.log(2), abs=1e-15)


def test_logistic_loss_is_stable_for_large_margins():
    lg = LearningTuple.of("logistic_regression", hypothesis_radius=1e6)
    val = evaluate_loss(lg, [1000.0, 0.0], [1000.0, 0.0, 0.0])
    assert math.isfinite(val) and val == pytest.approx(1e6)


def test_excess_loss_examples():
    g = LearningTuple.of("gaussian_mean")
    assert excess_loss(g, 1.0, 2.0) == -3.0
    d = LearningTuple.of("discrete_mean")
    for z in (-1.3, 0.0, 2.5):
        assert excess_loss(d, -1.0, z) == pytest.approx(4 * z)


def test_dimension_mismatch_rejected():
    lg = LearningTuple.of("logistic_regression")
    with pytest.raises(ValueError):
        evaluate_loss(lg, [0.0, 0.0, 0.0], [0.0, 0.0, 1.0])


@pytest.mark.parametrize("model", ALL_MODELS)
@given(seed=st.integers(0, 2**32))
def test_excess_loss_zero_at_reference(model, seed):
    tup = LearningTuple.of(model)
    ds = sample_dataset(tup, 7, RngStream(seed))
    w_star = reference_hypothesis(tup)
    for z in ds.samples:
        assert excess_loss(tup, w_star, z) == 0.0


@pytest.mark.parametrize("model", ALL_MODELS)
def test_streams_reproduce_bit_identically(model):
    tup = LearningTuple.of(model)
    a = sample_dataset(tup, 20, RngStream(11, 3))
    b = sample_dataset(tup, 20, RngStream(11, 3))
    c = sample_dataset(tup, 20, RngStream(11, 4))
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


def test_stream_children_are_distinct():
    s = RngStream(5, 2)
    x = s.child(0).generator().standard_normal(4)
    y = s.child(1).generator().standard_normal(4)
    assert not np.array_equal(x, y)
    assert np.array_equal(x, RngStream(5, 2).child(0).generator().standard_normal(4))


def test_dataset_is_read_only_and_uniform():
    ds = Dataset(np.ones((3, 2)))
    assert ds.n == 3
    with pytest.raises(ValueError):
        ds.samples[0, 0] = 2.0
    with pytest.raises(ValueError):
        Dataset(np.empty((0, 1)))


@pytest.mark.parametrize("model", ["gaussian_mean", "discrete_mean", "zero_mean_discrete", "linear_regression", "hypothesis_selection"])
@given(seed=st.integers(0, 2**32), n=st.integers(2, 30))
def test_risk_record_identities(model, seed, n):
    tup = LearningTuple.of(model)
    ds = sample_dataset(tup, n, RngStream(seed))
    rec = risk_record(tup, JointDraw(erm(tup, ds), ds, seed))
    assert abs(rec.gen_error + rec.empirical_risk - rec.population_risk) <= 1e-12
    assert rec.excess_risk >= -1e-12


def test_risk_record_at_optimum_has_zero_excess():
    tup = LearningTuple.of("gaussian_mean", mean=0.7)
    ds = sample_dataset(tup, 10, RngStream(0))
    rec = risk_record(tup, JointDraw(np.array([0.7]), ds, 0))
    assert rec.excess_risk == 0.0


def test_risk_record_rejects_empty_test_set():
    tup = LearningTuple.of("logistic_regression")
    ds = sample_dataset(tup, 10, RngStream(0))
    with pytest.raises(ValueError):
        risk_record(tup, JointDraw(erm(tup, ds), ds, 0), Dataset(np.empty((0, 3))))


def test_logistic_population_risk_test_sample_matches_oracle():
    tup = LearningTuple.of("logistic_regression")
    ds = sample_dataset(tup, 100, RngStream(1))
    draw = JointDraw(erm(tup, ds), ds, 1)
    small = sample_dataset(tup, 10**5, RngStream(2))
    big = sample_dataset(tup, 10**6, RngStream(3))
    from genbound.core import losses

    a = losses(tup, draw.hypothesis, small.samples)
    b = losses(tup, draw.hypothesis, big.samples)
    se = math.sqrt(a.var() / a.size + b.var() / b.size)
    assert abs(risk_record(tup, draw, small).population_risk - b.mean()) <= 3 * se

"""Shared domain types: learning tuples, datasets, risk records and random streams.

Every quantity is expressed in nats. Hypotheses are carried as 1-D float arrays
(length 1 for the scalar models, ``dim`` for logistic regression, and a single
integer-valued entry for hypothesis selection).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class ModelId(str, enum.Enum):
    GAUSSIAN_MEAN = "gaussian_mean"
    DISCRETE_MEAN = "discrete_mean"
    ZERO_MEAN_DISCRETE = "zero_mean_discrete"
    LINEAR_REGRESSION = "linear_regression"
    LOGISTIC_REGRESSION = "logistic_regression"
    HYPOTHESIS_SELECTION = "hypothesis_selection"

    @classmethod
    def parse(cls, value: "str | ModelId") -> "ModelId":
        if isinstance(value, cls):
            return value
        aliases = {"logistic": cls.LOGISTIC_REGRESSION, "selection": cls.HYPOTHESIS_SELECTION}
        if value in aliases:
            return aliases[value]
        try:
            return cls(value)
        except ValueError:
            names = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown model {value!r}; expected one of: {names}") from None


_LOSS_IDS = {
    ModelId.GAUSSIAN_MEAN: "squared",
    ModelId.DISCRETE_MEAN: "squared",
    ModelId.ZERO_MEAN_DISCRETE: "squared",
    ModelId.LINEAR_REGRESSION: "squared_residual",
    ModelId.LOGISTIC_REGRESSION: "cross_entropy",
    ModelId.HYPOTHESIS_SELECTION: "negated_selection",
}

DISCRETE_HYPOTHESES = (-1.0, 1.0)


@dataclass(frozen=True)
class ModelParams:
    """Parameters of one analytic learning problem.

    ``design`` is the fixed regression design; an empty tuple means all ones and
    a shorter design is tiled cyclically up to the requested sample size.
    ``label_sign`` selects the logistic label law ``P(Y=1|x) = sigmoid(label_sign * x.w_star)``;
    the default of -1 follows the law exactly as printed in the source experiment.
    """

    mean: float = 0.0
    noise_sd: float = 1.0
    design: tuple[float, ...] = ()
    dim: int = 2
    w_star: tuple[float, ...] = (0.5, 0.5)
    hypothesis_radius: float = 3.0
    reg_coeff: float = 0.0
    reg_bound: float | None = None
    label_sign: int = -1

    def __post_init__(self) -> None:
        object.__setattr__(self, "design", tuple(float(x) for x in self.design))
        object.__setattr__(self, "w_star", tuple(float(x) for x in self.w_star))
        scalars = [self.mean, self.noise_sd, self.hypothesis_radius, self.reg_coeff, *self.design, *self.w_star]
        if self.reg_bound is not None:
            scalars.append(self.reg_bound)
        if not all(math.isfinite(v) for v in scalars):
            raise ValueError("model parameters must be finite")
        if self.noise_sd <= 0:
            raise ValueError(f"noise_sd must be > 0, got {self.noise_sd}")
        if self.hypothesis_radius <= 0:
            raise ValueError("hypothesis_radius must be > 0")
        if self.reg_coeff < 0:
            raise ValueError("reg_coeff must be >= 0")
        if self.reg_bound is not None and self.reg_bound <= 0:
            raise ValueError("reg_bound must be > 0")
        if self.dim < 1:
            raise ValueError("dim must be a positive integer")
        if self.label_sign not in (-1, 1):
            raise ValueError("label_sign must be -1 or +1")
        if self.design and all(x == 0 for x in self.design):
            raise ValueError("design entries must not all be zero")


def default_params(model_id: "ModelId | str") -> ModelParams:
    """Parameters used by the worked examples for each model."""
    model_id = ModelId.parse(model_id)
    if model_id is ModelId.DISCRETE_MEAN:
        return ModelParams(mean=1.0, noise_sd=1.0)
    if model_id is ModelId.LINEAR_REGRESSION:
        return ModelParams(noise_sd=1.0, w_star=(1.0,))
    if model_id is ModelId.LOGISTIC_REGRESSION:
        return ModelParams(w_star=(0.5, 0.5), dim=2, hypothesis_radius=3.0)
    if model_id is ModelId.HYPOTHESIS_SELECTION:
        return ModelParams(mean=1.0, noise_sd=1.0)
    return ModelParams()


@dataclass(frozen=True)
class LearningTuple:
    """Data law, loss, hypothesis space and algorithm, all fixed by ``model_id``."""

    model_id: ModelId
    params: ModelParams = field(default_factory=ModelParams)

    def __post_init__(self) -> None:
        object.__setattr__(self, "model_id", ModelId.parse(self.model_id))
        p, m = self.params, self.model_id
        if m is ModelId.DISCRETE_MEAN and p.mean <= 0:
            raise ValueError("discrete_mean needs mean > 0 so that w* = 1")
        if m is ModelId.ZERO_MEAN_DISCRETE and p.mean != 0:
            raise ValueError("zero_mean_discrete requires mean == 0")
        if m is ModelId.LINEAR_REGRESSION and len(p.w_star) != 1:
            raise ValueError("linear_regression uses a scalar w_star")
        if m is ModelId.LOGISTIC_REGRESSION:
            if len(p.w_star) != p.dim:
                raise ValueError(f"w_star has {len(p.w_star)} entries, dim is {p.dim}")
            if float(np.linalg.norm(p.w_star)) >= p.hypothesis_radius:
                raise ValueError("hypothesis_radius must exceed ||w_star||")
        if p.reg_coeff > 0 and m is not ModelId.LOGISTIC_REGRESSION:
            raise ValueError("regularized ERM is only defined for the bounded logistic hypothesis space")

    @classmethod
    def of(cls, model_id: "ModelId | str", **overrides) -> "LearningTuple":
        base = default_params(model_id)
        if overrides:
            base = ModelParams(**{**base.__dict__, **overrides})
        return cls(ModelId.parse(model_id), base)

    @property
    def loss_id(self) -> str:
        return _LOSS_IDS[self.model_id]

    @property
    def dataset_level(self) -> bool:
        """True when the loss is defined on the whole dataset rather than per sample."""
        return self.model_id is ModelId.HYPOTHESIS_SELECTION

    @property
    def has_closed_form(self) -> bool:
        return self.model_id is not ModelId.LOGISTIC_REGRESSION

    @property
    def arity(self) -> int:
        if self.model_id is ModelId.LINEAR_REGRESSION:
            return 2
        if self.model_id is ModelId.LOGISTIC_REGRESSION:
            return self.params.dim + 1
        return 1


@dataclass(frozen=True)
class Dataset:
    """``n`` samples stored row-wise in a read-only ``(n, arity)`` array."""

    samples: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.samples, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise ValueError("a dataset needs at least one sample of fixed arity")
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    def __len__(self) -> int:
        return self.n


@dataclass(frozen=True)
class RngStream:
    """Deterministic, independent random stream keyed by ``(master_seed, stream_index)``.

    Streams are derived with ``numpy.random.SeedSequence`` spawn keys and drive a
    Philox counter-based generator, so distinct keys give independent sequences and
    equal keys reproduce identical ones. ``subkey`` extends the key for nested use
    (bootstrap resampling, test sets) without touching sibling streams.
    """

    master_seed: int
    stream_index: int = 0
    subkey: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        for v in (self.master_seed, self.stream_index, *self.subkey):
            if not 0 <= int(v) < 2**64:
                raise ValueError("stream keys must be 64-bit unsigned integers")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(
            entropy=int(self.master_seed), spawn_key=(int(self.stream_index), *self.subkey)
        )
        return np.random.Generator(np.random.Philox(seq))

    def child(self, index: int) -> "RngStream":
        return RngStream(self.master_seed, self.stream_index, (*self.subkey, int(index)))


@dataclass(frozen=True)
class JointDraw:
    hypothesis: np.ndarray
    dataset: Dataset
    seed: int
    stream_index: int = 0
    converged: bool = True

    def __post_init__(self) -> None:
        w = np.atleast_1d(np.array(self.hypothesis, dtype=float))
        w.flags.writeable = False
        object.__setattr__(self, "hypothesis", w)


@dataclass(frozen=True)
class RiskRecord:
    population_risk: float
    empirical_risk: float
    excess_risk: float
    empirical_excess: float
    gen_error: float


def reference_hypothesis(tup: LearningTuple) -> np.ndarray:
    """The population risk minimizer ``w*`` used by the pointwise excess loss.

    For logistic regression this is ``label_sign * w_star``: under the as-printed
    label law the cross-entropy minimizer is the reflection of ``w_star``.
    """
    p, m = tup.params, tup.model_id
    if m is ModelId.GAUSSIAN_MEAN:
        return np.array([p.mean])
    if m in (ModelId.DISCRETE_MEAN, ModelId.ZERO_MEAN_DISCRETE):
        return np.array([1.0])
    if m is ModelId.LINEAR_REGRESSION:
        return np.array([p.w_star[0]])
    if m is ModelId.LOGISTIC_REGRESSION:
        return p.label_sign * np.array(p.w_star)
    return np.array([0.0])


def design_for(tup: LearningTuple, n: int) -> np.ndarray:
    """Fixed regression inputs for a sample of size ``n``."""
    d = tup.params.design
    if not d:
        return np.ones(n)
    return np.resize(np.array(d, dtype=float), n)


def _as_w(tup: LearningTuple, w) -> np.ndarray:
    w = np.atleast_1d(np.asarray(w, dtype=float))
    expected = tup.params.dim if tup.model_id is ModelId.LOGISTIC_REGRESSION else 1
    if w.shape != (expected,):
        raise ValueError(f"{tup.model_id.value} expects a hypothesis of length {expected}, got shape {w.shape}")
    return w


def losses(tup: LearningTuple, w, samples: np.ndarray) -> np.ndarray:
    """Per-sample losses of hypothesis ``w`` on the rows of ``samples``.

    For hypothesis selection the whole array is one dataset and a single-element
    array ``[-z_w]`` is returned.
    """
    w = _as_w(tup, w)
    s = np.asarray(samples, dtype=float)
    if s.ndim == 1:
        s = s[:, None] if tup.arity == 1 or tup.dataset_level else s[None, :]
    m = tup.model_id
    if tup.dataset_level:
        idx = int(round(w[0]))
        z = s.reshape(-1)
        if not 0 <= idx < z.size:
            raise ValueError(f"selection index {idx} outside 0..{z.size - 1}")
        return np.array([-z[idx]])
    if s.shape[1] != tup.arity:
        raise ValueError(f"{m.value} samples have arity {tup.arity}, got {s.shape[1]}")
    if m is ModelId.LINEAR_REGRESSION:
        return (s[:, 1] - w[0] * s[:, 0]) ** 2
    if m is ModelId.LOGISTIC_REGRESSION:
        t = s[:, :-1] @ w
        # softplus(t) - y t is the cross-entropy written without overflow
        return np.logaddexp(0.0, t) - s[:, -1] * t
    return (w[0] - s[:, 0]) ** 2


def evaluate_loss(tup: LearningTuple, w, z) -> float:
    """Loss of hypothesis ``w`` on one sample ``z`` (the full dataset for selection)."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if tup.dataset_level:
        return float(losses(tup, w, z)[0])
    if z.shape != (tup.arity,):
        raise ValueError(f"{tup.model_id.value} samples have arity {tup.arity}, got shape {z.shape}")
    return float(losses(tup, w, z[None, :])[0])


def excess_loss(tup: LearningTuple, w, z) -> float:
    """Pointwise excess loss r(w, z) = loss(w, z) - loss(w*, z)."""
    w = _as_w(tup, w)
    w_ref = reference_hypothesis(tup)
    if np.array_equal(w, w_ref):
        return 0.0
    return evaluate_loss(tup, w, z) - evaluate_loss(tup, w_ref, z)


def population_risk(tup: LearningTuple, w, n: int | None = None) -> float:
    """Exact expected loss of a fixed hypothesis for every model with a closed form.

    Linear regression averages over the fixed design of size ``n``.
    """
    w = _as_w(tup, w)
    p, m = tup.params, tup.model_id
    var = p.noise_sd**2
    if m in (ModelId.GAUSSIAN_MEAN, ModelId.DISCRETE_MEAN, ModelId.ZERO_MEAN_DISCRETE):
        return float((w[0] - p.mean) ** 2 + var)
    if m is ModelId.LINEAR_REGRESSION:
        if n is None:
            raise ValueError("linear_regression population risk needs the design size n")
        x2 = float(np.mean(design_for(tup, n) ** 2))
        return float(var + (w[0] - p.w_star[0]) ** 2 * x2)
    if m is ModelId.HYPOTHESIS_SELECTION:
        return -p.mean
    raise ValueError("logistic_regression has no closed-form population risk; pass a test set")


def risk_record(tup: LearningTuple, draw: JointDraw, test_set: Dataset | None = None) -> RiskRecord:
    """Risk quantities of one joint draw.

    Population terms come from the closed form when ``test_set`` is None and from the
    test-set mean otherwise.
    """
    w = draw.hypothesis
    w_ref = reference_hypothesis(tup)
    data = draw.dataset.samples
    emp = float(np.mean(losses(tup, w, data)))
    emp_ref = float(np.mean(losses(tup, w_ref, data)))
    if test_set is None:
        pop = population_risk(tup, w, draw.dataset.n)
        pop_ref = population_risk(tup, w_ref, draw.dataset.n)
    else:
        if test_set.n == 0:
            raise ValueError("empty test set")
        if tup.dataset_level:
            # a fresh Z_w has the same law for every index
            pop = pop_ref = float(-np.mean(test_set.samples))
        else:
            pop = float(np.mean(losses(tup, w, test_set.samples)))
            pop_ref = float(np.mean(losses(tup, w_ref, test_set.samples)))
    return RiskRecord(
        population_risk=pop,
        empirical_risk=emp,
        excess_risk=pop - pop_ref,
        empirical_excess=emp - emp_ref,
        gen_error=pop - emp,
    )


def as_float_array(values: Sequence[float] | np.ndarray, name: str = "values") -> np.ndarray:
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.size == 0:
        raise ValueError(f"{name} must not be empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr

"""The six analytic learning problems: samplers, ERM solvers and closed-form reports.

CGF kinds follow one sign convention throughout:

``excess_neg``  log E exp(-eta * r(W, Z))
``excess_pos``  log E exp(+eta * r(W, Z))
``loss_neg``    log E exp(-eta * loss(W, Z))
``loss_pos``    log E exp(+eta * loss(W, Z))

with (W, Z) drawn from the product of the ERM output law and the data law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from .core import (
    Dataset,
    LearningTuple,
    ModelId,
    RngStream,
    design_for,
)

CGF_KINDS = ("excess_neg", "excess_pos", "loss_neg", "loss_pos")
_SQRT2 = math.sqrt(2.0)


class CgfDomainError(ValueError):
    """Raised when eta lies outside the interval where the CGF is finite."""


def q_function(x):
    """Standard normal tail probability Q(x) = P(N(0,1) > x)."""
    out = 0.5 * special.erfc(np.asarray(x, dtype=float) / _SQRT2)
    return float(out) if np.ndim(out) == 0 else out


def binary_entropy(p):
    """Binary entropy in nats with 0 ln 0 = 0."""
    arr = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any((arr < 0) | (arr > 1)):
        raise ValueError("binary_entropy needs probabilities in [0, 1]")
    out = special.entr(arr) + special.entr(1.0 - arr)
    return float(out) if np.ndim(out) == 0 else out


def _normal_pdf(x):
    return np.exp(-0.5 * np.square(x)) / math.sqrt(2 * math.pi)


# ---------------------------------------------------------------- sampling / ERM


def _generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError("rng must be an RngStream or numpy Generator")


def sample_dataset(tup: LearningTuple, n: int, rng) -> Dataset:
    """Draw ``n`` i.i.d. samples from the model's data law."""
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    n = int(n)
    g = _generator(rng)
    p, m = tup.params, tup.model_id
    if m is ModelId.LINEAR_REGRESSION:
        x = design_for(tup, n)
        y = p.w_star[0] * x + p.noise_sd * g.standard_normal(n)
        return Dataset(np.column_stack([x, y]))
    if m is ModelId.LOGISTIC_REGRESSION:
        x = g.standard_normal((n, p.dim))
        prob = special.expit(p.label_sign * (x @ np.asarray(p.w_star)))
        y = (g.random(n) < prob).astype(float)
        return Dataset(np.column_stack([x, y]))
    return Dataset(p.mean + p.noise_sd * g.standard_normal(n))


@dataclass(frozen=True)
class ErmResult:
    w: np.ndarray
    converged: bool = True
    iterations: int = 0


def _logistic_objective(w, x, y, lam):
    t = x @ w
    n = x.shape[0]
    return float(np.mean(np.logaddexp(0.0, t) - y * t) + lam / n * (w @ w))


def _fit_logistic(tup: LearningTuple, x: np.ndarray, y: np.ndarray, max_iter: int = 100, tol: float = 1e-8) -> ErmResult:
    n, d = x.shape
    lam = tup.params.reg_coeff
    w = np.zeros(d)
    f = _logistic_objective(w, x, y, lam)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        s = special.expit(x @ w)
        grad = x.T @ (s - y) / n + 2 * lam / n * w
        if np.linalg.norm(grad) <= tol:
            converged = True
            break
        hess = (x.T * (s * (1 - s))) @ x / n + (2 * lam / n + 1e-12) * np.eye(d)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = grad
        t = 1.0
        while True:
            w_new = w - t * step
            f_new = _logistic_objective(w_new, x, y, lam)
            if f_new <= f - 1e-4 * t * (grad @ step) or t < 1e-10:
                break
            t *= 0.5
        w, f = w_new, f_new
    else:
        s = special.expit(x @ w)
        converged = bool(np.linalg.norm(x.T @ (s - y) / n + 2 * lam / n * w) <= tol)
    radius = tup.params.hypothesis_radius
    norm = float(np.linalg.norm(w))
    if norm >= radius:
        w = w * (radius * (1 - 1e-9) / norm)
    return ErmResult(w, converged, it)


def erm_result(tup: LearningTuple, dataset: Dataset, max_iter: int = 100) -> ErmResult:
    """ERM (or regularized ERM for logistic when ``reg_coeff > 0``) with solver status."""
    s = dataset.samples
    m = tup.model_id
    if m is ModelId.GAUSSIAN_MEAN:
        return ErmResult(np.array([s[:, 0].mean()]))
    if m in (ModelId.DISCRETE_MEAN, ModelId.ZERO_MEAN_DISCRETE):
        return ErmResult(np.array([1.0 if s[:, 0].mean() >= 0 else -1.0]))
    if m is ModelId.LINEAR_REGRESSION:
        x, y = s[:, 0], s[:, 1]
        return ErmResult(np.array([float(x @ y / (x @ x))]))
    if m is ModelId.LOGISTIC_REGRESSION:
        return _fit_logistic(tup, s[:, :-1], s[:, -1], max_iter=max_iter)
    # argmax with ties broken by the smallest index
    return ErmResult(np.array([float(np.argmax(s[:, 0]))]))


def erm(tup: LearningTuple, dataset: Dataset) -> np.ndarray:
    """Hypothesis returned by the model's learning algorithm on ``dataset``."""
    return erm_result(tup, dataset).w


# ---------------------------------------------------------------- closed forms


@dataclass(frozen=True)
class CgfEvaluator:
    """Closed-form log-MGF of one kind together with its open domain in eta."""

    kind: str
    closed_form: Callable[[float], float]
    domain: tuple[float, float]

    def __call__(self, eta: float) -> float:
        lo, hi = self.domain
        if not lo < eta < hi:
            side = "upper" if eta >= hi else "lower"
            bound = hi if eta >= hi else lo
            raise CgfDomainError(
                f"{self.kind} CGF is infinite at eta={eta!r}: {side} domain boundary is {bound!r}"
            )
        if eta == 0:
            return 0.0
        return float(self.closed_form(eta))


@dataclass(frozen=True)
class ClosedFormReport:
    """Expected risk quantities of ERM at sample size ``n``.

    ``mean_r`` and ``second_moment_r`` are moments of r(W, Z) under the product of
    marginals. ``mi_kind`` is ``exact`` or ``upper_bound`` for the per-sample list; the
    exact per-sample value is always in ``mi_exact`` when it can be computed.
    """

    model_id: ModelId
    n: int
    gen_error: float
    excess: float
    empirical_excess: float
    mi_per_sample: tuple[float, ...]
    mi_total: float | None
    subgaussian_proxy_excess: float
    subgaussian_proxy_loss: float
    validity_min_n: int
    mean_r: float = math.nan
    second_moment_r: float = math.nan
    population_loss: float = math.nan
    empirical_loss: float = math.nan
    mi_kind: str = "exact"
    mi_exact: tuple[float, ...] = ()
    proxy_loss_per_sample: tuple[float, ...] = ()
    dataset_level: bool = False
    monte_carlo_only: bool = False
    flags: tuple[str, ...] = field(default_factory=tuple)

    @property
    def proxy_uncertified(self) -> bool:
        return "proxy_uncertified" in self.flags

    @property
    def mi_mean(self) -> float:
        return float(np.mean(self.mi_per_sample)) if self.mi_per_sample else math.nan


def _design_ratios(tup: LearningTuple, n: int) -> np.ndarray:
    x2 = design_for(tup, n) ** 2
    total = x2.sum()
    a = x2 / total
    if n > 1 and np.any(total - x2 <= 0):
        raise ValueError("every leave-one-out design sum must be positive")
    return a


def design_constant(tup: LearningTuple, n: int) -> float:
    """Largest c with sum_{j != i} x_j^2 >= c * sum_j x_j^2 for every i."""
    return float(1.0 - _design_ratios(tup, n).max())


def _example3_threshold(eta: float, var: float) -> float:
    e = eta * var
    return max((4 * e * e + e) * (2 * e * e + e) / (e * e), 4 * e * e + 2 * e)


def validity_min_n(tup: LearningTuple, eta: float | None = None) -> int:
    """Smallest n at which the local sub-Gaussian proxy of r is certified at ``eta``.

    ``eta`` defaults to 1/(4 sigma^2), where the threshold equals 3.
    """
    var = tup.params.noise_sd**2
    eta = 1.0 / (4 * var) if eta is None else eta
    thr = _example3_threshold(eta, var)
    if tup.model_id is ModelId.GAUSSIAN_MEAN:
        return int(math.floor(thr)) + 1
    if tup.model_id is ModelId.LINEAR_REGRESSION:
        # per-sample analogue: sum_j x_j^2 / x_i^2 > threshold for every i
        cap = 1 << 16
        x2 = design_for(tup, cap) ** 2
        ratio = np.cumsum(x2) / np.maximum.accumulate(x2)
        ok = np.nonzero(ratio > thr)[0]
        return int(ok[0]) + 1 if ok.size else cap + 1
    return 2


def _gauss_excess(a: float, var: float, sign: float) -> CgfEvaluator:
    """CGF of r = D^2 - 2 D N with D ~ N(0, var*a), N ~ N(0, var) independent."""
    root = math.sqrt(1.0 + 4.0 / a)
    if sign < 0:
        lo, hi = (1 - root) / (4 * var), (1 + root) / (4 * var)

        def f(eta):
            return -0.5 * math.log1p(-(4 * eta * eta * var * var - 2 * eta * var) * a)

        kind = "excess_neg"
    else:
        lo, hi = (-1 - root) / (4 * var), (-1 + root) / (4 * var)

        def f(eta):
            return -0.5 * math.log1p(-(4 * eta * eta * var * var + 2 * eta * var) * a)

        kind = "excess_pos"
    return CgfEvaluator(kind, f, (lo, hi))


def _scaled_chi2(scale: float, sign: float) -> CgfEvaluator:
    """CGF of sign * scale * chi^2_1."""
    if sign < 0:
        return CgfEvaluator("loss_neg", lambda eta: -0.5 * math.log1p(2 * eta * scale), (-1 / (2 * scale), math.inf))
    return CgfEvaluator("loss_pos", lambda eta: -0.5 * math.log1p(-2 * eta * scale), (-math.inf, 1 / (2 * scale)))


def _mixture(parts: list[CgfEvaluator], weights: np.ndarray, kind: str) -> CgfEvaluator:
    lo = max(p.domain[0] for p in parts)
    hi = min(p.domain[1] for p in parts)
    logw = np.log(weights)

    def f(eta):
        vals = np.array([p.closed_form(eta) for p in parts])
        return float(special.logsumexp(vals + logw))

    return CgfEvaluator(kind, f, (lo, hi))


def _discrete_error_prob(tup: LearningTuple, n: int) -> float:
    p = tup.params
    return q_function(p.mean * math.sqrt(n) / p.noise_sd)


def _discrete_cgf(tup: LearningTuple, n: int, kind: str) -> CgfEvaluator:
    prm = tup.params
    mu, var = prm.mean, prm.noise_sd**2
    p = _discrete_error_prob(tup, n)
    if kind.startswith("excess"):
        # r = 0 when W = 1 and r = 4Z when W = -1
        s = -1.0 if kind == "excess_neg" else 1.0
        lp, lq = math.log(p), math.log1p(-p)

        def f(eta):
            return float(np.logaddexp(lq, lp + 8 * eta * eta * var + s * 4 * eta * mu))

        return CgfEvaluator(kind, f, (-math.inf, math.inf))
    # loss = (W - Z)^2 = var * noncentral chi^2 with noncentrality (mu - W)^2 / var
    t_sign = -1.0 if kind == "loss_neg" else 1.0

    def piece(w):
        m2 = (mu - w) ** 2

        def g(eta):
            t = t_sign * eta
            return -0.5 * math.log1p(-2 * t * var) + m2 * t / (1 - 2 * t * var)

        return g

    plus, minus = piece(1.0), piece(-1.0)
    lp, lq = math.log(p), math.log1p(-p)
    dom = (-1 / (2 * var), math.inf) if kind == "loss_neg" else (-math.inf, 1 / (2 * var))
    return CgfEvaluator(kind, lambda eta: float(np.logaddexp(lq + plus(eta), lp + minus(eta))), dom)


def cgf_evaluator(tup: LearningTuple, n: int, kind: str, index: int | None = None) -> CgfEvaluator:
    """Closed-form CGF of the excess loss or loss under the product of marginals.

    For linear regression ``index`` selects sample i; without it the CGF of the
    uniform mixture over samples is returned.
    """
    if kind not in CGF_KINDS:
        raise ValueError(f"unknown CGF kind {kind!r}; expected one of {CGF_KINDS}")
    if n < 1:
        raise ValueError("n must be >= 1")
    prm, m = tup.params, tup.model_id
    var = prm.noise_sd**2
    sign = -1.0 if kind.endswith("neg") else 1.0
    if m is ModelId.GAUSSIAN_MEAN:
        if kind.startswith("excess"):
            return _gauss_excess(1.0 / n, var, sign)
        return _scaled_chi2((n + 1) * var / n, sign)
    if m in (ModelId.DISCRETE_MEAN, ModelId.ZERO_MEAN_DISCRETE):
        return _discrete_cgf(tup, n, kind)
    if m is ModelId.LINEAR_REGRESSION:
        a = _design_ratios(tup, n)
        if index is not None:
            ai = float(a[index])
            return _gauss_excess(ai, var, sign) if kind.startswith("excess") else _scaled_chi2(var * (1 + ai), sign)
        uniq, counts = np.unique(a, return_counts=True)
        parts = [
            _gauss_excess(float(ai), var, sign) if kind.startswith("excess") else _scaled_chi2(var * (1 + ai), sign)
            for ai in uniq
        ]
        return _mixture(parts, counts / counts.sum(), kind)
    if m is ModelId.HYPOTHESIS_SELECTION:
        if kind.startswith("excess"):
            # r = Z_{w*} - Z_W: zero when W = w*, N(0, 2 var) otherwise
            lq = math.log(1.0 / n)
            lr = math.log1p(-1.0 / n) if n > 1 else -math.inf
            return CgfEvaluator(kind, lambda eta: float(np.logaddexp(lq, lr + var * eta * eta)), (-math.inf, math.inf))
        # loss = -Z_W ~ N(-mu, var)
        s = 1.0 if kind == "loss_neg" else -1.0
        return CgfEvaluator(kind, lambda eta: s * eta * prm.mean + 0.5 * var * eta * eta, (-math.inf, math.inf))
    raise ValueError("logistic_regression has no closed-form CGF; use an empirical CGF from samples")


def cgf(tup: LearningTuple, n: int, kind: str, eta: float) -> float:
    """Exact log-MGF of the chosen kind at ``eta``; raises CgfDomainError outside its domain."""
    return cgf_evaluator(tup, n, kind)(float(eta))


def _expected_max_normal(n: int) -> float:
    """E[max of n i.i.d. standard normals]."""
    if n == 1:
        return 0.0

    def dens(x):
        return x * math.exp(math.log(n) - 0.5 * x * x - 0.5 * math.log(2 * math.pi) + (n - 1) * special.log_ndtr(x))

    hi = 10.0 + math.sqrt(2 * math.log(n))
    val, _ = integrate.quad(dens, -10.0, hi, points=[math.sqrt(2 * math.log(n))], limit=200, epsabs=1e-13, epsrel=1e-12)
    return val


def _discrete_mi_exact(tup: LearningTuple, n: int) -> float:
    """I(W; Z_i) for the sign-rule ERM by one-dimensional quadrature."""
    mu, sd = tup.params.mean, tup.params.noise_sd
    p = _discrete_error_prob(tup, n)
    s = sd * math.sqrt(n - 1)

    def integrand(u):
        z = mu + sd * u
        return _normal_pdf(u) * binary_entropy(q_function((z + (n - 1) * mu) / s))

    cond, _ = integrate.quad(integrand, -40, 40, points=[0.0, -n * mu / sd], limit=400, epsabs=1e-15, epsrel=1e-12)
    return max(binary_entropy(p) - cond, 0.0)


def _discrete_mi_upper(tup: LearningTuple, n: int) -> float:
    """Jensen-type upper bound h2(p) - h2(Q(E[Z | Z > -(n-1)mu] / s + (n-1)mu / s))."""
    mu, sd = tup.params.mean, tup.params.noise_sd
    p = _discrete_error_prob(tup, n)
    a = -n * mu / sd
    cond_mean = mu + sd * _normal_pdf(a) / q_function(a)
    s = sd * math.sqrt(n - 1)
    return max(binary_entropy(p) - binary_entropy(q_function((cond_mean + (n - 1) * mu) / s)), 0.0)


def _lower_tail_proxy(ev: CgfEvaluator, mean: float, lam_max: float = 50.0) -> float:
    """Smallest sigma with log E exp(-lam (X - E X)) <= sigma^2 lam^2 / 2 for 0 < lam < lam_max.

    ``ev`` is the ``*_neg`` CGF of X and ``mean`` is E X.
    """
    lam_hi = min(lam_max, ev.domain[1] * (1 - 1e-9))
    lams = np.geomspace(1e-4, lam_hi, 4000)
    vals = np.array([2 * (ev.closed_form(lam) + lam * mean) / (lam * lam) for lam in lams])
    return float(math.sqrt(max(vals.max(), 0.0)))


def closed_form(tup: LearningTuple, n: int) -> ClosedFormReport:
    """Every exact expected quantity for ERM at sample size ``n`` (n >= 2)."""
    if int(n) != n or n < 2:
        raise ValueError("closed forms need n >= 2")
    n = int(n)
    prm, m = tup.params, tup.model_id
    sd = prm.noise_sd
    var = sd * sd
    flags: list[str] = []
    if m is ModelId.LOGISTIC_REGRESSION:
        nan = math.nan
        return ClosedFormReport(m, n, nan, nan, nan, (), None, nan, nan, 1, monte_carlo_only=True, flags=("monte_carlo_only",))

    if m is ModelId.GAUSSIAN_MEAN:
        mi = 0.5 * math.log(n / (n - 1))
        var_w = (n + 1) * var / n
        vmin = validity_min_n(tup)
        if n < vmin:
            flags.append("proxy_uncertified")
        return ClosedFormReport(
            m, n,
            gen_error=2 * var / n,
            excess=var / n,
            empirical_excess=-var / n,
            mi_per_sample=(mi,) * n,
            mi_total=None,
            subgaussian_proxy_excess=math.sqrt(8 * var * var / n),
            subgaussian_proxy_loss=_SQRT2 * var_w,
            validity_min_n=vmin,
            mean_r=var / n,
            second_moment_r=3 * var * var / n**2 + 4 * var * var / n,
            population_loss=var_w,
            empirical_loss=(n - 1) * var / n,
            mi_exact=(mi,) * n,
            proxy_loss_per_sample=(_SQRT2 * var_w,) * n,
            flags=tuple(flags),
        )

    if m in (ModelId.DISCRETE_MEAN, ModelId.ZERO_MEAN_DISCRETE):
        mu = prm.mean
        p = _discrete_error_prob(tup, n)
        s = sd / math.sqrt(n)
        gen = 4 * s * float(_normal_pdf(mu / s))
        excess = 4 * mu * p
        pop = 1 + mu * mu + var - 2 * mu * (1 - 2 * p)
        exact = _discrete_mi_exact(tup, n)
        if m is ModelId.DISCRETE_MEAN:
            mi, kind = _discrete_mi_upper(tup, n), "upper_bound"
        else:
            mi, kind = exact, "exact"
        ex_neg = _discrete_cgf(tup, n, "excess_neg")
        loss_neg = _discrete_cgf(tup, n, "loss_neg")
        proxy_loss = _lower_tail_proxy(loss_neg, pop)
        return ClosedFormReport(
            m, n,
            gen_error=gen,
            excess=excess,
            empirical_excess=excess - gen,
            mi_per_sample=(mi,) * n,
            mi_total=binary_entropy(p),
            subgaussian_proxy_excess=_lower_tail_proxy(ex_neg, excess),
            subgaussian_proxy_loss=proxy_loss,
            validity_min_n=2,
            mean_r=excess,
            second_moment_r=16 * p * (mu * mu + var),
            population_loss=pop,
            empirical_loss=pop - gen,
            mi_kind=kind,
            mi_exact=(exact,) * n,
            proxy_loss_per_sample=(proxy_loss,) * n,
        )

    if m is ModelId.LINEAR_REGRESSION:
        a = _design_ratios(tup, n)
        mi = 0.5 * np.log(1.0 / (1.0 - a))
        vmin = validity_min_n(tup)
        if n < vmin:
            flags.append("proxy_uncertified")
        loss_proxy = _SQRT2 * var * (1 + a)
        return ClosedFormReport(
            m, n,
            gen_error=2 * var / n,
            excess=var / n,
            empirical_excess=-var / n,
            mi_per_sample=tuple(float(v) for v in mi),
            mi_total=None,
            subgaussian_proxy_excess=float(math.sqrt(8 * var * var * a.max())),
            subgaussian_proxy_loss=float(loss_proxy.max()),
            validity_min_n=vmin,
            mean_r=var / n,
            second_moment_r=float(np.mean(3 * var * var * a * a + 4 * var * var * a)),
            population_loss=var * (1 + 1 / n),
            empirical_loss=var * (1 - 1 / n),
            mi_exact=tuple(float(v) for v in mi),
            proxy_loss_per_sample=tuple(float(v) for v in loss_proxy),
            flags=tuple(flags),
        )

    # hypothesis selection: the loss acts on the whole dataset
    e_max = _expected_max_normal(n)
    ex_neg = cgf_evaluator(tup, n, "excess_neg")
    return ClosedFormReport(
        m, n,
        gen_error=sd * e_max,
        excess=0.0,
        empirical_excess=-sd * e_max,
        mi_per_sample=(),
        mi_total=math.log(n),
        subgaussian_proxy_excess=_lower_tail_proxy(ex_neg, 0.0),
        subgaussian_proxy_loss=sd,
        validity_min_n=2,
        mean_r=0.0,
        second_moment_r=2 * var * (n - 1) / n,
        population_loss=-prm.mean,
        empirical_loss=-prm.mean - sd * e_max,
        mi_kind="dataset_level",
        dataset_level=True,
        flags=("dataset_level",),
    )

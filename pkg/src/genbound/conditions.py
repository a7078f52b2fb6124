"""Fast-rate condition checks and the mappings between conditions.

A random variable X with 0 < E X satisfies the (eta, c)-central condition when
log E exp(-eta X) <= -c eta E X. Checks run either on exact CGFs from the model suite
or on samples of the excess loss, in which case a bootstrap interval decides.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, special, stats

from .core import LearningTuple, ModelId, RngStream
from .model_suite import cgf_evaluator, closed_form

N_BOOTSTRAP = 1000
_Z95 = 0.95


@dataclass(frozen=True)
class ConditionReport:
    condition_id: str
    holds: bool
    max_c: float | None
    eta: float
    margin: float
    source: str
    sample_count: int | None = None
    ci_halfwidth: float | None = None
    reason: str | None = None
    c: float | None = None
    cgf_value: float | None = None
    mean_r: float | None = None
    epsilon: float | None = None

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class BernsteinParams:
    beta: float
    B_const: float
    lower_bound_b: float

    def __post_init__(self) -> None:
        if not 0 <= self.beta <= 1:
            raise ValueError("beta must lie in [0, 1]")
        if self.B_const < 1:
            raise ValueError("B must be >= 1")
        if self.lower_bound_b <= 0:
            raise ValueError("b must be > 0")


@dataclass(frozen=True)
class WitnessParams:
    u: float
    c_w: float

    def __post_init__(self) -> None:
        if self.u <= 0:
            raise ValueError("u must be > 0")
        if not 0 < self.c_w <= 1:
            raise ValueError("c_w must lie in (0, 1]")


# ---------------------------------------------------------------- empirical CGF


def _values(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("need at least one value")
    if not np.all(np.isfinite(arr)):
        raise ValueError("values must be finite")
    return arr


def empirical_cgf(values, eta: float) -> float:
    """log of the sample mean of exp(-eta * value), stabilized by max subtraction."""
    arr = _values(values).reshape(-1)
    if eta == 0:
        return 0.0
    a = -eta * arr
    m = a.max()
    return float(m + math.log(np.mean(np.exp(a - m))))


_MAX_UNITS = 20000


def _unit_stats(arr: np.ndarray, eta: float):
    """Per-unit log-sum of exp(-eta v), sum of v and unit sizes.

    Rows of a 2-D array are units (clusters sharing a hypothesis). A 1-D array of
    i.i.d. draws is cut into at most ``_MAX_UNITS`` contiguous blocks, which are again
    i.i.d., so resampling blocks keeps the bootstrap valid while bounding its cost.
    """
    a = -eta * arr
    shift = float(a.max())
    e = np.exp(a - shift)
    if arr.ndim == 2:
        return np.log(e.sum(axis=1)) + shift, arr.sum(axis=1), np.full(arr.shape[0], float(arr.shape[1]))
    edges = np.linspace(0, arr.size, min(arr.size, _MAX_UNITS) + 1).astype(np.int64)
    starts = edges[:-1]
    return np.log(np.add.reduceat(e, starts)) + shift, np.add.reduceat(arr, starts), np.diff(edges).astype(float)


def _bootstrap_units(lse: np.ndarray, sums: np.ndarray, sizes: np.ndarray, rng: RngStream, n_boot: int):
    """Bootstrap replicates of (empirical CGF, mean) by resampling units."""
    units = lse.size
    shift = float(lse.max())
    s_exp = np.exp(lse - shift)
    g = rng.generator()
    chunk = max(1, int(4e6 // units))
    cg, mn = [], []
    done = 0
    while done < n_boot:
        b = min(chunk, n_boot - done)
        idx = g.integers(0, units, size=(b, units))
        tot = sizes[idx].sum(axis=1)
        cg.append(shift + np.log(s_exp[idx].sum(axis=1) / tot))
        mn.append(sums[idx].sum(axis=1) / tot)
        done += b
    return np.concatenate(cg), np.concatenate(mn)


def _bootstrap(arr: np.ndarray, eta: float, rng: RngStream, n_boot: int):
    return _bootstrap_units(*_unit_stats(arr, eta), rng, n_boot)


def _halfwidth(reps: np.ndarray) -> float:
    lo, hi = np.quantile(reps, [(1 - _Z95) / 2, (1 + _Z95) / 2])
    return float((hi - lo) / 2)


def cgf_ci_halfwidth(values, eta: float, rng: RngStream, n_boot: int = N_BOOTSTRAP) -> float:
    """95% bootstrap half-width of the empirical CGF."""
    cg, _ = _bootstrap(_values(values), eta, rng, n_boot)
    return _halfwidth(cg)


# ---------------------------------------------------------------- (eta, c)-central


def _clamp01(x: float) -> float:
    return min(max(x, 0.0), 1.0)


def eta_c_check(cgf_value: float, mean_r: float, eta: float, c: float | None = None, source: str = "closed_form") -> ConditionReport:
    """Verdict of the (eta, c)-central condition from an exact CGF value and mean.

    Without ``c`` the report evaluates the margin at the largest feasible constant
    ``max_c`` and the condition holds when that constant is positive.
    """
    if not eta > 0:
        raise ValueError("eta must be > 0")
    if mean_r <= 0:
        return ConditionReport(
            "eta_c_central", False, None, eta, -cgf_value, source,
            reason="nonpositive_mean", c=c, cgf_value=cgf_value, mean_r=mean_r,
        )
    max_c = _clamp01(-cgf_value / (eta * mean_r))
    if c is None:
        margin = -cgf_value - max_c * eta * mean_r
        holds = max_c > 0
    else:
        if not 0 < c <= 1:
            raise ValueError("c must lie in (0, 1]")
        margin = -cgf_value - c * eta * mean_r
        holds = margin >= 0
    return ConditionReport(
        "eta_c_central", holds, max_c, eta, margin, source,
        reason=None if holds else "cgf_too_large", c=c, cgf_value=cgf_value, mean_r=mean_r,
    )


def eta_c_check_samples(values, eta: float, rng: RngStream, c: float | None = None, n_boot: int = N_BOOTSTRAP) -> ConditionReport:
    """Empirical (eta, c)-central check with a 95% bootstrap interval.

    ``values`` are draws of r(W, Z) under the product of marginals. A 2-D array is
    treated as clusters (rows share one hypothesis) and resampled row-wise. The
    condition holds only when the interval-adjusted margin is non-negative.
    """
    arr = _values(values)
    return eta_c_check_units(*_unit_stats(arr, eta), eta, rng, c=c, n_boot=n_boot)


def eta_c_check_units(lse, sums, sizes, eta: float, rng: RngStream, c: float | None = None, n_boot: int = N_BOOTSTRAP) -> ConditionReport:
    """Empirical check from per-unit statistics.

    ``lse[u]`` is log sum_j exp(-eta r_uj), ``sums[u]`` is sum_j r_uj and ``sizes[u]``
    the number of draws in unit u. Units are resampled as wholes.
    """
    lse = np.asarray(lse, dtype=float)
    sums = np.asarray(sums, dtype=float)
    sizes = np.asarray(sizes, dtype=float)
    total = sizes.sum()
    shift = float(lse.max())
    cg = float(shift + math.log(np.exp(lse - shift).sum() / total))
    mean = float(sums.sum() / total)
    boot_cg, boot_mean = _bootstrap_units(lse, sums, sizes, rng, n_boot)
    count = int(total)
    if mean <= 0:
        return ConditionReport(
            "eta_c_central", False, None, eta, -cg, "empirical", count,
            _halfwidth(boot_cg), "nonpositive_mean", c, cg, mean,
        )
    max_c = _clamp01(-cg / (eta * mean))
    if c is None:
        with np.errstate(divide="ignore", invalid="ignore"):
            boot_c = np.clip(-boot_cg / (eta * boot_mean), 0.0, 1.0)
        boot_c = np.where(boot_mean > 0, boot_c, 0.0)
        hw = _halfwidth(boot_c)
        margin = (max_c - hw) * eta * mean
        holds = max_c - hw > 0
    else:
        boot_margin = -boot_cg - c * eta * boot_mean
        hw = _halfwidth(boot_margin)
        margin = -cg - c * eta * mean - hw
        holds = margin >= 0
    return ConditionReport(
        "eta_c_central", bool(holds), max_c, eta, float(margin), "empirical", count, hw,
        None if holds else "not_significant", c, cg, mean,
    )


def _check_grid(eta_grid) -> list[float]:
    grid = [float(e) for e in eta_grid]
    if not grid or any(e <= 0 or not math.isfinite(e) for e in grid):
        raise ValueError("eta grid must be non-empty and strictly positive")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("eta grid must be strictly ascending")
    return grid


def eta_c_scan(source, eta_grid: Sequence[float], n: int | None = None, rng: RngStream | None = None, n_boot: int = N_BOOTSTRAP) -> list[ConditionReport]:
    """max_c over an eta grid from a closed-form model (needs ``n``) or from samples of r."""
    grid = _check_grid(eta_grid)
    if isinstance(source, LearningTuple):
        if n is None:
            raise ValueError("closed-form scans need n")
        ev = cgf_evaluator(source, n, "excess_neg")
        mean = closed_form(source, n).mean_r
        return [eta_c_check(ev(e), mean, e) for e in grid]
    rng = rng if rng is not None else RngStream(0)
    return [eta_c_check_samples(source, e, rng.child(i), n_boot=n_boot) for i, e in enumerate(grid)]


# ---------------------------------------------------------------- Bernstein


def kappa(x: float) -> float:
    """(e^x - x - 1) / x^2, continuous at 0."""
    if abs(x) < 1e-5:
        return 0.5 + x / 6 + x * x / 24
    return (math.expm1(x) - x) / (x * x)


def bernstein_check(source, beta: float, B: float | None = None, n: int | None = None) -> tuple[float | None, ConditionReport]:
    """Smallest Bernstein constant B_min = E[r^2] / (E r)^beta and its verdict.

    ``source`` is a model (closed-form moments at ``n``), a pair (E r, E r^2), or
    samples of r.
    """
    if not 0 <= beta <= 1:
        raise ValueError("beta must lie in [0, 1]")
    if isinstance(source, LearningTuple):
        if n is None:
            raise ValueError("closed-form moments need n")
        rep = closed_form(source, n)
        mean, second, src, count = rep.mean_r, rep.second_moment_r, "closed_form", None
    elif isinstance(source, tuple) and len(source) == 2:
        mean, second, src, count = float(source[0]), float(source[1]), "closed_form", None
    else:
        arr = _values(source).reshape(-1)
        mean, second, src, count = float(arr.mean()), float(np.mean(arr * arr)), "empirical", int(arr.size)
    if beta == 0:
        b_min = second
    elif mean <= 0:
        return None, ConditionReport(
            "bernstein", False, None, math.nan, -math.inf, src, count,
            reason="undefined_nonpositive_mean", mean_r=mean,
        )
    else:
        b_min = second / mean**beta
    ok = math.isfinite(b_min) if B is None else b_min <= B
    margin = (math.inf if math.isfinite(b_min) else -math.inf) if B is None else B - b_min
    return b_min, ConditionReport(
        "bernstein", bool(ok), None, math.nan, margin, src, count,
        reason=None if ok else "second_moment_too_large", c=None, mean_r=mean,
    )


def bernstein_to_eta_c(B: float, lower_bound_b: float) -> tuple[float, float]:
    """Central pair implied by the beta = 1 Bernstein condition with r >= -b."""
    BernsteinParams(1.0, B, lower_bound_b)
    return min(1.0 / lower_bound_b, 1.0 / (2.0 * B * (math.e - 2.0))), 0.5


# ---------------------------------------------------------------- witness


def central_witness_to_eta_c(eta: float, u: float, c_w: float, eta_prime: float) -> tuple[float, float]:
    """(eta', c_w (1 - eta'/eta) / (eta' u + 1)) from eta-central plus (u, c_w)-witness."""
    WitnessParams(u, c_w)
    if not 0 < eta_prime < eta:
        raise ValueError(f"eta_prime must lie in (0, eta={eta}), got {eta_prime}")
    return eta_prime, c_w * (1 - eta_prime / eta) / (eta_prime * u + 1)


def witness_constant(values, u: float) -> float | None:
    """Empirical E[r 1{r <= u}] / E[r]; a diagnostic with no pass/fail meaning."""
    arr = _values(values).reshape(-1)
    mean = arr.mean()
    if mean <= 0:
        return None
    return float(np.mean(np.where(arr <= u, arr, 0.0)) / mean)


def gaussian_witness_constant(tup: LearningTuple, n: int, u: float) -> float:
    """Exact witness ratio for the Gaussian mean model.

    Given D = W - mu, r = D^2 - 2 D N is normal with mean D^2 and variance 4 D^2 s^2,
    so the truncated mean has a closed form; the outer expectation over D is by quadrature.
    """
    if tup.model_id is not ModelId.GAUSSIAN_MEAN:
        raise ValueError("closed-form witness ratio is only available for gaussian_mean")
    s = tup.params.noise_sd
    sd_d = s / math.sqrt(n)

    def inner(x):
        d = sd_d * x
        if d == 0:
            return 0.0
        m, sdev = d * d, 2 * abs(d) * s
        t = (u - m) / sdev
        return stats.norm.pdf(x) * (m * special.ndtr(t) - sdev * stats.norm.pdf(t))

    val, _ = integrate.quad(inner, -12, 12, points=[0.0], limit=400, epsabs=1e-14, epsrel=1e-11)
    return float(val / (s * s / n))


# ---------------------------------------------------------------- sub-exponential / sub-Gamma


def subexp_to_eta_c(nu2: float, alpha: float, mean_r: float, variant: str = "corrected") -> tuple[float, float]:
    """Central pair with c = 1/2 implied by a (nu^2, alpha)-sub-exponential excess loss.

    The default ``corrected`` variant returns eta = min(1/alpha, E r / nu^2), which is
    what the CGF inequality actually supports. ``as_printed`` returns
    min(1/alpha, nu^2 / E r), which can violate the condition.
    """
    if mean_r <= 0:
        raise ValueError("mean_r must be > 0: the condition is undefined for a non-positive mean")
    if nu2 <= 0 or alpha < 0:
        raise ValueError("need nu2 > 0 and alpha >= 0")
    cap = math.inf if alpha == 0 else 1.0 / alpha
    if variant == "corrected":
        return min(cap, mean_r / nu2), 0.5
    if variant == "as_printed":
        return min(cap, nu2 / mean_r), 0.5
    raise ValueError("variant must be 'corrected' or 'as_printed'")


def subgamma_to_eta_c(nu2: float, alpha: float, mean_r: float) -> tuple[float, float]:
    """Central pair (E r / (nu^2 + alpha E r), 1/2) implied by a sub-Gamma excess loss."""
    if mean_r <= 0:
        raise ValueError("mean_r must be > 0: the condition is undefined for a non-positive mean")
    if nu2 < 0 or alpha < 0 or nu2 + alpha == 0:
        raise ValueError("need nu2 >= 0, alpha >= 0, not both zero")
    return mean_r / (nu2 + alpha * mean_r), 0.5


def _centered_cgf(tup: LearningTuple, n: int):
    neg = cgf_evaluator(tup, n, "excess_neg")
    pos = cgf_evaluator(tup, n, "excess_pos")
    mean = closed_form(tup, n).mean_r

    def f(lam: float) -> float:
        if lam == 0:
            return 0.0
        return (pos(lam) if lam > 0 else neg(-lam)) - lam * mean

    lam_max = min(pos.domain[1], neg.domain[1])
    return f, lam_max, mean


def fit_subexp_params(tup: LearningTuple, n: int, alpha: float, points: int = 2000) -> float:
    """Smallest nu^2 with centered CGF(lam) <= nu^2 lam^2 / 2 for |lam| < 1/alpha (closed form)."""
    f, lam_max, _ = _centered_cgf(tup, n)
    edge = min(1.0 / alpha, lam_max * (1 - 1e-6))
    lams = np.concatenate([-np.geomspace(1e-6, edge, points), np.geomspace(1e-6, edge, points)])
    return float(max(2 * f(x) / (x * x) for x in lams))


def fit_subgamma_nu2(tup: LearningTuple, n: int, alpha: float, points: int = 2000) -> float:
    """Smallest nu^2 with centered CGF(lam) <= nu^2 lam^2 / (2 (1 - alpha|lam|)) for |lam| < 1/alpha."""
    f, lam_max, _ = _centered_cgf(tup, n)
    edge = min(1.0 / alpha, lam_max * (1 - 1e-6)) if alpha > 0 else lam_max * (1 - 1e-6)
    lams = np.concatenate([-np.geomspace(1e-6, edge, points), np.geomspace(1e-6, edge, points)])
    return float(max(2 * (1 - alpha * abs(x)) * f(x) / (x * x) for x in lams))


# ---------------------------------------------------------------- (v, c)-central


def v_rate(epsilon: float, beta: float) -> float:
    """v(eps) = eps^(1 - beta) with 0^0 = 1."""
    return 1.0 if beta == 1 else epsilon ** (1.0 - beta)


def v_central_check(source, beta: float, epsilon_grid: Sequence[float], n: int | None = None) -> list[ConditionReport]:
    """Check the (v, c)-central condition with v(eps) = eps^(1 - beta) on an eps grid.

    At each eps the test is CGF(v) <= -c v E r + v eps and the report carries the
    largest feasible c. ``source`` is a closed-form model (needs ``n``) or samples of r.
    """
    if not 0 <= beta <= 1:
        raise ValueError("beta must lie in [0, 1]")
    eps_list = [float(e) for e in epsilon_grid]
    if any(e < 0 or not math.isfinite(e) for e in eps_list):
        raise ValueError("epsilon values must be finite and >= 0")
    if isinstance(source, LearningTuple):
        if n is None:
            raise ValueError("closed-form checks need n")
        ev = cgf_evaluator(source, n, "excess_neg")
        mean = closed_form(source, n).mean_r
        cgf_at, src = ev, "closed_form"
    else:
        arr = _values(source)
        mean = float(arr.mean())
        cgf_at, src = (lambda e: empirical_cgf(arr, e)), "empirical"
    out = []
    for eps in eps_list:
        eta = v_rate(eps, beta)
        if eta <= 0:
            raise ValueError("v(eps) must be positive; use eps > 0 when beta < 1")
        cg = float(cgf_at(eta))
        slack = eta * eps
        if mean <= 0:
            out.append(ConditionReport("v_central", False, None, eta, slack - cg, src, reason="nonpositive_mean",
                                       cgf_value=cg, mean_r=mean, epsilon=eps))
            continue
        max_c = _clamp01((slack - cg) / (eta * mean))
        margin = slack - cg - max_c * eta * mean
        out.append(ConditionReport("v_central", max_c > 0, max_c, eta, margin, src,
                                   reason=None if max_c > 0 else "cgf_too_large",
                                   cgf_value=cg, mean_r=mean, epsilon=eps))
    return out

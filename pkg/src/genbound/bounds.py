"""Generalization-error and excess-risk bounds evaluated from explicit inputs.

Every function takes the per-sample mutual information list ``mi`` (nats, one entry
per training sample) and expected empirical quantities as plain numbers. Nothing
here estimates anything.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import ModelId

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class InvalidBound(ValueError):
    """The bound cannot be evaluated for these inputs."""


@dataclass(frozen=True)
class BoundParams:
    """Constants that parameterize the bounds; ``None`` marks an unused field."""

    eta: float | None = None
    c: float | None = None
    sigma: float | None = None
    nu2: float | None = None
    alpha: float | None = None
    beta: float | None = None
    a_eta: float | None = None
    epsilon: float | None = None
    reg_coeff: float | None = None
    reg_bound: float | None = None

    def __post_init__(self) -> None:
        for name, val in self.__dict__.items():
            if val is not None and not math.isfinite(val):
                raise ValueError(f"{name} must be finite")
        if self.eta is not None and self.eta <= 0:
            raise ValueError("eta must be > 0")
        if self.c is not None and not 0 < self.c <= 1:
            raise ValueError(f"c must lie in (0, 1], got {self.c}")
        for name in ("sigma", "nu2", "alpha", "epsilon", "reg_coeff"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.beta is not None and not 0 <= self.beta <= 1:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if self.a_eta is not None and not 0 < self.a_eta < 1:
            raise ValueError("a_eta must lie in (0, 1)")

    def as_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass(frozen=True)
class BoundReport:
    """Value of one bound; ``excess_value`` holds the excess-risk variant when it exists."""

    value: float
    kind: str
    inputs_digest: dict
    valid: bool = True
    reason: str | None = None
    excess_value: float | None = None
    notes: tuple[str, ...] = ()
    extra: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.valid and not math.isfinite(self.value):
            raise ValueError(f"{self.kind}: a valid bound must be finite")


def _mi_array(mi) -> np.ndarray:
    arr = np.asarray(mi, dtype=float).reshape(-1)
    if arr.size == 0:
        raise ValueError("the mutual information list must not be empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError("mutual information values must be finite")
    if np.any(arr < -1e-12):
        raise ValueError("mutual information values must be >= 0")
    return np.maximum(arr, 0.0)


def _digest(mi: np.ndarray, params: BoundParams, **empirical) -> dict:
    h = hashlib.sha256(np.ascontiguousarray(mi, dtype="<f8").tobytes()).hexdigest()[:16]
    out = {"n": int(mi.size), "mi_sum": float(mi.sum()), "mi_sha256": h, "params": params.as_dict()}
    out.update({k: float(v) for k, v in empirical.items() if v is not None})
    return out


def _positive_emp_note(emp: float) -> tuple[str, ...]:
    if emp > 0:
        return ("positive empirical term: the algorithm is not an empirical risk minimizer here",)
    return ()


# ---------------------------------------------------------------- psi inverse


def _golden_min(h: Callable[[float], float], a: float, b: float, tol: float, max_iter: int) -> float:
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    hc, hd = h(c), h(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * max(1.0, abs(a) + abs(b)):
            break
        if hc <= hd:
            b, d, hd = d, c, hc
            c = b - _GOLDEN * (b - a)
            hc = h(c)
        else:
            a, c, hc = c, d, hd
            d = a + _GOLDEN * (b - a)
            hd = h(d)
    return 0.5 * (a + b)


def psi_inverse(psi, x: float, b: float | None = None, return_lambda: bool = False):
    """Generalized inverse inf_{0 < lam < b} (x + psi(lam)) / lam.

    ``psi`` is a convex upper bound on a CGF with psi(0) = 0. When ``b`` is omitted it
    is read from ``psi.domain[1]`` if present, otherwise taken as infinite. The search
    is a golden-section minimization in log(lam); the objective is quasi-convex there
    because psi is convex.
    """
    if x < 0 or not math.isfinite(x):
        raise ValueError("x must be a finite, non-negative number")
    if b is None:
        b = float(psi.domain[1]) if hasattr(psi, "domain") else math.inf
    if not b > 0:
        raise ValueError("psi has an empty domain (0, b)")

    def h_log(t: float) -> float:
        lam = math.exp(t)
        return (x + float(psi(lam))) / lam

    if math.isfinite(b):
        hi = b * (1 - 1e-12)
    else:
        hi = 1.0
        prev = h_log(0.0)
        for _ in range(200):
            nxt = h_log(math.log(hi * 2))
            if nxt >= prev:
                break
            hi *= 2
            prev = nxt
        else:
            raise InvalidBound("objective keeps decreasing as lam grows: unbounded below")
        hi *= 4
    lo = hi * 1e-14
    grid = np.linspace(math.log(lo), math.log(hi), 257)
    vals = np.array([h_log(t) for t in grid])
    if not np.all(np.isfinite(vals)):
        bad = grid[~np.isfinite(vals)]
        raise InvalidBound(f"psi is not finite on its declared domain near lam={math.exp(bad[0]):.3g}")
    i = int(np.argmin(vals))
    a, c = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    t_best = _golden_min(h_log, a, c, tol=1e-12, max_iter=200)
    val = h_log(t_best)
    if vals[i] < val:
        t_best, val = grid[i], vals[i]
    if not math.isfinite(b) and i == grid.size - 1:
        raise InvalidBound("objective minimum not attained on the searched range")
    return (val, math.exp(t_best)) if return_lambda else val


# ---------------------------------------------------------------- slow-rate bounds


def mi_sqrt_bound(sigma, mi) -> BoundReport:
    """(1/n) sum_i sqrt(2 sigma_i^2 I_i) for a sigma-sub-Gaussian loss or excess loss.

    ``sigma`` may be a scalar or one proxy per sample.
    """
    arr = _mi_array(mi)
    sig = np.broadcast_to(np.asarray(sigma, dtype=float), arr.shape)
    if np.any(sig < 0) or not np.all(np.isfinite(sig)):
        raise ValueError("sigma must be finite and >= 0")
    value = float(np.mean(np.sqrt(2 * sig * sig * arr)))
    p = BoundParams(sigma=float(np.max(sig)))
    return BoundReport(value, "mi_sqrt", _digest(arr, p))


def subexp_loss_bound(nu2: float, alpha: float, mi) -> BoundReport:
    """Per-sample bound for a (nu^2, alpha)-sub-exponential loss.

    Samples with I_i <= nu^2 / (2 alpha^2) contribute sqrt(2 nu^2 I_i); the rest
    contribute nu^2 / (2 alpha) + alpha I_i. The result is the average over samples.
    """
    arr = _mi_array(mi)
    p = BoundParams(nu2=nu2, alpha=alpha)
    if nu2 <= 0:
        raise ValueError("nu2 must be > 0")
    small = np.sqrt(2 * nu2 * arr)
    if alpha == 0:
        terms = small
        n_large = 0
    else:
        large = arr > nu2 / (2 * alpha * alpha)
        terms = np.where(large, nu2 / (2 * alpha) + alpha * arr, small)
        n_large = int(large.sum())
    return BoundReport(float(terms.mean()), "subexp_loss", _digest(arr, p), extra={"samples_in_linear_branch": n_large})


def subgamma_loss_bound(nu2: float, alpha: float, mi) -> BoundReport:
    """(1/n) sum_i [sqrt(2 nu^2 I_i) + alpha I_i] for a (nu^2, alpha)-sub-Gamma loss."""
    arr = _mi_array(mi)
    p = BoundParams(nu2=nu2, alpha=alpha)
    return BoundReport(float(np.mean(np.sqrt(2 * nu2 * arr) + alpha * arr)), "subgamma_loss", _digest(arr, p))


# ---------------------------------------------------------------- fast-rate bounds


def fast_subgaussian_bound(sigma, eta: float, mean_excess: float, mi, empirical_excess: float, a_eta: float | None = None) -> BoundReport:
    """Bound under a sub-Gaussian excess loss with positive mean.

    a_eta = 1 - eta sigma^2 / (2 mean_excess); the generalization variant is
    ((1 - a)/a) E[emp excess] + sum_i I_i / (n eta a) and the excess variant swaps the
    first coefficient for 1/a. Passing ``a_eta`` overrides the computed value.
    """
    arr = _mi_array(mi)
    if eta <= 0:
        raise ValueError("eta must be > 0")
    digest = _digest(arr, BoundParams(eta=eta), empirical_excess=empirical_excess, mean_excess=mean_excess)
    if a_eta is None:
        if mean_excess <= 0 or sigma is None:
            return BoundReport(math.nan, "fast_subgaussian", digest, valid=False, reason="mean_excess must be > 0")
        hi = 2 * mean_excess / (sigma * sigma) if sigma > 0 else math.inf
        if not 0 < eta < hi:
            return BoundReport(
                math.nan, "fast_subgaussian", digest, valid=False,
                reason=f"eta={eta:g} outside the admissible interval (0, {hi:.9g})",
            )
        a_eta = 1 - eta * sigma * sigma / (2 * mean_excess)
    elif not 0 < a_eta < 1:
        raise ValueError("a_eta must lie in (0, 1)")
    mi_term = float(arr.sum() / (arr.size * eta * a_eta))
    return BoundReport(
        (1 - a_eta) / a_eta * empirical_excess + mi_term,
        "fast_subgaussian",
        {**digest, "a_eta": a_eta},
        excess_value=empirical_excess / a_eta + mi_term,
        notes=_positive_emp_note(empirical_excess),
    )


def _check_eta_c(eta: float, c: float) -> None:
    if not (math.isfinite(eta) and eta > 0):
        raise ValueError(f"eta must be > 0, got {eta}")
    if not (math.isfinite(c) and 0 < c <= 1):
        raise ValueError(f"c must lie in (0, 1], got {c}")


def eta_c_bound(eta: float, c: float, empirical_excess: float, mi) -> BoundReport:
    """Bound under the (eta, c)-central condition.

    gen <= ((1-c)/c) E[emp excess] + sum_i I_i / (c eta n); the excess-risk variant
    uses 1/c in front of the empirical term.
    """
    _check_eta_c(eta, c)
    arr = _mi_array(mi)
    mi_term = float(arr.sum() / (c * eta * arr.size))
    return BoundReport(
        (1 - c) / c * empirical_excess + mi_term,
        "eta_c",
        _digest(arr, BoundParams(eta=eta, c=c), empirical_excess=empirical_excess),
        excess_value=empirical_excess / c + mi_term,
        notes=_positive_emp_note(empirical_excess),
    )


def gaussian_loss_c(eta: float, sigma_n: float) -> float:
    """Central constant ln(1 + 4 eta s^2) / (4 eta s^2) of the squared loss in the Gaussian mean model."""
    u = 4 * eta * sigma_n * sigma_n
    return math.log1p(u) / u


def eta_c_loss_bound(eta: float, c: float, empirical_loss: float, mi) -> BoundReport:
    """Bound when the loss itself satisfies the (eta, c)-central condition.

    gen <= ((1-c)/c) E[emp loss] + sum_i I_i / (c eta n). The empirical loss does not
    vanish, so the bound stays of order one.
    """
    _check_eta_c(eta, c)
    arr = _mi_array(mi)
    mi_term = float(arr.sum() / (c * eta * arr.size))
    return BoundReport(
        (1 - c) / c * empirical_loss + mi_term,
        "eta_c_loss",
        _digest(arr, BoundParams(eta=eta, c=c), empirical_loss=empirical_loss),
    )


def gaussian_eta_c_loss_value(eta: float, sigma_n: float, n: int) -> float:
    """Closed-form loss-side bound for the Gaussian mean model with I approximated by 1/(2(n-1))."""
    c = gaussian_loss_c(eta, sigma_n)
    var = sigma_n * sigma_n
    return (1 - c) / c * (n - 1) / n * var + 1 / (2 * c * eta * (n - 1))


def intermediate_bound(
    eta: float | None,
    c: float,
    beta: float,
    empirical_excess: float,
    mi,
    epsilon_mode: str = "optimized",
    epsilon: float | None = None,
    form: str = "appendix",
) -> BoundReport:
    """Bound under the (v, c)-central condition with v(eps) = eps^(1 - beta).

    ``explicit`` mode: ((1-c)/c) E[emp] + (1/n) sum_i (I_i/(eta c) + eps/c).
    ``optimized`` mode plugs in eps_i = I_i^(1/(2-beta)). With ``form="appendix"`` the
    MI term is (2/(n c)) sum_i I_i^(1/(2-beta)); ``form="main_text"`` uses the
    coefficient (1-beta)^(1/(2-beta)) (2-beta) / (c (1-beta)), continuous at beta = 1.
    """
    if not 0 <= beta <= 1:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    if not 0 < c <= 1:
        raise ValueError(f"c must lie in (0, 1], got {c}")
    arr = _mi_array(mi)
    n = arr.size
    lead = (1 - c) / c * empirical_excess
    if epsilon_mode == "explicit":
        if eta is None or eta <= 0:
            raise ValueError("explicit mode needs eta > 0")
        if epsilon is None or epsilon < 0:
            raise ValueError("explicit mode needs epsilon >= 0")
        value = lead + float(np.sum(arr / (eta * c) + epsilon / c)) / n
        params = BoundParams(eta=eta, c=c, beta=beta, epsilon=epsilon)
    elif epsilon_mode == "optimized":
        powered = float(np.sum(arr ** (1.0 / (2.0 - beta))))
        if form == "appendix":
            coef = 2.0 / c
        elif form == "main_text":
            if beta == 1:
                coef = 1.0 / c
            else:
                coef = (1 - beta) ** (1 / (2 - beta)) * (2 - beta) / (c * (1 - beta))
        else:
            raise ValueError("form must be 'appendix' or 'main_text'")
        value = lead + coef * powered / n
        params = BoundParams(c=c, beta=beta)
    else:
        raise ValueError("epsilon_mode must be 'explicit' or 'optimized'")
    return BoundReport(
        value,
        f"intermediate_{epsilon_mode}",
        {**_digest(arr, params, empirical_excess=empirical_excess), "form": form},
        notes=_positive_emp_note(empirical_excess),
    )


def rerm_bound(eta: float, c: float, reg_coeff: float, reg_bound: float, empirical_reg_excess: float, mi) -> BoundReport:
    """Excess-risk bound for regularized ERM.

    (1/c) E[emp regularized excess] + lambda B / (c n) + sum_i I_i / (c eta n). The
    ``simplified`` entry drops the first term, which is non-positive for the
    regularized minimizer.
    """
    _check_eta_c(eta, c)
    if reg_coeff < 0:
        raise ValueError("reg_coeff must be >= 0")
    if not reg_bound > 0:
        raise ValueError("reg_bound must be > 0")
    arr = _mi_array(mi)
    n = arr.size
    tail = reg_coeff * reg_bound / (c * n) + float(arr.sum()) / (c * eta * n)
    full = empirical_reg_excess / c + tail
    return BoundReport(
        full,
        "rerm",
        _digest(arr, BoundParams(eta=eta, c=c, reg_coeff=reg_coeff, reg_bound=reg_bound), empirical_reg_excess=empirical_reg_excess),
        excess_value=full,
        extra={"simplified": tail},
    )


def gaussian_lower_bounds(sigma_n: float, n: int, mi, empirical_excess: float, gen_error: float, model_id=None) -> tuple[BoundReport, BoundReport]:
    """Matching lower bounds for the Gaussian mean model.

    gen >= 2 s^2 (n-1)/n^2 sum_i I_i and
    excess >= (2 s^2 / n) sum_i I_i + E[emp excess] - E[gen] / (n - 1).
    """
    if model_id is not None and ModelId.parse(model_id) is not ModelId.GAUSSIAN_MEAN:
        raise ValueError("these lower bounds are specific to the gaussian_mean model")
    if n < 2:
        raise ValueError("n must be >= 2")
    arr = _mi_array(mi)
    total = float(arr.sum())
    var = sigma_n * sigma_n
    digest = _digest(arr, BoundParams(sigma=sigma_n), empirical_excess=empirical_excess, gen_error=gen_error)
    gen_lb = 2 * var * (n - 1) / (n * n) * total
    ex_lb = 2 * var / n * total + empirical_excess - gen_error / (n - 1)
    return (
        BoundReport(gen_lb, "gaussian_lower_gen", digest),
        BoundReport(ex_lb, "gaussian_lower_excess", digest),
    )

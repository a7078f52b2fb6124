"""Monte-Carlo sweeps, log-log rate fits and the worked-example reproductions.

Repetition ``r`` at sample size ``n`` draws everything from
``RngStream(master_seed, r).child(n)``: the training set first, then the fresh
draws used for population risks and empirical CGFs. Repetitions are processed in
fixed-size chunks whose results are concatenated in repetition order, so the output
does not depend on how many worker threads run the chunks.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from . import bounds as B
from .conditions import (
    bernstein_check,
    bernstein_to_eta_c,
    central_witness_to_eta_c,
    eta_c_check,
    eta_c_check_units,
    fit_subexp_params,
    fit_subgamma_nu2,
    gaussian_witness_constant,
    subexp_to_eta_c,
    subgamma_to_eta_c,
)
from .core import LearningTuple, ModelId, RngStream, design_for, losses, reference_hypothesis
from .mi_est import chain_rule_mi, ksg_mi, mixed_mi
from .model_suite import cgf_evaluator, closed_form, design_constant, erm_result, sample_dataset
from .tables import Table

ALL_OUTPUTS = frozenset({"risks", "cgf", "mi", "bounds"})
CHUNK = 512
NONCONVERGED_LIMIT = 0.01


class SweepAborted(RuntimeError):
    pass


@dataclass(frozen=True)
class SweepConfig:
    """One Monte-Carlo experiment.

    ``bound_eta`` / ``bound_c`` override the per-model constants used for the
    central-condition bound; for logistic regression ``bound_c`` is estimated when
    left unset. ``test_size`` is the fresh test sample per repetition for logistic
    regression and ``cgf_points`` the number of fresh draws per repetition feeding
    the empirical CGF of the other models.
    """

    model: LearningTuple
    n_grid: tuple[int, ...]
    repetitions: int
    master_seed: int = 0
    eta_grid: tuple[float, ...] = ()
    k: int = 3
    bins: int = 8
    outputs: frozenset = ALL_OUTPUTS
    bound_eta: float | None = None
    bound_c: float | None = None
    test_size: int = 10_000
    cgf_points: int = 8
    mi_pairs: int = 50
    n_boot: int = 1000

    def __post_init__(self) -> None:
        grid = tuple(int(n) for n in self.n_grid)
        if not grid:
            raise ValueError("n_grid must not be empty")
        if any(n < 2 for n in grid):
            raise ValueError("every n must be >= 2")
        if len(set(grid)) != len(grid):
            raise ValueError("n_grid contains duplicate sample sizes")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("n_grid must be strictly ascending")
        object.__setattr__(self, "n_grid", grid)
        if self.repetitions < 2:
            raise ValueError("repetitions must be >= 2")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        etas = tuple(float(e) for e in self.eta_grid)
        if any(e <= 0 for e in etas) or any(b <= a for a, b in zip(etas, etas[1:])):
            raise ValueError("eta_grid must be strictly positive and ascending")
        object.__setattr__(self, "eta_grid", etas)
        unknown = set(self.outputs) - ALL_OUTPUTS
        if unknown:
            raise ValueError(f"unknown outputs: {sorted(unknown)}")
        object.__setattr__(self, "outputs", frozenset(self.outputs))
        if self.k < 1 or self.bins < 2 or self.test_size < 1 or self.cgf_points < 1 or self.mi_pairs < 1:
            raise ValueError("k, bins, test_size, cgf_points and mi_pairs must be positive (bins >= 2)")
        if self.bound_eta is not None and self.bound_eta <= 0:
            raise ValueError("bound_eta must be > 0")
        if self.bound_c is not None and not 0 < self.bound_c <= 1:
            raise ValueError("bound_c must lie in (0, 1]")


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    slope_stderr: float
    r_squared: float
    points: tuple[tuple[float, float], ...]
    excluded: tuple[tuple[float, float], ...] = ()

    def as_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "slope_stderr": self.slope_stderr,
            "r_squared": self.r_squared,
            "points": [list(p) for p in self.points],
            "excluded": [list(p) for p in self.excluded],
        }


def _ols(x: np.ndarray, y: np.ndarray, pts, excluded) -> RateFit:
    res = stats.linregress(x, y)
    return RateFit(float(res.slope), float(res.intercept), float(res.stderr), float(res.rvalue**2), tuple(pts), tuple(excluded))


def _split_points(points):
    pts = [(float(n), float(v)) for n, v in points]
    good = [(n, v) for n, v in pts if n > 0 and v > 0 and math.isfinite(v)]
    bad = [(n, v) for n, v in pts if not (n > 0 and v > 0 and math.isfinite(v))]
    if len(good) < 3:
        raise ValueError(f"need at least 3 positive points for a rate fit, got {len(good)}")
    return good, bad


def fit_rate(points: Sequence[tuple[float, float]]) -> RateFit:
    """OLS of ln(value) on ln(n); non-positive values are excluded and recorded."""
    good, bad = _split_points(points)
    arr = np.array(good)
    return _ols(np.log(arr[:, 0]), np.log(arr[:, 1]), good, bad)


def fit_exponential(points: Sequence[tuple[float, float]], log_n_power: float = 0.0) -> RateFit:
    """OLS of ln(value) + log_n_power * ln(n) on n, for laws of the form n^-p e^(slope n)."""
    good, bad = _split_points(points)
    arr = np.array(good)
    return _ols(arr[:, 0], np.log(arr[:, 1]) + log_n_power * np.log(arr[:, 0]), good, bad)


# ---------------------------------------------------------------- per-model constants


def default_central_constants(tup: LearningTuple) -> tuple[float | None, float | None]:
    """(eta, c) at which each model certifiably satisfies the central condition.

    Returns (None, None) for the two models whose excess loss has zero mean, and
    (0.8, None) for logistic regression, whose c is estimated from simulations.
    """
    p, m = tup.params, tup.model_id
    var = p.noise_sd**2
    if m is ModelId.GAUSSIAN_MEAN:
        return 1 / (8 * var), 0.5
    if m is ModelId.LINEAR_REGRESSION:
        return 1 / (4 * var), 0.5
    if m is ModelId.DISCRETE_MEAN:
        eta = 0.25
        return eta, float(-math.expm1(8 * eta * eta * var - 4 * eta * p.mean) / (4 * eta * p.mean))
    if m is ModelId.LOGISTIC_REGRESSION:
        return 0.8, None
    return None, None


def _nan() -> float:
    return math.nan


def closed_bounds(tup: LearningTuple, n: int, eta: float | None = None, c: float | None = None) -> dict:
    """Every applicable bound at ``n`` computed from exact inputs only."""
    rep = closed_form(tup, n)
    p, m = tup.params, tup.model_id
    var = p.noise_sd**2
    d_eta, d_c = default_central_constants(tup)
    eta = d_eta if eta is None else eta
    c = d_c if c is None else c
    out = {k: _nan() for k in ("bound_sqrt", "bound_fast_sg", "bound_eta_c", "bound_eta_c_excess",
                               "bound_eta_c_loss", "lower_bound", "lower_bound_excess")}
    out["eta"], out["c"] = (eta if eta is not None else _nan()), (c if c is not None else _nan())
    if rep.dataset_level:
        out["bound_sqrt"] = B.mi_sqrt_bound(rep.subgaussian_proxy_loss, [rep.mi_total]).value
        out["mi"] = float(rep.mi_total)
        return out
    # exact per-sample MI wherever it is computable; the Jensen-type upper bound decays too slowly
    mi = list(rep.mi_exact or rep.mi_per_sample)
    out["mi"] = float(np.mean(mi))
    out["bound_sqrt"] = B.mi_sqrt_bound(list(rep.proxy_loss_per_sample), mi).value
    if m in (ModelId.GAUSSIAN_MEAN, ModelId.LINEAR_REGRESSION):
        sig = 2 * var * math.sqrt(1.0 / n)
        fast = B.fast_subgaussian_bound(sig, 1 / (4 * var), rep.mean_r, mi, rep.empirical_excess)
    elif rep.mean_r > 0:
        sig = rep.subgaussian_proxy_excess
        fast = B.fast_subgaussian_bound(sig, rep.mean_r / sig**2, rep.mean_r, mi, rep.empirical_excess)
    else:
        fast = None
    if fast is not None and fast.valid:
        out["bound_fast_sg"] = fast.value
    if eta is not None and c is not None:
        r = B.eta_c_bound(eta, c, rep.empirical_excess, mi)
        out["bound_eta_c"], out["bound_eta_c_excess"] = r.value, r.excess_value
    if m is ModelId.GAUSSIAN_MEAN:
        e_loss = 1 / (4 * var)
        out["bound_eta_c_loss"] = B.eta_c_loss_bound(e_loss, B.gaussian_loss_c(e_loss, p.noise_sd), rep.empirical_loss, mi).value
        lo_gen, lo_ex = B.gaussian_lower_bounds(p.noise_sd, n, mi, rep.empirical_excess, rep.gen_error)
        out["lower_bound"], out["lower_bound_excess"] = lo_gen.value, lo_ex.value
    return out


BASE_COLUMNS = [
    "n", "true_gen", "true_excess", "true_emp_excess",
    "mc_gen", "mc_gen_se", "mc_excess", "mc_excess_se", "mc_emp_excess", "mc_emp_excess_se",
    "mi", "mi_mc", "bound_sqrt", "bound_fast_sg", "bound_eta_c", "bound_eta_c_excess",
    "bound_eta_c_loss", "lower_bound", "lower_bound_excess", "eta", "c",
]
LOGISTIC_COLUMNS = [
    "mc_gen_raw", "mc_gen_raw_se", "c_ci_halfwidth", "c_pooled",
    "bound_eta_c_pooled", "bound_eta_c_excess_pooled", "nonconverged",
]


def _eta_tag(eta: float) -> str:
    return format(eta, "g")


def closed_form_table(tup: LearningTuple, n_grid: Sequence[int], eta: float | None = None, c: float | None = None) -> Table:
    """Exact curves (no simulation); Monte-Carlo columns are NaN."""
    rows = []
    for n in n_grid:
        rep = closed_form(tup, n)
        row = {col: _nan() for col in BASE_COLUMNS}
        row.update(n=int(n), true_gen=rep.gen_error, true_excess=rep.excess, true_emp_excess=rep.empirical_excess)
        row.update(closed_bounds(tup, n, eta, c))
        rows.append(row)
    return Table(list(BASE_COLUMNS), rows)


# ---------------------------------------------------------------- simulation


def _etas_for(cfg: SweepConfig) -> tuple[float, ...]:
    etas = set(cfg.eta_grid)
    if cfg.model.model_id is ModelId.LOGISTIC_REGRESSION:
        etas.add(cfg.bound_eta if cfg.bound_eta is not None else 0.8)
    return tuple(sorted(etas))


def _stream(cfg: SweepConfig, r: int, n: int) -> np.random.Generator:
    return RngStream(cfg.master_seed, r).child(n).generator()


def _lse_rows(r: np.ndarray, etas: Sequence[float]) -> np.ndarray:
    """log sum_j exp(-eta r_j) per row for every eta, shape (rows, len(etas))."""
    out = np.empty((r.shape[0], len(etas)))
    for j, eta in enumerate(etas):
        a = -eta * r
        m = a.max(axis=1, keepdims=True)
        out[:, j] = (m[:, 0] + np.log(np.exp(a - m).sum(axis=1)))
    return out


def _chunk_closed(cfg: SweepConfig, n: int, reps: range, etas) -> dict:
    tup = cfg.model
    p, m = tup.params, tup.model_id
    mu, sd = p.mean, p.noise_sd
    R, mpts = len(reps), cfg.cgf_points
    data = np.empty((R, n, tup.arity))
    fresh = np.empty((R, mpts, 2))
    for j, r in enumerate(reps):
        g = _stream(cfg, r, n)
        data[j] = sample_dataset(tup, n, g).samples
        if m is ModelId.LINEAR_REGRESSION:
            idx = g.integers(0, n, mpts)
            x = design_for(tup, n)[idx]
            fresh[j, :, 0] = x
            fresh[j, :, 1] = p.w_star[0] * x + sd * g.standard_normal(mpts)
        elif m is ModelId.HYPOTHESIS_SELECTION:
            fresh[j] = mu + sd * g.standard_normal((mpts, 2))
        else:
            fresh[j, :, 0] = sample_dataset(tup, mpts, g).samples[:, 0]
    out: dict = {}
    if m is ModelId.LINEAR_REGRESSION:
        x, y = data[:, :, 0], data[:, :, 1]
        w_ref = p.w_star[0]
        w = (x * y).sum(axis=1) / (x * x).sum(axis=1)
        x2 = float(np.mean(design_for(tup, n) ** 2))
        pop = sd * sd + (w - w_ref) ** 2 * x2
        pop_ref = sd * sd
        emp = np.mean((y - w[:, None] * x) ** 2, axis=1)
        emp_ref = np.mean((y - w_ref * x) ** 2, axis=1)
        fx, fy = fresh[:, :, 0], fresh[:, :, 1]
        r_fresh = (fy - w[:, None] * fx) ** 2 - (fy - w_ref * fx) ** 2
        out["w"] = w[:, None]
        out["z_first"] = data[:, 0, 1]
    elif m is ModelId.HYPOTHESIS_SELECTION:
        z = data[:, :, 0]
        w = np.argmax(z, axis=1)
        pop = np.full(R, -mu)
        pop_ref = -mu
        emp = -z[np.arange(R), w]
        emp_ref = -z[:, 0]
        r_fresh = np.where((w == 0)[:, None], 0.0, fresh[:, :, 0] - fresh[:, :, 1])
        out["w"] = w[:, None].astype(float)
        out["z_first"] = z[:, 0]
    else:
        z = data[:, :, 0]
        zbar = z.mean(axis=1)
        if m is ModelId.GAUSSIAN_MEAN:
            w = zbar
        else:
            w = np.where(zbar >= 0, 1.0, -1.0)
        w_ref = float(reference_hypothesis(tup)[0])
        pop = (w - mu) ** 2 + sd * sd
        pop_ref = (w_ref - mu) ** 2 + sd * sd
        emp = np.mean((w[:, None] - z) ** 2, axis=1)
        emp_ref = np.mean((w_ref - z) ** 2, axis=1)
        f = fresh[:, :, 0]
        r_fresh = (w[:, None] - f) ** 2 - (w_ref - f) ** 2
        out["w"] = w[:, None]
        out["z_first"] = z[:, 0]
    out["gen"] = pop - emp
    out["excess"] = pop - pop_ref
    out["emp_excess"] = emp - emp_ref
    out["converged"] = np.ones(R, dtype=bool)
    if etas:
        out["lse"] = _lse_rows(r_fresh, etas)
    out["rsum"] = r_fresh.sum(axis=1)
    out["rcount"] = np.full(R, float(mpts))
    return out


def _chunk_logistic(cfg: SweepConfig, n: int, reps: range, etas) -> dict:
    tup = cfg.model
    w_ref = reference_hypothesis(tup)
    R = len(reps)
    d = tup.params.dim
    pairs = min(n, cfg.mi_pairs)
    keys = ("gen", "gen_raw", "excess", "emp_excess")
    out = {k: np.empty(R) for k in keys}
    out["converged"] = np.empty(R, dtype=bool)
    out["w"] = np.empty((R, d))
    out["train_head"] = np.empty((R, pairs, d + 1))
    out["lse"] = np.empty((R, len(etas)))
    out["rsum"] = np.empty(R)
    out["rcount"] = np.full(R, float(cfg.test_size))
    for j, r in enumerate(reps):
        g = _stream(cfg, r, n)
        ds = sample_dataset(tup, n, g)
        fit = erm_result(tup, ds)
        test = sample_dataset(tup, cfg.test_size, g).samples
        l_w = losses(tup, fit.w, test)
        l_ref = losses(tup, w_ref, test)
        emp = float(losses(tup, fit.w, ds.samples).mean())
        emp_ref = float(losses(tup, w_ref, ds.samples).mean())
        r_test = l_w - l_ref
        excess = float(r_test.mean())
        out["excess"][j] = excess
        out["emp_excess"][j] = emp - emp_ref
        # control variate: the reference terms have zero mean difference
        out["gen"][j] = excess - (emp - emp_ref)
        out["gen_raw"][j] = float(l_w.mean()) - emp
        out["converged"][j] = fit.converged
        out["w"][j] = fit.w
        out["train_head"][j] = ds.samples[:pairs]
        out["lse"][j] = _lse_rows(r_test[None, :], etas)[0]
        out["rsum"][j] = r_test.sum()
    return out


def _simulate(cfg: SweepConfig, n: int, threads: int | None) -> dict:
    etas = _etas_for(cfg)
    worker = _chunk_logistic if cfg.model.model_id is ModelId.LOGISTIC_REGRESSION else _chunk_closed
    chunks = [range(s, min(s + CHUNK, cfg.repetitions)) for s in range(0, cfg.repetitions, CHUNK)]
    nthreads = max(1, threads or 1)
    if nthreads == 1 or len(chunks) == 1:
        parts = [worker(cfg, n, ch, etas) for ch in chunks]
    else:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            parts = list(pool.map(lambda ch: worker(cfg, n, ch, etas), chunks))
    merged = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    merged["etas"] = etas
    return merged


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


@dataclass
class SweepResult:
    config: SweepConfig
    table: Table
    condition_reports: dict = field(default_factory=dict)
    mi_details: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)


def resolve_threads(threads: int | None = None) -> int:
    """Worker count: GENBOUND_THREADS wins over the argument; default is the core count."""
    env = os.environ.get("GENBOUND_THREADS")
    if env:
        try:
            val = int(env)
        except ValueError:
            raise ValueError(f"GENBOUND_THREADS must be a positive integer, got {env!r}") from None
        if val < 1:
            raise ValueError("GENBOUND_THREADS must be >= 1")
        return val
    if threads is not None:
        if threads < 1:
            raise ValueError("threads must be >= 1")
        return threads
    return os.cpu_count() or 1


def run_sweep(cfg: SweepConfig, threads: int | None = None) -> SweepResult:
    """Simulate every n in the grid and assemble risks, CGFs, MI and bounds."""
    tup = cfg.model
    m = tup.model_id
    logistic = m is ModelId.LOGISTIC_REGRESSION
    nthreads = resolve_threads(threads)
    etas = _etas_for(cfg)
    columns = list(BASE_COLUMNS) + (LOGISTIC_COLUMNS if logistic else [])
    for e in cfg.eta_grid:
        t = _eta_tag(e)
        columns += [f"cgf_closed_{t}", f"cgf_mc_{t}", f"max_c_{t}", f"max_c_hw_{t}"]
    rows, reports, mi_details = [], {}, {}
    nonconv_total = 0
    for n_idx, n in enumerate(cfg.n_grid):
        sim = _simulate(cfg, n, nthreads)
        conv = sim["converged"]
        n_bad = int((~conv).sum())
        nonconv_total += n_bad
        if n_bad > NONCONVERGED_LIMIT * cfg.repetitions:
            raise SweepAborted(f"{n_bad} of {cfg.repetitions} ERM fits did not converge at n={n}")
        keep = conv
        row = {col: _nan() for col in columns}
        row["n"] = int(n)
        if "risks" in cfg.outputs:
            row["mc_gen"], row["mc_gen_se"] = _mean_se(sim["gen"][keep])
            row["mc_excess"], row["mc_excess_se"] = _mean_se(sim["excess"][keep])
            row["mc_emp_excess"], row["mc_emp_excess_se"] = _mean_se(sim["emp_excess"][keep])
            if logistic:
                row["mc_gen_raw"], row["mc_gen_raw_se"] = _mean_se(sim["gen_raw"][keep])
                row["nonconverged"] = n_bad
        rep = None if logistic else closed_form(tup, n)
        if rep is not None:
            row.update(true_gen=rep.gen_error, true_excess=rep.excess, true_emp_excess=rep.empirical_excess)
        # empirical CGF reports on the grid (and at the bound eta for logistic)
        n_reports = {}
        if "cgf" in cfg.outputs or logistic:
            for j, eta in enumerate(etas):
                stream = RngStream(cfg.master_seed, 2**63 + n_idx).child(j)
                n_reports[eta] = eta_c_check_units(sim["lse"][keep, j], sim["rsum"][keep], sim["rcount"][keep], eta, stream, n_boot=cfg.n_boot)
            for eta in cfg.eta_grid:
                t = _eta_tag(eta)
                er = n_reports[eta]
                row[f"cgf_mc_{t}"] = er.cgf_value
                row[f"max_c_hw_{t}"] = er.ci_halfwidth
                if rep is not None:
                    ev = cgf_evaluator(tup, n, "excess_neg")
                    cr = eta_c_check(ev(eta), rep.mean_r, eta)
                    row[f"cgf_closed_{t}"] = cr.cgf_value
                    row[f"max_c_{t}"] = cr.max_c if cr.max_c is not None else _nan()
                else:
                    row[f"max_c_{t}"] = er.max_c if er.max_c is not None else _nan()
            reports[n] = n_reports
        # mutual information
        if "mi" in cfg.outputs or "bounds" in cfg.outputs:
            if logistic:
                head = sim["train_head"][keep]
                # (W, Z_i) has the same law for every i, so the pairs are pooled into one sample
                pairs = head.shape[1]
                w_pool = np.repeat(sim["w"][keep], pairs, axis=0)
                z_pool = head.reshape(-1, head.shape[2])
                est = chain_rule_mi(w_pool, z_pool[:, :-1], z_pool[:, -1], k=cfg.k)
                row["mi"] = est.value
                mi_details[n] = est
            else:
                row["mi"] = rep.mi_mean if not rep.dataset_level else float(rep.mi_total)
                if m in (ModelId.DISCRETE_MEAN, ModelId.ZERO_MEAN_DISCRETE) and keep.sum() >= cfg.k + 2:
                    row["mi_mc"] = mixed_mi(sim["w"][keep, 0], sim["z_first"][keep], k=cfg.k).value
        if "bounds" in cfg.outputs:
            if logistic:
                eta = cfg.bound_eta if cfg.bound_eta is not None else 0.8
                er = n_reports[eta]
                c_n = cfg.bound_c if cfg.bound_c is not None else er.max_c
                row["eta"], row["c"], row["c_ci_halfwidth"] = eta, (c_n if c_n is not None else _nan()), er.ci_halfwidth
                mi_list = [max(row["mi"], 0.0)] * n
                row["bound_sqrt"] = B.mi_sqrt_bound(0.5, mi_list).value
                if c_n:
                    b = B.eta_c_bound(eta, c_n, row["mc_emp_excess"], mi_list)
                    row["bound_eta_c"], row["bound_eta_c_excess"] = b.value, b.excess_value
            else:
                row.update({k: v for k, v in closed_bounds(tup, n, cfg.bound_eta, cfg.bound_c).items() if k in row})
        rows.append(row)
    if logistic and "bounds" in cfg.outputs:
        cs = [r["c"] for r in rows if math.isfinite(r["c"])]
        pooled = float(np.mean(cs)) if cs else _nan()
        for r in rows:
            r["c_pooled"] = pooled
            if pooled > 0:
                b = B.eta_c_bound(r["eta"], min(pooled, 1.0), r["mc_emp_excess"], [max(r["mi"], 0.0)] * r["n"])
                r["bound_eta_c_pooled"], r["bound_eta_c_excess_pooled"] = b.value, b.excess_value
    meta = {"nonconverged": nonconv_total, "threads": nthreads}
    return SweepResult(cfg, Table(columns, rows), reports, mi_details, meta)


# ---------------------------------------------------------------- examples


@dataclass(frozen=True)
class Verdict:
    criterion: str
    description: str
    passed: bool
    detail: dict

    def as_dict(self) -> dict:
        return {"criterion": self.criterion, "description": self.description, "passed": self.passed, "detail": self.detail}


@dataclass
class ReportBundle:
    example_id: str
    tables: dict
    fits: dict
    verdicts: list
    meta: dict = field(default_factory=dict)


EXAMPLE_IDS = (
    "example_2", "example_3", "example_5_6", "example_loss_central", "lemma_1_2",
    "sec_5_1", "sec_5_2", "sec_5_3", "example_7", "example_8", "table_1", "ksg",
)
DEFAULT_REPS = {"example_2": 50_000, "sec_5_1": 100_000, "sec_5_3": 500, "sec_5_2": 20_000}
_DECADES = (100, 1000, 10_000, 100_000)


def _within(value: float, target: float, se: float, k: float = 4.0) -> bool:
    return abs(value - target) <= k * se


def _fit_col(table: Table, col: str, n_subset=None) -> RateFit:
    pts = [(r["n"], r[col]) for r in table.rows if n_subset is None or r["n"] in n_subset]
    return fit_rate(pts)


def _merge_mc(base: Table, sweep: Table) -> None:
    by_n = {r["n"]: r for r in sweep.rows}
    for r in base.rows:
        s = by_n.get(r["n"])
        if s:
            for col in ("mc_gen", "mc_gen_se", "mc_excess", "mc_excess_se", "mc_emp_excess", "mc_emp_excess_se", "mi_mc"):
                r[col] = s[col]


def _example_2(seed, reps, threads):
    tup = LearningTuple.of("gaussian_mean")
    table = closed_form_table(tup, (10,) + _DECADES)
    verdicts = []
    if reps:
        t0 = time.perf_counter()
        sw = run_sweep(SweepConfig(tup, (10, 100), reps, seed, outputs=frozenset({"risks"})), threads)
        elapsed = time.perf_counter() - t0
        _merge_mc(table, sw.table)
        det, ok = {"seconds": elapsed, "reps": reps}, elapsed < 10
        for r in sw.table.rows:
            n = r["n"]
            g_ok = _within(r["mc_gen"], 2 / n, r["mc_gen_se"])
            e_ok = _within(r["mc_emp_excess"], -1 / n, r["mc_emp_excess_se"])
            det[f"n={n}"] = {"mc_gen": r["mc_gen"], "se": r["mc_gen_se"], "mc_emp_excess": r["mc_emp_excess"], "se_emp": r["mc_emp_excess_se"]}
            ok = ok and g_ok and e_ok
        verdicts.append(Verdict("1", "Gaussian mean: Monte-Carlo gen and empirical excess within 4 SE of closed form, < 10 s", ok, det))
    fits = {
        "bound_sqrt": _fit_col(table, "bound_sqrt", _DECADES),
        "bound_eta_c": _fit_col(table, "bound_eta_c", _DECADES),
        "true_gen": _fit_col(table, "true_gen", _DECADES),
    }
    ok = (abs(fits["bound_sqrt"].slope + 0.5) <= 0.02 and abs(fits["bound_eta_c"].slope + 1) <= 0.02
          and abs(fits["true_gen"].slope + 1) <= 1e-9)
    verdicts.append(Verdict("2", "Rate contrast: loss-side sqrt-MI slope -0.5, central-condition slope -1, true gen slope -1", ok,
                            {k: v.slope for k, v in fits.items()}))
    return {"curves": table}, fits, verdicts


def _example_3(seed, reps, threads):
    tup = LearningTuple.of("gaussian_mean")
    grid = (2, 3, 4, 10) + _DECADES
    table = closed_form_table(tup, grid)
    rep = closed_form(tup, 10)
    fits = {"bound_fast_sg": _fit_col(table, "bound_fast_sg", _DECADES)}
    vmin = rep.validity_min_n
    above = all(r["bound_fast_sg"] >= r["true_gen"] for r in table.rows if r["n"] >= vmin)
    ok = vmin == 4 and above and abs(fits["bound_fast_sg"].slope + 1) <= 0.02
    v = Verdict("example_3", "Sub-Gaussian fast-rate bound: certified from n=4, dominates gen, slope -1", ok,
                {"validity_min_n": vmin, "dominates": above, "slope": fits["bound_fast_sg"].slope})
    return {"curves": table}, fits, [v]


def _example_5_6(seed, reps, threads):
    tup = LearningTuple.of("gaussian_mean")
    table = closed_form_table(tup, (10,) + _DECADES)
    fits = {c: _fit_col(table, c, _DECADES) for c in ("bound_fast_sg", "bound_eta_c")}
    ok_slopes = all(abs(f.slope + 1) <= 0.02 for f in fits.values())
    worst = None
    ns = np.unique(np.concatenate([np.arange(10, 2001), np.geomspace(2000, 10**7, 200).astype(int)]))
    ok3 = True
    for n in ns:
        n = int(n)
        mi = 0.5 * math.log(n / (n - 1))
        val = B.eta_c_bound(0.125, 0.5, -1 / n, [mi]).value
        gap = val - 7 / n
        if not 0 < gap <= 10 / n**2:
            ok3 = False
            worst = n
            break
    v1 = Verdict("example_5_6", "Fast-rate bounds under sub-Gaussian and central conditions have slope -1", ok_slopes,
                 {k: f.slope for k, f in fits.items()})
    v2 = Verdict("3", "Central-condition bound exceeds 7/n by a positive amount at most 10/n^2 for all n >= 10", ok3,
                 {"n_checked": int(ns.size), "first_failure": worst})
    return {"curves": table}, fits, [v1, v2]


def _example_loss_central(seed, reps, threads):
    tup = LearningTuple.of("gaussian_mean")
    table = closed_form_table(tup, (10,) + _DECADES + (10**6,))
    c = B.gaussian_loss_c(0.25, 1.0)
    limit = (1 - c) / c
    last = table.rows[-1]["bound_eta_c_loss"]
    ok = (abs(c - math.log(2)) < 1e-12 and all(r["bound_eta_c_loss"] >= r["true_gen"] for r in table.rows)
          and abs(last - limit) / limit < 0.01)
    v = Verdict("example_loss_central", "Loss-side central bound: c = ln 2, dominates gen, tends to (1-c)/c", ok,
                {"c": c, "limit": limit, "value_at_1e6": last})
    return {"curves": table}, {}, [v]


def _lemma_1_2(seed, reps, threads):
    tup = LearningTuple.of("gaussian_mean")
    grid = (2, 10, 100, 10_000, 10**6)
    table = closed_form_table(tup, grid)
    table.columns += ["sandwich_lower", "sandwich_middle", "sandwich_upper", "lower_ratio"]
    ok4 = ok5 = True
    for r in table.rows:
        n = r["n"]
        mi = 0.5 * math.log(n / (n - 1))
        r["sandwich_lower"], r["sandwich_middle"], r["sandwich_upper"] = (n - 1) / n * mi, 1 / (2 * n), mi
        ok4 &= r["sandwich_lower"] < r["sandwich_middle"] < r["sandwich_upper"]
        r["lower_ratio"] = r["lower_bound"] / r["true_gen"]
        ok5 &= r["lower_bound"] <= r["true_gen"] <= r["bound_eta_c"]
        if n >= 50:
            ok5 &= 0.45 <= r["lower_ratio"] <= 0.5
    return {"curves": table}, {}, [
        Verdict("4", "Per-sample MI sandwich (n-1)/n I < 1/(2n) < I", bool(ok4), {"n": list(grid)}),
        Verdict("5", "Lower bound <= true gen <= central bound; ratio in [0.45, 0.5] for n >= 50", bool(ok5),
                {"ratios": {r["n"]: r["lower_ratio"] for r in table.rows}}),
    ]


def _sec_5_1(seed, reps, threads):
    tup = LearningTuple.of("discrete_mean")
    grid = tuple(range(2, 25))
    table = closed_form_table(tup, grid)
    sub = set(range(6, 25))
    pts = [(r["n"], r["true_gen"]) for r in table.rows if r["n"] in sub]
    fits = {
        "true_gen": fit_exponential(pts, log_n_power=0.5),
        "bound_eta_c": fit_exponential([(r["n"], r["bound_eta_c"]) for r in table.rows if r["n"] in sub], log_n_power=0.5),
    }
    det = {k: f.slope for k, f in fits.items()}
    ok = abs(fits["true_gen"].slope + 0.5) <= 0.01 and abs(fits["bound_eta_c"].slope + 0.5) <= 0.05
    if reps:
        sw = run_sweep(SweepConfig(tup, (4,), reps, seed, outputs=frozenset({"risks", "mi"})), threads)
        _merge_mc(table, sw.table)
        r4 = sw.table.rows[0]
        mc_ok = _within(r4["mc_gen"], closed_form(tup, 4).gen_error, r4["mc_gen_se"])
        det.update(mc_gen_n4=r4["mc_gen"], mc_gen_se=r4["mc_gen_se"], reps=reps)
        ok = ok and mc_ok
    v = Verdict("7", "Discrete-hypothesis model: exponential decay with rate -1/2 per sample; MC check at n=4", ok, det)
    return {"curves": table}, fits, [v]


def _sec_5_2(seed, reps, threads):
    tup = LearningTuple.of("linear_regression")
    grid = (10, 40, 160)
    table = closed_form_table(tup, grid)
    var = tup.params.noise_sd**2
    ok = True
    det = {}
    for r in table.rows:
        n = r["n"]
        cd = design_constant(tup, n)
        mi_ok = r["mi"] <= 1 / (2 * n * cd)
        gen_ok = abs(r["true_gen"] - 2 * var / n) <= 1e-12
        dom = r["bound_eta_c"] >= r["true_gen"]
        ok &= mi_ok and gen_ok and dom
        det[f"n={n}"] = {"mi": r["mi"], "mi_cap": 1 / (2 * n * cd), "gen": r["true_gen"], "bound_eta_c": r["bound_eta_c"]}
    fits = {"bound_eta_c": _fit_col(table, "bound_eta_c")}
    ok &= abs(fits["bound_eta_c"].slope + 1) <= 0.05
    det["slope"] = fits["bound_eta_c"].slope
    if reps:
        sw = run_sweep(SweepConfig(tup, grid, reps, seed, outputs=frozenset({"risks"})), threads)
        _merge_mc(table, sw.table)
        det["mc_within_4se"] = all(_within(r["mc_gen"], r["true_gen"], r["mc_gen_se"]) for r in table.rows)
    return {"curves": table}, fits, [Verdict("8", "Fixed-design linear regression closed forms and central bound", bool(ok), det)]


def _sec_5_3(seed, reps, threads):
    tup = LearningTuple.of("logistic_regression")
    grid = (50, 100, 200, 350, 500)
    t0 = time.perf_counter()
    sw = run_sweep(SweepConfig(tup, grid, reps or 500, seed, eta_grid=(0.8,)), threads)
    elapsed = time.perf_counter() - t0
    t = sw.table
    cs = [r["c"] for r in t.rows]
    pooled = t.rows[0]["c_pooled"]
    spread = (max(cs) - min(cs)) / pooled if pooled > 0 else math.inf
    fits = {"mc_gen": _fit_col(t, "mc_gen")}
    for col in ("bound_eta_c", "bound_sqrt"):
        try:
            fits[col] = _fit_col(t, col)
        except ValueError:
            pass
    last, prev = t.rows[-1], t.rows[-2]

    def local_slope(col):
        a, b = prev[col], last[col]
        if not (a > 0 and b > 0):
            return math.nan
        return math.log(b / a) / math.log(last["n"] / prev["n"])

    s_eta, s_sqrt = local_slope("bound_eta_c"), local_slope("bound_sqrt")
    checks = {
        "pooled_c_in_band": 0.25 <= pooled <= 0.50,
        "c_spread_below_30pct": spread < 0.30,
        "gen_slope": abs(fits["mc_gen"].slope + 1) <= 0.3,
        "faster_decay_at_500": bool(s_eta < s_sqrt),
        "runtime_below_300s": elapsed < 300,
    }
    det = {"pooled_c": pooled, "c_per_n": dict(zip(grid, cs)), "spread": spread, "gen_slope": fits["mc_gen"].slope,
           "local_slope_eta_c": s_eta, "local_slope_sqrt": s_sqrt, "seconds": elapsed, "checks": checks}
    gen = Table(["n", "mc_gen", "mc_gen_se", "mc_gen_raw", "mc_gen_raw_se", "bound_eta_c", "bound_eta_c_pooled"], t.rows)
    excess = Table(["n", "mc_excess", "mc_excess_se", "mc_emp_excess", "bound_eta_c_excess", "bound_eta_c_excess_pooled"], t.rows)
    comp = Table(["n", "mi", "bound_sqrt", "bound_eta_c", "bound_eta_c_pooled", "c", "c_ci_halfwidth"], t.rows)
    v = Verdict("10", "Logistic regression: pooled c band, c stability, 1/n gen rate, bound ordering, runtime", all(checks.values()), det)
    return {"curves": t, "gen": gen, "excess": excess, "bounds": comp}, fits, [v]


def _counterexample(model: str, formula, cid: str, desc: str, seed, reps, threads):
    tup = LearningTuple.of(model)
    grid = (10, 100, 1000)
    table = closed_form_table(tup, grid)
    cond = Table(["n", "eta", "cgf", "formula", "abs_error", "holds", "reason"])
    ok = True
    for n in grid:
        ev = cgf_evaluator(tup, n, "excess_neg")
        mean = closed_form(tup, n).mean_r
        for eta in (0.1, 0.5, 1.0, 2.0):
            val = ev(eta)
            exact = formula(eta, n)
            rep = eta_c_check(val, mean, eta)
            err = abs(val - exact)
            ok &= (not rep.holds) and err <= 1e-12
            cond.rows.append({"n": n, "eta": eta, "cgf": val, "formula": exact, "abs_error": err, "holds": rep.holds, "reason": rep.reason})
    if reps:
        sw = run_sweep(SweepConfig(tup, grid, reps, seed, outputs=frozenset({"risks", "mi"})), threads)
        _merge_mc(table, sw.table)
    return {"curves": table, "conditions": cond}, {}, [Verdict(cid, desc, bool(ok), {"rows": len(cond.rows)})]


def _example_7(seed, reps, threads):
    return _counterexample("zero_mean_discrete", lambda e, n: math.log(0.5 + 0.5 * math.exp(8 * e * e)),
                           "6a", "Zero-mean discrete model fails the central condition for every eta", seed, reps, threads)


def _example_8(seed, reps, threads):
    return _counterexample("hypothesis_selection", lambda e, n: math.log(1 / n + (n - 1) / n * math.exp(e * e)),
                           "6b", "Hypothesis selection fails the central condition for every eta", seed, reps, threads)


def implication_table(n: int = 100) -> tuple[Table, bool]:
    """Central-condition pairs implied by Bernstein, witness, sub-exponential and sub-Gamma conditions."""
    tup = LearningTuple.of("gaussian_mean")
    ev = cgf_evaluator(tup, n, "excess_neg")
    mean = closed_form(tup, n).mean_r
    t = Table(["source", "param", "eta", "c", "cgf", "margin", "holds"])
    b_min, brep = bernstein_check(tup, 1.0, B=7.0, n=n)
    pairs = [("bernstein", f"B_min={b_min:.9g}, b=1", *bernstein_to_eta_c(b_min, 1.0))]
    u = 1.0
    c_w = gaussian_witness_constant(tup, n, u)
    pairs.append(("witness", f"eta=0.5, u={u:g}, c_w={c_w:.9g}", *central_witness_to_eta_c(0.5, u, c_w, 0.25)))
    for alpha in (1.0, 2.0):
        nu2 = fit_subexp_params(tup, n, alpha)
        pairs.append(("sub_exponential", f"nu2={nu2:.9g}, alpha={alpha:g}", *subexp_to_eta_c(nu2, alpha, mean)))
        nu2g = fit_subgamma_nu2(tup, n, alpha)
        pairs.append(("sub_gamma", f"nu2={nu2g:.9g}, alpha={alpha:g}", *subgamma_to_eta_c(nu2g, alpha, mean)))
    ok = brep.holds and abs(b_min - 4.03) < 1e-12
    for src, param, eta, c in pairs:
        rep = eta_c_check(ev(eta), mean, eta, c=c)
        ok &= rep.holds
        t.rows.append({"source": src, "param": param, "eta": eta, "c": c, "cgf": rep.cgf_value, "margin": rep.margin, "holds": rep.holds})
    return t, bool(ok), b_min


def _table_1(seed, reps, threads):
    t, ok, b_min = implication_table()
    return {"curves": t}, {}, [Verdict("11", "Bernstein B_min = 4.03 <= 7 and every implied (eta, c) pair holds", ok,
                                       {"B_min": b_min, "pairs": len(t.rows)})]


def ksg_study(seed: int = 0, rhos=(0.0, 0.5, 0.9), sizes=(500, 2000, 5000, 8000), seeds: int = 20, k: int = 3) -> Table:
    """KSG estimates on correlated Gaussians: mean, error of the mean and mean absolute error."""
    t = Table(["n", "rho", "truth", "mean_estimate", "abs_error_of_mean", "mean_abs_error"])
    for i, rho in enumerate(rhos):
        truth = -0.5 * math.log(1 - rho * rho)
        for n in sizes:
            ests = []
            for s in range(seeds):
                g = RngStream(seed, s).child(i).child(n).generator()
                x = g.standard_normal(n)
                y = rho * x + math.sqrt(1 - rho * rho) * g.standard_normal(n)
                ests.append(ksg_mi(x, y, k, seed=s).raw_value)
            ests = np.array(ests)
            t.rows.append({"n": n, "rho": rho, "truth": truth, "mean_estimate": float(ests.mean()),
                           "abs_error_of_mean": float(abs(ests.mean() - truth)),
                           "mean_abs_error": float(np.mean(np.abs(ests - truth)))})
    return t


def _ksg(seed, reps, threads):
    t = ksg_study(seed)
    ok = True
    for rho in (0.0, 0.5, 0.9):
        rows = {r["n"]: r for r in t.rows if r["rho"] == rho}
        ok &= rows[5000]["abs_error_of_mean"] <= 0.05
        errs = [rows[n]["mean_abs_error"] for n in (500, 2000, 8000)]
        ok &= errs[0] >= errs[1] >= errs[2]
    return {"curves": t}, {}, [Verdict("9", "KSG: 20-seed mean within 0.05 at N=5000; error non-increasing over N", bool(ok), {})]


_EXAMPLES = {
    "example_2": _example_2, "example_3": _example_3, "example_5_6": _example_5_6,
    "example_loss_central": _example_loss_central, "lemma_1_2": _lemma_1_2, "sec_5_1": _sec_5_1,
    "sec_5_2": _sec_5_2, "sec_5_3": _sec_5_3, "example_7": _example_7, "example_8": _example_8,
    "table_1": _table_1, "ksg": _ksg,
}


def reproduce_example(example_id: str, seed: int = 0, reps: int | None = None, threads: int | None = None) -> ReportBundle:
    """Curves, rate fits and pass/fail verdicts for one worked example.

    ``reps`` sets the Monte-Carlo repetitions (0 disables simulation where it is
    optional); the default depends on the example.
    """
    if example_id not in _EXAMPLES:
        raise KeyError(f"unknown example {example_id!r}; choose from {', '.join(EXAMPLE_IDS)}")
    if reps is None:
        reps = DEFAULT_REPS.get(example_id, 0)
    if reps and reps < 2:
        raise ValueError("reps must be 0 or >= 2")
    tables, fits, verdicts = _EXAMPLES[example_id](seed, reps, threads)
    return ReportBundle(example_id, tables, fits, verdicts, {"seed": seed, "reps": reps})

"""Mutual information in nats: exact values for the analytic models and kNN / binning estimators.

All kNN estimators use the max-norm and exact neighbor search through ``cKDTree``.
Counts "strictly within" a radius are taken with the radius nudged down by one ulp.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma

from .core import LearningTuple, ModelId
from .model_suite import closed_form


@dataclass(frozen=True)
class MiEstimate:
    value: float
    estimator: str
    k: int | None = None
    sample_count: int = 0
    seed: int | None = None
    components: dict | None = None
    raw_value: float | None = None
    flags: tuple[str, ...] = ()
    diagnostics: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "value": self.value,
            "estimator": self.estimator,
            "k": self.k,
            "sample_count": self.sample_count,
            "seed": self.seed,
            "components": self.components,
            "raw_value": self.raw_value,
            "flags": list(self.flags),
            "diagnostics": self.diagnostics,
        }


def nats_to_bits(value: float) -> float:
    return value / math.log(2.0)


def _as_2d(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a vector list")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def closed_form_mi(tup: LearningTuple, n: int) -> list[MiEstimate]:
    """Exact I(W; Z_i) for every sample, or I(W; S) for the dataset-level selection loss."""
    if tup.model_id is ModelId.LOGISTIC_REGRESSION:
        raise ValueError("logistic_regression has no closed-form MI; use chain_rule_mi on simulated draws")
    rep = closed_form(tup, n)
    if rep.dataset_level:
        return [MiEstimate(float(rep.mi_total), "closed_form", sample_count=n, flags=("dataset_level",))]
    flags = ("upper_bound",) if rep.mi_kind == "upper_bound" else ()
    return [MiEstimate(float(v), "closed_form", sample_count=n, flags=flags) for v in rep.mi_per_sample]


def _strict_counts(points: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Number of points (self included) at max-norm distance strictly below each radius."""
    tree = cKDTree(points)
    r = np.nextafter(radii, 0)
    return np.asarray(tree.query_ball_point(points, r, p=np.inf, return_length=True), dtype=float)


def ksg_mi(x_samples, y_samples, k: int = 3, seed: int | None = None) -> MiEstimate:
    """Kraskov estimator (variant 1) with max-norm neighborhoods.

    I = psi(k) + psi(N) - <psi(n_x + 1)> - <psi(n_y + 1)>, where n_x, n_y count
    marginal neighbors strictly closer than the k-th joint neighbor.
    """
    x = _as_2d(x_samples, "x_samples")
    y = _as_2d(y_samples, "y_samples")
    n = x.shape[0]
    if y.shape[0] != n:
        raise ValueError("x and y must have the same number of samples")
    if k < 1 or k >= n - 1:
        raise ValueError(f"k must satisfy 1 <= k < N - 1 (N={n}), got {k}")
    if np.all(np.ptp(x, axis=0) == 0) or np.all(np.ptp(y, axis=0) == 0):
        warnings.warn("constant axis: mutual information is 0", RuntimeWarning, stacklevel=2)
        return MiEstimate(0.0, "ksg", k, n, seed, raw_value=0.0, flags=("degenerate_axis",))
    joint = np.hstack([x, y])
    dist, _ = cKDTree(joint).query(joint, k=k + 1, p=np.inf)
    eps = dist[:, -1]
    cx = _strict_counts(x, eps)
    cy = _strict_counts(y, eps)
    raw = float((digamma(k) + digamma(n)) - (np.mean(digamma(cx)) + np.mean(digamma(cy))))
    flags = []
    ceiling = float(digamma(n) - digamma(k))
    if np.any(eps == 0) or raw >= 0.9 * ceiling:
        flags.append("deterministic_relation")
    if raw < 0:
        flags.append("clipped")
    return MiEstimate(max(raw, 0.0), "ksg", k, n, seed, raw_value=raw, flags=tuple(flags))


def mixed_mi(discrete_samples, continuous_samples, k: int = 3, seed: int | None = None) -> MiEstimate:
    """kNN estimator of I(label; X) for a discrete label and continuous X.

    Neighbors of a point are searched among points with the same label. With rho the
    distance to the k-th such neighbor and m the number of points of any label within
    rho (self excluded), each point contributes psi(N) + psi(k) - psi(N_label) - psi(m).
    If rho = 0, k and m are replaced by the numbers of coincident same-label and
    any-label points.
    """
    labels = np.asarray(discrete_samples).reshape(-1)
    x = _as_2d(continuous_samples, "continuous_samples")
    n = labels.size
    if x.shape[0] != n:
        raise ValueError("labels and continuous samples must align")
    if k < 1 or k >= n - 1:
        raise ValueError(f"k must satisfy 1 <= k < N - 1 (N={n}), got {k}")
    classes, inverse, counts = np.unique(labels, return_inverse=True, return_counts=True)
    if classes.size == 1:
        return MiEstimate(0.0, "mixed_dc", k, n, seed, raw_value=0.0, flags=("single_class",))
    if np.all(np.ptp(x, axis=0) == 0):
        warnings.warn("constant axis: mutual information is 0", RuntimeWarning, stacklevel=2)
        return MiEstimate(0.0, "mixed_dc", k, n, seed, raw_value=0.0, flags=("degenerate_axis",))
    full_tree = cKDTree(x)
    terms = np.full(n, np.nan)
    notes = []
    for ci in range(classes.size):
        idx = np.nonzero(inverse == ci)[0]
        size = idx.size
        if size < 2:
            notes.append(f"class {classes[ci]!r} has one member; its point is skipped")
            continue
        kc = min(k, size - 1)
        if kc < k:
            notes.append(f"class {classes[ci]!r} has {size} members; k reduced to {kc}")
        pts = x[idx]
        dist, _ = cKDTree(pts).query(pts, k=kc + 1, p=np.inf)
        rho = dist[:, -1]
        m_all = np.asarray(full_tree.query_ball_point(pts, rho, p=np.inf, return_length=True), dtype=float) - 1
        kp = np.full(size, float(kc))
        zero = rho == 0
        if np.any(zero):
            same = np.asarray(cKDTree(pts).query_ball_point(pts[zero], 0.0, p=np.inf, return_length=True), dtype=float) - 1
            kp[zero] = same
        terms[idx] = digamma(n) + digamma(kp) - digamma(size) - digamma(m_all)
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    raw = float(np.nanmean(terms))
    flags = ("clipped",) if raw < 0 else ()
    return MiEstimate(max(raw, 0.0), "mixed_dc", k, n, seed, raw_value=raw, flags=flags,
                      diagnostics={"warnings": notes} if notes else {})


def chain_rule_mi(w_samples, x_samples, y_labels, k: int = 3, seed: int | None = None, clip: bool = True) -> MiEstimate:
    """I(W; X, Y) = I(W; Y) + sum_y P(y) I(W; X | Y = y) from aligned draws.

    The label term uses ``mixed_mi`` and each conditional term ``ksg_mi`` on the
    draws with that label. A label with too few draws for the kNN estimator
    contributes zero. With ``clip=False`` the unclipped component estimates are
    combined, which keeps averages over many estimates unbiased by the clipping;
    ``value`` is still clipped at 0 and ``raw_value`` holds the unclipped total.
    """
    w = _as_2d(w_samples, "w_samples")
    x = _as_2d(x_samples, "x_samples")
    y = np.asarray(y_labels).reshape(-1)
    n = w.shape[0]
    if x.shape[0] != n or y.size != n:
        raise ValueError("w, x and y must align")
    pick = (lambda e: e.value) if clip else (lambda e: e.raw_value)
    wy = mixed_mi(y, w, k=k)
    comps: dict = {"I(W;Y)": pick(wy)}
    total = comps["I(W;Y)"]
    for label in (0, 1):
        mask = y == label
        p = float(mask.mean())
        comps[f"P(Y={label})"] = p
        cnt = int(mask.sum())
        if cnt >= k + 2:
            cond = pick(ksg_mi(w[mask], x[mask], k=k))
        else:
            if cnt:
                warnings.warn(f"only {cnt} draws with Y={label}; conditional term set to 0", RuntimeWarning, stacklevel=2)
            cond = 0.0
        comps[f"I(W;X|Y={label})"] = cond
        total += p * cond
    other = set(np.unique(y).tolist()) - {0, 1, 0.0, 1.0}
    if other:
        raise ValueError(f"labels must be binary, found {sorted(other)}")
    flags = ("clipped",) if total < 0 else ()
    return MiEstimate(max(total, 0.0), "chain_rule", k, n, seed, components=comps, raw_value=total, flags=flags)


def recombine(components: dict) -> float:
    """I(W;Y) + P(Y=0) I(W;X|Y=0) + P(Y=1) I(W;X|Y=1)."""
    return (
        components["I(W;Y)"]
        + components["P(Y=0)"] * components["I(W;X|Y=0)"]
        + components["P(Y=1)"] * components["I(W;X|Y=1)"]
    )


def _equal_frequency_bins(v: np.ndarray, bins: int) -> np.ndarray:
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size, dtype=np.int64)
    ranks[order] = np.arange(v.size)
    return ranks * bins // v.size


def histogram_mi(x_samples, y_samples, bins: int = 8, seed: int | None = None) -> MiEstimate:
    """Plug-in MI of the joint histogram on equal-frequency bins (ties split by index)."""
    if bins < 2:
        raise ValueError("bins must be >= 2")
    x = np.asarray(x_samples, dtype=float).reshape(-1)
    y = np.asarray(y_samples, dtype=float).reshape(-1)
    if x.size != y.size or x.size == 0:
        raise ValueError("x and y must be non-empty and aligned")
    n = x.size
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        warnings.warn("constant axis: mutual information is 0", RuntimeWarning, stacklevel=2)
        return MiEstimate(0.0, "histogram", None, n, seed, raw_value=0.0, flags=("degenerate_axis",))
    bx = _equal_frequency_bins(x, bins)
    by = _equal_frequency_bins(y, bins)
    joint = np.zeros((bins, bins))
    np.add.at(joint, (bx, by), 1.0)
    pxy = joint / n
    px = pxy.sum(axis=1, keepdims=True)
    py = pxy.sum(axis=0, keepdims=True)
    nz = pxy > 0
    value = float(np.sum(pxy[nz] * np.log(pxy[nz] / (px @ py)[nz])))
    occupied = int(nz.sum())
    bias = (occupied - int((px > 0).sum()) - int((py > 0).sum()) + 1) / (2 * n)
    flags = ("saturated",) if value >= 0.9 * math.log(bins) else ()
    return MiEstimate(value, "histogram", None, n, seed, raw_value=value, flags=flags,
                      diagnostics={"bins": bins, "miller_madow_bias": bias})

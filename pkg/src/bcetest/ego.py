"""Response-surface maximization of expensive black-box p-value maps.

A Gaussian-process interpolator with a squared-exponential kernel serves
as the surrogate; candidate points are chosen by expected improvement,
mixed with occasional uniform draws.  For the testing problem the search
halts as soon as any evaluation clears the significance level, since a
single surviving parameter point settles the decision.
"""

from __future__ import annotations

import warnings as _warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.stats import norm

from .games import DomainError, SolverError


@dataclass(frozen=True)
class GPModel:
    """Interpolating GP: constant GLS mean plus a correlated residual field."""

    points: np.ndarray
    values: np.ndarray
    beta_scales: np.ndarray
    mu_hat: float
    var_hat: float
    corr_chol: np.ndarray
    nugget: float
    _alpha: np.ndarray      # R^{-1} (Y - mu 1)
    _rinv_ones: np.ndarray  # R^{-1} 1

    @property
    def size(self) -> int:
        return self.points.shape[0]


def _corr(points_a, points_b, beta_scales):
    d2 = np.zeros((points_a.shape[0], points_b.shape[0]))
    for h, bh in enumerate(beta_scales):
        d2 += np.subtract.outer(points_a[:, h], points_b[:, h]) ** 2 / bh
    return np.exp(-d2)


def fit_gp(points, values, beta_scales, nugget: float = 1e-10) -> GPModel:
    """Feasible-GLS fit of the constant mean and the process variance.

    Duplicate evaluation points (within 1e-12) are collapsed with a
    warning; the nugget escalates by factors of ten (up to 1e-6) if the
    correlation matrix is not numerically positive definite.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    vals = np.asarray(values, dtype=float).ravel()
    if pts.shape[0] != vals.size or pts.shape[0] < 2:
        raise DomainError("need at least two matching evaluation points")
    keep = []
    for i in range(pts.shape[0]):
        if any(np.max(np.abs(pts[i] - pts[j])) < 1e-12 for j in keep):
            _warnings.warn("duplicate GP evaluation point dropped")
            continue
        keep.append(i)
    pts, vals = pts[keep], vals[keep]
    beta_scales = np.asarray(beta_scales, dtype=float).ravel()
    if beta_scales.size != pts.shape[1] or np.any(beta_scales <= 0):
        raise DomainError("need one positive kernel scale per dimension")

    R = _corr(pts, pts, beta_scales)
    L = pts.shape[0]
    delta = nugget
    while True:
        try:
            chol = np.linalg.cholesky(R + delta * np.eye(L))
            break
        except np.linalg.LinAlgError:
            delta *= 10
            if delta > 1e-6:
                raise SolverError("correlation matrix is not positive definite "
                                  "even with the maximum nugget") from None
    ones = np.ones(L)
    rinv_ones = cho_solve((chol, True), ones)
    rinv_y = cho_solve((chol, True), vals)
    mu = float(ones @ rinv_y) / float(ones @ rinv_ones)
    resid = vals - mu
    var = float(resid @ cho_solve((chol, True), resid)) / L
    return GPModel(points=pts, values=vals, beta_scales=beta_scales, mu_hat=mu,
                   var_hat=max(var, 0.0), corr_chol=chol, nugget=delta,
                   _alpha=cho_solve((chol, True), resid), _rinv_ones=rinv_ones)


def predict(gp: GPModel, theta) -> tuple[float, float]:
    """Best linear predictor and its variance at theta.

    At a stored evaluation point the correlation vector includes the
    nugget, so the predictor reproduces the observed value to rounding.
    """
    th = np.atleast_2d(np.asarray(theta, dtype=float))
    r = _corr(th, gp.points, gp.beta_scales).ravel()
    exact = np.max(np.abs(gp.points - th), axis=1) == 0.0
    r[exact] += gp.nugget
    mean = gp.mu_hat + float(r @ gp._alpha)
    rinv_r = cho_solve((gp.corr_chol, True), r)
    ones = np.ones(gp.size)
    s2 = 1.0 - float(r @ rinv_r)
    s2 += (1.0 - float(ones @ rinv_r)) ** 2 / float(ones @ gp._rinv_ones)
    return mean, gp.var_hat * max(s2, 0.0)


def expected_improvement(gp: GPModel, theta, incumbent: float) -> float:
    """EI of evaluating theta against the incumbent best value."""
    mean, var = predict(gp, theta)
    s = np.sqrt(max(var, 0.0))
    gap = mean - incumbent
    if s <= 1e-14:
        return max(gap, 0.0)
    z = gap / s
    return float(gap * norm.cdf(z) + s * norm.pdf(z))


def _profile_ml_scales(pts, vals, widths, nugget):
    """Concentrated log-likelihood over a log-grid of shared scale multipliers."""
    best, best_ll = None, -np.inf
    L = pts.shape[0]
    for s in np.logspace(-2, 2, 17):
        scales = s * widths ** 2
        gp = fit_gp(pts, vals, scales, nugget)
        var = max(gp.var_hat, 1e-300)
        ll = -0.5 * (L * np.log(var) + 2 * np.sum(np.log(np.diag(gp.corr_chol))))
        if ll > best_ll:
            best_ll, best = ll, scales
    return best


def _maximize_ei(gp, incumbent, lo, hi, rng, num_starts: int = 100):
    """Multi-start coordinate pattern search of the EI surface."""
    width = hi - lo
    best_theta, best_ei = None, -np.inf
    starts = lo + rng.random((num_starts, lo.size)) * width
    for theta in starts:
        theta = theta.copy()
        val = expected_improvement(gp, theta, incumbent)
        step = 0.25
        while step > 1e-4:
            moved = False
            for h in range(lo.size):
                for sgn in (1.0, -1.0):
                    cand = theta.copy()
                    cand[h] = np.clip(cand[h] + sgn * step * width[h], lo[h], hi[h])
                    v = expected_improvement(gp, cand, incumbent)
                    if v > val:
                        theta, val, moved = cand, v, True
            if not moved:
                step *= 0.5
        if val > best_ei:
            best_ei, best_theta = val, theta
    return best_theta, best_ei


def maximize_pvalue(pfun: Callable, domain, budget: int, alpha: float,
                    epsilon: float = 0.1, rng=None, init_points: int | None = None,
                    trace: list | None = None):
    """Surrogate-guided search for a parameter point with p above alpha.

    Runs a uniform initial design, then alternates expected-improvement
    proposals (probability 1 - epsilon) with uniform exploration draws;
    kernel scales are re-estimated by profile likelihood every five
    iterations.  Halts early once the incumbent exceeds alpha (the test
    decision is then settled); otherwise returns the best point found.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    lo = np.asarray(domain[0], dtype=float)
    hi = np.asarray(domain[1], dtype=float)
    d = lo.size
    width = hi - lo
    k = init_points if init_points is not None else 10 * d
    if budget < max(k, 2):
        raise DomainError("budget must cover the initial design")

    pts, vals = [], []

    def record(theta, p, ei=np.nan, resid=np.nan):
        if trace is not None:
            trace.append({"iteration": len(vals), "theta": np.asarray(theta).tolist(),
                          "p": p, "incumbent": max(vals), "ei": ei,
                          "interp_residual": resid})

    for _ in range(min(k, budget)):
        theta = lo + rng.random(d) * width
        p = float(pfun(theta))
        pts.append(theta)
        vals.append(p)
        record(theta, p)
        if p > alpha:
            i = int(np.argmax(vals))
            return np.asarray(pts[i]), vals[i], True

    scales = (0.5 * width) ** 2
    it = 0
    while len(vals) < budget:
        if it % 5 == 0:
            scales = _profile_ml_scales(np.asarray(pts), np.asarray(vals), width, 1e-10)
        it += 1
        gp = fit_gp(pts, vals, scales)
        resid = float(np.max(np.abs(
            [predict(gp, q)[0] - y for q, y in zip(gp.points, gp.values)])))
        incumbent = max(vals)
        if rng.random() < 1.0 - epsilon:
            theta, ei = _maximize_ei(gp, incumbent, lo, hi, rng)
        else:
            theta, ei = lo + rng.random(d) * width, np.nan
        p = float(pfun(theta))
        pts.append(theta)
        vals.append(p)
        record(theta, p, ei, resid)
        if p > alpha:
            i = int(np.argmax(vals))
            return np.asarray(pts[i]), vals[i], True
    i = int(np.argmax(vals))
    return np.asarray(pts[i]), vals[i], False


class CIEndpoint(NamedTuple):
    value: float
    theta: np.ndarray | None
    feasible: bool


def ci_endpoint(pfun: Callable, domain, coordinate: int, direction: str, alpha: float,
                budget: int, rng=None, init_points: int | None = None) -> CIEndpoint:
    """Extremal coordinate value over the surrogate-modeled region {p >= alpha}.

    Candidates are ranked by the coordinate objective penalized by the
    predicted violation probability Phi((alpha - m)/s); the reported
    endpoint is the best coordinate among points whose evaluated p-value
    is actually feasible.  An infeasible flag signals an empty interval.
    """
    if direction not in ("max", "min"):
        raise DomainError("direction must be 'max' or 'min'")
    rng = np.random.default_rng(0) if rng is None else rng
    lo = np.asarray(domain[0], dtype=float)
    hi = np.asarray(domain[1], dtype=float)
    d = lo.size
    j = int(coordinate)
    if not 0 <= j < d:
        raise DomainError("coordinate out of range")
    sign = 1.0 if direction == "max" else -1.0
    width = hi - lo
    bound = hi[j] if direction == "max" else lo[j]

    pts, vals = [], []

    def feasible_best():
        cand = [(sign * th[j], i) for i, (th, p) in enumerate(zip(pts, vals)) if p >= alpha]
        if not cand:
            return None
        return pts[max(cand)[1]]

    k = init_points if init_points is not None else 10 * d
    for _ in range(min(k, budget)):
        theta = lo + rng.random(d) * width
        pts.append(theta)
        vals.append(float(pfun(theta)))

    scales = (0.5 * width) ** 2
    while len(vals) < budget:
        gp = fit_gp(pts, vals, scales)
        cands = [lo + rng.random(d) * width for _ in range(300)]
        anchor = feasible_best()
        if anchor is not None:
            for frac in np.linspace(0.1, 1.0, 10):
                push = anchor.copy()
                push[j] = anchor[j] + frac * (bound - anchor[j])
                cands.append(push)
            for spread in (0.02, 0.08, 0.2):
                for _ in range(10):
                    jit = np.clip(anchor + spread * width * rng.standard_normal(d), lo, hi)
                    cands.append(jit)
            # bisect toward the frontier against infeasible points ahead of the anchor
            ahead = [th for th, p in zip(pts, vals)
                     if p < alpha and sign * th[j] > sign * anchor[j]]
            ahead.sort(key=lambda th: sign * th[j])
            for th in ahead[:10]:
                cands.append(0.5 * (anchor + th))

        def score(theta):
            m, var = predict(gp, theta)
            s = np.sqrt(max(var, 0.0))
            if s <= 1e-14:
                viol = 0.0 if m >= alpha else 1.0
            else:
                viol = norm.cdf((alpha - m) / s)
            return sign * theta[j] - width[j] * viol

        seen = np.asarray(pts)
        fresh = [c for c in cands
                 if np.min(np.max(np.abs(seen - c), axis=1)) > 1e-10]
        if not fresh:
            break
        theta = max(fresh, key=score)
        pts.append(theta)
        vals.append(float(pfun(theta)))

    anchor = feasible_best()
    if anchor is None:
        return CIEndpoint(value=np.nan, theta=None, feasible=False)
    return CIEndpoint(value=float(anchor[j]), theta=anchor, feasible=True)

"""Simulation environment: private signals about a two-state payoff component.

Each player's payoff type splits as eps_i = nu_i + eps-noise with
nu_i in {-eta, +eta}; besides the own type, player i sees a signal of
quality xi about the opponent's state.  Bayesian Nash equilibria are
threshold rules in the own type, with thresholds solving a four-equation
symmetric fixed point.  At xi = 1 the states are effectively public, which
is the null of the size/power experiments; as xi drops to 1/2 the
environment degrades to pure incomplete information.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from .bootstrap import TestConfig, ThetaDomain, test_null
from .data import MarketDataset
from .games import (
    DiscretizedGame,
    DomainError,
    GameSpec,
    InfoPartition,
    PayoffSpec,
    PriorPMF,
    SolverError,
    ThetaMap,
    TypeDist,
    TypeGrid,
    baseline_partition,
)


@dataclass(frozen=True)
class SignalDGP:
    """Two-player entry DGP with signals about the opponent's discrete state."""

    beta: float = 0.5
    M: float = 1.0
    delta: float = -2.0
    eta: float = 1.5
    mu: float = 0.5
    xi: float = 1.0

    def __post_init__(self):
        if not 0.5 <= self.xi <= 1.0:
            raise DomainError("signal quality xi must lie in [0.5, 1]")
        if self.eta <= 0:
            raise DomainError("eta must be positive")
        if not 0.0 <= self.mu <= 1.0:
            raise DomainError("mu must lie in [0, 1]")

    @property
    def covariates(self) -> tuple[float, float]:
        return (-self.M, self.M)


class PosteriorRho(NamedTuple):
    rho_eta: float
    rho_neg_eta: float
    degenerate: bool


def posterior_rho(mu: float, xi: float) -> PosteriorRho:
    """Posterior of the opponent's state given a matching signal.

    rho_eta = P(nu_{-i} = eta | t_i = eta) and symmetrically for -eta.
    Degenerate priors make one branch conditioned on a zero-probability
    signal; the limit value is returned with a flag.
    """
    if not (0.0 <= mu <= 1.0 and 0.5 <= xi <= 1.0):
        raise DomainError("need mu in [0,1] and xi in [0.5,1]")
    num_e, den_e = mu * xi, mu * xi + (1 - mu) * (1 - xi)
    num_n, den_n = (1 - mu) * xi, (1 - mu) * xi + mu * (1 - xi)
    degenerate = den_e == 0.0 or den_n == 0.0
    rho_e = num_e / den_e if den_e > 0 else (1.0 if mu == 1.0 else 0.0)
    rho_n = num_n / den_n if den_n > 0 else (1.0 if mu == 0.0 else 0.0)
    return PosteriorRho(rho_e, rho_n, degenerate)


def _psi(v):
    return norm.sf(v)


@dataclass(frozen=True)
class ThresholdTable:
    """Symmetric-equilibrium entry thresholds tau(nu, t), states x signals.

    Row index 0 is state +eta, 1 is state -eta; columns likewise for the
    signal.  ``residual`` is the sup-norm defect of the fixed point.
    """

    tau: np.ndarray
    x: float
    residual: float
    multiplicity_flag: bool = False

    def value(self, nu: float, t: float) -> float:
        return float(self.tau[0 if nu > 0 else 1, 0 if t > 0 else 1])


def _fixed_point_map(dgp: SignalDGP, x: float):
    rho = posterior_rho(dgp.mu, dgp.xi)
    xb = dgp.beta * x
    xi, dlt, eta = dgp.xi, dgp.delta, dgp.eta
    states = (eta, -eta)

    def F(tau):
        psi = _psi(tau)

        def e_given_t(t_idx, own_second):
            # E over the opponent state of Psi(tau(state, own_second)) given t_i
            col = 0 if own_second > 0 else 1
            r = rho.rho_eta if t_idx == 0 else rho.rho_neg_eta
            top, bot = psi[0, col], psi[1, col]
            return r * top + (1 - r) * bot if t_idx == 0 else r * bot + (1 - r) * top

        out = np.empty((2, 2))
        for a, nu in enumerate(states):
            for b in range(2):
                q = xi * e_given_t(b, nu) + (1 - xi) * e_given_t(b, -nu)
                out[a, b] = -(xb + dlt * q + nu)
        return out

    return F


def solve_thresholds(dgp: SignalDGP, x: float, tol: float = 1e-13,
                     max_iter: int = 10_000, check_multiplicity: bool = False,
                     rng=None) -> ThresholdTable:
    """Damped iteration for the symmetric threshold fixed point.

    Starts from tau = 0 with damping 0.5; the damping halves whenever the
    iteration error grows (oscillation).  A final undamped application of
    the map is kept when it does not worsen the residual, which makes
    interaction-free cases land exactly on the closed form.
    """
    F = _fixed_point_map(dgp, x)

    def iterate(tau0):
        tau, damp, prev_err = tau0, 0.5, np.inf
        for _ in range(max_iter):
            new = (1 - damp) * tau + damp * F(tau)
            err = float(np.max(np.abs(new - tau)))
            tau = new
            if err == 0.0 or err < tol:
                break
            if err > prev_err:
                damp = max(0.05, 0.5 * damp)
            prev_err = err
        else:
            raise SolverError(f"threshold iteration did not converge (err={err:.3e})")
        cand = F(tau)
        if np.max(np.abs(F(cand) - cand)) <= np.max(np.abs(cand - tau)):
            tau = cand
        return tau

    tau = iterate(np.zeros((2, 2)))
    residual = float(np.max(np.abs(F(tau) - tau)))
    flag = False
    if check_multiplicity:
        rng = np.random.default_rng(0) if rng is None else rng
        for _ in range(8):
            other = iterate(rng.uniform(-5, 5, size=(2, 2)))
            if np.max(np.abs(other - tau)) > 1e-6:
                flag = True
                break
    return ThresholdTable(tau=tau, x=float(x), residual=residual,
                          multiplicity_flag=flag)


def equilibrium_ccp(dgp: SignalDGP, x: float, thresholds: ThresholdTable | None = None,
                    law: str = "signal-integrated") -> np.ndarray:
    """Equilibrium outcome distribution over {0,1}^2 (C order: (0,0),(0,1),(1,0),(1,1)).

    'signal-integrated' (default) conditions on the joint state (nu_1, nu_2):
    signals are independent across players given the states, so actions are
    conditionally independent with per-player entry probabilities mixing
    over the own signal.  'display-literal' instead uses per-player entry
    probabilities that depend on the own state only, ignoring the
    correlation between the signal and the opponent's state.
    """
    tab = thresholds if thresholds is not None else solve_thresholds(dgp, x)
    xi, mu = dgp.xi, dgp.mu
    psi = _psi(tab.tau)
    p_state = np.array([mu, 1 - mu])
    q = np.zeros(4)
    if law == "signal-integrated":
        for a in range(2):          # own state index of player 1
            for b in range(2):      # own state index of player 2
                # player 1's signal reveals state b, player 2's reveals a
                p1 = xi * psi[a, b] + (1 - xi) * psi[a, 1 - b]
                p2 = xi * psi[b, a] + (1 - xi) * psi[b, 1 - a]
                w = p_state[a] * p_state[b]
                for y1 in (0, 1):
                    for y2 in (0, 1):
                        q[2 * y1 + y2] += (w * (p1 if y1 else 1 - p1)
                                           * (p2 if y2 else 1 - p2))
    elif law == "display-literal":
        p_lit = np.array([xi * psi[a, a] + (1 - xi) * psi[a, 1 - a] for a in range(2)])
        for a in range(2):
            for b in range(2):
                w = p_state[a] * p_state[b]
                p1, p2 = p_lit[a], p_lit[b]
                for y1 in (0, 1):
                    for y2 in (0, 1):
                        q[2 * y1 + y2] += (w * (p1 if y1 else 1 - p1)
                                           * (p2 if y2 else 1 - p2))
    else:
        raise DomainError(f"unknown CCP law {law!r}")
    return q


def closed_form_incomplete_ccp(delta1: float, delta2: float) -> float:
    """Probability of outcome (1,0) in the uniform-type incomplete-information game.

    Published closed form (1+d2)/((2+d1)(2+d2)); it coincides with the
    solved threshold equilibrium on the symmetric diagonal d1 = d2.
    """
    if not (0 < delta1 <= 1 and 0 < delta2 <= 1):
        raise DomainError("interaction parameters must lie in (0, 1]")
    return (1 + delta2) / ((2 + delta1) * (2 + delta2))


def uniform_incomplete_bne(delta1: float, delta2: float) -> tuple[np.ndarray, np.ndarray]:
    """Threshold BNE of the uniform(-1,1) game with payoffs y_i(eps_i - d_i y_-i).

    Returns (entry probabilities, thresholds); entry is a threshold rule
    eps_i >= d_i * P(opponent enters), and with independent uniform types
    the fixed point is linear.
    """
    d = np.array([delta1, delta2], dtype=float)
    p1 = (2 - d[0]) / (4 - d[0] * d[1])
    p2 = (2 - d[1]) / (4 - d[0] * d[1])
    p = np.array([p1, p2])
    return p, d * p[::-1]


def uniform_incomplete_ccp(delta1: float, delta2: float) -> np.ndarray:
    """Full outcome distribution of the uniform-game threshold BNE (C order)."""
    p, _ = uniform_incomplete_bne(delta1, delta2)
    q = np.array([(1 - p[0]) * (1 - p[1]), (1 - p[0]) * p[1],
                  p[0] * (1 - p[1]), p[0] * p[1]])
    return q


def incomplete_info_ccp(dgp: SignalDGP, x: float) -> np.ndarray:
    """Independent benchmark: the xi = 1/2 game solved by a scalar fixed point.

    With uninformative signals each player conditions on the own state
    only, so the mean entry probability solves a one-dimensional equation
    (root-finding, independent of the four-equation system).
    """
    xb = dgp.beta * x

    def mean_entry(p):
        return (dgp.mu * _psi(-(xb + dgp.delta * p + dgp.eta))
                + (1 - dgp.mu) * _psi(-(xb + dgp.delta * p - dgp.eta)))

    p_bar = brentq(lambda p: mean_entry(p) - p, 0.0, 1.0, xtol=1e-14)
    p_by_state = np.array([_psi(-(xb + dgp.delta * p_bar + dgp.eta)),
                           _psi(-(xb + dgp.delta * p_bar - dgp.eta))])
    w = np.array([dgp.mu, 1 - dgp.mu])
    q = np.zeros(4)
    for a in range(2):
        for b in range(2):
            p1, p2 = p_by_state[a], p_by_state[b]
            q[0] += w[a] * w[b] * (1 - p1) * (1 - p2)
            q[1] += w[a] * w[b] * (1 - p1) * p2
            q[2] += w[a] * w[b] * p1 * (1 - p2)
            q[3] += w[a] * w[b] * p1 * p2
    return q


def build_signal_game(dgp: SignalDGP, eps_points: int = 6,
                      theta_entries: tuple[str, ...] = ("delta_all",),
                      ) -> tuple[DiscretizedGame, InfoPartition]:
    """Discretize the signal environment and its public-information baseline.

    Per player, the grid is the product of the two states with a midpoint
    quantile grid on the continuous noise; each point carries mass
    P(state)/r.  The public baseline reveals the opponent's state label,
    so a cell fixes (own grid point, opponent state sign).
    """
    if eps_points < 2:
        raise DomainError("need at least two noise grid points per state")
    levels = (np.arange(eps_points) + 0.5) / eps_points
    noise = norm.ppf(levels)
    vals, labs, mass = [], [], []
    for s, w in ((dgp.eta, dgp.mu), (-dgp.eta, 1 - dgp.mu)):
        for v in noise:
            vals.append(s + v)
            labs.append(1 if s > 0 else -1)
            mass.append(w / eps_points)
    order = np.argsort(vals)
    vals = np.asarray(vals)[order]
    labs = [labs[i] for i in order]
    mass = np.asarray(mass)[order]
    if np.any(np.diff(vals) <= 0):
        raise DomainError("state separation makes grid points collide; change eps_points")

    dist = TypeDist("normal-mixture", eta=dgp.eta, mu=dgp.mu)
    lev = dist.cdf(vals)
    grid = TypeGrid((vals, vals.copy()), (lev, lev.copy()))
    joint = np.multiply.outer(mass, mass).ravel()
    prior = PriorPMF(joint / joint.sum(), copula_corr=0.0)
    spec = GameSpec(
        num_players=2, actions_per_player=(2, 2),
        payoff=PayoffSpec(beta=[dgp.beta], delta=[[0.0, dgp.delta], [dgp.delta, 0.0]],
                          interaction_sign=1),
        type_dist=dist,
        covariate_support=((-dgp.M,), (dgp.M,)),
        theta_map=ThetaMap(tuple(theta_entries)),
    )
    game = DiscretizedGame(spec, grid, prior)
    partition = baseline_partition("public", grid, disclose=[labs, list(labs)])
    return game, partition


def simulate_dataset(dgp: SignalDGP, n: int, rng,
                     law: str = "signal-integrated") -> MarketDataset:
    """n markets: x uniform on {-M, M}, outcomes from the equilibrium CCP."""
    if n < 1:
        raise DomainError("need at least one market")
    ccps = [equilibrium_ccp(dgp, x, law=law) for x in dgp.covariates]
    cell_probs = np.concatenate([0.5 * c for c in ccps])  # (x, y) blocks
    draw = rng.multinomial(n, cell_probs).reshape(2, 4).T
    return MarketDataset(counts=draw, covariate_labels=(f"{-dgp.M:g}", f"{dgp.M:g}"))


@dataclass(frozen=True)
class PowerConfig:
    """Design of the size/power experiment over signal qualities and supports."""

    base: SignalDGP = SignalDGP()
    xi_grid: tuple[float, ...] = (0.55, 0.7, 0.85, 1.0)
    M_list: tuple[float, ...] = (1.0,)
    n: int = 1000
    reps: int = 100
    alpha: float = 0.05
    bootstrap_draws: int = 299
    eps_points: int = 6
    theta_deltas: tuple[float, ...] = (-3.0, -2.5, -2.0, -1.5, -1.0)
    seed: int = 0
    n_jobs: int | None = None
    law: str = "signal-integrated"

    def __post_init__(self):
        if self.reps < 1:
            raise DomainError("need at least one replication")


def _limit_threads():
    # worker processes each get one core; nested BLAS threads only thrash
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(1)
    except ImportError:
        pass


def _power_rep(args):
    (dgp, n, alpha, bootstrap_draws, eps_points, theta_deltas, law, seed) = args
    game, partition = build_signal_game(dgp, eps_points)
    data = simulate_dataset(dgp, n, np.random.default_rng(np.random.SeedSequence(seed)),
                            law=law)
    lo, hi = min(theta_deltas), max(theta_deltas)
    config = TestConfig(
        theta_domain=ThetaDomain((lo,), (hi,), points=tuple((d,) for d in theta_deltas)),
        alpha=alpha, bootstrap_draws=bootstrap_draws, seed=seed,
    )
    return test_null(game, partition, data, config).rejected


def power_experiment(cfg: PowerConfig, progress=None) -> list[dict]:
    """Rejection-rate table over the (xi, M) design.

    Each cell simulates ``reps`` datasets under the signal DGP and runs the
    level-alpha test against the public-information baseline; rows carry
    the rejection rate and its Monte-Carlo standard error.
    """
    if cfg.reps < 50:
        raise DomainError("power experiments need at least 50 replications")
    jobs = []
    for xi in cfg.xi_grid:
        for M in cfg.M_list:
            dgp = replace(cfg.base, xi=xi, M=M)
            for rep in range(cfg.reps):
                seed = (cfg.seed, round(xi * 1e6), round(M * 1e6), rep)
                jobs.append(((xi, M), (dgp, cfg.n, cfg.alpha, cfg.bootstrap_draws,
                                       cfg.eps_points, cfg.theta_deltas, cfg.law,
                                       seed)))
    n_jobs = cfg.n_jobs or os.cpu_count() or 1
    results: dict[tuple, list[bool]] = {}
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs, initializer=_limit_threads) as pool:
            for (key, _), rejected in zip(jobs, pool.map(_power_rep,
                                                         [j[1] for j in jobs],
                                                         chunksize=1)):
                results.setdefault(key, []).append(rejected)
                if progress:
                    progress(key, len(results[key]))
    else:
        for key, payload in jobs:
            results.setdefault(key, []).append(_power_rep(payload))
            if progress:
                progress(key, len(results[key]))
    rows = []
    for xi in cfg.xi_grid:
        for M in cfg.M_list:
            flags = results[(xi, M)]
            rate = float(np.mean(flags))
            rows.append({"xi": xi, "M": M, "rejection_rate": rate,
                         "mc_se": float(np.sqrt(rate * (1 - rate) / len(flags))),
                         "reps": len(flags)})
    return rows

"""Parametric discrete games with discretized payoff types.

A game couples a payoff structure (linear in covariates, opponents'
actions, and the own payoff type) with a finite grid over the payoff-type
space and a prior mass function on that grid.  Baseline information is
represented by per-player partitions of the joint type grid: a partition
cell is one signal realization, and finer partitions mean better-informed
players.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import norm


class DomainError(ValueError):
    """Invalid argument outside the documented domain of an operation."""


class CapacityError(RuntimeError):
    """Instance too large for an operation meant for small problems."""


class SolverError(RuntimeError):
    """A numerical solver failed to produce a certified answer."""


def _readonly(a):
    arr = np.ascontiguousarray(a)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class PayoffSpec:
    """Linear entry-game payoffs: y_i * (x'beta + sign * sum_j delta[i,j] y_j + eps_i).

    ``delta`` has one row per player (own interaction coefficients, zero
    diagonal).  ``interaction_sign`` switches between the +delta and the
    -delta parameterizations used in different normalizations.
    """

    beta: np.ndarray
    delta: np.ndarray
    interaction_sign: int = 1

    def __post_init__(self):
        beta = _readonly(np.atleast_1d(np.asarray(self.beta, dtype=float)))
        delta = _readonly(np.atleast_2d(np.asarray(self.delta, dtype=float)))
        if delta.shape[0] != delta.shape[1]:
            raise DomainError("delta must be square")
        if not np.all(np.diag(delta) == 0.0):
            raise DomainError("delta must have a zero diagonal")
        if self.interaction_sign not in (-1, 1):
            raise DomainError("interaction_sign must be +1 or -1")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "delta", delta)


@dataclass(frozen=True)
class TypeDist:
    """Per-player marginal of the payoff type.

    'standard-normal', 'uniform' on (lo, hi), or 'normal-mixture': a unit
    normal shifted by +/- eta with mixing weight mu on the high state (the
    marginal of the two-state signal environment).
    """

    kind: str
    lo: float = -1.0
    hi: float = 1.0
    eta: float = 1.0
    mu: float = 0.5

    def __post_init__(self):
        if self.kind not in ("standard-normal", "uniform", "normal-mixture"):
            raise DomainError(f"unsupported type distribution {self.kind!r}")
        if self.kind == "uniform" and not self.lo < self.hi:
            raise DomainError("uniform bounds must satisfy lo < hi")
        if self.kind == "normal-mixture" and not (self.eta > 0 and 0 <= self.mu <= 1):
            raise DomainError("mixture needs eta > 0 and mu in [0, 1]")

    def cdf(self, v):
        v = np.asarray(v, dtype=float)
        if self.kind == "standard-normal":
            return norm.cdf(v)
        if self.kind == "uniform":
            return np.clip((v - self.lo) / (self.hi - self.lo), 0.0, 1.0)
        return self.mu * norm.cdf(v - self.eta) + (1 - self.mu) * norm.cdf(v + self.eta)

    def ppf(self, u):
        if self.kind == "standard-normal":
            return norm.ppf(u)
        if self.kind == "uniform":
            return self.lo + (self.hi - self.lo) * np.asarray(u, dtype=float)
        from scipy.optimize import brentq

        u = np.atleast_1d(np.asarray(u, dtype=float))
        out = np.array([brentq(lambda v, t=t: self.cdf(v) - t,
                               -10 - self.eta, 10 + self.eta, xtol=1e-13)
                        for t in u])
        return out if out.size > 1 else float(out[0])


@dataclass(frozen=True)
class ThetaMap:
    """Maps a flat parameter vector onto payoff/prior fields.

    Each entry is one of ``beta[k]``, ``delta[i,j]``, ``delta_row[i]``
    (ties all of player i's off-diagonal interaction terms), ``delta_all``
    (one shared interaction), or ``rho`` (prior copula correlation).
    """

    entries: tuple[str, ...]

    @property
    def dim(self) -> int:
        return len(self.entries)

    def apply(self, payoff: PayoffSpec, rho: float, theta) -> tuple[PayoffSpec, float]:
        theta = np.asarray(theta, dtype=float).ravel()
        if theta.size != self.dim:
            raise DomainError(f"theta has length {theta.size}, expected {self.dim}")
        beta = payoff.beta.copy()
        delta = payoff.delta.copy()
        n = delta.shape[0]
        for name, val in zip(self.entries, theta):
            if name.startswith("beta["):
                beta[int(name[5:-1])] = val
            elif name.startswith("delta_row["):
                i = int(name[10:-1])
                delta[i, :] = val
                delta[i, i] = 0.0
            elif name == "delta_all":
                delta[:, :] = val
                np.fill_diagonal(delta, 0.0)
            elif name.startswith("delta["):
                i, j = (int(s) for s in name[6:-1].split(","))
                if i == j:
                    raise DomainError("cannot map theta onto the delta diagonal")
                delta[i, j] = val
            elif name == "rho":
                rho = float(val)
            else:
                raise DomainError(f"unknown theta entry {name!r}")
        return PayoffSpec(beta, delta, payoff.interaction_sign), rho


@dataclass(frozen=True)
class GameSpec:
    """Shape and parameterization of the discrete game.

    ``covariate_support`` is the finite list of covariate vectors; games
    are indexed by positions in this list.
    """

    num_players: int
    actions_per_player: tuple[int, ...]
    payoff: PayoffSpec
    type_dist: TypeDist
    covariate_support: tuple[tuple[float, ...], ...]
    theta_map: ThetaMap = field(default=None)

    def __post_init__(self):
        acts = tuple(int(a) for a in self.actions_per_player)
        if len(acts) != self.num_players or any(a < 1 for a in acts):
            raise DomainError("need one positive action count per player")
        if int(np.prod(acts)) < 2:
            raise DomainError("the outcome space must have at least two profiles")
        support = tuple(tuple(float(v) for v in x) for x in self.covariate_support)
        if not support:
            raise DomainError("covariate_support must be non-empty")
        if len(set(support)) != len(support):
            raise DomainError("covariate_support contains duplicates")
        object.__setattr__(self, "actions_per_player", acts)
        object.__setattr__(self, "covariate_support", support)
        if self.theta_map is None:
            object.__setattr__(self, "theta_map", ThetaMap(("delta_all",)))

    @property
    def num_outcomes(self) -> int:
        return int(np.prod(self.actions_per_player))

    def covariate(self, x_index: int) -> np.ndarray:
        return np.asarray(self.covariate_support[x_index], dtype=float)


@dataclass(frozen=True)
class TypeGrid:
    """Finite per-player grids over the payoff-type space.

    ``points[i]`` are strictly increasing type values for player i and
    ``quantile_levels[i]`` the (strictly increasing) marginal CDF levels
    they represent.  Joint grid points are indexed in C order (last
    player's coordinate varies fastest).
    """

    points: tuple[np.ndarray, ...]
    quantile_levels: tuple[np.ndarray, ...]

    def __post_init__(self):
        pts = tuple(_readonly(np.asarray(p, dtype=float)) for p in self.points)
        lev = tuple(_readonly(np.asarray(v, dtype=float)) for v in self.quantile_levels)
        if len(pts) != len(lev):
            raise DomainError("points and quantile_levels must align per player")
        for p, v in zip(pts, lev):
            if p.size != v.size:
                raise DomainError("points and levels differ in length")
            if p.size and not (np.all(np.diff(p) > 0) and np.all(np.diff(v) > 0)):
                raise DomainError("grid points and levels must be strictly increasing")
            if v.size and not (v[0] > 0.0 and v[-1] < 1.0):
                raise DomainError("quantile levels must lie in (0,1)")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "quantile_levels", lev)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(p.size for p in self.points)

    @property
    def total_size(self) -> int:
        return int(np.prod(self.shape))

    def coords(self) -> np.ndarray:
        """All joint grid points as a (total_size, num_players) array, C order."""
        mesh = np.meshgrid(*self.points, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def token(self) -> str:
        h = 0
        for p in self.points:
            h = hash((h, p.tobytes()))
        return f"grid{h & 0xFFFFFFFFFFFF:012x}"


@dataclass(frozen=True)
class PriorPMF:
    """Prior mass function on the joint type grid (C-order vector)."""

    masses: np.ndarray
    copula_corr: float = 0.0

    def __post_init__(self):
        m = _readonly(np.asarray(self.masses, dtype=float))
        if np.any(m < 0):
            raise DomainError("prior masses must be non-negative")
        if abs(m.sum() - 1.0) > 1e-12:
            raise DomainError("prior masses must sum to one")
        object.__setattr__(self, "masses", m)


@dataclass(frozen=True)
class InfoPartition:
    """Per-player partition of joint grid indices; one cell = one signal value.

    Every cell must fix the owner's own type coordinate, because obedience
    constraints condition jointly on the own payoff type and the signal.
    """

    grid_shape: tuple[int, ...]
    cells: tuple[tuple[tuple[int, ...], ...], ...]
    label: str = "custom"

    def __post_init__(self):
        shape = tuple(int(s) for s in self.grid_shape)
        total = int(np.prod(shape))
        own = np.array(np.unravel_index(np.arange(total), shape))
        norm_cells = []
        for i, player_cells in enumerate(self.cells):
            seen = np.zeros(total, dtype=bool)
            cleaned = []
            for cell in player_cells:
                idx = np.asarray(sorted(int(k) for k in cell), dtype=int)
                if idx.size == 0:
                    raise DomainError("empty partition cell")
                if np.any(idx < 0) or np.any(idx >= total) or np.any(seen[idx]):
                    raise DomainError("cells must partition the grid exactly once")
                seen[idx] = True
                if np.unique(own[i, idx]).size != 1:
                    raise DomainError(
                        "cell mixes own-type coordinates; signals must refine the own type"
                    )
                cleaned.append(tuple(int(k) for k in idx))
            if not seen.all():
                raise DomainError("cells do not cover the grid")
            norm_cells.append(tuple(cleaned))
        object.__setattr__(self, "grid_shape", shape)
        object.__setattr__(self, "cells", tuple(norm_cells))

    @property
    def num_players(self) -> int:
        return len(self.cells)

    def cell_ids(self, i: int) -> np.ndarray:
        """Cell index of each joint grid point for player i."""
        total = int(np.prod(self.grid_shape))
        out = np.empty(total, dtype=int)
        for c, cell in enumerate(self.cells[i]):
            out[list(cell)] = c
        return out

    def token(self) -> str:
        return f"{self.label}:{hash(self.cells) & 0xFFFFFFFFFFFF:012x}"


@dataclass(frozen=True)
class DiscretizedGame:
    """A GameSpec together with its type grid and prior."""

    spec: GameSpec
    grid: TypeGrid
    prior: PriorPMF

    def __post_init__(self):
        if len(self.grid.points) != self.spec.num_players:
            raise DomainError("grid does not match the number of players")
        if self.prior.masses.size != self.grid.total_size:
            raise DomainError("prior length does not match the grid size")


def make_grid(game: GameSpec, r_per_player: Sequence[int], tail_augment: bool = False) -> TypeGrid:
    """Quantile-discretize each player's type marginal.

    Uses midpoint levels (k - 0.5)/r so the grid reaches into both tails as
    r grows; ``tail_augment`` additionally inserts the 0.01 and 0.99
    quantiles so extreme types are present even for small r.
    """
    r = [int(v) for v in r_per_player]
    if len(r) != game.num_players or any(v < 2 for v in r):
        raise DomainError("need r_i >= 2 for every player")
    points, levels = [], []
    for ri in r:
        lev = (np.arange(ri) + 0.5) / ri
        if tail_augment:
            lev = np.unique(np.concatenate([[0.01], lev, [0.99]]))
        pts = game.type_dist.ppf(lev)
        if not np.all(np.isfinite(pts)):
            raise SolverError("non-finite quantile in grid construction")
        points.append(pts)
        levels.append(lev)
    return TypeGrid(tuple(points), tuple(levels))


def _gauss_legendre(lo, hi, n):
    x, w = np.polynomial.legendre.leggauss(n)
    mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
    return mid + half * x, half * w


def _rect_prob_factor(lo_z, hi_z, rho, nodes=201, panels=8):
    """P(lo_z < Z <= hi_z) under an exchangeable Gaussian copula, rho >= 0.

    One-factor representation Z_i = sqrt(rho) F + sqrt(1-rho) xi_i reduces
    the rectangle probability to a smooth 1-D integral; composite
    Gauss-Legendre keeps the error far below 1e-10 deterministically.
    """
    sr, sc = np.sqrt(rho), np.sqrt(1.0 - rho)
    edges = np.linspace(-8.5, 8.5, panels + 1)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        f, w = _gauss_legendre(a, b, nodes)
        prod = norm.pdf(f)
        for lo, hi in zip(lo_z, hi_z):
            prod = prod * (norm.cdf((hi - sr * f) / sc) - norm.cdf((lo - sr * f) / sc))
        total += float(np.sum(w * prod))
    return total


def _rect_prob_bivariate(lo_z, hi_z, rho, nodes=201, panels=8):
    """Bivariate rectangle probability by conditioning on the first coordinate."""
    s = np.sqrt(1.0 - rho * rho)
    a = max(lo_z[0], -8.5)
    b = min(hi_z[0], 8.5)
    if b <= a:
        return 0.0
    total = 0.0
    edges = np.linspace(a, b, panels + 1)
    for e0, e1 in zip(edges[:-1], edges[1:]):
        z, w = _gauss_legendre(e0, e1, nodes)
        inner = norm.cdf((hi_z[1] - rho * z) / s) - norm.cdf((lo_z[1] - rho * z) / s)
        total += float(np.sum(w * norm.pdf(z) * inner))
    return total


def prior_pmf(grid: TypeGrid, rho: float) -> PriorPMF:
    """Discretized joint prior from an exchangeable Gaussian copula.

    Cell (k_1,...,k_N) receives the copula probability of the rectangle of
    quantile levels bounded by midpoints of adjacent grid levels (for the
    default midpoint grid these are exactly [k/r, (k+1)/r)).  Masses are
    renormalized to absorb quadrature error.
    """
    if not -1.0 < rho < 1.0:
        raise DomainError("copula correlation must lie in (-1, 1)")
    n = len(grid.points)
    bounds = []
    for lev in grid.quantile_levels:
        cuts = np.concatenate([[0.0], 0.5 * (lev[1:] + lev[:-1]), [1.0]])
        with np.errstate(divide="ignore"):
            bounds.append(norm.ppf(cuts))
    if rho == 0.0:
        margs = [np.diff(norm.cdf(b)) for b in bounds]
        masses = margs[0]
        for m in margs[1:]:
            masses = np.multiply.outer(masses, m)
        masses = masses.ravel()
    else:
        if rho < 0.0 and n > 2:
            raise DomainError("negative exchangeable correlation supported for two players only")
        masses = np.empty(grid.total_size)
        for flat, ks in enumerate(np.ndindex(*grid.shape)):
            lo = [bounds[i][k] for i, k in enumerate(ks)]
            hi = [bounds[i][k + 1] for i, k in enumerate(ks)]
            if rho >= 0.0:
                masses[flat] = _rect_prob_factor(lo, hi, rho)
            else:
                masses[flat] = _rect_prob_bivariate(lo, hi, rho)
    masses = np.clip(masses, 0.0, None)
    return PriorPMF(masses / masses.sum(), copula_corr=float(rho))


def payoff(spec: PayoffSpec, i: int, y: Sequence[int], eps_i: float, x: Sequence[float]) -> float:
    """Realized payoff of player i at action profile y, own type eps_i, covariates x."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != spec.beta.size:
        raise DomainError(f"covariate length {x.size} does not match beta length {spec.beta.size}")
    y = np.asarray(y)
    inter = float(spec.delta[i] @ y)  # diagonal is zero, so the own action drops out
    return float(y[i]) * (float(spec.beta @ x) + spec.interaction_sign * inter + float(eps_i))


def baseline_partition(kind: str, grid: TypeGrid, player: int | None = None,
                       disclose: Sequence[Sequence[object]] | None = None) -> InfoPartition:
    """Construct the standard baseline partitions on a type grid.

    kind:
      * ``incomplete`` (or ``null``): each player's cells group joint points
        by the own coordinate.  Null information coarser than the own type
        is not representable, because obedience conditions on the own type;
        it therefore maps to the incomplete baseline.
      * ``complete``: singleton cells, every player observes the full vector.
      * ``privileged``: singletons for ``player``, own-coordinate cells for
        the rest.
      * ``public``: cells fix the own coordinate plus the disclosed label
        ``disclose[j][k_j]`` of every opponent coordinate.
    """
    shape = grid.shape
    total = int(np.prod(shape))
    n = len(shape)
    own = np.array(np.unravel_index(np.arange(total), shape))

    def own_cells(i):
        return tuple(tuple(np.flatnonzero(own[i] == k)) for k in range(shape[i]))

    def singletons():
        return tuple((k,) for k in range(total))

    if kind in ("incomplete", "null"):
        cells = tuple(own_cells(i) for i in range(n))
        return InfoPartition(shape, cells, label="incomplete")
    if kind == "complete":
        return InfoPartition(shape, tuple(singletons() for _ in range(n)), label="complete")
    if kind == "privileged":
        if player is None or not 0 <= player < n:
            raise DomainError("privileged baseline needs a valid player index")
        cells = tuple(singletons() if i == player else own_cells(i) for i in range(n))
        return InfoPartition(shape, cells, label=f"privileged{player}")
    if kind == "public":
        if disclose is None or len(disclose) != n:
            raise DomainError("public baseline needs one label list per player")
        labels = [list(d) for d in disclose]
        for i, lab in enumerate(labels):
            if len(lab) != shape[i]:
                raise DomainError("label list length must match the player's grid size")
        cells = []
        for i in range(n):
            groups: dict[tuple, list[int]] = {}
            for flat in range(total):
                key = (own[i, flat],) + tuple(
                    labels[j][own[j, flat]] for j in range(n) if j != i
                )
                groups.setdefault(key, []).append(flat)
            cells.append(tuple(tuple(v) for _, v in sorted(groups.items(), key=lambda kv: kv[1][0])))
        return InfoPartition(shape, tuple(cells), label="public")
    raise DomainError(f"unknown baseline kind {kind!r}")


def is_refinement(a: InfoPartition, b: InfoPartition) -> bool:
    """True iff partition a is at least as informative as b (cellwise containment)."""
    if a.grid_shape != b.grid_shape or a.num_players != b.num_players:
        raise DomainError("partitions live on different grids")
    for i in range(a.num_players):
        b_id = b.cell_ids(i)
        for cell in a.cells[i]:
            if np.unique(b_id[list(cell)]).size != 1:
                return False
    return True


def discretize(spec: GameSpec, r_per_player: Sequence[int], rho: float = 0.0,
               tail_augment: bool = False) -> DiscretizedGame:
    """Convenience constructor: quantile grid plus Gaussian-copula prior."""
    grid = make_grid(spec, r_per_player, tail_augment=tail_augment)
    return DiscretizedGame(spec, grid, prior_pmf(grid, rho))

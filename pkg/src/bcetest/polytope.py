"""Linear-constraint characterization of the BCE prediction set.

The set of outcome distributions consistent with some Bayes correlated
equilibrium, for a discretized game and a baseline partition, is the
projection of a polytope over the vectorized decision rule nu(y, eps).
Stacking p_tilde = p_hat - q on top of vec(nu) gives the constraint
system used by the dual cone program in ``statistic``; this module also
provides the direct LP views of the set: support function, sharp outcome
bounds, membership, and a brute-force vertex oracle for small instances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .games import (
    CapacityError,
    DiscretizedGame,
    DomainError,
    InfoPartition,
    SolverError,
    prior_pmf,
)

_LP_OPTS = {"presolve": True,
            "primal_feasibility_tolerance": 1e-10,
            "dual_feasibility_tolerance": 1e-10}


@dataclass(frozen=True)
class VectorizationOrder:
    """Canonical index maps: C order, the last player's coordinate fastest."""

    actions_per_player: tuple[int, ...]
    grid_shape: tuple[int, ...]

    @property
    def num_outcomes(self) -> int:
        return int(np.prod(self.actions_per_player))

    @property
    def grid_size(self) -> int:
        return int(np.prod(self.grid_shape))

    def outcome_index(self, y) -> int:
        return int(np.ravel_multi_index(tuple(int(v) for v in y), self.actions_per_player))

    def outcome_profile(self, idx: int) -> tuple[int, ...]:
        return tuple(int(v) for v in np.unravel_index(idx, self.actions_per_player))

    def type_index(self, k) -> int:
        return int(np.ravel_multi_index(tuple(int(v) for v in k), self.grid_shape))

    def outcomes(self) -> np.ndarray:
        """(num_outcomes, N) array of action profiles in index order."""
        return np.array(list(np.ndindex(*self.actions_per_player)), dtype=int)


@dataclass(frozen=True)
class BCEPolytope:
    """Constraint system A_eq z = a, A_ineq z <= 0, z = (p_tilde, v), v >= 0."""

    A_eq: sp.csr_matrix
    a: np.ndarray
    A_ineq: sp.csr_matrix
    f: np.ndarray
    p_hat: np.ndarray
    order: VectorizationOrder
    partition_token: str

    @property
    def num_outcomes(self) -> int:
        return self.order.num_outcomes

    @property
    def grid_size(self) -> int:
        return self.order.grid_size

    @property
    def d_nu(self) -> int:
        return self.num_outcomes * self.grid_size

    @property
    def d_z(self) -> int:
        return self.num_outcomes + self.d_nu

    @property
    def dims(self) -> dict:
        return {
            "num_outcomes": self.num_outcomes,
            "grid_size": self.grid_size,
            "d_nu": self.d_nu,
            "d_z": self.d_z,
            "d_eq": self.A_eq.shape[0],
            "d_ineq": self.A_ineq.shape[0],
        }

    def marginal_matrix(self) -> sp.csr_matrix:
        """Map v -> q: the outcome marginal of the decision rule."""
        return self.A_eq[: self.num_outcomes, self.num_outcomes:].tocsr()

    def ic_matrix(self) -> sp.csr_matrix:
        """Obedience rows restricted to the v block."""
        return self.A_ineq[:, self.num_outcomes:].tocsr()

    def with_p_hat(self, p_hat) -> "BCEPolytope":
        """Rebind the empirical distribution entering the constant vector."""
        p = np.asarray(p_hat, dtype=float).ravel()
        if p.size != self.num_outcomes:
            raise DomainError("p_hat has the wrong length")
        a = np.concatenate([p, self.f, [1.0]])
        return BCEPolytope(self.A_eq, a, self.A_ineq, self.f, p, self.order,
                           self.partition_token)


def _payoff_table(spec, order: VectorizationOrder, eps_points, x):
    """PI[i][o, k] = payoff of player i at outcome o and own grid point k."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != spec.beta.size:
        raise DomainError("covariate length does not match beta")
    base = float(spec.beta @ x)
    ys = order.outcomes()
    tables = []
    for i in range(len(order.actions_per_player)):
        inter = ys @ spec.delta[i]
        mean = base + spec.interaction_sign * inter
        tables.append(ys[:, i:i + 1] * (mean[:, None] + eps_points[i][None, :]))
    return tables


_ASSEMBLY_CACHE: dict = {}


def clear_cache() -> None:
    _ASSEMBLY_CACHE.clear()


def _theta_key(theta):
    if theta is None:
        return None
    t = np.asarray(theta, dtype=float).ravel()
    return tuple(int(round(v / 1e-10)) for v in t)


def _game_token(game: DiscretizedGame) -> int:
    spec = game.spec
    return hash((spec.payoff.beta.tobytes(), spec.payoff.delta.tobytes(),
                 spec.payoff.interaction_sign, game.prior.masses.tobytes()))


def assemble(game: DiscretizedGame, partition: InfoPartition, x_index: int,
             theta=None, p_hat=None, use_cache: bool = True) -> BCEPolytope:
    """Build the BCE constraint system for covariate index ``x_index``.

    ``theta`` (optional) is a flat parameter vector routed through the
    game's theta map; ``p_hat`` enters only the constant vector and
    defaults to the uniform distribution.  Matrices are cached across
    calls that share (theta, x, partition, grid), so repeated binding of
    bootstrap p_hats is cheap.
    """
    spec, grid = game.spec, game.grid
    if partition.grid_shape != grid.shape:
        raise DomainError("partition grid does not match the game grid")
    order = VectorizationOrder(spec.actions_per_player, grid.shape)
    ny, R = order.num_outcomes, order.grid_size
    if p_hat is None:
        p_hat = np.full(ny, 1.0 / ny)
    p_hat = np.asarray(p_hat, dtype=float).ravel()
    if p_hat.size != ny:
        raise DomainError("p_hat has the wrong length")

    key = (_theta_key(theta), int(x_index), partition.token(), grid.token(),
           _game_token(game))
    cached = _ASSEMBLY_CACHE.get(key) if use_cache else None
    if cached is None:
        payoff_spec, rho = spec.payoff, game.prior.copula_corr
        f = game.prior.masses
        if theta is not None:
            payoff_spec, rho_new = spec.theta_map.apply(payoff_spec, rho, theta)
            if rho_new != rho:
                f = prior_pmf(grid, rho_new).masses
        x = spec.covariate(x_index)
        tables = _payoff_table(payoff_spec, order, grid.points, x)
        d_nu = ny * R

        # Equality block: marginalization (|Y|), prior (R), normalization (1).
        rows, cols, vals = [], [], []
        for o in range(ny):
            rows.append(np.full(R, o))
            cols.append(ny + np.arange(R) * ny + o)
            vals.append(np.ones(R))
        marg = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(ny, ny + d_nu),
        )
        marg = (marg + sp.hstack([sp.identity(ny), sp.csr_matrix((ny, d_nu))])).tocsr()
        prior_rows = sp.coo_matrix(
            (np.ones(d_nu), (np.repeat(np.arange(R), ny), ny + np.arange(d_nu))),
            shape=(R, ny + d_nu),
        ).tocsr()
        norm_row = sp.coo_matrix(
            (np.ones(d_nu), (np.zeros(d_nu, dtype=int), ny + np.arange(d_nu))),
            shape=(1, ny + d_nu),
        ).tocsr()
        A_eq = sp.vstack([marg, prior_rows, norm_row]).tocsr()

        # Obedience block: one row per (player, recommended action,
        # deviation, information cell), aggregated over the cell.
        own = np.array(np.unravel_index(np.arange(R), grid.shape))
        ys = order.outcomes()
        r_i, c_i, v_i = [], [], []
        row_ctr = 0
        for i in range(spec.num_players):
            n_act = spec.actions_per_player[i]
            for a_rec in range(n_act):
                outs = np.flatnonzero(ys[:, i] == a_rec)
                for b_dev in range(n_act):
                    if b_dev == a_rec:
                        continue
                    dev = np.array([
                        order.outcome_index(tuple(np.where(np.arange(spec.num_players) == i,
                                                           b_dev, ys[o])))
                        for o in outs
                    ])
                    # diff[k, j]: payoff gain from deviating, by own grid point k
                    diff = tables[i][dev, :] - tables[i][outs, :]  # (n_out_i, r_i)
                    for cell in partition.cells[i]:
                        pts = np.asarray(cell, dtype=int)
                        k_own = own[i, pts[0]]
                        cc = (ny + pts[:, None] * ny + outs[None, :]).ravel()
                        vv = np.tile(diff[:, k_own], pts.size)
                        r_i.append(np.full(cc.size, row_ctr))
                        c_i.append(cc)
                        v_i.append(vv)
                        row_ctr += 1
        A_ineq = sp.coo_matrix(
            (np.concatenate(v_i), (np.concatenate(r_i), np.concatenate(c_i))),
            shape=(row_ctr, ny + d_nu),
        ).tocsr()
        cached = (A_eq, A_ineq, f)
        if use_cache:
            _ASSEMBLY_CACHE[key] = cached

    A_eq, A_ineq, f = cached
    a = np.concatenate([p_hat, f, [1.0]])
    return BCEPolytope(A_eq, a, A_ineq, np.asarray(f), p_hat, order, partition.token())


def _lp(c, poly: BCEPolytope, extra_ub=None, extra_rhs=None):
    ny = poly.num_outcomes
    bounds = [(None, None)] * ny + [(0, None)] * poly.d_nu
    A_ub, b_ub = poly.A_ineq, np.zeros(poly.A_ineq.shape[0])
    if extra_ub is not None:
        A_ub = sp.vstack([A_ub, extra_ub])
        b_ub = np.concatenate([b_ub, extra_rhs])
    return linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=poly.A_eq, b_eq=poly.a,
                   bounds=bounds, method="highs", options=_LP_OPTS)


def support_fn(poly: BCEPolytope, b) -> float:
    """Support function h(b) = max b'q over the BCE prediction set."""
    b = np.asarray(b, dtype=float).ravel()
    if b.size != poly.num_outcomes:
        raise DomainError("direction has the wrong length")
    c = np.concatenate([b, np.zeros(poly.d_nu)])
    res = _lp(c, poly)
    if res.status == 2:
        raise SolverError("BCE polytope is infeasible; assembly is inconsistent")
    if res.status != 0:
        raise SolverError(f"support LP failed with status {res.status}: {res.message}")
    return float(b @ poly.p_hat - res.fun)


def argmax_q(poly: BCEPolytope, b) -> np.ndarray:
    """A maximizer of b'q over the prediction set (outcome marginal of the LP)."""
    b = np.asarray(b, dtype=float).ravel()
    c = np.concatenate([b, np.zeros(poly.d_nu)])
    res = _lp(c, poly)
    if res.status != 0:
        raise SolverError(f"support LP failed with status {res.status}")
    return poly.p_hat - res.x[: poly.num_outcomes]


def outcome_bounds(poly: BCEPolytope, y) -> tuple[float, float]:
    """Sharp lower and upper bounds on the probability of outcome y."""
    idx = y if np.isscalar(y) else poly.order.outcome_index(y)
    e = np.zeros(poly.num_outcomes)
    e[idx] = 1.0
    return -support_fn(poly, -e), support_fn(poly, e)


def membership(poly: BCEPolytope, q, tol: float = 1e-8) -> bool:
    """Whether q is (within per-row slack tol) a BCE prediction."""
    q = np.asarray(q, dtype=float).ravel()
    ny = poly.num_outcomes
    if q.size != ny:
        raise DomainError("q has the wrong length")
    M = poly.marginal_matrix()
    P = poly.A_eq[ny:, ny:]
    rhs = poly.a[ny:]
    IC = poly.ic_matrix()
    A_ub = sp.vstack([M, -M, P, -P, IC]).tocsr()
    b_ub = np.concatenate([q + tol, tol - q, rhs + tol, tol - rhs,
                           np.full(IC.shape[0], tol)])
    res = linprog(np.zeros(poly.d_nu), A_ub=A_ub, b_ub=b_ub,
                  bounds=[(0, None)] * poly.d_nu, method="highs", options=_LP_OPTS)
    if res.status == 0:
        return True
    if res.status == 2:
        return False
    raise SolverError(f"membership LP failed with status {res.status}: {res.message}")


def _polished_vertex(poly: BCEPolytope, g, tie_dirs) -> np.ndarray:
    """Lexicographic LP polish: land on a vertex of the projected set."""
    ny = poly.num_outcomes
    M = poly.marginal_matrix()
    extra_ub, extra_rhs = [], []
    direction = g
    best = None
    for t in range(tie_dirs.shape[0] + 1):
        c = np.concatenate([direction, np.zeros(poly.d_nu)])
        res = _lp(c, poly, sp.vstack(extra_ub) if extra_ub else None,
                  np.asarray(extra_rhs) if extra_rhs else None)
        if res.status != 0:
            # stacked face-fixing rows can become numerically infeasible;
            # the incumbent already optimizes the earlier directions
            if best is not None and res.status == 2:
                return best
            raise SolverError(f"vertex polish LP failed with status {res.status}")
        q = poly.p_hat - res.x[:ny]
        best = q
        if t == tie_dirs.shape[0]:
            return q
        val = direction @ q
        # fix the optimal face: direction' q >= val - eps  <=>  -direction' M v <= -(val-eps)
        row = sp.csr_matrix(
            np.concatenate([np.zeros(ny), -(direction @ M)])[None, :])
        extra_ub.append(row)
        extra_rhs.append(-(val - 1e-8))
        direction = tie_dirs[t]


def vertex_oracle(poly: BCEPolytope, num_directions: int = 256, rng=None) -> list[np.ndarray]:
    """Vertices of the projected outcome polytope (small instances only).

    Probes a dense set of directions, polishes each optimizer onto a
    vertex by lexicographic re-optimization, then closes the hull by
    re-probing facet normals until no support value exceeds its facet
    offset.  Exactness relies on the instance cap d_nu <= 64.
    """
    if poly.d_nu > 64:
        raise CapacityError(f"vertex oracle limited to d_nu <= 64 (got {poly.d_nu})")
    if num_directions < 1:
        raise DomainError("need at least one probe direction")
    rng = np.random.default_rng(0) if rng is None else rng
    ny = poly.num_outcomes
    tie_dirs = rng.standard_normal((ny - 1, ny))

    dirs = [np.eye(ny)[k] * s for k in range(ny) for s in (1.0, -1.0)]
    extra = rng.standard_normal((max(0, num_directions - len(dirs)), ny))
    dirs += [d / np.linalg.norm(d) for d in extra]

    pts = []
    for g in dirs[:num_directions] if num_directions < len(dirs) else dirs:
        pts.append(_polished_vertex(poly, g, tie_dirs))

    def dedup(points):
        out = []
        for p in points:
            if not any(np.max(np.abs(p - q)) < 1e-8 for q in out):
                out.append(p)
        return out

    pts = dedup(pts)
    if len(pts) == 1:
        return pts

    # Work inside the affine hull of the projected set.
    arr = np.array(pts)
    center = arr.mean(axis=0)
    _, s, vt = np.linalg.svd(arr - center, full_matrices=False)
    dim = int(np.sum(s > 1e-9))
    basis = vt[:dim]
    if dim <= 1:
        g = basis[0]
        lo = _polished_vertex(poly, -g, tie_dirs)
        hi = _polished_vertex(poly, g, tie_dirs)
        return dedup([lo, hi])

    from scipy.spatial import ConvexHull

    for _ in range(200):
        proj = (np.array(pts) - center) @ basis.T
        hull = ConvexHull(proj, qhull_options="QJ1e-11")
        grew = False
        for eq in hull.equations:
            normal, offset = eq[:-1], eq[-1]
            g = normal @ basis
            val = support_fn(poly, g) - normal @ (basis @ center)
            if val > -offset + 1e-7:
                pts.append(_polished_vertex(poly, g, tie_dirs))
                grew = True
        pts = dedup(pts)
        if not grew:
            proj = (np.array(pts) - center) @ basis.T
            hull = ConvexHull(proj, qhull_options="QJ1e-11")
            return [pts[i] for i in hull.vertices]
    raise SolverError("vertex enumeration did not close after 200 rounds")


def dump_debug(poly: BCEPolytope, path: str) -> None:
    """Plain-text triplet dump of the constraint system for cross-checking."""
    with open(path, "w") as fh:
        fh.write(f"{poly.A_eq.shape[0]} {poly.A_ineq.shape[0]} {poly.d_z}\n")
        for tag, mat in (("E", poly.A_eq.tocoo()), ("I", poly.A_ineq.tocoo())):
            for i, j, v in zip(mat.row, mat.col, mat.data):
                fh.write(f"{tag} {i} {j} {v:.17g}\n")
        for i, v in enumerate(poly.a):
            fh.write(f"a {i} {v:.17g}\n")

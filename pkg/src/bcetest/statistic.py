"""Studentized support-function statistics over BCE prediction sets.

The per-market statistic is the weighted-ball supremum of
sqrt(n) * (b'p_hat - h(b, Q)); by LP duality of the inner support-function
program it equals the value of a single second-order-cone program in the
direction b and the multipliers of the polytope constraints.  The same
dualization encodes the moment-selection constraint of the bootstrap
statistic, so every bootstrap draw costs one cone solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import clarabel
import numpy as np
import scipy.sparse as sp

from .games import DomainError, SolverError
from .polytope import BCEPolytope, argmax_q, support_fn

LAMBDA_CAP = 1e6


def _settings() -> "clarabel.DefaultSettings":
    s = clarabel.DefaultSettings()
    s.verbose = False
    s.max_iter = 200
    s.tol_gap_abs = 1e-8
    s.tol_gap_rel = 1e-8
    s.tol_feas = 1e-8
    return s


_OK = (clarabel.SolverStatus.Solved, clarabel.SolverStatus.AlmostSolved)


def _solve_cone(q, A, b, cones):
    """Interior-point solve of min q'x s.t. Ax + s = b, s in the cone product."""
    n = q.size
    solver = clarabel.DefaultSolver(sp.csc_matrix((n, n)), q, A, b, cones, _settings())
    sol = solver.solve()
    if sol.status not in _OK:
        gap = abs(sol.obj_val - sol.obj_val_dual) if sol.obj_val is not None else None
        raise SolverError(f"cone solver returned {sol.status} (gap={gap!r})")
    return np.asarray(sol.x), float(sol.obj_val)


@dataclass(frozen=True)
class WeightMatrix:
    """Reduced (|Y|-1)-dimensional studentization weight with mandatory ridge."""

    W: np.ndarray
    ridge_applied: float
    chol: np.ndarray

    @property
    def dim(self) -> int:
        return self.W.shape[0]


def weight_matrix(counts_x, n_total: int, ridge_scale: float = 1e-6) -> WeightMatrix:
    """n * var-hat of the empirical CCP for one market type, reduced and ridged.

    For multinomial sampling, n*var(p_hat_x) = (n/n_x)(diag(p) - pp'); the
    last outcome coordinate is dropped to match the reduced direction
    space, and a ridge ridge_scale*trace/(|Y|-1) guarantees positive
    definiteness (falling back to ridge_scale itself for degenerate cells).
    """
    counts_x = np.asarray(counts_x, dtype=float).ravel()
    n_x = counts_x.sum()
    if n_x <= 0:
        raise DomainError("empty covariate cell: cannot form a weight matrix")
    p = counts_x / n_x
    full = (n_total / n_x) * (np.diag(p) - np.outer(p, p))
    m = counts_x.size - 1
    W = full[:m, :m].copy()
    tr = np.trace(W)
    lam = ridge_scale * tr / m if tr > 1e-300 else ridge_scale
    W[np.diag_indices(m)] += lam
    W = 0.5 * (W + W.T)
    return WeightMatrix(W=W, ridge_applied=float(lam), chol=np.linalg.cholesky(W))


@dataclass
class DualProgram:
    """Prepared cone program for the dual support-function statistic.

    Variables w = (b_tilde, lambda_eq, lambda_ineq).  The normalization
    row of the polytope is the sum of its prior rows, so its multiplier
    is dropped to keep the stacked constraint matrix full rank; lambda_eq
    therefore has |Y| + R entries (marginalization then prior rows).
    """

    poly: BCEPolytope
    W: WeightMatrix
    gamma: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    gms_slack: float | None
    _A: sp.csc_matrix = field(repr=False, default=None)
    _b: np.ndarray = field(repr=False, default=None)
    _cones: list = field(repr=False, default=None)

    @property
    def m(self) -> int:
        return self.poly.num_outcomes - 1

    @property
    def d_lambda(self) -> int:
        return self.gamma.size - self.m

    def _A_poly(self) -> sp.csr_matrix:
        ny = self.poly.num_outcomes
        eq_wo_norm = self.poly.A_eq[: ny + self.poly.grid_size]
        return sp.vstack([eq_wo_norm, self.poly.A_ineq]).tocsr()

    def Gamma1(self) -> np.ndarray:
        n = self.gamma.size
        out = np.zeros((n, n))
        out[: self.m, : self.m] = self.W.W
        return out

    def Gamma2(self) -> np.ndarray:
        ny = self.poly.num_outcomes
        A1 = self._A_poly()[:, :ny].T.toarray()
        E = np.zeros((ny, self.m))
        E[: self.m, :] = np.eye(self.m)
        return np.hstack([E, A1])

    def Gamma3(self) -> np.ndarray:
        ny = self.poly.num_outcomes
        A2 = self._A_poly()[:, ny:].T.toarray()
        return np.hstack([np.zeros((self.poly.d_nu, self.m)), -A2])

    def solve(self, q: np.ndarray):
        return _solve_cone(q, self._A, self._b, self._cones)


def build_dual(poly: BCEPolytope, W: WeightMatrix, gms_slack: float | None = None) -> DualProgram:
    """Assemble the cone program once; objectives can then be swapped per solve."""
    ny, R, d_nu = poly.num_outcomes, poly.grid_size, poly.d_nu
    m = ny - 1
    if W.dim != m:
        raise DomainError("weight matrix dimension must be |Y|-1")
    d_ineq = poly.A_ineq.shape[0]
    d_lam = ny + R + d_ineq
    n_w = m + d_lam

    A_poly = sp.vstack([poly.A_eq[: ny + R], poly.A_ineq]).tocsc()
    A_T1 = A_poly[:, :ny].T.tocsr()        # |Y| x d_lam
    A_T2 = A_poly[:, ny:].T.tocsr()        # d_nu x d_lam

    # Equalities: b_tilde + (A')_{1:|Y|} lambda = 0 (last row has no b term).
    E = sp.lil_matrix((ny, m))
    E[:m, :] = sp.identity(m)
    A_eq = sp.hstack([E.tocsr(), A_T1]).tocsr()
    b_eq = np.zeros(ny)

    lam_min = float(np.min(np.linalg.eigvalsh(W.W)))
    B = 1.0 / np.sqrt(max(lam_min, 1e-300))

    gamma = np.zeros(n_w)
    gamma[m:m + ny] = poly.p_hat
    gamma[m + ny:m + ny + R] = poly.f

    blocks, rhs = [], []
    blocks.append(sp.hstack([sp.csr_matrix((d_nu, m)), -A_T2]))
    rhs.append(np.zeros(d_nu))
    sel = sp.hstack([sp.csr_matrix((d_ineq, m + ny + R)), sp.identity(d_ineq)]).tocsr()
    blocks.append(-sel)
    rhs.append(np.zeros(d_ineq))
    blocks.append(sel)
    rhs.append(np.full(d_ineq, LAMBDA_CAP))
    box = sp.hstack([sp.identity(m), sp.csr_matrix((m, d_lam))]).tocsr()
    blocks.append(box)
    rhs.append(np.full(m, B))
    blocks.append(-box)
    rhs.append(np.full(m, B))
    if gms_slack is not None:
        blocks.append(sp.csr_matrix(gamma[None, :]))
        rhs.append(np.array([gms_slack]))
    G_l = sp.vstack(blocks).tocsr()
    h_l = np.concatenate(rhs)

    soc = sp.lil_matrix((m + 1, n_w))
    soc[1:, :m] = -W.chol.T
    A = sp.vstack([A_eq, G_l, soc.tocsr()]).tocsc()
    b = np.concatenate([b_eq, h_l, [1.0], np.zeros(m)])
    cones = [clarabel.ZeroConeT(ny), clarabel.NonnegativeConeT(G_l.shape[0]),
             clarabel.SecondOrderConeT(m + 1)]

    prog = DualProgram(
        poly=poly, W=W, gamma=gamma,
        lb=np.concatenate([np.full(m, -B), np.full(ny + R, -np.inf), np.zeros(d_ineq)]),
        ub=np.concatenate([np.full(m, B), np.full(ny + R, np.inf), np.full(d_ineq, LAMBDA_CAP)]),
        gms_slack=gms_slack,
    )
    prog._A = A
    prog._b = b
    prog._cones = cones
    return prog


def _check_p_hat(poly: BCEPolytope, p_hat):
    p = np.asarray(p_hat, dtype=float).ravel()
    if p.size != poly.num_outcomes or np.max(np.abs(p - poly.p_hat)) > 1e-12:
        raise DomainError("polytope was assembled with a different p_hat")
    return p


def solve_V(poly: BCEPolytope, p_hat, W: WeightMatrix, n: int,
            dual: DualProgram | None = None, return_info: bool = False):
    """Studentized distance statistic V = sqrt(n) * value of the dual program."""
    p = _check_p_hat(poly, p_hat)
    prog = dual if dual is not None and dual.gms_slack is None else build_dual(poly, W)
    x, obj = prog.solve(prog.gamma)
    val = float(np.sqrt(n) * max(0.0, -obj))
    if return_info:
        lam_ineq = x[prog.m + poly.num_outcomes + poly.grid_size:]
        info = {"cap_active": bool(lam_ineq.size and lam_ineq.max() > 0.99 * LAMBDA_CAP),
                "b_tilde": x[: prog.m]}
        return val, info
    return val


def gms_sup(poly: BCEPolytope, p_hat, p_star, W: WeightMatrix, n: int, tau_n: float,
            dual: DualProgram | None = None) -> float:
    """Moment-selected bootstrap supremum sup {sqrt(n) b'(p* - p_hat)}.

    The selection eta_hat(b) >= -tau_n is imposed through multipliers
    certifying h(b, Q) <= b'p_hat + tau_n/sqrt(n), which is linear in
    (b, lambda); the result is one cone solve per bootstrap draw.
    """
    if tau_n <= 0:
        raise DomainError("tau_n must be positive")
    p = _check_p_hat(poly, p_hat)
    p_star = np.asarray(p_star, dtype=float).ravel()
    slack = tau_n / np.sqrt(n)
    prog = dual
    if prog is None or prog.gms_slack is None or abs(prog.gms_slack - slack) > 1e-15:
        prog = build_dual(poly, W, gms_slack=slack)
    m = prog.m
    c = np.zeros(prog.gamma.size)
    c[:m] = -np.sqrt(n) * (p_star[:m] - p[:m])
    _, obj = prog.solve(c)
    return float(max(0.0, -obj))


def studentized_sup(poly: BCEPolytope, p_hat, W: WeightMatrix, n: int,
                    num_directions: int = 1000, rng=None) -> float:
    """Direction-sampled form of V: sup over b != 0 of the studentized ratio.

    Cross-check oracle for solve_V; evaluates sqrt(n) * (b'p_hat - h(b,Q))
    normalized by the W-norm of b over random directions, then polishes
    the best direction with a shrinking pattern search on the sphere.
    """
    if num_directions < 1000:
        raise DomainError("need at least 1000 directions for the sampling oracle")
    rng = np.random.default_rng(0) if rng is None else rng
    p = _check_p_hat(poly, p_hat)
    m = poly.num_outcomes - 1
    root_n = np.sqrt(n)

    def value(b_red):
        nrm = np.sqrt(b_red @ W.W @ b_red)
        if nrm <= 0:
            return -np.inf
        b = np.concatenate([b_red, [0.0]])
        return root_n * (b[:m] @ p[:m] - support_fn(poly, b)) / nrm

    best_b, best_v = None, -np.inf
    for _ in range(num_directions):
        b = rng.standard_normal(m)
        v = value(b)
        if v > best_v:
            best_v, best_b = v, b / np.linalg.norm(b)

    step = 0.5
    while step > 1e-5:
        improved = False
        for k in range(m):
            for s in (step, -step):
                cand = best_b.copy()
                cand[k] += s
                v = value(cand)
                if v > best_v:
                    best_v, best_b = v, cand / np.linalg.norm(cand)
                    improved = True
        if not improved:
            step *= 0.5
    return float(max(best_v, 0.0))


def solve_V_cutting(poly: BCEPolytope, p_hat, W: WeightMatrix, n: int,
                    num_seed_dirs: int = 24, tol: float = 1e-10,
                    max_cuts: int = 400, rng=None) -> float:
    """Primal evaluation of the ball supremum by sampled cuts plus Kelley refinement.

    Uses only the support-function LP oracle (never the dual program):
    sampled directions seed cutting planes h(b) >= b'q_k, and the master
    ball problem is refined until the upper and lower bounds agree.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    p = _check_p_hat(poly, p_hat)
    m = poly.num_outcomes - 1
    root_n = np.sqrt(n)

    cuts = []

    def add_cut(b_red):
        b = np.concatenate([b_red, [0.0]])
        q = argmax_q(poly, b)
        cuts.append(q[:m])
        return float(b_red @ p[:m] - b_red @ q[:m])

    lower = 0.0
    for _ in range(num_seed_dirs):
        b = rng.standard_normal(m)
        nrm = np.sqrt(b @ W.W @ b)
        lower = max(lower, add_cut(b / nrm))

    # Master: max t s.t. t <= b'(p - q_k), ||chol(W)' b|| <= 1, in (b, t).
    for _ in range(max_cuts):
        k = len(cuts)
        n_var = m + 1
        c = np.zeros(n_var)
        c[-1] = -1.0
        rows = np.zeros((k, n_var))
        for j, qk in enumerate(cuts):
            rows[j, :m] = -(p[:m] - qk)
            rows[j, -1] = 1.0
        soc = np.zeros((m + 1, n_var))
        soc[1:, :m] = -W.chol.T
        A = sp.csc_matrix(np.vstack([rows, soc]))
        b_vec = np.concatenate([np.zeros(k), [1.0], np.zeros(m)])
        cones = [clarabel.NonnegativeConeT(k), clarabel.SecondOrderConeT(m + 1)]
        x, _ = _solve_cone(c, A, b_vec, cones)
        upper = x[-1]
        lower = max(lower, add_cut(x[:m]))
        if upper - lower <= tol:
            return float(root_n * max(lower, 0.0))
    raise SolverError("cutting-plane refinement did not converge")


@dataclass
class TStatResult:
    """Aggregated statistic T_n and its per-market components."""

    value: float
    V_by_x: dict
    warnings: tuple[str, ...] = ()


def statistic_T(game, partition, data, theta, ridge_scale: float = 1e-6,
                min_cell: int = 1, allow_sparse_x: bool = False,
                use_cache: bool = True) -> TStatResult:
    """T_n(theta) = max over covariate cells of the per-market statistic."""
    from .polytope import assemble

    warnings = []
    V_by_x = {}
    for x in range(data.num_covariates):
        counts_x = data.counts[:, x]
        n_x = int(counts_x.sum())
        if n_x < min_cell:
            if allow_sparse_x:
                warnings.append(f"covariate cell {x} has {n_x} < {min_cell} markets; skipped")
                continue
            raise DomainError(f"covariate cell {x} has {n_x} < {min_cell} markets")
        p_hat = counts_x / n_x
        W = weight_matrix(counts_x, data.n, ridge_scale)
        poly = assemble(game, partition, x, theta=theta, p_hat=p_hat, use_cache=use_cache)
        V_by_x[x] = solve_V(poly, p_hat, W, data.n)
    if not V_by_x:
        raise DomainError("no covariate cell met the minimum size")
    return TStatResult(value=max(V_by_x.values()), V_by_x=V_by_x,
                       warnings=tuple(warnings))

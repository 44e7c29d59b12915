import os

import numpy as np
import pytest

from bcetest import (
    CapacityError,
    DomainError,
    assemble,
    baseline_partition,
    clear_cache,
    dump_debug,
    membership,
    outcome_bounds,
    support_fn,
    vertex_oracle,
    uniform_incomplete_ccp,
)
from conftest import make_normal_game, make_uniform_game


def test_constraint_dimensions():
    g = make_uniform_game(r=2)
    poly = assemble(g, baseline_partition("incomplete", g.grid), 0)
    assert poly.dims["d_eq"] == 4 + 4 + 1
    assert poly.dims["d_ineq"] == 8
    assert poly.dims["d_z"] == 4 * (4 + 1)
    complete = assemble(g, baseline_partition("complete", g.grid), 0)
    assert complete.dims["d_ineq"] == 16


def test_support_trivial_directions():
    g = make_uniform_game(r=3)
    poly = assemble(g, baseline_partition("incomplete", g.grid), 0)
    assert support_fn(poly, np.zeros(4)) == pytest.approx(0.0, abs=1e-9)
    assert support_fn(poly, np.ones(4)) == pytest.approx(1.0, abs=1e-9)


def test_support_dominance_singleton():
    g = make_uniform_game(d1=0.0, d2=0.0, r=2)
    poly = assemble(g, baseline_partition("incomplete", g.grid), 0)
    e = np.zeros(4)
    e[poly.order.outcome_index((1, 0))] = 1.0
    assert support_fn(poly, e) == pytest.approx(0.25, abs=1e-8)


def test_support_homogeneity_and_subadditivity():
    g = make_normal_game(r=3, rho=0.2)
    poly = assemble(g, baseline_partition("incomplete", g.grid), 0)
    rng = np.random.default_rng(5)
    for _ in range(20):
        b1, b2 = rng.standard_normal(4), rng.standard_normal(4)
        lam = rng.uniform(0, 3)
        assert support_fn(poly, lam * b1) == pytest.approx(
            lam * support_fn(poly, b1), abs=1e-9)
        assert (support_fn(poly, b1 + b2)
                <= support_fn(poly, b1) + support_fn(poly, b2) + 1e-9)


def test_outcome_bounds_match_analytic_lower_bound():
    for d1, d2 in [(0.5, 0.5), (0.2, 0.8), (1.0, 0.4)]:
        g = make_uniform_game(d1, d2, r=40)
        poly = assemble(g, baseline_partition("complete", g.grid), 0)
        lo, hi = outcome_bounds(poly, (1, 0))
        assert lo == pytest.approx(0.25 * (1 + d2 * (1 - d1)), abs=0.01)
        assert 0.0 <= lo <= hi <= 1.0


def test_membership_interior_and_violation():
    q = uniform_incomplete_ccp(0.5, 0.5)
    assert q[2] == pytest.approx(0.24)
    g_true = make_uniform_game(0.5, 0.5, r=20)
    incomplete = baseline_partition("incomplete", g_true.grid)
    assert membership(assemble(g_true, incomplete, 0), q, 1e-6)
    for d1, d2 in [(0.2, 0.2), (0.5, 0.5), (1.0, 1.0), (0.4, 1.0)]:
        g = make_uniform_game(d1, d2, r=20)
        complete = baseline_partition("complete", g.grid)
        assert not membership(assemble(g, complete, 0), q, 1e-6)


def test_membership_uniform_in_no_interaction_game():
    g = make_uniform_game(0.0, 0.0, r=4)
    poly = assemble(g, baseline_partition("incomplete", g.grid), 0)
    assert membership(poly, np.full(4, 0.25), 1e-8)
    assert not membership(poly, np.array([0.4, 0.1, 0.25, 0.25]), 1e-6)


def test_membership_of_bound_midpoint():
    g = make_normal_game(r=3)
    poly = assemble(g, baseline_partition("incomplete", g.grid), 0)
    lo, hi = outcome_bounds(poly, (1, 1))
    # walk from a feasible point toward the midpoint value of q(1,1)
    probe = np.zeros(4)
    probe[poly.order.outcome_index((1, 1))] = 1.0
    from bcetest.polytope import argmax_q

    q_hi = argmax_q(poly, probe)
    q_lo = argmax_q(poly, -probe)
    assert membership(poly, 0.5 * (q_hi + q_lo), 1e-6)


def test_monotone_in_information():
    g = make_normal_game(r=4, rho=0.3)
    parts = [baseline_partition("complete", g.grid),
             baseline_partition("privileged", g.grid, player=0),
             baseline_partition("incomplete", g.grid)]
    polys = [assemble(g, p, 0) for p in parts]
    rng = np.random.default_rng(11)
    for _ in range(60):
        b = rng.standard_normal(4)
        h = [support_fn(p, b) for p in polys]
        assert h[0] <= h[1] + 1e-8 and h[1] <= h[2] + 1e-8


def test_vertex_oracle_singleton():
    g = make_uniform_game(0.0, 0.0, r=2)
    poly = assemble(g, baseline_partition("incomplete", g.grid), 0)
    verts = vertex_oracle(poly)
    assert len(verts) == 1
    assert np.allclose(verts[0], 0.25, atol=1e-7)


def test_vertex_oracle_support_agreement():
    g = make_uniform_game(0.7, 0.4, r=3)
    poly = assemble(g, baseline_partition("incomplete", g.grid), 0)
    verts = np.array(vertex_oracle(poly, rng=np.random.default_rng(2)))
    rng = np.random.default_rng(3)
    for _ in range(100):
        b = rng.standard_normal(4)
        assert support_fn(poly, b) == pytest.approx(np.max(verts @ b), abs=1e-6)


def test_vertex_oracle_guards():
    g = make_uniform_game(r=5)
    poly = assemble(g, baseline_partition("incomplete", g.grid), 0)
    with pytest.raises(CapacityError):
        vertex_oracle(poly)  # d_nu = 100 > 64
    g2 = make_uniform_game(r=2)
    poly2 = assemble(g2, baseline_partition("incomplete", g2.grid), 0)
    with pytest.raises(DomainError):
        vertex_oracle(poly2, num_directions=0)


def test_assembly_cache_and_p_hat_rebinding():
    clear_cache()
    g = make_uniform_game(0.3, 0.6, r=3)
    part = baseline_partition("incomplete", g.grid)
    a = assemble(g, part, 0, theta=np.array([0.3, 0.6]))
    b = assemble(g, part, 0, theta=np.array([0.3, 0.6]),
                 p_hat=np.array([0.4, 0.2, 0.2, 0.2]))
    assert a.A_eq is b.A_eq  # cached matrices shared
    assert np.allclose(b.a[:4], [0.4, 0.2, 0.2, 0.2])
    c = assemble(g, part, 0, theta=np.array([0.3, 0.6]), use_cache=False)
    assert c.A_eq is not a.A_eq
    assert (c.A_eq != a.A_eq).nnz == 0
    rebound = a.with_p_hat([0.1, 0.2, 0.3, 0.4])
    assert np.allclose(rebound.a[:4], [0.1, 0.2, 0.3, 0.4])


def test_partition_grid_mismatch():
    g = make_uniform_game(r=3)
    other = make_uniform_game(r=4)
    part = baseline_partition("incomplete", other.grid)
    with pytest.raises(DomainError):
        assemble(g, part, 0)


def test_theta_override_changes_polytope():
    g = make_uniform_game(0.1, 0.1, r=20)
    part = baseline_partition("complete", g.grid)
    poly = assemble(g, part, 0, theta=np.array([0.5, 0.5]))
    lo, _ = outcome_bounds(poly, (1, 0))
    assert lo == pytest.approx(0.3125, abs=0.01)


def test_debug_dump(tmp_path):
    g = make_uniform_game(r=2)
    poly = assemble(g, baseline_partition("incomplete", g.grid), 0)
    path = os.path.join(tmp_path, "poly.txt")
    dump_debug(poly, path)
    lines = open(path).read().splitlines()
    assert lines[0] == "9 8 20"
    assert any(line.startswith("E ") for line in lines)
    assert any(line.startswith("a ") for line in lines)

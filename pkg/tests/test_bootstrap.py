import numpy as np
import pytest

from bcetest import (
    DomainError,
    MarketDataset,
    SparseDataError,
    TestConfig,
    ThetaDomain,
    baseline_partition,
    bootstrap_draws,
    confidence_set_theta,
    dataset_from_counts,
    pvalue,
    resample,
    uniform_incomplete_ccp,
)
from bcetest.bootstrap import test_null as run_test_null
from bcetest.polytope import clear_cache
from conftest import make_uniform_game


def _domain(points):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return ThetaDomain(tuple(pts.min(0)), tuple(pts.max(0)),
                       points=tuple(map(tuple, pts)))


def _uniform_dataset(d1, d2, n, seed, spec):
    q = uniform_incomplete_ccp(d1, d2)
    counts = np.random.default_rng(seed).multinomial(n, q)[:, None]
    return dataset_from_counts(counts, spec)


def test_resample_single_observation_is_identity():
    data = MarketDataset(np.array([[1], [0], [0], [0]]), ("x0",))
    out = resample(data, np.random.default_rng(0))
    assert np.array_equal(out.counts, data.counts)


def test_resample_mean_counts():
    counts = np.array([[40, 10], [25, 20], [20, 25], [15, 45]])
    data = MarketDataset(counts, ("a", "b"))
    rng = np.random.default_rng(1)
    total = np.zeros_like(counts, dtype=float)
    reps = 400
    for _ in range(reps):
        total += resample(data, rng).counts
    mean = total / reps
    se = np.sqrt(counts * (1 - counts / data.n) / reps) + 1e-9
    assert np.all(np.abs(mean - counts) < 3.5 * se + 0.5)


def test_resample_deterministic_given_seed():
    counts = np.array([[40, 10], [25, 20], [20, 25], [15, 45]])
    data = MarketDataset(counts, ("a", "b"))
    a = resample(data, np.random.default_rng(7)).counts
    b = resample(data, np.random.default_rng(7)).counts
    assert np.array_equal(a, b)


def test_resample_redraw_exhaustion():
    data = MarketDataset(np.array([[5, 1], [5, 0], [0, 0], [0, 0]]), ("a", "b"))

    class EmptyingRng:
        def multinomial(self, n, probs):
            out = np.zeros(len(probs), dtype=int)
            out[0] = n
            return out

    with pytest.raises(SparseDataError):
        resample(data, EmptyingRng())


def test_config_validation():
    dom = _domain([[0.5, 0.5]])
    with pytest.raises(DomainError):
        TestConfig(theta_domain=dom, alpha=0.6)
    with pytest.raises(DomainError):
        TestConfig(theta_domain=dom, bootstrap_draws=10)
    cfg = TestConfig(theta_domain=dom)
    assert cfg.tau(1000) == pytest.approx(np.sqrt(np.log(1000)))
    assert TestConfig(theta_domain=dom, tau_rule=2.5).tau(1000) == 2.5


def test_pvalue_deterministic_and_in_range():
    clear_cache()
    g = make_uniform_game(r=5)
    part = baseline_partition("incomplete", g.grid)
    data = _uniform_dataset(0.5, 0.5, 400, 3, g.spec)
    cfg = TestConfig(theta_domain=_domain([[0.5, 0.5]]), bootstrap_draws=99, seed=11)
    r1 = pvalue(g, part, np.array([0.5, 0.5]), data, cfg)
    r2 = pvalue(g, part, np.array([0.5, 0.5]), data, cfg)
    assert r1.p_value == r2.p_value
    assert np.array_equal(r1.T_star, r2.T_star)
    B = cfg.bootstrap_draws
    assert 1 / (B + 1) <= r1.p_value <= 1.0
    assert r1.p_strict <= r1.p_lenient


def test_pvalue_tie_rule_at_zero():
    # one market, dominant entry: the lone observed outcome is the unique BCE
    # prediction, and a single-market dataset resamples to itself, so every
    # bootstrap statistic ties with T_n = 0
    g = make_uniform_game(0.0, 0.0, r=2, beta=5.0, x_val=1.0)
    part = baseline_partition("incomplete", g.grid)
    data = MarketDataset(np.array([[0], [0], [0], [1]]), ("0",))
    cfg = TestConfig(theta_domain=_domain([[0.0, 0.0]]), bootstrap_draws=99, seed=0)
    res = pvalue(g, part, np.array([0.0, 0.0]), data, cfg)
    assert res.T_n == 0.0
    assert np.all(res.T_star == 0.0)
    assert res.p_value == 1.0
    assert res.p_strict == pytest.approx(1 / 100)


def test_pvalue_large_inside_small_outside():
    clear_cache()
    g = make_uniform_game(r=6)
    incomplete = baseline_partition("incomplete", g.grid)
    complete = baseline_partition("complete", g.grid)
    data = _uniform_dataset(0.5, 0.5, 1000, 5, g.spec)
    cfg = TestConfig(theta_domain=_domain([[0.5, 0.5]]), bootstrap_draws=199, seed=2)
    inside = pvalue(g, incomplete, np.array([0.5, 0.5]), data, cfg)
    outside = pvalue(g, complete, np.array([0.5, 0.5]), data, cfg)
    assert inside.p_value > 0.1
    assert outside.p_value < 0.05
    assert outside.T_n > inside.T_n


def test_test_null_early_exit_and_rejection():
    clear_cache()
    g = make_uniform_game(r=6)
    data = _uniform_dataset(0.5, 0.5, 1000, 5, g.spec)
    grid = [[0.3, 0.3], [0.5, 0.5], [0.8, 0.8]]
    cfg = TestConfig(theta_domain=_domain(grid), bootstrap_draws=99, seed=4)

    res = run_test_null(g, baseline_partition("incomplete", g.grid), data, cfg)
    assert not res.rejected and res.decision == "fail-to-reject"
    assert res.early_exit and len(res.evaluated) <= len(grid)

    rej = run_test_null(g, baseline_partition("complete", g.grid), data, cfg)
    assert rej.rejected and not rej.early_exit
    assert len(rej.evaluated) == len(grid)
    assert rej.sup_p <= cfg.alpha

    # no early exit => decision independent of grid ordering
    cfg_rev = TestConfig(theta_domain=_domain(grid[::-1]), bootstrap_draws=99, seed=4)
    rej_rev = run_test_null(g, baseline_partition("complete", g.grid), data, cfg_rev)
    assert rej_rev.rejected and rej_rev.sup_p == pytest.approx(rej.sup_p)


def test_confidence_set_nesting_in_alpha():
    clear_cache()
    g = make_uniform_game(r=5)
    part = baseline_partition("incomplete", g.grid)
    data = _uniform_dataset(0.5, 0.5, 600, 9, g.spec)
    grid = [[d, d] for d in (0.2, 0.35, 0.5, 0.65, 0.8, 0.95)]
    lo = confidence_set_theta(g, part, data,
                              TestConfig(theta_domain=_domain(grid),
                                         bootstrap_draws=99, seed=1, alpha=0.05))
    hi = confidence_set_theta(g, part, data,
                              TestConfig(theta_domain=_domain(grid),
                                         bootstrap_draws=99, seed=1, alpha=0.2))
    lo_set = {tuple(t) for t in lo.retained}
    hi_set = {tuple(t) for t in hi.retained}
    assert hi_set <= lo_set
    assert len(lo.records) == len(grid)
    # identical p-values across the two runs (alpha only moves the cut)
    assert [p for _, p in lo.records] == [p for _, p in hi.records]


def test_theta_domain_mesh():
    dom = ThetaDomain((0.0, -1.0), (1.0, 1.0), num=(3, 2))
    pts = dom.grid_points()
    assert pts.shape == (6, 2)
    assert dom.grid_size() == 6
    with pytest.raises(DomainError):
        ThetaDomain((0.0,), (-1.0,))


def test_bootstrap_draws_shared_and_seeded():
    data = MarketDataset(np.array([[40, 10], [25, 20], [20, 25], [15, 45]]), ("a", "b"))
    cfg = TestConfig(theta_domain=_domain([[0.5, 0.5]]), bootstrap_draws=99, seed=42)
    d1 = bootstrap_draws(data, cfg)
    d2 = bootstrap_draws(data, cfg)
    assert all(np.array_equal(a.counts, b.counts) for a, b in zip(d1, d2))
    cfg2 = TestConfig(theta_domain=_domain([[0.5, 0.5]]), bootstrap_draws=99, seed=43)
    d3 = bootstrap_draws(data, cfg2)
    assert any(not np.array_equal(a.counts, b.counts) for a, b in zip(d1, d3))

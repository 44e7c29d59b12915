import numpy as np
import pytest

from bcetest import (
    DomainError,
    ci_endpoint,
    expected_improvement,
    fit_gp,
    maximize_pvalue,
    predict,
)


def test_fit_constant_values():
    gp = fit_gp([[0.0], [0.5], [1.0]], [0.3, 0.3, 0.3], [1.0])
    assert gp.mu_hat == pytest.approx(0.3)
    assert gp.var_hat == pytest.approx(0.0, abs=1e-12)


def test_fit_two_symmetric_points():
    gp = fit_gp([[0.0], [1.0]], [0.2, 0.6], [2.0])
    assert gp.mu_hat == pytest.approx(0.4)


def test_predictor_interpolates():
    rng = np.random.default_rng(0)
    pts = rng.random((20, 2))
    vals = np.sin(3 * pts[:, 0]) + pts[:, 1] ** 2
    gp = fit_gp(pts, vals, [0.5, 0.5])
    for p, y in zip(pts, vals):
        mean, var = predict(gp, p)
        assert mean == pytest.approx(y, abs=1e-8)
        assert var <= 1e-8


def test_predict_far_field_limits():
    gp = fit_gp([[0.0], [0.3]], [0.2, 0.8], [0.01])
    mean, var = predict(gp, [50.0])
    ones = np.ones(2)
    from scipy.linalg import cho_solve

    rinv1 = cho_solve((gp.corr_chol, True), ones)
    assert mean == pytest.approx(gp.mu_hat, abs=1e-9)
    assert var == pytest.approx(gp.var_hat * (1 + 1 / (ones @ rinv1)), abs=1e-9)
    assert var >= 0.0


def test_fit_deduplicates_and_validates():
    with pytest.warns(UserWarning):
        gp = fit_gp([[0.0], [0.0], [1.0]], [0.1, 0.1, 0.5], [1.0])
    assert gp.size == 2
    with pytest.raises(DomainError):
        fit_gp([[0.0]], [0.1], [1.0])
    with pytest.raises(DomainError):
        fit_gp([[0.0], [1.0]], [0.1, 0.2], [-1.0])


def test_expected_improvement_cases():
    gp = fit_gp([[0.0], [1.0]], [0.3, 0.5], [1.0])
    assert expected_improvement(gp, [1.0], 0.5) == pytest.approx(0.0, abs=1e-9)
    m, v = predict(gp, [0.4])
    ei = expected_improvement(gp, [0.4], m)
    assert ei == pytest.approx(np.sqrt(v) / np.sqrt(2 * np.pi), abs=1e-12)
    for theta in (0.2, 0.7, 1.5):
        m, _ = predict(gp, [theta])
        assert expected_improvement(gp, [theta], 0.4) >= max(m - 0.4, 0.0) - 1e-12


def test_maximize_halts_on_first_success():
    calls = []

    def pfun(th):
        calls.append(th)
        return 0.2

    best, p, halted = maximize_pvalue(pfun, (np.zeros(2), np.ones(2)), budget=60,
                                      alpha=0.05, rng=np.random.default_rng(0))
    assert halted and p == 0.2 and len(calls) == 1


def test_maximize_recovers_smooth_optimum():
    theta0 = np.array([0.3, 0.7])
    trace = []
    best, p, halted = maximize_pvalue(
        lambda th: 1.0 - np.sum((np.asarray(th) - theta0) ** 2),
        (np.zeros(2), np.ones(2)), budget=60, alpha=2.0,
        rng=np.random.default_rng(3), trace=trace)
    assert not halted
    assert np.linalg.norm(best - theta0) < 1e-2
    resids = [t["interp_residual"] for t in trace if np.isfinite(t["interp_residual"])]
    assert max(resids) < 1e-8
    incumbents = [t["incumbent"] for t in trace]
    assert all(a <= b + 1e-15 for a, b in zip(incumbents, incumbents[1:]))


def test_maximize_pure_exploration_monotone_incumbent():
    rng = np.random.default_rng(8)
    trace = []
    best, p, halted = maximize_pvalue(
        lambda th: float(np.sin(5 * th[0])), (np.zeros(1), np.ones(1)),
        budget=30, alpha=2.0, epsilon=1.0, rng=rng, trace=trace)
    incumbents = [t["incumbent"] for t in trace]
    assert all(a <= b + 1e-15 for a, b in zip(incumbents, incumbents[1:]))
    assert p == max(t["p"] for t in trace)


def test_maximize_budget_validation():
    with pytest.raises(DomainError):
        maximize_pvalue(lambda th: 0.0, (np.zeros(2), np.ones(2)), budget=5,
                        alpha=0.05)


def test_ci_endpoint_everything_feasible():
    ep = ci_endpoint(lambda th: 1.0, (np.zeros(2), np.ones(2)), 0, "max", 0.05, 40,
                     rng=np.random.default_rng(1))
    assert ep.feasible and ep.value == pytest.approx(1.0)
    ep = ci_endpoint(lambda th: 1.0, (np.zeros(2), np.ones(2)), 1, "min", 0.05, 40,
                     rng=np.random.default_rng(1))
    assert ep.value == pytest.approx(0.0)


def test_ci_endpoint_infeasible_flag():
    ep = ci_endpoint(lambda th: 0.0, (np.zeros(2), np.ones(2)), 0, "max", 0.05, 30,
                     rng=np.random.default_rng(1))
    assert not ep.feasible and np.isnan(ep.value)


def test_ci_endpoint_ball_geometry():
    pfun = lambda th: 1.0 if np.linalg.norm(th) <= 1 else 0.0
    ep = ci_endpoint(pfun, (np.full(2, -2.0), np.full(2, 2.0)), 0, "max", 0.05, 80,
                     rng=np.random.default_rng(1))
    assert ep.feasible and abs(ep.value - 1.0) < 0.05
    ep = ci_endpoint(pfun, (np.full(2, -2.0), np.full(2, 2.0)), 1, "min", 0.05, 80,
                     rng=np.random.default_rng(5))
    assert ep.feasible and abs(ep.value - (-1.0)) < 0.05


def test_ci_endpoint_validation():
    with pytest.raises(DomainError):
        ci_endpoint(lambda th: 1.0, (np.zeros(2), np.ones(2)), 0, "sideways", 0.05, 30)
    with pytest.raises(DomainError):
        ci_endpoint(lambda th: 1.0, (np.zeros(2), np.ones(2)), 7, "max", 0.05, 30)

import logging

import numpy as np
import pytest
import pytest_check as check

from eqtlkit import (
    BetaProblem,
    DataSet,
    ModelFit,
    PenaltyConfig,
    SolverConfig,
    build_estep_stats,
    fit_covmt,
    impute,
    penalized_objective,
    predict,
    prediction_intervals,
    solve_beta,
)
from eqtlkit.ecm import covmt_null_threshold, initial_fit

TIGHT = SolverConfig(prox_tol=1e-10, max_prox_iters=20000, ecm_tol=1e-12, glasso_tol=1e-8)


def random_penalty(rng):
    return PenaltyConfig(
        alpha=float(rng.choice([0.25, 0.5, 0.75, 1.0])),
        lambda_beta=float(rng.uniform(0.01, 0.3)),
        lambda_omega=float(rng.uniform(0.01, 0.3)),
    )


@pytest.mark.parametrize("seed", range(50))
def test_objective_never_increases(make_instance, seed):
    data, _ = make_instance(seed, n=100, p=30, q=5, miss_prob=0.3, signal=0.5)
    pen = random_penalty(np.random.default_rng(seed))
    fit, trace = fit_covmt(data, pen, SolverConfig(max_ecm_iters=50))
    check.is_true(trace.is_monotone(1e-9), trace.objectives)
    check.almost_equal(trace.final_objective, penalized_objective(fit, data, pen), rel=1e-12)


def test_first_iteration_descends_from_any_start(make_instance):
    for seed in range(50):
        data, truth = make_instance(seed, n=40, p=6, q=3, miss_prob=0.3)
        pen = random_penalty(np.random.default_rng(seed))
        start = ModelFit(beta=truth.beta + 0.3, omega=truth.omega)
        _, trace = fit_covmt(data, pen, SolverConfig(max_ecm_iters=1), init=start)
        assert trace.objectives[1] <= trace.objectives[0] + 1e-9 * max(1.0, abs(trace.objectives[0]))


def test_complete_data_large_omega_penalty_is_least_squares(make_instance):
    data, _ = make_instance(1, n=60, p=4, q=3, miss_prob=0.0)
    fit, trace = fit_covmt(data, PenaltyConfig(lambda_beta=0.0, lambda_omega=100.0), TIGHT)
    ols = np.linalg.lstsq(data.X, data.Y, rcond=None)[0]
    check.less_equal(np.abs(fit.beta - ols).max(), 1e-6)
    check.equal(np.count_nonzero(fit.omega - np.diag(np.diag(fit.omega))), 0)


def test_single_response_matches_standalone_solver(make_instance):
    data, _ = make_instance(2, n=50, p=6, q=1, miss_prob=0.0)
    pen = PenaltyConfig(alpha=0.5, lambda_beta=0.05, lambda_omega=0.01)
    fit, trace = fit_covmt(data, pen, TIGHT)
    standalone = solve_beta(BetaProblem(X=data.X, Ybar=data.Y, Omega=fit.omega, pen=pen, cfg=TIGHT))
    assert np.abs(fit.beta - standalone).max() <= 1e-6


def test_converged_fit_is_a_fixed_point(make_instance):
    data, _ = make_instance(3, n=80, p=10, q=4, miss_prob=0.4)
    pen = PenaltyConfig(alpha=0.5, lambda_beta=0.05, lambda_omega=0.05)
    cfg = SolverConfig(prox_tol=1e-9, max_prox_iters=10000)
    fit, trace = fit_covmt(data, pen, cfg)
    check.is_true(trace.converged)
    _, again = fit_covmt(data, pen, cfg, init=fit)
    check.less_equal(len(again.iterations), 2)
    check.less_equal(again.final_objective, trace.final_objective + 1e-9 * max(1.0, abs(trace.final_objective)))


def test_trace_records_every_iteration(make_instance):
    data, _ = make_instance(4, n=40, q=3)
    _, trace = fit_covmt(data, PenaltyConfig(lambda_beta=0.1, lambda_omega=0.1), SolverConfig(max_ecm_iters=3, ecm_tol=1e-15))
    check.equal(len(trace.iterations), 3)
    check.equal(trace.outcome.status, "max-iterations")
    check.equal([it.iteration for it in trace.iterations], [1, 2, 3])
    summary = trace.summary()
    check.equal(summary["iterations"], 3)
    check.equal(summary["status"], "max-iterations")


def test_non_convergence_is_logged(make_instance, caplog):
    data, _ = make_instance(5, n=40, q=3)
    with caplog.at_level(logging.WARNING, logger="eqtlkit.ecm"):
        fit_covmt(data, PenaltyConfig(lambda_beta=0.1, lambda_omega=0.1), SolverConfig(max_ecm_iters=1, ecm_tol=1e-15))
    assert "without converging" in caplog.text


def test_initial_fit_is_positive_definite(make_instance):
    data, _ = make_instance(6, q=4, miss_prob=0.5)
    fit = initial_fit(data)
    check.equal(np.count_nonzero(fit.beta), 0)
    check.greater(np.diag(fit.omega).min(), 0.0)
    check.equal(np.count_nonzero(fit.omega - np.diag(np.diag(fit.omega))), 0)


def test_null_threshold_zeroes_coefficient_step(make_instance):
    data, _ = make_instance(7, n=60, p=8, q=3)
    lam = covmt_null_threshold(data, 1.0)
    init = initial_fit(data)
    stats = build_estep_stats(init, data)
    above = BetaProblem(X=data.X, Ybar=stats.Ybar, Omega=init.omega, pen=PenaltyConfig(alpha=1.0, lambda_beta=1.01 * lam))
    below = above.copy(update=dict(pen=PenaltyConfig(alpha=1.0, lambda_beta=0.9 * lam)))
    check.equal(np.count_nonzero(solve_beta(above)), 0)
    check.greater(np.count_nonzero(solve_beta(below)), 0)


def test_predict_examples(rng):
    beta = rng.standard_normal((4, 3))
    fit = ModelFit(beta=beta, omega=np.eye(3))
    check.is_true(np.array_equal(predict(ModelFit.identity(4, 3), rng.standard_normal((5, 4))), np.zeros((5, 3))))
    check.is_true(np.allclose(predict(fit, np.eye(4)), beta))
    X = rng.standard_normal((6, 4))
    naive = np.array([[sum(X[i, j] * beta[j, k] for j in range(4)) for k in range(3)] for i in range(6)])
    check.is_true(np.allclose(predict(fit, X), naive, atol=1e-12))


def test_predict_dimension_mismatch(rng):
    with pytest.raises(ValueError):
        predict(ModelFit.identity(4, 2), rng.standard_normal((3, 5)))


def test_impute_complete_data_is_identity(make_instance):
    data, fit = make_instance(8, miss_prob=0.0)
    assert np.array_equal(impute(fit, data), data.Y)


def test_impute_identity_covariance_is_prediction(make_instance):
    data, fit = make_instance(9, q=3, miss_prob=0.4)
    independent = ModelFit(beta=fit.beta, omega=np.eye(3))
    completed = impute(independent, data)
    fitted = data.X @ fit.beta
    check.is_true(np.allclose(completed[~data.mask], fitted[~data.mask]))
    check.is_true(np.array_equal(completed[data.mask], data.Y[data.mask]))


def test_impute_bivariate_example():
    fit = ModelFit.from_sigma(np.zeros((1, 2)), [[1.0, 0.5], [0.5, 1.0]])
    data = DataSet.from_arrays([[0.0], [0.0]], [[1.0, np.nan], [0.0, 0.0]])
    completed, covariances = impute(fit, data, return_covariances=True)
    check.almost_equal(completed[0, 1], 0.5, abs=1e-12)
    missing_V = [V for pattern, V in covariances if len(pattern.missing)]
    check.almost_equal(missing_V[0][0, 0], 0.75, abs=1e-12)


def test_prediction_intervals():
    fit = ModelFit.from_sigma(np.zeros((1, 2)), [[1.0, 0.5], [0.5, 1.0]])
    data = DataSet.from_arrays([[0.0], [0.0]], [[1.0, np.nan], [0.0, 0.0]])
    lower, upper = prediction_intervals(fit, data, 0.95)
    check.almost_equal(upper[0, 1] - lower[0, 1], 2 * 1.959963984540054 * np.sqrt(0.75), rel=1e-9)
    check.equal(lower[1, 0], upper[1, 0])
    with pytest.raises(ValueError):
        prediction_intervals(fit, data, 1.5)

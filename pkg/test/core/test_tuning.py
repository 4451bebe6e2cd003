import numpy as np
import pytest
import pytest_check as check

from eqtlkit import PenaltyConfig, SolverConfig, TuningGrid, grid_search, kfold_cv
from eqtlkit.tuning import assign_folds

FAST = SolverConfig(max_ecm_iters=30, ecm_tol=1e-5)


def split(data, n_train):
    return data.subset(np.arange(n_train)), data.holdout(np.arange(n_train, data.n))


def test_single_point_grid(make_instance):
    data, _ = make_instance(0, n=60, p=6, q=3)
    train, valid = split(data, 45)
    grid = TuningGrid(alphas=[0.5], lambda_betas=[0.05], lambda_omegas=[0.1])
    result = grid_search(train, valid, "covmt", grid, FAST)
    check.equal(result.best, PenaltyConfig(alpha=0.5, lambda_beta=0.05, lambda_omega=0.1))
    check.equal(len(result.table), 1)
    check.is_not_none(result.trace)
    check.equal(result.method, "covmt")


@pytest.mark.parametrize("method", ["covmt", "mt"])
def test_informative_penalty_beats_null_model(make_instance, method):
    data, _ = make_instance(1, n=100, p=5, q=3, miss_prob=0.2, signal=2.0)
    train, valid = split(data, 70)
    grid = TuningGrid(alphas=[1.0], lambda_betas=[1e4, 1e-3], lambda_omegas=[0.05])
    result = grid_search(train, valid, method, grid, FAST)
    check.equal(result.best.lambda_beta, 1e-3)
    check.greater(result.valid_r2, 0.3)


def test_ties_go_to_sparser_model(make_instance):
    data, _ = make_instance(2, n=60, q=2)
    train, valid = split(data, 40)
    grid = TuningGrid(alphas=[0.5, 1.0], lambda_betas=[1e6, 2e6], lambda_omegas=[0.1])
    result = grid_search(train, valid, "mt", grid, FAST)
    check.equal(result.best.lambda_beta, 2e6)
    check.equal(result.best.alpha, 1.0)
    check.equal(np.count_nonzero(result.beta), 0)


def test_grid_order_does_not_matter(make_instance):
    data, _ = make_instance(3, n=60, q=2)
    train, valid = split(data, 40)
    a = grid_search(train, valid, "mt", TuningGrid(alphas=[0.25, 1.0], lambda_betas=[0.1, 0.01]), FAST)
    b = grid_search(train, valid, "mt", TuningGrid(alphas=[1.0, 0.25], lambda_betas=[0.01, 0.1]), FAST)
    check.equal(a.best, b.best)
    check.is_true(np.array_equal(a.beta, b.beta))


def test_default_path_starts_at_null_model(make_instance):
    data, _ = make_instance(4, n=60, q=2)
    train, valid = split(data, 40)
    result = grid_search(train, valid, "mt", TuningGrid(alphas=[1.0], n_lambda_beta=4), FAST)
    frame = result.table_frame()
    check.equal(len(frame), 4)
    check.is_true(frame.lambda_beta.is_monotonic_decreasing)


def test_elastic_net_selects_per_response(make_instance):
    data, _ = make_instance(5, n=60, q=3)
    train, valid = split(data, 40)
    result = grid_search(train, valid, "en", TuningGrid(alphas=[1.0], n_lambda_beta=5), FAST)
    check.is_none(result.best)
    check.equal([row.response for row in result.table], [0, 1, 2])
    check.equal(result.beta.shape, (5, 3))


def test_knn_mt_runs(make_instance):
    data, _ = make_instance(6, n=60, q=3)
    train, valid = split(data, 40)
    result = grid_search(train, valid, "knn-mt", TuningGrid(alphas=[1.0], lambda_betas=[0.01], knn_neighbors=5), FAST)
    check.equal(result.method, "knn-mt")


def test_oracle_needs_complete_responses(make_instance):
    data, truth = make_instance(7, n=60, q=2)
    train, valid = split(data, 40)
    with pytest.raises(ValueError):
        grid_search(train, valid, "or-mt", TuningGrid(), FAST)
    Y_complete = np.where(train.mask, train.Y, train.X @ truth.beta)
    result = grid_search(train, valid, "or-mt", TuningGrid(alphas=[1.0], lambda_betas=[0.01]), FAST, Y_complete=Y_complete)
    check.equal(result.method, "or-mt")


def test_unknown_method(make_instance):
    data, _ = make_instance(8)
    train, valid = split(data, 20)
    with pytest.raises(ValueError):
        grid_search(train, valid, "lasso", TuningGrid(), FAST)


def test_assign_folds():
    a = assign_folds(23, 5, seed=4)
    check.is_true(np.array_equal(a, assign_folds(23, 5, seed=4)))
    check.equal(sorted(np.bincount(a).tolist()), [4, 4, 5, 5, 5])
    check.is_false(np.array_equal(a, assign_folds(23, 5, seed=5)))
    with pytest.raises(ValueError):
        assign_folds(10, 2, seed=0)
    with pytest.raises(ValueError):
        assign_folds(4, 5, seed=0)


def test_leave_one_out(make_instance):
    data, _ = make_instance(9, n=10, p=3, q=2, miss_prob=0.0)
    cv = kfold_cv(data, "mt", TuningGrid(alphas=[1.0], lambda_betas=[0.01]), folds=10, cfg=FAST)
    check.equal(len(cv.folds), 10)
    check.equal(sorted(r for f in cv.folds for r in f.test_rows), list(range(10)))
    check.equal([f.valid_fold for f in cv.folds], [(t + 1) % 10 for t in range(10)])


def test_cross_validation_aggregates(make_instance):
    data, _ = make_instance(10, n=60, p=4, q=3, miss_prob=0.2)
    cv = kfold_cv(data, "covmt", TuningGrid(alphas=[1.0], lambda_betas=[0.05], lambda_omegas=[0.1]), folds=3, cfg=FAST)
    check.almost_equal(cv.mean_r2, np.nanmean([r.r2.average for r in cv.reports]))
    freq = cv.omega_support_frequency
    check.is_true(np.all(np.diag(freq) == 1.0))
    check.is_true(np.all((freq >= 0) & (freq <= 1)))
    frame = cv.report_frame()
    check.equal(sorted(frame.fold.unique().tolist()), [0, 1, 2])
    for fold in cv.folds:
        check.equal(fold.predictions.shape, (len(fold.test_rows), 3))


def test_cross_validation_rejects_oracles(make_instance):
    data, _ = make_instance(11)
    with pytest.raises(ValueError):
        kfold_cv(data, "or-en")

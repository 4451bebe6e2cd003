import numpy as np
import pytest
import pytest_check as check

from eqtlkit import DataSet
from eqtlkit.baselines import EnGrid, en_null_threshold, fit_en, fit_oracle_en


def split(data, n_train):
    return data.subset(np.arange(n_train)), data.holdout(np.arange(n_train, data.n))


def test_zero_penalty_is_least_squares(make_instance):
    data, _ = make_instance(0, n=80, p=4, q=3, miss_prob=0.3)
    train, valid = split(data, 60)
    en = fit_en(train, valid, EnGrid(alphas=[0.5], lambdas=[0.0]))
    for k in range(3):
        rows = train.mask[:, k]
        design = np.column_stack([np.ones(rows.sum()), train.X[rows]])
        ols = np.linalg.lstsq(design, train.Y[rows, k], rcond=None)[0]
        check.less_equal(np.abs(en.beta[:, k] - ols[1:]).max(), 1e-8)
        check.almost_equal(en.intercept[k], ols[0], abs=1e-8)


@pytest.mark.parametrize("alpha", [1.0, 0.5])
def test_null_threshold_gives_zero_column(make_instance, alpha):
    data, _ = make_instance(1, n=80, p=6, q=1, miss_prob=0.0)
    train, valid = split(data, 60)
    lam = en_null_threshold(train.X, train.Y[:, 0], alpha)
    en = fit_en(train, valid, EnGrid(alphas=[alpha], lambdas=[1.01 * lam]))
    check.equal(np.count_nonzero(en.beta), 0)
    en = fit_en(train, valid, EnGrid(alphas=[alpha], lambdas=[0.5 * lam]))
    check.greater(np.count_nonzero(en.beta), 0)


def test_null_threshold_without_l1_is_infinite(rng):
    assert en_null_threshold(rng.standard_normal((5, 2)), rng.standard_normal(5), 0.0) == np.inf


def test_validation_picks_informative_penalty(rng):
    X = rng.standard_normal((120, 3))
    Y = X @ np.array([[2.0], [0.0], [-1.0]]) + 0.1 * rng.standard_normal((120, 1))
    data = DataSet.from_arrays(X, Y)
    train, valid = split(data, 80)
    en = fit_en(train, valid, EnGrid(alphas=[1.0], lambdas=[100.0, 0.001]))
    check.equal(en.lambda_[0], 0.001)
    check.greater(en.valid_r2[0], 0.9)


def test_uncentered_data_gets_an_intercept(rng):
    X = rng.integers(0, 3, size=(120, 3)).astype(float)
    Y = 5.0 + X @ np.array([[1.0], [0.0], [-0.5]]) + 0.1 * rng.standard_normal((120, 1))
    train, valid = split(DataSet.from_arrays(X, Y), 80)
    en = fit_en(train, valid, EnGrid(alphas=[1.0], lambdas=[0.001]))
    check.less_equal(np.abs(en.beta[:, 0] - [1.0, 0.0, -0.5]).max(), 0.05)
    check.almost_equal(en.intercept[0], 5.0, abs=0.2)
    check.greater(en.valid_r2[0], 0.9)


def test_ties_go_to_larger_penalty(make_instance):
    data, _ = make_instance(2, n=60, p=4, q=1, miss_prob=0.0)
    train, valid = split(data, 40)
    lam = en_null_threshold(train.X, train.Y[:, 0], 1.0)
    # both points give the zero model and the same validation R2
    en = fit_en(train, valid, EnGrid(alphas=[1.0], lambdas=[2 * lam, 3 * lam]))
    check.equal(en.lambda_[0], 3 * lam)


def test_empty_validation_column_is_flagged(make_instance, caplog):
    data, _ = make_instance(3, n=50, q=2, miss_prob=0.0)
    mask = data.mask.copy()
    mask[40:, 1] = False
    masked = DataSet.from_arrays(data.X, data.Y, mask)
    train, valid = split(masked, 40)
    en = fit_en(train, valid, EnGrid(alphas=[0.5], n_lambdas=5))
    check.equal(en.flagged, [1])
    check.equal(np.count_nonzero(en.beta[:, 1]), 0)
    check.is_true(np.isnan(en.alpha[1]))
    check.is_in("no observed validation entries", caplog.text)


def test_masked_values_are_never_read(make_instance):
    data, _ = make_instance(4, n=80, miss_prob=0.4)
    garbage = DataSet.from_arrays(data.X, np.where(data.mask, data.Y, -1e6), data.mask)
    grid = EnGrid(alphas=[0.5, 1.0], n_lambdas=5)
    a = fit_en(*split(data, 60), grid)
    b = fit_en(*split(garbage, 60), grid)
    assert np.array_equal(a.beta, b.beta)


def test_oracle_sees_complete_responses(make_instance):
    data, truth = make_instance(5, n=80, miss_prob=0.4)
    train, valid = split(data, 60)
    Y_complete = np.where(train.mask, train.Y, train.X @ truth.beta)
    grid = EnGrid(alphas=[1.0], n_lambdas=4)
    oracle = fit_oracle_en(train, Y_complete, valid, grid)
    assert np.array_equal(oracle.beta, fit_en(train.with_responses(Y_complete), valid, grid).beta)


def test_dimension_mismatch(make_instance):
    data, _ = make_instance(6, n=40, q=3)
    other, _ = make_instance(6, n=40, q=2)
    with pytest.raises(ValueError):
        fit_en(data.subset(np.arange(30)), other.holdout(np.arange(30, 40)))

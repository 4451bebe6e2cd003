import numpy as np
import pytest
import pytest_check as check
from pydantic import ValidationError

from eqtlkit import DataSet
from eqtlkit import metrics


def tpr_oracle(beta_hat, support, X, threshold=0.6):
    cor = np.corrcoef(X, rowvar=False)
    hits = total = 0
    for j, k in zip(*np.nonzero(support)):
        total += 1
        hits += any(beta_hat[l, k] != 0 and (l == j or abs(cor[l, j]) > threshold) for l in range(X.shape[1]))
    return hits / total


def test_perfect_prediction():
    Y = np.array([[1.0, 2.0], [3.0, 5.0], [2.0, 1.0]])
    result = metrics.r2_from_predictions(Y, Y, [0.0, 0.0])
    check.is_true(np.allclose(result.per_tissue, 1.0))
    check.equal(result.average, 1.0)


def test_mean_prediction_is_zero():
    y = np.array([1.0, 2.0, 3.0])
    check.equal(metrics.column_r2(y, np.full(3, 2.0), 2.0), 0.0)


def test_negative_r2():
    # predicting the reflection about the baseline doubles the error
    y = np.array([1.0, 3.0])
    check.almost_equal(metrics.column_r2(y, np.array([3.0, 1.0]), 2.0), -3.0)


def test_undefined_columns_are_flagged():
    Y = np.array([[1.0, np.nan, 2.0], [3.0, np.nan, 2.0]])
    result = metrics.r2_from_predictions(Y, np.zeros((2, 3)), [2.0, 0.0, 2.0])
    check.equal(result.flagged, [1, 2])
    check.equal(result.average, result.per_tissue[0])


def test_all_flagged_average_is_nan():
    result = metrics.r2_from_predictions(np.full((2, 1), np.nan), np.zeros((2, 1)), [0.0])
    assert np.isnan(result.average)


def test_r2_uses_training_means(rng):
    X = rng.standard_normal((10, 2))
    beta = np.array([[1.0], [0.0]])
    Y = X @ beta + 0.1 * rng.standard_normal((10, 1))
    with_train = metrics.test_r2(np.zeros((2, 1)), X, Y, [100.0])
    check.greater(with_train.average, 0.99)


@pytest.mark.parametrize("seed", range(10))
def test_ld_tpr_matches_double_loop(seed):
    rng = np.random.default_rng(seed)
    latent = rng.standard_normal((50, 1))
    X = np.hstack([latent + 0.3 * rng.standard_normal((50, 4)), rng.standard_normal((50, 4))])
    support = rng.random((8, 3)) < 0.3
    support[0, 0] = True
    beta_hat = np.where(rng.random((8, 3)) < 0.3, rng.standard_normal((8, 3)), 0.0)
    assert metrics.ld_adjusted_tpr(beta_hat, support, X) == pytest.approx(tpr_oracle(beta_hat, support, X))


def test_ld_tpr_exact_support_is_one(rng):
    X = rng.standard_normal((30, 5))
    support = np.zeros((5, 2), dtype=bool)
    support[[0, 3], 0] = True
    support[1, 1] = True
    check.equal(metrics.ld_adjusted_tpr(support.astype(float), support, X), 1.0)
    check.equal(metrics.ld_adjusted_tpr(np.zeros((5, 2)), support, X), 0.0)


def test_ld_tpr_credits_correlated_proxy():
    x = np.arange(10.0)
    X = np.column_stack([x, x + 0.01 * np.sin(x), np.cos(x)])
    support = np.array([[True], [False], [False]])
    beta_hat = np.array([[0.0], [1.0], [0.0]])
    check.equal(metrics.ld_adjusted_tpr(beta_hat, support, X), 1.0)
    check.equal(metrics.ld_adjusted_tpr(beta_hat, support, X, cor_threshold=1.0), 0.0)


def test_ld_tpr_monotone_in_selection(rng):
    X = rng.standard_normal((40, 6))
    support = rng.random((6, 2)) < 0.5
    support[0, 0] = True
    beta_hat = np.zeros((6, 2))
    previous = 0.0
    for j, k in np.ndindex(6, 2):
        beta_hat[j, k] = 1.0
        current = metrics.ld_adjusted_tpr(beta_hat, support, X)
        check.greater_equal(current, previous)
        previous = current


def test_ld_tpr_empty_support():
    with pytest.raises(ValueError):
        metrics.ld_adjusted_tpr(np.ones((2, 2)), np.zeros((2, 2), dtype=bool), np.eye(2))


def test_model_size():
    check.equal(metrics.model_size(np.zeros((3, 4))), 0.0)
    check.equal(metrics.model_size(np.ones((3, 4))), 1.0)
    check.equal(metrics.model_size([[1.0, 0.0], [0.0, 1e-13]]), 0.25)


@pytest.mark.parametrize("value, selected", [(0.5 * metrics.ZERO_TOL, False), (metrics.ZERO_TOL, True)])
def test_selection_threshold_is_shared(value, selected):
    X = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.0, 0.0]])
    beta = np.array([[value], [0.0]])
    support = np.array([[True], [False]])
    check.equal(metrics.ld_adjusted_tpr(beta, support, X), float(selected))
    check.equal(metrics.model_size(beta), 0.5 * selected)


def test_evaluate_report(make_instance):
    data, truth = make_instance(0, n=40, miss_prob=0.3)
    test = data.holdout(np.arange(40))
    report = metrics.evaluate(truth.beta, test, data.observed_column_means(), method="covmt", support_star=truth.beta != 0, fold=2)
    check.equal(report.ld_tpr, 1.0)
    check.equal(report.model_size, metrics.model_size(truth.beta))
    rows = report.long_rows(setting="A")
    check.equal([r["metric"] for r in rows], ["test_r2", "ld_tpr", "model_size"])
    check.equal(rows[0]["fold"], 2)
    check.equal(rows[0]["setting"], "A")


def test_report_without_weights_has_no_model_size():
    report = metrics.MetricReport(method="en", r2=metrics.R2Result(per_tissue=[0.5], average=0.5))
    check.is_none(report.model_size)
    check.equal([r["metric"] for r in report.long_rows()], ["test_r2"])


def test_report_rejects_r2_above_one():
    with pytest.raises(ValidationError):
        metrics.MetricReport(r2=metrics.R2Result(per_tissue=[1.5], average=1.5), model_size=0.0)


def test_holdout_with_unobserved_column(make_instance):
    data, truth = make_instance(1, n=20, q=2, miss_prob=0.0)
    mask = data.mask.copy()
    mask[:, 1] = False
    mask[0, 1] = True
    holdout = DataSet.from_arrays(data.X, data.Y, mask).holdout(np.arange(1, 20))
    report = metrics.evaluate(truth.beta, holdout, [0.0, 0.0])
    check.equal(report.r2.flagged, [1])
    check.is_true(np.isfinite(report.average_r2))

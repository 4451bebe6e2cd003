"""Random instances shared by the test modules."""
import numpy as np

from eqtlkit import DataSet, ModelFit


def random_mask(rng, n, q, miss_prob):
    """Bernoulli mask with every row and column keeping at least one observed entry."""
    mask = rng.random((n, q)) >= miss_prob
    for i in np.flatnonzero(~mask.any(axis=1)):
        mask[i, rng.integers(q)] = True
    for k in np.flatnonzero(~mask.any(axis=0)):
        mask[rng.integers(n), k] = True
    return mask


def random_spd(rng, q, ridge=0.5):
    A = rng.standard_normal((q, q))
    return A @ A.T / q + ridge * np.eye(q)


def random_instance(seed, n=30, p=5, q=3, miss_prob=0.3, signal=1.0):
    """A DataSet drawn from the multivariate model plus the fit that generated it."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    beta = signal * rng.standard_normal((p, q)) * (rng.random((p, q)) < 0.5)
    sigma = random_spd(rng, q)
    E = rng.multivariate_normal(np.zeros(q), sigma, size=n)
    Y = X @ beta + E
    mask = random_mask(rng, n, q, miss_prob)
    data = DataSet.from_arrays(X, np.where(mask, Y, np.nan))
    return data, ModelFit.from_sigma(beta, sigma)

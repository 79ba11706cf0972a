"""Independent reference computations used by the tests."""

import numpy as np


def newton_poisson(X, y, tol=1e-14, max_iter=200):
    """Poisson log-link MLE by plain Newton-Raphson on the score equations.

    Starts at the intercept-only solution and uses the exact Hessian
    ``X' diag(mu) X``; aborts if the score norm fails to fall.
    """
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    beta = np.zeros(X.shape[1])
    beta[0] = np.log(y.mean())
    for _ in range(max_iter):
        mu = np.exp(X @ beta)
        score = X.T @ (y - mu)
        hess = X.T @ (X * mu[:, None])
        step = np.linalg.solve(hess, score)
        beta = beta + step
        if np.max(np.abs(step)) < tol:
            break
    return beta


def loocv_brute(X, y):
    """Leave-one-out mean squared prediction error by refitting n times."""
    n = len(y)
    errs = np.empty(n)
    for i in range(n):
        keep = np.arange(n) != i
        coef, *_ = np.linalg.lstsq(X[keep], y[keep], rcond=None)
        errs[i] = y[i] - X[i] @ coef
    return float(np.mean(errs**2))


def draw_quasi_poisson(mu, phi, rng):
    """Negative-binomial counts with variance phi * mu (Poisson when phi == 1)."""
    mu = np.asarray(mu, float)
    if phi == 1:
        return rng.poisson(mu).astype(float)
    size = mu / (phi - 1)
    return rng.negative_binomial(size, size / (size + mu)).astype(float)

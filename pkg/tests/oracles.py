"""Independent reference implementations used by several test modules."""

import numpy as np


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def newton_mle(X, y, w, tol=1e-13, max_iter=200):
    """Plain damped Newton on the weighted negative log-likelihood."""
    beta = np.zeros(X.shape[1])

    def nll(b):
        p = np.clip(sigmoid(X @ b), 1e-300, 1 - 1e-16)
        return -np.sum(w * (y * np.log(p) + (1 - y) * np.log1p(-p)))

    f = nll(beta)
    for _ in range(max_iter):
        p = sigmoid(X @ beta)
        g = X.T @ (w * (p - y))
        if np.max(np.abs(g)) < tol:
            break
        H = (X * (w * p * (1 - p))[:, None]).T @ X
        step = np.linalg.solve(H, g)
        t = 1.0
        while nll(beta - t * step) > f and t > 1e-12:
            t /= 2
        beta = beta - t * step
        f = nll(beta)
    return beta


def logistic_fixture(rng, n, p, signal=1.0, intercept=-0.5):
    X = np.column_stack([np.ones(n), rng.standard_normal((n, p))])
    beta = np.r_[intercept, rng.normal(0, signal / np.sqrt(p), p)]
    y = (rng.random(n) < sigmoid(X @ beta)).astype(float)
    if y.sum() < 3 or y.sum() > n - 3:
        y[:3], y[-3:] = 1, 0
    return X, y


def class_weight_rows(y):
    n_pos, n_neg = y.sum(), len(y) - y.sum()
    return np.where(y == 1, 0.5 / n_pos, 0.5 / n_neg)


def mann_whitney(labels, scores):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    num = 0
    for a in pos:
        for b in neg:
            num += 2 if a > b else (1 if a == b else 0)
    return num / (2 * len(pos) * len(neg))

"""Penalized, class-weighted logistic regression.

The objective minimized by :func:`fit` is

    -sum_t [w+ y_t log p_t + w- (1 - y_t) log(1 - p_t)]
        + lam * ((1 - alpha) * sum_j beta_j**2 + alpha * sum_j |beta_j|)

with the intercept (column 0) left out of the penalty.  It is a raw sum,
so ``lam`` is on the scale of the summed weights (1 when class-weighted,
``n`` when not).

The solver is IRLS: each outer step builds the quadratic model of the smooth
part around the current coefficients and minimizes it plus the penalty by
cyclic coordinate descent with soft-thresholding, working on the weighted
Gram matrix so a sweep costs O(p^2) instead of O(n p).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import DegenerateError

PROB_CLAMP = 1e-15
KKT_TOL = 1e-6
COEF_TOL = 1e-7
MAX_SWEEPS = 100_000


@dataclass(frozen=True)
class PenaltySpec:
    alpha: float = 0.0
    lam: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha {self.alpha} outside [0, 1]")
        if self.lam < 0:
            raise ValueError(f"lambda {self.lam} negative")


@dataclass(frozen=True)
class ModelSpec:
    name: str
    penalty: PenaltySpec = PenaltySpec()
    weighted: bool = True


@dataclass(frozen=True)
class ClassWeights:
    w_pos: float
    w_neg: float

    def per_row(self, y) -> np.ndarray:
        return np.where(np.asarray(y) == 1, self.w_pos, self.w_neg)


UNIT_WEIGHTS = ClassWeights(1.0, 1.0)


@dataclass(frozen=True)
class FitResult:
    coefficients: np.ndarray
    converged: bool
    iterations: int
    sweeps: int
    objective: float
    kkt: float


def class_weights(labels) -> ClassWeights:
    y = np.asarray(labels)
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise DegenerateError("class weights need both classes in the labels")
    return ClassWeights(1.0 / n_pos * 0.5, 1.0 / n_neg * 0.5)


def row_weights(y, weighted: bool) -> np.ndarray:
    return (class_weights(y) if weighted else UNIT_WEIGHTS).per_row(y)


def predict_proba(coefficients, rows) -> np.ndarray:
    eta = np.asarray(rows, dtype=float) @ np.asarray(coefficients, dtype=float)
    out = np.empty_like(eta, dtype=float)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def penalty_value(beta, penalty: PenaltySpec) -> float:
    b = np.asarray(beta)[1:]
    return penalty.lam * ((1 - penalty.alpha) * np.dot(b, b) + penalty.alpha * np.abs(b).sum())


def neg_loglik(beta, X, y, w) -> float:
    p = np.clip(predict_proba(beta, X), PROB_CLAMP, 1 - PROB_CLAMP)
    return float(-np.sum(w * (y * np.log(p) + (1 - y) * np.log(1 - p))))


def objective(beta, X, y, weights: ClassWeights | None, penalty: PenaltySpec) -> float:
    """Penalized negative log-likelihood; ``weights=None`` means unweighted."""
    y = np.asarray(y, dtype=float)
    w = (weights or UNIT_WEIGHTS).per_row(y)
    return neg_loglik(beta, X, y, w) + penalty_value(beta, penalty)


def smooth_gradient(beta, X, y, w) -> np.ndarray:
    """Gradient of the (unpenalized) negative log-likelihood."""
    p = predict_proba(beta, X)
    return np.asarray(X).T @ (w * (p - np.asarray(y, dtype=float)))


def _kkt(grad, beta, penalty: PenaltySpec) -> float:
    l1 = penalty.alpha * penalty.lam
    l2 = 2 * (1 - penalty.alpha) * penalty.lam
    g, b = grad[1:], beta[1:]
    zero = b == 0
    res = np.where(zero, np.maximum(0.0, np.abs(g) - l1), np.abs(g + l1 * np.sign(b) + l2 * b))
    return float(max(abs(grad[0]), res.max(initial=0.0)))


def kkt_residual(fit_or_beta, X, y, weights: ClassWeights | None, penalty: PenaltySpec) -> float:
    """Largest violation of the optimality conditions, intercept included."""
    beta = getattr(fit_or_beta, "coefficients", fit_or_beta)
    beta = np.asarray(beta, dtype=float)
    yv = np.asarray(y, dtype=float)
    w = (weights or UNIT_WEIGHTS).per_row(yv)
    return _kkt(smooth_gradient(beta, X, yv, w), beta, penalty)


@njit(cache=True)
def _cd_quadratic(H, g0, beta0, beta, l1, l2, tol, max_sweeps):
    # minimize g0.(b - beta0) + (b - beta0)' H (b - beta0) / 2 + penalty(b), in place
    p = beta.shape[0]
    G = g0.copy()
    for j in range(p):
        d = beta[j] - beta0[j]
        if d != 0.0:
            for k in range(p):
                G[k] += H[k, j] * d
    for sweep in range(max_sweeps):
        maxdelta = 0.0
        for j in range(p):
            hjj = H[j, j]
            if j == 0:
                if hjj <= 0.0:
                    continue
                new = beta[j] - G[j] / hjj
            else:
                denom = hjj + 2.0 * l2
                if denom <= 0.0:
                    continue
                z = hjj * beta[j] - G[j]
                if z > l1:
                    new = (z - l1) / denom
                elif z < -l1:
                    new = (z + l1) / denom
                else:
                    new = 0.0
            d = new - beta[j]
            if d != 0.0:
                beta[j] = new
                for k in range(p):
                    G[k] += H[k, j] * d
                ad = abs(d)
                if ad > maxdelta:
                    maxdelta = ad
        if maxdelta < tol:
            return sweep + 1
    return max_sweeps


def null_intercept(y, w) -> float:
    rate = float(np.sum(w * y) / np.sum(w))
    rate = min(max(rate, PROB_CLAMP), 1 - PROB_CLAMP)
    return float(np.log(rate / (1 - rate)))


def lambda_max(X, y, alpha: float, weighted: bool = True) -> float:
    """Smallest lambda at which every slope is zero for the given ``alpha > 0``."""
    y = np.asarray(y, dtype=float)
    w = row_weights(y, weighted)
    beta = np.zeros(X.shape[1])
    beta[0] = null_intercept(y, w)
    g = smooth_gradient(beta, X, y, w)
    return float(np.abs(g[1:]).max() / alpha)


def fit(X, y, model: ModelSpec, beta0=None, *, kkt_tol: float = KKT_TOL,
        coef_tol: float = COEF_TOL, max_sweeps: int = MAX_SWEEPS,
        max_outer: int = 100, max_inner: int = 1000) -> FitResult:
    """Minimize the penalized weighted negative log-likelihood.

    Iteration stops once the KKT residual is below ``kkt_tol`` and the last
    IRLS step moved no coefficient by ``coef_tol`` or more.
    ``converged`` is set only when the KKT residual is below ``kkt_tol``;
    hitting ``max_outer`` IRLS steps or ``max_sweeps`` coordinate sweeps
    returns the last iterate with ``converged=False``.
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    pen = model.penalty
    w = row_weights(y, model.weighted)
    l1 = pen.alpha * pen.lam
    l2 = (1 - pen.alpha) * pen.lam
    if beta0 is None:
        beta = np.zeros(X.shape[1])
        beta[0] = null_intercept(y, w)
    else:
        beta = np.array(beta0, dtype=float)
    inner_tol = coef_tol * 1e-3

    def obj(b):
        return neg_loglik(b, X, y, w) + penalty_value(b, pen)

    f = obj(beta)
    sweeps = 0
    outer = 0
    kkt = np.inf
    moved = np.inf
    for outer in range(1, max_outer + 1):
        p = predict_proba(beta, X)
        grad = X.T @ (w * (p - y))
        kkt = _kkt(grad, beta, pen)
        if kkt < kkt_tol and moved < coef_tol:
            outer -= 1
            break
        if sweeps >= max_sweeps:
            break
        v = w * np.maximum(p * (1 - p), 1e-10)
        H = X.T @ (X * v[:, None])
        cand = beta.copy()
        sweeps += _cd_quadratic(H, grad, beta, cand, l1, l2, inner_tol,
                                min(max_inner, max_sweeps - sweeps))
        step = cand - beta
        t = 1.0
        f_new = obj(beta + step)
        while f_new > f + 1e-13 * max(1.0, abs(f)) and t > 1e-8:
            t *= 0.5
            f_new = obj(beta + t * step)
        if f_new > f + 1e-13 * max(1.0, abs(f)):
            break
        beta = beta + t * step
        f = f_new
        moved = float(np.max(np.abs(t * step)))
        if moved < 1e-15:
            break
    beta[1:][beta[1:] == 0.0] = 0.0
    kkt = _kkt(X.T @ (w * (predict_proba(beta, X) - y)), beta, pen)
    return FitResult(beta, bool(kkt < kkt_tol), outer, sweeps, float(f), float(kkt))

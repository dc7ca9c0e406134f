import numpy as np
import pytest
from hypothesis import given, strategies as st

from rtrecession import glm
from rtrecession.errors import DegenerateError
from rtrecession.glm import ClassWeights, ModelSpec, PenaltySpec

from oracles import class_weight_rows, logistic_fixture, newton_mle, sigmoid


def model(alpha=0.0, lam=0.0, weighted=True):
    return ModelSpec("m", PenaltySpec(alpha, lam), weighted)


def test_class_weights():
    y = np.r_[np.ones(20), np.zeros(160)]
    w = glm.class_weights(y)
    assert (w.w_pos, w.w_neg) == (0.025, 0.003125)
    assert w.per_row(y).sum() == pytest.approx(1.0, abs=1e-15)
    w = glm.class_weights([1, 0, 1, 0])
    assert w.w_pos == w.w_neg == 0.25
    with pytest.raises(DegenerateError):
        glm.class_weights([0, 0, 0])


def test_penalty_spec_domain():
    with pytest.raises(ValueError):
        PenaltySpec(1.5, 1.0)
    with pytest.raises(ValueError):
        PenaltySpec(0.5, -1.0)


def test_objective_examples():
    rng = np.random.default_rng(1)
    X = np.column_stack([np.ones(6), rng.normal(size=(6, 2))])
    y = np.array([1, 0, 1, 0, 1, 0.0])
    assert glm.objective(np.zeros(3), X, y, None, PenaltySpec(0.3, 2.0)) == pytest.approx(6 * np.log(2))
    b = np.array([0.2, -0.4, 0.9])
    assert glm.objective(b, X, y, None, PenaltySpec(0.5, 0.0)) == glm.neg_loglik(b, X, y, np.ones(6))


def test_objective_matches_loop():
    rng = np.random.default_rng(2)
    X, y = logistic_fixture(rng, 15, 3)
    b = rng.normal(size=4)
    w = glm.class_weights(y)
    pen = PenaltySpec(0.3, 0.7)
    total = 0.0
    for t in range(len(y)):
        eta = sum(X[t, j] * b[j] for j in range(4))
        p = 1 / (1 + np.exp(-eta))
        total -= (w.w_pos * np.log(p)) if y[t] == 1 else (w.w_neg * np.log(1 - p))
    total += 0.7 * (0.7 * sum(v * v for v in b[1:]) + 0.3 * sum(abs(v) for v in b[1:]))
    assert glm.objective(b, X, y, w, pen) == pytest.approx(total, rel=1e-13)


def test_objective_clamps_probabilities():
    X = np.array([[1.0, 1.0], [1.0, -1.0]])
    v = glm.objective(np.array([0.0, 1e4]), X, np.array([0.0, 1.0]), None, PenaltySpec())
    expect = -np.log(1e-15) - np.log(1.0 - (1.0 - 1e-15))
    assert np.isfinite(v) and v == pytest.approx(expect, rel=1e-12)


def test_predict_proba():
    rng = np.random.default_rng(4)
    R = rng.normal(size=(30, 4))
    assert (glm.predict_proba(np.zeros(4), R) == 0.5).all()
    assert glm.predict_proba([np.log(3)], [[1.0]])[0] == pytest.approx(0.75, abs=1e-15)
    b = rng.normal(size=4)
    np.testing.assert_allclose(glm.predict_proba(b, R), 1 / (1 + np.exp(-(R @ b))), rtol=0, atol=1e-15)
    with np.errstate(over="raise", invalid="raise", divide="raise"):
        p = glm.predict_proba([1.0], [[800.0], [-800.0]])
    assert p[0] == 1.0 and 0 <= p[1] < 1e-300


@pytest.mark.parametrize("weighted", [False, True])
@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0])
def test_lambda_zero_matches_newton(weighted, alpha):
    rng = np.random.default_rng(10 + int(weighted))
    X, y = logistic_fixture(rng, 150, 5)
    w = class_weight_rows(y) if weighted else np.ones(len(y))
    res = glm.fit(X, y, model(alpha, 0.0, weighted))
    assert res.converged
    np.testing.assert_allclose(res.coefficients, newton_mle(X, y, w), atol=1e-6)


def test_l1_above_lambda_max_zeroes_slopes():
    rng = np.random.default_rng(5)
    X, y = logistic_fixture(rng, 120, 6, signal=2.0)
    for weighted in (True, False):
        lmax = glm.lambda_max(X, y, 1.0, weighted)
        res = glm.fit(X, y, model(1.0, lmax * 1.001, weighted))
        assert res.converged
        assert (res.coefficients[1:] == 0).all()
        w = class_weight_rows(y) if weighted else np.ones(len(y))
        rate = np.sum(w * y) / np.sum(w)
        assert res.coefficients[0] == pytest.approx(np.log(rate / (1 - rate)), abs=1e-9)
        below = glm.fit(X, y, model(1.0, lmax * 0.95, weighted))
        assert (below.coefficients[1:] != 0).any()


def _grid_oracle(X, y, w, pen):
    """Brute force: nested 3-D grids, step 1e-3 then refined to 1e-5."""
    def f(B):
        eta = B @ X.T
        nll = np.sum(w * (np.logaddexp(0, eta) - y * eta), axis=-1)
        s = B[:, 1:]
        return nll + pen.lam * ((1 - pen.alpha) * (s**2).sum(1) + pen.alpha * np.abs(s).sum(1))

    center = np.zeros(3)
    for half, step in ((2.0, 0.05), (0.1, 1e-3), (2e-3, 1e-4), (2e-4, 1e-5)):
        ax = np.arange(-half, half + step / 2, step)
        G = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), -1).reshape(-1, 3) + center
        # slopes exactly at zero are part of every grid, as they are optimal under L1 kinks
        vals = np.concatenate([f(G[i:i + 200_000]) for i in range(0, len(G), 200_000)])
        center = G[np.argmin(vals)]
    return center


def test_two_slope_fixture_matches_grid_search():
    rng = np.random.default_rng(6)
    X, y = logistic_fixture(rng, 60, 2, signal=1.5)
    pen = PenaltySpec(0.5, 0.1)
    w = np.ones(len(y))
    res = glm.fit(X, y, ModelSpec("enet", pen, weighted=False))
    assert res.converged
    np.testing.assert_allclose(res.coefficients, _grid_oracle(X, y, w, pen), atol=1e-4)


def test_kkt_examples():
    rng = np.random.default_rng(7)
    X, y = logistic_fixture(rng, 100, 4)
    res = glm.fit(X, y, model(0.0, 0.0, False))
    assert glm.kkt_residual(res, X, y, None, PenaltySpec()) < 1e-6
    pen = PenaltySpec(1.0, glm.lambda_max(X, y, 1.0) * 2)
    zero = glm.fit(X, y, ModelSpec("lasso", pen))
    assert glm.kkt_residual(zero, X, y, glm.class_weights(y), pen) < 1e-6
    bumped = res.coefficients + 0.1
    assert glm.kkt_residual(bumped, X, y, None, PenaltySpec()) > 1e-2


def test_kkt_formula_by_hand():
    X = np.array([[1.0, 1.0, 0.0], [1.0, -1.0, 2.0], [1.0, 0.5, -1.0]])
    y = np.array([1.0, 0.0, 1.0])
    b = np.array([0.1, 0.0, -0.3])
    pen = PenaltySpec(0.25, 0.8)
    p = sigmoid(X @ b)
    g = X.T @ (p - y)
    expect = max(abs(g[0]), max(0.0, abs(g[1]) - 0.2), abs(g[2] - 0.2 + 2 * 0.6 * -0.3))
    assert glm.kkt_residual(b, X, y, None, pen) == pytest.approx(expect, rel=1e-14)


def test_penalized_fits_are_certified():
    rng = np.random.default_rng(8)
    X, y = logistic_fixture(rng, 200, 8)
    for alpha in (0.0, 0.25, 0.5, 1.0):
        for lam in (1e-4, 1e-2, 0.1):
            pen = PenaltySpec(alpha, lam)
            res = glm.fit(X, y, ModelSpec("m", pen))
            assert res.converged
            assert glm.kkt_residual(res, X, y, glm.class_weights(y), pen) < 1e-6
            assert res.objective == pytest.approx(glm.objective(res.coefficients, X, y, glm.class_weights(y), pen))


def test_nonconvergence_is_flagged():
    rng = np.random.default_rng(9)
    X, y = logistic_fixture(rng, 200, 8)
    res = glm.fit(X, y, model(0.5, 1e-3), max_sweeps=1)
    assert not res.converged and res.kkt > 1e-6


def test_separable_data_does_not_claim_convergence():
    X = np.column_stack([np.ones(20), np.r_[np.linspace(-2, -0.1, 10), np.linspace(0.1, 2, 10)]])
    y = np.r_[np.zeros(10), np.ones(10)]
    res = glm.fit(X, y, model(0.0, 0.0, False))
    assert not res.converged or res.kkt < 1e-6
    assert res.coefficients[1] > 10
    ridge = glm.fit(X, y, model(0.0, 0.01))
    assert ridge.converged


def test_l1_norm_shrinks_along_path():
    rng = np.random.default_rng(11)
    X, y = logistic_fixture(rng, 150, 8, signal=2.0)
    # start just above lambda_max: at equality the zero slopes sit on a rounding knife edge
    lams = np.logspace(np.log10(glm.lambda_max(X, y, 1.0) * (1 + 1e-9)), -4, 40)
    beta, norms = None, []
    for lam in lams:
        res = glm.fit(X, y, ModelSpec("lasso", PenaltySpec(1.0, lam)), beta0=beta)
        assert res.converged
        beta = res.coefficients
        norms.append(np.abs(beta[1:]).sum())
    assert all(b >= a - 1e-7 for a, b in zip(norms, norms[1:]))
    assert norms[0] == 0


def test_row_permutation_and_duplication():
    rng = np.random.default_rng(12)
    X, y = logistic_fixture(rng, 120, 5)
    m = model(0.5, 0.01)
    base = glm.fit(X, y, m).coefficients
    perm = rng.permutation(len(y))
    np.testing.assert_allclose(glm.fit(X[perm], y[perm], m).coefficients, base, atol=1e-8)
    dup = glm.fit(np.vstack([X, X]), np.r_[y, y], m).coefficients
    np.testing.assert_allclose(glm.predict_proba(dup, X), glm.predict_proba(base, X), atol=1e-8)


def test_ridge_is_the_alpha_limit_of_enet():
    rng = np.random.default_rng(13)
    X, y = logistic_fixture(rng, 120, 5)
    a = glm.fit(X, y, model(0.0, 0.05)).coefficients
    b = glm.fit(X, y, model(1e-7, 0.05)).coefficients
    np.testing.assert_allclose(a, b, atol=1e-5)


def test_fit_is_deterministic():
    rng = np.random.default_rng(14)
    X, y = logistic_fixture(rng, 100, 6)
    a = glm.fit(X, y, model(0.75, 0.003))
    b = glm.fit(X, y, model(0.75, 0.003))
    np.testing.assert_array_equal(a.coefficients, b.coefficients)


@given(st.integers(0, 10_000))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    X, y = logistic_fixture(rng, 40, 3)
    w = class_weight_rows(y)
    b = rng.normal(size=4)
    g = glm.smooth_gradient(b, X, y, w)
    h = 1e-6
    fd = np.array([(glm.neg_loglik(b + h * e, X, y, w) - glm.neg_loglik(b - h * e, X, y, w)) / (2 * h)
                   for e in np.eye(4)])
    assert np.max(np.abs(fd - g)) <= 1e-5 * max(1.0, np.max(np.abs(g)))


def test_unit_weights_constant():
    assert glm.UNIT_WEIGHTS == ClassWeights(1.0, 1.0)

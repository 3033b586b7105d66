"""Epsilon-SVR: tube behavior, KKT certificates, dual optimality vs a
projected-gradient QP oracle."""

import numpy as np
import pytest

from parkcast.errors import ConvergenceError
from parkcast.models import fit_svr, predict
from parkcast.models.svr import dual_objective, kernel_matrix, smo_solve


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


def kkt_violations(X, y, model, tol):
    """Independent KKT checker over the training set.

    Recomputes f(x_i) from the stored supports and validates every
    complementarity case of the epsilon-insensitive dual.
    """
    p = model.params
    f = predict(model, X)
    beta = np.zeros(len(y))
    # reconstruct the full dual vector by matching support rows
    for sv, coef in zip(p.support_vectors, p.dual_coef):
        idx = np.flatnonzero(np.all(np.isclose(X, sv, atol=0, rtol=0), axis=1))
        beta[idx[0]] += coef
    violations = []
    eps, C = p.epsilon, p.C
    for i in range(len(y)):
        e = y[i] - f[i]
        b = beta[i]
        if abs(b) < 1e-12:
            v = max(0.0, abs(e) - eps)
        elif 0 < b < C - 1e-12:
            v = abs(e - eps)
        elif b >= C - 1e-12:
            v = max(0.0, eps - e)
        elif -C + 1e-12 < b < 0:
            v = abs(e + eps)
        else:  # b == -C
            v = max(0.0, eps + e)
        violations.append(v)
    return np.array(violations), beta


def project_box_hyperplane(a, astar, C):
    """Exact projection onto {0 <= a, a* <= C, sum(a) = sum(a*)} by bisection."""
    lo, hi = -2 * C - 1.0, 2 * C + 1.0
    for _ in range(60):
        th = 0.5 * (lo + hi)
        gap = np.clip(a - th, 0, C).sum() - np.clip(astar + th, 0, C).sum()
        if gap > 0:
            lo = th
        else:
            hi = th
    th = 0.5 * (lo + hi)
    return np.clip(a - th, 0, C), np.clip(astar + th, 0, C)


def projected_gradient_qp(K, y, C, eps, iters=3000):
    """FISTA on the smooth (alpha, alpha*) form of the dual; dense QP oracle."""
    n = y.size
    step = 1.0 / (2.0 * np.linalg.norm(K, 2) + 1e-9)
    a = np.zeros(n)
    astar = np.zeros(n)
    ta, tastar, tk = a.copy(), astar.copy(), 1.0
    for _ in range(iters):
        g = K @ (ta - tastar) - y
        na, nastar = project_box_hyperplane(ta - step * (g + eps), tastar - step * (-g + eps), C)
        tk1 = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
        mom = (tk - 1.0) / tk1
        ta = na + mom * (na - a)
        tastar = nastar + mom * (nastar - astar)
        a, astar, tk = na, nastar, tk1
    return a - astar


TOY_X = np.array([[0.0], [1.0], [2.0], [3.0], [4.0]])
TOY_Y = np.array([0.1, 1.2, 1.9, 3.3, 3.8])


class TestTube:
    def test_data_inside_tube_needs_no_supports(self):
        x = np.linspace(0, 1, 12).reshape(-1, 1)
        y = 0.05 + 0.02 * x[:, 0]  # spread 0.02 << 2*eps
        model = fit_svr(x, y, C=1.0, epsilon=0.1, kernel="linear")
        assert len(model.params.dual_coef) == 0
        preds = predict(model, x)
        assert np.all(np.abs(y - preds) <= 0.1 + 1e-9)


class TestKkt:
    @pytest.mark.parametrize("kernel", ["linear", "rbf"])
    def test_converged_fit_satisfies_kkt(self, kernel):
        rng = np.random.default_rng(21)
        X = rng.normal(size=(40, 2))
        y = np.sin(X[:, 0]) + 0.3 * X[:, 1] + 0.05 * rng.normal(size=40)
        model = fit_svr(X, y, C=2.0, epsilon=0.05, kernel=kernel, tol=1e-3)
        violations, beta = kkt_violations(X, y, model, tol=1e-3)
        assert violations.max() <= 1e-3 + 1e-9
        assert abs(beta.sum()) < 1e-9
        assert np.all(np.abs(model.params.dual_coef) <= model.params.C + 1e-12)

    def test_dual_constraints_on_toy(self):
        model = fit_svr(TOY_X, TOY_Y, C=1.0, epsilon=0.1, kernel="linear", tol=1e-8)
        assert abs(model.params.dual_coef.sum()) < 1e-9
        assert np.all(np.abs(model.params.dual_coef) <= 1.0 + 1e-12)


class TestDualOptimality:
    def test_toy_matches_projected_gradient_oracle(self):
        K = kernel_matrix("linear", None, TOY_X, TOY_X)
        beta, _ = smo_solve(K, TOY_Y, C=1.0, epsilon=0.1, tol=1e-9, max_sweeps=100_000)
        beta_pg = projected_gradient_qp(K, TOY_Y, C=1.0, eps=0.1)
        mine = dual_objective(K, TOY_Y, beta, 0.1)
        oracle = dual_objective(K, TOY_Y, beta_pg, 0.1)
        assert abs(mine - oracle) <= 1e-6

    def test_rbf_toy_matches_oracle(self):
        rng = np.random.default_rng(1)
        X = rng.uniform(-1, 1, size=(6, 1))
        y = np.sin(3 * X[:, 0])
        K = kernel_matrix("rbf", 0.5, X, X)
        beta, _ = smo_solve(K, y, C=5.0, epsilon=0.01, tol=1e-9, max_sweeps=100_000)
        beta_pg = projected_gradient_qp(K, y, C=5.0, eps=0.01, iters=6000)
        assert abs(
            dual_objective(K, y, beta, 0.01) - dual_objective(K, y, beta_pg, 0.01)
        ) <= 1e-6


class TestPrediction:
    def test_linear_kernel_equals_explicit_weights(self):
        rng = np.random.default_rng(33)
        X = rng.normal(size=(30, 3))
        y = X @ np.array([1.0, -0.5, 0.2]) + 0.3 + 0.05 * rng.normal(size=30)
        model = fit_svr(X, y, C=10.0, epsilon=0.02, kernel="linear")
        w = model.params.support_vectors.T @ model.params.dual_coef
        explicit = X @ w + model.params.bias
        assert np.max(np.abs(predict(model, X) - explicit)) < 1e-10

    def test_predict_is_deterministic(self):
        model = fit_svr(TOY_X, TOY_Y, C=1.0, epsilon=0.1, kernel="rbf")
        assert np.array_equal(predict(model, TOY_X), predict(model, TOY_X))


class TestConvergenceControl:
    def test_iteration_budget_exhaustion_raises(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(30, 2))
        y = rng.normal(size=30)
        with pytest.raises(ConvergenceError) as err:
            fit_svr(X, y, C=100.0, epsilon=0.0, kernel="rbf", tol=1e-12, max_sweeps=3)
        assert err.value.max_violation is not None
        assert err.value.max_violation > 1e-12

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            fit_svr(TOY_X, TOY_Y, C=-1.0)
        with pytest.raises(ValueError):
            fit_svr(TOY_X, TOY_Y, epsilon=-0.1)
        with pytest.raises(ValueError):
            fit_svr(TOY_X, TOY_Y, kernel="poly")

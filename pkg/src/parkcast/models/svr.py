"""Epsilon-insensitive support vector regression solved by SMO.

The dual is expressed in the net coefficients beta_i = alpha_i - alpha_i*,
minimizing W(beta) = 1/2 beta^T K beta - y^T beta + epsilon*||beta||_1 subject
to sum(beta) = 0 and |beta_i| <= C. Each iteration picks the maximal violating
pair and solves the two-variable subproblem exactly (the objective restricted
to the pair is piecewise quadratic with breakpoints where a beta crosses
zero).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConvergenceError

DEFAULT_TOL = 1e-3
DEFAULT_MAX_SWEEPS = 10_000


@dataclass(frozen=True)
class SvrParams:
    support_vectors: np.ndarray  # rows of X with nonzero dual coefficient
    dual_coef: np.ndarray  # beta at the supports
    bias: float
    kernel: str  # "linear" | "rbf"
    gamma: float | None
    C: float
    epsilon: float


def kernel_matrix(kernel: str, gamma: float | None, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    if kernel == "linear":
        return A @ B.T
    if kernel == "rbf":
        sq = (
            np.sum(A * A, axis=1)[:, None]
            + np.sum(B * B, axis=1)[None, :]
            - 2.0 * (A @ B.T)
        )
        return np.exp(-gamma * np.maximum(sq, 0.0))
    raise ValueError(f"unknown kernel {kernel!r}")


def default_gamma(X: np.ndarray) -> float:
    """Scale heuristic 1 / (p * var(X)); falls back to 1/p on constant data."""
    var = float(X.var())
    p = X.shape[1]
    return 1.0 / (p * var) if var > 0 else 1.0 / p


def _pair_objective_delta(
    delta: float, eta: float, lin: float, eps: float, bi: float, bj: float
) -> float:
    """Change in W when beta_i += delta and beta_j -= delta."""
    return (
        0.5 * eta * delta * delta
        + lin * delta
        + eps * (abs(bi + delta) - abs(bi) + abs(bj - delta) - abs(bj))
    )


def _solve_pair(
    bi: float, bj: float, eta: float, lin: float, eps: float, C: float
) -> float:
    """Exact minimizer over delta of the pair subproblem within the box."""
    lo = max(-C - bi, bj - C)
    hi = min(C - bi, bj + C)
    if hi <= lo:
        return 0.0
    candidates = {lo, hi}
    for brk in (-bi, bj):  # kinks of the |.| terms
        if lo < brk < hi:
            candidates.add(brk)
    if eta > 0:
        # unconstrained minimum of each smooth piece
        for si in (-1.0, 1.0):
            for sj in (-1.0, 1.0):
                d = -(lin + eps * (si - sj)) / eta
                if lo <= d <= hi and np.sign(bi + d) in (si, 0.0) and np.sign(bj - d) in (sj, 0.0):
                    candidates.add(d)
    best_d, best_val = 0.0, 0.0
    for d in candidates:
        val = _pair_objective_delta(d, eta, lin, eps, bi, bj)
        if val < best_val:
            best_d, best_val = d, val
    return best_d


def smo_solve(
    K: np.ndarray,
    y: np.ndarray,
    C: float,
    epsilon: float,
    tol: float = DEFAULT_TOL,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
) -> tuple[np.ndarray, float]:
    """Solve the epsilon-SVR dual; returns (beta, bias).

    Optimality: there must exist a bias mu with
    max over movable-up points of up_i <= mu <= min over movable-down of dn_i
    (up/dn derived from the subgradient of W plus the equality multiplier).
    Converged when the worst violation max(up) - min(dn) <= tol.
    """
    n = y.size
    beta = np.zeros(n)
    g = np.zeros(n)  # K @ beta
    last_violation = np.inf
    for _ in range(max_sweeps):
        grad_pos = g - y + epsilon  # right derivative term for beta >= 0
        grad_neg = g - y - epsilon  # left derivative term for beta <= 0
        up = np.where(beta >= 0, -grad_pos, -grad_neg)  # lower bounds on mu
        dn = np.where(beta > 0, -grad_pos, -grad_neg)  # upper bounds on mu
        up[beta >= C] = -np.inf
        dn[beta <= -C] = np.inf
        i = int(np.argmax(up))
        j = int(np.argmin(dn))
        last_violation = up[i] - dn[j]
        if last_violation <= tol:
            bias = float((up[i] + dn[j]) / 2.0)
            return beta, bias
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        lin = (g[i] - y[i]) - (g[j] - y[j])
        delta = _solve_pair(beta[i], beta[j], eta, lin, epsilon, C)
        if delta == 0.0:
            # numerical stall: nudge with the best feasible breakpoint
            raise ConvergenceError(
                "SMO stalled before reaching tolerance", max_violation=float(last_violation)
            )
        beta[i] += delta
        beta[j] -= delta
        g += delta * (K[:, i] - K[:, j])
    raise ConvergenceError(
        f"SMO did not converge in {max_sweeps} iterations",
        max_violation=float(last_violation),
    )


def fit_svr_params(
    X: np.ndarray,
    y: np.ndarray,
    C: float = 1.0,
    epsilon: float = 0.1,
    kernel: str = "rbf",
    gamma: float | None = None,
    tol: float = DEFAULT_TOL,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
) -> SvrParams:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if C <= 0:
        raise ValueError(f"C must be positive, got {C}")
    if epsilon < 0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon}")
    if kernel == "rbf" and gamma is None:
        gamma = default_gamma(X)
    if kernel == "linear":
        gamma = None
    K = kernel_matrix(kernel, gamma, X, X)
    beta, bias = smo_solve(K, y, C, epsilon, tol=tol, max_sweeps=max_sweeps)
    support = np.flatnonzero(beta != 0.0)
    return SvrParams(
        support_vectors=X[support].copy(),
        dual_coef=beta[support].copy(),
        bias=bias,
        kernel=kernel,
        gamma=gamma,
        C=C,
        epsilon=epsilon,
    )


def predict_svr(params: SvrParams, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if params.dual_coef.size == 0:
        return np.full(X.shape[0], params.bias)
    K = kernel_matrix(params.kernel, params.gamma, X, params.support_vectors)
    return K @ params.dual_coef + params.bias


def dual_objective(K: np.ndarray, y: np.ndarray, beta: np.ndarray, epsilon: float) -> float:
    """W(beta) = 1/2 b^T K b - y^T b + eps*||b||_1 (lower is better)."""
    return float(0.5 * beta @ K @ beta - y @ beta + epsilon * np.abs(beta).sum())

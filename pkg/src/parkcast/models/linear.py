"""Linear regression: normal equations for none/L2, coordinate descent for L1.

The bias is never penalized. The lasso objective is the per-sample form
(1/2n)||y - Xw - b||^2 + lam*||w||_1, solved to a duality gap of 1e-8.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import RankError

DUALITY_GAP_TOL = 1e-8
MAX_CD_SWEEPS = 100_000


@dataclass(frozen=True)
class LinearParams:
    weights: np.ndarray
    bias: float
    penalty: str  # "none" | "l2" | "l1"
    lam: float


def fit_linear_params(X: np.ndarray, y: np.ndarray, penalty: str = "none", lam: float = 0.0) -> LinearParams:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.size:
        raise ValueError(f"incompatible shapes X{X.shape}, y{y.shape}")
    if X.shape[0] < 2:
        raise ValueError(f"need at least 2 rows, got {X.shape[0]}")
    if penalty not in ("none", "l2", "l1"):
        raise ValueError(f"unknown penalty {penalty!r}")
    if lam < 0:
        raise ValueError(f"negative regularization strength {lam}")

    if penalty == "l1":
        w, b = _lasso_cd(X, y, lam)
        return LinearParams(weights=w, bias=b, penalty=penalty, lam=lam)

    n, p = X.shape
    A = np.hstack([X, np.ones((n, 1))])
    gram = A.T @ A
    if penalty == "l2" and lam > 0:
        ridge = np.eye(p + 1) * lam
        ridge[p, p] = 0.0  # bias unpenalized
        gram = gram + ridge
    else:
        if np.linalg.matrix_rank(A) < p + 1:
            raise RankError(
                "design matrix is rank deficient; use a positive l2 penalty"
            )
    try:
        coef = np.linalg.solve(gram, A.T @ y)
    except np.linalg.LinAlgError as exc:
        raise RankError(str(exc)) from exc
    return LinearParams(weights=coef[:p], bias=float(coef[p]), penalty=penalty, lam=lam)


def _lasso_cd(X: np.ndarray, y: np.ndarray, lam: float) -> tuple[np.ndarray, float]:
    """Cyclic coordinate descent on centered data; exact soft-threshold steps.

    Internally minimizes F(w) = 1/2 ||yc - Xc w||^2 + n*lam*||w||_1 on
    centered data, equivalent to the per-sample objective.
    """
    n, p = X.shape
    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    Xc = X - x_mean
    yc = y - y_mean
    lam_int = n * lam

    w = np.zeros(p)
    r = yc.copy()  # residual yc - Xc @ w
    col_sq = np.einsum("ij,ij->j", Xc, Xc)
    for _ in range(MAX_CD_SWEEPS):
        for j in range(p):
            if col_sq[j] == 0.0:
                continue
            rho = Xc[:, j] @ r + col_sq[j] * w[j]
            new_w = _soft_threshold(rho, lam_int) / col_sq[j]
            if new_w != w[j]:
                r += Xc[:, j] * (w[j] - new_w)
                w[j] = new_w
        if _lasso_duality_gap(Xc, yc, w, r, lam_int) / n <= DUALITY_GAP_TOL:
            break
    bias = y_mean - float(x_mean @ w)
    return w, bias


def _soft_threshold(value: float, threshold: float) -> float:
    if value > threshold:
        return value - threshold
    if value < -threshold:
        return value + threshold
    return 0.0


def _lasso_duality_gap(Xc, yc, w, r, lam_int) -> float:
    """Fenchel duality gap for F(w) = 1/2||r||^2 + lam_int*||w||_1.

    The dual point is the residual scaled into the feasible set
    {u : ||Xc^T u||_inf <= lam_int}.
    """
    primal = 0.5 * float(r @ r) + lam_int * float(np.abs(w).sum())
    if lam_int == 0.0:
        grad_inf = float(np.abs(Xc.T @ r).max()) if Xc.size else 0.0
        return grad_inf  # OLS stationarity residual as the gap proxy
    dual_norm = float(np.abs(Xc.T @ r).max())
    scale = 1.0 if dual_norm <= lam_int else lam_int / dual_norm
    u = scale * r
    dual = float(yc @ u) - 0.5 * float(u @ u)
    return primal - dual


def predict_linear(params: LinearParams, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return X @ params.weights + params.bias

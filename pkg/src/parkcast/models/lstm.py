"""LSTM regressor trained by backpropagation through time with Adam.

One standard LSTM cell (sigmoid input/forget/output gates, tanh candidate and
output squashing) unrolled over a fixed lookback window, feeding a dense
scalar head. Loss is mean squared error. Everything is 64-bit numpy, so
analytic gradients can be checked against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DivergenceError
from .adam import AdamState, adam_init, adam_update


@dataclass(frozen=True)
class LstmParams:
    weights: dict[str, np.ndarray]  # W (d+H, 4H), b (4H,), w_out (H,), b_out (1,)
    units: int
    lookback: int
    input_dim: int
    epochs: int
    batch_size: int
    history: tuple[dict, ...] = ()  # per-epoch train/test MSE


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def init_weights(input_dim: int, units: int, seed: int) -> dict[str, np.ndarray]:
    """Seeded uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) initialization."""
    rng = np.random.default_rng(seed)
    fan_in = input_dim + units
    lim = 1.0 / np.sqrt(fan_in)
    lim_out = 1.0 / np.sqrt(units)
    return {
        "W": rng.uniform(-lim, lim, size=(fan_in, 4 * units)),
        "b": rng.uniform(-lim, lim, size=(4 * units,)),
        "w_out": rng.uniform(-lim_out, lim_out, size=(units,)),
        "b_out": rng.uniform(-lim_out, lim_out, size=(1,)),
    }


def forward(weights: dict[str, np.ndarray], X: np.ndarray, return_cache: bool = False):
    """Run the cell over X of shape (N, L, d); returns predictions of shape (N,)."""
    N, L, _ = X.shape
    H = weights["w_out"].size
    h = np.zeros((N, H))
    c = np.zeros((N, H))
    cache = []
    for t in range(L):
        x_t = X[:, t, :]
        z = np.hstack([x_t, h]) @ weights["W"] + weights["b"]
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H : 2 * H])
        g = np.tanh(z[:, 2 * H : 3 * H])
        o = _sigmoid(z[:, 3 * H :])
        c_prev = c
        c = f * c_prev + i * g
        tanh_c = np.tanh(c)
        h_prev_cached = h
        h = o * tanh_c
        if return_cache:
            cache.append((x_t, h_prev_cached, c_prev, i, f, g, o, tanh_c))
    yhat = h @ weights["w_out"] + weights["b_out"][0]
    if return_cache:
        return yhat, h, cache
    return yhat


def loss_and_grads(
    weights: dict[str, np.ndarray], X: np.ndarray, y: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """MSE loss and its analytic gradient for a batch of sequences."""
    N, L, d = X.shape
    H = weights["w_out"].size
    yhat, h_last, cache = forward(weights, X, return_cache=True)
    err = yhat - y
    loss = float(np.mean(err * err))

    dyhat = 2.0 * err / N
    grads = {
        "W": np.zeros_like(weights["W"]),
        "b": np.zeros_like(weights["b"]),
        "w_out": h_last.T @ dyhat,
        "b_out": np.array([dyhat.sum()]),
    }
    dh = np.outer(dyhat, weights["w_out"])
    dc = np.zeros((N, H))
    for t in range(L - 1, -1, -1):
        x_t, h_prev, c_prev, i, f, g, o, tanh_c = cache[t]
        do = dh * tanh_c
        dc = dc + dh * o * (1.0 - tanh_c * tanh_c)
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dc_prev = dc * f
        dz = np.hstack(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g * g),
                do * o * (1.0 - o),
            ]
        )
        xh = np.hstack([x_t, h_prev])
        grads["W"] += xh.T @ dz
        grads["b"] += dz.sum(axis=0)
        dh = (dz @ weights["W"].T)[:, d:]
        dc = dc_prev
    return loss, grads


def make_sequences(
    X: np.ndarray, y: np.ndarray, groups: np.ndarray | None, lookback: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sliding windows of `lookback` rows per group, in row order.

    Returns (sequences (M, lookback, d), targets (M,), target row indices).
    Rows must be chronologically ordered within each group; windows never
    cross group boundaries.
    """
    if lookback < 1:
        raise ValueError(f"lookback must be >= 1, got {lookback}")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if groups is None:
        groups = np.zeros(X.shape[0], dtype=np.int64)
    seqs = []
    targets = []
    target_idx = []
    for g in np.unique(groups):
        idx = np.flatnonzero(groups == g)
        for k in range(lookback, idx.size):
            window = idx[k - lookback : k]
            seqs.append(X[window])
            targets.append(y[idx[k]])
            target_idx.append(idx[k])
    if not seqs:
        raise ValueError(
            f"no sequences: need more than lookback={lookback} rows per group"
        )
    order = np.argsort(np.asarray(target_idx), kind="stable")
    return (
        np.stack(seqs)[order],
        np.asarray(targets)[order],
        np.asarray(target_idx)[order],
    )


def fit_lstm_params(
    sequences: np.ndarray,
    targets: np.ndarray,
    units: int = 50,
    epochs: int = 50,
    batch_size: int = 72,
    lr: float = 1e-3,
    seed: int = 0,
    eval_data: tuple[np.ndarray, np.ndarray] | None = None,
) -> LstmParams:
    """Train on (N, L, d) sequences; records per-epoch train/test MSE.

    A batch is min(batch_size, remaining rows): the final partial batch is
    trained, never dropped. With epochs=0 the seeded initial weights are
    returned untouched.
    """
    sequences = np.asarray(sequences, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if sequences.ndim != 3:
        raise ValueError(f"sequences must be (N, L, d), got shape {sequences.shape}")
    N, L, d = sequences.shape
    weights = init_weights(d, units, seed)
    state: AdamState = adam_init(weights, lr=lr)
    history: list[dict] = []
    for epoch in range(epochs):
        for start in range(0, N, batch_size):
            batch_X = sequences[start : start + batch_size]
            batch_y = targets[start : start + batch_size]
            loss, grads = loss_and_grads(weights, batch_X, batch_y)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite training loss at epoch {epoch}", epoch=epoch)
            weights, state = adam_update(weights, grads, state)
        entry = {"epoch": epoch + 1, "train_mse": _mse(weights, sequences, targets)}
        if eval_data is not None:
            entry["test_mse"] = _mse(weights, eval_data[0], eval_data[1])
        history.append(entry)
    for key, arr in weights.items():
        if not np.all(np.isfinite(arr)):
            raise DivergenceError(f"non-finite parameter {key!r} after training", epoch=epochs)
    return LstmParams(
        weights=weights,
        units=units,
        lookback=L,
        input_dim=d,
        epochs=epochs,
        batch_size=batch_size,
        history=tuple(history),
    )


def _mse(weights: dict[str, np.ndarray], X: np.ndarray, y: np.ndarray) -> float:
    err = forward(weights, X) - y
    return float(np.mean(err * err))


def predict_lstm(params: LstmParams, sequences: np.ndarray) -> np.ndarray:
    sequences = np.asarray(sequences, dtype=np.float64)
    if sequences.ndim != 3 or sequences.shape[2] != params.input_dim:
        raise ValueError(
            f"sequences must be (N, L, {params.input_dim}), got shape {sequences.shape}"
        )
    return forward(params.weights, sequences)

"""Four regression families behind one fit/predict contract.

Every fit is a pure function of (data, hyperparameters, seed); the training
fingerprint hashes exactly those inputs. Fitted models are immutable and
serialize to a versioned JSON document.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from ..errors import SchemaError
from .adam import AdamState, adam_init, adam_update
from .forest import ForestParams, TreeNodes, fit_forest_params, leaf_values, predict_forest
from .linear import LinearParams, fit_linear_params, predict_linear
from .lstm import LstmParams, fit_lstm_params, forward, loss_and_grads, make_sequences, predict_lstm
from .svr import SvrParams, dual_objective, fit_svr_params, kernel_matrix, predict_svr

FAMILIES = ("linear", "svr", "rfr", "lstm")

FORMAT_VERSION = 1


@dataclass(frozen=True)
class RegressionModel:
    family: str
    params: LinearParams | SvrParams | ForestParams | LstmParams
    hyperparams: dict
    feature_names: tuple[str, ...]
    layout_hash: str
    train_fingerprint: str


def _default_layout(p: int) -> tuple[tuple[str, ...], str]:
    names = tuple(f"f{i}" for i in range(p))
    digest = hashlib.sha256(json.dumps(list(names)).encode()).hexdigest()
    return names, digest


def train_fingerprint(X: np.ndarray, y: np.ndarray, hyperparams: dict, seed: int | None) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(X, dtype=np.float64).tobytes())
    h.update(np.ascontiguousarray(y, dtype=np.float64).tobytes())
    h.update(json.dumps(hyperparams, sort_keys=True, default=str).encode())
    h.update(str(seed).encode())
    return h.hexdigest()


def _layout_args(X, feature_names, layout_hash):
    p = X.shape[-1]
    if feature_names is None:
        names, default_hash = _default_layout(p)
        return names, layout_hash or default_hash
    names = tuple(feature_names)
    if len(names) != p:
        raise SchemaError(f"{len(names)} feature names for {p} columns")
    if layout_hash is None:
        layout_hash = hashlib.sha256(json.dumps(list(names)).encode()).hexdigest()
    return names, layout_hash


def fit_linear(
    X,
    y,
    penalty: str = "none",
    lam: float = 0.0,
    feature_names=None,
    layout_hash=None,
) -> RegressionModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    hyper = {"penalty": penalty, "lam": lam}
    params = fit_linear_params(X, y, penalty=penalty, lam=lam)
    names, digest = _layout_args(X, feature_names, layout_hash)
    return RegressionModel(
        family="linear",
        params=params,
        hyperparams=hyper,
        feature_names=names,
        layout_hash=digest,
        train_fingerprint=train_fingerprint(X, y, hyper, None),
    )


def fit_svr(
    X,
    y,
    C: float = 1.0,
    epsilon: float = 0.1,
    kernel: str = "rbf",
    gamma: float | None = None,
    tol: float = 1e-3,
    max_sweeps: int = 10_000,
    feature_names=None,
    layout_hash=None,
) -> RegressionModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    hyper = {"C": C, "epsilon": epsilon, "kernel": kernel, "gamma": gamma, "tol": tol}
    params = fit_svr_params(
        X, y, C=C, epsilon=epsilon, kernel=kernel, gamma=gamma, tol=tol, max_sweeps=max_sweeps
    )
    names, digest = _layout_args(X, feature_names, layout_hash)
    return RegressionModel(
        family="svr",
        params=params,
        hyperparams=hyper,
        feature_names=names,
        layout_hash=digest,
        train_fingerprint=train_fingerprint(X, y, hyper, None),
    )


def fit_rfr(
    X,
    y,
    n_trees: int = 100,
    max_depth: int | None = None,
    min_samples_leaf: int = 1,
    max_features: int | None = None,
    seed: int = 0,
    feature_names=None,
    layout_hash=None,
) -> RegressionModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    hyper = {
        "n_trees": n_trees,
        "max_depth": max_depth,
        "min_samples_leaf": min_samples_leaf,
        "max_features": max_features,
        "seed": seed,
    }
    params = fit_forest_params(
        X,
        y,
        n_trees=n_trees,
        max_depth=max_depth,
        min_samples_leaf=min_samples_leaf,
        max_features=max_features,
        seed=seed,
    )
    names, digest = _layout_args(X, feature_names, layout_hash)
    return RegressionModel(
        family="rfr",
        params=params,
        hyperparams=hyper,
        feature_names=names,
        layout_hash=digest,
        train_fingerprint=train_fingerprint(X, y, hyper, seed),
    )


def fit_lstm(
    sequences,
    targets,
    units: int = 50,
    epochs: int = 50,
    batch_size: int = 72,
    lr: float = 1e-3,
    seed: int = 0,
    eval_data=None,
    feature_names=None,
    layout_hash=None,
) -> RegressionModel:
    sequences = np.asarray(sequences, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    hyper = {
        "units": units,
        "epochs": epochs,
        "batch_size": batch_size,
        "lr": lr,
        "seed": seed,
        "lookback": int(sequences.shape[1]),
    }
    params = fit_lstm_params(
        sequences,
        targets,
        units=units,
        epochs=epochs,
        batch_size=batch_size,
        lr=lr,
        seed=seed,
        eval_data=eval_data,
    )
    names, digest = _layout_args(sequences, feature_names, layout_hash)
    return RegressionModel(
        family="lstm",
        params=params,
        hyperparams=hyper,
        feature_names=names,
        layout_hash=digest,
        train_fingerprint=train_fingerprint(
            sequences.reshape(sequences.shape[0], -1), targets, hyper, seed
        ),
    )


def predict(model: RegressionModel, X, feature_names=None) -> np.ndarray:
    """Deterministic predictions, one per row (or per sequence for the LSTM).

    Raw model output: availability clamping happens at the service layer.
    """
    X = np.asarray(X, dtype=np.float64)
    expected = len(model.feature_names)
    width = X.shape[-1]
    if width != expected:
        raise SchemaError(
            f"feature width {width} does not match model layout {expected}"
            f" (expected columns {list(model.feature_names)})"
        )
    if feature_names is not None and tuple(feature_names) != model.feature_names:
        offending = [
            f"{got!r} (expected {want!r})"
            for got, want in zip(feature_names, model.feature_names)
            if got != want
        ]
        raise SchemaError(f"feature name mismatch: {offending}")
    if model.family == "linear":
        return predict_linear(model.params, X)
    if model.family == "svr":
        return predict_svr(model.params, X)
    if model.family == "rfr":
        return predict_forest(model.params, X)
    if model.family == "lstm":
        return predict_lstm(model.params, X)
    raise ValueError(f"unknown family {model.family!r}")


# ---------------------------------------------------------------------------
# Versioned JSON serialization
# ---------------------------------------------------------------------------


def model_to_dict(model: RegressionModel) -> dict:
    params = model.params
    if model.family == "linear":
        payload = {
            "weights": params.weights.tolist(),
            "bias": params.bias,
            "penalty": params.penalty,
            "lam": params.lam,
        }
    elif model.family == "svr":
        payload = {
            "support_vectors": params.support_vectors.tolist(),
            "dual_coef": params.dual_coef.tolist(),
            "bias": params.bias,
            "kernel": params.kernel,
            "gamma": params.gamma,
            "C": params.C,
            "epsilon": params.epsilon,
        }
    elif model.family == "rfr":
        payload = {
            "trees": [
                {
                    "feature": t.feature.tolist(),
                    "threshold": t.threshold.tolist(),
                    "left": t.left.tolist(),
                    "right": t.right.tolist(),
                    "value": t.value.tolist(),
                    "n_samples": t.n_samples.tolist(),
                }
                for t in params.trees
            ],
            "n_trees": params.n_trees,
            "max_depth": params.max_depth,
            "min_samples_leaf": params.min_samples_leaf,
            "max_features": params.max_features,
            "seed": params.seed,
        }
    elif model.family == "lstm":
        payload = {
            "weights": {k: v.tolist() for k, v in params.weights.items()},
            "units": params.units,
            "lookback": params.lookback,
            "input_dim": params.input_dim,
            "epochs": params.epochs,
            "batch_size": params.batch_size,
            "history": list(params.history),
        }
    else:
        raise ValueError(f"unknown family {model.family!r}")
    return {
        "format_version": FORMAT_VERSION,
        "family": model.family,
        "hyperparameters": model.hyperparams,
        "parameters": payload,
        "feature_layout": {"names": list(model.feature_names), "hash": model.layout_hash},
        "train_fingerprint": model.train_fingerprint,
    }


def model_from_dict(doc: dict) -> RegressionModel:
    if doc.get("format_version") != FORMAT_VERSION:
        raise SchemaError(f"unsupported model format version {doc.get('format_version')}")
    family = doc["family"]
    payload = doc["parameters"]
    if family == "linear":
        params = LinearParams(
            weights=np.asarray(payload["weights"], dtype=np.float64),
            bias=float(payload["bias"]),
            penalty=payload["penalty"],
            lam=float(payload["lam"]),
        )
    elif family == "svr":
        params = SvrParams(
            support_vectors=np.asarray(payload["support_vectors"], dtype=np.float64).reshape(
                len(payload["support_vectors"]), -1
            ),
            dual_coef=np.asarray(payload["dual_coef"], dtype=np.float64),
            bias=float(payload["bias"]),
            kernel=payload["kernel"],
            gamma=payload["gamma"],
            C=float(payload["C"]),
            epsilon=float(payload["epsilon"]),
        )
    elif family == "rfr":
        params = ForestParams(
            trees=tuple(
                TreeNodes(
                    feature=np.asarray(t["feature"], dtype=np.int64),
                    threshold=np.asarray(t["threshold"], dtype=np.float64),
                    left=np.asarray(t["left"], dtype=np.int64),
                    right=np.asarray(t["right"], dtype=np.int64),
                    value=np.asarray(t["value"], dtype=np.float64),
                    n_samples=np.asarray(t["n_samples"], dtype=np.int64),
                )
                for t in payload["trees"]
            ),
            n_trees=payload["n_trees"],
            max_depth=payload["max_depth"],
            min_samples_leaf=payload["min_samples_leaf"],
            max_features=payload["max_features"],
            seed=payload["seed"],
        )
    elif family == "lstm":
        params = LstmParams(
            weights={k: np.asarray(v, dtype=np.float64) for k, v in payload["weights"].items()},
            units=payload["units"],
            lookback=payload["lookback"],
            input_dim=payload["input_dim"],
            epochs=payload["epochs"],
            batch_size=payload["batch_size"],
            history=tuple(payload.get("history", [])),
        )
    else:
        raise SchemaError(f"unknown family {family!r}")
    layout = doc["feature_layout"]
    return RegressionModel(
        family=family,
        params=params,
        hyperparams=doc["hyperparameters"],
        feature_names=tuple(layout["names"]),
        layout_hash=layout["hash"],
        train_fingerprint=doc["train_fingerprint"],
    )


def save_model(model: RegressionModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2, sort_keys=True)


def load_model(path) -> RegressionModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


__all__ = [
    "AdamState",
    "FAMILIES",
    "ForestParams",
    "LinearParams",
    "LstmParams",
    "RegressionModel",
    "SvrParams",
    "adam_init",
    "adam_update",
    "dual_objective",
    "fit_linear",
    "fit_lstm",
    "fit_rfr",
    "fit_svr",
    "forward",
    "kernel_matrix",
    "leaf_values",
    "load_model",
    "loss_and_grads",
    "make_sequences",
    "model_from_dict",
    "model_to_dict",
    "predict",
    "save_model",
    "train_fingerprint",
]

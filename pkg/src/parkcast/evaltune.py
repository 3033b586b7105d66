"""Splitting, cross-validation, hyperparameter search and comparison reports.

The default split and CV modes are chronological (leakage-safe for a time
series); seeded-random variants exist for parity experiments. Search cells
are scored by mean CV RMSE and are independent of each other, so they could
run on parallel workers; the result table is assembled by cell index.
"""

from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SearchError, UndefinedMetricError
from .features import Dataset
from .models import (
    FAMILIES,
    RegressionModel,
    fit_linear,
    fit_lstm,
    fit_rfr,
    fit_svr,
    make_sequences,
    predict,
)

DEFAULT_TRAIN_RATIO = 0.7
DEFAULT_CV_K = 3


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def _check_pair(y, yhat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape or y.ndim != 1:
        raise ValueError(f"length mismatch: {y.shape} vs {yhat.shape}")
    if y.size == 0:
        raise ValueError("empty inputs")
    return y, yhat


def mae(y, yhat) -> float:
    """Mean absolute error (1/n) * sum |y_i - yhat_i|."""
    y, yhat = _check_pair(y, yhat)
    return float(np.mean(np.abs(y - yhat)))


def rmse(y, yhat) -> float:
    """Root mean squared error sqrt((1/n) * sum (y_i - yhat_i)^2)."""
    y, yhat = _check_pair(y, yhat)
    d = y - yhat
    return float(math.sqrt(np.mean(d * d)))


def r2(y, yhat) -> float:
    """Coefficient of determination 1 - SS_res/SS_tot; may be negative."""
    y, yhat = _check_pair(y, yhat)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise UndefinedMetricError("R^2 undefined for constant truth")
    ss_res = float(np.sum((y - yhat) ** 2))
    return 1.0 - ss_res / ss_tot


def denormalize_error(err: float, scale: float) -> float:
    """Convert a [0,1]-scale error into vehicle units."""
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    return err * scale


# ---------------------------------------------------------------------------
# Splits and folds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitPlan:
    mode: str  # "chronological" | "seeded-random"
    train_idx: tuple[int, ...]
    test_idx: tuple[int, ...]
    ratio: float
    seed: int | None = None


def train_test_split(
    n: int,
    ratio: float = DEFAULT_TRAIN_RATIO,
    mode: str = "chronological",
    seed: int | None = None,
    timestamps=None,
) -> SplitPlan:
    """Disjoint, exhaustive split with train size floor(ratio * n).

    Chronological mode takes the earliest rows as train (rows are assumed
    time-ordered unless timestamps are given); seeded-random shuffles with a
    recorded seed.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be in (0,1), got {ratio}")
    order = list(range(n))
    if timestamps is not None:
        if len(timestamps) != n:
            raise ValueError("timestamps length mismatch")
        order.sort(key=lambda i: timestamps[i])
    if mode == "seeded-random":
        rng = np.random.default_rng(seed)
        order = [order[i] for i in rng.permutation(n)]
    elif mode != "chronological":
        raise ValueError(f"unknown split mode {mode!r}")
    n_train = int(math.floor(ratio * n))
    return SplitPlan(
        mode=mode,
        train_idx=tuple(order[:n_train]),
        test_idx=tuple(order[n_train:]),
        ratio=ratio,
        seed=seed,
    )


def kfold(
    indices, k: int = DEFAULT_CV_K, mode: str = "chronological", seed: int | None = None
) -> list[tuple[int, ...]]:
    """Partition indices into k disjoint, exhaustive folds, sizes differing by <= 1.

    Chronological mode keeps folds contiguous in the given order.
    """
    indices = list(indices)
    n = len(indices)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if n < k:
        raise ValueError(f"cannot make {k} folds from {n} rows")
    if mode == "seeded-random":
        rng = np.random.default_rng(seed)
        indices = [indices[i] for i in rng.permutation(n)]
    elif mode != "chronological":
        raise ValueError(f"unknown fold mode {mode!r}")
    base, extra = divmod(n, k)
    folds = []
    pos = 0
    for f in range(k):
        size = base + (1 if f < extra else 0)
        folds.append(tuple(indices[pos : pos + size]))
        pos += size
    return folds


# ---------------------------------------------------------------------------
# Family adapters
# ---------------------------------------------------------------------------

LSTM_DEFAULTS = {"units": 50, "epochs": 50, "batch_size": 72, "lr": 1e-3, "lookback": 3}
RFR_DEFAULTS = {"n_trees": 100, "max_depth": None, "min_samples_leaf": 1}
SVR_DEFAULTS = {"C": 1.0, "epsilon": 0.1, "kernel": "rbf", "gamma": None}
LINEAR_DEFAULTS = {"penalty": "none", "lam": 0.0}

FAMILY_DEFAULTS = {
    "linear": LINEAR_DEFAULTS,
    "svr": SVR_DEFAULTS,
    "rfr": RFR_DEFAULTS,
    "lstm": LSTM_DEFAULTS,
}


@dataclass(frozen=True)
class TrainData:
    """Encoded rows in chronological order plus the segment grouping."""

    X: np.ndarray
    y: np.ndarray
    groups: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.X.shape[0]


def fit_family(
    family: str,
    X: np.ndarray,
    y: np.ndarray,
    params: dict,
    groups: np.ndarray | None = None,
    seed: int = 0,
    feature_names=None,
    layout_hash=None,
) -> RegressionModel:
    """Fit one family with merged default + given hyperparameters.

    For the LSTM, (X, y) are tabular rows that are windowed internally per
    group with the requested lookback.
    """
    merged = {**FAMILY_DEFAULTS[family], **params}
    common = {"feature_names": feature_names, "layout_hash": layout_hash}
    if family == "linear":
        return fit_linear(X, y, penalty=merged["penalty"], lam=merged["lam"], **common)
    if family == "svr":
        return fit_svr(
            X,
            y,
            C=merged["C"],
            epsilon=merged["epsilon"],
            kernel=merged["kernel"],
            gamma=merged["gamma"],
            **common,
        )
    if family == "rfr":
        return fit_rfr(
            X,
            y,
            n_trees=merged["n_trees"],
            max_depth=merged["max_depth"],
            min_samples_leaf=merged["min_samples_leaf"],
            seed=seed,
            **common,
        )
    if family == "lstm":
        seqs, targets, _ = make_sequences(X, y, groups, merged["lookback"])
        return fit_lstm(
            seqs,
            targets,
            units=merged["units"],
            epochs=merged["epochs"],
            batch_size=merged["batch_size"],
            lr=merged["lr"],
            seed=seed,
            **common,
        )
    raise ValueError(f"unknown family {family!r}")


def _evaluate_fold(
    family: str,
    data: TrainData,
    params: dict,
    train_idx: tuple[int, ...],
    val_idx: tuple[int, ...],
    seed: int,
) -> float:
    """RMSE on one validation fold after fitting on the complementary rows."""
    train_idx = np.asarray(train_idx, dtype=np.int64)
    val_idx = np.asarray(val_idx, dtype=np.int64)
    if family == "lstm":
        merged = {**LSTM_DEFAULTS, **params}
        seqs, targets, target_rows = make_sequences(
            data.X, data.y, data.groups, merged["lookback"]
        )
        train_mask = np.isin(target_rows, train_idx)
        val_mask = np.isin(target_rows, val_idx)
        if not train_mask.any() or not val_mask.any():
            raise ValueError("fold too small to build lstm sequences")
        model = fit_lstm(
            seqs[train_mask],
            targets[train_mask],
            units=merged["units"],
            epochs=merged["epochs"],
            batch_size=merged["batch_size"],
            lr=merged["lr"],
            seed=seed,
        )
        return rmse(targets[val_mask], predict(model, seqs[val_mask]))
    model = fit_family(family, data.X[train_idx], data.y[train_idx], params, seed=seed)
    return rmse(data.y[val_idx], predict(model, data.X[val_idx]))


# ---------------------------------------------------------------------------
# Hyperparameter search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SearchSpace:
    """Grid values (lists per parameter) or sampling ranges for random search.

    Range entries are either a list/tuple of discrete choices or a tag tuple
    ("uniform", lo, hi) / ("loguniform", lo, hi) / ("randint", lo, hi).
    """

    grid: dict | None = None
    ranges: dict | None = None

    def __post_init__(self):
        if self.grid is not None:
            for key, values in self.grid.items():
                if not values:
                    raise ValueError(f"empty grid for parameter {key!r}")


@dataclass(frozen=True)
class CellResult:
    params: dict
    fold_rmse: tuple[float, ...] | None
    mean_rmse: float | None
    error: str | None = None


@dataclass(frozen=True)
class SearchResult:
    family: str
    method: str  # "grid" | "random"
    best_params: dict
    best_score: float
    cells: tuple[CellResult, ...]
    cv_k: int
    seed: int | None


def cv_pairs(
    folds: list[tuple[int, ...]], mode: str
) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """(train, validation) pairs for a set of folds.

    Chronological mode forward-chains: each fold is validated against all
    earlier folds only, so no training row ever postdates a validation row.
    Seeded-random mode uses the classic complement pairing.
    """
    if mode == "chronological":
        pairs = []
        for i in range(1, len(folds)):
            train = tuple(idx for fold in folds[:i] for idx in fold)
            pairs.append((train, folds[i]))
        return pairs
    all_idx = set().union(*(set(f) for f in folds))
    return [(tuple(sorted(all_idx - set(f))), f) for f in folds]


def _run_cells(
    family: str,
    candidates: list[dict],
    data: TrainData,
    cv_k: int,
    cv_mode: str,
    seed: int,
    method: str,
) -> SearchResult:
    folds = kfold(range(data.n), k=cv_k, mode=cv_mode, seed=seed)
    pairs = cv_pairs(folds, cv_mode)
    cells: list[CellResult] = []
    best: tuple[float, dict] | None = None
    for params in candidates:
        try:
            scores = []
            for train_idx, fold in pairs:
                scores.append(_evaluate_fold(family, data, params, train_idx, fold, seed))
            mean_score = float(np.mean(scores))
            cells.append(CellResult(params=params, fold_rmse=tuple(scores), mean_rmse=mean_score))
            if best is None or mean_score < best[0]:
                best = (mean_score, params)
        except Exception as exc:  # cell failures are recorded, the run continues
            cells.append(CellResult(params=params, fold_rmse=None, mean_rmse=None, error=str(exc)))
    if best is None:
        raise SearchError(f"every {family} search cell failed ({len(cells)} cells)")
    return SearchResult(
        family=family,
        method=method,
        best_params=best[1],
        best_score=best[0],
        cells=tuple(cells),
        cv_k=cv_k,
        seed=seed,
    )


def grid_search(
    family: str,
    space: SearchSpace,
    data: TrainData,
    cv_k: int = DEFAULT_CV_K,
    cv_mode: str = "chronological",
    seed: int = 0,
) -> SearchResult:
    """Evaluate the full Cartesian product of the grid; argmin of mean CV RMSE.

    Iteration order is lexicographic over the declared parameter order; ties
    keep the first cell in that order.
    """
    if space.grid is None:
        raise ValueError("grid_search needs a SearchSpace with a grid")
    keys = list(space.grid.keys())
    candidates = [
        dict(zip(keys, combo)) for combo in itertools.product(*(space.grid[k] for k in keys))
    ]
    return _run_cells(family, candidates, data, cv_k, cv_mode, seed, "grid")


def _sample_value(rng: np.random.Generator, spec):
    if isinstance(spec, (list, tuple)) and len(spec) == 3 and spec[0] in (
        "uniform",
        "loguniform",
        "randint",
    ):
        tag, lo, hi = spec
        if tag == "uniform":
            return float(rng.uniform(lo, hi))
        if tag == "loguniform":
            return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
        return int(rng.integers(lo, hi))
    if isinstance(spec, (list, tuple)):
        return spec[int(rng.integers(len(spec)))]
    raise ValueError(f"bad range spec {spec!r}")


def random_search(
    family: str,
    space: SearchSpace,
    budget: int,
    seed: int,
    data: TrainData,
    cv_k: int = DEFAULT_CV_K,
    cv_mode: str = "chronological",
) -> SearchResult:
    """Score `budget` seeded samples from the declared ranges."""
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    if space.ranges is None:
        raise ValueError("random_search needs a SearchSpace with ranges")
    rng = np.random.default_rng(seed)
    candidates = [
        {key: _sample_value(rng, spec) for key, spec in space.ranges.items()}
        for _ in range(budget)
    ]
    return _run_cells(family, candidates, data, cv_k, cv_mode, seed, "random")


# Declared default grids; overridable per call.
DEFAULT_SPACES: dict[str, list[SearchSpace]] = {
    "linear": [
        SearchSpace(grid={"penalty": ["l2"], "lam": [0.0, 0.01, 0.1, 1.0]}),
        SearchSpace(grid={"penalty": ["l1"], "lam": [0.001, 0.01, 0.1]}),
    ],
    "svr": [
        SearchSpace(
            grid={
                "C": [0.1, 1.0, 10.0],
                "epsilon": [0.01, 0.1],
                "kernel": ["linear", "rbf"],
                "gamma": [0.1, 1.0],
            }
        )
    ],
    "rfr": [SearchSpace(grid={"max_depth": [4, 8, None], "min_samples_leaf": [1, 2, 5]})],
    "lstm": [SearchSpace(grid={"lookback": [2, 3, 4], "lr": [1e-3, 1e-2]})],
}


# ---------------------------------------------------------------------------
# Model comparison (Table-style report)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelResult:
    family: str
    rmse: float
    mae: float
    r2: float
    hyperparams: dict
    defaults_taken: dict
    cv_score: float | None = None
    rmse_vehicles: float | None = None
    mae_vehicles: float | None = None


@dataclass(frozen=True)
class EvaluationReport:
    rows: tuple[ModelResult, ...]  # sorted by RMSE, worst first (Table order)
    dataset_fingerprint: str
    failures: dict = field(default_factory=dict)
    evaluation_log: tuple = ()  # (family, test fingerprint) per single test evaluation
    cv_cells: dict = field(default_factory=dict)
    vehicle_scale: float | None = None
    seed: int = 0
    cv_k: int = DEFAULT_CV_K


def dataset_fingerprint(dataset: Dataset) -> str:
    h = hashlib.sha256()
    for arr in (dataset.train_X, dataset.train_y, dataset.test_X, dataset.test_y):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


def _test_predictions(
    family: str, dataset: Dataset, params: dict, seed: int
) -> tuple[np.ndarray, np.ndarray, RegressionModel]:
    """Fit best params on the full training block, predict the test block once."""
    names = dataset.feature_names
    digest = dataset.layout_hash
    if family == "lstm":
        merged = {**LSTM_DEFAULTS, **params}
        full_X = np.vstack([dataset.train_X, dataset.test_X])
        full_y = np.concatenate([dataset.train_y, dataset.test_y])
        groups = np.concatenate([dataset.train_groups(), dataset.test_groups()])
        seqs, targets, target_rows = make_sequences(full_X, full_y, groups, merged["lookback"])
        n_train = dataset.train_X.shape[0]
        train_mask = target_rows < n_train
        test_mask = ~train_mask
        if not test_mask.any():
            raise ValueError("test block too small to build lstm sequences")
        model = fit_lstm(
            seqs[train_mask],
            targets[train_mask],
            units=merged["units"],
            epochs=merged["epochs"],
            batch_size=merged["batch_size"],
            lr=merged["lr"],
            seed=seed,
            feature_names=names,
            layout_hash=digest,
        )
        return targets[test_mask], predict(model, seqs[test_mask]), model
    model = fit_family(
        family,
        dataset.train_X,
        dataset.train_y,
        params,
        seed=seed,
        feature_names=names,
        layout_hash=digest,
    )
    return dataset.test_y, predict(model, dataset.test_X), model


def compare_models(
    dataset: Dataset,
    families=FAMILIES,
    spaces: dict[str, list[SearchSpace]] | None = None,
    cv_k: int = DEFAULT_CV_K,
    cv_mode: str = "chronological",
    seed: int = 0,
    vehicle_scale: float | None = None,
) -> EvaluationReport:
    """Tune each family on the training block, evaluate once on the test block.

    Per-family failures are recorded and the report is emitted for survivors.
    The evaluation log proves each family's test metrics were computed exactly
    once.
    """
    spaces = spaces or {}
    data = TrainData(dataset.train_X, dataset.train_y, dataset.train_groups())
    results: list[ModelResult] = []
    failures: dict[str, str] = {}
    evaluation_log: list[tuple[str, str]] = []
    cv_cells: dict[str, tuple[CellResult, ...]] = {}
    ds_fingerprint = dataset_fingerprint(dataset)

    for family in families:
        try:
            family_spaces = spaces.get(family, DEFAULT_SPACES[family])
            best: SearchResult | None = None
            cells: list[CellResult] = []
            for space in family_spaces:
                res = grid_search(family, space, data, cv_k=cv_k, cv_mode=cv_mode, seed=seed)
                cells.extend(res.cells)
                if best is None or res.best_score < best.best_score:
                    best = res
            assert best is not None
            cv_cells[family] = tuple(cells)
            y_true, y_pred, model = _test_predictions(family, dataset, best.best_params, seed)
            evaluation_log.append((family, model.train_fingerprint))
            defaults = {
                k: v for k, v in FAMILY_DEFAULTS[family].items() if k not in best.best_params
            }
            test_rmse = rmse(y_true, y_pred)
            test_mae = mae(y_true, y_pred)
            results.append(
                ModelResult(
                    family=family,
                    rmse=test_rmse,
                    mae=test_mae,
                    r2=r2(y_true, y_pred),
                    hyperparams={**defaults, **best.best_params},
                    defaults_taken=defaults,
                    cv_score=best.best_score,
                    rmse_vehicles=(
                        denormalize_error(test_rmse, vehicle_scale) if vehicle_scale else None
                    ),
                    mae_vehicles=(
                        denormalize_error(test_mae, vehicle_scale) if vehicle_scale else None
                    ),
                )
            )
        except Exception as exc:
            failures[family] = str(exc)
    rows = tuple(sorted(results, key=lambda rw: -rw.rmse))
    return EvaluationReport(
        rows=rows,
        dataset_fingerprint=ds_fingerprint,
        failures=failures,
        evaluation_log=tuple(evaluation_log),
        cv_cells=cv_cells,
        vehicle_scale=vehicle_scale,
        seed=seed,
        cv_k=cv_k,
    )

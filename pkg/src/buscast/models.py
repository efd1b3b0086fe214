"""Regressors and the two training frameworks (citywide vs. per-region).

All models share one artifact contract: a fixed column registry, categorical
integer codings and training-mean imputation learned at fit time and reused
verbatim at predict time. Prediction rejects matrices whose registry does
not match.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ContractError
from .regions import Partition
from .trees import Tree, build_tree, rank_encode

MODEL_FORMAT = "buscast-model/1"

ID_COLUMNS = [
    "route_id", "direction", "stop_code", "lat", "lon",
    "previous_station", "destination",
]

DEFAULT_GBDT_PARAMS = {
    "trees": 300, "depth": 6, "learning_rate": 0.1, "min_leaf": 20,
    "subsample": 1.0,
}
DEFAULT_RF_PARAMS = {
    "trees": 100, "depth": None, "min_leaf": 5, "feature_frac": 1.0,
    "bootstrap": True,
}

UNSEEN_CATEGORY = 0  # reserved code for categories absent at fit time


@dataclass
class FeatureMatrix:
    """Named feature columns plus the target and row-routing metadata.

    `frame` holds the features (mixed dtypes; categoricals stay as strings
    until a model encodes them). `stop_codes` stays outside the registry so
    region routing works in the no-identifier regime. `meta` carries per-row
    evaluation context (trip_key, departure_time, route_id, ...).
    """

    frame: pd.DataFrame
    target: np.ndarray
    stop_codes: np.ndarray
    meta: pd.DataFrame = field(default_factory=pd.DataFrame)

    @property
    def registry(self) -> list:
        return list(self.frame.columns)

    def __len__(self):
        return len(self.frame)

    def without_identifiers(self) -> "FeatureMatrix":
        keep = [c for c in self.frame.columns if c not in ID_COLUMNS]
        return FeatureMatrix(
            frame=self.frame[keep],
            target=self.target,
            stop_codes=self.stop_codes,
            meta=self.meta,
        )

    def take(self, indices) -> "FeatureMatrix":
        return FeatureMatrix(
            frame=self.frame.iloc[indices].reset_index(drop=True),
            target=self.target[indices],
            stop_codes=self.stop_codes[indices],
            meta=self.meta.iloc[indices].reset_index(drop=True) if len(self.meta) else self.meta,
        )


@dataclass
class TrainedModel:
    kind: str
    params: dict
    registry: list
    cat_maps: dict
    impute_means: np.ndarray
    payload: dict

    def to_doc(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "kind": self.kind,
            "params": self.params,
            "registry": self.registry,
            "cat_maps": self.cat_maps,
            "impute_means": [float(v) for v in self.impute_means],
            "payload": _payload_to_doc(self.kind, self.payload),
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "TrainedModel":
        if doc.get("format") != MODEL_FORMAT:
            raise ContractError(f"unsupported model format: {doc.get('format')}")
        return cls(
            kind=doc["kind"],
            params=doc["params"],
            registry=doc["registry"],
            cat_maps=doc["cat_maps"],
            impute_means=np.asarray(doc["impute_means"], dtype=float),
            payload=_payload_from_doc(doc["kind"], doc["payload"]),
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_doc(), sort_keys=True))

    @classmethod
    def load(cls, path):
        return cls.from_doc(json.loads(Path(path).read_text()))


def _payload_to_doc(kind, payload):
    if kind == "ols":
        return {"coef": [float(c) for c in payload["coef"]]}
    doc = {k: v for k, v in payload.items() if k != "trees"}
    doc["trees"] = [t.to_dict() for t in payload["trees"]]
    return doc


def _payload_from_doc(kind, doc):
    if kind == "ols":
        return {"coef": np.asarray(doc["coef"], dtype=float)}
    payload = {k: v for k, v in doc.items() if k != "trees"}
    payload["trees"] = [Tree.from_dict(t) for t in doc["trees"]]
    return payload


def _is_categorical(series: pd.Series) -> bool:
    return series.dtype == object or pd.api.types.is_bool_dtype(series)


def _fit_encoding(frame: pd.DataFrame):
    cat_maps = {}
    for col in frame.columns:
        if _is_categorical(frame[col]):
            values = sorted({str(v) for v in frame[col].dropna()})
            cat_maps[col] = {v: i + 1 for i, v in enumerate(values)}
    return cat_maps


def _apply_encoding(frame: pd.DataFrame, registry, cat_maps) -> np.ndarray:
    out = np.empty((len(frame), len(registry)), dtype=np.float64)
    for j, col in enumerate(registry):
        s = frame[col]
        if col in cat_maps:
            mapping = cat_maps[col]
            vals = np.array(
                [np.nan if pd.isna(v) else mapping.get(str(v), UNSEEN_CATEGORY)
                 for v in s],
                dtype=np.float64,
            )
        else:
            vals = pd.to_numeric(s, errors="coerce").values.astype(np.float64)
        out[:, j] = vals
    return out


def _impute(X: np.ndarray, means: np.ndarray) -> np.ndarray:
    mask = np.isnan(X)
    if mask.any():
        X = X.copy()
        X[mask] = np.broadcast_to(means, X.shape)[mask]
    return X


def _prepare_fit(matrix: FeatureMatrix):
    if len(matrix) == 0:
        raise ContractError("cannot fit on an empty matrix")
    cat_maps = _fit_encoding(matrix.frame)
    X = _apply_encoding(matrix.frame, matrix.registry, cat_maps)
    with np.errstate(invalid="ignore"):
        means = np.nanmean(X, axis=0)
    means = np.where(np.isnan(means), 0.0, means)
    return _impute(X, means), cat_maps, means


def _encode_for_predict(model: TrainedModel, matrix: FeatureMatrix) -> np.ndarray:
    if matrix.registry != model.registry:
        raise ContractError(
            "registry mismatch: model was fit on different feature columns"
        )
    X = _apply_encoding(matrix.frame, model.registry, model.cat_maps)
    return _impute(X, model.impute_means)


def ols_fit(matrix: FeatureMatrix, ridge: float = 1e-8) -> TrainedModel:
    """Least-squares fit with an intercept; tiny ridge jitter guards rank deficiency."""
    X, cat_maps, means = _prepare_fit(matrix)
    n, f = X.shape
    A = np.hstack([np.ones((n, 1)), X])
    gram = A.T @ A + ridge * np.eye(f + 1)
    coef = np.linalg.solve(gram, A.T @ matrix.target)
    return TrainedModel(
        kind="ols", params={"ridge": ridge}, registry=list(matrix.registry),
        cat_maps=cat_maps, impute_means=means, payload={"coef": coef},
    )


def gbdt_fit(matrix: FeatureMatrix, params=None, seed: int = 0) -> TrainedModel:
    """Stagewise squared-loss boosting of depth-bounded CART trees."""
    p = dict(DEFAULT_GBDT_PARAMS)
    if params:
        p.update(params)
    if p["trees"] < 0 or not (0 < p["learning_rate"] <= 1) or not (0 < p["subsample"] <= 1):
        raise ContractError(f"degenerate boosting params: {p}")
    X, cat_maps, means = _prepare_fit(matrix)
    y = matrix.target.astype(np.float64)
    n = len(y)
    if n < 2 * p["min_leaf"]:
        raise ContractError("too few rows for min_leaf")
    rng = np.random.default_rng(seed)
    base = float(y.mean())
    pred = np.full(n, base)
    bins = rank_encode(X)
    trees = []
    train_mse = []
    for _ in range(int(p["trees"])):
        residual = y - pred
        if p["subsample"] < 1.0:
            m = max(1, int(round(p["subsample"] * n)))
            chosen = rng.permutation(n)[:m]
            weights = np.zeros(n)
            weights[chosen] = 1.0
        else:
            weights = None
        tree = build_tree(
            X, residual, max_depth=p["depth"], min_leaf=p["min_leaf"],
            weights=weights, bins=bins,
        )
        pred = pred + p["learning_rate"] * tree.predict(X)
        trees.append(tree)
        train_mse.append(float(np.mean((y - pred) ** 2)))
    return TrainedModel(
        kind="gbdt", params=p, registry=list(matrix.registry),
        cat_maps=cat_maps, impute_means=means,
        payload={"base": base, "learning_rate": p["learning_rate"],
                 "trees": trees, "train_mse": train_mse},
    )


def rf_fit(matrix: FeatureMatrix, params=None, seed: int = 0) -> TrainedModel:
    """Bagged CART forest; prediction is the mean over trees."""
    p = dict(DEFAULT_RF_PARAMS)
    if params:
        p.update(params)
    if p["trees"] < 1 or not (0 < p["feature_frac"] <= 1):
        raise ContractError(f"degenerate forest params: {p}")
    X, cat_maps, means = _prepare_fit(matrix)
    y = matrix.target.astype(np.float64)
    n = len(y)
    bins = rank_encode(X)
    trees = []
    seeds = np.random.SeedSequence(seed).spawn(int(p["trees"]))
    for ss in seeds:
        rng = np.random.default_rng(ss)
        if p["bootstrap"]:
            picks = rng.integers(0, n, size=n)
            weights = np.bincount(picks, minlength=n).astype(np.float64)
        else:
            weights = None
        trees.append(
            build_tree(
                X, y, max_depth=p["depth"], min_leaf=p["min_leaf"],
                weights=weights, rng=rng, feature_frac=p["feature_frac"],
                bins=bins,
            )
        )
    return TrainedModel(
        kind="random_forest", params=p, registry=list(matrix.registry),
        cat_maps=cat_maps, impute_means=means, payload={"trees": trees},
    )


def _predict_model(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    if model.kind == "ols":
        coef = model.payload["coef"]
        return coef[0] + X @ coef[1:]
    if model.kind == "gbdt":
        out = np.full(len(X), model.payload["base"])
        lr = model.payload["learning_rate"]
        for tree in model.payload["trees"]:
            out += lr * tree.predict(X)
        return out
    if model.kind == "random_forest":
        trees = model.payload["trees"]
        out = np.zeros(len(X))
        for tree in trees:
            out += tree.predict(X)
        return out / len(trees)
    raise ContractError(f"unknown model kind: {model.kind}")


FITTERS = {
    "ols": lambda m, params, seed: ols_fit(m, **(params or {})),
    "gbdt": lambda m, params, seed: gbdt_fit(m, params, seed),
    "random_forest": lambda m, params, seed: rf_fit(m, params, seed),
}


def train_global(matrix: FeatureMatrix, kind: str, params=None, seed: int = 0) -> TrainedModel:
    """One model over all rows."""
    if kind not in FITTERS:
        raise ContractError(f"unknown model kind: {kind}")
    return FITTERS[kind](matrix, params, seed)


ENSEMBLE_FORMAT = "buscast-ensemble/1"


@dataclass
class PolygonEnsemble:
    partition: Partition
    models: dict
    fallback: TrainedModel
    small_regions: list

    @property
    def registry(self) -> list:
        return self.fallback.registry

    def save(self, path):
        doc = {
            "format": ENSEMBLE_FORMAT,
            "partition": {
                "region_of": dict(sorted(self.partition.region_of.items())),
                "p": self.partition.p,
                "tau": self.partition.tau,
                "region_sums": self.partition.region_sums,
            },
            "models": {str(rid): m.to_doc() for rid, m in sorted(self.models.items())},
            "fallback": self.fallback.to_doc(),
            "small_regions": self.small_regions,
        }
        Path(path).write_text(json.dumps(doc, sort_keys=True))

    @classmethod
    def load(cls, path):
        doc = json.loads(Path(path).read_text())
        if doc.get("format") != ENSEMBLE_FORMAT:
            raise ContractError(f"unsupported ensemble format: {doc.get('format')}")
        part = Partition(
            region_of=doc["partition"]["region_of"],
            p=doc["partition"]["p"],
            tau=doc["partition"]["tau"],
            region_sums=doc["partition"]["region_sums"],
        )
        return cls(
            partition=part,
            models={int(rid): TrainedModel.from_doc(d) for rid, d in doc["models"].items()},
            fallback=TrainedModel.from_doc(doc["fallback"]),
            small_regions=doc["small_regions"],
        )


def train_polygonwise(matrix: FeatureMatrix, partition: Partition, kind: str,
                      params=None, seed: int = 0, min_rows: int = 50) -> PolygonEnsemble:
    """One model per region; rows are routed by their stop's region.

    Regions with fewer than min_rows rows fall back to the citywide model
    (trained regardless, also serving stops missing from the partition).
    """
    region_of = partition.region_of
    unknown = [s for s in dict.fromkeys(matrix.stop_codes) if s not in region_of]
    if unknown:
        raise ContractError(
            f"stops not assigned to any region: {unknown[:5]}"
        )
    fallback = train_global(matrix, kind, params, seed)
    labels = np.array([region_of[s] for s in matrix.stop_codes])
    models = {}
    small = []
    for rid in range(partition.p):
        rows = np.nonzero(labels == rid)[0]
        if len(rows) < min_rows:
            small.append(rid)
            continue
        models[rid] = train_global(matrix.take(rows), kind, params, seed)
    return PolygonEnsemble(
        partition=partition, models=models, fallback=fallback, small_regions=small,
    )


def predict(model_or_ensemble, matrix: FeatureMatrix) -> np.ndarray:
    """Per-row predictions; polygon ensembles assemble a unified citywide vector."""
    if isinstance(model_or_ensemble, TrainedModel):
        X = _encode_for_predict(model_or_ensemble, matrix)
        return _predict_model(model_or_ensemble, X)
    ens: PolygonEnsemble = model_or_ensemble
    region_of = ens.partition.region_of
    out = np.empty(len(matrix))
    labels = np.array(
        [region_of.get(s, -1) for s in matrix.stop_codes], dtype=np.int64
    )
    done = np.zeros(len(matrix), dtype=bool)
    for rid, model in ens.models.items():
        rows = np.nonzero(labels == rid)[0]
        if len(rows) == 0:
            continue
        out[rows] = predict(model, matrix.take(rows))
        done[rows] = True
    rest = np.nonzero(~done)[0]
    if len(rest):
        out[rest] = predict(ens.fallback, matrix.take(rest))
    return out


def train_mean_model(matrix: FeatureMatrix) -> TrainedModel:
    """Constant predictor at the training-target mean (baseline)."""
    base = float(np.mean(matrix.target))
    cat_maps = _fit_encoding(matrix.frame)
    X = _apply_encoding(matrix.frame, matrix.registry, cat_maps)
    with np.errstate(invalid="ignore"):
        means = np.nanmean(X, axis=0)
    means = np.where(np.isnan(means), 0.0, means)
    return TrainedModel(
        kind="gbdt", params={"trees": 0, "learning_rate": 1.0},
        registry=list(matrix.registry), cat_maps=cat_maps, impute_means=means,
        payload={"base": base, "learning_rate": 1.0, "trees": [],
                 "train_mse": []},
    )

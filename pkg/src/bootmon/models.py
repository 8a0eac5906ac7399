"""Regression estimators behind a uniform fit/predict contract.

Five kinds share one interface: ordinary least squares, Poisson GLM
(log link, IRLS), CART regression tree, random forest, and least-squares
gradient boosting. Tree-based models additionally expose their trees as
``TreeNode`` structures for Shapley attribution, and every fitted model
serializes to a versioned JSON document.

Defaults are frozen here: cart {max_depth unlimited, min_samples_leaf 1};
random_forest {n_trees 100, bootstrap on, max_features ceil(d/3)};
gradient_boosting {n_rounds 100, learning_rate 0.1, max_depth 3};
poisson {glm_tol 1e-8, glm_max_iter 100}; ols {l2_ridge 1e-10 fallback}.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from ._seeds import derive_seed
from ._tree import (
    LEAF,
    build_sorted_lists,
    grow_tree_sorted,
    predict_tree,
    predict_trees_flat,
)

log = logging.getLogger(__name__)

KINDS = ("ols", "poisson", "cart", "random_forest", "gradient_boosting")
TREE_KINDS = ("cart", "random_forest", "gradient_boosting")

UNLIMITED_DEPTH = -1

_MODEL_FORMAT = "bootmon-model/1"

# Linear predictor clamp for the Poisson log link; exp(30) ~ 1e13 keeps
# IRLS weights finite without distorting any realistic rate.
_ETA_CLIP = 30.0


@dataclass(frozen=True)
class EstimatorSpec:
    """Model kind plus hyperparameters, with per-kind defaults.

    ``max_depth`` and ``max_features`` accept ``None`` to mean "kind
    default" (unlimited / all features for cart and boosting's depth 3;
    ceil(d/3) features for forests). ``bootstrap`` only affects forests.
    """

    kind: str
    max_depth: int | None = None
    min_samples_leaf: int = 1
    n_trees: int = 100
    n_rounds: int = 100
    learning_rate: float = 0.1
    l2_ridge: float = 1e-10
    glm_max_iter: int = 100
    glm_tol: float = 1e-8
    bootstrap: bool = True
    max_features: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown estimator kind {self.kind!r}; know {KINDS}")
        if self.max_depth is None:
            depth = 3 if self.kind == "gradient_boosting" else UNLIMITED_DEPTH
            object.__setattr__(self, "max_depth", depth)
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.n_trees < 1 or self.n_rounds < 0:
            raise ValueError("n_trees must be >= 1 and n_rounds >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.l2_ridge <= 0 or self.glm_tol <= 0 or self.glm_max_iter < 1:
            raise ValueError("l2_ridge, glm_tol, glm_max_iter must be positive")
        if self.max_features is not None and self.max_features < 1:
            raise ValueError("max_features must be >= 1 when given")

    def resolved_max_features(self, d: int) -> int:
        if self.max_features is not None:
            return min(self.max_features, d)
        if self.kind == "random_forest":
            return min(d, math.ceil(d / 3))
        return d


@dataclass(frozen=True)
class TreeNode:
    """Recursive tree view: leaf {value, cover} or internal split node."""

    cover: float
    value: float = 0.0
    feature: int = LEAF
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature == LEAF


@dataclass(frozen=True)
class _PackedTrees:
    """Ensemble as concatenated flat node arrays (see _tree)."""

    features: np.ndarray
    thresholds: np.ndarray
    lefts: np.ndarray
    rights: np.ndarray
    values: np.ndarray
    covers: np.ndarray
    starts: np.ndarray
    weights: np.ndarray
    offset: float

    @property
    def n_trees(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class FittedModel:
    """Immutable fitted state; ``predict`` is a pure function of it."""

    spec: EstimatorSpec
    train_dim: int
    coef: np.ndarray | None = None
    trees: _PackedTrees | None = None
    warning: str = ""


def _design(X: np.ndarray) -> np.ndarray:
    return np.column_stack((X, np.ones(X.shape[0])))


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise ValueError("X must be a 2-d matrix")
    return np.ascontiguousarray(X)


def fit(spec: EstimatorSpec, X, y, seed: int = 0) -> FittedModel:
    """Fit ``spec`` on (X, y); randomized kinds are deterministic in seed."""
    X = _as_matrix(X)
    y = np.ascontiguousarray(np.asarray(y, dtype=np.float64))
    n, d = X.shape
    if y.shape != (n,):
        raise ValueError(f"y must have shape ({n},), got {y.shape}")
    if n < 2:
        raise ValueError("need at least 2 training rows")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("training data must be finite")

    return fit_on_rows(spec, X, y, None, seed)


def predict(model: FittedModel, X) -> np.ndarray:
    X = _as_matrix(X)
    if X.shape[1] != model.train_dim:
        raise ValueError(
            f"model was trained on {model.train_dim} features, got {X.shape[1]}"
        )
    if model.spec.kind == "ols":
        return X @ model.coef[:-1] + model.coef[-1]
    if model.spec.kind == "poisson":
        eta = np.clip(X @ model.coef[:-1] + model.coef[-1], -_ETA_CLIP, _ETA_CLIP)
        return np.exp(eta)
    t = model.trees
    return predict_trees_flat(
        t.features, t.thresholds, t.lefts, t.rights, t.values,
        t.starts, t.weights, t.offset, X,
    )


def _fit_ols(X, y, l2_ridge):
    Z = _design(X)
    coef, _, rank, _ = np.linalg.lstsq(Z, y, rcond=None)
    if rank < Z.shape[1]:
        gram = Z.T @ Z + l2_ridge * np.eye(Z.shape[1])
        coef = np.linalg.solve(gram, Z.T @ y)
        log.warning("ols: rank-deficient design, ridge fallback (l2=%g)", l2_ridge)
        return coef, "ridge_fallback"
    return coef, ""


def _fit_poisson(X, y, spec: EstimatorSpec):
    Z = _design(X)
    p = Z.shape[1]
    coef = np.zeros(p)
    coef[-1] = math.log(max(y.mean(), 1e-12))
    warning = ""
    for _ in range(spec.glm_max_iter):
        eta = np.clip(Z @ coef, -_ETA_CLIP, _ETA_CLIP)
        mu = np.exp(eta)
        work = eta + (y - mu) / mu
        ZW = Z * mu[:, None]
        gram = Z.T @ ZW
        gram.flat[:: p + 1] += spec.l2_ridge
        new_coef = np.linalg.solve(gram, ZW.T @ work)
        delta = np.max(np.abs(new_coef - coef))
        coef = new_coef
        if delta < spec.glm_tol:
            break
    else:
        warning = "irls_not_converged"
        log.warning("poisson: IRLS did not converge in %d iterations", spec.glm_max_iter)
    return coef, warning


def global_sort_order(X: np.ndarray) -> np.ndarray:
    """Stable per-feature argsort, shared by every tree grown on X."""
    d = X.shape[1]
    return np.ascontiguousarray(
        np.vstack([np.argsort(X[:, f], kind="stable") for f in range(d)])
    )


def _pack(tree_tuples, weights, offset) -> _PackedTrees:
    if tree_tuples:
        starts = np.zeros(len(tree_tuples) + 1, dtype=np.int64)
        for i, t in enumerate(tree_tuples):
            starts[i + 1] = starts[i] + t[6]
        cat = lambda k: np.ascontiguousarray(np.concatenate([t[k] for t in tree_tuples]))
        return _PackedTrees(
            features=cat(0), thresholds=cat(1), lefts=cat(2), rights=cat(3),
            values=cat(4), covers=cat(5), starts=starts,
            weights=np.asarray(weights, dtype=np.float64), offset=float(offset),
        )
    empty_i = np.empty(0, dtype=np.int64)
    empty_f = np.empty(0, dtype=np.float64)
    return _PackedTrees(
        features=empty_i, thresholds=empty_f, lefts=empty_i, rights=empty_i,
        values=empty_f, covers=empty_f, starts=np.zeros(1, dtype=np.int64),
        weights=empty_f, offset=float(offset),
    )


def fit_on_rows(
    spec: EstimatorSpec,
    X: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray | None,
    seed: int = 0,
    *,
    xt: np.ndarray | None = None,
    order: np.ndarray | None = None,
) -> FittedModel:
    """Fit on a row multiset of X (``rows`` may repeat; None = all rows).

    This is the bootstrap-replica entry point: callers fitting many
    replicas on the same X pass precomputed ``xt`` (transposed X) and
    ``order`` (global_sort_order) so trees never re-sort the data.
    """
    n, d = X.shape
    if rows is None:
        rows = np.arange(n, dtype=np.int64)
    else:
        rows = np.asarray(rows, dtype=np.int64)

    if spec.kind in ("ols", "poisson"):
        Xs = X if rows.shape[0] == n and np.array_equal(rows, np.arange(n)) else X[rows]
        ys = y if Xs is X else y[rows]
        if spec.kind == "ols":
            coef, warning = _fit_ols(Xs, ys, spec.l2_ridge)
        else:
            if (ys < 0).any():
                raise ValueError("poisson regression requires nonnegative targets")
            coef, warning = _fit_poisson(Xs, ys, spec)
        return FittedModel(spec=spec, train_dim=d, coef=coef, warning=warning)

    if xt is None:
        xt = np.ascontiguousarray(X.T)
    if order is None:
        order = global_sort_order(X)
    counts = np.bincount(rows, minlength=n).astype(np.int64)

    if spec.kind == "cart":
        lists = build_sorted_lists(order, counts)
        tree = grow_tree_sorted(
            xt, y, lists, spec.max_depth, spec.min_samples_leaf,
            spec.resolved_max_features(d), 0,
        )
        packed = _pack([tree], [1.0], 0.0)
    elif spec.kind == "random_forest":
        max_features = spec.resolved_max_features(d)
        m = rows.shape[0]
        trees = []
        for t in range(spec.n_trees):
            if spec.bootstrap:
                bag_rng = np.random.default_rng(derive_seed(seed, "bag", t))
                bag = rows[bag_rng.integers(0, m, m)]
                tree_counts = np.bincount(bag, minlength=n).astype(np.int64)
            else:
                tree_counts = counts
            lists = build_sorted_lists(order, tree_counts)
            trees.append(
                grow_tree_sorted(
                    xt, y, lists, spec.max_depth, spec.min_samples_leaf,
                    max_features, derive_seed(seed, "feat", t),
                )
            )
        packed = _pack(trees, np.full(spec.n_trees, 1.0 / spec.n_trees), 0.0)
    else:
        lists = build_sorted_lists(order, counts)
        offset = float(y[rows].mean())
        current = np.full(n, offset)
        trees = []
        for _ in range(spec.n_rounds):
            resid = y - current
            tree = grow_tree_sorted(
                xt, resid, lists, spec.max_depth, spec.min_samples_leaf,
                spec.resolved_max_features(d), 0,
            )
            trees.append(tree)
            current += spec.learning_rate * predict_tree(
                tree[0], tree[1], tree[2], tree[3], tree[4], X
            )
        packed = _pack(trees, np.full(len(trees), spec.learning_rate), offset)
    return FittedModel(spec=spec, train_dim=d, trees=packed)


def base_offset(model: FittedModel) -> float:
    """Constant term of the tree decomposition (boosting's initial mean)."""
    if model.trees is None:
        raise ValueError(f"{model.spec.kind} has no tree decomposition")
    return model.trees.offset


def trees_of(model: FittedModel) -> list[tuple[TreeNode, float]]:
    """Tree decomposition: predict(x) = base_offset + sum w_t * tree_t(x)."""
    if model.trees is None:
        raise ValueError(f"{model.spec.kind} has no tree decomposition")
    packed = model.trees
    out = []
    for t in range(packed.n_trees):
        lo = packed.starts[t]
        node = _build_node(packed, int(lo), 0)
        out.append((node, float(packed.weights[t])))
    return out


def _build_node(p: _PackedTrees, base: int, rel: int) -> TreeNode:
    i = base + rel
    if p.features[i] == LEAF:
        return TreeNode(cover=float(p.covers[i]), value=float(p.values[i]))
    return TreeNode(
        cover=float(p.covers[i]),
        value=float(p.values[i]),
        feature=int(p.features[i]),
        threshold=float(p.thresholds[i]),
        left=_build_node(p, base, int(p.lefts[i])),
        right=_build_node(p, base, int(p.rights[i])),
    )


# --- serialization -------------------------------------------------------

def spec_to_config(spec: EstimatorSpec) -> str:
    """Plain-text key=value block, one field per line."""
    lines = [f"kind = {spec.kind}"]
    for name in (
        "max_depth", "min_samples_leaf", "n_trees", "n_rounds",
        "learning_rate", "l2_ridge", "glm_max_iter", "glm_tol",
        "bootstrap", "max_features",
    ):
        val = getattr(spec, name)
        if val is None:
            continue
        lines.append(f"{name} = {val}")
    return "\n".join(lines) + "\n"


def spec_from_config(text: str) -> EstimatorSpec:
    fields: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"malformed spec line {lineno}: {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key == "kind":
            fields[key] = val
        elif key == "bootstrap":
            fields[key] = val.lower() in ("1", "true", "yes", "on")
        elif key in ("learning_rate", "l2_ridge", "glm_tol"):
            fields[key] = float(val)
        elif key in (
            "max_depth", "min_samples_leaf", "n_trees", "n_rounds",
            "glm_max_iter", "max_features",
        ):
            fields[key] = int(val)
        else:
            raise ValueError(f"unknown spec field {key!r} on line {lineno}")
    if "kind" not in fields:
        raise ValueError("spec config must set kind")
    return EstimatorSpec(**fields)


def model_to_json(model: FittedModel) -> str:
    """Versioned JSON document; floats survive the round trip exactly."""
    doc: dict = {
        "format": _MODEL_FORMAT,
        "spec": json.loads(json.dumps(_spec_dict(model.spec))),
        "train_dim": model.train_dim,
        "warning": model.warning,
    }
    if model.coef is not None:
        doc["coef"] = model.coef.tolist()
    if model.trees is not None:
        t = model.trees
        doc["trees"] = {
            "features": t.features.tolist(),
            "thresholds": t.thresholds.tolist(),
            "lefts": t.lefts.tolist(),
            "rights": t.rights.tolist(),
            "values": t.values.tolist(),
            "covers": t.covers.tolist(),
            "starts": t.starts.tolist(),
            "weights": t.weights.tolist(),
            "offset": t.offset,
        }
    return json.dumps(doc)


def model_from_json(text: str) -> FittedModel:
    doc = json.loads(text)
    if doc.get("format") != _MODEL_FORMAT:
        raise ValueError(f"unsupported model format {doc.get('format')!r}")
    spec = EstimatorSpec(**doc["spec"])
    coef = np.asarray(doc["coef"], dtype=np.float64) if "coef" in doc else None
    trees = None
    if "trees" in doc:
        t = doc["trees"]
        trees = _PackedTrees(
            features=np.asarray(t["features"], dtype=np.int64),
            thresholds=np.asarray(t["thresholds"], dtype=np.float64),
            lefts=np.asarray(t["lefts"], dtype=np.int64),
            rights=np.asarray(t["rights"], dtype=np.int64),
            values=np.asarray(t["values"], dtype=np.float64),
            covers=np.asarray(t["covers"], dtype=np.float64),
            starts=np.asarray(t["starts"], dtype=np.int64),
            weights=np.asarray(t["weights"], dtype=np.float64),
            offset=float(t["offset"]),
        )
    return FittedModel(
        spec=spec, train_dim=int(doc["train_dim"]), coef=coef, trees=trees,
        warning=doc.get("warning", ""),
    )


def _spec_dict(spec: EstimatorSpec) -> dict:
    return {
        "kind": spec.kind,
        "max_depth": spec.max_depth,
        "min_samples_leaf": spec.min_samples_leaf,
        "n_trees": spec.n_trees,
        "n_rounds": spec.n_rounds,
        "learning_rate": spec.learning_rate,
        "l2_ridge": spec.l2_ridge,
        "glm_max_iter": spec.glm_max_iter,
        "glm_tol": spec.glm_tol,
        "bootstrap": spec.bootstrap,
        "max_features": spec.max_features,
    }

"""Shapley attribution of prediction-interval widths.

A tree-ensemble surrogate is fit on per-row interval widths; its Shapley
values then attribute the uncertainty to features. The efficient
computation follows the path-dependent TreeSHAP value function: a feature
absent from the conditioning set is marginalized by descending both
branches weighted by training cover, a present feature follows the input.
Per leaf, each distinct path feature contributes a (z, o) pair — z the
product of cover fractions of its branches, o the indicator that the
input satisfies them — and the Shapley sum reduces to subset-size
polynomial coefficients over those pairs. An exact 2^d enumeration oracle
implements the identical value function for verification.

The drift experiment: shift the substantive features and an appended
random-noise feature of a validation set by k standard deviations,
compute widths under a model trained on unshifted data, fit the
surrogate, and compare SHAP global importances with per-feature KS/PSI.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from numba import njit

from ._seeds import derive_seed
from .datasets import DatasetTable, random_split, shift_feature
from .intervals import BootstrapEnsemble, fit_ensemble, interval_widths
from .models import (
    TREE_KINDS,
    EstimatorSpec,
    FittedModel,
    TreeNode,
    base_offset,
    fit,
    predict,
    trees_of,
)
from .monitor import ks_statistic, psi

log = logging.getLogger(__name__)

EFFICIENCY_TOL = 1e-6
_ORACLE_MAX_DIM = 15


@dataclass(frozen=True)
class SurrogateExplainer:
    surrogate: FittedModel
    trained_on: str
    fit_quality: float
    quality_flag: str = ""


@dataclass(frozen=True)
class ShapReport:
    base_value: float
    contributions: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        c = np.asarray(self.contributions, dtype=np.float64)
        if c.ndim != 2 or c.shape[1] != len(self.feature_names):
            raise ValueError("contributions must be (rows, features)")
        object.__setattr__(self, "contributions", c)


def uncertainty_targets(
    ens: BootstrapEnsemble, X_val, alpha: float, rng_seed: int,
    replica_preds: np.ndarray | None = None,
) -> np.ndarray:
    """Per-row interval width at alpha; the surrogate's regression target."""
    return interval_widths(
        ens, X_val, alpha, rng_seed, method="doubt", replica_preds=replica_preds
    )


def fit_surrogate(
    X, widths, spec: EstimatorSpec, seed: int
) -> SurrogateExplainer:
    """Fit a tree-ensemble surrogate on widths; quality = holdout R².

    A 20% holdout measures fit quality, then the returned surrogate is
    refit on all rows. Constant holdout widths make R² undefined; it is
    set to 0 and flagged.
    """
    if spec.kind not in TREE_KINDS:
        raise ValueError(
            f"surrogate must be tree-based ({', '.join(TREE_KINDS)}), "
            f"got {spec.kind!r}"
        )
    X = np.asarray(X, dtype=np.float64)
    widths = np.asarray(widths, dtype=np.float64)
    if not np.isfinite(widths).all():
        raise ValueError("widths must be finite")
    n = X.shape[0]
    n_hold = int(math.floor(0.2 * n + 0.5))
    if n_hold < 1 or n - n_hold < 2:
        raise ValueError("too few rows for a 20% holdout")
    perm = np.random.default_rng(derive_seed(seed, "holdout")).permutation(n)
    hold, rest = perm[:n_hold], perm[n_hold:]
    probe = fit(spec, X[rest], widths[rest], seed=derive_seed(seed, "probe"))
    resid = widths[hold] - predict(probe, X[hold])
    ss_tot = float(np.sum((widths[hold] - widths[hold].mean()) ** 2))
    flag = ""
    if ss_tot == 0.0:
        quality = 0.0
        flag = "constant_holdout_widths"
        log.warning("fit_surrogate: constant holdout widths, R2 set to 0")
    else:
        quality = 1.0 - float(np.sum(resid ** 2)) / ss_tot
    final = fit(spec, X, widths, seed=derive_seed(seed, "final"))
    return SurrogateExplainer(
        surrogate=final,
        trained_on=f"{n} rows x {X.shape[1]} features -> interval widths",
        fit_quality=quality,
        quality_flag=flag,
    )


# --- TreeSHAP ------------------------------------------------------------

def _leaf_walk(node: TreeNode, x: np.ndarray, frac: dict[int, list[float]],
               out: list[tuple[float, dict[int, tuple[float, float]]]]):
    """Collect (leaf value * cover-fraction-free path info) per leaf.

    frac maps feature -> [z, o]: z is the product of cover fractions of
    that feature's branches on the path, o the product of x-follows-branch
    indicators.
    """
    if node.is_leaf:
        out.append((node.value, {f: (zo[0], zo[1]) for f, zo in frac.items()}))
        return
    f = node.feature
    go_left = x[f] <= node.threshold
    for child, follows in ((node.left, go_left), (node.right, not go_left)):
        ratio = child.cover / node.cover
        prev = frac.get(f)
        if prev is None:
            frac[f] = [ratio, 1.0 if follows else 0.0]
        else:
            frac[f] = [prev[0] * ratio, prev[1] * (1.0 if follows else 0.0)]
        _leaf_walk(child, x, frac, out)
        if prev is None:
            del frac[f]
        else:
            frac[f] = prev


def _subset_size_weights(pairs: list[tuple[float, float]]) -> np.ndarray:
    """W[s] = sum over size-s subsets of prod(o in S) * prod(z outside S)."""
    w = np.zeros(len(pairs) + 1)
    w[0] = 1.0
    for k, (z, o) in enumerate(pairs):
        # extend: W'[s] = o*W[s-1] + z*W[s], done in place from the top
        for s in range(k + 1, 0, -1):
            w[s] = o * w[s - 1] + z * w[s]
        w[0] = z * w[0]
    return w


def shap_single_tree(root: TreeNode, x, d: int) -> tuple[float, np.ndarray]:
    """(base, phi) for one tree under the path-dependent value function."""
    x = np.asarray(x, dtype=np.float64)
    leaves: list[tuple[float, dict[int, tuple[float, float]]]] = []
    _leaf_walk(root, x, {}, leaves)
    base = 0.0
    phi = np.zeros(d)
    for value, fracs in leaves:
        feats = sorted(fracs)
        u = len(feats)
        base_term = value
        for f in feats:
            base_term *= fracs[f][0]
        base += base_term
        if u == 0:
            continue
        fact = [math.factorial(k) for k in range(u + 1)]
        for f in feats:
            z_f, o_f = fracs[f]
            if o_f == z_f:
                continue
            others = [fracs[g] for g in feats if g != f]
            w = _subset_size_weights(others)
            ssum = sum(
                w[s] * fact[s] * fact[u - 1 - s] / fact[u]
                for s in range(u)
            )
            phi[f] += (o_f - z_f) * value * ssum
    return base, phi


def tree_shap(explainer: SurrogateExplainer, x) -> tuple[float, np.ndarray]:
    """(base, phi) for the surrogate ensemble at one input.

    base = boosting offset + cover-weighted root expectations; phi sums the
    per-tree Shapley values with the ensemble weights. Efficiency
    (base + sum(phi) = prediction) is enforced.
    """
    model = explainer.surrogate
    x = np.asarray(x, dtype=np.float64)
    d = model.train_dim
    if x.shape != (d,):
        raise ValueError(f"x must have shape ({d},), got {x.shape}")
    base = base_offset(model)
    phi = np.zeros(d)
    for root, weight in trees_of(model):
        _check_covers(root)
        b, p = shap_single_tree(root, x, d)
        base += weight * b
        phi += weight * p
    pred = float(predict(model, x.reshape(1, -1))[0])
    gap = abs(base + phi.sum() - pred)
    if gap > EFFICIENCY_TOL * max(1.0, abs(pred)):
        raise AssertionError(
            f"efficiency violated: base + sum(phi) differs from the "
            f"prediction by {gap:g}"
        )
    return base, phi


def _check_covers(node: TreeNode):
    if not node.is_leaf:
        if node.cover <= 0:
            raise ValueError("internal node with nonpositive cover")
        _check_covers(node.left)
        _check_covers(node.right)


def _leaf_table(model: FittedModel):
    """Flatten an ensemble into per-leaf path constraints.

    Each leaf row stores, per distinct path feature, the product of cover
    fractions (z) and the open-closed value interval the input must fall
    in to follow the path (lo, hi]. Ensemble weights fold into the leaf
    values, so tree boundaries disappear; the weighted cover expectation
    of every leaf accumulates into the returned base term.
    """
    ptr = [0]
    vals: list[float] = []
    feats: list[int] = []
    zs: list[float] = []
    los: list[float] = []
    his: list[float] = []
    base = base_offset(model)

    def walk(node: TreeNode, weight: float, path: dict):
        nonlocal base
        if node.is_leaf:
            v = weight * node.value
            zprod = 1.0
            for f, (z, lo, hi) in sorted(path.items()):
                feats.append(f)
                zs.append(z)
                los.append(lo)
                his.append(hi)
                zprod *= z
            vals.append(v)
            ptr.append(len(feats))
            base += v * zprod
            return
        if node.cover <= 0:
            raise ValueError("internal node with nonpositive cover")
        f = node.feature
        prev = path.get(f)
        z0, lo0, hi0 = prev if prev is not None else (1.0, -np.inf, np.inf)
        ratio_l = node.left.cover / node.cover
        path[f] = (z0 * ratio_l, lo0, min(hi0, node.threshold))
        walk(node.left, weight, path)
        path[f] = (z0 * (1.0 - ratio_l), max(lo0, node.threshold), hi0)
        walk(node.right, weight, path)
        if prev is None:
            del path[f]
        else:
            path[f] = prev

    for root, weight in trees_of(model):
        walk(root, weight, {})
    return (
        np.asarray(ptr, dtype=np.int64),
        np.asarray(vals, dtype=np.float64),
        np.asarray(feats, dtype=np.int64),
        np.asarray(zs, dtype=np.float64),
        np.asarray(los, dtype=np.float64),
        np.asarray(his, dtype=np.float64),
        float(base),
    )


@njit(cache=True)
def _shap_batch_kernel(ptr, vals, feats, zs, los, his, X, fact):
    m, d = X.shape
    phi = np.zeros((m, d))
    max_u = 0
    n_leaves = ptr.shape[0] - 1
    for L in range(n_leaves):
        u = ptr[L + 1] - ptr[L]
        if u > max_u:
            max_u = u
    w = np.empty(max_u + 1)
    o = np.empty(max_u)
    for i in range(m):
        for L in range(n_leaves):
            k0, k1 = ptr[L], ptr[L + 1]
            u = k1 - k0
            if u == 0:
                continue
            value = vals[L]
            for a in range(u):
                x = X[i, feats[k0 + a]]
                o[a] = 1.0 if (x > los[k0 + a]) and (x <= his[k0 + a]) else 0.0
            for a in range(u):
                z_f = zs[k0 + a]
                o_f = o[a]
                if o_f == z_f:
                    continue
                # subset-size polynomial over the other path features
                w[0] = 1.0
                size = 0
                for b in range(u):
                    if b == a:
                        continue
                    zb = zs[k0 + b]
                    ob = o[b]
                    size += 1
                    w[size] = ob * w[size - 1]
                    for s in range(size - 1, 0, -1):
                        w[s] = ob * w[s - 1] + zb * w[s]
                    w[0] = zb * w[0]
                ssum = 0.0
                for s in range(u):
                    ssum += w[s] * fact[s] * fact[u - 1 - s] / fact[u]
                phi[i, feats[k0 + a]] += (o_f - z_f) * value * ssum
    return phi


def batch_shap(
    explainer: SurrogateExplainer, X, feature_names: tuple[str, ...]
) -> ShapReport:
    """Shapley values for every row, checked against the efficiency axiom."""
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    model = explainer.surrogate
    if X.ndim != 2 or X.shape[1] != model.train_dim:
        raise ValueError(f"X must be (rows, {model.train_dim})")
    ptr, vals, feats, zs, los, his, base = _leaf_table(model)
    max_u = int(np.max(np.diff(ptr))) if ptr.shape[0] > 1 else 0
    fact = np.array([math.factorial(k) for k in range(max_u + 1)], dtype=np.float64)
    phi = _shap_batch_kernel(ptr, vals, feats, zs, los, his, X, fact)
    preds = predict(model, X)
    gaps = np.abs(base + phi.sum(axis=1) - preds)
    limit = EFFICIENCY_TOL * np.maximum(1.0, np.abs(preds))
    if X.shape[0] and np.any(gaps > limit):
        worst = int(np.argmax(gaps - limit))
        raise AssertionError(
            f"efficiency violated on row {worst}: gap {gaps[worst]:g}"
        )
    return ShapReport(
        base_value=float(base),
        contributions=phi,
        feature_names=tuple(feature_names),
    )


def exact_shap_oracle(tree: TreeNode, x) -> tuple[float, np.ndarray]:
    """Brute-force Shapley values by 2^d subset enumeration.

    v(S) descends the tree following x on features in S and splitting by
    cover proportions otherwise — the same conditional expectation
    TreeSHAP computes. Only for small d.
    """
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[0]
    if d > _ORACLE_MAX_DIM:
        raise ValueError(f"oracle limited to d <= {_ORACLE_MAX_DIM}")

    def v(subset: frozenset) -> float:
        def rec(node: TreeNode) -> float:
            if node.is_leaf:
                return node.value
            if node.feature in subset:
                nxt = node.left if x[node.feature] <= node.threshold else node.right
                return rec(nxt)
            return (
                node.left.cover * rec(node.left)
                + node.right.cover * rec(node.right)
            ) / node.cover
        return rec(tree)

    cache: dict[frozenset, float] = {}

    def val(s: frozenset) -> float:
        if s not in cache:
            cache[s] = v(s)
        return cache[s]

    phi = np.zeros(d)
    full = list(range(d))
    fact = [math.factorial(k) for k in range(d + 1)]
    for j in range(d):
        rest = [f for f in full if f != j]
        for size in range(d):
            for comb in combinations(rest, size):
                s = frozenset(comb)
                weight = fact[size] * fact[d - size - 1] / fact[d]
                phi[j] += weight * (val(s | {j}) - val(s))
    return val(frozenset()), phi


def global_importance(report: ShapReport) -> np.ndarray:
    """Mean absolute contribution per feature."""
    if report.contributions.shape[0] == 0:
        raise ValueError("empty report")
    return np.abs(report.contributions).mean(axis=0)


def importance_ranking(report: ShapReport) -> list[tuple[str, float]]:
    imp = global_importance(report)
    order = sorted(range(len(imp)), key=lambda j: (-imp[j], j))
    return [(report.feature_names[j], float(imp[j])) for j in order]


def local_explanation(report: ShapReport, row: int) -> list[tuple[str, float]]:
    """Signed contributions of one row, by descending magnitude.

    Ties break toward the lower feature index for determinism.
    """
    if not 0 <= row < report.contributions.shape[0]:
        raise ValueError(f"row {row} out of range")
    contrib = report.contributions[row]
    order = sorted(range(contrib.shape[0]), key=lambda j: (-abs(contrib[j]), j))
    return [(report.feature_names[j], float(contrib[j])) for j in order]


# --- drift attribution pipeline ------------------------------------------

NOISE_FEATURE = "random_noise"
DEFAULT_K_STD = 5.0
DEFAULT_EXPLAIN_B = 400
DEFAULT_EXPLAIN_ALPHA = 0.95
EXPLAIN_VAL_FRACTION = 0.3


def append_noise_feature(ds: DatasetTable, seed: int) -> DatasetTable:
    """Append a seeded standard-normal column named random_noise."""
    rng = np.random.default_rng(derive_seed(seed, "noise-column", ds.name))
    noise = rng.normal(size=ds.n_rows)
    return DatasetTable(
        name=ds.name,
        feature_names=(*ds.feature_names, NOISE_FEATURE),
        features=np.column_stack((ds.features, noise)),
        target=ds.target.copy(),
    )


@dataclass(frozen=True)
class AttributionReport:
    dataset: str
    shifted_features: tuple[str, ...]
    k_std: float
    feature_names: tuple[str, ...]
    shap_importance: dict[str, float]
    ks: dict[str, float]
    psi: dict[str, float]
    ks_baseline: dict[str, float]
    psi_baseline: dict[str, float]
    surrogate_r2: float
    local_row: int
    local: list[tuple[str, float]]
    local_base: float
    local_prediction: float
    val_weight: float


def run_drift_attribution(
    ds: DatasetTable,
    substantive: list[str],
    k_std: float = DEFAULT_K_STD,
    model_spec: EstimatorSpec | None = None,
    surrogate_spec: EstimatorSpec | None = None,
    B: int = DEFAULT_EXPLAIN_B,
    alpha: float = DEFAULT_EXPLAIN_ALPHA,
    seed: int = 0,
) -> AttributionReport:
    """Shift substantive + noise features on held-out rows and attribute.

    ``ds`` must already carry the appended noise feature. Pipeline: fit
    model + bootstrap ensemble on the train part, shift the named features
    and the noise feature by k_std sample stds on the validation part,
    compute interval widths there, fit the surrogate on (shifted features,
    widths), report SHAP importances next to per-feature KS/PSI against
    the train section (baselines: the same statistics without the shift).
    """
    if NOISE_FEATURE not in ds.feature_names:
        raise ValueError(
            f"dataset must carry the appended {NOISE_FEATURE!r} feature"
        )
    for f in substantive:
        if f not in ds.feature_names:
            raise ValueError(f"unknown substantive feature {f!r}")
    model_spec = model_spec or EstimatorSpec("gradient_boosting")
    surrogate_spec = surrogate_spec or EstimatorSpec(
        "gradient_boosting", min_samples_leaf=10
    )

    train, val = random_split(
        ds, EXPLAIN_VAL_FRACTION, derive_seed(seed, "split")
    )
    ens = fit_ensemble(
        model_spec, train.features, train.target, B, derive_seed(seed, "ensemble")
    )

    shifted_names = (*substantive, NOISE_FEATURE)
    shifted = val
    for f in shifted_names:
        shifted = shift_feature(shifted, f, k_std)

    widths = uncertainty_targets(
        ens, shifted.features, alpha, derive_seed(seed, "draw")
    )
    explainer = fit_surrogate(
        shifted.features, widths, surrogate_spec, derive_seed(seed, "surrogate")
    )
    report = batch_shap(explainer, shifted.features, ds.feature_names)
    importance = global_importance(report)

    ks_map, psi_map, ks_base, psi_base = {}, {}, {}, {}
    for j, name in enumerate(ds.feature_names):
        ref = train.features[:, j]
        ks_map[name] = ks_statistic(ref, shifted.features[:, j])
        psi_map[name] = psi(ref, shifted.features[:, j])
        ks_base[name] = ks_statistic(ref, val.features[:, j])
        psi_base[name] = psi(ref, val.features[:, j])

    local_row = int(np.argmax(widths))
    local = local_explanation(report, local_row)
    local_pred = float(
        predict(explainer.surrogate, shifted.features[local_row].reshape(1, -1))[0]
    )
    return AttributionReport(
        dataset=ds.name,
        shifted_features=shifted_names,
        k_std=float(k_std),
        feature_names=ds.feature_names,
        shap_importance={n: float(v) for n, v in zip(ds.feature_names, importance)},
        ks=ks_map,
        psi=psi_map,
        ks_baseline=ks_base,
        psi_baseline=psi_base,
        surrogate_r2=explainer.fit_quality,
        local_row=local_row,
        local=local,
        local_base=report.base_value,
        local_prediction=local_pred,
        val_weight=ens.val_weight,
    )

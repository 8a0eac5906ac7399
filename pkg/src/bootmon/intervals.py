"""Bootstrap prediction intervals with 0.632+ residual weighting.

The construction: fit B bootstrap replicas of a model, collect raw signed
residuals split by provenance (in-bag rows feed the train pool, out-of-bag
rows the validation pool), and estimate how much to trust each pool via
the 0.632+ overfitting rate computed from mean-squared pool summaries and
the no-information error. An interval at x0 mixes model-variance samples
m_b(x0) = mean_b'(pred_b'(x0)) - pred_b(x0) with one residual draw per
replica: from the validation pool with probability val_weight, else from
the train pool. The baseline method ("nasa") draws from the train pool
only, which collapses for interpolating models.

Quantiles use linear interpolation between order statistics (the type 7
convention) throughout.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ._seeds import derive_seed
from .datasets import DatasetTable, random_split
from .models import EstimatorSpec, FittedModel, fit_on_rows, global_sort_order, predict

log = logging.getLogger(__name__)

METHODS = ("doubt", "nasa")

DEFAULT_B_COVERAGE = 200
DEFAULT_B_MONITOR = 50
DEFAULT_ALPHA_GRID = tuple(round(0.75 + 0.01 * i, 2) for i in range(25))
COVERAGE_TEST_FRACTION = 0.1

_OOB_RETRY_CAP = 100


@dataclass(frozen=True)
class BootstrapEnsemble:
    """Fitted bootstrap ensemble plus its residual pools and weighting.

    ``replicas`` is None for streamed ensembles (benchmark scale), where
    per-row predictions were taken during fitting and the models were
    discarded; the per-row interval ops then require the caller to supply
    replica predictions.
    """

    spec: EstimatorSpec
    B: int
    replicas: tuple[FittedModel, ...] | None
    inbag: tuple[np.ndarray, ...]
    train_residual_pool: np.ndarray
    val_residual_pool: np.ndarray
    train_error: float
    val_error: float
    no_info_err: float
    val_weight: float
    full_model: FittedModel
    n_train: int


@dataclass(frozen=True)
class PredictionWithInterval:
    point: float
    lower: float
    upper: float
    alpha: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0,1), got {self.alpha}")
        if self.lower > self.upper:
            raise ValueError("interval must satisfy lower <= upper")

    @property
    def width(self) -> float:
        return self.upper - self.lower


def no_info_error(y, preds) -> float:
    """(1/n^2) sum_ij (y_i - pred_j)^2.

    Uses the O(n) expansion mean(y^2) - 2*mean(y)*mean(pred) + mean(pred^2)
    for n > 1000; the identity follows from expanding the square and
    separating the double sum.
    """
    y = np.asarray(y, dtype=np.float64)
    preds = np.asarray(preds, dtype=np.float64)
    if y.shape != preds.shape or y.ndim != 1:
        raise ValueError("y and preds must be equal-length vectors")
    n = y.shape[0]
    if n == 0:
        raise ValueError("empty input")
    if n > 1000:
        return float(np.mean(y * y) - 2.0 * y.mean() * preds.mean()
                     + np.mean(preds * preds))
    diff = y[:, None] - preds[None, :]
    return float(np.mean(diff * diff))


def val_weight(train_err: float, val_err: float, no_info_err: float) -> float:
    """0.632+ weight: 0.632 / (1 - 0.368 * R) with R clamped to [0, 1]."""
    if min(train_err, val_err, no_info_err) < 0:
        raise ValueError("error rates must be nonnegative")
    denom = no_info_err - train_err
    if denom <= 0:
        rate = 1.0 if val_err > train_err else 0.0
        log.warning("val_weight: degenerate no-information gap, clamping R to %g", rate)
    else:
        rate = (val_err - train_err) / denom
        if rate < 0.0:
            rate = 0.0
        elif rate > 1.0:
            rate = 1.0
    return 0.632 / (1.0 - 0.368 * rate)


def _quantile_sorted(sorted_vals: np.ndarray, q: float) -> np.ndarray:
    """Type-7 quantile along axis 0 of a presorted array."""
    n = sorted_vals.shape[0]
    h = (n - 1) * q
    lo = int(np.floor(h))
    hi = min(lo + 1, n - 1)
    frac = h - lo
    return sorted_vals[lo] + frac * (sorted_vals[hi] - sorted_vals[lo])


def fit_ensemble(
    spec: EstimatorSpec, X, y, B: int, seed: int
) -> BootstrapEnsemble:
    """Fit B bootstrap replicas, retaining them for per-row interval ops."""
    ens, _ = stream_ensemble(spec, X, y, B, seed, eval_matrices=(), keep_models=True)
    return ens


def stream_ensemble(
    spec: EstimatorSpec,
    X,
    y,
    B: int,
    seed: int,
    eval_matrices: tuple = (),
    keep_models: bool = False,
) -> tuple[BootstrapEnsemble, list[np.ndarray]]:
    """Fit the ensemble, evaluating each replica on ``eval_matrices``.

    Returns the ensemble and one (B, m_k) prediction matrix per eval
    matrix. With keep_models=False each replica is discarded after its
    predictions are taken, bounding memory at benchmark scale.
    """
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    y = np.ascontiguousarray(np.asarray(y, dtype=np.float64))
    n = X.shape[0]
    if B < 2:
        raise ValueError("B must be >= 2")
    if n < 2:
        raise ValueError("need at least 2 rows")

    tree_kind = spec.kind in ("cart", "random_forest", "gradient_boosting")
    xt = np.ascontiguousarray(X.T) if tree_kind else None
    order = global_sort_order(X) if tree_kind else None
    evals = [np.ascontiguousarray(np.asarray(E, dtype=np.float64)) for E in eval_matrices]
    eval_preds = [np.empty((B, E.shape[0])) for E in evals]

    replicas: list[FittedModel] = []
    inbags: list[np.ndarray] = []
    train_parts: list[np.ndarray] = []
    val_parts: list[np.ndarray] = []

    for b in range(B):
        rows = None
        for attempt in range(_OOB_RETRY_CAP):
            bag_rng = np.random.default_rng(derive_seed(seed, "bag", b, attempt))
            candidate = bag_rng.integers(0, n, n)
            if np.unique(candidate).shape[0] < n:
                rows = candidate
                break
        if rows is None:
            raise ValueError(
                f"could not draw a bootstrap sample with a nonempty "
                f"out-of-bag set in {_OOB_RETRY_CAP} tries (n={n})"
            )
        model_b = fit_on_rows(
            spec, X, y, rows, seed=derive_seed(seed, "fit", b), xt=xt, order=order
        )
        counts = np.bincount(rows, minlength=n)
        in_bag = counts > 0
        preds_train = predict(model_b, X)
        resid = y - preds_train
        train_parts.append(resid[in_bag])
        val_parts.append(resid[~in_bag])
        for k, E in enumerate(evals):
            eval_preds[k][b] = predict(model_b, E)
        inbags.append(np.sort(rows))
        if keep_models:
            replicas.append(model_b)

    full_model = fit_on_rows(
        spec, X, y, None, seed=derive_seed(seed, "fit", "full"), xt=xt, order=order
    )
    train_pool = np.concatenate(train_parts)
    val_pool = np.concatenate(val_parts)
    train_err = float(np.mean(train_pool ** 2))
    val_err = float(np.mean(val_pool ** 2))
    no_info = no_info_error(y, predict(full_model, X))
    ens = BootstrapEnsemble(
        spec=spec,
        B=B,
        replicas=tuple(replicas) if keep_models else None,
        inbag=tuple(inbags),
        train_residual_pool=train_pool,
        val_residual_pool=val_pool,
        train_error=train_err,
        val_error=val_err,
        no_info_err=no_info,
        val_weight=val_weight(train_err, val_err, no_info),
        full_model=full_model,
        n_train=n,
    )
    return ens, eval_preds


def _replica_preds_at(ens: BootstrapEnsemble, X: np.ndarray) -> np.ndarray:
    if ens.replicas is None:
        raise ValueError(
            "this ensemble was streamed without retaining replicas; "
            "use the batch helpers with replica predictions instead"
        )
    return np.vstack([predict(r, X) for r in ens.replicas])


def model_variance_samples(ens: BootstrapEnsemble, x0) -> np.ndarray:
    """m_b(x0) = mean_b'(pred_b'(x0)) - pred_b(x0); sums to zero."""
    x0 = np.asarray(x0, dtype=np.float64).reshape(1, -1)
    preds = _replica_preds_at(ens, x0)[:, 0]
    return preds.mean() - preds


def _draw_residuals(
    ens: BootstrapEnsemble, shape: tuple[int, ...], rng: np.random.Generator,
    method: str,
) -> np.ndarray:
    """One signed residual per (replica, row) slot from the method's pool.

    doubt: validation pool with probability val_weight, else train pool
    (both indices are drawn unconditionally so the stream consumption does
    not depend on the coin flips). nasa: train pool only.
    """
    if method == "nasa":
        idx = rng.integers(0, ens.train_residual_pool.shape[0], shape)
        return ens.train_residual_pool[idx]
    if method != "doubt":
        raise ValueError(f"unknown interval method {method!r}")
    coin = rng.random(shape)
    idx_val = rng.integers(0, ens.val_residual_pool.shape[0], shape)
    idx_train = rng.integers(0, ens.train_residual_pool.shape[0], shape)
    return np.where(
        coin < ens.val_weight,
        ens.val_residual_pool[idx_val],
        ens.train_residual_pool[idx_train],
    )


def _interval_from_pool(point: float, c_vals: np.ndarray, alpha: float) -> PredictionWithInterval:
    lo = float(np.quantile(c_vals, (1.0 - alpha) / 2.0))
    hi = float(np.quantile(c_vals, (1.0 + alpha) / 2.0))
    return PredictionWithInterval(point=point, lower=point + lo, upper=point + hi, alpha=alpha)


def predict_interval(
    ens: BootstrapEnsemble, x0, alpha: float, rng_seed: int
) -> PredictionWithInterval:
    """Interval at one point from C(x0) = {m_b(x0) + o_b}."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0,1), got {alpha}")
    x0 = np.asarray(x0, dtype=np.float64).reshape(1, -1)
    m_b = model_variance_samples(ens, x0[0])
    rng = np.random.default_rng(rng_seed)
    o_b = _draw_residuals(ens, (ens.B,), rng, "doubt")
    point = float(predict(ens.full_model, x0)[0])
    return _interval_from_pool(point, m_b + o_b, alpha)


def nasa_predict_interval(
    ens: BootstrapEnsemble, x0, alpha: float, rng_seed: int = 0
) -> PredictionWithInterval:
    """Baseline interval: same variance samples, train-residual pool only."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0,1), got {alpha}")
    x0 = np.asarray(x0, dtype=np.float64).reshape(1, -1)
    m_b = model_variance_samples(ens, x0[0])
    rng = np.random.default_rng(rng_seed)
    o_b = _draw_residuals(ens, (ens.B,), rng, "nasa")
    point = float(predict(ens.full_model, x0)[0])
    return _interval_from_pool(point, m_b + o_b, alpha)


def interval_bounds_batch(
    ens: BootstrapEnsemble,
    X,
    alphas,
    rng_seed: int,
    method: str = "doubt",
    replica_preds: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized intervals: points (m,), lowers and uppers (len(alphas), m).

    One residual is drawn per (replica, row) slot from a stream seeded by
    rng_seed, shared across all alphas so intervals are nested. Streamed
    ensembles must pass the replica prediction matrix (B, m) captured at
    fit time.
    """
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    if replica_preds is None:
        preds = _replica_preds_at(ens, X)
    else:
        preds = np.asarray(replica_preds, dtype=np.float64)
        if preds.shape != (ens.B, X.shape[0]):
            raise ValueError("replica_preds must have shape (B, n_rows)")
    m_mat = preds.mean(axis=0, keepdims=True) - preds
    rng = np.random.default_rng(rng_seed)
    o_mat = _draw_residuals(ens, preds.shape, rng, method)
    c_sorted = np.sort(m_mat + o_mat, axis=0)
    point = predict(ens.full_model, X)
    alphas = np.atleast_1d(np.asarray(alphas, dtype=np.float64))
    lowers = np.empty((alphas.shape[0], X.shape[0]))
    uppers = np.empty_like(lowers)
    for i, a in enumerate(alphas):
        if not 0.0 < a < 1.0:
            raise ValueError(f"alpha must be in (0,1), got {a}")
        lowers[i] = point + _quantile_sorted(c_sorted, (1.0 - a) / 2.0)
        uppers[i] = point + _quantile_sorted(c_sorted, (1.0 + a) / 2.0)
    return point, lowers, uppers


def interval_widths(
    ens: BootstrapEnsemble,
    X,
    alpha: float,
    rng_seed: int,
    method: str = "doubt",
    replica_preds: np.ndarray | None = None,
) -> np.ndarray:
    """Per-row interval width at one alpha (upper - lower)."""
    _, lowers, uppers = interval_bounds_batch(
        ens, X, [alpha], rng_seed, method=method, replica_preds=replica_preds
    )
    return uppers[0] - lowers[0]


@dataclass(frozen=True)
class CoverageRow:
    dataset: str
    model: str
    method: str
    alpha: float
    coverage: float
    abs_dev: float
    mean_width: float


@dataclass(frozen=True)
class CoverageReport:
    rows: tuple[CoverageRow, ...]
    # per (model, method): per-dataset mean |coverage - alpha| * 100,
    # plus mean and sample std across datasets.
    aggregates: dict


def coverage_benchmark(
    datasets: list[DatasetTable],
    specs: list[EstimatorSpec],
    alphas=DEFAULT_ALPHA_GRID,
    B: int = DEFAULT_B_COVERAGE,
    seed: int = 0,
) -> CoverageReport:
    """Empirical interval coverage over a random train/test split.

    For every (dataset, model): fit the ensemble on the train part of a
    90/10 split, then for both methods and every alpha measure the test
    fraction inside the interval. Cell seeds derive from (seed, dataset,
    model) so any subset of the grid reproduces the full run's numbers.
    """
    alphas = list(alphas)
    rows: list[CoverageRow] = []
    per_cell_mad: dict[tuple[str, str], dict[str, float]] = {}
    for ds in datasets:
        for spec in specs:
            cell_seed = derive_seed(seed, "coverage", ds.name, spec.kind)
            train, test = random_split(
                ds, COVERAGE_TEST_FRACTION, derive_seed(cell_seed, "split")
            )
            ens, (test_preds,) = stream_ensemble(
                spec, train.features, train.target, B,
                derive_seed(cell_seed, "ensemble"),
                eval_matrices=(test.features,),
            )
            for method in METHODS:
                _, lowers, uppers = interval_bounds_batch(
                    ens, test.features, alphas,
                    derive_seed(cell_seed, "draw", method),
                    method=method, replica_preds=test_preds,
                )
                inside = (lowers <= test.target) & (test.target <= uppers)
                devs = []
                for i, a in enumerate(alphas):
                    cov = float(inside[i].mean())
                    dev = abs(cov - a) * 100.0
                    devs.append(dev)
                    rows.append(CoverageRow(
                        dataset=ds.name, model=spec.kind, method=method,
                        alpha=float(a), coverage=cov, abs_dev=dev,
                        mean_width=float((uppers[i] - lowers[i]).mean()),
                    ))
                per_cell_mad.setdefault((spec.kind, method), {})[ds.name] = float(
                    np.mean(devs)
                )
            log.info("coverage: %s / %s done", ds.name, spec.kind)

    aggregates: dict = {}
    for (model, method), per_ds in per_cell_mad.items():
        vals = np.array(list(per_ds.values()))
        agg = {
            "per_dataset": per_ds,
            "mean_abs_dev": float(vals.mean()),
            "std_abs_dev": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0,
        }
        aggregates.setdefault(model, {})[method] = agg
    return CoverageReport(rows=tuple(rows), aggregates=aggregates)

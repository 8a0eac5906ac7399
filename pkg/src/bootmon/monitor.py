"""Unsupervised deterioration monitoring and its benchmark.

Protocol: sort a dataset by one feature, train on the middle third, sweep
rolling windows across the full sorted range, and compare a label-free
monitoring value against the windowed mean squared error of the same
model. Both series are standardized per cell (dataset, feature, model,
method) with the population standard deviation; the deterioration score
is the mean absolute gap between the two z-series over windows lying
entirely inside an out-of-distribution section.

Monitors: interval width at a fixed alpha ("doubt"), and two classical
drift statistics computed per feature against the train section and
averaged across features — the exact two-sample Kolmogorov-Smirnov
statistic ("ks") and the Population Stability Index ("psi", 10 equal-mass
bins from train quantiles with a 1e-4 proportion floor).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ._seeds import derive_seed
from .datasets import DatasetTable, rolling_windows, sorted_three_way_split
from .intervals import (
    DEFAULT_B_MONITOR,
    BootstrapEnsemble,
    interval_widths,
    stream_ensemble,
)
from .models import EstimatorSpec, FittedModel, fit, predict

log = logging.getLogger(__name__)

MONITOR_METHODS = ("doubt", "ks", "psi")
DEFAULT_WINDOW = 50
DEFAULT_STRIDE = 1
DEFAULT_MONITOR_ALPHA = 0.95
PSI_BINS = 10
_PSI_FLOOR = 1e-4


def ks_statistic(ref, sample) -> float:
    """Exact sup_x |ECDF_ref(x) - ECDF_sample(x)|.

    The sup of a difference of right-continuous step functions is attained
    at a data point of one of the samples, so evaluating both ECDFs at
    every point of the merged samples is exact (ties included).
    """
    ref = np.sort(np.asarray(ref, dtype=np.float64))
    smp = np.sort(np.asarray(sample, dtype=np.float64))
    n, m = ref.shape[0], smp.shape[0]
    if n == 0 or m == 0:
        raise ValueError("ks_statistic requires nonempty inputs")
    grid = np.concatenate((ref, smp))
    f_ref = np.searchsorted(ref, grid, side="right") / n
    f_smp = np.searchsorted(smp, grid, side="right") / m
    return float(np.abs(f_ref - f_smp).max())


def ks_statistic_bruteforce(ref, sample) -> float:
    """O(n*m) oracle: evaluate both ECDFs at every point of both samples."""
    ref = np.asarray(ref, dtype=np.float64)
    smp = np.asarray(sample, dtype=np.float64)
    if ref.size == 0 or smp.size == 0:
        raise ValueError("ks_statistic requires nonempty inputs")
    best = 0.0
    for x in np.concatenate((ref, smp)):
        f_r = float((ref <= x).mean())
        f_s = float((smp <= x).mean())
        best = max(best, abs(f_r - f_s))
    return best


def psi_bin_edges(ref, n_bins: int = PSI_BINS) -> np.ndarray:
    """Inner quantile edges of equal-mass bins; duplicates collapsed."""
    ref = np.asarray(ref, dtype=np.float64)
    if ref.size == 0:
        raise ValueError("psi requires a nonempty reference")
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    qs = np.arange(1, n_bins) / n_bins
    edges = np.unique(np.quantile(ref, qs))
    if edges.shape[0] < n_bins - 1:
        log.warning("psi: reference quantiles collapsed to %d edges", edges.shape[0])
    return edges


def _bin_proportions(vals: np.ndarray, edges: np.ndarray) -> np.ndarray:
    # Right-open bins: bin k holds edges[k-1] <= x < edges[k].
    idx = np.searchsorted(edges, vals, side="right")
    counts = np.bincount(idx, minlength=edges.shape[0] + 1).astype(np.float64)
    p = counts / vals.shape[0]
    p = np.maximum(p, _PSI_FLOOR)
    return p / p.sum()


def psi(ref, sample, n_bins: int = PSI_BINS) -> float:
    """Population Stability Index of ``sample`` against ``ref``."""
    ref = np.asarray(ref, dtype=np.float64)
    smp = np.asarray(sample, dtype=np.float64)
    if smp.size == 0:
        raise ValueError("psi requires a nonempty sample")
    edges = psi_bin_edges(ref, n_bins)
    p = _bin_proportions(ref, edges)
    q = _bin_proportions(smp, edges)
    return float(np.sum((p - q) * np.log(p / q)))


def uncertainty_monitor_value(
    ens: BootstrapEnsemble,
    window_X,
    alpha: float,
    rng_seed: int,
    replica_preds: np.ndarray | None = None,
) -> float:
    """Mean interval width over the window at the given alpha."""
    return float(
        interval_widths(
            ens, window_X, alpha, rng_seed, method="doubt",
            replica_preds=replica_preds,
        ).mean()
    )


def drift_monitor_value(train_X, window_X, method: str) -> float:
    """Per-feature drift statistic vs the train section, averaged."""
    train_X = np.asarray(train_X, dtype=np.float64)
    window_X = np.asarray(window_X, dtype=np.float64)
    if train_X.ndim != 2 or window_X.ndim != 2 or train_X.shape[1] != window_X.shape[1]:
        raise ValueError("train_X and window_X must share the feature count")
    if method == "ks":
        stat = ks_statistic
    elif method == "psi":
        stat = psi
    else:
        raise ValueError(f"unknown drift method {method!r}")
    vals = [stat(train_X[:, j], window_X[:, j]) for j in range(train_X.shape[1])]
    return float(np.mean(vals))


def window_mse(full_model: FittedModel, window_X, window_y) -> float:
    window_y = np.asarray(window_y, dtype=np.float64)
    if window_y.size == 0:
        raise ValueError("empty window")
    resid = predict(full_model, window_X) - window_y
    return float(np.mean(resid * resid))


def standardize(v) -> np.ndarray:
    """(v - mean) / population std; constant input yields zeros, flagged."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("standardize requires a nonempty vector")
    std = float(v.std())
    if std == 0.0:
        log.warning("standardize: constant series, returning zeros")
        return np.zeros_like(v)
    return (v - v.mean()) / std


@dataclass(frozen=True)
class MonitorSeries:
    """One cell's window series: raw and standardized monitor vs MSE."""

    dataset: str
    feature: str
    model: str
    method: str
    window_ranges: tuple[tuple[int, int], ...]
    section_tags: tuple[str, ...]
    raw_monitor: np.ndarray
    raw_mse: np.ndarray
    z_monitor: np.ndarray
    z_mse: np.ndarray


@dataclass(frozen=True)
class ScoreCell:
    dataset: str
    model: str
    method: str
    score_mean: float
    score_std: float
    n_windows_scored: int


@dataclass(frozen=True)
class ScoreReport:
    cells: tuple[ScoreCell, ...]
    # per model -> method -> {per_dataset, mean, std}
    aggregates: dict


def deterioration_score(series: MonitorSeries) -> float:
    """Mean |z_monitor - z_mse| over windows fully inside an OOD section."""
    devs = _ood_deviations(series)
    if devs.size == 0:
        raise ValueError(
            f"no out-of-distribution windows in cell "
            f"({series.dataset}, {series.feature}, {series.model}, {series.method})"
        )
    return float(devs.mean())


def _ood_deviations(series: MonitorSeries) -> np.ndarray:
    tags = np.asarray(series.section_tags)
    mask = (tags == "lower") | (tags == "upper")
    return np.abs(series.z_monitor - series.z_mse)[mask]


def section_tags_for(
    window_ranges, n_lower: int, n_train: int
) -> tuple[str, ...]:
    """Tag each [start, end) window by the section containing all its rows."""
    tags = []
    lo_end = n_lower
    tr_end = n_lower + n_train
    for start, end in window_ranges:
        if end <= lo_end:
            tags.append("lower")
        elif start >= lo_end and end <= tr_end:
            tags.append("train")
        elif start >= tr_end:
            tags.append("upper")
        else:
            tags.append("mixed")
    return tuple(tags)


def _window_means(per_row: np.ndarray, ranges) -> np.ndarray:
    csum = np.concatenate(([0.0], np.cumsum(per_row)))
    return np.array([(csum[e] - csum[s]) / (e - s) for s, e in ranges])


def run_monitor_benchmark(
    datasets: list[DatasetTable],
    specs: list[EstimatorSpec],
    methods=MONITOR_METHODS,
    window: int = DEFAULT_WINDOW,
    stride: int = DEFAULT_STRIDE,
    B: int = DEFAULT_B_MONITOR,
    alpha: float = DEFAULT_MONITOR_ALPHA,
    seed: int = 0,
) -> tuple[ScoreReport, list[MonitorSeries]]:
    """Score every (dataset, feature, model, method) cell and aggregate.

    Per-dataset score = unweighted mean over features of the per-feature
    OOD-window deviation means; aggregates report mean and sample std
    across datasets. Cell seeds derive from (seed, dataset, feature,
    model, method-role) so any grid subset reproduces the full run.
    """
    methods = tuple(methods)
    for m in methods:
        if m not in MONITOR_METHODS:
            raise ValueError(f"unknown monitor method {m!r}")
    all_series: list[MonitorSeries] = []
    # (dataset, model, method) -> feature -> per-window OOD deviations
    cell_devs: dict[tuple[str, str, str], dict[str, np.ndarray]] = {}

    for ds in datasets:
        for feature in ds.feature_names:
            col = ds.column(feature)
            if col.max() == col.min():
                log.warning(
                    "monitor: skipping constant feature %s/%s", ds.name, feature
                )
                continue
            split = sorted_three_way_split(ds, feature)
            order = np.concatenate((split.lower_idx, split.train_idx, split.upper_idx))
            Xs = ds.features[order]
            ys = ds.target[order]
            n_lower = split.lower_idx.shape[0]
            n_train = split.train_idx.shape[0]
            train_X = Xs[n_lower:n_lower + n_train]
            train_y = ys[n_lower:n_lower + n_train]
            plan = rolling_windows(ds.n_rows, window, stride)
            tags = section_tags_for(plan.window_ranges, n_lower, n_train)
            if not any(t in ("lower", "upper") for t in tags):
                log.warning(
                    "monitor: skipping %s/%s, no window fits inside an OOD "
                    "section (window=%d)", ds.name, feature, window,
                )
                continue

            drift_raw: dict[str, np.ndarray] = {}
            for method in methods:
                if method == "doubt":
                    continue
                drift_raw[method] = _drift_series(train_X, Xs, plan.window_ranges, method)

            for spec in specs:
                cell_seed = derive_seed(seed, "monitor", ds.name, feature, spec.kind)
                full = fit(
                    spec, train_X, train_y, seed=derive_seed(cell_seed, "full")
                )
                resid = predict(full, Xs) - ys
                raw_mse = _window_means(resid * resid, plan.window_ranges)
                z_mse = standardize(raw_mse)

                for method in methods:
                    if method == "doubt":
                        ens, (preds,) = stream_ensemble(
                            spec, train_X, train_y, B,
                            derive_seed(cell_seed, "ensemble"),
                            eval_matrices=(Xs,),
                        )
                        widths = interval_widths(
                            ens, Xs, alpha, derive_seed(cell_seed, "draw"),
                            replica_preds=preds,
                        )
                        raw_mon = _window_means(widths, plan.window_ranges)
                    else:
                        raw_mon = drift_raw[method]
                    series = MonitorSeries(
                        dataset=ds.name, feature=feature, model=spec.kind,
                        method=method, window_ranges=plan.window_ranges,
                        section_tags=tags, raw_monitor=raw_mon, raw_mse=raw_mse,
                        z_monitor=standardize(raw_mon), z_mse=z_mse,
                    )
                    all_series.append(series)
                    devs = _ood_deviations(series)
                    cell_devs.setdefault(
                        (ds.name, spec.kind, method), {}
                    )[feature] = devs
            log.info("monitor: %s / %s done", ds.name, feature)

    cells: list[ScoreCell] = []
    per_ds_scores: dict[tuple[str, str], dict[str, float]] = {}
    for (ds_name, model, method), by_feature in sorted(cell_devs.items()):
        feature_means = np.array([d.mean() for d in by_feature.values()])
        pooled = np.concatenate(list(by_feature.values()))
        score = float(feature_means.mean())
        cells.append(ScoreCell(
            dataset=ds_name, model=model, method=method,
            score_mean=score,
            score_std=float(pooled.std(ddof=1)) if pooled.size > 1 else 0.0,
            n_windows_scored=int(pooled.size),
        ))
        per_ds_scores.setdefault((model, method), {})[ds_name] = score

    aggregates: dict = {}
    for (model, method), per_ds in per_ds_scores.items():
        vals = np.array(list(per_ds.values()))
        aggregates.setdefault(model, {})[method] = {
            "per_dataset": per_ds,
            "mean": float(vals.mean()),
            "std": float(vals.std(ddof=1)) if vals.size > 1 else 0.0,
        }
    return ScoreReport(cells=tuple(cells), aggregates=aggregates), all_series


def _drift_series(train_X, Xs, ranges, method: str) -> np.ndarray:
    """Per-window drift statistic, mean over features, exact and fast.

    KS uses presorted train columns and evaluates both one-sided gaps at
    the window points only; PSI reuses the train bin edges and reference
    proportions across windows.
    """
    d = train_X.shape[1]
    n_windows = len(ranges)
    acc = np.zeros(n_windows)
    if method == "ks":
        # Exact KS without touching every train point per window: both
        # ECDFs are evaluated at the window points from the right and as
        # left limits. Between consecutive window points the window ECDF
        # is constant, so the gap there is maximized at one of these
        # evaluations; ties are handled by the searchsorted counts.
        for j in range(d):
            ref = np.sort(train_X[:, j])
            n = ref.shape[0]
            col = Xs[:, j]
            for i, (s, e) in enumerate(ranges):
                w = np.sort(col[s:e])
                m = w.shape[0]
                f_w_hi = np.searchsorted(w, w, side="right") / m
                f_w_lo = np.searchsorted(w, w, side="left") / m
                f_r_hi = np.searchsorted(ref, w, side="right") / n
                f_r_lo = np.searchsorted(ref, w, side="left") / n
                acc[i] += max(
                    float(np.abs(f_w_hi - f_r_hi).max()),
                    float(np.abs(f_w_lo - f_r_lo).max()),
                )
    elif method == "psi":
        for j in range(d):
            edges = psi_bin_edges(train_X[:, j], PSI_BINS)
            p = _bin_proportions(train_X[:, j], edges)
            col = Xs[:, j]
            for i, (s, e) in enumerate(ranges):
                q = _bin_proportions(col[s:e], edges)
                acc[i] += float(np.sum((p - q) * np.log(p / q)))
    else:
        raise ValueError(f"unknown drift method {method!r}")
    return acc / d

"""Drift statistics, window machinery, and the deterioration score."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bootmon.datasets import rolling_windows
from bootmon.models import EstimatorSpec, fit
from bootmon.monitor import (
    MonitorSeries,
    _bin_proportions,
    _drift_series,
    _window_means,
    deterioration_score,
    drift_monitor_value,
    ks_statistic,
    ks_statistic_bruteforce,
    psi,
    psi_bin_edges,
    run_monitor_benchmark,
    section_tags_for,
    standardize,
    window_mse,
)

from conftest import make_linear_table


def test_ks_equals_bruteforce_on_random_pairs():
    rng = np.random.default_rng(0)
    for trial in range(100):
        n = int(rng.integers(1, 60))
        m = int(rng.integers(1, 60))
        if trial % 3 == 0:
            # integer-valued draws force ties within and across samples
            ref = rng.integers(0, 8, size=n).astype(float)
            smp = rng.integers(0, 8, size=m).astype(float)
        else:
            ref = rng.normal(size=n)
            smp = rng.normal(loc=rng.normal(), size=m)
        assert ks_statistic(ref, smp) == ks_statistic_bruteforce(ref, smp), (
            f"trial {trial}"
        )


def test_ks_hand_values():
    assert ks_statistic([0.0, 1.0], [2.0, 3.0]) == 1.0
    assert ks_statistic([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0
    # ref mass at 0 and 1; sample all at 1: gap 0.5 just below 1
    assert ks_statistic([0.0, 1.0], [1.0, 1.0]) == 0.5
    with pytest.raises(ValueError):
        ks_statistic([], [1.0])
    with pytest.raises(ValueError):
        ks_statistic([1.0], [])


@given(
    shift=st.floats(-3.0, 3.0),
    seed=st.integers(0, 9999),
)
@settings(max_examples=40, deadline=None)
def test_ks_bounds_and_shift_monotonicity(shift, seed):
    rng = np.random.default_rng(seed)
    ref = rng.normal(size=50)
    s = ks_statistic(ref, ref + shift)
    assert 0.0 <= s <= 1.0
    assert ks_statistic(ref, ref + 10.0) == 1.0


def test_psi_zero_on_identical_and_nonnegative():
    rng = np.random.default_rng(1)
    x = rng.normal(size=400)
    assert psi(x, x) == pytest.approx(0.0, abs=1e-12)
    for seed in range(25):
        r = np.random.default_rng(seed)
        a = r.normal(size=int(r.integers(30, 200)))
        b = r.normal(loc=r.normal(), scale=float(r.uniform(0.5, 2)), size=60)
        assert psi(a, b) >= 0.0


def test_psi_grows_with_shift():
    rng = np.random.default_rng(2)
    ref = rng.normal(size=500)
    sample = rng.normal(size=200)
    base = psi(ref, sample)
    assert psi(ref, sample + 5.0) > 10.0 * max(base, 1e-6)


def test_psi_bin_edges():
    rng = np.random.default_rng(3)
    ref = rng.normal(size=1000)
    edges = psi_bin_edges(ref)
    assert edges.shape == (9,)
    assert np.all(np.diff(edges) > 0)
    collapsed = psi_bin_edges(np.array([1.0, 1.0, 1.0, 1.0, 2.0]))
    assert collapsed.shape[0] < 9
    with pytest.raises(ValueError):
        psi_bin_edges(np.array([]))
    with pytest.raises(ValueError):
        psi_bin_edges(ref, n_bins=1)
    with pytest.raises(ValueError):
        psi(ref, np.array([]))


def test_bin_proportions_floor_and_normalization():
    edges = np.array([0.0, 1.0])
    p = _bin_proportions(np.array([-1.0, -0.5, 0.5]), edges)
    assert p.shape == (3,)
    assert p.sum() == pytest.approx(1.0)
    # the 1e-4 floor is applied before renormalization, so the minimum
    # lands at 1e-4 / (1 + k * 1e-4) for k floored bins
    assert p.min() > 9e-5
    # right-open convention: a value equal to an edge falls right of it
    q = _bin_proportions(np.array([0.0]), edges)
    assert q.argmax() == 1


def test_standardize():
    v = np.array([1.0, 2.0, 3.0, 4.0])
    z = standardize(v)
    assert z.mean() == pytest.approx(0.0, abs=1e-12)
    assert z.std() == pytest.approx(1.0)
    np.testing.assert_array_equal(standardize(np.full(5, 7.0)), np.zeros(5))
    with pytest.raises(ValueError):
        standardize(np.array([]))


def test_section_tags_hand_case():
    ranges = ((0, 4), (2, 6), (4, 8), (6, 10), (8, 10))
    tags = section_tags_for(ranges, n_lower=4, n_train=4)
    assert tags == ("lower", "mixed", "train", "mixed", "upper")


@given(seed=st.integers(0, 9999))
@settings(max_examples=40, deadline=None)
def test_window_means_match_naive(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 80))
    v = rng.normal(size=n)
    w = int(rng.integers(1, n + 1))
    s = int(rng.integers(1, 6))
    ranges = rolling_windows(n, w, s).window_ranges
    got = _window_means(v, ranges)
    want = np.array([v[a:b].mean() for a, b in ranges])
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("method", ["ks", "psi"])
def test_drift_series_matches_naive_per_window(method):
    rng = np.random.default_rng(7)
    train_X = rng.normal(size=(60, 3))
    Xs = np.vstack((train_X - 2.0, rng.normal(size=(40, 3)) + 2.0))
    ranges = rolling_windows(Xs.shape[0], 20, 7).window_ranges
    got = _drift_series(train_X, Xs, ranges, method)
    want = np.array([
        drift_monitor_value(train_X, Xs[a:b], method) for a, b in ranges
    ])
    np.testing.assert_array_equal(got, want)


def test_drift_series_rejects_unknown_method():
    X = np.zeros((10, 2))
    with pytest.raises(ValueError, match="unknown drift method"):
        _drift_series(X, X, ((0, 5),), "mmd")
    with pytest.raises(ValueError, match="unknown drift method"):
        drift_monitor_value(X, X[:5], "mmd")
    with pytest.raises(ValueError, match="feature count"):
        drift_monitor_value(X, np.zeros((5, 3)), "ks")


def _series(z_mon, z_mse, tags):
    n = len(tags)
    return MonitorSeries(
        dataset="d", feature="f", model="m", method="doubt",
        window_ranges=tuple((i, i + 1) for i in range(n)),
        section_tags=tuple(tags),
        raw_monitor=np.asarray(z_mon, dtype=float),
        raw_mse=np.asarray(z_mse, dtype=float),
        z_monitor=np.asarray(z_mon, dtype=float),
        z_mse=np.asarray(z_mse, dtype=float),
    )


def test_deterioration_score_hand_case():
    s = _series(
        [1.0, 5.0, -1.0, 2.0],
        [0.0, 5.0, 0.0, 0.0],
        ["lower", "train", "mixed", "upper"],
    )
    # only the lower and upper windows count: (|1-0| + |2-0|) / 2
    assert deterioration_score(s) == pytest.approx(1.5)
    aligned = _series([1.0, 2.0], [1.0, 2.0], ["lower", "upper"])
    assert deterioration_score(aligned) == 0.0


def test_deterioration_score_requires_ood_windows():
    s = _series([1.0, 2.0], [0.0, 0.0], ["train", "mixed"])
    with pytest.raises(ValueError, match="no out-of-distribution"):
        deterioration_score(s)


def test_window_mse_matches_direct_computation(linear_table):
    model = fit(EstimatorSpec("ols"), linear_table.features, linear_table.target)
    X, y = linear_table.features[:10], linear_table.target[:10]
    got = window_mse(model, X, y)
    from bootmon.models import predict
    want = float(np.mean((predict(model, X) - y) ** 2))
    assert got == pytest.approx(want)
    with pytest.raises(ValueError, match="empty window"):
        window_mse(model, X[:0], y[:0])


def test_monitor_benchmark_grid_and_determinism():
    table = make_linear_table(n=150, seed=17, name="mon")
    specs = [EstimatorSpec("ols"), EstimatorSpec("cart")]
    rep, series = run_monitor_benchmark(
        [table], specs, window=20, stride=5, B=8, seed=3
    )
    combos = {(c.model, c.method) for c in rep.cells}
    assert combos == {
        (m, meth) for m in ("ols", "cart") for meth in ("doubt", "ks", "psi")
    }
    for c in rep.cells:
        assert c.dataset == "mon"
        assert c.n_windows_scored > 0
        assert np.isfinite(c.score_mean)
    # every feature contributes one series per (model, method)
    assert len(series) == 3 * 2 * 3
    tags = set(series[0].section_tags)
    assert {"lower", "upper"} <= tags

    again, _ = run_monitor_benchmark(
        [table], specs, window=20, stride=5, B=8, seed=3
    )
    assert again.cells == rep.cells

    solo, _ = run_monitor_benchmark(
        [table], [EstimatorSpec("cart")], window=20, stride=5, B=8, seed=3
    )
    want = [c for c in rep.cells if c.model == "cart"]
    assert list(solo.cells) == want


def test_monitor_benchmark_rejects_unknown_method():
    table = make_linear_table(n=80, seed=19, name="mon2")
    with pytest.raises(ValueError, match="unknown monitor method"):
        run_monitor_benchmark([table], [EstimatorSpec("ols")], methods=("mmd",))

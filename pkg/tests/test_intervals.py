"""Residual pools, 0.632+ weighting, and interval construction."""

from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bootmon.intervals import (
    METHODS,
    BootstrapEnsemble,
    PredictionWithInterval,
    _draw_residuals,
    _quantile_sorted,
    coverage_benchmark,
    fit_ensemble,
    interval_bounds_batch,
    interval_widths,
    nasa_predict_interval,
    no_info_error,
    predict_interval,
    stream_ensemble,
    val_weight,
)
from bootmon.models import EstimatorSpec, predict

from conftest import make_linear_table


def no_info_loop(y, preds):
    """Literal double sum, the quadratic-cost reference."""
    n = len(y)
    total = 0.0
    for yi in y:
        for pj in preds:
            total += (yi - pj) ** 2
    return total / (n * n)


def test_no_info_fast_path_matches_loop_across_sizes():
    rng = np.random.default_rng(2)
    # n = 1001 exercises the O(n) expansion, 1000 the direct route
    for n in (3, 117, 1000, 1001, 1500):
        y = rng.normal(size=n) * 3.0 + 1.0
        p = rng.normal(size=n)
        got = no_info_error(y, p)
        want = no_info_loop(y, p)
        assert got == pytest.approx(want, rel=1e-9)


def test_no_info_rejects_bad_shapes():
    with pytest.raises(ValueError):
        no_info_error(np.ones(3), np.ones(4))
    with pytest.raises(ValueError):
        no_info_error(np.ones(0), np.ones(0))
    with pytest.raises(ValueError):
        no_info_error(np.ones((2, 2)), np.ones((2, 2)))


def test_val_weight_endpoints_are_exact():
    # overfitting rate 0: val error equals train error
    assert val_weight(1.0, 1.0, 5.0) == 0.632
    # overfitting rate 1: val error reaches the no-information level
    assert val_weight(1.0, 5.0, 5.0) == 1.0


def test_val_weight_clamps_and_degenerates():
    # val below train clamps the rate at 0
    assert val_weight(2.0, 1.0, 5.0) == 0.632
    # val beyond the no-information error clamps at 1
    assert val_weight(1.0, 9.0, 5.0) == 1.0
    # degenerate gap: no_info at or below train error
    assert val_weight(5.0, 6.0, 5.0) == 1.0
    assert val_weight(5.0, 4.0, 5.0) == 0.632
    with pytest.raises(ValueError):
        val_weight(-1.0, 1.0, 2.0)


@given(
    train=st.floats(0.0, 10.0),
    val=st.floats(0.0, 10.0),
    gap=st.floats(0.1, 10.0),
)
@settings(max_examples=60, deadline=None)
def test_val_weight_range_and_monotonicity(train, val, gap):
    w = val_weight(train, val, train + gap)
    assert 0.632 <= w <= 1.0
    w_more = val_weight(train, val + 0.5, train + gap)
    assert w_more >= w


@given(seed=st.integers(0, 9999), q=st.floats(0.0, 1.0))
@settings(max_examples=60, deadline=None)
def test_quantile_sorted_matches_numpy_type7(seed, q):
    rng = np.random.default_rng(seed)
    vals = np.sort(rng.normal(size=int(rng.integers(1, 40))))
    got = _quantile_sorted(vals, q)
    assert got == pytest.approx(float(np.quantile(vals, q)), rel=1e-12, abs=1e-12)


def test_quantile_sorted_vectorizes_over_columns():
    rng = np.random.default_rng(5)
    mat = np.sort(rng.normal(size=(30, 4)), axis=0)
    got = _quantile_sorted(mat, 0.37)
    want = np.quantile(mat, 0.37, axis=0)
    np.testing.assert_allclose(got, want, rtol=1e-12)


def test_ensemble_pools_partition_all_residual_slots(ols_ensemble):
    table, ens = ols_ensemble
    n = table.n_rows
    assert ens.n_train == n
    assert len(ens.inbag) == ens.B
    distinct = sum(len(np.unique(bag)) for bag in ens.inbag)
    assert ens.train_residual_pool.shape[0] == distinct
    assert ens.val_residual_pool.shape[0] == ens.B * n - distinct
    for bag in ens.inbag:
        assert bag.shape == (n,)
        assert np.all(np.diff(bag) >= 0)
        assert len(np.unique(bag)) < n  # nonempty out-of-bag part
    assert ens.train_error == pytest.approx(
        float(np.mean(ens.train_residual_pool ** 2))
    )
    assert ens.val_error == pytest.approx(float(np.mean(ens.val_residual_pool ** 2)))
    assert 0.632 <= ens.val_weight <= 1.0


def test_ensemble_is_deterministic_in_seed():
    table = make_linear_table(n=80, seed=21)
    a = fit_ensemble(EstimatorSpec("ols"), table.features, table.target, B=10, seed=4)
    b = fit_ensemble(EstimatorSpec("ols"), table.features, table.target, B=10, seed=4)
    c = fit_ensemble(EstimatorSpec("ols"), table.features, table.target, B=10, seed=5)
    np.testing.assert_array_equal(a.train_residual_pool, b.train_residual_pool)
    np.testing.assert_array_equal(a.val_residual_pool, b.val_residual_pool)
    assert a.val_weight == b.val_weight
    assert not np.array_equal(a.train_residual_pool, c.train_residual_pool)


def test_ensemble_input_validation():
    table = make_linear_table(n=30, seed=1)
    with pytest.raises(ValueError, match="B must be"):
        fit_ensemble(EstimatorSpec("ols"), table.features, table.target, B=1, seed=0)
    with pytest.raises(ValueError, match="at least 2"):
        fit_ensemble(EstimatorSpec("ols"), table.features[:1], table.target[:1],
                     B=5, seed=0)


def test_draw_residuals_respects_pool_choice(ols_ensemble):
    _, ens = ols_ensemble
    rng = np.random.default_rng(0)
    marked = replace(
        ens,
        train_residual_pool=np.array([-1.0]),
        val_residual_pool=np.array([1.0]),
    )
    all_val = _draw_residuals(replace(marked, val_weight=1.0), (500,),
                              np.random.default_rng(1), "doubt")
    assert np.all(all_val == 1.0)
    all_train = _draw_residuals(replace(marked, val_weight=0.0), (500,),
                                np.random.default_rng(2), "doubt")
    assert np.all(all_train == -1.0)
    nasa = _draw_residuals(marked, (500,), rng, "nasa")
    assert np.all(nasa == -1.0)
    mixed = _draw_residuals(replace(marked, val_weight=0.7), (4000,),
                            np.random.default_rng(3), "doubt")
    assert np.mean(mixed == 1.0) == pytest.approx(0.7, abs=0.05)
    with pytest.raises(ValueError, match="unknown interval method"):
        _draw_residuals(marked, (5,), rng, "jackknife")


def test_prediction_interval_validation():
    with pytest.raises(ValueError, match="alpha"):
        PredictionWithInterval(point=0.0, lower=-1.0, upper=1.0, alpha=1.5)
    with pytest.raises(ValueError, match="lower <= upper"):
        PredictionWithInterval(point=0.0, lower=1.0, upper=-1.0, alpha=0.9)
    p = PredictionWithInterval(point=0.0, lower=-1.0, upper=3.0, alpha=0.9)
    assert p.width == 4.0


def test_point_interval_is_deterministic_and_centered(ols_ensemble):
    table, ens = ols_ensemble
    x0 = table.features[5]
    a = predict_interval(ens, x0, 0.9, rng_seed=77)
    b = predict_interval(ens, x0, 0.9, rng_seed=77)
    assert (a.point, a.lower, a.upper) == (b.point, b.lower, b.upper)
    assert a.lower <= a.point <= a.upper
    point = float(predict(ens.full_model, x0.reshape(1, -1))[0])
    assert a.point == pytest.approx(point)
    nasa = nasa_predict_interval(ens, x0, 0.9, rng_seed=77)
    assert nasa.point == a.point
    with pytest.raises(ValueError, match="alpha"):
        predict_interval(ens, x0, 0.0, rng_seed=1)
    with pytest.raises(ValueError, match="alpha"):
        nasa_predict_interval(ens, x0, 1.0, rng_seed=1)


def test_batch_intervals_are_nested_across_alphas(ols_ensemble):
    table, ens = ols_ensemble
    X = table.features[:25]
    alphas = [0.5, 0.8, 0.9, 0.99]
    point, lowers, uppers = interval_bounds_batch(ens, X, alphas, rng_seed=3)
    assert point.shape == (25,)
    for i in range(len(alphas) - 1):
        # shared draws make every row's intervals nested, not just on average
        assert np.all(lowers[i] >= lowers[i + 1])
        assert np.all(uppers[i] <= uppers[i + 1])
    assert np.all((lowers <= point) & (point <= uppers))


def test_interval_widths_consistent_with_bounds(ols_ensemble):
    table, ens = ols_ensemble
    X = table.features[:30]
    _, lowers, uppers = interval_bounds_batch(ens, X, [0.9], rng_seed=12)
    widths = interval_widths(ens, X, 0.9, rng_seed=12)
    np.testing.assert_array_equal(widths, uppers[0] - lowers[0])


def test_streamed_and_retained_routes_agree():
    table = make_linear_table(n=90, seed=8)
    X_eval = table.features[:20]
    kept = fit_ensemble(EstimatorSpec("cart"), table.features, table.target,
                        B=15, seed=9)
    streamed, (preds,) = stream_ensemble(
        EstimatorSpec("cart"), table.features, table.target, B=15, seed=9,
        eval_matrices=(X_eval,),
    )
    assert streamed.replicas is None
    assert kept.val_weight == streamed.val_weight
    np.testing.assert_array_equal(
        kept.train_residual_pool, streamed.train_residual_pool
    )
    _, lo_kept, up_kept = interval_bounds_batch(kept, X_eval, [0.9], rng_seed=4)
    _, lo_str, up_str = interval_bounds_batch(
        streamed, X_eval, [0.9], rng_seed=4, replica_preds=preds
    )
    np.testing.assert_array_equal(lo_kept, lo_str)
    np.testing.assert_array_equal(up_kept, up_str)


def test_streamed_ensemble_requires_replica_preds(ols_ensemble):
    table = make_linear_table(n=40, seed=3)
    streamed, _ = stream_ensemble(
        EstimatorSpec("ols"), table.features, table.target, B=5, seed=2
    )
    with pytest.raises(ValueError, match="streamed"):
        interval_bounds_batch(streamed, table.features[:5], [0.9], rng_seed=0)
    with pytest.raises(ValueError, match="shape"):
        interval_bounds_batch(
            streamed, table.features[:5], [0.9], rng_seed=0,
            replica_preds=np.zeros((3, 5)),
        )


def test_interpolator_baseline_collapses_but_doubt_does_not():
    table = make_linear_table(n=120, seed=13)
    ens = fit_ensemble(EstimatorSpec("cart"), table.features, table.target,
                       B=25, seed=6)
    # unlimited-depth trees interpolate their bag: train pool is tiny
    assert ens.train_error < 0.05 * ens.val_error
    X = table.features[:40]
    w_doubt = interval_widths(ens, X, 0.9, rng_seed=1, method="doubt")
    w_nasa = interval_widths(ens, X, 0.9, rng_seed=1, method="nasa")
    # nasa keeps the replica-disagreement term, so it narrows rather than
    # vanishes; the out-of-bag pool must still dominate it clearly
    assert w_doubt.mean() > 1.5 * w_nasa.mean()


def test_coverage_benchmark_shape_and_subset_reproducibility():
    t1 = make_linear_table(n=90, seed=31, name="t1")
    t2 = make_linear_table(n=110, seed=32, name="t2")
    specs = [EstimatorSpec("ols")]
    alphas = [0.8, 0.9]
    rep = coverage_benchmark([t1, t2], specs, alphas=alphas, B=12, seed=5)
    assert len(rep.rows) == 2 * 1 * len(METHODS) * len(alphas)
    for method in METHODS:
        agg = rep.aggregates["ols"][method]
        per_ds = agg["per_dataset"]
        assert set(per_ds) == {"t1", "t2"}
        assert agg["mean_abs_dev"] == pytest.approx(
            np.mean(list(per_ds.values()))
        )
    # a single-dataset run reproduces the same cell exactly
    solo = coverage_benchmark([t2], specs, alphas=alphas, B=12, seed=5)
    want = [r for r in rep.rows if r.dataset == "t2"]
    for a, b in zip(solo.rows, want):
        assert a == b


def test_coverage_rows_hit_reasonable_levels():
    table = make_linear_table(n=400, seed=44)
    rep = coverage_benchmark([table], [EstimatorSpec("ols")], alphas=[0.9],
                             B=40, seed=2)
    by_method = {r.method: r for r in rep.rows}
    assert abs(by_method["doubt"].coverage - 0.9) < 0.12
    assert by_method["doubt"].mean_width > 0.0

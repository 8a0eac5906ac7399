"""Estimator fitting, prediction, and serialization."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bootmon.models import (
    EstimatorSpec,
    base_offset,
    fit,
    model_from_json,
    model_to_json,
    predict,
    spec_from_config,
    spec_to_config,
    trees_of,
)


def _random_problem(n=80, d=4, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    beta = rng.normal(size=d)
    y = X @ beta + 1.5 + 0.1 * rng.normal(size=n)
    return X, y, beta


def test_ols_matches_lstsq_oracle():
    X, y, _ = _random_problem(seed=1)
    model = fit(EstimatorSpec("ols"), X, y)
    Z = np.column_stack((X, np.ones(len(X))))
    coef, *_ = np.linalg.lstsq(Z, y, rcond=None)
    np.testing.assert_allclose(model.coef, coef, rtol=0, atol=1e-10)
    np.testing.assert_allclose(predict(model, X), Z @ coef, atol=1e-10)
    assert model.warning == ""


def test_ols_rank_deficient_falls_back_to_ridge():
    X, y, _ = _random_problem(n=50, d=3, seed=2)
    X = np.column_stack((X, X[:, 0]))
    model = fit(EstimatorSpec("ols"), X, y)
    assert model.warning == "ridge_fallback"
    assert np.isfinite(predict(model, X)).all()
    # the duplicated column pair still reproduces the joint effect
    dup_effect = model.coef[0] + model.coef[3]
    clean = fit(EstimatorSpec("ols"), X[:, :3], y)
    np.testing.assert_allclose(dup_effect, clean.coef[0], atol=1e-4)


def test_poisson_recovers_log_linear_rates():
    rng = np.random.default_rng(7)
    X = rng.uniform(-1, 1, size=(4000, 2))
    eta = 0.8 + 0.6 * X[:, 0] - 0.4 * X[:, 1]
    y = rng.poisson(np.exp(eta)).astype(float)
    model = fit(EstimatorSpec("poisson"), X, y)
    assert model.warning == ""
    np.testing.assert_allclose(model.coef, [0.6, -0.4, 0.8], atol=0.08)
    assert (predict(model, X) > 0).all()


def test_poisson_rejects_negative_targets():
    X, y, _ = _random_problem(seed=3)
    y[0] = -1.0
    with pytest.raises(ValueError, match="nonnegative"):
        fit(EstimatorSpec("poisson"), X, y)


def test_cart_interpolates_at_unlimited_depth():
    X, y, _ = _random_problem(n=60, d=3, seed=4)
    model = fit(EstimatorSpec("cart"), X, y)
    np.testing.assert_allclose(predict(model, X), y, atol=1e-12)


def test_cart_min_samples_leaf_bounds_leaf_cover():
    X, y, _ = _random_problem(n=60, d=3, seed=5)
    model = fit(EstimatorSpec("cart", min_samples_leaf=10), X, y)
    (root, _), = trees_of(model)
    assert root.cover == 60.0

    def leaf_covers(node):
        if node.is_leaf:
            return [node.cover]
        return leaf_covers(node.left) + leaf_covers(node.right)

    assert min(leaf_covers(root)) >= 10.0


def test_gradient_boosting_zero_rounds_predicts_train_mean():
    X, y, _ = _random_problem(seed=6)
    model = fit(EstimatorSpec("gradient_boosting", n_rounds=0), X, y)
    np.testing.assert_allclose(predict(model, X), y.mean(), atol=1e-12)
    assert base_offset(model) == pytest.approx(y.mean())


def test_gradient_boosting_improves_with_rounds():
    X, y, _ = _random_problem(n=200, seed=8)
    mse = []
    for rounds in (0, 10, 100):
        model = fit(EstimatorSpec("gradient_boosting", n_rounds=rounds), X, y)
        mse.append(float(np.mean((predict(model, X) - y) ** 2)))
    assert mse[0] > mse[1] > mse[2]


def test_random_forest_deterministic_in_seed():
    X, y, _ = _random_problem(seed=9)
    m1 = fit(EstimatorSpec("random_forest", n_trees=10), X, y, seed=5)
    m2 = fit(EstimatorSpec("random_forest", n_trees=10), X, y, seed=5)
    m3 = fit(EstimatorSpec("random_forest", n_trees=10), X, y, seed=6)
    np.testing.assert_array_equal(predict(m1, X), predict(m2, X))
    assert not np.array_equal(predict(m1, X), predict(m3, X))


def test_forest_without_bagging_or_subsampling_is_cart():
    X, y, _ = _random_problem(n=70, d=3, seed=10)
    forest = fit(
        EstimatorSpec("random_forest", n_trees=5, bootstrap=False, max_features=3),
        X, y,
    )
    cart = fit(EstimatorSpec("cart"), X, y)
    np.testing.assert_allclose(predict(forest, X), predict(cart, X), atol=1e-12)


def test_trees_of_matches_flat_prediction():
    X, y, _ = _random_problem(n=60, d=3, seed=12)
    model = fit(EstimatorSpec("gradient_boosting", n_rounds=5), X, y)

    def eval_node(node, x):
        while not node.is_leaf:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node.value

    manual = np.array([
        base_offset(model)
        + sum(w * eval_node(root, x) for root, w in trees_of(model))
        for x in X
    ])
    np.testing.assert_allclose(manual, predict(model, X), atol=1e-10)


def test_tree_accessors_reject_linear_models():
    X, y, _ = _random_problem(seed=13)
    model = fit(EstimatorSpec("ols"), X, y)
    with pytest.raises(ValueError, match="no tree decomposition"):
        trees_of(model)
    with pytest.raises(ValueError, match="no tree decomposition"):
        base_offset(model)


@pytest.mark.parametrize("kind", ["ols", "poisson", "cart", "random_forest",
                                  "gradient_boosting"])
def test_model_json_round_trip_is_exact(kind):
    X, y, _ = _random_problem(n=50, d=3, seed=14)
    if kind == "poisson":
        y = np.abs(y)
    spec = EstimatorSpec(kind, n_trees=5, n_rounds=5)
    model = fit(spec, X, y, seed=2)
    clone = model_from_json(model_to_json(model))
    np.testing.assert_array_equal(predict(model, X), predict(clone, X))
    assert clone.spec == model.spec


def test_model_json_rejects_unknown_format():
    with pytest.raises(ValueError, match="format"):
        model_from_json('{"format": "other/9"}')


def test_spec_config_round_trip():
    spec = EstimatorSpec(
        "random_forest", max_depth=6, min_samples_leaf=3, n_trees=25,
        bootstrap=False, max_features=2,
    )
    assert spec_from_config(spec_to_config(spec)) == spec


def test_spec_config_parses_comments_and_rejects_noise():
    text = "kind = cart\n# a comment\nmin_samples_leaf = 4  # inline\n"
    assert spec_from_config(text) == EstimatorSpec("cart", min_samples_leaf=4)
    with pytest.raises(ValueError, match="unknown spec field"):
        spec_from_config("kind = cart\nshoe_size = 9\n")
    with pytest.raises(ValueError, match="must set kind"):
        spec_from_config("min_samples_leaf = 4\n")


@given(
    kind=st.sampled_from(["cart", "random_forest", "gradient_boosting"]),
    depth=st.one_of(st.none(), st.integers(min_value=1, max_value=8)),
    leaf=st.integers(min_value=1, max_value=20),
)
@settings(max_examples=25, deadline=None)
def test_spec_round_trip_property(kind, depth, leaf):
    spec = EstimatorSpec(kind, max_depth=depth, min_samples_leaf=leaf)
    assert spec_from_config(spec_to_config(spec)) == spec


def test_spec_validation():
    with pytest.raises(ValueError, match="unknown estimator kind"):
        EstimatorSpec("mlp")
    with pytest.raises(ValueError):
        EstimatorSpec("cart", min_samples_leaf=0)
    with pytest.raises(ValueError):
        EstimatorSpec("gradient_boosting", learning_rate=0.0)
    with pytest.raises(ValueError):
        EstimatorSpec("random_forest", n_trees=0)
    with pytest.raises(ValueError):
        EstimatorSpec("random_forest", max_features=0)
    assert EstimatorSpec("gradient_boosting").max_depth == 3
    assert EstimatorSpec("cart").max_depth == -1


def test_fit_input_validation():
    X, y, _ = _random_problem(seed=15)
    with pytest.raises(ValueError, match="at least 2"):
        fit(EstimatorSpec("ols"), X[:1], y[:1])
    with pytest.raises(ValueError, match="finite"):
        fit(EstimatorSpec("ols"), X, np.where(np.arange(len(y)) == 0, np.nan, y))
    with pytest.raises(ValueError, match="shape"):
        fit(EstimatorSpec("ols"), X, y[:-1])
    model = fit(EstimatorSpec("ols"), X, y)
    with pytest.raises(ValueError, match="trained on"):
        predict(model, X[:, :2])


def test_predict_accepts_single_row():
    X, y, _ = _random_problem(seed=16)
    model = fit(EstimatorSpec("cart"), X, y)
    row = predict(model, X[3])
    assert row.shape == (1,)
    assert row[0] == pytest.approx(y[3])

import numpy as np
import pytest
from scipy import stats

from marimpute.mechanisms import MissingOracle, generate, make_spec
from marimpute.models import (ModelKind, default_mtry, fit_cart, fit_forest, fit_gaussian_linear,
                              fit_model, grow_tree, true_sampler)


def exhaustive_split(X, y, min_leaf):
    """Best (sse, feature, threshold) over every column and midpoint, by brute force."""
    best = (np.inf, -1, np.nan)
    for f in range(X.shape[1]):
        vals = np.unique(X[:, f])
        for a, b in zip(vals[:-1], vals[1:]):
            thr = (a + b) / 2
            left = X[:, f] <= thr
            if left.sum() < min_leaf or (~left).sum() < min_leaf:
                continue
            sse = ((y[left] - y[left].mean()) ** 2).sum() + ((y[~left] - y[~left].mean()) ** 2).sum()
            if sse < best[0] - 1e-12:
                best = (sse, f, thr)
    return best


def root_sse(tree, y):
    halves = [tree.order[tree.start[k]:tree.end[k]] for k in (tree.left[0], tree.right[0])]
    return sum(((y[r] - y[r].mean()) ** 2).sum() for r in halves)


def test_linear_noiseless():
    x = np.arange(10.0)
    m = fit_gaussian_linear(x, 2 * x)
    np.testing.assert_allclose(m.coef, [0, 2], atol=1e-12)
    assert m.sigma2 < 1e-20
    rng = np.random.default_rng(0)
    np.testing.assert_allclose(m.sample(x, rng), m.predict(x), atol=1e-9)


def test_linear_three_points():
    m = fit_gaussian_linear([0, 1, 2], [1, 2, 2])
    np.testing.assert_allclose(m.coef, [7 / 6, 1 / 2], atol=1e-12)
    # residuals -1/6, 1/3, -1/6 over 3 - 2 degrees of freedom
    assert m.sigma2 == pytest.approx(1 / 6)
    assert not m.ridge


def test_linear_ridge_fallback_on_collinear_design():
    x = np.column_stack([np.arange(5.0), 2 * np.arange(5.0)])
    m = fit_gaussian_linear(x, np.arange(5.0))
    assert m.ridge
    assert np.all(np.isfinite(m.coef))
    np.testing.assert_allclose(m.predict(x), np.arange(5.0), atol=1e-6)


def test_linear_recovers_ex2_conditional():
    g = generate(make_spec("ex2-gauss-shift"), 40_000, 2)
    sel = g.pattern_labels == 0
    x = g.x.values[sel]
    m = fit_gaussian_linear(x[:, 1], x[:, 0])
    assert abs(m.coef[1] - 1) < 0.03
    assert abs(m.sigma2 - 1) < 0.03


def test_gaussian_draw_mean_matches_prediction():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((200, 2))
    m = fit_gaussian_linear(x, x @ [1.0, -1.0] + rng.standard_normal(200))
    q = np.tile([[0.3, -0.2]], (100_000, 1))
    draws = m.sample(q, np.random.default_rng(5))
    assert abs(draws.mean() - m.predict(q[:1])[0]) < 4 * np.sqrt(m.sigma2 / 100_000)


def test_cart_constant_response_is_single_leaf():
    X = np.random.default_rng(0).random((50, 2))
    m = fit_cart(X, np.full(50, 3.5))
    assert m.tree.n_nodes == 1
    assert np.all(m.sample(X, np.random.default_rng(1)) == 3.5)


def test_cart_constant_features_cannot_split():
    m = fit_cart(np.ones((30, 2)), np.arange(30.0))
    assert m.tree.n_nodes == 1


def test_cart_two_clusters():
    x = np.linspace(0, 1, 11)
    x = x[(x <= 0.4 + 1e-9) | (x >= 0.6 - 1e-9)]
    y = np.where(x < 0.5, 0.0, 10.0)
    m = fit_cart(x, y, min_leaf=1)
    assert m.tree.feature[0] == 0
    assert 0.4 < m.tree.threshold[0] < 0.6
    assert exhaustive_split(x[:, None], y, 1)[1:] == (0, m.tree.threshold[0])


def test_cart_root_split_equals_exhaustive_search():
    rng = np.random.default_rng(12)
    for _ in range(100):
        n, p = rng.integers(10, 40), rng.integers(1, 4)
        X = np.round(rng.random((n, p)), 2)
        y = rng.standard_normal(n) + 2 * (X[:, 0] > 0.5)
        min_leaf = int(rng.integers(1, 4))
        tree = grow_tree(X, y, min_leaf=min_leaf)
        sse, f, thr = exhaustive_split(X, y, min_leaf)
        if f < 0:
            assert tree.n_nodes == 1
            continue
        assert root_sse(tree, y) == pytest.approx(sse, rel=1e-9, abs=1e-12)
        assert (tree.feature[0], tree.threshold[0]) == (f, thr)


def test_cart_leaves_respect_min_leaf_and_partition_rows():
    rng = np.random.default_rng(3)
    X = rng.random((500, 3))
    y = np.sin(6 * X[:, 0]) + rng.standard_normal(500) * 0.1
    t = grow_tree(X, y, min_leaf=7)
    leaves = t.leaves
    sizes = t.end[leaves] - t.start[leaves]
    assert sizes.min() >= 7
    rows = np.concatenate([t.leaf_rows(k) for k in leaves])
    assert sorted(rows.tolist()) == list(range(500))
    label = np.empty(500, dtype=int)
    label[rows] = np.repeat(leaves, sizes)
    np.testing.assert_array_equal(t.apply(X), label)


def test_cart_max_depth():
    rng = np.random.default_rng(3)
    X = rng.random((300, 2))
    t = grow_tree(X, rng.standard_normal(300), min_leaf=1, max_depth=3)
    assert t.depth() <= 3


def test_cart_leaf_sampling_frequencies():
    rng = np.random.default_rng(8)
    X = np.concatenate([np.zeros(6), np.ones(6)])
    y = np.array([1.0, 1, 2, 3, 3, 3, 10, 11, 12, 13, 14, 15])
    m = fit_cart(X, y, min_leaf=6)
    draws = m.sample(np.zeros(10_000), rng)
    values, counts = np.unique(draws, return_counts=True)
    np.testing.assert_array_equal(values, [1, 2, 3])
    assert stats.chisquare(counts, np.array([2, 1, 3]) / 6 * 10_000).pvalue > 0.01


def test_cart_predict_is_leaf_mean():
    X = np.concatenate([np.zeros(6), np.ones(6)])
    y = np.arange(12.0)
    m = fit_cart(X, y, min_leaf=6)
    np.testing.assert_allclose(m.predict([0.0, 1.0]), [2.5, 8.5])


def test_forest_weights_sum_to_one():
    rng = np.random.default_rng(0)
    X = rng.random((300, 3))
    y = X[:, 0] + rng.standard_normal(300)
    f = fit_forest(X, y, n_trees=30, rng=rng)
    w = f.weights(rng.random((100, 3)))
    assert np.all(w >= 0)
    assert np.max(np.abs(w.sum(axis=1) - 1)) <= 1e-12


def test_forest_predict_is_weighted_response():
    rng = np.random.default_rng(1)
    X = rng.random((200, 2))
    y = np.sin(4 * X[:, 0]) + rng.standard_normal(200) * 0.2
    f = fit_forest(X, y, n_trees=25, rng=rng, kind="forest-mean")
    q = rng.random((40, 2))
    np.testing.assert_allclose(f.predict(q), f.weights(q) @ y, rtol=1e-12, atol=1e-14)


def test_forest_single_tree_reduces_to_cart():
    rng = np.random.default_rng(2)
    X = rng.random((120, 2))
    y = X[:, 1] * 3 + rng.standard_normal(120)
    f = fit_forest(X, y, n_trees=1, bootstrap=False, mtry=2, rng=rng)
    c = fit_cart(X, y)
    np.testing.assert_array_equal(f.predict(X), c.predict(X))


def test_forest_sampling_follows_weights():
    rng = np.random.default_rng(3)
    X = rng.random((60, 2))
    y = np.arange(60.0)
    f = fit_forest(X, y, n_trees=20, min_leaf=5, rng=rng)
    q = np.array([[0.4, 0.6]])
    w = f.weights(q)[0]
    draws = f.sample(np.repeat(q, 40_000, axis=0), np.random.default_rng(9)).astype(int)
    counts = np.bincount(draws, minlength=60)
    keep = w > 0
    assert set(np.flatnonzero(counts)) <= set(np.flatnonzero(keep))
    assert stats.chisquare(counts[keep], w[keep] * counts.sum()).pvalue > 0.001


def test_pooled_forest_sampling_follows_its_weights():
    rng = np.random.default_rng(3)
    X = rng.random((60, 2))
    y = np.arange(60.0)
    f = fit_forest(X, y, n_trees=20, min_leaf=5, rng=rng, pooled=True)
    q = np.array([[0.4, 0.6]])
    w = f.weights(q)[0]
    draws = f.sample(np.repeat(q, 40_000, axis=0), np.random.default_rng(9)).astype(int)
    counts = np.bincount(draws, minlength=60)
    keep = w > 0
    assert stats.chisquare(counts[keep], w[keep] * counts.sum()).pvalue > 0.001


@pytest.mark.parametrize("kind", ["cart-sample", "forest-sample"])
def test_hot_deck_property(kind):
    rng = np.random.default_rng(6)
    X = rng.random((150, 3))
    y = rng.standard_normal(150)
    m = fit_model(kind, X, y, {"n_trees": 10} if kind == "forest-sample" else {}, rng=rng)
    draws = m.sample(rng.random((500, 3)), rng)
    assert np.isin(draws, y).all()


@pytest.mark.parametrize("kind", ["cart-sample", "forest-sample", "forest-mean", "gaussian-draw"])
def test_models_are_deterministic(kind):
    X = np.random.default_rng(0).random((200, 3))
    y = np.random.default_rng(1).standard_normal(200)
    q = np.random.default_rng(2).random((50, 3))
    params = {"n_trees": 10} if kind.startswith("forest") else {}
    a = fit_model(kind, X, y, params, rng=np.random.default_rng(5))
    b = fit_model(kind, X, y, params, rng=np.random.default_rng(5))
    np.testing.assert_array_equal(a.sample(q, np.random.default_rng(3)),
                                  b.sample(q, np.random.default_rng(3)))
    np.testing.assert_array_equal(a.predict(q), b.predict(q))


def test_forest_oob_beats_linear_on_nonlinear_link():
    # column 0 of appC is x3 sin(x1 x2) of the observed block plus N(0, 4) noise
    g = generate(make_spec("appC-nonlinear6"), 1500, 0)
    x = g.x.values
    y, feats = x[:, 0], x[:, 3:]
    forest = fit_forest(feats, y, kind="forest-mean", rng=np.random.default_rng(1))
    oob = forest.oob_predict(feats)
    assert np.isfinite(oob).all()
    err_f = np.sqrt(np.mean((oob - y) ** 2))
    # leave-one-out residuals of the linear fit via the hat matrix
    linear = fit_gaussian_linear(feats, y, kind="regression-mean")
    z = np.column_stack([np.ones(len(y)), feats])
    hat = np.einsum("ij,ji->i", z, np.linalg.pinv(z))
    err_l = np.sqrt(np.mean(((y - linear.predict(feats)) / (1 - hat)) ** 2))
    assert err_f < err_l


def test_oob_excludes_in_bag_trees():
    rng = np.random.default_rng(0)
    X = rng.random((40, 2))
    y = rng.standard_normal(40)
    f = fit_forest(X, y, n_trees=1, rng=rng)
    oob = f.oob_predict(X)
    inbag = np.zeros(40, dtype=bool)
    inbag[f.trees[0].order] = True
    assert np.isnan(oob[inbag]).all()
    np.testing.assert_array_equal(oob[~inbag], f.predict(X[~inbag]))


def test_default_mtry():
    assert default_mtry(1) == 1 and default_mtry(4) == 1 and default_mtry(6) == 2


def test_model_kind_roles():
    assert ModelKind("forest-sample").distributional
    assert not ModelKind("forest-mean").distributional
    assert not ModelKind("regression-mean").distributional


def test_unknown_params_rejected():
    with pytest.raises(ValueError):
        fit_model("cart-sample", np.ones((20, 1)), np.ones(20), {"n_trees": 3})


def test_true_sampler_ex1_uniform():
    m = true_sampler(make_spec("ex1-uniform3"), 0)
    draws = m.sample(np.full((20_000, 2), 0.7), np.random.default_rng(0))
    assert stats.kstest(draws, "uniform").pvalue > 0.01


def test_true_sampler_fgm_conditional():
    m = true_sampler(make_spec("ex-fgm3"), 1)
    x1 = 0.9
    draws = m.sample(np.tile([x1, 0.5], (50_000, 1)), np.random.default_rng(0))
    cdf = lambda t: t + (2 * x1 - 1) * t * (t - 1)
    assert stats.kstest(draws, cdf).pvalue > 0.01
    assert m.predict([[x1, 0.5]])[0] == pytest.approx(0.5 + (x1 - 0.5) / 3)


def test_true_sampler_ex2_first_column():
    m = true_sampler(make_spec("ex2-gauss-shift"), 0)
    draws = m.sample(np.full((50_000, 1), 2.0), np.random.default_rng(0))
    assert stats.kstest(draws, "norm", args=(2.0, 1.0)).pvalue > 0.01


def test_true_sampler_requires_oracle():
    with pytest.raises(MissingOracle):
        true_sampler(make_spec("appB-gaussmix6"), 4)

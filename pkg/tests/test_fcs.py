import warnings

import numpy as np
import pytest
from scipy import stats

from marimpute.data import DataMatrix, IncompleteData, MissingMask, apply_mask
from marimpute.fcs import FcsConfig, FcsError, impute, impute_with_truth
from marimpute.mechanisms import MissingOracle, generate, make_spec

FAST = {"n_trees": 10}


def sample_data(name="ex-fgm4", n=400, seed=0):
    spec = make_spec(name)
    g = generate(spec, n, seed)
    return spec, g, apply_mask(g.x, g.mask)


def observed_equal(data, completed):
    obs = ~data.mask.entries
    return completed.values[obs].tobytes() == data.values[obs].tobytes()


@pytest.mark.parametrize("kind", ["cart-sample", "forest-sample", "forest-mean",
                                  "gaussian-draw", "regression-mean"])
def test_completion_fills_and_preserves(kind):
    _, _, data = sample_data()
    cfg = FcsConfig(iterations=2, model=kind, params=FAST if kind.startswith("forest") else {})
    run = impute(data, cfg)
    out = run.completed[0]
    assert not np.isnan(out.values).any()
    assert observed_equal(data, out)


def test_no_missing_entries_returns_input():
    x = np.random.default_rng(0).random((30, 3))
    data = IncompleteData(x, MissingMask(np.zeros((30, 3), dtype=int)))
    run = impute(data, FcsConfig(iterations=3))
    assert run.completed[0].values.tobytes() == x.tobytes()
    assert run.trace[0].shape[0] == 0


def test_same_seed_reproduces_bit_for_bit():
    _, _, data = sample_data()
    cfg = FcsConfig(iterations=2, model="forest-sample", params=FAST, seed=11, chains=2)
    a, b = impute(data, cfg), impute(data, cfg)
    for u, v in zip(a.completed, b.completed):
        assert u.values.tobytes() == v.values.tobytes()


def test_chains_differ_on_missing_cells_only():
    _, _, data = sample_data()
    run = impute(data, FcsConfig(iterations=2, model="cart-sample", chains=3, seed=5))
    m = data.mask.entries
    vals = [c.values for c in run.completed]
    for a in vals[1:]:
        assert not np.array_equal(a[m], vals[0][m])
        assert a[~m].tobytes() == vals[0][~m].tobytes()


def test_trace_records_mean_and_variance():
    _, _, data = sample_data()
    run = impute(data, FcsConfig(iterations=3, model="gaussian-draw"))
    trace = run.trace[0]
    assert trace.shape == (3, 3, 2)
    m = data.mask.entries
    last = run.completed[0].values
    for j in range(3):
        if m[:, j].any():
            np.testing.assert_allclose(trace[-1, j], [last[m[:, j], j].mean(), last[m[:, j], j].var()])


def test_random_visit_order_runs():
    _, _, data = sample_data()
    run = impute(data, FcsConfig(iterations=2, model="cart-sample", visit_order="random-per-sweep"))
    assert observed_equal(data, run.completed[0])


def test_per_column_models():
    _, _, data = sample_data()
    cfg = FcsConfig(iterations=1, model={0: "regression-mean", 1: "cart-sample", 2: "gaussian-draw"},
                    params={1: {"min_leaf": 3}})
    assert cfg.kind_for(0).value == "regression-mean"
    assert cfg.params_for(1) == {"min_leaf": 3}
    out = impute(data, cfg).completed[0]
    assert not np.isnan(out.values).any()


def test_per_column_models_must_cover_missing_columns():
    _, _, data = sample_data()
    with pytest.raises(FcsError, match="column 1"):
        impute(data, FcsConfig(iterations=1, model={0: "cart-sample"}))


def test_config_validation():
    with pytest.raises(ValueError):
        FcsConfig(iterations=0)
    with pytest.raises(ValueError):
        FcsConfig(chains=0)
    with pytest.raises(ValueError):
        FcsConfig(visit_order="sideways")


def test_fully_missing_column_raises():
    x = np.random.default_rng(0).random((20, 2))
    m = np.zeros((20, 2), dtype=int)
    m[:, 1] = 1
    data = apply_mask(DataMatrix(x), MissingMask(m))
    with pytest.raises(FcsError, match="column 1"):
        impute(data, FcsConfig())


def test_few_observed_entries_warn():
    x = np.random.default_rng(0).random((20, 2))
    m = np.zeros((20, 2), dtype=int)
    m[5:, 1] = 1
    data = apply_mask(DataMatrix(x), MissingMask(m))
    with pytest.warns(RuntimeWarning, match="only 5 observed"):
        impute(data, FcsConfig(iterations=1, model="gaussian-draw"))


def test_enough_observed_entries_do_not_warn():
    _, _, data = sample_data()
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        impute(data, FcsConfig(iterations=1, model="gaussian-draw"))


def test_start_must_be_complete():
    _, _, data = sample_data()
    with pytest.raises(FcsError):
        impute(data, FcsConfig(iterations=1), start=data.values)


def test_truth_imputation_ex1_is_uniform():
    spec, _, data = sample_data("ex1-uniform3", n=5000, seed=1)
    run = impute_with_truth(data, FcsConfig(iterations=2, seed=3), spec)
    m = data.mask.entries[:, 0]
    assert stats.kstest(run.completed[0].values[m, 0], "uniform").pvalue > 0.01


def test_truth_imputation_is_deterministic():
    spec, _, data = sample_data("ex-fgm3", n=500)
    a = impute_with_truth(data, FcsConfig(iterations=2, seed=4), spec)
    b = impute_with_truth(data, FcsConfig(iterations=2, seed=4), spec)
    assert a.completed[0].values.tobytes() == b.completed[0].values.tobytes()


def test_truth_imputation_needs_oracle():
    spec, g, _ = sample_data("appB-gaussmix6", n=300)
    m = np.zeros((300, 6), dtype=int)
    m[:50, 4] = 1  # the observed block has no analytic conditional
    data = apply_mask(g.x, MissingMask(m))
    with pytest.raises(MissingOracle):
        impute(data, FcsConfig(iterations=1, model="true-sampler"), spec)


def test_true_sampler_sweep_is_stationary():
    spec, g, data = sample_data("ex-fgm4", n=20_000, seed=2)
    first = impute_with_truth(data, FcsConfig(iterations=3, seed=0), spec).completed[0].values
    again = impute_with_truth(data, FcsConfig(iterations=1, seed=1), spec, start=first)
    second = again.completed[0].values
    m = data.mask.entries
    for j in range(spec.d):
        if not m[:, j].any():
            continue
        a, b = first[m[:, j], j], second[m[:, j], j]
        sd = np.sqrt((a.var() + b.var()) / a.size)
        assert abs(a.mean() - b.mean()) < 4 * sd

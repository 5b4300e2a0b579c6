import csv
import json

import numpy as np
import pytest

from marimpute.bench import (ConfigError, ExperimentConfig, golden_configs, ingest_csv_pair,
                             run_experiment, run_quantile_study, write_quantile_study)
from marimpute.data import DataError, write_csv

SMALL = {
    "mechanism": {"name": "mcar-bernoulli", "params": {"p": 0.2, "d": 3}},
    "methods": ["regression-mean", "cart-sample", {"kind": "forest-sample", "params": {"n_trees": 5}}],
    "n": 200,
    "repetitions": 2,
    "seed": 3,
    "iterations": 2,
}


def small(**changes):
    return ExperimentConfig.from_dict({**SMALL, **changes})


def test_from_dict_parses_methods_and_mechanism():
    cfg = small()
    assert cfg.mechanism == "mcar-bernoulli" and cfg.mechanism_params == {"p": 0.2, "d": 3}
    assert [m.label for m in cfg.methods] == ["regression-mean", "cart-sample", "forest-sample"]
    assert cfg.methods[2].params == {"n_trees": 5}
    assert cfg.sample_size == 200


def test_default_sample_sizes():
    assert small(n=None).sample_size == 5000
    assert small(n=None, mechanism="appB-gaussmix6").sample_size == 1500


@pytest.mark.parametrize("change", [
    {"repetitions": 0},
    {"methods": []},
    {"mechanism": "no-such"},
    {"methods": ["wizard"]},
    {"metrics": ["accuracy"]},
    {"version": 2},
    {"methods": ["cart-sample", "cart-sample"]},
    {"downstream": [{"task": "median"}]},
    {"mechanism": "external"},
])
def test_invalid_configs(change):
    with pytest.raises(ConfigError):
        small(**change)


def test_malformed_config():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"methods": ["cart-sample"]})


def test_from_json_errors(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(bad)


def test_config_round_trips_through_dict():
    cfg = small()
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


def test_golden_configs_load():
    gold = golden_configs()
    assert {"fgm3_energy", "appB_gaussmix6", "quantile_study", "ex2_shift"} <= set(gold)
    fgm = gold["fgm3_energy"]
    assert fgm.mechanism == "ex-fgm3" and fgm.repetitions == 10 and fgm.sample_size == 5000
    assert [m.kind for m in fgm.methods][:2] == ["true-sampler", "cart-sample"]
    assert gold["quantile_study"].repetitions == 20


def test_experiment_is_deterministic():
    a, b = run_experiment(small()), run_experiment(small())
    assert [s.energy for s in a.scores] == [s.energy for s in b.scores]
    assert [s.rmse for s in a.scores] == [s.rmse for s in b.scores]
    assert a.standardized == b.standardized and a.ranking == b.ranking


def test_methods_share_the_repetition_data():
    report = run_experiment(small(repetitions=1, methods=["regression-mean", "gaussian-draw"]))
    assert all(s.error is None for s in report.scores)
    # distinct methods see the same data, so mean imputation wins on RMSE here
    assert report.mean("regression-mean", "rmse") < report.mean("gaussian-draw", "rmse")


def test_failing_method_is_isolated():
    base = run_experiment(small())
    broken = small(methods=SMALL["methods"] + [{"kind": "cart-sample", "params": {"bogus": 1},
                                                "name": "broken"}])
    report = run_experiment(broken)
    bad = [s for s in report.scores if s.method == "broken"]
    assert len(bad) == 2 and all("bogus" in s.error for s in bad)
    assert np.isnan(report.metric("broken", "energy")).all()
    for m in ("regression-mean", "cart-sample", "forest-sample"):
        np.testing.assert_array_equal(report.metric(m, "energy"), base.metric(m, "energy"))
    assert report.ranking["energy"][-1] == "broken"


def test_ranking_follows_mean_standardized_scores():
    report = run_experiment(small(repetitions=3))
    for metric, order in report.ranking.items():
        means = [report.standardized.mean(metric, m) for m in order]
        assert means == sorted(means, reverse=True)
        vals = np.array([v for m in order for v in report.standardized.values[metric][m]])
        assert np.all((vals > -1) & (vals < 0))


def test_parallel_repetitions_match_serial():
    a = run_experiment(small())
    b = run_experiment(small(jobs=2))
    assert [s.energy for s in a.scores] == [s.energy for s in b.scores]


def test_report_files(tmp_path):
    cfg = small(output_dir=str(tmp_path), save_completed=True,
                downstream=[{"task": "quantile", "column": 0, "alpha": 0.1}])
    report = run_experiment(cfg, plot_data=True)
    for name in ("report.json", "scores.csv", "standardized.csv", "plot_data.csv",
                 "completed_cart-sample_0.csv", "completed_forest-sample_1.csv"):
        assert (tmp_path / name).exists(), name
    data = json.loads((tmp_path / "report.json").read_text())
    assert data["ranking"] == report.ranking
    with open(tmp_path / "scores.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert set(rows[0]) == {"method", "rep", "metric", "value"}
    assert {r["metric"] for r in rows} == {"energy", "rmse", "quantile_0_0.1"}
    first = next(r for r in rows if r["method"] == "cart-sample" and r["metric"] == "energy")
    assert float(first["value"]) == report.metric("cart-sample", "energy")[0]


def test_external_csv_pair(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.random((100, 3))
    part = x.copy()
    part[rng.random((100, 3)) < 0.2] = np.nan
    part[:, 2] = x[:, 2]
    write_csv(tmp_path / "full.csv", x, ["a", "b", "c"])
    write_csv(tmp_path / "part.csv", part, ["a", "b", "c"])
    full, inc = ingest_csv_pair(tmp_path / "full.csv", tmp_path / "part.csv")
    assert full.values.tobytes() == x.tobytes()
    np.testing.assert_array_equal(inc.mask.entries, np.isnan(part))
    cfg = small(mechanism="external", external={"complete": str(tmp_path / "full.csv"),
                                                "incomplete": str(tmp_path / "part.csv")},
                repetitions=1)
    report = run_experiment(cfg)
    assert all(s.error is None for s in report.scores)


def test_ingest_rejects_bad_pairs(tmp_path):
    write_csv(tmp_path / "full.csv", np.ones((3, 2)))
    write_csv(tmp_path / "wide.csv", np.ones((3, 3)))
    write_csv(tmp_path / "na.csv", np.array([[1.0, np.nan], [1, 1], [1, 1]]))
    write_csv(tmp_path / "off.csv", np.array([[2.0, np.nan], [1, 1], [1, 1]]))
    with pytest.raises(DataError, match="shape"):
        ingest_csv_pair(tmp_path / "full.csv", tmp_path / "wide.csv")
    with pytest.raises(DataError, match="NA"):
        ingest_csv_pair(tmp_path / "na.csv", tmp_path / "na.csv")
    with pytest.raises(DataError, match="differ"):
        ingest_csv_pair(tmp_path / "full.csv", tmp_path / "off.csv")
    (tmp_path / "broken.csv").write_text("a,b\n1,1\n1\n1,1\n")
    with pytest.raises(DataError, match="line 3"):
        ingest_csv_pair(tmp_path / "broken.csv", tmp_path / "full.csv")


def test_quantile_study_small(tmp_path):
    cfg = ExperimentConfig.from_dict({"mechanism": "ex-fgm3", "methods": ["true-sampler"],
                                      "n": 2000, "repetitions": 3, "seed": 1, "iterations": 2})
    study = run_quantile_study(cfg)
    assert set(study.estimates) == {"observed-only", "true-sampler"}
    assert study.estimates["true-sampler"].shape == (3,)
    assert abs(study.mean("true-sampler") - 0.1) < 0.02
    write_quantile_study(study, tmp_path)
    assert (tmp_path / "quantile_study.csv").exists()
    assert json.loads((tmp_path / "report.json").read_text())["alpha"] == 0.1


def test_quantile_study_requires_fgm3():
    with pytest.raises(ConfigError):
        run_quantile_study(small())

import json

import numpy as np
import pytest

from coflowd import harness
from coflowd.distributions import ConfigError, SizeSpec
from coflowd.harness import (CellError, ExperimentConfig, format_report, histogram, load_config,
                             quartiles, read_stats, run_experiment, summarize)
from coflowd.model import load_instance

G = SizeSpec("gamma", 10.0, 0.5)
SMALL = ExperimentConfig(((4, 4), (4, 3)), G, num_instances=3, num_realizations=20,
                         policies=("cl", "nc", "ro", "rr", "ph"), raw=True, seed=3)


def test_quartiles_examples():
    assert quartiles([1, 2, 3, 4]) == (1.75, 2.5, 3.25)
    assert quartiles([7.0] * 5) == (7.0, 7.0, 7.0)
    # one sample of 100 has sd(Q1) ~ 0.043, so check the estimator over many samples
    rng = np.random.default_rng(0)
    q = np.array([quartiles(rng.uniform(size=100)) for _ in range(200)])
    assert abs(q[:, 0].mean() - 0.25) < 0.05 and abs(q[:, 2].mean() - 0.75) < 0.05
    assert (q[:, 0] <= q[:, 2]).all()
    with pytest.raises(ValueError):
        quartiles([])


def test_summarize_and_histogram():
    row = summarize(4, 4, "nc", [1.0, 1.1, 1.2, 1.3], ub=8.6)
    assert row.mean == pytest.approx(1.15)
    assert row.std == pytest.approx(np.std([1.0, 1.1, 1.2, 1.3], ddof=1))
    assert row.q1 <= row.q3
    assert summarize(4, 4, "nc", [2.0]).std == 0.0
    assert histogram([1.0, 1.01, 1.049, 1.05, 1.2]) == [(1.0, 3), (1.05, 1), (1.2, 1)]


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(((4, 20),), G)  # LP reference beyond 16 coflows
    ExperimentConfig(((4, 20),), G, reference="cl")
    with pytest.raises(ConfigError):
        ExperimentConfig(((4, 4),), G, num_instances=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(((4, 4),), G, policies=("xx",))
    with pytest.raises(ConfigError):
        ExperimentConfig((), G)
    with pytest.raises(ConfigError):
        ExperimentConfig(((4, 4),), G, reference="opt")
    d = ExperimentConfig.desk([(4, 4)], G)
    assert (d.num_instances, d.num_realizations) == (30, 300)
    full = ExperimentConfig(((4, 4),), G)
    assert (full.num_instances, full.num_realizations) == (100, 1000)


def test_config_round_trip(tmp_path):
    assert ExperimentConfig.from_json(json.loads(json.dumps(SMALL.to_json()))) == SMALL
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(SMALL.to_json()))
    assert load_config(p) == SMALL
    t = tmp_path / "cfg.toml"
    t.write_text('cells = [[4, 4], [8, 8]]\nnum_instances = 2\npolicies = ["nc", "rr"]\n'
                 'size = {family = "gamma", mean = 10.0, cv = 2.0}\n')
    cfg = load_config(t)
    assert cfg.cells == ((4, 4), (8, 8)) and cfg.size == SizeSpec("gamma", 10.0, 2.0)
    assert cfg.with_overrides(seed=9, num_realizations=None).seed == 9
    assert cfg.config_hash() != cfg.with_overrides(seed=9).config_hash()
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json({**SMALL.to_json(), "bogus": 1})


def test_outputs_deterministic_and_worker_independent(tmp_path):
    a = run_experiment(SMALL, tmp_path / "a")
    run_experiment(SMALL, tmp_path / "b", workers=2)
    for name in ("stats.csv", "instances.csv", "histograms.csv", "raw.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    meta = json.loads((tmp_path / "a" / "metadata.json").read_text())
    assert meta["config_hash"] == SMALL.config_hash()
    assert a.stats_csv().splitlines()[0] == "L,n,policy,mean,std,q1,q3,ub"
    assert len(a.raw_csv().splitlines()) == 1 + 2 * 3 * 5 * 20


def test_order_based_ratios_above_lp():
    res = run_experiment(SMALL)
    for rec in res.records:
        # CL reorders per realization, so it is not bounded by the LP
        for p in ("nc", "ro"):
            assert rec.costs[p] >= rec.reference - 3 * rec.se[p] - 1e-9 * rec.reference


def test_fixed_sizes_nc_equals_cl():
    cfg = ExperimentConfig(((8, 6),), SizeSpec.fixed(10.0), num_instances=4, num_realizations=5)
    res = run_experiment(cfg)
    for rec in res.records:
        assert rec.costs["nc"] == rec.costs["cl"]
    assert res.row(8, 6, "nc").ub == 4.0


def test_ub_column_and_cl_reference():
    cfg = ExperimentConfig(((8, 4),), G, num_instances=2, num_realizations=10,
                           policies=("nc", "rr"), reference="cl")
    res = run_experiment(cfg)
    assert res.row(8, 4, "nc").ub == pytest.approx(4 * harness.ub_table("gamma", 8, 0.5))
    assert res.row(8, 4, "rr").ub is None
    for rec in res.records:
        assert rec.reference == pytest.approx(np.mean(rec.costs.get("cl", rec.reference)))
    with pytest.raises(KeyError):
        res.row(4, 4, "nc")


def test_read_stats_and_report(tmp_path):
    res = run_experiment(SMALL, tmp_path)
    rows = read_stats(tmp_path / "stats.csv")
    assert [(r.L, r.n, r.policy) for r in rows] == [(r.L, r.n, r.policy) for r in res.rows]
    assert rows[1].mean == res.rows[1].mean
    text = format_report(rows)
    assert "NC" in text and len(text.splitlines()) == 4


def test_failure_bundle(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise ValueError("injected")
    monkeypatch.setattr(harness, "solve_lp", boom)
    with pytest.raises(CellError) as ei:
        run_experiment(ExperimentConfig(((4, 2),), G, num_instances=1, num_realizations=2), tmp_path)
    bundle = json.loads(open(ei.value.bundle).read())
    assert bundle["instance_seed"] == [0, 0, 4, 2, 0]
    assert "injected" in bundle["error"]
    p = tmp_path / "inst.json"
    p.write_text(json.dumps(bundle["instance"]))
    assert load_instance(p).num_coflows == 2

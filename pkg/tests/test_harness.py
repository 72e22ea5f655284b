import csv
import json
import math
import warnings

import numpy as np
import pytest

from multigroup import harness
from multigroup.core import InstanceError, save_groups, save_hypotheses
from multigroup.harness import ConfigError, ExperimentConfig, ingest_csv, run_experiment


def _write(path, text):
    path.write_text(text)
    return path


# ingestion ----------------------------------------------------------------------

def test_ingest_three_rows(tmp_path):
    p = _write(tmp_path / "d.csv", "point_id,label,g\n0,1,1\n1,0,0\n0,1,1\n")
    r = ingest_csv(p, {"labels": [0, 1], "group_columns": ["g"]})
    assert len(r.sample) == 3 and list(r.sample.labels) == [1, 0, 1]
    assert r.sample.counts(r.groups)[0] == 2 and r.excluded == ()


def test_ingest_unlabeled_row_named(tmp_path):
    p = _write(tmp_path / "d.csv", "point_id,label,g\n0,1,1\n1,,0\n")
    with pytest.raises(InstanceError, match="line 3"):
        ingest_csv(p, {"labels": [0, 1], "group_columns": ["g"]})


def test_ingest_rejects_undeclared_label_and_bad_rows(tmp_path):
    p = _write(tmp_path / "d.csv", "point_id,label,g\n0,7,1\n")
    with pytest.raises(InstanceError, match="not in declared labels"):
        ingest_csv(p, {"labels": [0, 1], "group_columns": ["g"]})
    p = _write(tmp_path / "e.csv", "point_id,label,g\nx,1,1\n")
    with pytest.raises(InstanceError, match="line 2"):
        ingest_csv(p, {"labels": [0, 1], "group_columns": ["g"]})
    p = _write(tmp_path / "f.csv", "point_id,label,g\n0,1,2\n")
    with pytest.raises(InstanceError, match="0/1"):
        ingest_csv(p, {"labels": [0, 1], "group_columns": ["g"]})
    p = _write(tmp_path / "h.csv", "point_id,label\n0,1\n")
    with pytest.raises(InstanceError, match="missing columns"):
        ingest_csv(p, {"labels": [0, 1], "group_columns": ["g"]})


def test_ingest_duplicate_group_columns_kept(tmp_path):
    p = _write(tmp_path / "d.csv", "point_id,label,a,b\n0,1,1,0\n1,0,1,1\n")
    r = ingest_csv(p, {"labels": [0, 1], "group_columns": ["a", "a", "b"]})
    assert len(r.groups) == 3 and np.array_equal(r.groups.matrix[0], r.groups.matrix[1])


def test_ingest_empty_group_excluded(tmp_path):
    p = _write(tmp_path / "d.csv", "point_id,label,a,b\n0,1,1,0\n1,0,1,0\n")
    with pytest.warns(UserWarning, match="excluding"):
        r = ingest_csv(p, {"labels": [0, 1], "group_columns": ["a", "b"]})
    assert r.excluded == ("b",) and r.groups.names == ("a",)


def test_ingest_features_and_group_file(tmp_path):
    save_groups(harness.GroupFamily(np.array([[1, 1, 0, 0], [0, 1, 1, 1]])), tmp_path / "g.json")
    p = _write(tmp_path / "d.csv", "x,label\n0.2,-1\n0.7,1\n1.5,1\n9,1\n")
    r = ingest_csv(p, {"labels": [-1, 1], "features": ["x"], "bins": {"x": [0.5, 1.0, 2.0]},
                       "group_file": str(tmp_path / "g.json")})
    assert list(r.sample.points) == [0, 1, 2, 3] and list(r.sample.labels) == [0, 1, 1, 1]


def test_ingest_inconsistent_membership(tmp_path):
    p = _write(tmp_path / "d.csv", "point_id,label,g\n0,1,1\n0,1,0\n")
    with pytest.raises(InstanceError, match="disagrees"):
        ingest_csv(p, {"labels": [0, 1], "group_columns": ["g"]})


# configuration --------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ConfigError, match="unknown algorithm"):
        ExperimentConfig("boosting", instance="prop45").validate()
    for kw in ({"delta": 0}, {"gamma": 0}, {"n": 1}, {"schedule": "x"}, {"schedule": "pseudodim"},
               {"min_frequency": 2}, {"schema_version": 9}):
        with pytest.raises(ConfigError):
            ExperimentConfig("prepend", instance="prop45", **kw).validate()
    with pytest.raises(ConfigError):
        ExperimentConfig("prepend").validate()
    with pytest.raises(ConfigError):
        ExperimentConfig("prepend", instance="nope").validate()
    with pytest.raises(ConfigError):
        ExperimentConfig("prepend", instance="missing/file.json").validate()


def test_config_json(tmp_path):
    p = _write(tmp_path / "c.json", json.dumps({"algorithm": "prepend", "instance": "prop45", "n": 50}))
    assert ExperimentConfig.load(p).n == 50
    with pytest.raises(ConfigError, match="unknown config fields"):
        ExperimentConfig.from_json({"algorithm": "prepend", "instance": "prop45", "colour": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.load(_write(tmp_path / "bad.json", "{"))


def test_instance_from_files(tmp_path):
    inst = harness.fixture_instance("desk8")
    inst.dist.save(tmp_path / "d.json")
    save_hypotheses(inst.H, tmp_path / "h.json")
    save_groups(inst.G, tmp_path / "g.json")
    cfg = ExperimentConfig("prepend", dist=str(tmp_path / "d.json"), hyp=str(tmp_path / "h.json"),
                           groups=str(tmp_path / "g.json"), n=200)
    rep = run_experiment(cfg)
    assert len(rep.trials[0]["rows"]) == 3


def test_fixture_names_resolve():
    for name in harness.INSTANCE_NAMES:
        assert harness.fixture_instance(name).dist.n_points >= 3
    assert harness.fixture_instance("propC2:1/10").name == "propC2-eps=1/10"


def test_workers_env(monkeypatch):
    monkeypatch.setenv("MULTIGROUP_THREADS", "3")
    assert harness.n_workers() == 3
    monkeypatch.setenv("MULTIGROUP_THREADS", "many")
    with pytest.raises(ConfigError):
        harness.n_workers()


# experiments ------------------------------------------------------------------------

def _check_rows(rows):
    for r in rows:
        assert abs(r["excess"] - (r["pop_risk"] - r["benchmark"])) <= 1e-12


def test_prop45_prepend_report(tmp_path):
    rep = run_experiment(ExperimentConfig("prepend", instance="prop45", n=400, out=str(tmp_path)))
    rows = rep.trials[0]["rows"]
    assert [r["group"] for r in rows] == ["g1", "g2"]
    _check_rows(rows)
    for name in ("report.json", "report.csv", "trace.json", "final_list.json"):
        assert (tmp_path / name).exists()
    with open(tmp_path / "report.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 2


def test_multi_trial_frequency_and_threads(monkeypatch):
    cfg = ExperimentConfig("experts", instance="desk8", n=400, trials=4, min_frequency=0.0)
    a = run_experiment(cfg)
    monkeypatch.setenv("MULTIGROUP_THREADS", "2")
    b = run_experiment(cfg)
    assert a.summary["satisfaction_frequency"] is not None and a.passed
    assert a.dumps(include_volatile=False) == b.dumps(include_volatile=False)
    assert b.volatile["workers"] == 2


def test_deterministic_reports(tmp_path):
    cfg = ExperimentConfig("prepend", instance="desk8", n=500, trials=2)
    assert run_experiment(cfg).dumps(False) == run_experiment(cfg).dumps(False)
    assert "volatile" not in json.loads(run_experiment(cfg).dumps(False))


def test_realizable_report_and_refusal():
    rep = run_experiment(ExperimentConfig("realizable", instance="realizable10", n=300, trials=2))
    assert rep.passed and rep.summary["assertions"]["zero_empirical_risk"]
    rep = run_experiment(ExperimentConfig("realizable", instance="prop52", n=300))
    assert rep.summary["n_refused"] == 1 and not rep.passed


def test_experts_report_trace():
    rep = run_experiment(ExperimentConfig("experts", instance="desk8", n=600))
    tr = rep.trials[0]["trace"]
    assert tr["regret_ok"] and tr["rounds"] == 300
    _check_rows(rep.trials[0]["rows"])


def test_schedules_in_reports():
    for sched, extra in (("small", {}), ("pseudodim", {"d": 2.0})):
        rep = run_experiment(ExperimentConfig("prepend", instance="desk8", n=500, schedule=sched, **extra))
        assert all(r["bound"] is not None for r in rep.trials[0]["rows"])


def test_compare_columns(tmp_path):
    table = harness.compare_algorithms(ExperimentConfig("prepend", instance="realizable10", n=1000))
    assert all(r["realizable_excess"] != "refused" for r in table)
    table = harness.compare_algorithms(ExperimentConfig("prepend", instance="prop45", n=1000))
    assert all(r["realizable_excess"] == "refused" for r in table)
    assert all(isinstance(r["prepend_excess"], float) and isinstance(r["experts_excess"], float) for r in table)
    harness.write_comparison(table, tmp_path / "c.csv")
    with open(tmp_path / "c.csv") as fh:
        assert next(csv.reader(fh))[:3] == ["group", "count", "prepend_excess"]


def test_bound_values():
    v = harness.bound_values(3, 3, 0.1, 1000, 500, d=2.0, eps=0.1)
    assert v["consistent_majority"] == pytest.approx(16 * (2 * math.log(27) + math.log(80)) / 500)
    assert all(x is not None for x in v.values())
    assert harness.bound_values(3, 3, 0.1, 1000, 500)["prepend_small_groups"] is None

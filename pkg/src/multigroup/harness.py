"""Experiment configuration, data ingestion, orchestration, and report files."""
from __future__ import annotations

import csv
import json
import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import fixtures
from .core import FiniteDistribution, GroupFamily, InstanceError, LossSpec, Sample, load_groups, load_hypotheses, sample
from .declist import predict_table
from .fixtures import Instance
from .experts import (
    exact_risk_of_Q,
    online_to_batch_check,
    selection_log_coef,
    run_reduction,
    sleeping_experts_bound,
    sleeping_regret_report,
)
from .prepend import (
    EpsilonSchedule,
    large_groups_bound,
    large_groups_pseudodim_bound,
    run_prepend,
    small_groups_bound,
)
from .realizable import NotGroupRealizableError, consistent_majority_bound, fit_consistent_majority
from .risk import (
    deviation_bound,
    empirical_conditional_risk,
    finite_class_capacity,
    population_conditional_risk,
    population_risk_table,
    pseudodim_capacity,
)
from .rng import stream

SCHEMA_VERSION = 1
ALGORITHMS = ("prepend", "experts", "realizable")
ARTIFACT_NAMES = {"prepend": "trace.json", "experts": "q_summary.json", "realizable": "predictor.json"}
ROW_FIELDS = (
    "group", "count", "mass_n", "emp_risk", "pop_risk", "benchmark", "excess", "bound", "satisfied",
)


class ConfigError(ValueError):
    pass


def n_workers() -> int:
    try:
        return max(1, int(os.environ.get("MULTIGROUP_THREADS", "1")))
    except ValueError:
        raise ConfigError("MULTIGROUP_THREADS must be an integer") from None


# ---------------------------------------------------------------------------
# instances
# ---------------------------------------------------------------------------

def fixture_instance(name: str, seed: int = 0) -> Instance:
    """Fixture by name. ``prop45`` is the first scenario (``prop45:2`` the second);
    ``propC2`` takes ``eps`` as ``propC2:1/4``."""
    base, _, arg = name.partition(":")
    if base == "prop45":
        inst = fixtures.build_prop45_scenarios()[int(arg or 1) - 1]
    elif base == "prop52":
        inst = fixtures.build_prop52_instance()
    elif base == "propC2":
        inst = fixtures.build_propC2_instance(Fraction(arg or "1/4"))
    elif base == "overlap":
        inst = fixtures.generate_overlap_instance(seed)
    elif base == "desk8":
        inst = fixtures.desk_instance()
    elif base == "realizable10":
        inst = fixtures.realizable_instance()
    else:
        raise ConfigError(f"unknown fixture {name!r}")
    label = getattr(inst, "name", base)
    return Instance(label, inst.dist, inst.H, inst.G, inst.loss)


INSTANCE_NAMES = ("prop45", "prop45:2", "prop52", "propC2", "overlap", "desk8", "realizable10")


def resolve_instance(source: str, seed: int = 0) -> Instance:
    if Path(source).suffix == ".json" or os.sep in source:
        if not Path(source).exists():
            raise ConfigError(f"instance file {source} does not exist")
        return Instance.load(source)
    return fixture_instance(source, seed)


def instance_from_files(dist_path, hyp_path, groups_path, name="files") -> Instance:
    """Instance from separate files; the loss is zero-one over the label values."""
    dist = FiniteDistribution.load(dist_path)
    H = load_hypotheses(hyp_path)
    G = load_groups(groups_path)
    if H.n_points != dist.n_points or G.n_points != dist.n_points:
        raise InstanceError("hypothesis, group and distribution files disagree on the number of points")
    if H.tables.max() >= dist.n_labels:
        raise InstanceError("hypotheses predict ids outside the label set")
    G.validate_for(dist)
    return Instance(name, dist, H, G, LossSpec.zero_one(dist.n_labels, predictions=dist.labels))


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    """One experiment. The instance is a fixture name or instance JSON file
    (``instance``), or three files ``dist``, ``hyp`` and ``groups``."""

    algorithm: str
    instance: str | None = None
    dist: str | None = None
    hyp: str | None = None
    groups: str | None = None
    catch_all: bool = False
    n: int = 1000
    seed: int = 0
    delta: float = 0.1
    gamma: float = 0.2
    schedule: str = "finite"
    d: float | None = None
    trials: int = 1
    out: str | None = None
    min_frequency: float | None = None
    schema_version: int = SCHEMA_VERSION

    def validate(self, algorithms=ALGORITHMS) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema version {self.schema_version}")
        if self.algorithm not in algorithms:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; expected one of {algorithms}")
        if not 0 < self.delta < 1:
            raise ConfigError("delta must lie in (0, 1)")
        if not 0 < self.gamma <= 1:
            raise ConfigError("gamma must lie in (0, 1]")
        if self.n < 2 or self.trials < 1:
            raise ConfigError("need n >= 2 and trials >= 1")
        if self.schedule not in ("small", "finite", "pseudodim"):
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        if self.schedule == "pseudodim" and self.d is None:
            raise ConfigError("the pseudodim schedule needs d")
        if self.min_frequency is not None and not 0 <= self.min_frequency <= 1:
            raise ConfigError("min_frequency must lie in [0, 1]")
        if self.instance is None and None in (self.dist, self.hyp, self.groups):
            raise ConfigError("give an instance, or all of dist, hyp and groups")
        self.resolve()

    def resolve(self) -> Instance:
        if self.instance is not None:
            return resolve_instance(self.instance, self.seed)
        for p in (self.dist, self.hyp, self.groups):
            if not Path(p).exists():
                raise ConfigError(f"file {p} does not exist")
        return instance_from_files(self.dist, self.hyp, self.groups)

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(obj) - known
        if extra:
            raise ConfigError(f"unknown config fields {sorted(extra)}")
        if "algorithm" not in obj:
            raise ConfigError("config needs 'algorithm'")
        cfg = cls(**obj)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            obj = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_json(obj)


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class IngestResult:
    sample: Sample
    groups: GroupFamily
    excluded: tuple[str, ...]
    labels: tuple


def ingest_csv(path, schema: dict) -> IngestResult:
    """Read labelled rows into a Sample and a GroupFamily.

    ``schema`` keys: ``labels`` (declared label values, required),
    ``label_column`` (default ``label``), either ``point_column`` (default
    ``point_id``) or ``features`` plus ``bins`` (per-feature bin edges, cells
    indexed in row-major order), and either ``group_columns`` or
    ``group_file`` (JSON group table). Groups with no rows are dropped with a
    warning and listed in ``excluded``.
    """
    labels = tuple(str(v) for v in schema["labels"])
    label_col = schema.get("label_column", "label")
    features = schema.get("features")
    point_col = schema.get("point_column", "point_id")
    group_cols = schema.get("group_columns")
    if group_cols is None and "group_file" not in schema:
        raise InstanceError("schema needs group_columns or group_file")
    if features:
        edges = [np.asarray(schema["bins"][f], dtype=float) for f in features]
        shape = [len(e) + 1 for e in edges]
        n_points = int(np.prod(shape))
    else:
        n_points = schema.get("n_points")

    pts, ys, memb = [], [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        need = [label_col] + (list(features) if features else [point_col]) + list(group_cols or [])
        missing = [c for c in need if c not in header]
        if missing:
            raise InstanceError(f"{path}: missing columns {missing}")
        for row in reader:
            line = reader.line_num
            lab = (row.get(label_col) or "").strip()
            if lab == "":
                raise InstanceError(f"{path}: line {line}: row has no label")
            if lab not in labels:
                raise InstanceError(f"{path}: line {line}: label {lab!r} not in declared labels {labels}")
            try:
                if features:
                    cell = [int(np.searchsorted(e, float(row[f]), side="right")) for e, f in zip(edges, features)]
                    x = int(np.ravel_multi_index(cell, shape))
                else:
                    x = int(row[point_col])
                    if x < 0:
                        raise ValueError
                g = [int(row[c]) for c in group_cols] if group_cols else None
            except (TypeError, ValueError):
                raise InstanceError(f"{path}: line {line}: malformed row") from None
            if g is not None and any(v not in (0, 1) for v in g):
                raise InstanceError(f"{path}: line {line}: group membership must be 0/1")
            pts.append(x)
            ys.append(labels.index(lab))
            memb.append(g)

    if not pts:
        raise InstanceError(f"{path}: no data rows")
    pts = np.array(pts, dtype=np.int64)
    m = int(n_points) if n_points is not None else int(pts.max()) + 1
    if pts.max() >= m:
        raise InstanceError(f"{path}: point ids exceed n_points={m}")
    if group_cols:
        mat = np.zeros((len(group_cols), m), dtype=int)
        seen = np.zeros(m, dtype=bool)
        for i, (x, g) in enumerate(zip(pts, memb)):
            if seen[x] and not np.array_equal(mat[:, x], g):
                raise InstanceError(f"{path}: data row {i + 1}: group membership of point {x} disagrees with an earlier row")
            mat[:, x] = g
            seen[x] = True
        names = tuple(group_cols)
    else:
        G0 = load_groups(schema["group_file"])
        if G0.n_points != m:
            raise InstanceError("group file and data disagree on the number of points")
        mat, names = G0.matrix.astype(int), G0.names

    counts = np.array([np.isin(pts, np.flatnonzero(row)).sum() for row in mat])
    keep = [i for i in range(len(names)) if counts[i] > 0]
    excluded = tuple(names[i] for i in range(len(names)) if counts[i] == 0)
    if excluded:
        warnings.warn(f"excluding groups with no rows: {list(excluded)}", stacklevel=2)
    if not keep:
        raise InstanceError("every group is empty")
    G = GroupFamily(mat[keep], names=tuple(names[i] for i in keep))
    s = Sample(pts, np.array(ys, dtype=np.int64), groups=G)
    return IngestResult(s, G, excluded, labels)


# ---------------------------------------------------------------------------
# single runs
# ---------------------------------------------------------------------------

def _row(name, count, n, emp, pop, bench, bound):
    excess = pop - bench
    ok = None if bound is None or not math.isfinite(bound) else bool(excess <= bound)
    return {
        "group": name,
        "count": float(count),
        "mass_n": float(count / n),
        "emp_risk": float(emp),
        "pop_risk": float(pop),
        "benchmark": float(bench),
        "excess": float(excess),
        "bound": None if bound is None else float(bound),
        "satisfied": ok,
    }


def fit_and_score(algorithm: str, inst: Instance, s: Sample, cfg: ExperimentConfig) -> dict:
    """Fit one algorithm on ``s`` and score every group against the population."""
    H, G, dist, loss = inst.H, inst.G, inst.dist, inst.loss
    bench = population_risk_table(H, G, dist, loss).min(axis=0)
    counts = s.counts(G)
    nH, nG = len(H), len(G)
    rows, trace = [], {}

    if algorithm == "prepend":
        if cfg.schedule == "small":
            idx = [i for i in range(nG) if counts[i] > 0]
            schedule = EpsilonSchedule.small(nH, nG, cfg.delta)
        else:
            idx = [i for i in range(nG) if counts[i] > 0 and counts[i] >= cfg.gamma * s.n]
            if cfg.schedule == "finite":
                schedule = EpsilonSchedule.finite(nH, nG, cfg.delta, cfg.gamma)
            else:
                schedule = EpsilonSchedule.pseudodim(cfg.d, cfg.delta, cfg.gamma)
        G_active = G.subset(idx) if idx else None
        tr = run_prepend(H, G_active, s, loss, schedule)
        f = predict_table(tr.final_list, H, G_active) if G_active is not None else H.tables[tr.h0]
        eps = dict(zip(idx, tr.eps))
        trace = tr.to_json()
        trace["active_groups"] = [G.names[i] for i in idx]
        for g in range(nG):
            bound = None
            if g in eps:
                if cfg.schedule == "small":
                    bound = float(small_groups_bound(nH, nG, cfg.delta, counts[g], eps[g]))
                elif cfg.schedule == "finite":
                    bound = float(large_groups_bound(nH, nG, cfg.delta, cfg.gamma, counts[g]))
                else:
                    bound = float(large_groups_pseudodim_bound(cfg.d, cfg.delta, cfg.gamma, s.n, counts[g]))
            emp = empirical_conditional_risk(f, G[g], s, loss) if counts[g] > 0 else math.nan
            pop = population_conditional_risk(f, G[g], dist, loss)
            rows.append(_row(G.names[g], counts[g], s.n, emp, pop, bench[g], bound))

    elif algorithm == "experts":
        q = run_reduction(H, G, s, seed=cfg.seed, loss=loss, catch_all=cfg.catch_all)
        pop = exact_risk_of_Q(q, G.matrix, dist, loss)
        emp = _empirical_risk_of_Q(q, G, s, loss)
        regret = sleeping_regret_report(q.log, q.state)
        o2b = online_to_batch_check(q, G.matrix, dist, loss, cfg.delta)
        trace = {
            "rounds": q.n_rounds,
            "catch_all": cfg.catch_all,
            "eta": q.eta[0].tolist(),
            "regret": regret.rows(H, q.G),
            "regret_ok": regret.ok,
            "online_to_batch_gap": o2b.gap.tolist(),
            "online_to_batch_bound": o2b.bound.tolist(),
        }
        for g in range(nG):
            bound = float(sleeping_experts_bound(nH, nG, cfg.delta, counts[g])) if counts[g] > 0 else None
            rows.append(_row(G.names[g], counts[g], s.n, emp[g], pop[g], bench[g], bound))

    elif algorithm == "realizable":
        p = fit_consistent_majority(H, G, s)
        f = p.predict_table()
        trace = p.to_json()
        for g in range(nG):
            bound = float(consistent_majority_bound(nH, nG, cfg.delta, counts[g]))
            emp = empirical_conditional_risk(f, G[g], s, loss)
            pop = population_conditional_risk(f, G[g], dist, loss)
            rows.append(_row(G.names[g], counts[g], s.n, emp, pop, bench[g], bound))
    else:
        raise ConfigError(f"unknown algorithm {algorithm!r}")
    return {"rows": rows, "trace": trace}


def _empirical_risk_of_Q(q, G: GroupFamily, s: Sample, loss: LossSpec) -> np.ndarray:
    from . import _kernels

    # mean over rounds of the expected loss at (x, y), one label at a time
    qloss = np.zeros((loss.table.shape[1], q.H.n_points))
    for y in range(loss.table.shape[1]):
        C = np.ascontiguousarray(loss.table[q.H.tables, y])
        R = _kernels.snapshot_point_risk(np.ascontiguousarray(q.snapshots), selection_log_coef(q.eta),
                                         np.ascontiguousarray(q.G.matrix), C)
        qloss[y] = R.mean(axis=0)
    per_row = qloss[s.labels, s.points] * s.weights
    gm = G.matrix[:, s.points].astype(float)
    counts = gm @ s.weights
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counts > 0, gm @ per_row / np.where(counts > 0, counts, 1), np.nan)


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

@dataclass
class Report:
    config: dict
    instance: str
    trials: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    volatile: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.summary.get("assertions", {}).values())

    def to_json(self, include_volatile: bool = True) -> dict:
        out = asdict(self)
        if not include_volatile:
            out.pop("volatile")
        return out

    def dumps(self, include_volatile: bool = True) -> str:
        return json.dumps(_clean(self.to_json(include_volatile)), indent=1, sort_keys=True)

    def csv_rows(self) -> list[dict]:
        return [{"trial": t["trial"], **r} for t in self.trials if "rows" in t for r in t["rows"]]

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        jp = out / "report.json"
        cp = out / "report.csv"
        jp.write_text(self.dumps())
        with open(cp, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=("trial",) + ROW_FIELDS)
            w.writeheader()
            for r in self.csv_rows():
                w.writerow({k: _csv_value(v) for k, v in r.items()})
        first = next((t for t in self.trials if "trace" in t), None)
        if first is not None:
            name = ARTIFACT_NAMES[self.config["algorithm"]]
            (out / name).write_text(json.dumps(_clean(first["trace"]), indent=1, sort_keys=True))
            if "final_list" in first["trace"]:
                (out / "final_list.json").write_text(json.dumps(first["trace"]["final_list"]))
        return jp, cp


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def _csv_value(v):
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def _run_trial(cfg: ExperimentConfig, inst: Instance, trial: int) -> dict:
    rng = stream(cfg.seed, "trial", trial)
    s = sample(inst.dist, cfg.n, rng, groups=inst.G)
    try:
        res = fit_and_score(cfg.algorithm, inst, s, cfg)
    except NotGroupRealizableError as exc:
        return {"trial": trial, "refused": str(exc)}
    checked = [r["satisfied"] for r in res["rows"] if r["satisfied"] is not None]
    return {"trial": trial, "all_satisfied": all(checked), **res}


def run_experiment(cfg: ExperimentConfig) -> Report:
    """Run ``cfg.trials`` seeded trials; writes report files when ``cfg.out`` is set."""
    cfg.validate()
    inst = cfg.resolve()
    t0 = time.perf_counter()
    workers = min(n_workers(), cfg.trials)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            trials = list(ex.map(lambda t: _run_trial(cfg, inst, t), range(cfg.trials)))
    else:
        trials = [_run_trial(cfg, inst, t) for t in range(cfg.trials)]
    done = [t for t in trials if "refused" not in t]
    freq = sum(t["all_satisfied"] for t in done) / len(done) if done else None
    assertions = {}
    if cfg.min_frequency is not None:
        assertions["bound_frequency"] = freq is not None and freq >= cfg.min_frequency
    if cfg.algorithm == "experts":
        assertions["regret"] = all(t["trace"]["regret_ok"] for t in done)
    if cfg.algorithm == "realizable":
        assertions["fitted"] = bool(done)
        assertions["zero_empirical_risk"] = all(
            r["emp_risk"] == 0 for t in done for r in t["rows"] if r["count"] > 0
        )
    summary = {
        "n_trials": cfg.trials,
        "n_refused": len(trials) - len(done),
        "satisfaction_frequency": freq,
        "assertions": assertions,
    }
    rep = Report(
        config=asdict(cfg),
        instance=inst.name,
        trials=trials,
        summary=summary,
        volatile={"timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"), "elapsed_s": time.perf_counter() - t0,
                  "workers": workers},
    )
    if cfg.out:
        rep.write(cfg.out)
    return rep


def compare_algorithms(cfg: ExperimentConfig) -> list[dict]:
    """Per-group excess and bound for every algorithm on one shared sample.

    An algorithm that refuses the sample (the consistent-majority learner on a
    non-realizable one) gets ``refused`` in its columns.
    """
    cfg.validate()
    inst = cfg.resolve()
    s = sample(inst.dist, cfg.n, stream(cfg.seed, "compare"), groups=inst.G)
    table = [{"group": name, "count": float(c)} for name, c in zip(inst.G.names, s.counts(inst.G))]
    for alg in ALGORITHMS:
        try:
            res = fit_and_score(alg, inst, s, cfg)
        except (NotGroupRealizableError, ValueError) as exc:
            for row in table:
                row[f"{alg}_excess"] = "refused"
                row[f"{alg}_bound"] = "refused"
            table[0].setdefault("notes", []).append(f"{alg}: {exc}")
            continue
        for row, r in zip(table, res["rows"]):
            row[f"{alg}_excess"] = r["excess"]
            row[f"{alg}_bound"] = r["bound"]
    return table


def write_comparison(table: list[dict], path) -> None:
    cols = ["group", "count"] + [f"{a}_{k}" for a in ALGORITHMS for k in ("excess", "bound")]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
        w.writeheader()
        for row in table:
            w.writerow({k: _csv_value(row.get(k)) for k in cols})


def bound_values(n_hypotheses, n_groups, delta, n, count, gamma=0.2, d=None, eps=None, emp_risk=None) -> dict:
    """Every guarantee at one parameter setting; ``None`` where an input is missing."""
    D = finite_class_capacity(n_hypotheses, n_groups, delta)
    out = {
        "capacity_finite": D,
        "deviation_finite": deviation_bound(D, count, emp_risk if emp_risk is not None else 1.0),
        "prepend_large_groups": float(large_groups_bound(n_hypotheses, n_groups, delta, gamma, count)),
        "prepend_small_groups": None if eps is None else float(small_groups_bound(n_hypotheses, n_groups, delta, count, eps)),
        "sleeping_experts": float(sleeping_experts_bound(n_hypotheses, n_groups, delta, count)),
        "consistent_majority": float(consistent_majority_bound(n_hypotheses, n_groups, delta, count)),
    }
    if d is not None:
        Dp = pseudodim_capacity(d, n, delta)
        out["capacity_pseudodim"] = Dp
        out["deviation_pseudodim"] = deviation_bound(Dp, count, emp_risk if emp_risk is not None else 1.0)
        out["prepend_large_groups_pseudodim"] = float(large_groups_pseudodim_bound(d, delta, gamma, n, count))
    return out

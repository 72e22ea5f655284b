"""Exact counterexample instances, the overlap generator, and a brute-force optimum oracle.

Fixture claims are checked in rational arithmetic: every instance here
carries :class:`~fractions.Fraction` masses and a literal expected risk
table, so a check either holds exactly or fails.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .core import FiniteDistribution, GroupFamily, HypothesisClass, InstanceError, LossSpec, Sample
from .declist import DecisionList, canonicalize, enumerate_canonical, predict_table
from .realizable import BINARY, BINARY_LOSS, all_majority_predictors
from .risk import exact_risk_table, population_conditional_risk, population_risk_table
from .rng import stream

F = Fraction


@dataclass(frozen=True, eq=False)
class ExactInstance:
    name: str
    dist: FiniteDistribution
    H: HypothesisClass
    G: GroupFamily
    loss: LossSpec
    risk_table: tuple  # expected L(h | g) as Fractions, indexed [h][g]
    extra: dict = field(default_factory=dict)

    def recomputed_table(self):
        return exact_risk_table(self.H, self.G, self.dist, self.loss)

    def table_matches(self) -> bool:
        return [list(r) for r in self.risk_table] == self.recomputed_table()

    def benchmark(self) -> list[Fraction]:
        return [min(self.risk_table[h][g] for h in range(len(self.H))) for g in range(len(self.G))]

    def exact_excess(self, f) -> list[Fraction]:
        """``L(f | g) - min_h L(h | g)`` per group, for a prediction table ``f``."""
        bench = self.benchmark()
        return [
            population_conditional_risk(f, self.G[g], self.dist, self.loss, exact=True) - bench[g]
            for g in range(len(self.G))
        ]


# ---------------------------------------------------------------------------
# two scenarios that agree on every order-1 statistic
# ---------------------------------------------------------------------------

def build_prop45_scenarios() -> tuple[ExactInstance, ExactInstance]:
    """Two label distributions on a uniform 3-point domain, labels {1, 2, 3}.

    ``h1 = 1`` and ``h2 = 2`` everywhere; groups ``g1 = {x0, x1}`` and
    ``g2 = {x0, x2}``. Both scenarios share group masses and every
    ``L(h | g)``, yet no decision list is within 1/8 of optimal on both.
    """
    mass = [F(1, 3)] * 3
    scen1 = [[F(1, 4), 0, F(3, 4)], [F(3, 4), F(1, 4), 0], [0, 1, 0]]
    scen2 = [[0, F(1, 4), F(3, 4)], [1, 0, 0], [F(1, 4), F(3, 4), 0]]
    H = HypothesisClass(np.array([[0, 0, 0], [1, 1, 1]]), names=("h1", "h2"))
    G = GroupFamily(np.array([[1, 1, 0], [1, 0, 1]]), names=("g1", "g2"))
    loss = LossSpec.zero_one(3, predictions=(1, 2, 3))
    table = ((F(1, 2), F(7, 8)), (F(7, 8), F(1, 2)))
    out = []
    for name, ld, point_risk in (
        ("prop45-scenario1", scen1, ((F(3, 4), F(1, 4), F(1)), (F(1), F(3, 4), F(0)))),
        ("prop45-scenario2", scen2, ((F(1), F(0), F(3, 4)), (F(3, 4), F(1), F(1, 4)))),
    ):
        dist = FiniteDistribution.from_fractions(mass, ld, labels=(1, 2, 3))
        out.append(ExactInstance(name, dist, H, G, loss, table, {"point_risk": point_risk}))
    return out[0], out[1]


@dataclass(frozen=True)
class ListVerdict:
    decision_list: DecisionList
    excess: tuple  # per scenario, per group
    scenario: int
    group: int
    worst_excess: Fraction


@dataclass(frozen=True)
class ScenarioReport:
    verdicts: tuple[ListVerdict, ...]
    threshold: Fraction

    @property
    def ok(self) -> bool:
        return all(v.worst_excess >= self.threshold for v in self.verdicts)

    @property
    def failures(self) -> list[ListVerdict]:
        return [v for v in self.verdicts if v.worst_excess < self.threshold]


def verify_prop45() -> ScenarioReport:
    """Check every canonical decision list over the two scenarios.

    Each list must have, in some scenario, a group with exact excess at
    least 1/8; the verdict records the worst (scenario, group) witness.
    """
    scenarios = build_prop45_scenarios()
    H, G = scenarios[0].H, scenarios[0].G
    verdicts = []
    for f in enumerate_canonical(H, G, max_len=len(G)):
        table = predict_table(f, H, G)
        excess = tuple(tuple(inst.exact_excess(table)) for inst in scenarios)
        i, g = max(itertools.product(range(2), range(len(G))), key=lambda ig: excess[ig[0]][ig[1]])
        verdicts.append(ListVerdict(f, excess, i, g, excess[i][g]))
    return ScenarioReport(tuple(verdicts), F(1, 8))


# ---------------------------------------------------------------------------
# majority votes of per-group hypotheses are not agnostic learners
# ---------------------------------------------------------------------------

def build_prop52_instance() -> ExactInstance:
    """Four points with masses 3/24, 7/24, 7/24, 7/24; ``g_i = {x0, x_i}``; constant ±1 hypotheses."""
    mass = [F(3, 24), F(7, 24), F(7, 24), F(7, 24)]
    labels = [1, 0, 0, 1]  # ids into (-1, +1): x0 and x3 positive
    ld = [[F(1 - y), F(y)] for y in labels]
    dist = FiniteDistribution.from_fractions(mass, ld, labels=BINARY)
    H = HypothesisClass(np.array([[1] * 4, [0] * 4]), names=("h", "h'"))
    G = GroupFamily(np.array([[1, 1, 0, 0], [1, 0, 1, 0], [1, 0, 0, 1]]), names=("g1", "g2", "g3"))
    table = ((F(7, 10), F(7, 10), F(0)), (F(3, 10), F(3, 10), F(1)))
    return ExactInstance("prop52", dist, H, G, BINARY_LOSS, table)


@dataclass(frozen=True)
class AssignmentVerdict:
    assignment: tuple[str, ...]
    excess: tuple  # exact, per group
    case: int
    witness_group: int
    witness_value: Fraction  # the lower bound the case analysis guarantees on that group

    @property
    def worst_excess(self) -> Fraction:
        return max(self.excess)


@dataclass(frozen=True)
class MajorityReport:
    verdicts: tuple[AssignmentVerdict, ...]

    @property
    def ok(self) -> bool:
        return all(
            v.worst_excess > F(1, 4) and v.excess[v.witness_group] >= v.witness_value > F(1, 4)
            for v in self.verdicts
        )

    @property
    def witness_values_attained(self) -> set:
        """Witness values met with equality by some assignment."""
        return {v.witness_value for v in self.verdicts if v.excess[v.witness_group] == v.witness_value}


def verify_prop52() -> MajorityReport:
    inst = build_prop52_instance()
    H, G = inst.H, inst.G
    h_pos, h_neg = 0, 1
    verdicts = []
    for p in all_majority_predictors(H, G):
        sigma = p.assignment
        excess = tuple(inst.exact_excess(p.predict_table()))
        if sigma[0] == h_neg and sigma[1] == h_neg:
            # x0 is voted negative, so all of x0's mass inside g3 is lost
            case, g, value = 1, 2, inst.dist.exact_mass[0] / (inst.dist.exact_mass[0] + inst.dist.exact_mass[3])
        else:
            # some g_i in {g1, g2} votes positive on x_i, whose label is negative
            i = 0 if sigma[0] == h_pos else 1
            m = inst.dist.exact_mass
            case, g = 2, i
            value = m[i + 1] / (m[0] + m[i + 1]) - inst.benchmark()[i]
        verdicts.append(AssignmentVerdict(tuple(H.names[h] for h in sigma), excess, case, g, value))
    return MajorityReport(tuple(verdicts))


# ---------------------------------------------------------------------------
# multiaccuracy
# ---------------------------------------------------------------------------

def multiaccuracy_violation(f, c, dist: FiniteDistribution, exact: bool = False):
    """``E[c(x) (f(x) - y)]`` over ``dist``, with ``y`` the numeric label value."""
    f = list(f)
    c = list(c)
    if len(f) != dist.n_points or len(c) != dist.n_points:
        raise InstanceError("f and c must be tables over the domain")
    if any(not 0 <= v <= 1 for v in f):
        raise InstanceError("f must take values in [0, 1]")
    if any(abs(v) > 1 for v in c):
        raise InstanceError("test functions must take values in [-1, 1]")
    if exact:
        if not dist.is_exact:
            raise ValueError("distribution carries no exact masses")
        ys = [F(v) for v in dist.labels]
        total = F(0)
        for x in range(dist.n_points):
            mean_y = sum((p * y for p, y in zip(dist.exact_label_dist[x], ys)), F(0))
            total += dist.exact_mass[x] * F(c[x]) * (F(f[x]) - mean_y)
        return total
    mean_y = dist.label_dist @ np.asarray(dist.labels, dtype=float)
    return float(dist.mass @ (np.asarray(c, float) * (np.asarray(f, float) - mean_y)))


def multiaccuracy_error_bound(best_group_risk, alpha, group_mass):
    """Classification error on ``g`` implied by alpha-multiaccuracy against ``{h g}``."""
    return 4 * best_group_risk + 2 * alpha / group_mass


def build_propC2_instance(eps) -> ExactInstance:
    """Three points with masses ``(1 - 2 eps, eps, eps)`` and ``y = 1`` everywhere.

    ``extra`` holds the real-valued ``f = (1, 0, 0)``, the ±1 hypothesis
    ``h = (1, 1, -1)``, the all-ones group and ``c = h g``.
    """
    eps = F(eps)
    if not 0 < eps < F(1, 2):
        raise InstanceError("eps must lie in (0, 1/2)")
    dist = FiniteDistribution.from_fractions([1 - 2 * eps, eps, eps], [[0, 1]] * 3, labels=(0, 1))
    h = [1, 1, -1]
    g = [1, 1, 1]
    f = [F(1), F(0), F(0)]
    H = HypothesisClass(np.array([[1, 1, 0]]), names=("h",))  # ids into (-1, +1)
    G = GroupFamily(np.array([g]), names=("g",))
    loss = LossSpec(np.array([[1.0, 1.0], [1.0, 0.0]]), predictions=(-1, 1))  # h(x) != y
    table = ((eps,),)
    return ExactInstance(
        f"propC2-eps={eps}", dist, H, G, loss, table,
        {"eps": eps, "f": f, "h": h, "g": g, "c": [a * b for a, b in zip(h, g)], "eta": [1, 1, 1]},
    )


def disagreement_given_group(pred, target, g, dist: FiniteDistribution) -> Fraction:
    """``Pr(pred(x) != target(x) | x in g)`` in exact arithmetic."""
    pg = sum((dist.exact_mass[x] for x in range(dist.n_points) if g[x]), F(0))
    bad = sum((dist.exact_mass[x] for x in range(dist.n_points) if g[x] and pred[x] != target[x]), F(0))
    return bad / pg


@dataclass(frozen=True)
class MultiaccuracyCheck:
    eps: Fraction
    violation: Fraction
    h_error: Fraction
    f_error: Fraction

    @property
    def ok(self) -> bool:
        return self.violation == 0 and self.h_error == self.eps and self.f_error == 2 * self.eps


def verify_propC2(eps) -> MultiaccuracyCheck:
    inst = build_propC2_instance(eps)
    e = inst.extra
    return MultiaccuracyCheck(
        e["eps"],
        multiaccuracy_violation(e["f"], e["c"], inst.dist, exact=True),
        disagreement_given_group(e["h"], e["eta"], e["g"], inst.dist),
        disagreement_given_group(e["f"], e["eta"], e["g"], inst.dist),
    )


# ---------------------------------------------------------------------------
# planar instance with two overlapping groups
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class OverlapInstance:
    dist: FiniteDistribution
    H: HypothesisClass
    G: GroupFamily
    loss: LossSpec
    coords: np.ndarray
    gap: float
    seed: int


def _single_hypothesis_gap(H, G, dist, loss) -> float:
    table = population_risk_table(H, G, dist, loss)
    excess = table - table.min(axis=0, keepdims=True)
    return float(excess.max(axis=1).min())


def generate_overlap_instance(seed: int, n_points: int = 12, overlap: float = 0.3, min_gap: float = 0.05) -> OverlapInstance:
    """XOR-labelled points on a jittered grid in the unit square.

    ``g1`` is the band ``x < 0.5 + overlap/2`` and ``g2`` the band
    ``x >= 0.5 - overlap/2``; ``H`` holds the four axis-aligned half-plane
    classifiers through the centre. Instances whose best single hypothesis is
    within ``min_gap`` of optimal on both groups, or with an empty group, are
    redrawn (at most 100 times).
    """
    if not 0 <= overlap <= 1:
        raise ValueError("overlap must lie in [0, 1]")
    cols = math.ceil(math.sqrt(n_points))
    rows = math.ceil(n_points / cols)
    loss = LossSpec.zero_one(2, predictions=BINARY)
    for attempt in range(100):
        rng = stream(seed, "overlap", attempt)
        cells = np.array([((i % cols + 0.5) / cols, (i // cols + 0.5) / rows) for i in range(n_points)])
        jitter = rng.uniform(-0.35, 0.35, size=cells.shape) / np.array([cols, rows])
        xy = np.clip(cells + jitter, 0.0, 1.0)
        pos = (xy[:, 0] >= 0.5) == (xy[:, 1] >= 0.5)
        labels = pos.astype(int)
        g1 = xy[:, 0] < 0.5 + overlap / 2
        g2 = xy[:, 0] >= 0.5 - overlap / 2
        if not g1.any() or not g2.any():
            continue
        up = (xy[:, 1] >= 0.5).astype(int)
        right = (xy[:, 0] >= 0.5).astype(int)
        H = HypothesisClass(np.array([up, 1 - up, right, 1 - right]), names=("y>=.5", "y<.5", "x>=.5", "x<.5"))
        G = GroupFamily(np.array([g1, g2]).astype(int), names=("g1", "g2"))
        mass = rng.dirichlet(np.full(n_points, 4.0))
        dist = FiniteDistribution.deterministic(mass, labels, labels=BINARY)
        gap = _single_hypothesis_gap(H, G, dist, loss)
        if gap > min_gap:
            return OverlapInstance(dist, H, G, loss, xy, gap, seed)
    raise InstanceError("no admissible overlap instance after 100 attempts")


# ---------------------------------------------------------------------------
# brute-force optimum
# ---------------------------------------------------------------------------

MAX_GROUPS = 4
MAX_HYPOTHESES = 4
MAX_POINTS = 12
PREDICTOR_CLASSES = ("decision-lists", "all-maps", "majority")


@dataclass(frozen=True)
class BruteForceResult:
    value: float | Fraction
    witness: object
    benchmark: tuple
    active_groups: tuple[int, ...]
    n_candidates: int


def _weighted_point_loss(source, loss: LossSpec, m: int, exact: bool):
    """Per-point, per-prediction loss mass and per-point mass for a distribution or sample."""
    if isinstance(source, FiniteDistribution):
        if exact:
            lt = [[F(float(v)) for v in row] for row in loss.table]
            pl = [
                [source.exact_mass[x] * sum((p * lt[z][y] for y, p in enumerate(source.exact_label_dist[x])), F(0))
                 for z in range(loss.n_predictions)]
                for x in range(m)
            ]
            return pl, list(source.exact_mass)
        pl = source.mass[:, None] * loss.expected(source.label_dist)
        return pl, source.mass.copy()
    if not isinstance(source, Sample):
        raise TypeError("source must be a FiniteDistribution or a Sample")
    if exact:
        pl = [[F(0)] * loss.n_predictions for _ in range(m)]
        wx = [F(0)] * m
        for x, y, w in zip(source.points, source.labels, source.weights):
            w = F(float(w))
            wx[x] += w
            for z in range(loss.n_predictions):
                pl[x][z] += w * F(float(loss.table[z, y]))
        return pl, wx
    pl = np.zeros((m, loss.n_predictions))
    np.add.at(pl, source.points, source.weights[:, None] * loss.table[:, source.labels].T)
    wx = np.bincount(source.points, weights=source.weights, minlength=m)
    return pl, wx


def brute_force_optimum(
    H: HypothesisClass,
    G: GroupFamily,
    source,
    loss: LossSpec,
    predictor_class: str = "decision-lists",
    max_len: int | None = None,
    exact: bool = False,
) -> BruteForceResult:
    """Exact minimum over a predictor class of ``max_g (L(f | g) - min_h L(h | g))``.

    ``source`` is a distribution (population risks) or a sample (empirical
    risks). Groups with no mass under ``source`` are left out.
    """
    m = H.n_points
    if len(G) > MAX_GROUPS or len(H) > MAX_HYPOTHESES or m > MAX_POINTS:
        raise ValueError(
            f"brute force limited to |G| <= {MAX_GROUPS}, |H| <= {MAX_HYPOTHESES}, {MAX_POINTS} points"
        )
    if predictor_class not in PREDICTOR_CLASSES:
        raise ValueError(f"unknown predictor class {predictor_class!r}")
    pl, wx = _weighted_point_loss(source, loss, m, exact)
    gmat = G.matrix
    mass_g = [sum((wx[x] for x in range(m) if gmat[g, x]), F(0) if exact else 0.0) for g in range(len(G))]
    active = tuple(g for g in range(len(G)) if mass_g[g] > 0)
    if not active:
        raise ValueError("no group has positive mass under the source")

    def risks(table):
        out = []
        for g in active:
            acc = sum((pl[x][table[x]] for x in range(m) if gmat[g, x]), F(0) if exact else 0.0)
            out.append(acc / mass_g[g])
        return out

    bench = [min(col) for col in zip(*(risks(H.tables[h]) for h in range(len(H))))]

    if predictor_class == "decision-lists":
        max_len = len(G) if max_len is None else max_len
        candidates = ((f, predict_table(f, H, G)) for f in enumerate_canonical(H, G, max_len))
    elif predictor_class == "majority":
        candidates = ((p, p.predict_table()) for p in all_majority_predictors(H, G))
    else:
        n_pred = loss.n_predictions
        if not exact:
            return _all_maps_float(np.asarray(pl), mass_g, active, bench, gmat, n_pred, m)
        if n_pred ** m > 5000:
            raise ValueError("exact all-maps enumeration is limited to 5000 maps")
        candidates = ((t, np.array(t)) for t in itertools.product(range(n_pred), repeat=m))

    best, witness, count = None, None, 0
    for obj, table in candidates:
        count += 1
        val = max(r - b for r, b in zip(risks(table), bench))
        if best is None or val < best:
            best, witness = val, obj
    return BruteForceResult(best, witness, tuple(bench), active, count)


def _all_maps_float(pl, mass_g, active, bench, gmat, n_pred, m):
    maps = np.array(list(itertools.product(range(n_pred), repeat=m)), dtype=np.int64)
    point_loss = pl[np.arange(m)[None, :], maps]  # (K, m)
    ga = gmat[list(active)].astype(float)
    r = point_loss @ ga.T / np.array([mass_g[g] for g in active])[None, :]
    val = (r - np.array(bench)[None, :]).max(axis=1)
    k = int(np.argmin(val))
    return BruteForceResult(float(val[k]), maps[k], tuple(bench), active, maps.shape[0])


# ---------------------------------------------------------------------------
# random and fixed instances for experiments
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Instance:
    name: str
    dist: FiniteDistribution
    H: HypothesisClass
    G: GroupFamily
    loss: LossSpec

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "distribution": self.dist.to_json(),
            "hypotheses": {"tables": self.H.tables.tolist(), "names": list(self.H.names)},
            "groups": {"groups": self.G.matrix.astype(int).tolist(), "names": list(self.G.names)},
            "loss": {"table": self.loss.table.tolist(), "predictions": list(self.loss.predictions)},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Instance":
        try:
            H = HypothesisClass(np.array(obj["hypotheses"]["tables"]), names=tuple(obj["hypotheses"]["names"]))
            G = GroupFamily(np.array(obj["groups"]["groups"]), names=tuple(obj["groups"]["names"]))
            loss = LossSpec(np.array(obj["loss"]["table"]), predictions=tuple(obj["loss"]["predictions"]))
            dist = FiniteDistribution.from_json(obj["distribution"])
        except KeyError as exc:
            raise InstanceError(f"instance file lacks field {exc}") from None
        return cls(obj.get("name", "file"), dist, H, G, loss)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path) -> "Instance":
        return cls.from_json(json.loads(Path(path).read_text()))


def random_instance(rng, n_points, n_hypotheses, n_groups, n_labels=2, min_group_mass=0.0, name="random") -> Instance:
    """Random finite instance; groups are redrawn until each has ``min_group_mass``."""
    mass = rng.dirichlet(np.ones(n_points))
    ld = rng.dirichlet(np.full(n_labels, 0.5), size=n_points)
    H = HypothesisClass(rng.integers(0, n_labels, size=(n_hypotheses, n_points)))
    for _ in range(1000):
        gm = rng.random((n_groups, n_points)) < 0.5
        if np.all(gm.astype(float) @ mass >= max(min_group_mass, 1e-9)):
            break
    else:
        raise InstanceError("could not draw groups with the requested mass")
    labels = BINARY if n_labels == 2 else tuple(range(n_labels))
    dist = FiniteDistribution(mass, ld, labels=labels)
    return Instance(name, dist, H, GroupFamily(gm.astype(int)), LossSpec.zero_one(n_labels))


def desk_instance() -> Instance:
    """Fixed 8-point binary instance with |H| = |G| = 3 and every group mass at least 0.3."""
    return random_instance(stream(20220601, "desk-instance"), 8, 3, 3, min_group_mass=0.3, name="desk8")


def realizable_instance() -> Instance:
    """Fixed 10-point group-realizable instance: three overlapping groups, four hypotheses."""
    rng = stream(20220601, "realizable-instance")
    m = 10
    y = rng.integers(0, 2, size=m)
    gm = np.zeros((3, m), dtype=int)
    gm[0, 0:5] = 1
    gm[1, 3:8] = 1
    gm[2, 6:10] = 1
    gm[2, 0] = 1
    tables = []
    for g in range(3):
        h = 1 - y.copy()  # wrong off the group
        h[gm[g] == 1] = y[gm[g] == 1]
        tables.append(h)
    tables.append(np.ones(m, dtype=int))
    mass = rng.dirichlet(np.full(m, 3.0))
    dist = FiniteDistribution.deterministic(mass, y, labels=BINARY)
    return Instance("realizable10", dist, HypothesisClass(np.array(tables)), GroupFamily(gm), BINARY_LOSS)


FIXTURE_NAMES = ("prop45", "prop52", "propC2", "overlap")

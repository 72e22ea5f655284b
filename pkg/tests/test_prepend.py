import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multigroup import _kernels, fixtures
from multigroup.core import FiniteDistribution, GroupFamily, HypothesisClass, LossSpec, Sample, sample
from multigroup.declist import DecisionList, predict_table
from multigroup.prepend import (
    EpsilonSchedule,
    empirical_mass_lower_bound,
    epsilon_large_groups_finite,
    epsilon_large_groups_finite_cap,
    epsilon_large_groups_pseudodim,
    epsilon_large_groups_pseudodim_cap,
    epsilon_small_groups,
    excess_for_sample_size,
    filter_groups,
    inclusion_mass_threshold,
    large_group_indices,
    run_prepend,
    sample_size_for_excess,
)
from multigroup.risk import empirical_conditional_risk
from multigroup.rng import stream

from conftest import instances, make_instance


# slack schedules ----------------------------------------------------------

def test_small_groups_examples():
    assert epsilon_small_groups(2, 2, 0.05, 4000) == pytest.approx(epsilon_small_groups(2, 2, 0.05, 1000) / 2)
    want = 9 * math.sqrt((6 * math.log(4) + math.log(160)) / 1000)
    assert epsilon_small_groups(2, 2, 0.05, 1000) == pytest.approx(want, rel=1e-14)
    assert epsilon_small_groups(1, 1, 0.1, 50) == pytest.approx(9 * math.sqrt(math.log(80) / 50))
    with pytest.raises(ValueError):
        epsilon_small_groups(2, 2, 0.1, 0)


def test_large_groups_finite_examples():
    assert epsilon_large_groups_finite(2, 2, 0.05, 0.25, 0.0, 4096, 1024) == 0.0
    val = epsilon_large_groups_finite(2, 2, 0.05, 0.25, 1.0, 4096, 1024)
    want = 36 ** (2 / 3) * math.log(8 * 4 / 0.05) ** (1 / 3) * (4096 / 0.25) ** (1 / 6) / math.sqrt(1024)
    assert val == pytest.approx(want, rel=1e-14)
    assert val == pytest.approx(3.19814940664, rel=1e-10)  # frozen from the line above
    assert val <= epsilon_large_groups_finite_cap(2, 2, 0.05, 0.25, 1.0, 1024) * (1 + 1e-12)
    # (n/gamma)^(1/6) scaling at fixed count
    a = epsilon_large_groups_finite(2, 2, 0.05, 0.25, 1.0, 4096, 4096)
    b = epsilon_large_groups_finite(2, 2, 0.05, 0.25, 1.0, 4096 * 64, 4096 * 16)
    assert b / a == pytest.approx(64 ** (1 / 6) / 4, rel=1e-12)


@given(st.integers(10, 10**6), st.floats(0.01, 1), st.floats(0.01, 1), st.floats(1.0, 50.0))
def test_large_groups_finite_below_cap(n, gamma, alpha, ratio):
    c = gamma * n * ratio
    v = epsilon_large_groups_finite(3, 3, 0.1, gamma, alpha, n, c)
    assert 0 <= v <= epsilon_large_groups_finite_cap(3, 3, 0.1, gamma, alpha, c) * (1 + 1e-12)


def test_large_groups_need_filtering():
    with pytest.raises(ValueError):
        epsilon_large_groups_finite(2, 2, 0.05, 0.5, 1.0, 100, 10)
    with pytest.raises(ValueError):
        epsilon_large_groups_pseudodim(1, 0.05, 0.5, 100, 10)
    with pytest.raises(ValueError):
        epsilon_large_groups_finite(2, 2, 0.05, 0.0, 1.0, 100, 10)


def test_pseudodim_examples():
    assert epsilon_large_groups_pseudodim(0, 0.05, 0.25, 4096, 1024) == 0.0
    v = epsilon_large_groups_pseudodim(1, 0.05, 0.25, 4096, 1024)
    want = (2 * 36 ** 2 * math.log(16 * 4096 / 0.05)) ** (1 / 3) * (4096 / 0.25) ** (1 / 6) / 32
    assert v == pytest.approx(want, rel=1e-14)
    assert v <= epsilon_large_groups_pseudodim_cap(1, 0.05, 0.25, 4096, 1024)
    v2 = epsilon_large_groups_pseudodim(2, 0.05, 0.25, 4096, 1024)
    assert v2 / v == pytest.approx(2 ** (1 / 3), rel=1e-12)


@given(st.integers(1, 500), st.integers(1, 500))
def test_schedules_nonincreasing_in_count(c1, c2):
    lo, hi = sorted((c1, c2))
    s = EpsilonSchedule.small(3, 2, 0.1)
    assert s([hi], 1000)[0] <= s([lo], 1000)[0]
    f = EpsilonSchedule.finite(3, 2, 0.1, 0.001)
    assert f([hi], 1000, alpha=0.3)[0] <= f([lo], 1000, alpha=0.3)[0]


def test_schedule_object():
    with pytest.raises(ValueError):
        EpsilonSchedule("medium")
    with pytest.raises(ValueError):
        EpsilonSchedule.small(2, 2, 1.5)
    with pytest.raises(ValueError):
        EpsilonSchedule.finite(2, 2, 0.1, 0.5)([10], 10)
    assert EpsilonSchedule.finite(2, 2, 0.1, 0.5, alpha=0.0)([10], 10)[0] == 0.0
    assert list(EpsilonSchedule.constant(0.25)([3, 4], 10)) == [0.25, 0.25]
    assert EpsilonSchedule.pseudodim(1, 0.1, 0.5)([10], 10)[0] > 0


# corollary scaffolding at desk scale ---------------------------------------

def test_sample_size_inverse():
    n = sample_size_for_excess(0.3, 0.2, 4, 3, 0.1)
    assert excess_for_sample_size(n, 0.2, 4, 3, 0.1) == pytest.approx(0.3, rel=1e-12)


def test_heavy_groups_clear_half_gamma():
    # at the sample size that gives excess eps, a group of mass gamma has
    # P_n(g) >= gamma / 2 on the lower confidence bound
    for gamma in (0.05, 0.2, 0.5):
        n = sample_size_for_excess(1.0, gamma, 3, 3, 0.1)
        assert empirical_mass_lower_bound(gamma, n, 3, 0.1) >= gamma / 2


def test_mass_lower_bound_holds_empirically():
    p, n, delta = 0.3, 400, 0.1
    lb = empirical_mass_lower_bound(p, n, 1, delta)
    draws = stream(11, "mass-lb").binomial(n, p, size=2000) / n
    assert np.mean(draws < lb) <= delta / 2


def test_inclusion_threshold_holds_empirically():
    gamma, n, delta = 0.2, 500, 0.1
    p = inclusion_mass_threshold(gamma, 3, delta, n)
    draws = stream(12, "inclusion").binomial(n, p, size=(2000, 3))
    missed = (draws < gamma * n).any(axis=1)
    assert missed.mean() <= delta


# group filtering -----------------------------------------------------------

def _counts_sample():
    # group 0 holds 10 rows, group 1 holds 5, group 2 none; n = 20
    pts = [0] * 10 + [1] * 5 + [2] * 5
    G = GroupFamily(np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1]]))
    return G, Sample(pts, [0] * 20)


def test_filter_groups_examples():
    G, s = _counts_sample()
    assert large_group_indices(G, s, 0.3) == [0]
    assert filter_groups(G, s, 0.3).names == ("g0",)
    assert large_group_indices(G, s, 1e-9) == [0, 1]
    assert filter_groups(G, s, 1.0) is None
    G2 = GroupFamily(np.array([[1, 1, 1, 0], [1, 0, 0, 0]]))
    assert large_group_indices(G2, s, 1.0) == [0]
    with pytest.raises(ValueError):
        filter_groups(G, s, 0.0)


# the learner ----------------------------------------------------------------

def test_correct_constant_needs_no_rounds():
    d = FiniteDistribution.deterministic([0.5, 0.5], [1, 1])
    H = HypothesisClass.constant(2, [0, 1])
    G = GroupFamily(np.array([[1, 0], [1, 1]]))
    tr = run_prepend(H, G, sample(d, 50, seed=1), LossSpec.zero_one(2), EpsilonSchedule.constant(0.01))
    assert tr.n_rounds == 0 and tr.final_list == DecisionList((), 1) and tr.alpha == 0.0
    assert tr.round_bound == 0


def test_two_point_single_prepend():
    d = FiniteDistribution.deterministic([0.75, 0.25], [1, 0], labels=(-1, 1))
    H = HypothesisClass.constant(2, [1, 0])  # const +1, const -1
    G = GroupFamily(np.array([[1, 1], [0, 1]]))
    s = Sample.exhaustive(d, G)
    loss = LossSpec.zero_one(2)
    tr = run_prepend(H, G, s, loss, EpsilonSchedule.constant(0.01))
    assert tr.h0 == 0
    assert tr.final_list == DecisionList(((1, 1),), 0)
    f = predict_table(tr.final_list, H, G)
    assert all(empirical_conditional_risk(f, G[g], s, loss) == 0 for g in range(2))
    oracle = fixtures.brute_force_optimum(H, G, s, loss)
    assert oracle.value == 0 and tr.excess().max() == oracle.value


def test_scenario_one_constant_slack():
    inst = fixtures.build_prop45_scenarios()[0]
    s = Sample.exhaustive(inst.dist, inst.G)
    tr = run_prepend(inst.H, inst.G, s, inst.loss, EpsilonSchedule.constant(0.01))
    assert tr.guarantee_holds(1e-12)
    pn = s.counts(inst.G) / s.n
    assert tr.n_rounds <= tr.alpha / (pn.min() * 0.01)
    assert tr.n_rounds <= tr.round_bound


def test_zero_slack_terminates():
    inst = fixtures.build_prop45_scenarios()[1]
    s = Sample.exhaustive(inst.dist, inst.G)
    tr = run_prepend(inst.H, inst.G, s, inst.loss, EpsilonSchedule.constant(0.0))
    assert tr.guarantee_holds(1e-12)
    assert math.isinf(tr.round_bound)


def test_bad_slack_rejected():
    inst = fixtures.build_prop45_scenarios()[0]
    s = Sample.exhaustive(inst.dist, inst.G)
    for v in (float("nan"), float("inf"), -0.1):
        with pytest.raises(ValueError):
            run_prepend(inst.H, inst.G, s, inst.loss, EpsilonSchedule.constant(v))
    empty = GroupFamily(np.array([[0, 0, 0]]))
    with pytest.raises(ValueError):
        run_prepend(inst.H, empty, s, inst.loss, EpsilonSchedule.constant(0.1))


def test_no_active_groups_gives_global_erm():
    inst = fixtures.build_prop45_scenarios()[0]
    s = sample(inst.dist, 100, seed=2)
    tr = run_prepend(inst.H, None, s, inst.loss, EpsilonSchedule.small(2, 2, 0.1))
    assert tr.n_rounds == 0 and tr.final_list.rules == ()


def test_trace_json():
    inst = fixtures.build_prop45_scenarios()[0]
    s = Sample.exhaustive(inst.dist, inst.G)
    tr = run_prepend(inst.H, inst.G, s, inst.loss, EpsilonSchedule.constant(0.01))
    obj = json.loads(json.dumps(tr.to_json()))
    assert obj["final_list"] == tr.final_list.to_json()
    assert len(obj["rounds"]) == tr.n_rounds


def _check_trace(tr, s, G_active, tol=1e-9):
    assert tr.guarantee_holds(tol)
    assert tr.n_rounds <= tr.round_bound
    pn = s.counts(G_active) / s.n
    for r in tr.rounds:
        # each prepend lowers the overall empirical risk by at least P_n(g) eps(g) >= eps_o
        assert r.risk_before - r.risk_after >= pn[r.group] * tr.eps[r.group] - tol
        assert r.risk_before - r.risk_after >= tr.eps_o - tol
        assert r.violation >= -tol


@given(instances(), st.integers(1, 500), st.integers(0, 10**6), st.sampled_from(["small", "constant", "finite"]))
def test_termination_and_guarantee(inst, n, seed, kind):
    dist, H, G, loss = inst
    s = sample(dist, n, seed, groups=G)
    idx = [g for g in range(len(G)) if s.counts(G)[g] > 0]
    if not idx:
        return
    Ga = G.subset(idx)
    if kind == "small":
        sch = EpsilonSchedule.small(len(H), len(G), 0.1)
    elif kind == "constant":
        sch = EpsilonSchedule.constant(0.02)
    else:
        gamma = float(s.counts(Ga).min() / s.n) * (1 - 1e-12)
        sch = EpsilonSchedule.finite(len(H), len(G), 0.1, gamma)
    _check_trace(run_prepend(H, Ga, s, loss, sch), s, Ga)


@given(instances(max_labels=2), st.integers(1, 300), st.integers(0, 10**6))
def test_numba_and_numpy_loops_agree(inst, n, seed):
    dist, H, G, loss = inst
    s = sample(dist, n, seed, groups=G)
    idx = [g for g in range(len(G)) if s.counts(G)[g] > 0]
    if not idx:
        return
    Ga = G.subset(idx)
    row_loss = np.ascontiguousarray(loss.table[H.tables[:, s.points], s.labels[None, :]])
    row_groups = np.ascontiguousarray(Ga.matrix[:, s.points])
    w = np.ones(len(s))
    counts = row_groups.astype(float) @ w
    eps = np.full(len(idx), 1 / 64)  # dyadic, so both summation orders are exact
    h0 = int(np.argmin(row_loss.sum(axis=1)))
    a = _kernels.prepend_loop_numba(row_loss, row_groups, w, counts, eps, h0, 10_000)
    b = _kernels.prepend_loop_numpy(row_loss, row_groups, w, counts, eps, h0, 10_000)
    for x, y in zip(a, b):
        assert np.allclose(x, y, atol=1e-12)
    py = _kernels._prepend_loop_py.py_func if hasattr(_kernels._prepend_loop_py, "py_func") else _kernels._prepend_loop_py
    c = py(row_loss, row_groups, w, counts, eps, h0, 10_000)
    assert np.array_equal(a[0], c[0]) and np.array_equal(a[1], c[1])


def test_ties_go_to_lowest_pair():
    # two hypotheses perfect on group 1, both tie with the same violation
    d = FiniteDistribution.deterministic([0.5, 0.5], [0, 1])
    H = HypothesisClass(np.array([[0, 0], [0, 1], [1, 1]]))
    G = GroupFamily(np.array([[0, 1], [0, 1]]))
    s = Sample.exhaustive(d, G)
    tr = run_prepend(H, G, s, LossSpec.zero_one(2), EpsilonSchedule.constant(0.0))
    assert tr.h0 == 1  # the only perfect hypothesis overall
    assert tr.n_rounds == 0
    H2 = HypothesisClass(np.array([[0, 0], [1, 1], [0, 1]]))
    tr2 = run_prepend(H2, G, s, LossSpec.zero_one(2), EpsilonSchedule.constant(0.0))
    assert tr2.h0 == 2


def test_budget_guard():
    inst = fixtures.build_prop45_scenarios()[0]
    s = Sample.exhaustive(inst.dist, inst.G)
    row_loss = np.ascontiguousarray(inst.loss.table[inst.H.tables[:, s.points], s.labels[None, :]])
    row_groups = np.ascontiguousarray(inst.G.matrix[:, s.points])
    counts = row_groups.astype(float) @ s.weights
    with pytest.raises(RuntimeError):
        _kernels.prepend_loop(row_loss, row_groups, np.ascontiguousarray(s.weights), counts, np.zeros(2), 1, 0)


def test_desk_instance_with_default_schedule():
    inst = fixtures.desk_instance()
    s = sample(inst.dist, 5000, seed=3, groups=inst.G)
    Ga = filter_groups(inst.G, s, 0.2)
    tr = run_prepend(inst.H, Ga, s, inst.loss, EpsilonSchedule.finite(3, 3, 0.1, 0.2))
    _check_trace(tr, s, Ga)


def test_random_instances_with_catchall_coverage(rng):
    for _ in range(20):
        dist, H, G, loss = make_instance(rng, 5, 3, 3, cover=True)
        s = sample(dist, 200, rng, groups=G)
        idx = [g for g in range(3) if s.counts(G)[g] > 0]
        Ga = G.subset(idx)
        _check_trace(run_prepend(H, Ga, s, loss, EpsilonSchedule.constant(0.05)), s, Ga)

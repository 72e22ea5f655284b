"""The Prepend learner and its per-group slack schedules."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core import GroupFamily, HypothesisClass, LossSpec, Sample
from .declist import DecisionList

SCHEDULE_KINDS = ("small", "finite", "pseudodim", "constant")
_ROUND_CAP = 1_000_000


def epsilon_small_groups(n_hypotheses: int, n_groups: int, delta: float, count_in_group):
    """Slack suited to few groups: ``9 sqrt((2(|G|+1) log(|H||G|) + log(8/delta)) / #)``."""
    c = np.asarray(count_in_group, dtype=float)
    if np.any(c <= 0):
        raise ValueError("group counts must be positive")
    D = 2.0 * (n_groups + 1) * math.log(n_hypotheses * n_groups) + math.log(8.0 / delta)
    return 9.0 * np.sqrt(D / c)


def epsilon_large_groups_finite(n_hypotheses, n_groups, delta, gamma, alpha, n, count_in_group):
    c = np.asarray(count_in_group, dtype=float)
    if not 0 < gamma <= 1 or not 0 <= alpha <= 1:
        raise ValueError("need 0 < gamma <= 1 and 0 <= alpha <= 1")
    if np.any(c < gamma * n):
        raise ValueError("group count below gamma * n; filter the groups first")
    scale = 36.0 ** (2.0 / 3.0) * (alpha * math.log(8.0 * n_groups * n_hypotheses / delta)) ** (1.0 / 3.0)
    return scale * (n / gamma) ** (1.0 / 6.0) / np.sqrt(c)


def epsilon_large_groups_finite_cap(n_hypotheses, n_groups, delta, gamma, alpha, count_in_group):
    c = np.asarray(count_in_group, dtype=float)
    return 36.0 ** (2.0 / 3.0) * (alpha * math.log(8.0 * n_groups * n_hypotheses / delta) / (gamma * c)) ** (1.0 / 3.0)


def epsilon_large_groups_pseudodim(d, delta, gamma, n, count_in_group):
    c = np.asarray(count_in_group, dtype=float)
    if not 0 < gamma <= 1 or d < 0:
        raise ValueError("need 0 < gamma <= 1 and d >= 0")
    if np.any(c < gamma * n):
        raise ValueError("group count below gamma * n; filter the groups first")
    scale = (2.0 * 36.0 ** 2 * d * math.log(16.0 * n / delta)) ** (1.0 / 3.0)
    return scale * (n / gamma) ** (1.0 / 6.0) / np.sqrt(c)


def epsilon_large_groups_pseudodim_cap(d, delta, gamma, n, count_in_group):
    c = np.asarray(count_in_group, dtype=float)
    return 14.0 * (d * math.log(16.0 * n / delta) / (gamma * c)) ** (1.0 / 3.0)


# population-level guarantees for the learned list

def large_groups_bound(n_hypotheses, n_groups, delta, gamma, count_in_group):
    """Excess-risk guarantee for finite classes run on the large groups."""
    c = np.asarray(count_in_group, dtype=float)
    return 22.0 * (math.log(8.0 * n_groups * n_hypotheses / delta) / (gamma * c)) ** (1.0 / 3.0)


def large_groups_pseudodim_bound(d, delta, gamma, n, count_in_group):
    c = np.asarray(count_in_group, dtype=float)
    return 28.0 * (d * math.log(16.0 * n / delta) / (gamma * c)) ** (1.0 / 3.0)


def small_groups_bound(n_hypotheses, n_groups, delta, count_in_group, eps):
    """``eps + 9 sqrt(...)``: the guarantee after running to convergence with slack ``eps``."""
    return np.asarray(eps) + epsilon_small_groups(n_hypotheses, n_groups, delta, count_in_group)


def inclusion_mass_threshold(gamma, n_groups, delta, n):
    """Groups with at least this much mass land among the large groups w.p. 1 - delta."""
    return gamma + math.sqrt(math.log(n_groups / delta) / n)


def sample_size_for_excess(eps, gamma, n_hypotheses, n_groups, delta):
    """Sample size after which every group's excess is at most ``eps``."""
    return 22.0 ** 3 * 4.0 / (eps ** 3 * gamma ** 2) * math.log(16.0 * n_groups * n_hypotheses / delta)


def excess_for_sample_size(n, gamma, n_hypotheses, n_groups, delta):
    """Inverse of :func:`sample_size_for_excess`."""
    return (22.0 ** 3 * 4.0 * math.log(16.0 * n_groups * n_hypotheses / delta) / (n * gamma ** 2)) ** (1.0 / 3.0)


def empirical_mass_lower_bound(p, n, n_groups, delta):
    """Lower confidence bound on ``P_n(g)`` holding for all groups w.p. 1 - delta/2."""
    return p - 2.0 * math.sqrt(p / n * math.log(16.0 * n_groups / delta))


@dataclass(frozen=True)
class EpsilonSchedule:
    """Which ``eps_n(g)`` to use, with its parameters.

    ``alpha=None`` for the ``finite`` kind means "use the empirical risk of
    the initial hypothesis", which is what the learner supplies.
    """

    kind: str
    n_hypotheses: int = 1
    n_groups: int = 1
    delta: float = 0.1
    gamma: float = 1.0
    alpha: float | None = None
    d: float = 0.0
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}; expected one of {SCHEDULE_KINDS}")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")

    @classmethod
    def small(cls, n_hypotheses, n_groups, delta):
        return cls("small", n_hypotheses, n_groups, delta)

    @classmethod
    def finite(cls, n_hypotheses, n_groups, delta, gamma, alpha=None):
        return cls("finite", n_hypotheses, n_groups, delta, gamma, alpha)

    @classmethod
    def pseudodim(cls, d, delta, gamma):
        return cls("pseudodim", delta=delta, gamma=gamma, d=d)

    @classmethod
    def constant(cls, value):
        return cls("constant", value=value)

    def __call__(self, counts, n, alpha=None) -> np.ndarray:
        counts = np.asarray(counts, dtype=float)
        if self.kind == "small":
            return epsilon_small_groups(self.n_hypotheses, self.n_groups, self.delta, counts)
        if self.kind == "finite":
            a = self.alpha if self.alpha is not None else alpha
            if a is None:
                raise ValueError("the finite schedule needs alpha")
            return epsilon_large_groups_finite(
                self.n_hypotheses, self.n_groups, self.delta, self.gamma, a, n, counts
            )
        if self.kind == "pseudodim":
            return epsilon_large_groups_pseudodim(self.d, self.delta, self.gamma, n, counts)
        return np.full(counts.shape, float(self.value))


def filter_groups(G: GroupFamily, s: Sample, gamma: float) -> GroupFamily | None:
    """The groups holding at least ``gamma * n`` sample rows, in their original order.

    Returns ``None`` when no group qualifies.
    """
    idx = large_group_indices(G, s, gamma)
    return G.subset(idx) if idx else None


def large_group_indices(G: GroupFamily, s: Sample, gamma: float) -> list[int]:
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    counts = s.counts(G)
    return [i for i in range(len(G)) if counts[i] > 0 and counts[i] >= gamma * s.n]


@dataclass(frozen=True)
class PrependRound:
    group: int
    hypothesis: int
    violation: float
    risk_before: float
    risk_after: float


@dataclass(frozen=True)
class PrependTrace:
    rounds: tuple[PrependRound, ...]
    final_list: DecisionList
    h0: int
    alpha: float
    eps: np.ndarray
    counts: np.ndarray
    n: float
    group_risk: np.ndarray = field(repr=False)
    benchmark_risk: np.ndarray = field(repr=False)

    @property
    def n_rounds(self) -> int:
        return len(self.rounds)

    @property
    def eps_o(self) -> float:
        if self.counts.size == 0:
            return math.inf
        return float(np.min(self.counts / self.n * self.eps))

    @property
    def round_bound(self) -> float:
        """``ceil(alpha / eps_o)``; infinite when some slack is zero and alpha > 0."""
        if self.alpha == 0:
            return 0
        if self.eps_o <= 0:
            return math.inf
        return math.ceil(self.alpha / self.eps_o)

    def excess(self) -> np.ndarray:
        """``L_n(f | g) - min_h L_n(h | g)`` for every active group."""
        return self.group_risk - self.benchmark_risk

    def guarantee_holds(self, tol: float = 1e-9) -> bool:
        return bool(np.all(self.excess() <= self.eps + tol))

    def to_json(self) -> dict:
        return {
            "h0": self.h0,
            "alpha": self.alpha,
            "eps": [float(v) for v in self.eps],
            "eps_o": self.eps_o if math.isfinite(self.eps_o) else None,
            "round_bound": self.round_bound if math.isfinite(self.round_bound) else None,
            "rounds": [
                {
                    "group": r.group,
                    "hypothesis": r.hypothesis,
                    "violation": r.violation,
                    "risk_before": r.risk_before,
                    "risk_after": r.risk_after,
                }
                for r in self.rounds
            ],
            "final_list": self.final_list.to_json(),
        }


def run_prepend(
    H: HypothesisClass,
    G_active: GroupFamily | None,
    s: Sample,
    loss: LossSpec,
    schedule: EpsilonSchedule,
) -> PrependTrace:
    """Learn a decision list by prepending the worst empirical violation until none remains.

    The argmax and stopping test use empirical risks. A round is taken when
    ``L_n(f|g) - L_n(h|g) - eps(g) >= 0`` for the maximizing pair, provided the
    prepend strictly lowers ``L_n(f|g)``; ties go to the lowest ``(g, h)``.
    """
    if len(H) == 0:
        raise ValueError("empty hypothesis class")
    H.check_loss(loss)
    row_loss = np.ascontiguousarray(loss.table[H.tables[:, s.points], s.labels[None, :]])
    w = np.ascontiguousarray(s.weights, dtype=np.float64)
    emp = row_loss @ w / s.n
    h0 = int(np.argmin(emp))
    alpha = float(emp[h0])

    if G_active is None:
        return PrependTrace((), DecisionList((), h0), h0, alpha, np.zeros(0), np.zeros(0), s.n,
                            np.zeros(0), np.zeros(0))

    row_groups = np.ascontiguousarray(G_active.matrix[:, s.points])
    counts = row_groups.astype(float) @ w
    if np.any(counts <= 0):
        raise ValueError("every active group needs at least one sample row")
    eps = np.asarray(schedule(counts, s.n, alpha=alpha), dtype=np.float64)
    if not np.all(np.isfinite(eps)) or np.any(eps < 0):
        raise ValueError(f"slack schedule produced invalid values {eps}")

    eps_o = float(np.min(counts / s.n * eps))
    if eps_o > 0:
        budget = min(_ROUND_CAP, 2 * math.ceil(alpha / eps_o) + 16)
    else:
        budget = _ROUND_CAP
    gs, hs, viol, before, after, f_risk, hyp_risk = _kernels.prepend_loop(
        row_loss, row_groups, w, np.ascontiguousarray(counts), eps, h0, budget
    )
    f = DecisionList((), h0)
    rounds = []
    for g, h, v, b, a in zip(gs, hs, viol, before, after):
        f = f.prepend(int(g), int(h))
        rounds.append(PrependRound(int(g), int(h), float(v), float(b), float(a)))
    return PrependTrace(
        rounds=tuple(rounds),
        final_list=f,
        h0=h0,
        alpha=alpha,
        eps=eps,
        counts=counts,
        n=s.n,
        group_risk=np.asarray(f_risk),
        benchmark_risk=np.asarray(hyp_risk).min(axis=1),
    )

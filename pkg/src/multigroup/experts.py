"""Sleeping-experts reduction: hedge over (hypothesis, group) experts, then online-to-batch.

Expert ``(h, g)`` is awake on ``x`` iff ``g(x) = 1`` and then predicts
``h(x)``. Weights are kept in log space; with ``c = 1 - exp(-eta)`` the
learner plays

    p_t(h, g) ∝ c[h, g] * w[h, g]   over awake experts

and awake experts update ``w <- w * exp(log(1 + c) * lhat_t - eta * loss_t(h))``.
Each awake term is at most ``w (1 + c (lhat_t - loss_t(h)))``, whose sum over
awake experts is ``sum w``, so the total weight never grows. Since
``log(1 + c)`` is within the needed margin of ``eta``, the regret
against every expert stays within ``(e - 1 + 1/eta) log N + (e - 1) eta L``.
The batch predictor averages the per-round distributions uniformly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import FiniteDistribution, GroupFamily, HypothesisClass, LossSpec, Sample
from .risk import EmptyGroupError, empirical_risk_table, point_loss_table, sleeping_experts_capacity
from .rng import as_generator

ETA_MIN = 1e-9


class UncoveredPointError(ValueError):
    """A stream point lies in no group, so no expert is awake."""


def selection_log_coef(eta) -> np.ndarray:
    """``log(1 - exp(-eta))``: log of the factor multiplying each weight when choosing."""
    return np.log(-np.expm1(-np.asarray(eta, dtype=np.float64)))


def update_gain(eta) -> np.ndarray:
    """``log(2 - exp(-eta))``: exponent applied to the mixture loss in the update."""
    return np.log1p(-np.expm1(-np.asarray(eta, dtype=np.float64)))


def set_learning_rates(H: HypothesisClass, G: GroupFamily, holdout: Sample) -> np.ndarray:
    """``min(sqrt(log(|H||G|) / sum_i g(x'_i)), 1)`` per expert, shape (|H|, |G|)."""
    if len(holdout) == 0:
        raise ValueError("holdout sample is empty")
    counts = holdout.counts(G)
    log_n = math.log(len(H) * len(G))
    with np.errstate(divide="ignore"):
        eta = np.where(counts > 0, np.sqrt(log_n / np.where(counts > 0, counts, 1.0)), 1.0)
    eta = np.clip(eta, ETA_MIN, 1.0)
    return np.tile(eta[None, :], (len(H), 1))


@dataclass(frozen=True, eq=False)
class ExpertState:
    log_weights: np.ndarray
    eta: np.ndarray
    cum_loss: np.ndarray
    cum_mixture_loss_awake: np.ndarray

    @classmethod
    def initial(cls, eta: np.ndarray) -> "ExpertState":
        eta = np.asarray(eta, dtype=float)
        if np.any(eta <= 0) or np.any(eta > 1):
            raise ValueError("learning rates must lie in (0, 1]")
        z = np.zeros(eta.shape)
        return cls(np.full(eta.shape, -math.log(eta.size)), eta, z, z.copy())

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def regret(self) -> np.ndarray:
        return self.cum_mixture_loss_awake - self.cum_loss


@dataclass(frozen=True, eq=False)
class InternalHypothesisLog:
    points: np.ndarray
    labels: np.ndarray
    probs: np.ndarray  # (T, |H|, |G|), zero on asleep experts
    mixture_loss: np.ndarray  # (T,)

    def __len__(self) -> int:
        return self.points.size


def _run_stream(state: ExpertState, points, labels, H, G, loss):
    awake = np.ascontiguousarray(G.matrix)
    try:
        snaps, probs, lhat, logw, cl, cm = _kernels.hedge_run(
            np.ascontiguousarray(points, dtype=np.int64),
            np.ascontiguousarray(labels, dtype=np.int64),
            awake,
            np.ascontiguousarray(H.tables),
            np.ascontiguousarray(loss.table),
            selection_log_coef(state.eta),
            update_gain(state.eta),
            np.ascontiguousarray(state.eta, dtype=np.float64),
            np.ascontiguousarray(state.log_weights, dtype=np.float64),
        )
    except ValueError as exc:
        if "uncovered" in str(exc):
            raise UncoveredPointError(str(exc)) from None
        raise
    new = ExpertState(logw, state.eta, state.cum_loss + cl, state.cum_mixture_loss_awake + cm)
    return new, snaps, probs, lhat


def hedge_round(state: ExpertState, x: int, y: int, H: HypothesisClass, G: GroupFamily, loss: LossSpec):
    """One round on ``(x, y)``: returns ``(p_t, lhat_t, new_state)``."""
    new, _, probs, lhat = _run_stream(state, [x], [y], H, G, loss)
    return probs[0], float(lhat[0]), new


@dataclass(frozen=True, eq=False)
class RandomizedPredictor:
    """Uniform mixture over the hedge's per-round internal hypotheses."""

    snapshots: np.ndarray  # log-weights before each round, (T, |H|, |G|)
    eta: np.ndarray
    H: HypothesisClass
    G: GroupFamily
    log: InternalHypothesisLog | None = None
    state: ExpertState | None = None
    seed: int = 0

    @property
    def n_rounds(self) -> int:
        return self.snapshots.shape[0]

    def point_distribution(self, t: int, x: int) -> np.ndarray:
        """``p_t(. ; x)`` over experts, shape (|H|, |G|)."""
        awake = self.G.matrix[:, x]
        if not awake.any():
            raise UncoveredPointError(f"point {x} lies in no group")
        s = np.where(awake[None, :], self.snapshots[t] + selection_log_coef(self.eta), -np.inf)
        p = np.exp(s - s.max())
        return p / p.sum()

    def predict(self, x: int, rng=None) -> int:
        rng = as_generator(self.seed if rng is None else rng)
        t = int(rng.integers(self.n_rounds))
        p = self.point_distribution(t, x).ravel()
        k = int(rng.choice(p.size, p=p))
        return int(self.H.tables[k // len(self.G), x])


def split_sample(s: Sample) -> tuple[Sample, Sample]:
    """Even rows feed the hedge, odd rows set the learning rates; ``floor(n/2)`` each."""
    m = len(s) // 2
    if m == 0:
        raise ValueError("need at least two rows to split")
    return s.take(np.arange(0, 2 * m, 2)), s.take(np.arange(1, 2 * m, 2))


def run_reduction(
    H: HypothesisClass,
    G: GroupFamily,
    s: Sample,
    seed: int = 0,
    loss: LossSpec | None = None,
    catch_all: bool = False,
) -> RandomizedPredictor:
    """Fit the randomized predictor. The fit is deterministic; ``seed`` seeds predictions."""
    if catch_all:
        G = G.with_catch_all()
    if loss is None:
        loss = LossSpec.zero_one(int(max(H.tables.max(), s.labels.max())) + 1)
    H.check_loss(loss)
    stream, holdout = split_sample(s)
    eta = set_learning_rates(H, G, holdout)
    state0 = ExpertState.initial(eta)
    state, snaps, probs, lhat = _run_stream(state0, stream.points, stream.labels, H, G, loss)
    log = InternalHypothesisLog(stream.points, stream.labels, probs, lhat)
    return RandomizedPredictor(snaps, eta, H, G, log, state, seed)


def snapshot_group_risks(q: RandomizedPredictor, groups, dist: FiniteDistribution, loss: LossSpec) -> np.ndarray:
    """``L(p_t | g)`` for every round and every group row, shape (T, k)."""
    gm = np.atleast_2d(np.asarray(groups)).astype(float)
    pg = gm @ dist.mass
    if np.any(pg <= 0):
        raise EmptyGroupError("zero-mass group")
    C = np.ascontiguousarray(point_loss_table(q.H, dist, loss))
    R = _kernels.snapshot_point_risk(
        np.ascontiguousarray(q.snapshots), selection_log_coef(q.eta), np.ascontiguousarray(q.G.matrix), C
    )
    return R @ (gm * dist.mass[None, :]).T / pg


def exact_risk_of_Q(q: RandomizedPredictor, g, dist: FiniteDistribution, loss: LossSpec):
    """``L(Q | g)`` with no sampling; ``g`` may be one indicator or a matrix of them."""
    per_round = snapshot_group_risks(q, g, dist, loss)
    out = per_round.mean(axis=0)
    return float(out[0]) if np.asarray(g).ndim == 1 else out


@dataclass(frozen=True, eq=False)
class RegretReport:
    regret: np.ndarray
    bound: np.ndarray
    cum_loss: np.ndarray
    eta: np.ndarray

    @property
    def violations(self) -> np.ndarray:
        return self.regret > self.bound + 1e-9

    @property
    def ok(self) -> bool:
        return not bool(self.violations.any())

    def rows(self, H: HypothesisClass, G: GroupFamily) -> list[dict]:
        return [
            {
                "hypothesis": H.names[h],
                "group": G.names[g],
                "eta": float(self.eta[h, g]),
                "regret": float(self.regret[h, g]),
                "bound": float(self.bound[h, g]),
                "violated": bool(self.violations[h, g]),
            }
            for h in range(self.regret.shape[0])
            for g in range(self.regret.shape[1])
        ]


def sleeping_regret_report(log: InternalHypothesisLog, state: ExpertState) -> RegretReport:
    """Awake-round regret of the mixture against each expert, next to its guarantee."""
    n_experts = state.eta.size
    e1 = math.e - 1.0
    bound = (e1 + 1.0 / state.eta) * math.log(n_experts) + e1 * state.eta * state.cum_loss
    return RegretReport(state.regret, bound, state.cum_loss, state.eta)


def sleeping_experts_bound(n_hypotheses, n_groups, delta, count_in_group):
    """``60 sqrt(D/#) + 16 D/#`` with the reduction's capacity ``D``."""
    D = sleeping_experts_capacity(n_hypotheses, n_groups, delta)
    c = np.asarray(count_in_group, dtype=float)
    return 60.0 * np.sqrt(D / c) + 16.0 * D / c


@dataclass(frozen=True)
class OnlineToBatchCheck:
    gap: np.ndarray
    bound: np.ndarray

    @property
    def ok(self) -> np.ndarray:
        return self.gap <= self.bound


def online_to_batch_check(q: RandomizedPredictor, groups, dist: FiniteDistribution, loss: LossSpec, delta: float):
    """Average population risk of the rounds minus their in-group empirical loss, per group."""
    if q.log is None:
        raise ValueError("predictor carries no round log")
    gm = np.atleast_2d(np.asarray(groups)).astype(bool)
    pg = gm.astype(float) @ dist.mass
    m = q.n_rounds
    per_round = snapshot_group_risks(q, gm, dist, loss)
    in_group = gm[:, q.log.points].astype(float) @ q.log.mixture_loss
    gap = per_round.mean(axis=0) - in_group / (m * pg)
    L = math.log(gm.shape[0] / delta)
    bound = np.sqrt(L / (m * pg)) + (2.0 / 3.0) * L / (m * pg)
    return OnlineToBatchCheck(gap, bound)


def two_stage_reduction(H: HypothesisClass, G: GroupFamily, s: Sample, loss: LossSpec, seed: int = 0):
    """Per-group ERM on one half, then the reduction over the ERM picks on the other half.

    Swaps the ``log|H|`` dependence for the per-group ERM's; no constants are claimed.
    """
    m = len(s) // 2
    first, second = s.take(np.arange(m)), s.take(np.arange(m, len(s)))
    risks = empirical_risk_table(H, G, first, loss)
    picks = []
    for g in range(len(G)):
        col = risks[:, g]
        picks.append(int(np.argmin(np.where(np.isnan(col), np.inf, col))))
    reduced = HypothesisClass(H.tables[sorted(set(picks))], names=tuple(H.names[i] for i in sorted(set(picks))))
    return run_reduction(reduced, G, second, seed=seed, loss=loss), picks

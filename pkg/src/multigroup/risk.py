"""Conditional risks on samples and distributions, and deviation bounds."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import FiniteDistribution, GroupFamily, HypothesisClass, LossSpec, Sample


class EmptyGroupError(ValueError):
    """A conditional risk was requested for a group with no mass."""


def _group_vector(g) -> np.ndarray:
    return np.asarray(g).astype(bool)


def empirical_conditional_risk(f, g, s: Sample, loss: LossSpec) -> float:
    """``L_n(f | g)``: the average loss of table ``f`` over sample rows inside ``g``."""
    f = np.asarray(f)
    inside = _group_vector(g)[s.points]
    count = float(s.weights[inside].sum())
    if count <= 0:
        raise EmptyGroupError("empty group: no sample rows fall inside it")
    losses = loss.table[f[s.points], s.labels]
    return float(s.weights[inside] @ losses[inside]) / count


def empirical_risk(f, s: Sample, loss: LossSpec) -> float:
    f = np.asarray(f)
    return float(s.weights @ loss.table[f[s.points], s.labels]) / s.n


def empirical_risk_table(H: HypothesisClass, G: GroupFamily, s: Sample, loss: LossSpec) -> np.ndarray:
    """``L_n(h | g)`` for every pair, shape (|H|, |G|); NaN where ``#_n(g) = 0``."""
    row_loss = loss.table[H.tables[:, s.points], s.labels[None, :]]
    gmat = G.matrix[:, s.points].astype(float)
    counts = gmat @ s.weights
    with np.errstate(invalid="ignore", divide="ignore"):
        return (row_loss * s.weights) @ gmat.T / np.where(counts > 0, counts, np.nan)


def population_conditional_risk(f, g, dist: FiniteDistribution, loss: LossSpec, exact: bool = False):
    """``L(f | g)`` computed as a finite sum over the domain.

    With ``exact=True`` the distribution's rational masses are used and a
    :class:`~fractions.Fraction` is returned.
    """
    f = np.asarray(f)
    gv = _group_vector(g)
    if exact:
        if not dist.is_exact:
            raise ValueError("distribution carries no exact masses")
        pg = sum((dist.exact_mass[x] for x in np.flatnonzero(gv)), Fraction(0))
        if pg == 0:
            raise EmptyGroupError("zero-mass group")
        acc = Fraction(0)
        for x in np.flatnonzero(gv):
            row = loss.table[f[x]]
            acc += dist.exact_mass[x] * sum(
                (p * Fraction(float(row[y])) for y, p in enumerate(dist.exact_label_dist[x])),
                Fraction(0),
            )
        return acc / pg
    pg = float(dist.mass[gv].sum())
    if pg <= 0:
        raise EmptyGroupError("zero-mass group")
    point_loss = (dist.label_dist * loss.table[f]).sum(axis=1)
    return float(dist.mass[gv] @ point_loss[gv]) / pg


def population_risk(f, dist: FiniteDistribution, loss: LossSpec) -> float:
    f = np.asarray(f)
    return float(dist.mass @ (dist.label_dist * loss.table[f]).sum(axis=1))


def point_loss_table(H: HypothesisClass, dist: FiniteDistribution, loss: LossSpec) -> np.ndarray:
    """Expected loss ``E_y[l(h(x), y) | x]`` for every hypothesis and point."""
    expected = loss.expected(dist.label_dist)  # (m, |Z|)
    return expected[np.arange(dist.n_points)[None, :], H.tables]


def population_risk_table(H: HypothesisClass, G: GroupFamily, dist: FiniteDistribution, loss: LossSpec) -> np.ndarray:
    """``L(h | g)`` for every pair, shape (|H|, |G|)."""
    pl = point_loss_table(H, dist, loss)
    gm = G.matrix * dist.mass[None, :]
    pg = gm.sum(axis=1)
    if np.any(pg <= 0):
        raise EmptyGroupError("zero-mass group")
    return pl @ gm.T / pg


def exact_risk_table(H: HypothesisClass, G: GroupFamily, dist: FiniteDistribution, loss: LossSpec):
    return [
        [population_conditional_risk(H[h], G[g], dist, loss, exact=True) for g in range(len(G))]
        for h in range(len(H))
    ]


# ---------------------------------------------------------------------------
# deviation bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeviationParams:
    """Capacity term ``D`` of the uniform conditional-risk deviation bound."""

    log_capacity: float
    delta: float
    n: int | None = None

    def __post_init__(self):
        if not self.log_capacity > 0:
            raise ValueError("D must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")


def deviation_bound(params: DeviationParams | float, count_in_group: float, empirical_risk: float) -> float:
    """``min(9 sqrt(D/#), 7 sqrt(D L_n/#) + 16 D/#)``."""
    D = params.log_capacity if isinstance(params, DeviationParams) else float(params)
    if count_in_group < 1:
        raise ValueError("count_in_group must be at least 1")
    if not 0.0 <= empirical_risk <= 1.0:
        raise ValueError("empirical risk must lie in [0, 1]")
    r = D / count_in_group
    return min(9.0 * math.sqrt(r), 7.0 * math.sqrt(r * empirical_risk) + 16.0 * r)


def deviation_bound_array(D: float, counts, empirical_risks) -> np.ndarray:
    r = D / np.asarray(counts, dtype=float)
    return np.minimum(9.0 * np.sqrt(r), 7.0 * np.sqrt(r * np.asarray(empirical_risks)) + 16.0 * r)


def finite_class_capacity(n_hypotheses: int, n_groups: int, delta: float) -> float:
    """``2 log(|H||G|) + log(8/delta)``."""
    if n_hypotheses < 1 or n_groups < 1:
        raise ValueError("class sizes must be at least 1")
    return 2.0 * math.log(n_hypotheses * n_groups) + math.log(8.0 / delta)


def pseudodim_capacity(d: float, n: int, delta: float) -> float:
    """``4 d log(2n) + log(8/delta)``, from the ``(2n)^(2d)`` growth bound."""
    if d < 0 or n < 1:
        raise ValueError("need d >= 0 and n >= 1")
    return 4.0 * d * math.log(2.0 * n) + math.log(8.0 / delta)


def sleeping_experts_capacity(n_hypotheses: int, n_groups: int, delta: float) -> float:
    """``2 log(|G||H|) + log(64/delta)``; the reduction's own constant."""
    return 2.0 * math.log(n_hypotheses * n_groups) + math.log(64.0 / delta)

"""Consistent-majority learner for the group-realizable binary setting.

Labels and predictions are ids into ``BINARY = (-1, +1)``: id 0 is -1 and
id 1 is +1. Zero-sum votes and points outside every group predict +1.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import GroupFamily, HypothesisClass, LossSpec, Sample
from .risk import empirical_risk_table

BINARY = (-1, 1)
BINARY_LOSS = LossSpec.zero_one(2, predictions=BINARY)
_SIGN = np.array(BINARY)


class NotGroupRealizableError(ValueError):
    """Some group has no hypothesis consistent with its sample rows."""

    def __init__(self, group_risks: dict):
        self.group_risks = group_risks
        detail = ", ".join(f"{g}: {r:.4g}" for g, r in group_risks.items())
        super().__init__(f"sample is not group-realizable; best empirical risk per offending group: {detail}")


@dataclass(frozen=True)
class MajorityPredictor:
    """``f(x) = sign(sum_g g(x) h_g(x))`` with ties and uncovered points at +1."""

    assignment: tuple[int, ...]
    H: HypothesisClass
    G: GroupFamily

    def votes(self) -> np.ndarray:
        """Vote sums at every point."""
        hv = _SIGN[self.H.tables[list(self.assignment)]]  # (|G|, m)
        return (self.G.matrix * hv).sum(axis=0)

    def predict_table(self) -> np.ndarray:
        """Prediction ids at every point."""
        return np.where(self.votes() >= 0, 1, 0)

    def to_json(self) -> dict:
        return {
            "assignment": {self.G.names[g]: int(h) for g, h in enumerate(self.assignment)},
            "hypothesis_names": list(self.H.names),
            "tie_value": 1,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))


def predict_majority(p: MajorityPredictor, x: int) -> int:
    """Label value in {-1, +1} at point ``x``."""
    total = sum(int(_SIGN[p.H.tables[h, x]]) for g, h in enumerate(p.assignment) if p.G.matrix[g, x])
    return 1 if total >= 0 else -1


def fit_consistent_majority(H: HypothesisClass, G: GroupFamily, s: Sample, check_realizable: bool = True) -> MajorityPredictor:
    """Per-group empirical risk minimizers combined by majority vote.

    Refuses samples on which some group has no consistent hypothesis, since
    the vote then carries no per-group guarantee.
    """
    if len(s) and (s.labels.min() < 0 or s.labels.max() > 1):
        raise ValueError("labels must be binary ids (0 for -1, 1 for +1)")
    if H.tables.max() > 1:
        raise ValueError("hypotheses must predict binary ids")
    counts = s.counts(G)
    empty = [G.names[g] for g in np.flatnonzero(counts <= 0)]
    if empty:
        raise ValueError(f"groups with no sample points: {empty}")
    risks = empirical_risk_table(H, G, s, BINARY_LOSS)
    assignment = tuple(int(np.argmin(risks[:, g])) for g in range(len(G)))
    if check_realizable:
        best = {G.names[g]: float(risks[assignment[g], g]) for g in range(len(G)) if risks[assignment[g], g] > 0}
        if best:
            raise NotGroupRealizableError(best)
    return MajorityPredictor(assignment, H, G)


def all_majority_predictors(H: HypothesisClass, G: GroupFamily):
    """Every predictor the learner can output: one per group-to-hypothesis assignment."""
    for assignment in itertools.product(range(len(H)), repeat=len(G)):
        yield MajorityPredictor(tuple(assignment), H, G)


def consistent_majority_bound(n_hypotheses: int, n_groups: int, delta: float, count_in_group):
    """``16 (2 log(|G|^2 |H|) + log(8/delta)) / #``."""
    c = np.asarray(count_in_group, dtype=float)
    return 16.0 * (2.0 * math.log(n_groups ** 2 * n_hypotheses) + math.log(8.0 / delta)) / c

"""Multi-group agnostic learning on finite domains.

Three learners share one tabular world model: ``prepend`` builds decision
lists over (group, hypothesis) rules, ``experts`` runs a sleeping-experts
reduction to a randomized predictor, and ``realizable`` combines per-group
consistent hypotheses by majority vote.
"""
from ._kernels import backend
from .core import (
    FiniteDistribution,
    GroupFamily,
    HypothesisClass,
    InstanceError,
    LossSpec,
    Sample,
    sample,
)
from .declist import DecisionList, canonicalize, enumerate_canonical, evaluate, predict_table
from .experts import RandomizedPredictor, exact_risk_of_Q, run_reduction, sleeping_regret_report
from .prepend import EpsilonSchedule, filter_groups, run_prepend
from .realizable import MajorityPredictor, fit_consistent_majority, predict_majority
from .risk import (
    deviation_bound,
    empirical_conditional_risk,
    population_conditional_risk,
)

__version__ = "0.1.0"

__all__ = [
    "DecisionList",
    "EpsilonSchedule",
    "FiniteDistribution",
    "GroupFamily",
    "HypothesisClass",
    "InstanceError",
    "LossSpec",
    "MajorityPredictor",
    "RandomizedPredictor",
    "Sample",
    "backend",
    "canonicalize",
    "deviation_bound",
    "empirical_conditional_risk",
    "enumerate_canonical",
    "evaluate",
    "exact_risk_of_Q",
    "filter_groups",
    "fit_consistent_majority",
    "population_conditional_risk",
    "predict_majority",
    "predict_table",
    "run_prepend",
    "run_reduction",
    "sample",
    "sleeping_regret_report",
]

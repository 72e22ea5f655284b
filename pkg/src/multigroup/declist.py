"""Decision lists whose tests are groups and whose leaves are hypotheses."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .core import GroupFamily, HypothesisClass


@dataclass(frozen=True)
class DecisionList:
    """``rules[0]`` is the outermost test; ``default`` predicts when no group fires.

    Rules are ``(group index, hypothesis index)`` pairs into shared tables.
    """

    rules: tuple[tuple[int, int], ...] = ()
    default: int = 0

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple((int(g), int(h)) for g, h in self.rules))
        object.__setattr__(self, "default", int(self.default))

    def __len__(self) -> int:
        return len(self.rules)

    def prepend(self, g: int, h: int) -> "DecisionList":
        return DecisionList(((g, h),) + self.rules, self.default)

    def is_canonical(self) -> bool:
        gs = [g for g, _ in self.rules]
        return len(gs) == len(set(gs))

    def check(self, H: HypothesisClass, G: GroupFamily) -> None:
        if not 0 <= self.default < len(H):
            raise IndexError(f"default hypothesis {self.default} out of range")
        for g, h in self.rules:
            if not 0 <= g < len(G):
                raise IndexError(f"group index {g} out of range")
            if not 0 <= h < len(H):
                raise IndexError(f"hypothesis index {h} out of range")

    def to_json(self) -> dict:
        return {"rules": [list(r) for r in self.rules], "default": self.default}

    @classmethod
    def from_json(cls, obj: dict) -> "DecisionList":
        return cls(tuple(tuple(r) for r in obj["rules"]), obj["default"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path) -> "DecisionList":
        return cls.from_json(json.loads(Path(path).read_text()))


def evaluate(f: DecisionList, x: int, H: HypothesisClass, G: GroupFamily) -> int:
    """Prediction id of ``f`` at point ``x``: the first firing rule wins."""
    f.check(H, G)
    if not 0 <= x < H.n_points:
        raise IndexError(f"point {x} out of range")
    for g, h in f.rules:
        if G.matrix[g, x]:
            return int(H.tables[h, x])
    return int(H.tables[f.default, x])


def predict_table(f: DecisionList, H: HypothesisClass, G: GroupFamily) -> np.ndarray:
    """Predictions of ``f`` at every point of the domain."""
    f.check(H, G)
    out = H.tables[f.default].copy()
    for g, h in reversed(f.rules):
        sel = G.matrix[g]
        out[sel] = H.tables[h, sel]
    return out


def canonicalize(f: DecisionList) -> DecisionList:
    """Drop every rule shadowed by an earlier rule on the same group."""
    seen = set()
    kept = []
    for g, h in f.rules:
        if g not in seen:
            seen.add(g)
            kept.append((g, h))
    return DecisionList(tuple(kept), f.default)


def canonical_count(n_hypotheses: int, n_groups: int, max_len: int) -> int:
    return sum(math.perm(n_groups, k) * n_hypotheses ** (k + 1) for k in range(max_len + 1))


def enumerate_canonical(H: HypothesisClass | int, G: GroupFamily | int, max_len: int) -> Iterator[DecisionList]:
    """Every decision list with at most ``max_len`` rules on distinct groups."""
    nH = H if isinstance(H, int) else len(H)
    nG = G if isinstance(G, int) else len(G)
    if max_len > nG:
        raise ValueError("max_len cannot exceed the number of groups")
    for k in range(max_len + 1):
        for groups in itertools.permutations(range(nG), k):
            for hyps in itertools.product(range(nH), repeat=k + 1):
                yield DecisionList(tuple(zip(groups, hyps[:k])), hyps[k])

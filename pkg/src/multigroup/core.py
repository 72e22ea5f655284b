"""Finite domains, label distributions, loss tables, hypothesis and group families.

Everything here is a tabular object over a finite domain of point ids
``0..m-1``. Labels and predictions are integer ids into finite spaces; the
actual label values (e.g. ``(-1, 1)``) are carried alongside for the places
that need them (majority votes, multiaccuracy).
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .rng import as_generator

MASS_TOL = 1e-12


class InstanceError(ValueError):
    """Raised for malformed distributions, tables or samples."""


def _as_fraction(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, str):
        return Fraction(v)
    if isinstance(v, (int, np.integer)):
        return Fraction(int(v))
    return Fraction(float(v))


@dataclass(frozen=True, eq=False)
class FiniteDistribution:
    """Joint distribution over a finite domain and a finite label space.

    ``mass[x]`` is the marginal probability of point ``x`` and
    ``label_dist[x, y]`` the conditional probability of label id ``y``.
    ``exact_mass`` / ``exact_label_dist`` optionally hold the same numbers as
    :class:`fractions.Fraction` so that fixture claims can be checked exactly.
    """

    mass: np.ndarray
    label_dist: np.ndarray
    labels: tuple = (0, 1)
    exact_mass: tuple | None = None
    exact_label_dist: tuple | None = None

    def __post_init__(self):
        mass = np.asarray(self.mass, dtype=np.float64)
        ld = np.asarray(self.label_dist, dtype=np.float64)
        if mass.ndim != 1 or mass.size == 0:
            raise InstanceError("mass must be a nonempty vector")
        if ld.shape != (mass.size, len(self.labels)):
            raise InstanceError(
                f"label_dist has shape {ld.shape}, expected {(mass.size, len(self.labels))}"
            )
        if np.any(mass < 0) or not np.all(np.isfinite(mass)):
            raise InstanceError("masses must be finite and nonnegative")
        if abs(mass.sum() - 1.0) > MASS_TOL:
            raise InstanceError(f"masses sum to {mass.sum()!r}, not 1")
        if np.any(ld < 0) or np.any(np.abs(ld.sum(axis=1) - 1.0) > MASS_TOL):
            raise InstanceError("every label_dist row must be a probability vector")
        mass.setflags(write=False)
        ld.setflags(write=False)
        object.__setattr__(self, "mass", mass)
        object.__setattr__(self, "label_dist", ld)
        object.__setattr__(self, "labels", tuple(self.labels))
        if self.exact_mass is not None:
            em = tuple(_as_fraction(v) for v in self.exact_mass)
            el = tuple(tuple(_as_fraction(v) for v in row) for row in self.exact_label_dist)
            if sum(em) != 1 or any(sum(row) != 1 for row in el):
                raise InstanceError("exact masses / label rows must sum to exactly 1")
            object.__setattr__(self, "exact_mass", em)
            object.__setattr__(self, "exact_label_dist", el)

    @classmethod
    def from_fractions(cls, mass: Sequence, label_dist: Sequence[Sequence], labels=(0, 1)):
        em = [_as_fraction(v) for v in mass]
        el = [[_as_fraction(v) for v in row] for row in label_dist]
        return cls(
            mass=np.array([float(v) for v in em]),
            label_dist=np.array([[float(v) for v in row] for row in el]),
            labels=labels,
            exact_mass=em,
            exact_label_dist=el,
        )

    @classmethod
    def deterministic(cls, mass, label_ids, labels=(0, 1)):
        """Distribution whose label is a fixed function of the point."""
        label_ids = np.asarray(label_ids)
        ld = np.zeros((len(label_ids), len(labels)))
        ld[np.arange(len(label_ids)), label_ids] = 1.0
        return cls(mass=np.asarray(mass, dtype=float), label_dist=ld, labels=labels)

    @property
    def n_points(self) -> int:
        return self.mass.size

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    @property
    def points(self) -> list[int]:
        return list(range(self.n_points))

    @property
    def is_exact(self) -> bool:
        return self.exact_mass is not None

    def conditional_label_dist(self, point: int) -> np.ndarray:
        if not 0 <= point < self.n_points:
            raise IndexError(f"point {point} outside domain of size {self.n_points}")
        return self.label_dist[point]

    def group_mass(self, group) -> float:
        return float(self.mass @ np.asarray(group, dtype=float))

    # serialization -----------------------------------------------------

    def to_json(self) -> dict:
        out = {
            "points": self.points,
            "mass": [float(v) for v in self.mass],
            "labels": list(self.labels),
            "label_dist": [[float(v) for v in row] for row in self.label_dist],
        }
        if self.is_exact:
            out["exact"] = {
                "mass": [str(v) for v in self.exact_mass],
                "label_dist": [[str(v) for v in row] for row in self.exact_label_dist],
            }
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "FiniteDistribution":
        mass = obj["mass"]
        if list(obj.get("points", range(len(mass)))) != list(range(len(mass))):
            raise InstanceError("points must be the ids 0..m-1 in order")
        exact = obj.get("exact")
        return cls(
            mass=np.array(mass, dtype=np.float64),
            label_dist=np.array(obj["label_dist"], dtype=np.float64),
            labels=tuple(obj["labels"]),
            exact_mass=exact["mass"] if exact else None,
            exact_label_dist=exact["label_dist"] if exact else None,
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path) -> "FiniteDistribution":
        return cls.from_json(json.loads(Path(path).read_text()))


def conditional_label_dist(dist: FiniteDistribution, point: int) -> np.ndarray:
    return dist.conditional_label_dist(point)


@dataclass(frozen=True, eq=False)
class LossSpec:
    """Loss table ``table[z, y]`` with entries in [0, 1].

    ``predictions`` names the prediction values (defaults to the ids).
    """

    table: np.ndarray
    predictions: tuple | None = None

    def __post_init__(self):
        t = np.asarray(self.table, dtype=np.float64)
        if t.ndim != 2:
            raise InstanceError("loss table must be 2-d")
        if np.any(t < 0) or np.any(t > 1) or not np.all(np.isfinite(t)):
            raise InstanceError("loss entries must lie in [0, 1]")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)
        if self.predictions is None:
            object.__setattr__(self, "predictions", tuple(range(t.shape[0])))

    @classmethod
    def zero_one(cls, k: int, predictions=None) -> "LossSpec":
        return cls(1.0 - np.eye(k), predictions=predictions)

    @property
    def n_predictions(self) -> int:
        return self.table.shape[0]

    def expected(self, label_dist: np.ndarray) -> np.ndarray:
        """Expected loss of every prediction at every point: shape (m, |Z|)."""
        return label_dist @ self.table.T


@dataclass(frozen=True, eq=False)
class HypothesisClass:
    """Finite class of tabular predictors; ``tables[h, x]`` is a prediction id."""

    tables: np.ndarray
    names: tuple | None = None

    def __post_init__(self):
        t = np.asarray(self.tables)
        if t.ndim != 2 or t.shape[0] == 0 or t.shape[1] == 0:
            raise InstanceError("hypothesis class must be a nonempty 2-d table")
        if not np.issubdtype(t.dtype, np.integer):
            if not np.all(t == np.round(t)):
                raise InstanceError("hypothesis tables must hold integer prediction ids")
        t = t.astype(np.int64)
        if np.any(t < 0):
            raise InstanceError("prediction ids must be nonnegative")
        t.setflags(write=False)
        object.__setattr__(self, "tables", t)
        if self.names is None:
            object.__setattr__(self, "names", tuple(f"h{i}" for i in range(t.shape[0])))

    def __len__(self) -> int:
        return self.tables.shape[0]

    def __getitem__(self, i) -> np.ndarray:
        return self.tables[i]

    @property
    def n_points(self) -> int:
        return self.tables.shape[1]

    def check_loss(self, loss: LossSpec) -> None:
        if self.tables.max() >= loss.n_predictions:
            raise InstanceError("hypothesis predicts an id outside the loss table")

    @classmethod
    def constant(cls, n_points: int, prediction_ids: Sequence[int], names=None):
        return cls(np.tile(np.asarray(prediction_ids)[:, None], (1, n_points)), names=names)


@dataclass(frozen=True, eq=False)
class GroupFamily:
    """Finite family of group indicators; ``matrix[g, x]`` is 0 or 1."""

    matrix: np.ndarray
    names: tuple | None = None

    def __post_init__(self):
        g = np.asarray(self.matrix)
        if g.ndim != 2 or g.shape[0] == 0:
            raise InstanceError("group family must be a nonempty 2-d table")
        if not np.all((g == 0) | (g == 1)):
            raise InstanceError("group indicators must be 0/1")
        g = g.astype(bool)
        g.setflags(write=False)
        object.__setattr__(self, "matrix", g)
        if self.names is None:
            object.__setattr__(self, "names", tuple(f"g{i}" for i in range(g.shape[0])))

    def __len__(self) -> int:
        return self.matrix.shape[0]

    def __getitem__(self, i) -> np.ndarray:
        return self.matrix[i]

    @property
    def n_points(self) -> int:
        return self.matrix.shape[1]

    def subset(self, idx: Sequence[int]) -> "GroupFamily":
        idx = list(idx)
        if not idx:
            raise InstanceError("empty group subset")
        return GroupFamily(self.matrix[idx], names=tuple(self.names[i] for i in idx))

    def with_catch_all(self) -> "GroupFamily":
        rows = np.vstack([self.matrix, np.ones((1, self.n_points), dtype=bool)])
        return GroupFamily(rows, names=self.names + ("all",))

    def validate_for(self, dist: FiniteDistribution) -> None:
        if self.n_points != dist.n_points:
            raise InstanceError("group tables and distribution disagree on domain size")
        pg = self.matrix.astype(float) @ dist.mass
        bad = [self.names[i] for i in np.flatnonzero(pg <= 0)]
        if bad:
            raise InstanceError(f"groups with zero mass: {bad}")


@dataclass(frozen=True, eq=False)
class Sample:
    """A list of (point id, label id) rows, optionally weighted.

    Unweighted samples have unit weights, so ``n`` and the group counts are
    integers. A weighted sample (see :meth:`exhaustive`) stands in for the
    population: ratios such as ``L_n(f | g)`` then equal the exact risks.
    """

    points: np.ndarray
    labels: np.ndarray
    weights: np.ndarray | None = None
    index: np.ndarray | None = None
    groups: GroupFamily | None = None
    group_counts: np.ndarray | None = field(default=None)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.int64)
        lab = np.asarray(self.labels, dtype=np.int64)
        if pts.shape != lab.shape or pts.ndim != 1:
            raise InstanceError("points and labels must be equal-length vectors")
        w = np.ones(pts.size) if self.weights is None else np.asarray(self.weights, dtype=float)
        if w.shape != pts.shape or np.any(w < 0):
            raise InstanceError("weights must be a nonnegative vector matching the rows")
        idx = np.arange(pts.size) if self.index is None else np.asarray(self.index, dtype=np.int64)
        for a in (pts, lab, w, idx):
            a.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "index", idx)
        if self.groups is not None:
            counts = self.counts(self.groups)
            counts.setflags(write=False)
            object.__setattr__(self, "group_counts", counts)

    def __len__(self) -> int:
        return self.points.size

    @property
    def n(self) -> float:
        """Total weight; the row count for unweighted samples."""
        return float(self.weights.sum())

    @property
    def weighted(self) -> bool:
        return not np.all(self.weights == 1.0)

    def counts(self, groups: GroupFamily) -> np.ndarray:
        """``#_n(g)`` for every group."""
        if len(self) == 0:
            return np.zeros(len(groups))
        return groups.matrix[:, self.points].astype(float) @ self.weights

    def with_groups(self, groups: GroupFamily) -> "Sample":
        return Sample(self.points, self.labels, self.weights, self.index, groups=groups)

    def take(self, rows) -> "Sample":
        rows = np.asarray(rows, dtype=np.int64)
        return Sample(
            self.points[rows], self.labels[rows], self.weights[rows], self.index[rows],
            groups=self.groups,
        )

    @classmethod
    def exhaustive(cls, dist: FiniteDistribution, groups: GroupFamily | None = None) -> "Sample":
        """One row per (point, label) pair with positive probability, weighted by it."""
        xs, ys = np.nonzero(dist.label_dist > 0)
        w = dist.mass[xs] * dist.label_dist[xs, ys]
        keep = w > 0
        return cls(xs[keep], ys[keep], weights=w[keep], groups=groups)

    # serialization -----------------------------------------------------

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            cols = ["index", "point_id", "label_id"] + (["weight"] if self.weighted else [])
            writer.writerow(cols)
            for i in range(len(self)):
                row = [int(self.index[i]), int(self.points[i]), int(self.labels[i])]
                if self.weighted:
                    row.append(repr(float(self.weights[i])))
                writer.writerow(row)

    @classmethod
    def from_csv(cls, path, groups: GroupFamily | None = None) -> "Sample":
        idx, pts, lab, w = [], [], [], []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            for lineno, row in enumerate(reader, start=2):
                try:
                    idx.append(int(row["index"]))
                    pts.append(int(row["point_id"]))
                    lab.append(int(row["label_id"]))
                    w.append(float(row["weight"]) if row.get("weight") else 1.0)
                except (KeyError, TypeError, ValueError) as exc:
                    raise InstanceError(f"{path}:{lineno}: malformed row {row!r}") from exc
        return cls(pts, lab, weights=w, index=idx, groups=groups)


def sample(dist: FiniteDistribution, n: int, seed, groups: GroupFamily | None = None) -> Sample:
    """Draw ``n`` i.i.d. labelled points from ``dist``."""
    if n < 1:
        raise InstanceError("sample size must be at least 1")
    rng = as_generator(seed)
    pts = rng.choice(dist.n_points, size=n, p=dist.mass)
    u = rng.random(n)
    cum = np.cumsum(dist.label_dist, axis=1)
    cum = (cum / cum[:, -1:])[pts]
    labels = (u[:, None] >= cum).sum(axis=1)
    return Sample(pts, labels, groups=groups)


# table files ------------------------------------------------------------

def load_table(path) -> list[list[int]]:
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict):
        return data
    if not isinstance(data, list) or not all(isinstance(r, list) for r in data):
        raise InstanceError(f"{path}: expected a JSON array of integer vectors")
    return data


def load_hypotheses(path) -> HypothesisClass:
    data = load_table(path)
    if isinstance(data, dict):
        return HypothesisClass(np.array(data["tables"]), names=tuple(data.get("names") or ()) or None)
    return HypothesisClass(np.array(data))


def load_groups(path) -> GroupFamily:
    data = load_table(path)
    if isinstance(data, dict):
        return GroupFamily(np.array(data["groups"]), names=tuple(data.get("names") or ()) or None)
    return GroupFamily(np.array(data))


def save_hypotheses(H: HypothesisClass, path) -> None:
    Path(path).write_text(json.dumps([[int(v) for v in row] for row in H.tables]))


def save_groups(G: GroupFamily, path) -> None:
    Path(path).write_text(json.dumps([[int(v) for v in row] for row in G.matrix]))

"""Additive SHAP attributions for trees and forests, plus mean-|SHAP| summaries.

Two routes to the same numbers: :func:`brute_force_shap` evaluates the exact
Shapley sum over all subsets of a tree's used features (exponential, capped),
while :func:`treeshap` runs the polynomial path-dependent algorithm.  Both
use training covers as the background distribution, so no background dataset
is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError
from .graph import FeatureRef
from .tree import DecisionTree

BRUTE_FORCE_FEATURE_CAP = 20


@dataclass
class ShapExplanation:
    """Per-feature additive attributions for one prediction.

    ``baseline + sum(values)`` equals the model's prediction for the row.
    """

    baseline: float
    values: dict[FeatureRef, float]

    @property
    def prediction(self) -> float:
        return self.baseline + sum(self.values.values())


@dataclass
class ImportanceSummary:
    """Mean absolute attribution per feature, and per node summed over modalities."""

    per_feature: dict[FeatureRef, float]
    per_node: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.per_node:
            acc: dict[int, float] = {}
            for (nid, _mid), v in self.per_feature.items():
                acc[nid] = acc.get(nid, 0.0) + v
            self.per_node = acc


def _goes_left(tree: DecisionTree, node: int, value: float) -> bool:
    if np.isnan(value):
        lc = tree.cover(int(tree.left[node]))
        rc = tree.cover(int(tree.right[node]))
        return lc >= rc
    return value <= tree.threshold[node]


def conditional_expectation(tree: DecisionTree, row: np.ndarray, feature_subset) -> float:
    """Path-dependent expected prediction conditioned on a feature subset.

    At a split on a subset feature the row's branch is followed; otherwise
    both children are averaged with their training-cover weights.  ``row``
    is aligned with ``tree.pool``; the subset holds pool indices.
    """
    row = np.asarray(row, dtype=np.float64)
    subset = frozenset(feature_subset)

    def rec(node: int) -> float:
        if tree.is_leaf(node):
            return tree.leaf_probability(node)
        j = int(tree.feature[node])
        li, ri = int(tree.left[node]), int(tree.right[node])
        if j in subset:
            return rec(li if _goes_left(tree, node, row[j]) else ri)
        lc, rc = tree.cover(li), tree.cover(ri)
        return (lc * rec(li) + rc * rec(ri)) / (lc + rc)

    return rec(0)


def expected_value(tree: DecisionTree) -> float:
    """Cover-weighted mean leaf probability (the empty-subset expectation)."""

    def rec(node: int) -> float:
        if tree.is_leaf(node):
            return tree.leaf_probability(node)
        li, ri = int(tree.left[node]), int(tree.right[node])
        lc, rc = tree.cover(li), tree.cover(ri)
        return (lc * rec(li) + rc * rec(ri)) / (lc + rc)

    return rec(0)


def brute_force_shap(tree: DecisionTree, row: np.ndarray) -> ShapExplanation:
    """Exact Shapley values over the tree's used features (oracle).

    Features absent from every split are null players with attribution 0.
    Raises when the tree uses more than BRUTE_FORCE_FEATURE_CAP features.
    """
    row = np.asarray(row, dtype=np.float64)
    used = tree.used_features()
    u = len(used)
    if u > BRUTE_FORCE_FEATURE_CAP:
        raise DataError(f"tree uses {u} features, brute force capped at {BRUTE_FORCE_FEATURE_CAP}")

    # Game value per subset bitmask over `used`.
    value = np.empty(1 << u, dtype=np.float64)
    for mask in range(1 << u):
        subset = [used[i] for i in range(u) if mask >> i & 1]
        value[mask] = conditional_expectation(tree, row, subset)

    fact = [math.factorial(i) for i in range(u + 1)]
    phi = {ref: 0.0 for ref in tree.pool}
    for i, j in enumerate(used):
        total = 0.0
        for mask in range(1 << u):
            if mask >> i & 1:
                continue
            s = bin(mask).count("1")
            weight = fact[s] * fact[u - 1 - s] / fact[u]
            total += weight * (value[mask | (1 << i)] - value[mask])
        phi[tree.pool[j]] = total
    return ShapExplanation(baseline=float(value[0]), values=phi)


# -- polynomial path-dependent algorithm ---------------------------------------


class _Path:
    """Feature path with subset-size weights, per the path-dependent recursion."""

    __slots__ = ("d", "zero", "one", "w")

    def __init__(self):
        self.d: list[int] = []
        self.zero: list[float] = []
        self.one: list[float] = []
        self.w: list[float] = []

    def copy(self) -> "_Path":
        p = _Path.__new__(_Path)
        p.d = self.d.copy()
        p.zero = self.zero.copy()
        p.one = self.one.copy()
        p.w = self.w.copy()
        return p

    def extend(self, pz: float, po: float, pi: int) -> None:
        l = len(self.d)
        self.d.append(pi)
        self.zero.append(pz)
        self.one.append(po)
        self.w.append(1.0 if l == 0 else 0.0)
        for i in range(l - 1, -1, -1):
            self.w[i + 1] += po * self.w[i] * (i + 1) / (l + 1)
            self.w[i] = pz * self.w[i] * (l - i) / (l + 1)

    def unwind(self, i: int) -> None:
        length = len(self.d)
        one = self.one[i]
        zero = self.zero[i]
        n = self.w[length - 1]
        for j in range(length - 2, -1, -1):
            if one != 0.0:
                t = self.w[j]
                self.w[j] = n * length / ((j + 1) * one)
                n = t - self.w[j] * zero * (length - 1 - j) / length
            else:
                self.w[j] = self.w[j] * length / (zero * (length - 1 - j))
        del self.d[i], self.zero[i], self.one[i]
        self.w.pop()

    def unwound_sum(self, i: int) -> float:
        """Sum of weights after hypothetically unwinding entry i (no mutation)."""
        length = len(self.d)
        one = self.one[i]
        zero = self.zero[i]
        n = self.w[length - 1]
        total = 0.0
        for j in range(length - 2, -1, -1):
            if one != 0.0:
                t = n * length / ((j + 1) * one)
                total += t
                n = self.w[j] - t * zero * (length - 1 - j) / length
            else:
                total += self.w[j] * length / (zero * (length - 1 - j))
        return total

    def find(self, feature: int) -> int:
        for i in range(1, len(self.d)):
            if self.d[i] == feature:
                return i
        return -1


def treeshap(tree: DecisionTree, row: np.ndarray) -> ShapExplanation:
    """Path-dependent SHAP values for one row, polynomial in tree size.

    Matches :func:`brute_force_shap` to within numerical noise wherever the
    oracle is feasible.
    """
    row = np.asarray(row, dtype=np.float64)
    phi = {ref: 0.0 for ref in tree.pool}

    def recurse(node: int, path: _Path, pz: float, po: float, pi: int) -> None:
        path = path.copy()
        path.extend(pz, po, pi)
        if tree.is_leaf(node):
            leaf_value = tree.leaf_probability(node)
            for i in range(1, len(path.d)):
                w = path.unwound_sum(i)
                ref = tree.pool[path.d[i]]
                phi[ref] += w * (path.one[i] - path.zero[i]) * leaf_value
            return
        j = int(tree.feature[node])
        li, ri = int(tree.left[node]), int(tree.right[node])
        hot, cold = (li, ri) if _goes_left(tree, node, row[j]) else (ri, li)
        iz, io = 1.0, 1.0
        k = path.find(j)
        if k >= 0:
            iz, io = path.zero[k], path.one[k]
            path.unwind(k)
        cover = tree.cover(node)
        recurse(hot, path, iz * tree.cover(hot) / cover, io, j)
        recurse(cold, path, iz * tree.cover(cold) / cover, 0.0, j)

    recurse(0, _Path(), 1.0, 1.0, -1)
    return ShapExplanation(baseline=expected_value(tree), values=phi)


# -- forest level ----------------------------------------------------------------


def _tree_row(tree: DecisionTree, row_values: Mapping[FeatureRef, float]) -> np.ndarray:
    return np.array([row_values.get(ref, np.nan) for ref in tree.pool], dtype=np.float64)


def forest_shap(forest, row_values: Mapping[FeatureRef, float]) -> ShapExplanation:
    """Average per-tree SHAP explanation across all forest slots.

    Shapley values are linear over model averaging, so additivity holds
    against the forest's mean prediction.
    """
    slots = forest.slots
    if not slots:
        raise DataError("forest has no trees")
    baseline = 0.0
    values: dict[FeatureRef, float] = {}
    for slot in slots:
        exp = treeshap(slot.tree, _tree_row(slot.tree, row_values))
        baseline += exp.baseline
        for ref, v in exp.values.items():
            values[ref] = values.get(ref, 0.0) + v
    k = len(slots)
    return ShapExplanation(
        baseline=baseline / k, values={ref: v / k for ref, v in values.items()}
    )


def svimp(forest, rows: Sequence[Mapping[FeatureRef, float]]) -> ImportanceSummary:
    """Mean absolute SHAP value per feature over a set of rows.

    Per-node scores sum the per-feature scores across that node's
    modalities.  Features never attributed get 0.
    """
    rows = list(rows)
    if not rows:
        raise DataError("svimp needs at least one row")
    acc: dict[FeatureRef, float] = {ref: 0.0 for ref in forest.presence}
    for row_values in rows:
        exp = forest_shap(forest, row_values)
        for ref, v in exp.values.items():
            acc[ref] = acc.get(ref, 0.0) + abs(v)
    n = len(rows)
    return ImportanceSummary(per_feature={ref: v / n for ref, v in acc.items()})

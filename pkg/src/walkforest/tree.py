"""CART binary trees over a restricted feature pool, with out-of-bag ROC-AUC.

A tree's candidate features come from a random walk: one (node, modality)
column per visited node and present modality.  The whole pool is scanned at
every split, so the walk itself plays the role of per-tree feature
subsampling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import DataError
from .graph import FeatureGraph, FeatureRef, Walk

UNDEFINED = float("nan")


@dataclass(frozen=True)
class TreeParams:
    """Stopping rules for tree growth.

    ``max_depth=None`` means unlimited; ``min_gain`` guards against float
    noise when data is otherwise splittable forever.
    """

    min_leaf: int = 1
    max_depth: int | None = None
    min_gain: float = 1e-12

    def __post_init__(self):
        if self.min_leaf < 1:
            raise DataError("min_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise DataError("max_depth must be >= 1 or None")
        if self.min_gain < 0:
            raise DataError("min_gain must be >= 0")


class DecisionTree:
    """Fitted CART tree stored as flat node arrays.

    ``feature[i] < 0`` marks a leaf; internal nodes route ``value <=
    threshold`` to ``left``.  ``count0``/``count1`` hold per-class training
    sample counts at every node (the node's cover), ``split_gain`` the Gini
    gain of each split.
    """

    __slots__ = (
        "feature",
        "threshold",
        "left",
        "right",
        "count0",
        "count1",
        "split_gain",
        "pool",
        "module_nodes",
        "module_edges",
        "bootstrap_idx",
        "oob_idx",
        "oob_perf",
        "_gain_by_feature",
    )

    def __init__(
        self,
        feature,
        threshold,
        left,
        right,
        count0,
        count1,
        split_gain,
        pool: tuple[FeatureRef, ...],
        module_nodes: frozenset[int],
        module_edges: tuple[tuple[int, int], ...],
        bootstrap_idx=None,
        oob_idx=None,
    ):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.count0 = count0
        self.count1 = count1
        self.split_gain = split_gain
        self.pool = pool
        self.module_nodes = module_nodes
        self.module_edges = module_edges
        self.bootstrap_idx = bootstrap_idx
        self.oob_idx = oob_idx
        self.oob_perf = UNDEFINED
        self._gain_by_feature = None

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    def cover(self, node: int) -> int:
        return int(self.count0[node] + self.count1[node])

    def leaf_probability(self, node: int) -> float:
        return float(self.count1[node]) / (self.count0[node] + self.count1[node])

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        """Class-1 probabilities for rows aligned with ``pool``."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _kernels.predict_rows(
            self.feature, self.threshold, self.left, self.right, self.count0, self.count1, X
        )

    def gain_by_feature(self) -> dict[FeatureRef, float]:
        """Total Gini gain per feature over all splits of this tree."""
        if self._gain_by_feature is None:
            acc: dict[FeatureRef, float] = {}
            for i in range(self.n_nodes):
                j = int(self.feature[i])
                if j >= 0:
                    ref = self.pool[j]
                    acc[ref] = acc.get(ref, 0.0) + float(self.split_gain[i])
            self._gain_by_feature = acc
        return self._gain_by_feature

    def used_features(self) -> tuple[int, ...]:
        """Pool indices that appear in at least one split, sorted."""
        return tuple(sorted({int(j) for j in self.feature if j >= 0}))


# -- Gini machinery ----------------------------------------------------------


def gini(class_counts: Sequence[float]) -> float:
    """Gini impurity of a count vector: sum of p*(1-p) over classes."""
    counts = np.asarray(class_counts, dtype=np.float64)
    if (counts < 0).any():
        raise ValueError("class counts must be non-negative")
    total = counts.sum()
    if total <= 0:
        raise ValueError("class counts must have a positive total")
    p = counts / total
    return float((p * (1.0 - p)).sum())


def gini_gain(parent_counts, left_counts, right_counts) -> float:
    """Gini gain of a split: parent impurity minus weighted child impurities."""
    parent = np.asarray(parent_counts, dtype=np.float64)
    left = np.asarray(left_counts, dtype=np.float64)
    right = np.asarray(right_counts, dtype=np.float64)
    if not np.array_equal(left + right, parent):
        raise ValueError("child counts must sum to parent counts")
    nl, nr = left.sum(), right.sum()
    if nl <= 0 or nr <= 0:
        raise ValueError("both children must be non-empty")
    total = nl + nr
    return gini(parent) - (nl / total) * gini(left) - (nr / total) * gini(right)


# -- fitting ------------------------------------------------------------------


def fit_pool_tree(
    graph: FeatureGraph,
    pool: Sequence[FeatureRef],
    sample_idx: np.ndarray,
    params: TreeParams,
    rng: np.random.Generator,
    module_nodes: frozenset[int] | None = None,
    module_edges: tuple = (),
) -> DecisionTree:
    """Bootstrap-fit a CART tree on an explicit feature pool."""
    pool = tuple(sorted(pool))
    if not pool:
        raise DataError("empty feature pool")
    sample_idx = np.asarray(sample_idx, dtype=np.int64)
    if sample_idx.size == 0:
        raise DataError("empty sample index set")
    if graph.labels is None:
        raise DataError("graph has no labels")

    draws = rng.integers(0, sample_idx.size, size=sample_idx.size)
    bootstrap_idx = sample_idx[draws]
    oob_idx = np.setdiff1d(sample_idx, bootstrap_idx)

    X = graph.feature_matrix(pool, bootstrap_idx)
    y = graph.labels[bootstrap_idx]
    max_depth = -1 if params.max_depth is None else params.max_depth
    arrays = _kernels.grow_tree(X, y, params.min_leaf, max_depth, params.min_gain)

    if module_nodes is None:
        module_nodes = frozenset(ref[0] for ref in pool)
    return DecisionTree(
        *arrays,
        pool=pool,
        module_nodes=module_nodes,
        module_edges=tuple(module_edges),
        bootstrap_idx=bootstrap_idx,
        oob_idx=oob_idx,
    )


def fit_tree(
    graph: FeatureGraph,
    walk: Walk,
    sample_idx: np.ndarray,
    params: TreeParams,
    rng: np.random.Generator,
) -> DecisionTree:
    """Fit a tree whose feature pool is the walk's visited-node features.

    Duplicate visits collapse to a single pool entry; CART can re-split on
    a feature anyway.
    """
    visited = sorted(set(walk.visits))
    pool = [ref for nid in visited for ref in graph.node_features(nid)]
    if not pool:
        raise DataError("walk visits only nodes without feature columns")
    return fit_pool_tree(
        graph,
        pool,
        sample_idx,
        params,
        rng,
        module_nodes=frozenset(visited),
        module_edges=walk.unique_edges,
    )


# -- prediction and evaluation -------------------------------------------------


def predict_proba(tree: DecisionTree, row: np.ndarray) -> float:
    """Class-1 probability for one row aligned with ``tree.pool``."""
    row = np.asarray(row, dtype=np.float64).reshape(1, -1)
    return float(tree.predict_many(row)[0])


def roc_auc(scores, labels) -> float:
    """ROC-AUC as the Mann-Whitney statistic; ties count half.

    Returns UNDEFINED (NaN) when only one class is present.
    """
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int8)
    if scores.size != labels.size:
        raise DataError("scores and labels differ in length")
    if scores.size == 0:
        return UNDEFINED
    return float(_kernels.rank_auc(scores, labels))


def oob_perf(tree: DecisionTree, graph: FeatureGraph) -> float:
    """Out-of-bag ROC-AUC; UNDEFINED when the OOB set is empty or single-class."""
    if tree.oob_idx is None:
        raise DataError("tree carries no out-of-bag indices")
    if tree.oob_idx.size == 0:
        return UNDEFINED
    X = graph.feature_matrix(tree.pool, tree.oob_idx)
    scores = tree.predict_many(X)
    return roc_auc(scores, graph.labels[tree.oob_idx])


# -- serialization ---------------------------------------------------------------


def tree_to_json(tree: DecisionTree, node_names: Sequence[str], modality_names: Sequence[str]) -> dict:
    """Nested-dict form of the tree, keyed by node/modality names."""

    def build(i: int) -> dict:
        if tree.is_leaf(i):
            return {"counts": [int(tree.count0[i]), int(tree.count1[i])]}
        nid, mid = tree.pool[int(tree.feature[i])]
        return {
            "feature": [node_names[nid], modality_names[mid]],
            "threshold": float(tree.threshold[i]),
            "gain": float(tree.split_gain[i]),
            "counts": [int(tree.count0[i]), int(tree.count1[i])],
            "left": build(int(tree.left[i])),
            "right": build(int(tree.right[i])),
        }

    return {
        "pool": [[node_names[nid], modality_names[mid]] for nid, mid in tree.pool],
        "module_nodes": sorted(node_names[n] for n in tree.module_nodes),
        "module_edges": [
            [node_names[u], node_names[v]] for u, v in sorted(tree.module_edges)
        ],
        "root": build(0),
    }


def tree_from_json(data: dict, node_ids: dict, modality_ids: dict) -> DecisionTree:
    """Rebuild a tree from :func:`tree_to_json` output."""
    pool = tuple(
        sorted((node_ids[n], modality_ids[m]) for n, m in data["pool"])
    )
    pool_index = {ref: i for i, ref in enumerate(pool)}

    flat: list[tuple[dict, int, int]] = []  # (node dict, left id, right id)

    def walk(d: dict) -> int:
        i = len(flat)
        flat.append((d, -1, -1))
        if "feature" in d:
            li = walk(d["left"])
            ri = walk(d["right"])
            flat[i] = (d, li, ri)
        return i

    walk(data["root"])
    n = len(flat)
    feature = np.full(n, -1, np.int64)
    threshold = np.full(n, np.nan, np.float64)
    left = np.full(n, -1, np.int64)
    right = np.full(n, -1, np.int64)
    count0 = np.zeros(n, np.int64)
    count1 = np.zeros(n, np.int64)
    split_gain = np.zeros(n, np.float64)
    for i, (d, li, ri) in enumerate(flat):
        count0[i], count1[i] = d["counts"]
        if "feature" in d:
            nname, mname = d["feature"]
            feature[i] = pool_index[(node_ids[nname], modality_ids[mname])]
            threshold[i] = d["threshold"]
            split_gain[i] = d.get("gain", 0.0)
            left[i] = li
            right[i] = ri

    module_nodes = frozenset(node_ids[n] for n in data["module_nodes"])
    module_edges = tuple(
        sorted(
            tuple(sorted((node_ids[a], node_ids[b])))
            for a, b in data["module_edges"]
        )
    )
    return DecisionTree(
        feature, threshold, left, right, count0, count1, split_gain,
        pool=pool, module_nodes=module_nodes, module_edges=module_edges,
    )

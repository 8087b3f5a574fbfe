"""The greedy decision forest: evaluate, accept-or-revert, shrink, resample.

Every iteration fits one candidate tree per slot from that slot's proposal
walk and keeps it only when it improves on the incumbent module's
out-of-bag score (under the default "refit" rule the incumbent is
re-measured on a fresh bootstrap and an equally-scoring strictly smaller
candidate also wins; under "ratchet" the comparison target is a cached
best-so-far).  Acceptance shrinks the walk budget by one and moves the
proposal walk near the accepted module.  The slot population is then
resampled with probability proportional to per-slot performance, and edge
and feature-gain accumulators are credited over the resampled population.

All randomness is drawn from streams keyed by (purpose, iteration, slot
position), so results are bit-identical regardless of thread count.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from . import _kernels
from .errors import DataError
from .graph import Edge, FeatureGraph, FeatureRef, Walk, default_walk_size, random_walk
from .tree import (
    DecisionTree,
    TreeParams,
    tree_from_json,
    tree_to_json,
)

NEG_INF = float("-inf")

# Stream purposes for SeedSequence spawn keys.
_STREAM_INIT_WALK = 0
_STREAM_BOOTSTRAP = 1
_STREAM_REWALK = 2
_STREAM_RESAMPLE = 3
_STREAM_INCUMBENT = 4


def _gen(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


@dataclass(frozen=True)
class ForestParams:
    """Greedy forest configuration.

    ``mtry0=None`` resolves to ceil(sqrt(#nodes)) at init.  ``edge_source``
    picks which edge set a module credits: the walk's traversed edges
    (default) or the full induced subgraph of its nodes.  ``rewalk`` sets
    where a slot's proposal walk may move: within the accepted module plus
    its one-hop neighborhood (default, lets modules both shrink and drift
    toward better neighbors), within the accepted module only
    ("restricted", shrink-only), or anywhere on the graph starting from
    the module ("anchored").  ``accept`` picks the comparison rule: "refit"
    re-measures the incumbent module on a fresh bootstrap every iteration
    and a candidate must strictly beat that contemporaneous measurement
    (default; lets minimal perfect modules displace imperfect supersets),
    while "ratchet" compares candidates against a cached best-so-far score
    and re-proposes the accepted walk after a rejection.
    """

    ntree: int
    niter: int
    mtry0: int | None = None
    tree: TreeParams = field(default_factory=TreeParams)
    edge_source: str = "traversed"
    rewalk: str = "neighborhood"
    accept: str = "refit"

    def __post_init__(self):
        if self.ntree < 1:
            raise DataError("ntree must be >= 1")
        if self.niter < 1:
            raise DataError("niter must be >= 1")
        if self.mtry0 is not None and self.mtry0 < 2:
            raise DataError("mtry0 must be >= 2")
        if self.edge_source not in ("traversed", "induced"):
            raise DataError("edge_source must be 'traversed' or 'induced'")
        if self.rewalk not in ("neighborhood", "restricted", "anchored"):
            raise DataError("rewalk must be 'neighborhood', 'restricted' or 'anchored'")
        if self.accept not in ("refit", "ratchet"):
            raise DataError("accept must be 'refit' or 'ratchet'")


class ForestSlot:
    """One evolving tree slot."""

    __slots__ = ("current_walk", "prev_walk", "best_tree", "best_perf", "mtry")

    def __init__(self, current_walk: Walk, prev_walk: Walk, best_tree, best_perf: float, mtry: int):
        self.current_walk = current_walk
        self.prev_walk = prev_walk
        self.best_tree = best_tree
        self.best_perf = best_perf
        self.mtry = mtry

    def clone(self) -> "ForestSlot":
        # Walks and trees are immutable; a fresh wrapper is an independent lineage.
        return ForestSlot(self.current_walk, self.prev_walk, self.best_tree, self.best_perf, self.mtry)


class GreedyForestState:
    """Mutable training state across greedy iterations."""

    _POOL_CACHE_CAP = 512

    def __init__(self, graph: FeatureGraph, train_idx: np.ndarray, params: ForestParams, seed: int):
        self.graph = graph
        self.train_idx = np.unique(np.asarray(train_idx, dtype=np.int64))
        self.params = params
        self.seed = int(seed)
        self.t = 0
        self.slots: list[ForestSlot] = []
        self.edge_acc: dict[Edge, float] = {}
        self.feature_acc: dict[FeatureRef, float] = {}
        self._induced_cache: dict[frozenset, tuple[Edge, ...]] = {}
        # per-pool presorted training matrices, reused across refits of a module
        self._pool_cache: dict[tuple, tuple] = {}

    def pool_entry(self, pool: tuple) -> tuple:
        entry = self._pool_cache.get(pool)
        if entry is None:
            if len(self._pool_cache) >= self._POOL_CACHE_CAP:
                self._pool_cache.clear()
            X = np.ascontiguousarray(self.graph.feature_matrix(pool, self.train_idx))
            order = _kernels.presort(X)
            y = np.ascontiguousarray(self.graph.labels[self.train_idx])
            entry = (X, order, y)
            self._pool_cache[pool] = entry
        return entry

    def module_edges_of(self, tree: DecisionTree) -> tuple[Edge, ...]:
        """Edge set a fitted tree's module credits, per ``params.edge_source``."""
        if self.params.edge_source == "traversed":
            return tree.module_edges
        key = tree.module_nodes
        cached = self._induced_cache.get(key)
        if cached is None:
            cached = tuple(sorted(self.graph.induced_edges(key)))
            self._induced_cache[key] = cached
        return cached


def init_forest(
    graph: FeatureGraph, train_idx: np.ndarray, params: ForestParams, seed: int
) -> GreedyForestState:
    """Seed every slot with an independent full-graph walk of size mtry0."""
    if graph.labels is None:
        raise DataError("graph has no labels")
    if not graph.modalities:
        raise DataError("graph has no modalities")
    train_idx = np.asarray(train_idx, dtype=np.int64)
    if train_idx.size == 0:
        raise DataError("empty training index set")
    train_labels = graph.labels[train_idx]
    if train_labels.min() == train_labels.max():
        raise DataError("training labels are single-class")

    mtry0 = params.mtry0 if params.mtry0 is not None else default_walk_size(graph.n_nodes)
    if mtry0 < 2:
        raise DataError("mtry0 must be >= 2")
    params = replace(params, mtry0=mtry0)

    state = GreedyForestState(graph, train_idx, params, seed)
    all_nodes = range(graph.n_nodes)
    for k in range(params.ntree):
        walk = random_walk(graph, all_nodes, mtry0, _gen(seed, _STREAM_INIT_WALK, k))
        state.slots.append(ForestSlot(walk, walk, None, NEG_INF, mtry0))
    return state


def _rewalk(state: GreedyForestState, slot: ForestSlot, rng: np.random.Generator) -> Walk:
    """Draw the follow-up walk for a just-accepted module, per ``params.rewalk``."""
    module = slot.prev_walk.node_set
    mode = state.params.rewalk
    if mode == "restricted":
        allowed = module
        starts = None
    elif mode == "anchored":
        allowed = range(state.graph.n_nodes)
        starts = module
    else:  # neighborhood: module plus its one-hop boundary
        allowed = set(module)
        for nid in module:
            allowed.update(int(v) for v in state.graph.neighbors(nid))
        starts = module
    return random_walk(state.graph, allowed, slot.mtry, rng, start_nodes=starts)


def _fit_and_score(state: GreedyForestState, walk: Walk, *key: int) -> tuple[DecisionTree, float]:
    """Bootstrap-fit a walk's tree against the cached presorted pool.

    Produces trees identical to :func:`walkforest.tree.fit_tree` with the
    same stream, just without re-sorting the pool every time.
    """
    rng = _gen(state.seed, *key)
    visited = sorted(set(walk.visits))
    pool = tuple(ref for nid in visited for ref in state.graph.node_features(nid))
    if not pool:
        raise DataError("walk visits only nodes without feature columns")
    X, order_full, y = state.pool_entry(pool)

    n = state.train_idx.size
    draws = rng.integers(0, n, size=n)
    counts = np.bincount(draws, minlength=n)
    boot_order = _kernels.bootstrap_order(order_full, counts, n)
    tp = state.params.tree
    arrays = _kernels.grow_tree_ordered(
        X, y, boot_order, tp.min_leaf, -1 if tp.max_depth is None else tp.max_depth, tp.min_gain
    )
    oob_pos = np.flatnonzero(counts == 0)
    tree = DecisionTree(
        *arrays,
        pool=pool,
        module_nodes=frozenset(visited),
        module_edges=walk.unique_edges,
        bootstrap_idx=state.train_idx[draws],
        oob_idx=state.train_idx[oob_pos],
    )
    if oob_pos.size:
        scores = tree.predict_many(X[oob_pos])
        perf = float(_kernels.rank_auc(scores, y[oob_pos]))
    else:
        perf = float("nan")
    if math.isnan(perf):
        perf = 0.5  # undefined out-of-bag performance scores as neutral
    tree.oob_perf = perf
    return tree, perf


def _evaluate_slot(state: GreedyForestState, k: int):
    slot = state.slots[k]
    t = state.t
    candidate = _fit_and_score(state, slot.current_walk, _STREAM_BOOTSTRAP, t, k)
    if state.params.accept == "refit":
        incumbent = _fit_and_score(state, slot.prev_walk, _STREAM_INCUMBENT, t, k)
        return candidate, incumbent
    return candidate, None


def greedy_step(state: GreedyForestState, threads: int = 1) -> GreedyForestState:
    """One greedy iteration: evaluate, accept/revert, resample, accumulate."""
    if state.t >= state.params.niter:
        raise DataError("all iterations already run")
    ntree = state.params.ntree
    t = state.t

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda k: _evaluate_slot(state, k), range(ntree)))
    else:
        results = [_evaluate_slot(state, k) for k in range(ntree)]

    for k, (candidate, incumbent) in enumerate(results):
        slot = state.slots[k]
        cand_tree, cand_perf = candidate
        if incumbent is not None:
            # Refit acceptance: the incumbent module is re-measured on a fresh
            # bootstrap and keeps the slot unless the candidate strictly beats
            # that contemporaneous score, or matches it with a strictly
            # smaller module (minimal features at non-decreasing
            # performance); a fresh proposal is drawn either way.
            inc_tree, inc_perf = incumbent
            better = cand_perf > inc_perf or (
                cand_perf == inc_perf
                and len(cand_tree.module_nodes) < len(inc_tree.module_nodes)
            )
            if better:
                slot.best_tree = cand_tree
                slot.best_perf = cand_perf
                slot.prev_walk = slot.current_walk
                slot.mtry = max(slot.mtry - 1, 2)
            else:
                slot.best_tree = inc_tree
                slot.best_perf = inc_perf
            slot.current_walk = _rewalk(state, slot, _gen(state.seed, _STREAM_REWALK, t, k))
        elif cand_perf <= slot.best_perf:
            # Ratchet acceptance, reject: retry the accepted walk next time.
            slot.current_walk = slot.prev_walk
        else:
            slot.best_tree = cand_tree
            slot.best_perf = cand_perf
            slot.prev_walk = slot.current_walk
            slot.mtry = max(slot.mtry - 1, 2)
            slot.current_walk = _rewalk(state, slot, _gen(state.seed, _STREAM_REWALK, t, k))

    # Resample slot population in proportion to best performance.
    perfs = np.array([s.best_perf for s in state.slots], dtype=np.float64)
    total = perfs.sum()
    probs = perfs / total if total > 0 else np.full(ntree, 1.0 / ntree)
    rng = _gen(state.seed, _STREAM_RESAMPLE, t)
    chosen = rng.choice(ntree, size=ntree, replace=True, p=probs)
    state.slots = [state.slots[int(i)].clone() for i in chosen]

    # Credit accumulators over the post-resampling population, so repeated
    # slots count as often as they occur.
    for slot in state.slots:
        tree = slot.best_tree
        perf = slot.best_perf
        for e in state.module_edges_of(tree):
            state.edge_acc[e] = state.edge_acc.get(e, 0.0) + perf
        for ref, g in tree.gain_by_feature().items():
            state.feature_acc[ref] = state.feature_acc.get(ref, 0.0) + g

    state.t += 1
    return state


@dataclass(frozen=True)
class FittedSlot:
    """Immutable snapshot of a slot after training."""

    walk: Walk
    tree: DecisionTree
    perf: float
    mtry: int
    module_edges: tuple[Edge, ...]

    @property
    def module_nodes(self) -> frozenset[int]:
        return self.tree.module_nodes


@dataclass
class FittedForest:
    """Final slots, accumulators and metadata of a greedy run."""

    node_names: tuple[str, ...]
    modality_names: tuple[str, ...]
    presence: tuple[FeatureRef, ...]
    slots: tuple[FittedSlot, ...]
    edge_acc: dict[Edge, float]
    feature_acc: dict[FeatureRef, float]
    params: ForestParams
    seed: int
    iterations: int


def snapshot(state: GreedyForestState) -> FittedForest:
    """Freeze the current state into a queryable forest."""
    slots = tuple(
        FittedSlot(
            walk=s.prev_walk,
            tree=s.best_tree,
            perf=s.best_perf,
            mtry=s.mtry,
            module_edges=state.module_edges_of(s.best_tree),
        )
        for s in state.slots
    )
    return FittedForest(
        node_names=state.graph.node_names,
        modality_names=state.graph.modalities,
        presence=state.graph.present_features(),
        slots=slots,
        edge_acc=dict(state.edge_acc),
        feature_acc=dict(state.feature_acc),
        params=state.params,
        seed=state.seed,
        iterations=state.t,
    )


def run(
    state: GreedyForestState,
    threads: int = 1,
    progress: Callable[[int, GreedyForestState], None] | None = None,
) -> FittedForest:
    """Run all remaining greedy iterations and return the fitted forest."""
    if state.t != 0:
        raise DataError("run() expects a fresh state")
    for _ in range(state.params.niter):
        greedy_step(state, threads=threads)
        if progress is not None:
            progress(state.t, state)
    return snapshot(state)


# -- prediction ------------------------------------------------------------------


def forest_scores(forest: FittedForest, table: Mapping[FeatureRef, np.ndarray], n_rows: int) -> np.ndarray:
    """Mean per-tree probability for each of ``n_rows`` rows in a column table."""
    total = np.zeros(n_rows, dtype=np.float64)
    for slot in forest.slots:
        tree = slot.tree
        X = np.empty((n_rows, len(tree.pool)), dtype=np.float64)
        for c, ref in enumerate(tree.pool):
            col = table.get(ref)
            X[:, c] = np.nan if col is None else col
        total += tree.predict_many(X)
    return total / len(forest.slots)


def forest_predict(forest: FittedForest, row_values: Mapping[FeatureRef, float]) -> float:
    """Mean tree probability for a single row given as a feature mapping."""
    table = {ref: np.array([v], dtype=np.float64) for ref, v in row_values.items()}
    return float(forest_scores(forest, table, 1)[0])


def feature_table(graph: FeatureGraph, rows: np.ndarray) -> dict[FeatureRef, np.ndarray]:
    """Column table for a subset of graph samples, keyed by (node, modality)."""
    rows = np.asarray(rows, dtype=np.int64)
    return {ref: graph.feature_column(*ref)[rows] for ref in graph.present_features()}


def classification_report_from_scores(scores, labels, threshold: float = 0.5) -> dict[str, float]:
    """Confusion-matrix metrics of thresholded scores against 0/1 labels."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int8)
    if labels.size == 0:
        raise DataError("empty test set")
    if labels.min() == labels.max():
        raise DataError("single-class test labels")
    pred = scores > threshold
    pos = labels == 1
    tp = int(np.sum(pred & pos))
    tn = int(np.sum(~pred & ~pos))
    fp = int(np.sum(pred & ~pos))
    fn = int(np.sum(~pred & pos))
    sensitivity = tp / (tp + fn)
    specificity = tn / (tn + fp)
    precision = tp / (tp + fp) if (tp + fp) > 0 else 0.0
    accuracy = (tp + tn) / labels.size
    return {
        "sensitivity": sensitivity,
        "specificity": specificity,
        "recall": sensitivity,
        "precision": precision,
        "accuracy": accuracy,
    }


def classification_report(
    forest: FittedForest,
    table: Mapping[FeatureRef, np.ndarray],
    labels,
    threshold: float = 0.5,
) -> dict[str, float]:
    labels = np.asarray(labels, dtype=np.int8)
    scores = forest_scores(forest, table, labels.size)
    return classification_report_from_scores(scores, labels, threshold)


def stratified_split(
    labels: np.ndarray, train_fraction: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Class-preserving train/test split; returns sorted index arrays.

    With 0 < train_fraction < 1 every class keeps at least one sample on
    each side.
    """
    if not 0 < train_fraction <= 1:
        raise DataError("train_fraction must be in (0, 1]")
    labels = np.asarray(labels)
    train_parts = []
    test_parts = []
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        if idx.size == 0:
            raise DataError("labels must contain both classes")
        perm = idx[rng.permutation(idx.size)]
        if train_fraction >= 1.0:
            n_train = idx.size
        else:
            n_train = int(round(train_fraction * idx.size))
            n_train = min(max(n_train, 1), idx.size - 1)
        train_parts.append(perm[:n_train])
        test_parts.append(perm[n_train:])
    train = np.sort(np.concatenate(train_parts))
    test = np.sort(np.concatenate(test_parts)) if any(p.size for p in test_parts) else np.array([], dtype=np.int64)
    return train.astype(np.int64), test.astype(np.int64)


# -- serialization ----------------------------------------------------------------


def forest_to_json(forest: FittedForest) -> dict:
    nn = forest.node_names
    mn = forest.modality_names
    return {
        "format": "walkforest-forest/1",
        "seed": forest.seed,
        "iterations": forest.iterations,
        "params": {
            "ntree": forest.params.ntree,
            "niter": forest.params.niter,
            "mtry0": forest.params.mtry0,
            "min_leaf": forest.params.tree.min_leaf,
            "max_depth": forest.params.tree.max_depth,
            "min_gain": forest.params.tree.min_gain,
            "edge_source": forest.params.edge_source,
        },
        "nodes": list(nn),
        "modalities": list(mn),
        "presence": [[nn[n], mn[m]] for n, m in sorted(forest.presence)],
        "slots": [
            {
                "perf": slot.perf,
                "mtry": slot.mtry,
                "walk": [nn[v] for v in slot.walk.visits],
                "walk_edges": [[nn[u], nn[v]] for u, v in slot.walk.traversed_edges],
                "module_edges": [[nn[u], nn[v]] for u, v in slot.module_edges],
                "tree": tree_to_json(slot.tree, nn, mn),
            }
            for slot in forest.slots
        ],
        "edge_acc": [[nn[u], nn[v], val] for (u, v), val in sorted(forest.edge_acc.items())],
        "feature_acc": [
            [nn[n], mn[m], val] for (n, m), val in sorted(forest.feature_acc.items())
        ],
    }


def forest_from_json(data: dict) -> FittedForest:
    if data.get("format") != "walkforest-forest/1":
        raise DataError("not a walkforest forest bundle")
    nn = tuple(data["nodes"])
    mn = tuple(data["modalities"])
    node_ids = {name: i for i, name in enumerate(nn)}
    modality_ids = {name: i for i, name in enumerate(mn)}
    p = data["params"]
    params = ForestParams(
        ntree=p["ntree"],
        niter=p["niter"],
        mtry0=p["mtry0"],
        tree=TreeParams(min_leaf=p["min_leaf"], max_depth=p["max_depth"], min_gain=p["min_gain"]),
        edge_source=p["edge_source"],
    )
    slots = []
    for s in data["slots"]:
        visits = tuple(node_ids[v] for v in s["walk"])
        traversed = tuple(
            tuple(sorted((node_ids[a], node_ids[b]))) for a, b in s["walk_edges"]
        )
        tree = tree_from_json(s["tree"], node_ids, modality_ids)
        tree.oob_perf = s["perf"]
        slots.append(
            FittedSlot(
                walk=Walk(visits, traversed),
                tree=tree,
                perf=s["perf"],
                mtry=s["mtry"],
                module_edges=tuple(
                    tuple(sorted((node_ids[a], node_ids[b]))) for a, b in s["module_edges"]
                ),
            )
        )
    return FittedForest(
        node_names=nn,
        modality_names=mn,
        presence=tuple(
            sorted((node_ids[n], modality_ids[m]) for n, m in data["presence"])
        ),
        slots=tuple(slots),
        edge_acc={
            (min(node_ids[a], node_ids[b]), max(node_ids[a], node_ids[b])): v
            for a, b, v in data["edge_acc"]
        },
        feature_acc={(node_ids[n], modality_ids[m]): v for n, m, v in data["feature_acc"]},
        params=params,
        seed=data["seed"],
        iterations=data["iterations"],
    )


def save_forest(forest: FittedForest, path) -> None:
    payload = json.dumps(forest_to_json(forest), sort_keys=True, separators=(",", ":"))
    Path(path).write_text(payload + "\n", encoding="utf-8")


def load_forest(path) -> FittedForest:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"unreadable forest bundle {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"corrupt forest bundle {path}: {exc}") from exc
    try:
        return forest_from_json(data)
    except (KeyError, TypeError) as exc:
        raise DataError(f"corrupt forest bundle {path}: missing field {exc}") from exc

"""Synthetic ground-truth scenarios and the coverage experiment harness.

A scenario plants a connected 4-node module on a scale-free graph and wires
the labels to an XOR of ANDs over the planted feature columns; every other
column is uniform binary noise.  The harness reruns the greedy forest over
a grid of iteration budgets and reports how often the planted module is
ranked first, plus held-out AUC and module-count diagnostics.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from statistics import median

import numpy as np

from .errors import DataError
from .forest import (
    ForestParams,
    FittedForest,
    classification_report_from_scores,
    feature_table,
    forest_scores,
    greedy_step,
    init_forest,
    snapshot,
    stratified_split,
)
from .graph import FeatureGraph, FeatureRef, generate_barabasi
from .importance import rank_modules
from .tree import DecisionTree, TreeParams, fit_pool_tree, roc_auc

SINGLE = "single"
MULTI = "multi"


@dataclass(frozen=True)
class PlantedScenario:
    """A labeled graph with a known predictive 4-node module."""

    graph: FeatureGraph
    planted_nodes: tuple[int, int, int, int]
    modal_mode: str
    n_samples: int
    seed: int

    @property
    def planted_set(self) -> frozenset[int]:
        return frozenset(self.planted_nodes)


def _gen(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def _pick_connected_four(graph: FeatureGraph, rng: np.random.Generator) -> tuple[int, int, int, int]:
    # Random start, then breadth-first growth; the first four visited nodes
    # induce a connected subgraph because each one's parent precedes it.
    starts = rng.permutation(graph.n_nodes)
    for start in starts:
        seen = [int(start)]
        seen_set = {int(start)}
        queue = deque([int(start)])
        while queue and len(seen) < 4:
            u = queue.popleft()
            for v in graph.neighbors(u):
                v = int(v)
                if v not in seen_set:
                    seen_set.add(v)
                    seen.append(v)
                    queue.append(v)
                    if len(seen) == 4:
                        break
        if len(seen) == 4:
            return tuple(seen)
    raise DataError("graph has no connected 4-node subgraph")


def xor_of_ands(c1, c2, c3, c4) -> np.ndarray:
    """Label rule: (c1 AND c2) XOR (c3 AND c4) on binary columns."""
    a = np.logical_and(c1 != 0, c2 != 0)
    b = np.logical_and(c3 != 0, c4 != 0)
    return np.logical_xor(a, b).astype(np.int8)


def plant_xor(
    graph: FeatureGraph, seed: int, modal_mode: str = SINGLE, n_samples: int = 1000
) -> PlantedScenario:
    """Attach uniform binary features and XOR-of-ANDs labels over a planted module.

    Single-modal mode reads all four planted columns from modality "a";
    multi-modal alternates "a", "b", "a", "b".
    """
    if modal_mode not in (SINGLE, MULTI):
        raise DataError(f"modal_mode must be '{SINGLE}' or '{MULTI}'")
    if graph.n_nodes < 4:
        raise DataError("need at least four nodes to plant a module")

    planted = _pick_connected_four(graph, _gen(seed, 0))

    feat_rng = _gen(seed, 1)
    modalities = ("a",) if modal_mode == SINGLE else ("a", "b")
    matrices = {
        m: feat_rng.integers(0, 2, size=(n_samples, graph.n_nodes)).astype(np.float64)
        for m in modalities
    }

    g = graph
    for m in modalities:
        g = g.with_modality(m, {g.node_names[i]: matrices[m][:, i] for i in range(g.n_nodes)})

    v1, v2, v3, v4 = planted
    if modal_mode == SINGLE:
        cols = (matrices["a"][:, v1], matrices["a"][:, v2], matrices["a"][:, v3], matrices["a"][:, v4])
    else:
        cols = (matrices["a"][:, v1], matrices["b"][:, v2], matrices["a"][:, v3], matrices["b"][:, v4])
    labels = xor_of_ands(*cols)
    if labels.min() == labels.max():
        raise DataError("degenerate scenario: single-class labels (n_samples too small)")
    g = g.with_labels(labels)
    return PlantedScenario(g, planted, modal_mode, n_samples, seed)


# -- experiment harness --------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    n_nodes: int = 50
    power: float = 1.2
    edges_per_step: int = 1
    n_samples: int = 1000
    niter_grid: tuple[int, ...] = (10, 25, 50, 100, 200)
    ntree: int = 100
    repetitions: int = 20
    vary_topology: bool = False
    modal_mode: str = SINGLE
    train_fraction: float = 0.8
    mtry0: int | None = None
    tree: TreeParams = field(default_factory=TreeParams)
    seed: int = 0

    def __post_init__(self):
        if not self.niter_grid or any(n < 1 for n in self.niter_grid):
            raise DataError("niter_grid must hold positive iteration counts")
        if tuple(sorted(self.niter_grid)) != tuple(self.niter_grid):
            raise DataError("niter_grid must be sorted ascending")


@dataclass(frozen=True)
class RunRecord:
    rep: int
    niter: int
    top1_hit: bool
    unique_modules: int
    auc: float


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[RunRecord]

    def per_niter(self, niter: int) -> list[RunRecord]:
        return [r for r in self.records if r.niter == niter]

    def coverage(self, niter: int) -> float:
        recs = self.per_niter(niter)
        return sum(r.top1_hit for r in recs) / len(recs)

    def aggregates(self) -> list[dict]:
        out = []
        for niter in self.config.niter_grid:
            recs = self.per_niter(niter)
            out.append(
                {
                    "niter": niter,
                    "coverage": sum(r.top1_hit for r in recs) / len(recs),
                    "median_unique": median(r.unique_modules for r in recs),
                    "median_auc": median(r.auc for r in recs),
                }
            )
        return out


def _scenario_for(config: ExperimentConfig, rep: int) -> PlantedScenario:
    if config.vary_topology:
        graph_seed_key, plant_key = (2, rep), (3, rep)
    else:
        graph_seed_key, plant_key = (0,), (1,)
    graph_seed = int(np.random.SeedSequence(config.seed, spawn_key=graph_seed_key).generate_state(1)[0])
    plant_seed = int(np.random.SeedSequence(config.seed, spawn_key=plant_key).generate_state(1)[0])
    graph = generate_barabasi(config.n_nodes, config.power, config.edges_per_step, graph_seed)
    return plant_xor(graph, plant_seed, config.modal_mode, config.n_samples)


def run_repetition(
    config: ExperimentConfig, rep: int, threads: int = 1, report_sink=None
) -> tuple[list[RunRecord], FittedForest, PlantedScenario]:
    """One repetition: run to the largest grid value, recording at each grid point.

    Random streams are keyed by absolute iteration, so the state at grid
    point t is identical to a fresh run with that iteration budget.
    ``report_sink(niter, reports)`` receives the ranked module reports at
    every grid point when given.
    """
    scenario = _scenario_for(config, rep)
    graph = scenario.graph

    split_rng = _gen(config.seed, 4, rep)
    train_idx, test_idx = stratified_split(graph.labels, config.train_fraction, split_rng)
    forest_seed = int(np.random.SeedSequence(config.seed, spawn_key=(5, rep)).generate_state(1)[0])

    max_iter = config.niter_grid[-1]
    params = ForestParams(ntree=config.ntree, niter=max_iter, mtry0=config.mtry0, tree=config.tree)
    state = init_forest(graph, train_idx, params, forest_seed)

    test_table = feature_table(graph, test_idx)
    test_labels = graph.labels[test_idx]
    planted = tuple(sorted(scenario.planted_nodes))

    records = []
    grid = set(config.niter_grid)
    final = None
    for _ in range(max_iter):
        greedy_step(state, threads=threads)
        if state.t in grid:
            forest = snapshot(state)
            reports = rank_modules(forest)
            scores = forest_scores(forest, test_table, test_labels.size)
            records.append(
                RunRecord(
                    rep=rep,
                    niter=state.t,
                    top1_hit=reports[0].nodes == planted,
                    unique_modules=len(reports),
                    auc=roc_auc(scores, test_labels),
                )
            )
            if report_sink is not None:
                report_sink(state.t, reports)
            if state.t == max_iter:
                final = forest
    return records, final, scenario


def coverage_experiment(config: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Coverage/AUC/module-count metrics over repetitions and an iteration grid."""
    records: list[RunRecord] = []
    for rep in range(config.repetitions):
        rep_records, _, _ = run_repetition(config, rep, threads=threads)
        records.extend(rep_records)
    return ExperimentResult(config=config, records=records)


def write_records_tsv(result: ExperimentResult, path) -> None:
    lines = ["rep\tniter\ttop1_hit\tunique_modules\tauc"]
    for r in result.records:
        lines.append(f"{r.rep}\t{r.niter}\t{int(r.top1_hit)}\t{r.unique_modules}\t{repr(float(r.auc))}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_summary_tsv(result: ExperimentResult, path) -> None:
    lines = ["niter\tcoverage\tmedian_unique\tmedian_auc"]
    for row in result.aggregates():
        lines.append(
            f"{row['niter']}\t{repr(float(row['coverage']))}\t"
            f"{repr(float(row['median_unique']))}\t{repr(float(row['median_auc']))}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- plain random-forest baseline ------------------------------------------------


def rf_baseline(
    graph: FeatureGraph,
    train_idx: np.ndarray,
    test_idx: np.ndarray,
    n_trees: int,
    top_k: int,
    seed: int = 0,
    tree_params: TreeParams | None = None,
) -> dict:
    """Graph-blind forest baseline with impurity-based feature selection.

    Stage 1 fits ``n_trees`` bootstrap trees, each on a uniform random
    sample of sqrt(#features) columns from the concatenated modality space,
    and ranks features by cover-weighted accumulated Gini gain.  Stage 2
    refits on the top ``top_k`` features and reports test metrics.
    """
    if tree_params is None:
        tree_params = TreeParams()
    features = graph.present_features()
    if top_k < 1:
        raise DataError("top_k must be >= 1")
    if top_k > len(features):
        raise DataError(f"top_k {top_k} exceeds feature count {len(features)}")
    train_idx = np.asarray(train_idx, dtype=np.int64)
    test_idx = np.asarray(test_idx, dtype=np.int64)

    mtry = max(2, math.ceil(math.sqrt(len(features))))
    importance: dict[FeatureRef, float] = {ref: 0.0 for ref in features}
    for k in range(n_trees):
        pool_rng = _gen(seed, 0, k)
        pick = pool_rng.choice(len(features), size=min(mtry, len(features)), replace=False)
        pool = [features[int(i)] for i in pick]
        tree = fit_pool_tree(graph, pool, train_idx, tree_params, _gen(seed, 1, k))
        _add_weighted_gain(tree, importance)

    ranked = sorted(features, key=lambda ref: (-importance[ref], ref))
    selected = tuple(ranked[:top_k])

    test_labels = graph.labels[test_idx]
    scores = np.zeros(test_idx.size, dtype=np.float64)
    for k in range(n_trees):
        tree = fit_pool_tree(graph, selected, train_idx, tree_params, _gen(seed, 2, k))
        scores += tree.predict_many(graph.feature_matrix(tree.pool, test_idx))
    scores /= n_trees

    return {
        "selected_features": selected,
        "importance": importance,
        "report": classification_report_from_scores(scores, test_labels),
        "test_auc": roc_auc(scores, test_labels),
    }


def _add_weighted_gain(tree: DecisionTree, acc: dict[FeatureRef, float]) -> None:
    # Standard impurity importance: gains weighted by the node's sample share.
    root_cover = tree.cover(0)
    for i in range(tree.n_nodes):
        j = int(tree.feature[i])
        if j >= 0:
            ref = tree.pool[j]
            acc[ref] = acc.get(ref, 0.0) + tree.cover(i) / root_cover * float(tree.split_gain[i])

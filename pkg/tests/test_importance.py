import numpy as np
import pytest

from walkforest import (
    ForestParams,
    FittedForest,
    edge_importance,
    generate_barabasi,
    init_forest,
    module_edge_importance,
    node_feature_importance,
    plant_xor,
    rank_modules,
    run,
    unique_module_count,
)
from walkforest.forest import FittedSlot
from walkforest.graph import Walk
from walkforest.importance import (
    write_edge_importance_tsv,
    write_feature_importance_tsv,
    write_ranking_tsv,
)
from walkforest.tree import tree_from_json


def leaf_tree(nodes, edges, prob=1.0, names=None):
    names = names or [f"v{i}" for i in range(max(nodes) + 1)]
    c1 = int(round(prob * 10))
    data = {
        "pool": [[names[n], "m"] for n in nodes],
        "module_nodes": [names[n] for n in nodes],
        "module_edges": [[names[u], names[v]] for u, v in edges],
        "root": {"counts": [10 - c1, c1]},
    }
    node_ids = {nm: i for i, nm in enumerate(names)}
    return tree_from_json(data, node_ids, {"m": 0})


def stub_forest(slot_specs, n_nodes=6, ntree=None, niter=1, edge_acc=None, feature_acc=None):
    """slot_specs: list of (nodes, edges, perf)."""
    names = tuple(f"v{i}" for i in range(n_nodes))
    slots = []
    for nodes, edges, perf in slot_specs:
        tree = leaf_tree(nodes, edges, names=list(names))
        slots.append(
            FittedSlot(walk=Walk(tuple(nodes), tuple(edges)), tree=tree, perf=perf,
                       mtry=2, module_edges=tuple(sorted(edges)))
        )
    ntree = ntree or len(slots)
    return FittedForest(
        node_names=names,
        modality_names=("m",),
        presence=tuple((i, 0) for i in range(n_nodes)),
        slots=tuple(slots),
        edge_acc=edge_acc or {},
        feature_acc=feature_acc or {},
        params=ForestParams(ntree=ntree, niter=niter),
        seed=0,
        iterations=niter,
    )


class TestEdgeImportance:
    def test_unused_edge_scores_zero(self):
        forest = stub_forest([((0, 1), [(0, 1)], 1.0)], edge_acc={(0, 1): 1.0})
        imp = edge_importance(forest)
        assert imp.get((2, 3), 0.0) == 0.0

    def test_single_slot_single_iteration_normalization(self):
        forest = stub_forest([((0, 1), [(0, 1)], 1.0)], edge_acc={(0, 1): 1.0})
        assert edge_importance(forest)[(0, 1)] == 1.0

    def test_scale_by_niter_times_ntree(self):
        forest = stub_forest(
            [((0, 1), [(0, 1)], 1.0), ((0, 1), [(0, 1)], 1.0)],
            niter=5, edge_acc={(0, 1): 7.5},
        )
        assert edge_importance(forest)[(0, 1)] == 7.5 / (5 * 2)


class TestModuleEdgeImportance:
    def test_mean(self):
        assert module_edge_importance([(0, 1), (1, 2)], {(0, 1): 0.6, (1, 2): 0.8}) == pytest.approx(0.7)

    def test_single_edge(self):
        assert module_edge_importance([(0, 1)], {(0, 1): 0.52}) == 0.52

    def test_zero_edges(self):
        assert module_edge_importance([], {(0, 1): 0.9}) == 0.0


class TestRankModules:
    def test_single_unique_module(self):
        forest = stub_forest([((0, 1), [(0, 1)], 0.9)] * 4, edge_acc={(0, 1): 3.6})
        reports = rank_modules(forest)
        assert len(reports) == 1
        assert reports[0].multiplicity == 4

    def test_higher_perf_ranks_first_at_equal_edges(self):
        acc = {(0, 1): 0.5, (2, 3): 0.5}
        forest = stub_forest(
            [((0, 1), [(0, 1)], 1.0), ((2, 3), [(2, 3)], 0.5)], edge_acc=acc
        )
        reports = rank_modules(forest)
        assert reports[0].nodes == (0, 1)
        assert reports[0].perf == 1.0

    def test_imp_m_identity_bit_exact(self):
        forest = stub_forest(
            [((0, 1), [(0, 1)], 0.831), ((2, 3, 4), [(2, 3), (3, 4)], 0.75)],
            edge_acc={(0, 1): 0.9, (2, 3): 0.4, (3, 4): 0.2},
        )
        for r in rank_modules(forest):
            assert r.imp_m == r.norm_edge_imp + r.perf  # bit-exact

    def test_multiplicities_partition_ntree(self):
        forest = stub_forest(
            [((0, 1), [(0, 1)], 0.9), ((0, 1), [(0, 1)], 0.8), ((2, 3), [(2, 3)], 0.7)],
        )
        reports = rank_modules(forest)
        assert sum(r.multiplicity for r in reports) == forest.params.ntree

    def test_duplicate_module_takes_max_perf(self):
        forest = stub_forest(
            [((0, 1), [(0, 1)], 0.7), ((0, 1), [(0, 1)], 0.95)],
        )
        (report,) = rank_modules(forest)
        assert report.perf == 0.95

    def test_deterministic_tiebreak_smaller_module_first(self):
        forest = stub_forest(
            [((0, 1), [(0, 1)], 0.8), ((2, 3, 4), [(2, 3), (3, 4)], 0.8)],
            edge_acc={},
        )
        reports = rank_modules(forest)
        assert reports[0].nodes == (0, 1)

    def test_zero_edge_module_flagged(self):
        forest = stub_forest([((0,), [], 0.6)])
        (report,) = rank_modules(forest)
        assert report.zero_edge
        assert report.norm_edge_imp == 0.0
        assert report.imp_m == 0.6


class TestUniqueModuleCount:
    def test_all_identical(self):
        forest = stub_forest([((0, 1), [(0, 1)], 0.9)] * 5)
        assert unique_module_count(forest) == 1

    def test_all_distinct(self):
        forest = stub_forest(
            [((0, 1), [(0, 1)], 0.9), ((1, 2), [(1, 2)], 0.8), ((2, 3), [(2, 3)], 0.7)]
        )
        assert unique_module_count(forest) == 3


class TestNodeFeatureImportance:
    def test_unused_feature_zero(self):
        forest = stub_forest([((0, 1), [(0, 1)], 1.0)], feature_acc={(0, 0): 0.4})
        imps = node_feature_importance(forest, (0, 1))
        assert imps[(1, 0)] == 0.0

    def test_single_split_normalization(self):
        forest = stub_forest([((0, 1), [(0, 1)], 1.0)], feature_acc={(0, 0): 0.5})
        imps = node_feature_importance(forest, (0, 1))
        assert imps[(0, 0)] == 0.5

    def test_restricted_to_module_nodes(self):
        forest = stub_forest([((0, 1), [(0, 1)], 1.0)], feature_acc={(0, 0): 0.5, (2, 0): 0.9})
        imps = node_feature_importance(forest, (0, 1))
        assert (2, 0) not in imps


class TestEndToEndImportance:
    @pytest.mark.slow
    @pytest.mark.acceptance
    def test_multimodal_planted_features_top4(self, fixed_multi):
        # planted (node, modality) pairs hold the four largest scores within
        # the top module, in at least 90% of the multi-modal runs
        hits = 0
        for o in fixed_multi:
            top = o.reports[0]
            if set(top.nodes) != o.scenario.planted_set:
                continue
            v1, v2, v3, v4 = o.scenario.planted_nodes
            planted_refs = {(v1, 0), (v2, 1), (v3, 0), (v4, 1)}
            ranked = sorted(top.feature_imps, key=lambda r: -top.feature_imps[r])
            if set(ranked[:4]) == planted_refs:
                hits += 1
        assert hits >= 0.9 * len(fixed_multi)

    def test_invariants_on_real_run(self):
        g = generate_barabasi(15, 1.2, 1, seed=3)
        sc = plant_xor(g, seed=3, modal_mode="single", n_samples=500)
        state = init_forest(sc.graph, np.arange(400), ForestParams(ntree=20, niter=15), seed=9)
        forest = run(state)
        reports = rank_modules(forest)

        assert sum(r.multiplicity for r in reports) == 20
        imp = edge_importance(forest)
        assert all(0.0 <= v <= 1.0 for v in imp.values())
        assert all(0.0 <= r.perf <= 1.0 for r in reports)
        assert all(r.imp_m == r.norm_edge_imp + r.perf for r in reports)
        assert all(0.0 <= r.imp_m <= 2.0 for r in reports)
        # ranking is a deterministic total order
        keys = [(-r.imp_m, len(r.nodes), r.nodes) for r in reports]
        assert keys == sorted(keys)


class TestTsvWriters:
    def test_files_written_sorted_and_parseable(self, tmp_path):
        forest = stub_forest(
            [((0, 1), [(0, 1)], 0.9), ((2, 3), [(2, 3)], 0.8)],
            edge_acc={(0, 1): 0.9, (2, 3): 0.4},
            feature_acc={(0, 0): 0.3},
        )
        reports = rank_modules(forest)
        write_ranking_tsv(reports, forest.node_names, tmp_path / "modules.tsv")
        write_edge_importance_tsv(forest, tmp_path / "edges.tsv")
        write_feature_importance_tsv(reports, forest.node_names, forest.modality_names,
                                     tmp_path / "features.tsv")

        mod_lines = (tmp_path / "modules.tsv").read_text().strip().splitlines()
        assert mod_lines[0] == "rank\tmodule\tperf\tnorm_edge_imp\timp_m\tmultiplicity"
        assert mod_lines[1].startswith("1\tv0;v1\t")
        edge_lines = (tmp_path / "edges.tsv").read_text().strip().splitlines()
        assert edge_lines[0] == "node_a\tnode_b\timp_e"
        assert len(edge_lines) == 3
        feat_lines = (tmp_path / "features.tsv").read_text().strip().splitlines()
        assert feat_lines[0] == "module_rank\tnode\tmodality\timp_f"

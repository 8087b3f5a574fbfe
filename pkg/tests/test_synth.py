import io
from statistics import median

import numpy as np
import pytest

from walkforest import (
    DataError,
    ExperimentConfig,
    coverage_experiment,
    generate_barabasi,
    load_graph,
    plant_xor,
    rf_baseline,
    stratified_split,
)
from walkforest.graph import FeatureGraph
from walkforest.synth import (
    write_records_tsv,
    write_summary_tsv,
    xor_of_ands,
    _scenario_for,
)


class TestXorOfAnds:
    def test_truth_table(self):
        for pattern in range(16):
            bits = [(pattern >> i) & 1 for i in range(4)]
            want = (bits[0] and bits[1]) ^ (bits[2] and bits[3])
            got = xor_of_ands(*[np.array([float(b)]) for b in bits])[0]
            assert got == want

    def test_specific_rows(self):
        assert xor_of_ands(np.array([1.0]), np.array([1.0]), np.array([0.0]), np.array([0.0]))[0] == 1
        assert xor_of_ands(np.array([1.0]), np.array([1.0]), np.array([1.0]), np.array([1.0]))[0] == 0


class TestPlantXor:
    def test_labels_match_independent_reevaluation(self):
        g = generate_barabasi(20, 1.2, 1, seed=5)
        sc = plant_xor(g, seed=9, modal_mode="single", n_samples=800)
        v1, v2, v3, v4 = sc.planted_nodes
        c = [sc.graph.feature_column(v, 0) for v in (v1, v2, v3, v4)]
        expected = np.logical_xor(
            np.logical_and(c[0] != 0, c[1] != 0), np.logical_and(c[2] != 0, c[3] != 0)
        ).astype(np.int8)
        np.testing.assert_array_equal(sc.graph.labels, expected)

    def test_multimodal_assignment_pattern(self):
        g = generate_barabasi(20, 1.2, 1, seed=6)
        sc = plant_xor(g, seed=10, modal_mode="multi", n_samples=800)
        v1, v2, v3, v4 = sc.planted_nodes
        cols = (
            sc.graph.feature_column(v1, 0),
            sc.graph.feature_column(v2, 1),
            sc.graph.feature_column(v3, 0),
            sc.graph.feature_column(v4, 1),
        )
        np.testing.assert_array_equal(sc.graph.labels, xor_of_ands(*cols))
        assert sc.graph.modalities == ("a", "b")

    def test_prevalence_near_three_eighths(self):
        g = generate_barabasi(30, 1.2, 1, seed=2)
        sc = plant_xor(g, seed=3, modal_mode="single", n_samples=1000)
        assert abs(float(np.mean(sc.graph.labels)) - 0.375) < 0.05

    def test_planted_nodes_connected(self):
        for seed in range(15):
            g = generate_barabasi(40, 1.2, 1, seed=seed)
            sc = plant_xor(g, seed=seed, modal_mode="single", n_samples=100)
            members = set(sc.planted_nodes)
            seen = {sc.planted_nodes[0]}
            frontier = [sc.planted_nodes[0]]
            while frontier:
                u = frontier.pop()
                for v in g.neighbors(u):
                    if int(v) in members and int(v) not in seen:
                        seen.add(int(v))
                        frontier.append(int(v))
            assert seen == members

    def test_all_features_binary(self):
        g = generate_barabasi(10, 1.2, 1, seed=7)
        sc = plant_xor(g, seed=1, modal_mode="multi", n_samples=200)
        for ref in sc.graph.present_features():
            col = sc.graph.feature_column(*ref)
            assert set(np.unique(col)) <= {0.0, 1.0}

    def test_no_connected_four_subgraph(self):
        g = load_graph(io.StringIO("a b\nc d\n"))
        with pytest.raises(DataError, match="connected 4-node"):
            plant_xor(g, seed=0, modal_mode="single", n_samples=50)

    def test_deterministic(self):
        g = generate_barabasi(20, 1.2, 1, seed=4)
        a = plant_xor(g, seed=8, modal_mode="single", n_samples=300)
        b = plant_xor(g, seed=8, modal_mode="single", n_samples=300)
        assert a.planted_nodes == b.planted_nodes
        np.testing.assert_array_equal(a.graph.labels, b.graph.labels)


def tiny_config(**kw):
    defaults = dict(
        n_nodes=12, power=1.2, n_samples=300, niter_grid=(3, 6), ntree=10,
        repetitions=2, vary_topology=False, modal_mode="single", seed=5,
    )
    defaults.update(kw)
    return ExperimentConfig(**defaults)


class TestCoverageExperiment:
    def test_record_shape(self):
        result = coverage_experiment(tiny_config())
        assert len(result.records) == 2 * 2  # reps x grid points
        for rec in result.records:
            assert rec.niter in (3, 6)
            assert 0.0 <= rec.auc <= 1.0
            assert rec.unique_modules >= 1

    def test_fixed_topology_reuses_scenario(self):
        config = tiny_config()
        a = _scenario_for(config, 0)
        b = _scenario_for(config, 1)
        assert a.graph.edges == b.graph.edges
        assert a.planted_nodes == b.planted_nodes
        np.testing.assert_array_equal(a.graph.labels, b.graph.labels)

    def test_vary_topology_fresh_scenarios(self):
        config = tiny_config(vary_topology=True)
        a = _scenario_for(config, 0)
        b = _scenario_for(config, 1)
        assert a.graph.edges != b.graph.edges or a.planted_nodes != b.planted_nodes

    def test_aggregates_structure(self):
        result = coverage_experiment(tiny_config())
        aggs = result.aggregates()
        assert [row["niter"] for row in aggs] == [3, 6]
        for row in aggs:
            assert 0.0 <= row["coverage"] <= 1.0

    def test_tsv_writers(self, tmp_path):
        result = coverage_experiment(tiny_config())
        write_records_tsv(result, tmp_path / "runs.tsv")
        write_summary_tsv(result, tmp_path / "summary.tsv")
        runs = (tmp_path / "runs.tsv").read_text().strip().splitlines()
        assert runs[0] == "rep\tniter\ttop1_hit\tunique_modules\tauc"
        assert len(runs) == 1 + len(result.records)
        summary = (tmp_path / "summary.tsv").read_text().strip().splitlines()
        assert summary[0] == "niter\tcoverage\tmedian_unique\tmedian_auc"

    def test_grid_must_be_sorted(self):
        with pytest.raises(DataError, match="sorted"):
            tiny_config(niter_grid=(6, 3))

    @pytest.mark.slow
    def test_unique_modules_shrink_with_iterations(self):
        config = ExperimentConfig(
            n_nodes=30, power=1.2, n_samples=600, niter_grid=(10, 50, 200),
            ntree=50, repetitions=5, vary_topology=False, modal_mode="single", seed=77,
        )
        result = coverage_experiment(config)
        med = {n: median(r.unique_modules for r in result.per_niter(n)) for n in (10, 50, 200)}
        assert med[200] <= med[50] <= med[10]

    @pytest.mark.slow
    def test_coverage_trend_monotone_in_medians(self):
        config = ExperimentConfig(
            n_nodes=25, power=1.2, n_samples=600, niter_grid=(5, 25, 100),
            ntree=40, repetitions=6, vary_topology=False, modal_mode="single", seed=13,
        )
        result = coverage_experiment(config)
        cov = [result.coverage(n) for n in (5, 25, 100)]
        inversions = sum(1 for a, b in zip(cov, cov[1:]) if b < a)
        assert inversions <= 1
        assert cov[-1] >= cov[0]


class TestRfBaseline:
    def noise_graph(self, seed=0, n_nodes=12, n_samples=400):
        g = generate_barabasi(n_nodes, 1.2, 1, seed=seed)
        rng = np.random.default_rng(seed + 1)
        cols = {g.node_names[i]: rng.integers(0, 2, n_samples).astype(float) for i in range(n_nodes)}
        labels = rng.integers(0, 2, n_samples).astype(np.int8)
        return g.with_modality("m", cols).with_labels(labels)

    def test_noise_auc_near_half(self):
        aucs = []
        for seed in range(6):
            g = self.noise_graph(seed=seed)
            train, test = stratified_split(g.labels, 0.8, np.random.default_rng(seed))
            res = rf_baseline(g, train, test, n_trees=60, top_k=4, seed=seed)
            aucs.append(res["test_auc"])
        assert abs(float(np.mean(aucs)) - 0.5) < 0.1

    def test_xor_with_all_features_selected(self):
        g = generate_barabasi(10, 1.2, 1, seed=3)
        sc = plant_xor(g, seed=3, modal_mode="single", n_samples=1000)
        train, test = stratified_split(sc.graph.labels, 0.8, np.random.default_rng(0))
        n_features = len(sc.graph.present_features())
        res = rf_baseline(sc.graph, train, test, n_trees=80, top_k=n_features, seed=1)
        assert res["report"]["accuracy"] > 0.9

    def test_top_k_zero_error(self):
        g = self.noise_graph()
        with pytest.raises(DataError, match="top_k"):
            rf_baseline(g, np.arange(300), np.arange(300, 400), n_trees=5, top_k=0)

    def test_top_k_exceeds_features_error(self):
        g = self.noise_graph()
        with pytest.raises(DataError, match="exceeds"):
            rf_baseline(g, np.arange(300), np.arange(300, 400), n_trees=5, top_k=999)

    def test_selected_features_deterministic(self):
        g = self.noise_graph(seed=4)
        train, test = np.arange(300), np.arange(300, 400)
        a = rf_baseline(g, train, test, n_trees=20, top_k=3, seed=9)
        b = rf_baseline(g, train, test, n_trees=20, top_k=3, seed=9)
        assert a["selected_features"] == b["selected_features"]
        assert a["report"] == b["report"]

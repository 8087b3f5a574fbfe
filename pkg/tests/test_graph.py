import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from walkforest import (
    DataError,
    attach_labels,
    attach_modality,
    default_walk_size,
    generate_barabasi,
    induced_edges,
    load_graph,
    neighbors,
    random_walk,
)
from walkforest.errors import DataWarning
from walkforest.graph import FeatureGraph, edge_key


def graph_from(text):
    return load_graph(io.StringIO(text))


class TestLoadGraph:
    def test_simple_chain(self):
        g = graph_from("a b\nb c\n")
        assert g.n_nodes == 3
        assert g.n_edges == 2
        assert g.node_names == ("a", "b", "c")

    def test_dedupe_and_self_loop_warn(self):
        with pytest.warns(DataWarning) as record:
            g = graph_from("a b\nb a\na a\n")
        assert g.n_nodes == 2
        assert g.n_edges == 1
        assert len(record) == 2

    def test_zero_edges_error(self):
        with pytest.raises(DataError, match="zero edges"):
            graph_from("")

    def test_comments_and_blank_lines_skipped(self):
        g = graph_from("# header\na b\n\nb c\n")
        assert g.n_edges == 2

    def test_third_column_ignored(self):
        g = graph_from("a\tb\t0.9\nb\tc\t0.1\n")
        assert g.n_edges == 2

    def test_first_appearance_ids(self):
        g = graph_from("z y\ny x\n")
        assert g.node_id("z") == 0
        assert g.node_id("y") == 1

    def test_unreadable_source(self):
        with pytest.raises(DataError, match="unreadable"):
            load_graph("/nonexistent/edges.tsv")


class TestAttachModality:
    def make_graph(self):
        return graph_from("a b\nb c\n")

    def test_basic_attach_and_readback(self):
        g = self.make_graph()
        rng = np.random.default_rng(0)
        matrix = rng.random((50, 3))
        lines = "a\tb\tc\n" + "\n".join("\t".join(repr(float(v)) for v in row) for row in matrix)
        g2 = attach_modality(g, "expr", io.StringIO(lines))
        assert g2.modalities == ("expr",)
        assert g2.n_samples == 50
        for i, name in enumerate("abc"):
            np.testing.assert_array_equal(g2.feature_column(g2.node_id(name), 0), matrix[:, i])

    def test_sample_count_mismatch(self):
        g = self.make_graph()
        g = attach_modality(g, "m1", io.StringIO("a\tb\n1\t2\n3\t4\n"))
        with pytest.raises(DataError, match="samples"):
            attach_modality(g, "m2", io.StringIO("a\tb\n1\t2\n"))

    def test_partial_coverage_allowed(self):
        g = self.make_graph()
        g = attach_modality(g, "m1", io.StringIO("a\tb\n1\t2\n3\t4\n"))
        assert g.has_feature(g.node_id("a"), 0)
        assert not g.has_feature(g.node_id("c"), 0)

    def test_extra_columns_dropped_with_warning(self):
        g = self.make_graph()
        with pytest.warns(DataWarning, match="dropped 1 column"):
            g2 = attach_modality(g, "m1", io.StringIO("a\tb\tzz\n1\t2\t3\n"))
        assert g2.n_samples == 1
        assert len(g2.present_features()) == 2

    def test_duplicate_modality_name(self):
        g = self.make_graph()
        g = attach_modality(g, "m1", io.StringIO("a\tb\n1\t2\n"))
        with pytest.raises(DataError, match="duplicate modality"):
            attach_modality(g, "m1", io.StringIO("a\tb\n1\t2\n"))

    def test_csv_delimiter_and_missing_cells(self):
        g = self.make_graph()
        g2 = attach_modality(g, "m1", io.StringIO("a,b,c\n1,,3\n4,NA,nan\n"))
        col_b = g2.feature_column(g2.node_id("b"), 0)
        assert np.isnan(col_b).all()


class TestAttachLabels:
    def make_featured(self):
        g = graph_from("a b\nb c\n")
        return attach_modality(g, "m", io.StringIO("a\tb\tc\n" + "\n".join("1\t0\t1" for _ in range(6))))

    def test_ok(self):
        g = attach_labels(self.make_featured(), io.StringIO("0\n1\n0\n1\n0\n1\n"))
        assert g.labels.sum() == 3

    def test_non_binary_value(self):
        with pytest.raises(DataError, match="must be 0 or 1"):
            attach_labels(self.make_featured(), io.StringIO("0\n1\n2\n0\n1\n0\n"))

    def test_single_class(self):
        with pytest.raises(DataError, match="single-class"):
            attach_labels(self.make_featured(), io.StringIO("0\n0\n0\n0\n0\n0\n"))

    def test_length_mismatch(self):
        with pytest.raises(DataError, match="label count"):
            attach_labels(self.make_featured(), io.StringIO("0\n1\n"))


class TestBarabasi:
    def test_node_and_edge_counts_30(self):
        g = generate_barabasi(30, 1.2, 1, seed=1)
        assert g.n_nodes == 30
        assert g.n_edges == 29
        assert _is_connected(g)

    def test_node_and_edge_counts_50(self):
        g = generate_barabasi(50, 1.2, 1, seed=99)
        assert g.n_nodes == 50
        assert g.n_edges == 49

    def test_two_nodes(self):
        g = generate_barabasi(2, 1.0, 1, seed=5)
        assert g.edges == frozenset({(0, 1)})

    def test_deterministic(self):
        a = generate_barabasi(40, 1.2, 2, seed=123)
        b = generate_barabasi(40, 1.2, 2, seed=123)
        assert a.edges == b.edges

    def test_heavy_tail_degrees(self):
        g = generate_barabasi(2000, 1.0, 1, seed=3)
        degrees = np.array([len(g.neighbors(i)) for i in range(g.n_nodes)])
        assert degrees.max() > 10 * np.median(degrees)

    def test_bad_args(self):
        with pytest.raises(DataError):
            generate_barabasi(1, 1.0, 1, seed=0)
        with pytest.raises(DataError):
            generate_barabasi(5, 0.0, 1, seed=0)
        with pytest.raises(DataError):
            generate_barabasi(5, 1.0, 0, seed=0)


class TestRandomWalk:
    def test_walk_size_and_edges(self):
        g = generate_barabasi(30, 1.2, 1, seed=2)
        size = default_walk_size(30)
        assert size == 6
        walk = random_walk(g, range(30), size, np.random.default_rng(0))
        assert len(walk.visits) == 6
        assert len(walk.traversed_edges) == 5

    def test_two_node_path_alternates(self):
        g = graph_from("a b\n")
        walk = random_walk(g, [0, 1], 4, np.random.default_rng(1))
        assert list(walk.visits[::2]) == [walk.visits[0]] * 2
        assert len(set(walk.visits)) == 2

    def test_singleton_padding(self):
        g = graph_from("a b\n")
        walk = random_walk(g, [0], 3, np.random.default_rng(0))
        assert walk.visits == (0, 0, 0)
        assert walk.traversed_edges == ()

    def test_empty_allowed_set(self):
        g = graph_from("a b\n")
        with pytest.raises(DataError, match="non-empty"):
            random_walk(g, [], 3, np.random.default_rng(0))

    def test_start_nodes_restriction(self):
        g = graph_from("a b\nb c\nc d\n")
        for seed in range(10):
            walk = random_walk(g, range(4), 3, np.random.default_rng(seed), start_nodes=[2])
            assert walk.visits[0] == 2

    @settings(max_examples=40, deadline=None)
    @given(
        n=st.integers(min_value=3, max_value=25),
        seed=st.integers(min_value=0, max_value=10_000),
        size=st.integers(min_value=1, max_value=12),
    )
    def test_walks_never_traverse_non_edges(self, n, seed, size):
        g = generate_barabasi(n, 1.1, 1, seed=seed)
        rng = np.random.default_rng(seed + 1)
        subset_size = int(rng.integers(1, n + 1))
        allowed = rng.choice(n, size=subset_size, replace=False)
        walk = random_walk(g, allowed, size, rng)
        assert len(walk.visits) == size
        allowed_set = set(int(a) for a in allowed)
        assert set(walk.visits) <= allowed_set
        it = iter(walk.traversed_edges)
        for u, v in zip(walk.visits, walk.visits[1:]):
            if u == v:
                continue  # padded steps traverse nothing
            e = next(it)
            assert e == edge_key(u, v)
            assert e in g.edges


class TestNeighborsAndInduced:
    def test_star(self):
        g = graph_from("hub a\nhub b\nhub c\n")
        hub = g.node_id("hub")
        assert neighbors(g, hub) == {g.node_id(x) for x in "abc"}
        assert neighbors(g, g.node_id("a")) == {hub}

    def test_neighbors_after_dedupe(self):
        with pytest.warns(DataWarning):
            g = graph_from("a b\nb a\n")
        assert neighbors(g, 0) == {1}

    def test_triangle_induced(self):
        g = graph_from("a b\nb c\nc a\n")
        assert len(induced_edges(g, {0, 1, 2})) == 3
        assert induced_edges(g, {0}) == set()
        assert induced_edges(g, {0, 1}) == {(0, 1)}


class TestImmutability:
    def test_feature_columns_read_only(self):
        g = graph_from("a b\n")
        g = attach_modality(g, "m", io.StringIO("a\tb\n1\t2\n"))
        with pytest.raises(ValueError):
            g.feature_column(0, 0)[0] = 99.0

    def test_attach_returns_new_instance(self):
        g = graph_from("a b\n")
        g2 = attach_modality(g, "m", io.StringIO("a\tb\n1\t2\n"))
        assert g.modalities == ()
        assert g2.modalities == ("m",)


def _is_connected(g: FeatureGraph) -> bool:
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v in g.neighbors(u):
            if int(v) not in seen:
                seen.add(int(v))
                stack.append(int(v))
    return len(seen) == g.n_nodes

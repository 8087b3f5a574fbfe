"""Feature graphs: construction, file ingestion, scale-free generation, random walks.

A :class:`FeatureGraph` is an undirected graph whose nodes each carry one
feature column per modality over a shared sample axis, plus binary labels.
Graphs are immutable once built; the ``attach_*`` helpers return new
instances that share the untouched arrays.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import DataError, DataWarning

NodeId = int
ModalityId = int
Edge = tuple[int, int]
FeatureRef = tuple[int, int]  # (node id, modality id)


def edge_key(u: int, v: int) -> Edge:
    """Canonical unordered form of an edge."""
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class Walk:
    """A random walk: ordered node visits plus the edges it stepped over.

    Visits may repeat.  Padded (stuck) steps repeat the current node and
    contribute no traversed edge.
    """

    visits: tuple[int, ...]
    traversed_edges: tuple[Edge, ...]

    @cached_property
    def node_set(self) -> frozenset[int]:
        return frozenset(self.visits)

    @cached_property
    def unique_edges(self) -> tuple[Edge, ...]:
        return tuple(sorted(set(self.traversed_edges)))


class FeatureGraph:
    """Undirected node-attributed graph with per-modality feature columns."""

    def __init__(
        self,
        node_names: Iterable[str],
        edges: Iterable[Edge],
        modalities: Iterable[str] = (),
        features: Mapping[FeatureRef, np.ndarray] | None = None,
        labels: np.ndarray | None = None,
    ):
        self.node_names: tuple[str, ...] = tuple(node_names)
        if len(set(self.node_names)) != len(self.node_names):
            raise DataError("duplicate node names")
        self._name_to_id = {name: i for i, name in enumerate(self.node_names)}

        n = len(self.node_names)
        edge_set: set[Edge] = set()
        for u, v in edges:
            if not (0 <= u < n and 0 <= v < n):
                raise DataError(f"edge ({u}, {v}) references an unknown node")
            if u == v:
                raise DataError(f"self-loop on node {u}")
            edge_set.add(edge_key(u, v))
        self.edges: frozenset[Edge] = frozenset(edge_set)

        adj: list[list[int]] = [[] for _ in range(n)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        self._adj = tuple(np.array(sorted(a), dtype=np.int64) for a in adj)

        self.modalities: tuple[str, ...] = tuple(modalities)
        if len(set(self.modalities)) != len(self.modalities):
            raise DataError("duplicate modality names")

        self._features: dict[FeatureRef, np.ndarray] = {}
        self.n_samples: int | None = None
        if features:
            for (nid, mid), col in features.items():
                if not (0 <= nid < n) or not (0 <= mid < len(self.modalities)):
                    raise DataError(f"feature ({nid}, {mid}) references unknown node/modality")
                arr = np.asarray(col, dtype=np.float64)
                if arr.ndim != 1:
                    raise DataError("feature columns must be 1-D")
                if self.n_samples is None:
                    self.n_samples = arr.size
                elif arr.size != self.n_samples:
                    raise DataError("feature columns differ in sample count")
                arr = arr.copy()
                arr.setflags(write=False)
                self._features[(nid, mid)] = arr

        self.labels: np.ndarray | None = None
        if labels is not None:
            lab = np.asarray(labels)
            if not np.isin(lab, (0, 1)).all():
                raise DataError("labels must be 0/1")
            lab = lab.astype(np.int8)
            if self.n_samples is not None and lab.size != self.n_samples:
                raise DataError(
                    f"label count {lab.size} does not match sample count {self.n_samples}"
                )
            if lab.size and (lab.min() == lab.max()):
                raise DataError("single-class labels: need at least one sample of each class")
            self.n_samples = lab.size if self.n_samples is None else self.n_samples
            lab.setflags(write=False)
            self.labels = lab

    # -- basic structure ------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self.node_names)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def node_id(self, name: str) -> int:
        try:
            return self._name_to_id[name]
        except KeyError:
            raise DataError(f"unknown node name {name!r}") from None

    def modality_id(self, name: str) -> int:
        try:
            return self.modalities.index(name)
        except ValueError:
            raise DataError(f"unknown modality {name!r}") from None

    def neighbors(self, node: int) -> np.ndarray:
        if not 0 <= node < self.n_nodes:
            raise DataError(f"invalid node id {node}")
        return self._adj[node]

    def induced_edges(self, node_set: Iterable[int]) -> set[Edge]:
        members = set(node_set)
        return {e for e in self.edges if e[0] in members and e[1] in members}

    # -- features --------------------------------------------------------

    def has_feature(self, node: int, modality: int) -> bool:
        return (node, modality) in self._features

    def feature_column(self, node: int, modality: int) -> np.ndarray:
        return self._features[(node, modality)]

    def present_features(self) -> tuple[FeatureRef, ...]:
        """All present (node, modality) pairs, sorted."""
        return tuple(sorted(self._features))

    def node_features(self, node: int) -> tuple[FeatureRef, ...]:
        return tuple(
            (node, mid) for mid in range(len(self.modalities)) if (node, mid) in self._features
        )

    def feature_matrix(self, pool: Iterable[FeatureRef], rows: np.ndarray) -> np.ndarray:
        """Assemble a (len(rows), len(pool)) matrix of feature values."""
        pool = list(pool)
        out = np.empty((len(rows), len(pool)), dtype=np.float64)
        for c, ref in enumerate(pool):
            out[:, c] = self._features[ref][rows]
        return out

    # -- builders ---------------------------------------------------------

    def with_modality(self, name: str, columns: Mapping[str, np.ndarray]) -> "FeatureGraph":
        """Return a new graph with one extra modality.

        ``columns`` maps node names to 1-D value arrays; every array must
        share the graph's sample count.
        """
        if name in self.modalities:
            raise DataError(f"duplicate modality name {name!r}")
        mid = len(self.modalities)
        feats = dict(self._features)
        n_samples = self.n_samples
        for node_name, col in columns.items():
            nid = self.node_id(node_name)
            arr = np.asarray(col, dtype=np.float64)
            if arr.ndim != 1:
                raise DataError("feature columns must be 1-D")
            if n_samples is None:
                n_samples = arr.size
            elif arr.size != n_samples:
                raise DataError(
                    f"modality {name!r} has {arr.size} samples, expected {n_samples}"
                )
            feats[(nid, mid)] = arr
        out = FeatureGraph(
            self.node_names,
            self.edges,
            self.modalities + (name,),
            feats,
            self.labels,
        )
        return out

    def with_labels(self, labels: np.ndarray) -> "FeatureGraph":
        return FeatureGraph(self.node_names, self.edges, self.modalities, self._features, labels)


# -- file ingestion --------------------------------------------------------


def _iter_lines(source) -> Iterable[str]:
    if isinstance(source, (str, Path)):
        try:
            with open(source, "r", encoding="utf-8") as fh:
                yield from fh
        except OSError as exc:
            raise DataError(f"unreadable source {source}: {exc}") from exc
    elif isinstance(source, io.IOBase) or hasattr(source, "read"):
        yield from source
    else:
        raise DataError(f"unsupported source type {type(source).__name__}")


def _data_lines(source) -> Iterable[str]:
    for raw in _iter_lines(source):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        yield line


def load_graph(source) -> FeatureGraph:
    """Read a two-column edge list (TSV or whitespace separated).

    A third column (weight) is ignored.  Node ids are assigned in order of
    first appearance.  Duplicate edges and self-loops are dropped, one
    warning each.
    """
    names: list[str] = []
    name_to_id: dict[str, int] = {}
    edges: set[Edge] = set()

    def intern(name: str) -> int:
        if name not in name_to_id:
            name_to_id[name] = len(names)
            names.append(name)
        return name_to_id[name]

    for line in _data_lines(source):
        parts = line.split("\t") if "\t" in line else line.split()
        parts = [p.strip() for p in parts if p.strip()]
        if len(parts) < 2:
            raise DataError(f"edge line needs two node names: {line!r}")
        u = intern(parts[0])
        v = intern(parts[1])
        if u == v:
            warnings.warn(f"dropped self-loop on {parts[0]!r}", DataWarning, stacklevel=2)
            continue
        e = edge_key(u, v)
        if e in edges:
            warnings.warn(
                f"dropped duplicate edge {parts[0]!r}-{parts[1]!r}", DataWarning, stacklevel=2
            )
            continue
        edges.add(e)

    if not edges:
        raise DataError("zero edges in edge list")
    return FeatureGraph(names, edges)


def _split_table_line(line: str, delim: str) -> list[str]:
    if delim == "ws":
        return line.split()
    return [c.strip() for c in line.split(delim)]


def attach_modality(graph: FeatureGraph, name: str, source) -> FeatureGraph:
    """Attach one modality from a matrix file.

    Header row holds node names; each following row is one sample.  Cells
    may be empty, ``nan`` or ``NA`` for missing values.  Columns whose name
    is not a graph node are dropped with a warning.
    """
    lines = iter(_data_lines(source))
    try:
        header = next(lines)
    except StopIteration:
        raise DataError(f"empty matrix source for modality {name!r}") from None
    delim = "\t" if "\t" in header else ("," if "," in header else "ws")
    col_names = _split_table_line(header, delim)

    keep: list[tuple[int, str]] = []
    dropped = 0
    for i, cname in enumerate(col_names):
        if cname in graph._name_to_id:
            keep.append((i, cname))
        else:
            dropped += 1
    if dropped:
        warnings.warn(
            f"modality {name!r}: dropped {dropped} column(s) not matching any graph node",
            DataWarning,
            stacklevel=2,
        )
    if not keep:
        raise DataError(f"modality {name!r}: no columns match graph nodes")

    rows: list[list[float]] = []
    for line in lines:
        cells = _split_table_line(line, delim)
        if len(cells) != len(col_names):
            raise DataError(
                f"modality {name!r}: row has {len(cells)} cells, header has {len(col_names)}"
            )
        parsed = []
        for i, _ in keep:
            cell = cells[i]
            if cell == "" or cell.upper() in ("NA", "NAN"):
                parsed.append(np.nan)
            else:
                try:
                    val = float(cell)
                except ValueError:
                    raise DataError(f"modality {name!r}: bad value {cell!r}") from None
                if not np.isfinite(val):
                    raise DataError(f"modality {name!r}: non-finite value {cell!r}")
                parsed.append(val)
        rows.append(parsed)
    if not rows:
        raise DataError(f"modality {name!r}: no sample rows")

    matrix = np.asarray(rows, dtype=np.float64)
    columns = {cname: matrix[:, c] for c, (_, cname) in enumerate(keep)}
    return graph.with_modality(name, columns)


def attach_labels(graph: FeatureGraph, source) -> FeatureGraph:
    """Attach binary labels, one 0/1 value per line."""
    values = []
    for line in _data_lines(source):
        token = line.strip()
        if token not in ("0", "1"):
            raise DataError(f"labels must be 0 or 1, got {token!r}")
        values.append(int(token))
    if not values:
        raise DataError("empty label source")
    labels = np.asarray(values, dtype=np.int8)
    if graph.n_samples is not None and labels.size != graph.n_samples:
        raise DataError(f"label count {labels.size} does not match sample count {graph.n_samples}")
    return graph.with_labels(labels)


# -- generation and sampling -------------------------------------------------


def generate_barabasi(n_nodes: int, power: float, edges_per_step: int, seed: int) -> FeatureGraph:
    """Grow a scale-free graph by preferential attachment.

    Each new node attaches to ``edges_per_step`` distinct existing nodes
    drawn with probability proportional to ``degree**power + 1``; the +1
    lets degree-zero starts be chosen.  Deterministic given the seed.
    """
    if n_nodes < 2:
        raise DataError("n_nodes must be >= 2")
    if power <= 0:
        raise DataError("power must be > 0")
    if edges_per_step < 1:
        raise DataError("edges_per_step must be >= 1")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    degree = np.zeros(n_nodes, dtype=np.float64)
    edges: list[Edge] = []
    for new in range(1, n_nodes):
        k = min(edges_per_step, new)
        weights = degree[:new] ** power + 1.0
        probs = weights / weights.sum()
        targets = rng.choice(new, size=k, replace=False, p=probs)
        for t in np.sort(targets):
            edges.append(edge_key(int(t), new))
            degree[t] += 1.0
            degree[new] += 1.0
    names = [f"v{i}" for i in range(n_nodes)]
    return FeatureGraph(names, edges)


def random_walk(
    graph: FeatureGraph,
    allowed_nodes: Iterable[int],
    size: int,
    rng: np.random.Generator,
    start_nodes: Iterable[int] | None = None,
) -> Walk:
    """Uniform random walk of exactly ``size`` visits inside a node subset.

    The start is drawn uniformly from ``start_nodes`` (default: the whole
    allowed set); each step moves to a uniformly chosen neighbor within the
    subgraph induced by ``allowed_nodes``.  A node with no in-subset
    neighbor pads the remaining visits with itself.
    """
    allowed = sorted(set(allowed_nodes))
    if not allowed:
        raise DataError("allowed_nodes must be non-empty")
    if size < 1:
        raise DataError("walk size must be >= 1")
    for nid in allowed:
        if not 0 <= nid < graph.n_nodes:
            raise DataError(f"invalid node id {nid}")

    mask = np.zeros(graph.n_nodes, dtype=bool)
    mask[allowed] = True

    starts = allowed if start_nodes is None else sorted(set(start_nodes))
    if not starts:
        raise DataError("start_nodes must be non-empty")
    for nid in starts:
        if not mask[nid]:
            raise DataError(f"start node {nid} is outside the allowed set")

    start = starts[int(rng.integers(len(starts)))]
    visits = [start]
    traversed: list[Edge] = []
    cur = start
    while len(visits) < size:
        nbrs = graph._adj[cur]
        in_subset = nbrs[mask[nbrs]]
        if in_subset.size == 0:
            visits.extend([cur] * (size - len(visits)))
            break
        nxt = int(in_subset[int(rng.integers(in_subset.size))])
        visits.append(nxt)
        traversed.append(edge_key(cur, nxt))
        cur = nxt
    return Walk(tuple(visits), tuple(traversed))


def neighbors(graph: FeatureGraph, node: int) -> set[int]:
    return set(int(v) for v in graph.neighbors(node))


def induced_edges(graph: FeatureGraph, node_set: Iterable[int]) -> set[Edge]:
    return graph.induced_edges(node_set)


def default_walk_size(n_nodes: int) -> int:
    """Default per-tree feature budget: ceil(sqrt(#nodes))."""
    return max(2, math.ceil(math.sqrt(n_nodes)))

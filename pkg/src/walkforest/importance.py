"""Edge, module and node-feature importance scores, and module ranking.

Edge credit accumulates each module's out-of-bag performance onto the edges
forming it, once per slot per iteration; a module's normalized edge score is
the mean credit over its edges, and its overall score adds the module
tree's performance on top.  Raw accumulators are normalized by
(iterations * ntree) so scores stay on a [0, 1]-comparable scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .forest import FittedForest
from .graph import Edge, FeatureRef


@dataclass
class ModuleReport:
    """One deduplicated module with its scores.

    ``imp_m`` is exactly ``norm_edge_imp + perf``.  ``multiplicity`` counts
    the final slots carrying this node set; ``zero_edge`` flags degenerate
    single-node modules whose edge score defaults to 0.
    """

    nodes: tuple[int, ...]
    edges: tuple[Edge, ...]
    perf: float
    norm_edge_imp: float
    imp_m: float
    multiplicity: int
    feature_imps: dict[FeatureRef, float]
    zero_edge: bool = False


def edge_importance(forest: FittedForest) -> dict[Edge, float]:
    """Accumulated per-edge performance credit, normalized by iterations * ntree."""
    scale = forest.iterations * forest.params.ntree
    return {e: v / scale for e, v in forest.edge_acc.items()}


def module_edge_importance(module_edges: Iterable[Edge], edge_imp: dict[Edge, float]) -> float:
    """Mean edge importance over a module's edges; 0 for edgeless modules."""
    edges = list(module_edges)
    if not edges:
        return 0.0
    return sum(edge_imp.get(e, 0.0) for e in edges) / len(edges)


def node_feature_importance(forest: FittedForest, module_nodes: Iterable[int]) -> dict[FeatureRef, float]:
    """Normalized accumulated Gini gain for every feature of the module's nodes."""
    scale = forest.iterations * forest.params.ntree
    members = set(module_nodes)
    return {
        ref: forest.feature_acc.get(ref, 0.0) / scale
        for ref in forest.presence
        if ref[0] in members
    }


def unique_module_count(forest: FittedForest) -> int:
    """Number of distinct module node sets among the final slots."""
    return len({slot.module_nodes for slot in forest.slots})


def rank_modules(forest: FittedForest) -> list[ModuleReport]:
    """Deduplicate final slots by node set and rank by module importance.

    Per unique module: perf is the best slot's performance, edges come from
    that best slot, and the overall score is normalized edge importance
    plus perf.  Sorting is descending by score with deterministic
    tie-breaks (smaller node set, then lexicographic ids).
    """
    edge_imp = edge_importance(forest)
    groups: dict[frozenset, list] = {}
    for slot in forest.slots:
        groups.setdefault(slot.module_nodes, []).append(slot)

    reports = []
    for node_set, slots in groups.items():
        best = max(slots, key=lambda s: s.perf)
        nodes = tuple(sorted(node_set))
        edges = tuple(sorted(best.module_edges))
        norm = module_edge_importance(edges, edge_imp)
        perf = best.perf
        reports.append(
            ModuleReport(
                nodes=nodes,
                edges=edges,
                perf=perf,
                norm_edge_imp=norm,
                imp_m=norm + perf,
                multiplicity=len(slots),
                feature_imps=node_feature_importance(forest, nodes),
                zero_edge=not edges,
            )
        )
    reports.sort(key=lambda r: (-r.imp_m, len(r.nodes), r.nodes))
    return reports


# -- TSV output -------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def write_ranking_tsv(reports: Sequence[ModuleReport], node_names: Sequence[str], path) -> None:
    lines = ["rank\tmodule\tperf\tnorm_edge_imp\timp_m\tmultiplicity"]
    for rank, r in enumerate(reports, start=1):
        module = ";".join(node_names[n] for n in r.nodes)
        lines.append(
            f"{rank}\t{module}\t{_fmt(r.perf)}\t{_fmt(r.norm_edge_imp)}\t{_fmt(r.imp_m)}\t{r.multiplicity}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_edge_importance_tsv(forest: FittedForest, path) -> None:
    edge_imp = edge_importance(forest)
    lines = ["node_a\tnode_b\timp_e"]
    for (u, v), val in sorted(edge_imp.items()):
        lines.append(f"{forest.node_names[u]}\t{forest.node_names[v]}\t{_fmt(val)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_feature_importance_tsv(
    reports: Sequence[ModuleReport],
    node_names: Sequence[str],
    modality_names: Sequence[str],
    path,
) -> None:
    lines = ["module_rank\tnode\tmodality\timp_f"]
    for rank, r in enumerate(reports, start=1):
        for (nid, mid), val in sorted(r.feature_imps.items()):
            lines.append(f"{rank}\t{node_names[nid]}\t{modality_names[mid]}\t{_fmt(val)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

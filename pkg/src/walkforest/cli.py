"""Command line interface: simulate | fit | rank | explain | experiment.

Options resolve with precedence flags > config file > defaults.  Every
output directory gets a ``config.json`` manifest holding the resolved
configuration and seed; re-running it reproduces the outputs byte for
byte, regardless of the thread count.

Exit codes: 0 ok, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

import numpy as np

from . import synth
from .errors import DataError
from .explain import forest_shap, svimp
from .forest import (
    ForestParams,
    classification_report,
    feature_table,
    forest_scores,
    init_forest,
    load_forest,
    run,
    save_forest,
    stratified_split,
)
from .graph import attach_labels, attach_modality, generate_barabasi, load_graph
from .importance import (
    rank_modules,
    write_edge_importance_tsv,
    write_feature_importance_tsv,
    write_ranking_tsv,
)
from .tree import TreeParams, roc_auc

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

_SPLIT_STREAM = 1000


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits 2 by default; we reserve 2 for data errors
        raise _UsageError(message)


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _write_manifest(out: Path, command: str, conf: dict) -> None:
    # the output location is implicit, so byte-identical reruns may target
    # any directory
    payload = {"command": command, **{k: v for k, v in conf.items() if k != "out"}}
    _write_json(out / "config.json", payload)


def _log(quiet: bool, msg: str) -> None:
    if not quiet:
        print(msg, file=sys.stderr)


def _load_config_file(path: str) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"unreadable config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise DataError("config file must hold a JSON object")
    return data


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Merge defaults < config file < explicit flags.

    Per-flag argparse defaults are None, so a None value means "not given
    on the command line" and never overrides the config file.
    """
    resolved = dict(defaults)
    provided = dict(vars(args))
    config_path = provided.get("config")
    if config_path:
        file_conf = _load_config_file(config_path)
        unknown = set(file_conf) - set(defaults)
        if unknown:
            raise DataError(f"unknown config keys: {sorted(unknown)}")
        resolved.update(file_conf)
    resolved.update({k: v for k, v in provided.items() if k in defaults and v is not None})
    return resolved


def _tree_params(conf: dict) -> TreeParams:
    return TreeParams(
        min_leaf=conf["min_leaf"],
        max_depth=conf["max_depth"],
        min_gain=conf["min_gain"],
    )


def _parse_modalities(specs: list[str]) -> list[tuple[str, str]]:
    out = []
    for spec in specs:
        if "=" not in spec:
            raise DataError(f"--modality expects NAME=PATH, got {spec!r}")
        name, path = spec.split("=", 1)
        out.append((name, path))
    if not out:
        raise DataError("at least one --modality NAME=PATH is required")
    return out


def _load_dataset(conf: dict):
    graph = load_graph(conf["edges"])
    for name, path in _parse_modalities(conf["modality"]):
        graph = attach_modality(graph, name, path)
    if not conf.get("labels"):
        raise DataError("a labels file is required")
    return attach_labels(graph, conf["labels"])


# -- subcommands ------------------------------------------------------------------


_SIMULATE_DEFAULTS = {
    "nodes": 50,
    "power": 1.2,
    "edges_per_step": 1,
    "samples": 1000,
    "modal": "single",
    "seed": 0,
    "out": None,
}


def cmd_simulate(args: argparse.Namespace) -> int:
    conf = _resolve(args, _SIMULATE_DEFAULTS)
    if not conf["out"]:
        raise _UsageError("--out is required")
    out = Path(conf["out"])
    out.mkdir(parents=True, exist_ok=True)

    graph_seed = int(np.random.SeedSequence(conf["seed"], spawn_key=(0,)).generate_state(1)[0])
    plant_seed = int(np.random.SeedSequence(conf["seed"], spawn_key=(1,)).generate_state(1)[0])
    skeleton = generate_barabasi(conf["nodes"], conf["power"], conf["edges_per_step"], graph_seed)
    scenario = synth.plant_xor(skeleton, plant_seed, conf["modal"], conf["samples"])
    g = scenario.graph

    edge_lines = [f"{g.node_names[u]}\t{g.node_names[v]}" for u, v in sorted(g.edges)]
    (out / "edges.tsv").write_text("\n".join(edge_lines) + "\n", encoding="utf-8")

    for mid, mname in enumerate(g.modalities):
        header = "\t".join(g.node_names)
        rows = [header]
        matrix = np.column_stack([g.feature_column(nid, mid) for nid in range(g.n_nodes)])
        for r in range(g.n_samples):
            rows.append("\t".join(_fmt(v) for v in matrix[r]))
        (out / f"features_{mname}.tsv").write_text("\n".join(rows) + "\n", encoding="utf-8")

    (out / "labels.txt").write_text(
        "\n".join(str(int(v)) for v in g.labels) + "\n", encoding="utf-8"
    )
    _write_json(
        out / "planted.json",
        {
            "planted_nodes": [g.node_names[n] for n in scenario.planted_nodes],
            "modal_mode": scenario.modal_mode,
            "n_samples": scenario.n_samples,
            "label_prevalence": float(np.mean(g.labels)),
        },
    )
    _write_manifest(out, "simulate", conf)
    _log(args.quiet, f"simulated scenario in {out}")
    return EXIT_OK


_FIT_DEFAULTS = {
    "edges": None,
    "modality": [],
    "labels": None,
    "out": None,
    "ntree": 100,
    "niter": 100,
    "mtry0": None,
    "train_fraction": 0.8,
    "min_leaf": 1,
    "max_depth": None,
    "min_gain": 1e-12,
    "edge_source": "traversed",
    "seed": 0,
}


def cmd_fit(args: argparse.Namespace) -> int:
    conf = _resolve(args, _FIT_DEFAULTS)
    if not conf["out"] or not conf["edges"]:
        raise _UsageError("--out and --edges are required")
    out = Path(conf["out"])
    out.mkdir(parents=True, exist_ok=True)

    graph = _load_dataset(conf)
    split_rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(conf["seed"], spawn_key=(_SPLIT_STREAM,)))
    )
    train_idx, test_idx = stratified_split(graph.labels, conf["train_fraction"], split_rng)

    params = ForestParams(
        ntree=conf["ntree"],
        niter=conf["niter"],
        mtry0=conf["mtry0"],
        tree=_tree_params(conf),
        edge_source=conf["edge_source"],
    )
    state = init_forest(graph, train_idx, params, conf["seed"])

    def progress(t, st):
        best = max(s.best_perf for s in st.slots)
        mean = sum(s.best_perf for s in st.slots) / len(st.slots)
        _log(args.quiet, f"iter {t}/{params.niter} best={best:.4f} mean={mean:.4f}")

    forest = run(state, threads=args.threads, progress=progress)
    save_forest(forest, out / "forest.json")

    reports = rank_modules(forest)
    write_ranking_tsv(reports, forest.node_names, out / "modules.tsv")
    write_edge_importance_tsv(forest, out / "edge_importance.tsv")
    write_feature_importance_tsv(
        reports, forest.node_names, forest.modality_names, out / "feature_importance.tsv"
    )

    if test_idx.size:
        table = feature_table(graph, test_idx)
        labels = graph.labels[test_idx]
        report = classification_report(forest, table, labels)
        report["auc"] = roc_auc(forest_scores(forest, table, labels.size), labels)
        _write_json(out / "test_report.json", report)
    else:
        _log(args.quiet, "warning: train_fraction=1.0 leaves no test set; skipping test report")

    _write_manifest(out, "fit", conf)
    _log(args.quiet, f"fitted forest written to {out}")
    return EXIT_OK


_RANK_DEFAULTS = {"forest": None, "out": None}


def cmd_rank(args: argparse.Namespace) -> int:
    conf = _resolve(args, _RANK_DEFAULTS)
    if not conf["forest"] or not conf["out"]:
        raise _UsageError("--forest and --out are required")
    out = Path(conf["out"])
    out.mkdir(parents=True, exist_ok=True)
    forest = load_forest(conf["forest"])
    reports = rank_modules(forest)
    write_ranking_tsv(reports, forest.node_names, out / "modules.tsv")
    write_edge_importance_tsv(forest, out / "edge_importance.tsv")
    write_feature_importance_tsv(
        reports, forest.node_names, forest.modality_names, out / "feature_importance.tsv"
    )
    _log(args.quiet, f"rankings written to {out}")
    return EXIT_OK


_EXPLAIN_DEFAULTS = {
    "forest": None,
    "edges": None,
    "modality": [],
    "labels": None,
    "out": None,
    "row": [],
    "all": False,
}


def cmd_explain(args: argparse.Namespace) -> int:
    conf = _resolve(args, _EXPLAIN_DEFAULTS)
    if not conf["forest"] or not conf["out"] or not conf["edges"]:
        raise _UsageError("--forest, --edges and --out are required")
    if not conf["row"] and not conf["all"]:
        raise _UsageError("pass --row N (repeatable) and/or --all")
    out = Path(conf["out"])
    out.mkdir(parents=True, exist_ok=True)

    forest = load_forest(conf["forest"])
    graph = load_graph(conf["edges"])
    for name, path in _parse_modalities(conf["modality"]):
        graph = attach_modality(graph, name, path)
    if conf["labels"]:
        graph = attach_labels(graph, conf["labels"])
    if graph.n_samples is None:
        raise DataError("no feature data loaded")

    if tuple(graph.node_names) != tuple(forest.node_names) or tuple(graph.modalities) != tuple(
        forest.modality_names
    ):
        raise DataError("data files do not match the forest bundle's nodes/modalities")

    nn, mn = forest.node_names, forest.modality_names
    all_rows = np.arange(graph.n_samples, dtype=np.int64)
    table = feature_table(graph, all_rows)

    for row in conf["row"]:
        if not 0 <= row < graph.n_samples:
            raise DataError(f"row index {row} out of range (0..{graph.n_samples - 1})")
        row_values = {ref: float(col[row]) for ref, col in table.items()}
        exp = forest_shap(forest, row_values)
        pred = exp.prediction
        lines = ["node\tmodality\tsv"]
        for (nid, mid), v in sorted(exp.values.items()):
            lines.append(f"{nn[nid]}\t{mn[mid]}\t{_fmt(v)}")
        lines.append(f"# baseline\t{_fmt(exp.baseline)}")
        lines.append(f"# prediction\t{_fmt(pred)}")
        lines.append(f"# additivity_gap\t{_fmt(pred - exp.baseline - sum(exp.values.values()))}")
        (out / f"shap_row{row}.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    if conf["all"]:
        rows = [
            {ref: float(col[i]) for ref, col in table.items()} for i in range(graph.n_samples)
        ]
        summary = svimp(forest, rows)
        lines = ["node\tmodality\tsvimp_j"]
        for (nid, mid), v in sorted(summary.per_feature.items()):
            lines.append(f"{nn[nid]}\t{mn[mid]}\t{_fmt(v)}")
        (out / "svimp_features.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        lines = ["node\tsvimp_f"]
        for nid, v in sorted(summary.per_node.items()):
            lines.append(f"{nn[nid]}\t{_fmt(v)}")
        (out / "svimp_nodes.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    _log(args.quiet, f"explanations written to {out}")
    return EXIT_OK


_EXPERIMENT_DEFAULTS = {
    "nodes": 50,
    "power": 1.2,
    "edges_per_step": 1,
    "samples": 1000,
    "niter_grid": "10,25,50,100,200",
    "ntree": 100,
    "reps": 20,
    "vary_topology": False,
    "modal": "single",
    "train_fraction": 0.8,
    "mtry0": None,
    "seed": 0,
    "out": None,
}


def cmd_experiment(args: argparse.Namespace) -> int:
    conf = _resolve(args, _EXPERIMENT_DEFAULTS)
    if not conf["out"]:
        raise _UsageError("--out is required")
    out = Path(conf["out"])
    out.mkdir(parents=True, exist_ok=True)

    grid = tuple(int(x) for x in str(conf["niter_grid"]).split(",") if x.strip())
    config = synth.ExperimentConfig(
        n_nodes=conf["nodes"],
        power=conf["power"],
        edges_per_step=conf["edges_per_step"],
        n_samples=conf["samples"],
        niter_grid=grid,
        ntree=conf["ntree"],
        repetitions=conf["reps"],
        vary_topology=conf["vary_topology"],
        modal_mode=conf["modal"],
        train_fraction=conf["train_fraction"],
        mtry0=conf["mtry0"],
        seed=conf["seed"],
    )
    records: list[synth.RunRecord] = []
    for rep in range(config.repetitions):
        rep_records, _, _ = synth.run_repetition(config, rep, threads=args.threads)
        records.extend(rep_records)
        cov = sum(r.top1_hit for r in rep_records if r.niter == grid[-1])
        _log(args.quiet, f"rep {rep + 1}/{config.repetitions} top1@{grid[-1]}={cov}")
    result = synth.ExperimentResult(config=config, records=records)
    synth.write_records_tsv(result, out / "runs.tsv")
    synth.write_summary_tsv(result, out / "summary.tsv")
    _write_manifest(out, "experiment", conf)
    _log(args.quiet, f"experiment results written to {out}")
    return EXIT_OK


# -- entry point --------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="walkforest", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=1, help="worker threads (outputs identical)")
    parser.add_argument("--quiet", action="store_true", help="suppress progress logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic planted-module scenario")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--nodes", type=int)
    p.add_argument("--power", type=float)
    p.add_argument("--edges-per-step", dest="edges_per_step", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--modal", choices=["single", "multi"])
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="train a greedy forest and rank modules")
    p.add_argument("--config")
    p.add_argument("--edges")
    p.add_argument("--modality", action="append", metavar="NAME=PATH")
    p.add_argument("--labels")
    p.add_argument("--out")
    p.add_argument("--ntree", type=int)
    p.add_argument("--niter", type=int)
    p.add_argument("--mtry0", type=int)
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--min-leaf", dest="min_leaf", type=int)
    p.add_argument("--max-depth", dest="max_depth", type=int)
    p.add_argument("--min-gain", dest="min_gain", type=float)
    p.add_argument("--edge-source", dest="edge_source", choices=["traversed", "induced"])
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("rank", help="re-derive ranking TSVs from a saved forest")
    p.add_argument("--config")
    p.add_argument("--forest")
    p.add_argument("--out")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("explain", help="per-row SHAP attributions and SVIMP summaries")
    p.add_argument("--config")
    p.add_argument("--forest")
    p.add_argument("--edges")
    p.add_argument("--modality", action="append", metavar="NAME=PATH")
    p.add_argument("--labels")
    p.add_argument("--out")
    p.add_argument("--row", action="append", type=int)
    p.add_argument("--all", action="store_true", default=None)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("experiment", help="planted-module coverage experiment")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--nodes", type=int)
    p.add_argument("--power", type=float)
    p.add_argument("--edges-per-step", dest="edges_per_step", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--niter-grid", dest="niter_grid")
    p.add_argument("--ntree", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--vary-topology", dest="vary_topology", action="store_true", default=None)
    p.add_argument("--modal", choices=["single", "multi"])
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--mtry0", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

"""walkforest: predictive subnetwork detection with a greedy decision forest.

Trees are grown on random-walk-sampled node features of an attributed
graph, evolved by a greedy accept-or-revert loop with performance-weighted
resampling, then ranked by combined edge-usage and out-of-bag scores.
SHAP attributions explain individual predictions.
"""

from .errors import DataError, DataWarning
from .explain import (
    ImportanceSummary,
    ShapExplanation,
    brute_force_shap,
    conditional_expectation,
    forest_shap,
    svimp,
    treeshap,
)
from .forest import (
    FittedForest,
    ForestParams,
    ForestSlot,
    GreedyForestState,
    classification_report,
    feature_table,
    forest_predict,
    forest_scores,
    greedy_step,
    init_forest,
    load_forest,
    run,
    save_forest,
    snapshot,
    stratified_split,
)
from .graph import (
    FeatureGraph,
    Walk,
    attach_labels,
    attach_modality,
    default_walk_size,
    generate_barabasi,
    induced_edges,
    load_graph,
    neighbors,
    random_walk,
)
from .importance import (
    ModuleReport,
    edge_importance,
    module_edge_importance,
    node_feature_importance,
    rank_modules,
    unique_module_count,
)
from .synth import (
    ExperimentConfig,
    ExperimentResult,
    PlantedScenario,
    coverage_experiment,
    plant_xor,
    rf_baseline,
    xor_of_ands,
)
from .tree import (
    DecisionTree,
    TreeParams,
    fit_pool_tree,
    fit_tree,
    gini,
    gini_gain,
    oob_perf,
    predict_proba,
    roc_auc,
)

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "DataWarning",
    "DecisionTree",
    "ExperimentConfig",
    "ExperimentResult",
    "FeatureGraph",
    "FittedForest",
    "ForestParams",
    "ForestSlot",
    "GreedyForestState",
    "ImportanceSummary",
    "ModuleReport",
    "PlantedScenario",
    "ShapExplanation",
    "TreeParams",
    "Walk",
    "attach_labels",
    "attach_modality",
    "brute_force_shap",
    "classification_report",
    "conditional_expectation",
    "coverage_experiment",
    "default_walk_size",
    "edge_importance",
    "feature_table",
    "fit_pool_tree",
    "fit_tree",
    "forest_predict",
    "forest_scores",
    "forest_shap",
    "generate_barabasi",
    "gini",
    "gini_gain",
    "greedy_step",
    "induced_edges",
    "init_forest",
    "load_forest",
    "load_graph",
    "module_edge_importance",
    "neighbors",
    "node_feature_importance",
    "oob_perf",
    "plant_xor",
    "predict_proba",
    "random_walk",
    "rank_modules",
    "rf_baseline",
    "roc_auc",
    "run",
    "save_forest",
    "snapshot",
    "stratified_split",
    "svimp",
    "treeshap",
    "unique_module_count",
    "xor_of_ands",
]

"""Shared heavy fixtures: the three acceptance-scale experiment blocks.

Each block runs 20 repetitions of the planted-module experiment at the
acceptance settings (50-node scale-free graph, 100 slots, 200 iterations)
and is reused by every test that needs fitted forests at that scale.
"""

from dataclasses import dataclass

import numpy as np
import pytest

from walkforest import ExperimentConfig, stratified_split
from walkforest.synth import run_repetition

ACCEPT_SEED = 20240808
ACCEPT_REPS = 20
ACCEPT_NITER = 200
ACCEPT_NTREE = 100
ACCEPT_GRID = (25, 50, 100, ACCEPT_NITER)


@dataclass
class RepOutcome:
    rep: int
    planted: tuple
    hits: dict              # niter -> bool
    aucs: dict              # niter -> float
    reports_by_niter: dict  # niter -> ModuleReport list
    forest: object
    scenario: object
    train_idx: np.ndarray
    test_idx: np.ndarray

    @property
    def reports(self):
        return self.reports_by_niter[ACCEPT_NITER]


def run_block(vary: bool, modal: str) -> list[RepOutcome]:
    config = ExperimentConfig(
        n_nodes=50, power=1.2, n_samples=1000, niter_grid=ACCEPT_GRID,
        ntree=ACCEPT_NTREE, repetitions=ACCEPT_REPS, vary_topology=vary,
        modal_mode=modal, seed=ACCEPT_SEED,
    )
    outcomes = []
    for rep in range(ACCEPT_REPS):
        reports_by_niter = {}
        records, forest, scenario = run_repetition(
            config, rep, report_sink=lambda t, reports: reports_by_niter.__setitem__(t, reports)
        )
        split_rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(ACCEPT_SEED, spawn_key=(4, rep)))
        )
        train_idx, test_idx = stratified_split(scenario.graph.labels, 0.8, split_rng)
        outcomes.append(
            RepOutcome(
                rep=rep,
                planted=tuple(sorted(scenario.planted_nodes)),
                hits={r.niter: r.top1_hit for r in records},
                aucs={r.niter: r.auc for r in records},
                reports_by_niter=reports_by_niter,
                forest=forest,
                scenario=scenario,
                train_idx=train_idx,
                test_idx=test_idx,
            )
        )
    return outcomes


@pytest.fixture(scope="session")
def fixed_single():
    return run_block(vary=False, modal="single")


@pytest.fixture(scope="session")
def fixed_multi():
    return run_block(vary=False, modal="multi")


@pytest.fixture(scope="session")
def vary_single():
    return run_block(vary=True, modal="single")

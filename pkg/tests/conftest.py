"""Shared fixtures: one small fitted bundle reused across persistence/API/CLI tests."""

import pytest

from scorecast.forest import TrainConfig
from scorecast.pipeline import FitConfig, fit_bundle, simulate_corpus
from scorecast.simulator import SimConfig


@pytest.fixture(scope="session")
def small_setup():
    sim = SimConfig(
        n_questions=150,
        questions_per_test=20,
        n_tests=5,
        horizon_days=45,
        p_init_range=(0.15, 0.7),
        ability_sd=1.2,
    )
    world, profiles, sessions = simulate_corpus(120, seed=5, sim=sim)
    cfg = FitConfig(
        seed=2,
        d_mastery=8,
        forest=TrainConfig(n_trees=30, max_depth=4, seed=1),
        min_bucket_rows=30,
    )
    bundle, dataset, report = fit_bundle(sessions, world.catalog, cfg)
    return world, sessions, bundle, dataset

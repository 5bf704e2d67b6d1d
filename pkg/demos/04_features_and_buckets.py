"""From raw events to model-ready feature rows.

Four feature families: academic (AQ), behavioral (BQ), test-taking (TQ),
effort (EQ), every value in [0, 1], built strictly from events before the
target test.  Learners are segmented into four score buckets by their last
three results; the cohort trend table tracks behavior test-on-test.
"""

import numpy as np

from scorecast.bkt import BktParams
from scorecast.features import (
    FeatureBuilder,
    TargetTest,
    assign_bucket,
    build_dataset,
    cohort_trends,
    default_registry,
)
from scorecast.pipeline import simulate_corpus
from scorecast.simulator import SimConfig, filter_valid_tests

config = SimConfig(n_questions=200, questions_per_test=24, n_tests=8, horizon_days=60)
world, profiles, sessions = simulate_corpus(50, seed=3, sim=config)
valid = filter_valid_tests(sessions)

registry = default_registry(d_mastery=4)
params = {c: BktParams(0.3, 0.15, 0.2, 0.1) for c in range(config.n_concepts)}
builder = FeatureBuilder(registry, world.catalog, params)

print("=== the registry ===")
print(f"{len(registry)} features; group sizes:")
for g in ("AQ", "BQ", "TQ", "EQ"):
    n = sum(1 for d in registry.defs if d.group == g)
    print(f"  {g}: {n}  (mutable: {sum(1 for d in registry.defs if d.group == g and d.mutable)})")

lid = profiles[0].learner_id
hist = [s for s in valid if s.learner_id == lid]
scored = [s for s in hist if s.test_kind in ("mock", "sectional")]
target = TargetTest(scored[-1].test_id, scored[-1].test_kind, scored[-1].start_ts)
fv = builder.featurize(lid, hist, target)
print(f"\n=== one vector: {lid} before {target.test_id} ===")
for code in ("aq_0", "aq_6", "aq_16", "bq_17", "bq_20", "bq_21", "tq_29", "tq_30", "eq_41", "eq_42"):
    j = registry.index(code)
    print(f"  {code:<7} {registry.defs[j].name:<38} = {fv.values[j]:.3f}")
print(f"  cold-start flags: {fv.cold_start}")

print("\n=== buckets from the last three scores ===")
for prev in ([20.0, 25.0, 30.0], [90.0], [60.0, 70.0, 65.0], []):
    b, cold = assign_bucket(prev)
    print(f"  prev={prev!r:<22} -> {b.name}{' (cold start)' if cold else ''}")

print("\n=== dataset ===")
ds = build_dataset(valid, builder, train_frac=0.8)
print(f"{len(ds)} rows ({int(ds.is_train.sum())} train / {int((~ds.is_train).sum())} holdout)")
print(f"bucket counts: { {int(b): int((ds.bucket == b).sum()) for b in np.unique(ds.bucket)} }")
print(f"all values in [0,1]: {bool(np.all((ds.X >= 0) & (ds.X <= 1)))}")

print("\n=== cohort trends (learners with >= 6 valid tests) ===")
table = cohort_trends(valid, builder, min_tests=6, n_index=6)
print(f"{'test':>4} {'marks':>7} {'wasted':>8} {'unused':>8} {'overtime':>9}")
for i in range(6):
    print(
        f"{i + 1:>4} {table['marks'][i]:>7.1f} {table['wasted'][i]:>8.4f} "
        f"{table['unused_time'][i]:>8.4f} {table['overtime_incorrect'][i]:>9.4f}"
    )

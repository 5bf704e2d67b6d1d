"""Inverting the model: what should a learner change to gain N points?

The solver treats the forest as an oracle and walks one feature at a time
over a feasibility grid (bounds, direction locks, step caps), keeping moves
that best close the gap to the target score.  The result maps to actionable
feedback messages.  What-if evaluation answers the same question
interactively for any hand-picked override.
"""

import numpy as np

from scorecast.attribution import TreeExplainer
from scorecast.forest import TrainConfig
from scorecast.nudge import FeasibilitySpec, solve_nudge, whatif
from scorecast.pipeline import FitConfig, fit_bundle, simulate_corpus
from scorecast.simulator import SimConfig

config = SimConfig(
    n_questions=200, questions_per_test=28, n_tests=6, horizon_days=60,
    p_init_range=(0.15, 0.7), ability_sd=1.2,
)
world, _, sessions = simulate_corpus(300, seed=21, sim=config)
bundle, dataset, _ = fit_bundle(
    sessions, world.catalog,
    FitConfig(seed=6, d_mastery=8, forest=TrainConfig(n_trees=120, max_depth=5, seed=2)),
)

X, y, idx = dataset.rows(train=False)
buckets = dataset.bucket[idx]
row = int(np.argmin(y))  # the learner with the weakest holdout outcome
x, b = X[row], int(buckets[row])
forest = bundle.forest_for(b)

print("=== a 10-point nudge request ===")
result = solve_nudge(forest.predict_mean, x, 10.0, bundle.registry)
print(f"status: {result.status}  base {result.base_score:.1f} -> new {result.new_score:.1f} "
      f"(target {result.target:.1f})")
for d in result.deltas:
    print(f"  {d.code:<7} {d.delta:+.2f} -> {d.new_value:.2f}  (+{d.marginal_gain:.1f} points)")
print("feedback:")
for msg in result.messages:
    print(f"  - {msg}")

print("\n=== constrained version: only effort features, small steps ===")
spec = FeasibilitySpec(mutable=[c for c in bundle.registry.mutable_codes() if c.startswith("eq_")],
                       max_step=0.1)
constrained = solve_nudge(forest.predict_mean, x, 10.0, bundle.registry, spec)
print(f"status: {constrained.status}, changes: {constrained.delta_map()}")

print("\n=== what-if exploration ===")
explainer = TreeExplainer(forest, bundle.background_for(b))
baseline = whatif(x, {}, bundle.registry, forest, explainer)
print(f"baseline: {baseline.prediction:.1f} points, 90% band [{baseline.interval[0]:.1f}, {baseline.interval[1]:.1f}]")
for code, value in (("bq_21", 0.0), ("eq_41", 0.9), ("tq_30", 0.0)):
    r = whatif(x, {code: value}, bundle.registry, forest, explainer)
    name = bundle.registry.defs[bundle.registry.index(code)].name
    print(f"  set {code} ({name}) to {value}: {r.prediction:+.1f} "
          f"({r.prediction - baseline.prediction:+.2f} vs baseline)")

"""Training the per-bucket forests and reading their uncertainty.

One regression forest per score bucket, each leaf retaining its training
responses so any conditional quantile can be queried.  The (5%, 95%)
quantiles give a 90% prediction interval whose width is itself informative:
a volatile learner gets a wide band.
"""

import numpy as np

from scorecast.forest import TrainConfig
from scorecast.pipeline import FitConfig, fit_bundle, format_metrics_block, simulate_corpus
from scorecast.simulator import SimConfig

config = SimConfig(
    n_questions=200, questions_per_test=28, n_tests=6, horizon_days=60,
    p_init_range=(0.15, 0.7), ability_sd=1.2,
)
world, profiles, sessions = simulate_corpus(400, seed=9, sim=config)

fit_cfg = FitConfig(seed=4, d_mastery=8, forest=TrainConfig(n_trees=120, max_depth=5, seed=2))
bundle, dataset, report = fit_bundle(sessions, world.catalog, fit_cfg)

print("=== metrics ===")
print(format_metrics_block(report, bundle.n_features, fit_cfg.train_frac))

print("\n=== interval width as a confidence signal ===")
X, y, idx = dataset.rows(train=False)
buckets = dataset.bucket[idx]
b = int(buckets[0])
forest = bundle.forest_for(b)
rows = np.where(buckets == b)[0][:8]
band = forest.predict_interval(X[rows], 0.05)
yhat = forest.predict_mean(X[rows])
print(f"{'actual':>7} {'pred':>7} {'q05':>7} {'q95':>7} {'width':>7}")
for i, r in enumerate(rows):
    print(f"{y[r]:>7.1f} {yhat[i]:>7.1f} {band[i, 0]:>7.1f} {band[i, 1]:>7.1f} {band[i, 1] - band[i, 0]:>7.1f}")

cov = report["test"]["coverage"]
print(f"\nholdout coverage of the 90% band: {cov:.3f}")

print("\n=== quantile monotonicity ===")
taus = (0.05, 0.25, 0.5, 0.75, 0.95)
qs = forest.quantiles(X[rows], taus)
print(f"taus {taus} -> nondecreasing rows: {bool(np.all(np.diff(qs, axis=1) >= 0))}")

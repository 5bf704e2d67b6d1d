"""Breaking a prediction into per-feature contributions.

Shapley attributions are additive: the base value (expected prediction over
the background) plus all contributions equals the prediction exactly.  The
demo verifies that, checks the fast path against brute-force subset
enumeration on a small forest, and rolls contributions up by feature family.
"""

import numpy as np

from scorecast.attribution import TreeExplainer, force_plot_export, group_contributions, shap_brute
from scorecast.forest import TrainConfig, train
from scorecast.pipeline import FitConfig, fit_bundle, simulate_corpus
from scorecast.simulator import SimConfig

config = SimConfig(
    n_questions=200, questions_per_test=28, n_tests=6, horizon_days=60,
    p_init_range=(0.15, 0.7), ability_sd=1.2,
)
world, _, sessions = simulate_corpus(300, seed=13, sim=config)
bundle, dataset, _ = fit_bundle(
    sessions, world.catalog,
    FitConfig(seed=5, d_mastery=8, forest=TrainConfig(n_trees=100, max_depth=5, seed=1)),
)

X, y, idx = dataset.rows(train=False)
b = int(dataset.bucket[idx][0])
forest = bundle.forest_for(b)
explainer = TreeExplainer(forest, bundle.background_for(b))

print("=== one learner's force plot ===")
attr = explainer.shap_values(X[0])
record = force_plot_export(attr, bundle.registry)
print(f"base {record['base']:.2f} -> prediction {record['prediction']:.2f} (actual {y[0]:.1f})")
for item in record["items"][:6]:
    sign = "+" if item["phi"] >= 0 else ""
    print(f"  {item['code']:<9} {item['name']:<38} {sign}{item['phi']:.2f} points")
total = record["base"] + sum(i["phi"] for i in record["items"])
print(f"additivity check: base + sum(phi) - prediction = {total - record['prediction']:.2e}")

print("\n=== fast algorithm vs subset enumeration ===")
rng = np.random.default_rng(0)
Xs = rng.random((150, 6))
ys = 40 + 30 * Xs[:, 0] - 15 * Xs[:, 2] + rng.normal(0, 5, 150)
small = train(Xs, ys, TrainConfig(n_trees=10, max_depth=3, seed=4))
xq = rng.random(6)
fast = TreeExplainer(small, Xs).shap_values(xq)
brute = shap_brute(small, xq, Xs)
print(f"max |fast - brute| over features: {np.max(np.abs(fast.phi - brute.phi)):.2e}")

print("\n=== family rollup over 200 holdout rows ===")
batch = explainer.shap_batch(X[:200])
summary = group_contributions(batch, bundle.registry)
for group, share in sorted(summary.shares.items()):
    print(f"  {group}: {share:5.1f}% of total attribution mass")

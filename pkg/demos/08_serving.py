"""Persisting a trained bundle and serving it over HTTP.

The bundle is one self-validating file: JSON metadata plus binary sections
and a content digest.  The API serves predictions, explanations, what-if
evaluation, and nudges from an immutable snapshot; here an in-process test
client stands in for a real server (run ``scorecast serve`` for that).
"""

import tempfile

from fastapi.testclient import TestClient

from scorecast.api import create_app
from scorecast.bundle import load_bundle, save_bundle
from scorecast.forest import TrainConfig
from scorecast.pipeline import FitConfig, fit_bundle, simulate_corpus
from scorecast.simulator import SimConfig

config = SimConfig(
    n_questions=200, questions_per_test=28, n_tests=6, horizon_days=60,
    p_init_range=(0.15, 0.7), ability_sd=1.2,
)
world, _, sessions = simulate_corpus(250, seed=31, sim=config)
bundle, dataset, _ = fit_bundle(
    sessions, world.catalog,
    FitConfig(seed=8, d_mastery=8, forest=TrainConfig(n_trees=80, max_depth=5, seed=3)),
)

print("=== bundle round trip ===")
with tempfile.NamedTemporaryFile(suffix=".bundle", delete=False) as fh:
    path = fh.name
digest = save_bundle(bundle, path)
print(f"saved to {path}")
print(f"content digest: {digest[:32]}...")
reloaded = load_bundle(path)
print(f"reloaded: {len(reloaded.forests)} forests, {len(reloaded.registry)} features, "
      f"format v{reloaded.format_version}")

print("\n=== the API, in process ===")
client = TestClient(create_app(reloaded, sessions))
print(f"GET /healthz -> {client.get('/healthz').text}")

info = client.get("/v1/model/info").json()
print(f"GET /v1/model/info -> {info['n_features']} features, buckets {info['buckets']}")

features = next(iter(info["sample_features"].values()))
pred = client.post("/v1/predict", json={"features": features}).json()
print(f"POST /v1/predict -> yhat={pred['yhat']:.1f} band=[{pred['q05']:.1f}, {pred['q95']:.1f}] "
      f"bucket=B{pred['bucket']}")

what = client.post(
    "/v1/whatif", json={"features": features, "overrides": {"eq_41": 0.9}}
).json()
print(f"POST /v1/whatif (eq_41=0.9) -> yhat={what['yhat']:.1f}")

explain = client.post("/v1/explain", json={"features": features}).json()
top = explain["items"][0]
print(f"POST /v1/explain -> top driver {top['code']} ({top['phi']:+.2f} points)")

nudge = client.post("/v1/nudges", json={"features": features, "delta_y": 8.0}).json()
print(f"POST /v1/nudges (+8 points) -> {nudge['status']}, {len(nudge['deltas'])} changes")
for msg in nudge["messages"][:3]:
    print(f"  - {msg}")

lid = sessions[0].learner_id
by_learner = client.post("/v1/predict", json={"learner_id": lid}).json()
print(f"POST /v1/predict (learner_id={lid}) -> yhat={by_learner['yhat']:.1f}")

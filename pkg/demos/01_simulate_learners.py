"""Simulating a learner population with planted ground truth.

Every downstream model in this package is verifiable because the simulator
plants the process that generates correctness: a per-concept learn/guess/slip
chain shifted by learner ability against question difficulty.  This script
walks through the population, the event stream, the validity filter, and the
JSONL round trip.
"""

import collections
import tempfile

import numpy as np

from scorecast.pipeline import simulate_corpus
from scorecast.simulator import SimConfig, filter_valid_tests, ingest_log, write_log

config = SimConfig(n_questions=200, questions_per_test=24, n_tests=5, horizon_days=45)
world, profiles, sessions = simulate_corpus(60, seed=7, sim=config)

print("=== population ===")
print(f"{len(profiles)} learners; first three:")
for p in profiles[:3]:
    print(
        f"  {p.learner_id}: ability={p.ability:+.2f} learn_rate={p.learn_rate:.2f} "
        f"carelessness={p.carelessness:.2f} pace={p.pace_bias:.2f} engagement={p.engagement:.1f}/day"
    )

print("\n=== planted world ===")
print(f"{len(world.catalog)} questions over {config.n_concepts} concepts, {len(world.blueprints)} tests")
print(f"concept 0 truth: init={world.p_init[0]:.2f} transit={world.p_transit[0]:.2f} "
      f"guess={world.p_guess[0]:.2f} slip={world.p_slip[0]:.2f}")

print("\n=== event stream ===")
kinds = collections.Counter(e.kind for s in sessions for e in s.events)
print(f"{len(sessions)} sessions, {sum(kinds.values())} events")
for kind, count in kinds.most_common():
    print(f"  {kind:<15} {count}")

mock = [s for s in sessions if s.test_kind == "mock"]
print(f"\nmock test scores: mean={np.mean([s.score_pct for s in mock]):.1f} "
      f"min={min(s.score_pct for s in mock):.1f} max={max(s.score_pct for s in mock):.1f}")

print("\n=== validity filter (10% attempts AND 10% time) ===")
valid = filter_valid_tests(sessions)
print(f"kept {len(valid)} of {len(sessions)} sessions")

print("\n=== JSONL round trip ===")
with tempfile.NamedTemporaryFile(suffix=".jsonl", mode="w", delete=False) as fh:
    path = fh.name
write_log(sessions, path)
recovered = ingest_log(path)
print(f"wrote and re-read {len(recovered)} sessions; equal to originals: {recovered == sessions}")

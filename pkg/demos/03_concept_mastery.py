"""Cross-concept competency: factorization machine + random projection.

Knowledge tracing is per-concept and cannot share strength across similar
learners or concepts.  The factorization machine scores every (learner,
concept) pair through learned latent vectors; the resulting mastery row is
then compressed by a seeded random projection for the feature vector.
"""

import numpy as np

from scorecast.mastery import (
    FmConfig,
    ProjectionConfig,
    fit_fm,
    fm_score_naive,
    fm_score_rank,
    mastery_vector,
    project,
)

rng = np.random.default_rng(5)

print("=== planted low-rank attempt data ===")
n_learners, n_concepts, rank = 600, 40, 3
U = rng.normal(size=(n_learners, rank))
C = rng.normal(size=(n_concepts, rank))
triples = []
for u in range(n_learners):
    cs = rng.integers(0, n_concepts, size=30)
    p = 1 / (1 + np.exp(-(0.3 + U[u] @ C[cs].T)))
    ok = rng.random(30) < p
    triples.extend((f"u{u}", int(c), bool(o)) for c, o in zip(cs, ok))
print(f"{len(triples)} attempts from a rank-{rank} ground truth")

model = fit_fm(triples, n_concepts, FmConfig(rank=6, seed=2))
train_ll, hold_ll = model.loss_trace[-1]
ybar = np.mean([t[2] for t in triples])
baseline = float(-(ybar * np.log(ybar) + (1 - ybar) * np.log(1 - ybar)))
print(f"holdout log-loss {hold_ll:.4f} vs constant-rate baseline {baseline:.4f}")

print("\n=== the rank-k scoring identity ===")
w0, w, v = 0.0, np.zeros(2), np.array([[2.0], [3.0]])
print(f"naive pairwise sum:  {fm_score_naive(w0, w, v, [0, 1]):.6f}")
print(f"rank-k form:         {fm_score_rank(w0, w, v, [0, 1]):.6f}   (0.5*[(2+3)^2 - (4+9)] = 6)")

print("\n=== mastery rows and projection ===")
row, cold = mastery_vector(model, "u0")
print(f"learner u0 mastery across {n_concepts} concepts: "
      f"min={row.min():.2f} mean={row.mean():.2f} max={row.max():.2f} (cold={cold})")

proj = ProjectionConfig(input_dim=n_concepts, output_dim=8, seed=1, scheme="sign")
z = project(row, proj)
print(f"projected to {proj.output_dim} dims: {np.round(z, 3)}")

ratios = []
for seed in range(400):
    cfg = ProjectionConfig(n_concepts, 8, seed=seed)
    ratios.append(np.sum(project(row, cfg) ** 2) / np.sum(row**2))
print(f"norm preservation over 400 seeds: mean ratio {np.mean(ratios):.4f} (expect 1.0)")

a, b = rng.random(n_concepts), rng.random(n_concepts)
lhs = project(a + b, proj)
rhs = project(a, proj) + project(b, proj)
print(f"linearity: max |R(a+b) - (Ra+Rb)| = {np.max(np.abs(lhs - rhs)):.2e}")

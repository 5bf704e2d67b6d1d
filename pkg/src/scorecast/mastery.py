"""Cross-concept competency: a degree-2 factorization machine plus random projection.

The factorization machine scores (learner, concept) pairs through a two-hot
encoding; the sigmoid of the score is the predicted probability of answering
that concept correctly.  Stacking predictions over the whole concept catalog
gives a mastery row, which a seeded random projection compresses to a short
dense block for the downstream feature vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FmConfig",
    "FmModel",
    "ProjectionConfig",
    "fit_fm",
    "predict_fm",
    "mastery_vector",
    "mastery_matrix",
    "projection_matrix",
    "project",
    "fm_score_naive",
    "fm_score_rank",
    "export_mastery_csv",
]


def _sigmoid(z):
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)), np.exp(z) / (1.0 + np.exp(z)))


@dataclass
class FmConfig:
    rank: int = 8
    epochs: int = 15
    lr: float = 0.02
    reg: float = 0.03
    batch_size: int = 256
    init_scale: float = 0.1
    holdout_frac: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.rank < 1:
            raise ValueError("rank must be >= 1")


@dataclass
class FmModel:
    """Fitted weights over the index space [learners ++ concepts]."""

    w0: float
    w: np.ndarray  # (n_learners + n_concepts,)
    v: np.ndarray  # (n_learners + n_concepts, rank)
    learner_index: dict[str, int]
    n_concepts: int
    loss_trace: list[tuple[float, float]] = field(default_factory=list)  # (train, holdout)

    @property
    def n_learners(self) -> int:
        return len(self.learner_index)

    def concept_offset(self, concept_id: int) -> int:
        if not (0 <= concept_id < self.n_concepts):
            raise KeyError(f"unknown concept id {concept_id}")
        return self.n_learners + concept_id

    def is_known(self, learner_id: str) -> bool:
        return learner_id in self.learner_index


def fm_score_naive(w0: float, w: np.ndarray, v: np.ndarray, active: list[int]) -> float:
    """Reference scorer: explicit O(p^2) pairwise sum over active one-hot indexes."""
    s = w0 + sum(w[i] for i in active)
    for a in range(len(active)):
        for b in range(a + 1, len(active)):
            s += float(v[active[a]] @ v[active[b]])
    return float(s)


def fm_score_rank(w0: float, w: np.ndarray, v: np.ndarray, active: list[int]) -> float:
    """Rank-k scorer: 0.5 * sum_f [(sum_i v_if)^2 - sum_i v_if^2] plus linear terms."""
    s = w0 + sum(w[i] for i in active)
    vs = v[active]  # (m, k)
    tot = vs.sum(axis=0)
    s += 0.5 * float(tot @ tot - (vs * vs).sum())
    return float(s)


def fit_fm(
    attempts: list[tuple[str, int, bool]],
    n_concepts: int,
    config: FmConfig | None = None,
) -> FmModel:
    """Fit the factorization machine on (learner_id, concept_id, correct) triples.

    Mini-batch SGD on log-loss with a seeded shuffle each epoch, so a fixed
    (data, config) pair yields identical weights run to run.  The last
    ``holdout_frac`` of the shuffled data is held out for the per-epoch loss
    report and never trained on.
    """
    if not attempts:
        raise ValueError("attempts must be nonempty")
    cfg = config or FmConfig()
    rng = np.random.default_rng(cfg.seed)

    learners = sorted({a[0] for a in attempts})
    learner_index = {lid: i for i, lid in enumerate(learners)}
    for _, c, _ in attempts:
        if not (0 <= c < n_concepts):
            raise KeyError(f"concept id {c} outside catalog of size {n_concepts}")

    li = np.array([learner_index[a[0]] for a in attempts], dtype=np.intp)
    ci = np.array([len(learners) + a[1] for a in attempts], dtype=np.intp)
    y = np.array([1.0 if a[2] else 0.0 for a in attempts])

    n_index = len(learners) + n_concepts
    w0 = 0.0
    w = np.zeros(n_index)
    v = rng.normal(0.0, cfg.init_scale, size=(n_index, cfg.rank))

    order = rng.permutation(len(y))
    n_hold = int(len(y) * cfg.holdout_frac)
    hold, train = order[: n_hold], order[n_hold:]
    model = FmModel(w0, w, v, learner_index, n_concepts)

    def batch_scores(idx):
        vu, vc = v[li[idx]], v[ci[idx]]
        return w0 + w[li[idx]] + w[ci[idx]] + (vu * vc).sum(axis=1)

    def logloss(idx):
        p = np.clip(_sigmoid(batch_scores(idx)), 1e-12, 1.0 - 1e-12)
        return float(-(y[idx] * np.log(p) + (1.0 - y[idx]) * np.log(1.0 - p)).mean())

    for _ in range(cfg.epochs):
        perm = train[rng.permutation(len(train))]
        for start in range(0, len(perm), cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            u, c = li[idx], ci[idx]
            vu, vc = v[u], v[c]
            # summed (not averaged) batch gradient: one batch step matches the
            # per-sample SGD sweep evaluated at the batch-start parameters
            g = _sigmoid(w0 + w[u] + w[c] + (vu * vc).sum(axis=1)) - y[idx]
            w0 -= cfg.lr * float(g.mean())
            gw = np.zeros(n_index)
            np.add.at(gw, u, g)
            np.add.at(gw, c, g)
            gv = np.zeros_like(v)
            np.add.at(gv, u, g[:, None] * vc)
            np.add.at(gv, c, g[:, None] * vu)
            touched = np.unique(np.concatenate([u, c]))
            w[touched] -= cfg.lr * (gw[touched] + cfg.reg * w[touched])
            v[touched] -= cfg.lr * (gv[touched] + cfg.reg * v[touched])
        model.w0 = w0
        model.loss_trace.append((logloss(train), logloss(hold) if n_hold else float("nan")))
    model.w0, model.w, model.v = w0, w, v
    return model


def predict_fm(model: FmModel, learner_id: str, concept_id: int) -> tuple[float, bool]:
    """Predicted P(correct) for one (learner, concept) pair.

    Unknown learners take the cold-start path (bias + concept terms only);
    the second return value flags that case.
    """
    c = model.concept_offset(concept_id)
    if not model.is_known(learner_id):
        return float(_sigmoid(model.w0 + model.w[c])), True
    u = model.learner_index[learner_id]
    s = model.w0 + model.w[u] + model.w[c] + float(model.v[u] @ model.v[c])
    return float(_sigmoid(s)), False


def mastery_vector(model: FmModel, learner_id: str) -> tuple[np.ndarray, bool]:
    """Predicted P(correct) across the full concept catalog for one learner."""
    off = model.n_learners
    wc = model.w[off:]
    if not model.is_known(learner_id):
        return np.asarray(_sigmoid(model.w0 + wc)), True
    u = model.learner_index[learner_id]
    s = model.w0 + model.w[u] + wc + model.v[off:] @ model.v[u]
    return np.asarray(_sigmoid(s)), False


def mastery_matrix(model: FmModel, learner_ids: list[str]) -> np.ndarray:
    rows = [mastery_vector(model, lid)[0] for lid in learner_ids]
    return np.vstack(rows)


def export_mastery_csv(model: FmModel, learner_ids: list[str], path: str) -> None:
    """Write predicted P(correct) per (learner, concept) as CSV."""
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["learner_id", "concept_id", "p_correct"])
        for lid in learner_ids:
            row, _ = mastery_vector(model, lid)
            for c, p in enumerate(row):
                w.writerow([lid, c, repr(float(p))])


@dataclass(frozen=True)
class ProjectionConfig:
    """Seeded random projection; the matrix is regenerated, never stored."""

    input_dim: int
    output_dim: int = 50
    seed: int = 0
    scheme: str = "sign"  # "sign" (+-1/sqrt(d)) or "sparse" (Achlioptas, 1/3 density)

    def __post_init__(self) -> None:
        if self.output_dim > self.input_dim:
            raise ValueError("output_dim must be <= input_dim")
        if self.scheme not in ("sign", "sparse"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


def projection_matrix(config: ProjectionConfig) -> tuple[np.ndarray, float]:
    """Return (S, scale) with the projection R = scale * S.

    S holds the raw +-1 (or +-1/0) pattern so callers can apply the single
    scale multiplication last; integer accumulation keeps the map exactly
    additive whenever inputs and scale are exactly representable.
    """
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, config.input_dim, config.output_dim)))
    d, c = config.output_dim, config.input_dim
    if config.scheme == "sign":
        S = rng.integers(0, 2, size=(d, c)).astype(np.float64) * 2.0 - 1.0
        scale = 1.0 / np.sqrt(d)
    else:
        u = rng.random(size=(d, c))
        S = np.where(u < 1.0 / 6.0, 1.0, np.where(u < 1.0 / 3.0, -1.0, 0.0))
        scale = np.sqrt(3.0 / d)
    return S, float(scale)


def project(vec: np.ndarray, config: ProjectionConfig) -> np.ndarray:
    """Apply the seeded projection to a length-C vector."""
    v = np.asarray(vec, dtype=np.float64)
    if v.shape != (config.input_dim,):
        raise ValueError(f"expected shape ({config.input_dim},), got {v.shape}")
    S, scale = projection_matrix(config)
    return (S @ v) * scale

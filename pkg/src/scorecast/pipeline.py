"""End-to-end orchestration: logs in, fitted bundle and evaluation report out.

The time split happens first: upstream models (knowledge tracing, the
factorization machine) fit only on events up to the training cutoff, then
feature rows are built for every (learner, scored test with a prior) pair,
normalization bounds freeze on the training rows, and one forest trains per
score bucket plus a pooled fallback.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bkt import BktParams, fit_em
from .bundle import ModelBundle
from .features import (
    Bucket,
    Dataset,
    FeatureBuilder,
    assign_bucket,
    build_dataset,
    default_registry,
)
from .forest import Forest, Metrics, TrainConfig, evaluate, train
from .mastery import FmConfig, ProjectionConfig, fit_fm
from .simulator import SimConfig, TestSession, filter_valid_tests, generate_events, generate_population, make_world

__all__ = ["FitConfig", "simulate_corpus", "fit_bundle", "predict_dataset", "evaluate_split", "bucket_from_features", "format_metrics_block"]

SCORED_KINDS = ("mock", "sectional")


@dataclass
class FitConfig:
    seed: int = 0
    d_mastery: int = 16
    train_frac: float = 0.8
    forest: TrainConfig = field(default_factory=TrainConfig)
    fm: FmConfig | None = None
    bkt_max_iter: int = 100
    bkt_tol: float = 1e-6
    min_concept_obs: int = 30  # below this, a concept keeps the default prior
    min_bucket_rows: int = 50  # below this, a bucket falls back to the pooled forest
    include_pooled: bool = True
    interval_tau: float = 0.05


def simulate_corpus(n_learners: int, seed: int, sim: SimConfig | None = None):
    """Convenience wrapper: world + population + generated sessions."""
    cfg = sim or SimConfig()
    world = make_world(seed, cfg)
    profiles = generate_population(n_learners, seed, cfg)
    sessions = generate_events(profiles, world, seed)
    return world, profiles, sessions


def _train_cutoff(valid: list[TestSession], train_frac: float) -> int:
    """Timestamp below which upstream models may look: the split boundary."""
    by_learner: dict[str, list[TestSession]] = {}
    for s in valid:
        if s.test_kind in SCORED_KINDS and s.score_pct is not None:
            by_learner.setdefault(s.learner_id, []).append(s)
    targets = []
    for hist in by_learner.values():
        hist.sort(key=lambda s: (s.start_ts, s.session_id))
        targets.extend(s.start_ts for s in hist[1:])
    if not targets:
        raise ValueError("corpus has no (prior test, target test) pairs to learn from")
    targets.sort()
    n_train = int(round(train_frac * len(targets)))
    return targets[max(0, n_train - 1)]


def _concept_sequences(valid: list[TestSession], catalog_concepts: dict[str, int], cutoff: int):
    """Chronological correctness sequences per concept, one per (learner, concept)."""
    per_learner: dict[str, list] = {}
    for s in valid:
        for e in s.events:
            if e.kind == "attempt" and e.ts <= cutoff and e.question_id in catalog_concepts:
                per_learner.setdefault(s.learner_id, []).append(
                    (e.ts, catalog_concepts[e.question_id], bool(e.correct))
                )
    by_concept: dict[int, list[list[bool]]] = {}
    for events in per_learner.values():
        events.sort(key=lambda t: t[0])
        seqs: dict[int, list[bool]] = {}
        for _, c, ok in events:
            seqs.setdefault(c, []).append(ok)
        for c, seq in seqs.items():
            by_concept.setdefault(c, []).append(seq)
    return by_concept


def fit_bundle(
    sessions: list[TestSession],
    catalog,
    config: FitConfig | None = None,
) -> tuple[ModelBundle, Dataset, dict]:
    """Fit the whole chain on a session corpus; returns (bundle, dataset, report)."""
    cfg = config or FitConfig()
    valid = filter_valid_tests(sessions)
    cutoff = _train_cutoff(valid, cfg.train_frac)
    concept_of = {q.question_id: q.concept_id for q in catalog}
    n_concepts = 1 + max(q.concept_id for q in catalog)

    # knowledge-tracing fits, one concept at a time
    bkt_params: dict[int, BktParams] = {}
    bkt_report = {"fitted": 0, "defaulted": 0, "boundary": 0}
    for c, seqs in sorted(_concept_sequences(valid, concept_of, cutoff).items()):
        n_obs = sum(len(s) for s in seqs)
        if n_obs < cfg.min_concept_obs:
            bkt_report["defaulted"] += 1
            continue
        params, rep = fit_em(seqs, max_iter=cfg.bkt_max_iter, tol=cfg.bkt_tol)
        bkt_params[c] = params
        bkt_report["fitted"] += 1
        bkt_report["boundary"] += int(rep.boundary)

    # factorization model on the same training window
    triples = [
        (s.learner_id, concept_of[e.question_id], bool(e.correct))
        for s in valid
        for e in s.events
        if e.kind == "attempt" and e.ts <= cutoff and e.question_id in concept_of
    ]
    fm_cfg = cfg.fm or FmConfig(seed=cfg.seed, batch_size=1024)
    fm = fit_fm(triples, n_concepts, fm_cfg)
    projection = ProjectionConfig(input_dim=n_concepts, output_dim=cfg.d_mastery, seed=cfg.seed)

    registry = default_registry(cfg.d_mastery)
    builder = FeatureBuilder(registry, catalog, bkt_params, fm, projection)
    dataset = build_dataset(valid, builder, train_frac=cfg.train_frac)
    if len(dataset) == 0:
        raise ValueError("empty dataset: no learner has a scored test with a prior test")

    forests: dict[int, Forest] = {}
    fallback_buckets = []
    for b in Bucket:
        Xb, yb, _ = dataset.rows(train=True, bucket=b)
        if len(yb) < cfg.min_bucket_rows:
            fallback_buckets.append(int(b))
            continue
        fcfg = TrainConfig(
            n_trees=cfg.forest.n_trees, max_depth=cfg.forest.max_depth,
            min_leaf=cfg.forest.min_leaf, features_per_split=cfg.forest.features_per_split,
            seed=cfg.seed * 101 + int(b), quantiles=cfg.forest.quantiles,
        )
        forests[int(b)] = train(Xb, yb, fcfg, bucket=int(b))
    if cfg.include_pooled or fallback_buckets:
        Xa, ya, _ = dataset.rows(train=True)
        pooled_cfg = TrainConfig(
            n_trees=cfg.forest.n_trees, max_depth=cfg.forest.max_depth,
            min_leaf=cfg.forest.min_leaf, features_per_split=cfg.forest.features_per_split,
            seed=cfg.seed * 101, quantiles=cfg.forest.quantiles,
        )
        forests[0] = train(Xa, ya, pooled_cfg, bucket=0)

    backgrounds: dict[int, np.ndarray] = {}
    bg_rng = np.random.default_rng(cfg.seed)
    for key in forests:
        if key == 0:
            Xb, _, _ = dataset.rows(train=True)
        else:
            Xb, _, _ = dataset.rows(train=True, bucket=Bucket(key))
        if len(Xb) > 2000:
            Xb = Xb[bg_rng.choice(len(Xb), size=2000, replace=False)]
        backgrounds[key] = Xb

    bundle = ModelBundle(
        registry=registry,
        catalog=list(catalog),
        bkt_params=bkt_params,
        fm_model=fm,
        projection=projection,
        forests=forests,
        backgrounds=backgrounds,
        metadata={
            "seed": cfg.seed,
            "train_cutoff_ts": cutoff,
            "rows": len(dataset),
            "train_rows": int(dataset.is_train.sum()),
            "bkt": bkt_report,
            "fallback_buckets": fallback_buckets,
        },
    )
    report = {
        "train": evaluate_split(bundle, dataset, train=True, tau=cfg.interval_tau),
        "test": evaluate_split(bundle, dataset, train=False, tau=cfg.interval_tau),
    }
    bundle.metadata["metrics"] = {k: _split_report_dict(v) for k, v in report.items()}
    # one representative holdout row per bucket, for UI starting scenarios
    samples = {}
    Xh, _, idx = dataset.rows(train=False)
    for row, gi in zip(Xh, idx):
        b = int(dataset.bucket[gi])
        if b not in samples:
            samples[b] = {c: float(v) for c, v in zip(registry.codes, row)}
    bundle.metadata["sample_features"] = {str(k): v for k, v in sorted(samples.items())}
    return bundle, dataset, report


def predict_dataset(bundle: ModelBundle, X: np.ndarray, buckets: np.ndarray, tau: float | None = None):
    """Route rows to their bucket forests; optionally with interval bounds."""
    yhat = np.zeros(len(X))
    lo = np.zeros(len(X))
    hi = np.zeros(len(X))
    for b in np.unique(buckets):
        m = buckets == b
        forest = bundle.forest_for(int(b))
        yhat[m] = forest.predict_mean(X[m])
        if tau is not None:
            band = forest.predict_interval(X[m], tau)
            lo[m], hi[m] = band[:, 0], band[:, 1]
    return (yhat, lo, hi) if tau is not None else (yhat, None, None)


def evaluate_split(bundle: ModelBundle, dataset: Dataset, train: bool, tau: float = 0.05) -> dict:
    """Pooled and per-bucket metrics, interval coverage, and a pooled-model rerun."""
    X, y, idx = dataset.rows(train=train)
    buckets = dataset.bucket[idx]
    yhat, lo, hi = predict_dataset(bundle, X, buckets, tau)
    pooled_metrics = evaluate(y, yhat, {tau: lo, 1.0 - tau: hi})
    coverage = float(np.mean((y >= lo) & (y <= hi)))
    per_bucket = {}
    for b in np.unique(buckets):
        m = buckets == b
        per_bucket[int(b)] = evaluate(y[m], yhat[m])
    out = {
        "metrics": pooled_metrics,
        "coverage": coverage,
        "per_bucket": per_bucket,
        "n": len(y),
        "predictions": {"y": y, "yhat": yhat, "lo": lo, "hi": hi, "bucket": buckets, "idx": idx},
    }
    if 0 in bundle.forests:
        global_yhat = bundle.forests[0].predict_mean(X)
        out["pooled_model_metrics"] = evaluate(y, global_yhat)
    return out


def _split_report_dict(rep: dict) -> dict:
    d = {
        "metrics": rep["metrics"].to_dict(),
        "coverage": rep["coverage"],
        "n": rep["n"],
        "per_bucket": {str(k): v.to_dict() for k, v in rep["per_bucket"].items()},
    }
    if "pooled_model_metrics" in rep:
        d["pooled_model"] = rep["pooled_model_metrics"].to_dict()
    return d


def bucket_from_features(x: np.ndarray, registry) -> Bucket:
    """Serving-time bucket rule: the mean-of-last-3-scores feature, rescaled."""
    j = registry.index("aq_6")
    b, _ = assign_bucket([float(x[j]) * 100.0])
    return b


def write_dataset_csvs(dataset: Dataset, registry, out_dir: str) -> list[str]:
    """Per-bucket train/test CSVs (header: feature codes + y) plus a meta sidecar."""
    import csv
    import os

    os.makedirs(out_dir, exist_ok=True)
    written = []
    header = registry.codes + ["y"]
    for train in (True, False):
        for b in Bucket:
            X, y, _ = dataset.rows(train, b)
            name = f"{'train' if train else 'test'}_b{int(b)}.csv"
            path = os.path.join(out_dir, name)
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(header)
                for row, yy in zip(X, y):
                    w.writerow([repr(float(v)) for v in row] + [repr(float(yy))])
            written.append(path)
    meta_path = os.path.join(out_dir, "meta.csv")
    with open(meta_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["learner_id", "test_id", "as_of", "bucket", "split"])
        for i in range(len(dataset)):
            w.writerow(
                [
                    dataset.learner_ids[i],
                    dataset.test_ids[i],
                    int(dataset.as_of[i]),
                    int(dataset.bucket[i]),
                    "train" if dataset.is_train[i] else "test",
                ]
            )
    written.append(meta_path)
    return written


def read_dataset_csv(path: str, registry) -> tuple[np.ndarray, np.ndarray]:
    """Read one dataset CSV back; validates the header against the registry."""
    import csv

    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != registry.codes + ["y"]:
            raise ValueError(f"{path}: header does not match the feature registry")
        rows = [[float(v) for v in line] for line in r]
    if not rows:
        return np.zeros((0, len(registry))), np.zeros(0)
    arr = np.array(rows)
    return arr[:, :-1], arr[:, -1]


def format_metrics_block(report: dict, n_features: int, train_frac: float) -> str:
    """Human-readable summary table over the train and test splits."""

    def fmt(m: Metrics) -> str:
        rho = "n/a" if m.pearson_rho is None else f"{100 * m.pearson_rho:6.2f}"
        return f"RMSE {m.rmse:6.2f}  MAE {m.mae:6.2f}  MedAE {m.medae:6.2f}  rho% {rho}"

    lines = [
        f"{'model':<14} {'p':>4} {'n':>7} {'r':>5}  metrics",
        "-" * 78,
    ]
    for split in ("train", "test"):
        rep = report[split]
        m = rep["metrics"]
        lines.append(
            f"{'bucketed ' + split:<14} {n_features:>4} {rep['n']:>7} {train_frac:>5.2f}  {fmt(m)}"
        )
        if "pooled_model_metrics" in rep:
            lines.append(
                f"{'pooled   ' + split:<14} {n_features:>4} {rep['n']:>7} {train_frac:>5.2f}  {fmt(rep['pooled_model_metrics'])}"
            )
        lines.append(f"{'':14} interval coverage [q05,q95]: {rep['coverage']:.3f}")
    for b, m in sorted(report["test"]["per_bucket"].items()):
        lines.append(f"  bucket B{b} test: {fmt(m)}  (n={m.n})")
    return "\n".join(lines)

"""Command-line front end for the full pipeline.

Subcommands: simulate, featurize, train, eval, explain, nudge, trends, serve.
Exit codes: 0 success, 2 usage error, 1 runtime failure.  The ESQ_BUNDLE
environment variable, when set, overrides any --bundle flag.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

__all__ = ["main", "build_parser"]


def _bundle_path(args) -> str:
    return os.environ.get("ESQ_BUNDLE") or args.bundle


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scorecast", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a synthetic event log and question catalog")
    sim.add_argument("--students", type=int, required=True)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True, help="events JSONL path")
    sim.add_argument("--catalog", help="catalog CSV path (default: <out>.catalog.csv)")
    sim.add_argument("--concepts", type=int, default=50)
    sim.add_argument("--questions", type=int, default=400)
    sim.add_argument("--tests", type=int, default=6)
    sim.add_argument("--questions-per-test", type=int, default=32)
    sim.add_argument("--days", type=int, default=60)

    feat = sub.add_parser("featurize", help="logs -> per-bucket dataset CSVs + upstream artifacts")
    feat.add_argument("--events", required=True)
    feat.add_argument("--catalog", required=True)
    feat.add_argument("--out-dir", required=True)
    feat.add_argument("--seed", type=int, default=0)
    feat.add_argument("--d-mastery", type=int, default=16)
    feat.add_argument("--train-frac", type=float, default=0.8)
    feat.add_argument("--exclude", help="file with one learner_id per line to drop (bots/testers)")
    feat.add_argument("--bkt-diag-out", help="per-concept fit diagnostics CSV")
    feat.add_argument("--mastery-out", help="per (learner, concept) mastery CSV")

    tr = sub.add_parser("train", help="dataset CSVs -> fitted model bundle")
    tr.add_argument("--data-dir", required=True)
    tr.add_argument("--out", required=True)
    tr.add_argument("--trees", type=int, default=500)
    tr.add_argument("--depth", type=int, default=5)
    tr.add_argument("--min-leaf", type=int, default=5)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--no-pooled", action="store_true", help="skip the pooled fallback forest")

    ev = sub.add_parser("eval", help="re-evaluate a bundle on dataset CSVs")
    ev.add_argument("--bundle", required=True)
    ev.add_argument("--data-dir", required=True)
    ev.add_argument("--split", choices=("train", "test"), default="test")
    ev.add_argument("--pred-out", help="predictions CSV: learner_id,test_id,bucket,y,yhat,q05,q95")

    ex = sub.add_parser("explain", help="force-plot JSON for one feature vector")
    ex.add_argument("--bundle", required=True)
    ex.add_argument("--features", required=True, help="JSON file: {\"features\": {code: value}}")
    ex.add_argument("--out", help="output path (default stdout)")

    nu = sub.add_parser("nudge", help="feature changes achieving a desired score gain")
    nu.add_argument("--bundle", required=True)
    nu.add_argument("--features", required=True)
    nu.add_argument("--delta-y", type=float, required=True)
    nu.add_argument("--out", help="output path (default stdout)")

    td = sub.add_parser("trends", help="test-on-test cohort behavior table")
    td.add_argument("--events", required=True)
    td.add_argument("--catalog", required=True)
    td.add_argument("--bundle", help="reuse fitted knowledge-tracing parameters")
    td.add_argument("--min-tests", type=int, default=10)
    td.add_argument("--out", help="CSV path (default stdout)")

    sv = sub.add_parser("serve", help="run the HTTP API")
    sv.add_argument("--bundle", required=True)
    sv.add_argument("--events", help="optional event log enabling learner_id requests")
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8000)
    sv.add_argument("--cors-origin", help="allowed origin for the browser UI")
    return p


def _cmd_simulate(args) -> int:
    from .simulator import SimConfig, write_catalog, write_log
    from .pipeline import simulate_corpus

    cfg = SimConfig(
        n_concepts=args.concepts,
        n_questions=args.questions,
        n_tests=args.tests,
        questions_per_test=args.questions_per_test,
        horizon_days=args.days,
    )
    world, _, sessions = simulate_corpus(args.students, args.seed, cfg)
    write_log(sessions, args.out)
    catalog_path = args.catalog or args.out + ".catalog.csv"
    write_catalog(world.catalog, catalog_path)
    print(f"wrote {len(sessions)} sessions to {args.out}")
    print(f"wrote {len(world.catalog)} questions to {catalog_path}")
    return 0


def _cmd_featurize(args) -> int:
    from .bundle import ModelBundle, save_bundle
    from .pipeline import FitConfig, write_dataset_csvs
    from .simulator import ingest_log, read_catalog, filter_valid_tests
    from . import pipeline

    excluded = frozenset()
    if args.exclude:
        with open(args.exclude) as fh:
            excluded = frozenset(line.strip() for line in fh if line.strip())
    sessions = ingest_log(args.events, excluded_learners=excluded)
    catalog = read_catalog(args.catalog)
    cfg = FitConfig(seed=args.seed, d_mastery=args.d_mastery, train_frac=args.train_frac)

    valid = filter_valid_tests(sessions)
    cutoff = pipeline._train_cutoff(valid, cfg.train_frac)
    concept_of = {q.question_id: q.concept_id for q in catalog}
    n_concepts = 1 + max(q.concept_id for q in catalog)
    from .bkt import fit_em, write_diagnostics_csv

    bkt_params = {}
    bkt_fits = {}
    for c, seqs in sorted(pipeline._concept_sequences(valid, concept_of, cutoff).items()):
        if sum(len(s) for s in seqs) >= cfg.min_concept_obs:
            params, rep = fit_em(seqs, max_iter=cfg.bkt_max_iter, tol=cfg.bkt_tol)
            bkt_params[c] = params
            bkt_fits[c] = (params, rep)
    if args.bkt_diag_out:
        write_diagnostics_csv(bkt_fits, args.bkt_diag_out)
    from .mastery import FmConfig, ProjectionConfig, fit_fm

    triples = [
        (s.learner_id, concept_of[e.question_id], bool(e.correct))
        for s in valid
        for e in s.events
        if e.kind == "attempt" and e.ts <= cutoff and e.question_id in concept_of
    ]
    fm = fit_fm(triples, n_concepts, FmConfig(seed=cfg.seed, batch_size=1024))
    if args.mastery_out:
        from .mastery import export_mastery_csv

        export_mastery_csv(fm, sorted(fm.learner_index), args.mastery_out)
    projection = ProjectionConfig(input_dim=n_concepts, output_dim=cfg.d_mastery, seed=cfg.seed)
    from .features import FeatureBuilder, build_dataset, default_registry

    registry = default_registry(cfg.d_mastery)
    builder = FeatureBuilder(registry, catalog, bkt_params, fm, projection)
    dataset = build_dataset(valid, builder, train_frac=cfg.train_frac)
    paths = write_dataset_csvs(dataset, registry, args.out_dir)
    upstream = ModelBundle(
        registry=registry, catalog=catalog, bkt_params=bkt_params,
        fm_model=fm, projection=projection, forests={},
        metadata={"seed": cfg.seed, "train_cutoff_ts": cutoff, "stage": "upstream"},
    )
    upstream_path = os.path.join(args.out_dir, "upstream.bundle")
    save_bundle(upstream, upstream_path)
    print(f"wrote {len(paths)} dataset files and {upstream_path} ({len(dataset)} rows)")
    return 0


def _cmd_train(args) -> int:
    from .bundle import load_bundle, save_bundle
    from .features import Bucket
    from .forest import TrainConfig, train
    from .pipeline import read_dataset_csv, format_metrics_block, evaluate_split
    from .features import Dataset

    upstream = load_bundle(os.path.join(args.data_dir, "upstream.bundle"))
    registry = upstream.registry
    blocks, ys, buckets, splits = [], [], [], []
    for split in ("train", "test"):
        for b in Bucket:
            path = os.path.join(args.data_dir, f"{split}_b{int(b)}.csv")
            if not os.path.exists(path):
                continue
            X, y = read_dataset_csv(path, registry)
            blocks.append(X)
            ys.append(y)
            buckets.append(np.full(len(y), int(b)))
            splits.append(np.full(len(y), split == "train"))
    X = np.vstack(blocks)
    y = np.concatenate(ys)
    bucket = np.concatenate(buckets)
    is_train = np.concatenate(splits)
    if not is_train.any():
        print("error: no training rows in data dir", file=sys.stderr)
        return 1
    dataset = Dataset(X, y, bucket, [""] * len(y), [""] * len(y), np.zeros(len(y), dtype=np.int64), is_train)

    forests = {}
    rng = np.random.default_rng(args.seed)
    for b in Bucket:
        Xb, yb, _ = dataset.rows(train=True, bucket=b)
        if len(yb) < 50:
            continue
        cfg = TrainConfig(n_trees=args.trees, max_depth=args.depth, min_leaf=args.min_leaf, seed=args.seed * 101 + int(b))
        forests[int(b)] = train(Xb, yb, cfg, bucket=int(b))
    if not args.no_pooled or not forests:
        Xa, ya, _ = dataset.rows(train=True)
        forests[0] = train(Xa, ya, TrainConfig(n_trees=args.trees, max_depth=args.depth, min_leaf=args.min_leaf, seed=args.seed * 101), bucket=0)

    upstream.forests = forests
    backgrounds = {}
    for key in forests:
        Xb, _, _ = dataset.rows(train=True) if key == 0 else dataset.rows(train=True, bucket=Bucket(key))
        if len(Xb) > 2000:
            Xb = Xb[rng.choice(len(Xb), size=2000, replace=False)]
        backgrounds[key] = Xb
    upstream.backgrounds = backgrounds
    report = {
        "train": evaluate_split(upstream, dataset, train=True),
        "test": evaluate_split(upstream, dataset, train=False),
    }
    samples = {}
    Xh, _, idx = dataset.rows(train=False)
    if len(Xh) == 0:
        Xh, _, idx = dataset.rows(train=True)
    for row, gi in zip(Xh, idx):
        b = int(dataset.bucket[gi])
        if b not in samples:
            samples[b] = {c: float(v) for c, v in zip(registry.codes, row)}
    upstream.metadata["sample_features"] = {str(k): v for k, v in sorted(samples.items())}
    upstream.metadata["stage"] = "trained"
    upstream.metadata["metrics"] = {
        k: {"medae": v["metrics"].medae, "rmse": v["metrics"].rmse, "mae": v["metrics"].mae,
            "pearson_rho": v["metrics"].pearson_rho, "coverage": v["coverage"], "n": v["n"]}
        for k, v in report.items()
    }
    digest = save_bundle(upstream, args.out)
    train_frac = float(is_train.mean())
    print(format_metrics_block(report, len(registry), train_frac))
    print(f"wrote bundle {args.out} (digest {digest[:16]}...)")
    return 0


def _load_features_file(path: str, registry) -> np.ndarray:
    with open(path) as fh:
        payload = json.load(fh)
    feats = payload.get("features", payload)
    if not isinstance(feats, dict):
        raise ValueError("features file must hold an object of code -> value")
    x = np.zeros(len(registry))
    for code, value in feats.items():
        x[registry.index(code)] = float(value)
    return x


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2, allow_nan=False)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _cmd_eval(args) -> int:
    from .bundle import load_bundle
    from .features import Bucket
    from .forest import evaluate
    from .pipeline import read_dataset_csv

    bundle = load_bundle(_bundle_path(args))
    registry = bundle.registry
    rows = []
    meta_path = os.path.join(args.data_dir, "meta.csv")
    meta_rows = []
    if os.path.exists(meta_path):
        with open(meta_path, newline="") as fh:
            meta_rows = [r for r in csv.DictReader(fh) if r["split"] == args.split]
    meta_by_bucket: dict[int, list] = {}
    for r in meta_rows:
        meta_by_bucket.setdefault(int(r["bucket"]), []).append(r)

    all_y, all_pred = [], []
    for b in Bucket:
        path = os.path.join(args.data_dir, f"{args.split}_b{int(b)}.csv")
        if not os.path.exists(path):
            continue
        X, y = read_dataset_csv(path, registry)
        if len(y) == 0:
            continue
        forest = bundle.forest_for(int(b))
        yhat = forest.predict_mean(X)
        band = forest.predict_interval(X, 0.05)
        metas = meta_by_bucket.get(int(b), [])
        for i in range(len(y)):
            m = metas[i] if i < len(metas) else {"learner_id": "", "test_id": ""}
            rows.append([m["learner_id"], m["test_id"], int(b), y[i], yhat[i], band[i, 0], band[i, 1]])
        all_y.append(y)
        all_pred.append(yhat)
    if not all_y:
        print("error: no rows found for split", file=sys.stderr)
        return 1
    m = evaluate(np.concatenate(all_y), np.concatenate(all_pred))
    rho = "undefined" if m.pearson_rho is None else f"{m.pearson_rho:.4f}"
    print(f"{args.split}: n={m.n} RMSE={m.rmse:.3f} MAE={m.mae:.3f} MedAE={m.medae:.3f} rho={rho}")
    if args.pred_out:
        with open(args.pred_out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["learner_id", "test_id", "bucket", "y", "yhat", "q05", "q95"])
            for row in rows:
                w.writerow(row)
        print(f"wrote predictions to {args.pred_out}")
    return 0


def _cmd_explain(args) -> int:
    from .attribution import TreeExplainer, force_plot_export
    from .bundle import load_bundle
    from .pipeline import bucket_from_features

    bundle = load_bundle(_bundle_path(args))
    x = _load_features_file(args.features, bundle.registry)
    bucket = int(bucket_from_features(x, bundle.registry))
    forest = bundle.forest_for(bucket)
    key = forest.bucket if forest.bucket is not None else 0
    ex = TreeExplainer(forest, bundle.background_for(key))
    rec = force_plot_export(ex.shap_values(x), bundle.registry)
    rec["bucket"] = bucket
    _emit(rec, args.out)
    return 0


def _cmd_nudge(args) -> int:
    from .bundle import load_bundle
    from .nudge import solve_nudge
    from .pipeline import bucket_from_features

    bundle = load_bundle(_bundle_path(args))
    x = _load_features_file(args.features, bundle.registry)
    bucket = int(bucket_from_features(x, bundle.registry))
    forest = bundle.forest_for(bucket)
    result = solve_nudge(forest.predict_mean, x, args.delta_y, bundle.registry)
    _emit(
        {
            "status": result.status,
            "bucket": bucket,
            "base_score": result.base_score,
            "new_score": result.new_score,
            "target": result.target,
            "deltas": [
                {"code": d.code, "delta": d.delta, "new_value": d.new_value, "marginal_gain": d.marginal_gain}
                for d in result.deltas
            ],
            "messages": result.messages,
        },
        args.out,
    )
    return 0


def _cmd_trends(args) -> int:
    from .bkt import BktParams
    from .features import FeatureBuilder, cohort_trends, default_registry
    from .simulator import ingest_log, read_catalog

    sessions = ingest_log(args.events)
    catalog = read_catalog(args.catalog)
    if args.bundle:
        from .bundle import load_bundle

        b = load_bundle(args.bundle)
        bkt_params, registry = b.bkt_params, b.registry
    else:
        bkt_params, registry = {}, default_registry(0)
    builder = FeatureBuilder(registry, catalog, bkt_params)
    table = cohort_trends(sessions, builder, min_tests=args.min_tests)
    header = ["test_index", "n_learners", "marks", "wasted", "unused_time", "overtime_incorrect"]
    lines = [",".join(header)]
    for i in range(len(table["marks"])):
        lines.append(
            f"{i + 1},{int(table['n_learners'][i])},{table['marks'][i]:.4f},"
            f"{table['wasted'][i]:.6f},{table['unused_time'][i]:.6f},{table['overtime_incorrect'][i]:.6f}"
        )
    text = "\n".join(lines)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .api import ApiConfig, create_app
    from .bundle import load_bundle
    from .simulator import ingest_log

    cfg = ApiConfig(
        host=args.host, port=args.port, bundle_path=_bundle_path(args), cors_origin=args.cors_origin
    )
    bundle = load_bundle(cfg.bundle_path)
    sessions = ingest_log(args.events) if args.events else None
    app = create_app(bundle, sessions, config=cfg)
    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="warning")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "featurize": _cmd_featurize,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "explain": _cmd_explain,
    "nudge": _cmd_nudge,
    "trends": _cmd_trends,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Acceptance suite: one test per release criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s``.  The shared corpus fixture
(5,000 learners, 500-tree forests) takes several minutes to build and is
reused by every criterion that needs it.
"""

import itertools
import math

import numpy as np
import pytest
from fastapi.testclient import TestClient

from scorecast.api import create_app
from scorecast.attribution import TreeExplainer, shap_brute
from scorecast.bkt import BktParams, fit_em, sequence_likelihood
from scorecast.bundle import load_bundle, save_bundle
from scorecast.features import TargetTest, default_registry
from scorecast.forest import TrainConfig, check_loss, train, weighted_quantile
from scorecast.mastery import (
    FmConfig,
    ProjectionConfig,
    fit_fm,
    fm_score_naive,
    fm_score_rank,
    project,
)
from scorecast.nudge import FeasibilitySpec, solve_nudge
from scorecast.pipeline import FitConfig, fit_bundle, simulate_corpus
from scorecast.simulator import SimConfig, bkt_attempt_sequences, generate_events

ACCEPT_SIM = SimConfig(
    p_init_range=(0.15, 0.7),
    ability_sd=1.2,
    skip_unlearned=0.08,
    skip_hard=0.2,
    time_budget_factor=0.85,
    p_transit_range=(0.04, 0.15),
    test_learn_factor=0.4,
    ability_weight=1.6,
    slip_ability_weight=0.8,
    questions_per_test=32,
    n_tests=6,
    churn_range=(0.05, 0.45),
)
CORPUS_SEED = 23
FIT_SEED = 1


@pytest.fixture(scope="session")
def corpus():
    world, profiles, sessions = simulate_corpus(5000, seed=CORPUS_SEED, sim=ACCEPT_SIM)
    cfg = FitConfig(seed=FIT_SEED, forest=TrainConfig(n_trees=500, max_depth=5, seed=0))
    bundle, dataset, report = fit_bundle(sessions, world.catalog, cfg)
    return {
        "world": world,
        "sessions": sessions,
        "bundle": bundle,
        "dataset": dataset,
        "report": report,
    }


def _ok(line: str) -> None:
    print(f"\nPASS: {line}")


class TestC01ShapleyAdditivity:
    def test_additivity_on_trained_forests(self, corpus):
        bundle, dataset = corpus["bundle"], corpus["dataset"]
        rng = np.random.default_rng(101)
        Xh, _, idx = dataset.rows(train=False)
        buckets = sorted(k for k in bundle.forests if k != 0)
        worst = 0.0
        n_done = 0
        per_bucket = 1000 // len(buckets) + 1
        for b in buckets:
            forest = bundle.forests[b]
            ex = TreeExplainer(forest, bundle.background_for(b))
            rows = dataset.bucket[idx] == b
            pool = Xh[rows]
            take = min(per_bucket, 1000 - n_done)
            Q = np.vstack(
                [
                    pool[rng.integers(0, len(pool), size=take // 2)],
                    rng.random((take - take // 2, bundle.n_features)),
                ]
            )
            raw = forest.predict_raw(Q)
            for i, attr in enumerate(ex.shap_batch(Q)):
                err = abs(attr.base_value + attr.phi.sum() - raw[i])
                worst = max(worst, err)
            n_done += take
        assert n_done >= 1000
        assert worst <= 1e-9
        _ok(f"criterion 1 Shapley additivity: {n_done} instances, max |base+sum(phi)-f(x)| = {worst:.2e} <= 1e-9")


class TestC02ShapleyOracle:
    def test_fast_equals_brute(self):
        rng = np.random.default_rng(202)
        worst = 0.0
        for _ in range(50):
            p = int(rng.integers(3, 13))
            n_trees = int(rng.integers(1, 21))
            depth = int(rng.integers(1, 5))
            X = rng.random((120, p))
            y = rng.normal(50, 20, 120) + 30 * X[:, 0]
            f = train(X, y, TrainConfig(n_trees=n_trees, max_depth=depth, seed=int(rng.integers(1 << 30))))
            x = rng.random(p)
            fast = TreeExplainer(f, X).shap_values(x)
            brute = shap_brute(f, x, X)
            worst = max(
                worst,
                float(np.max(np.abs(fast.phi - brute.phi))),
                abs(fast.base_value - brute.base_value),
                abs(fast.prediction - brute.prediction),
            )
        assert worst <= 1e-9
        _ok(f"criterion 2 Shapley oracle: 50 forests, max |fast - brute| = {worst:.2e} <= 1e-9")


class TestC03CheckLoss:
    def test_unit_cases_and_duality(self):
        assert check_loss(0.0, 0.9) == 0.0
        assert float(check_loss(2.0, 0.9)) == pytest.approx(1.8, abs=0)
        assert float(check_loss(-2.0, 0.9)) == pytest.approx(0.2, abs=1e-15)
        rng = np.random.default_rng(303)
        for _ in range(20):
            y = rng.uniform(0, 100, size=int(rng.integers(5, 50)))
            tau = float(rng.choice([0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95]))
            q = weighted_quantile(y, np.full(len(y), 1.0 / len(y)), (tau,))[0]
            grid = np.arange(y.min(), y.max() + 1e-3, 1e-3)
            grid_losses = check_loss(y[None, :] - grid[:, None], tau).mean(axis=1)
            assert float(check_loss(y - q, tau).mean()) <= grid_losses.min() + 1e-12
        _ok("criterion 3 check loss: unit cases exact; empirical quantile minimizes over 1e-3 grids (20 samples)")


class TestC04IntervalCoverage:
    def test_coverage_and_monotonicity(self, corpus):
        report, dataset, bundle = corpus["report"], corpus["dataset"], corpus["bundle"]
        n_train = int(dataset.is_train.sum())
        n_test = len(dataset) - n_train
        assert n_train >= 10_000 and n_test >= 2_000
        cov = report["test"]["coverage"]
        assert 0.85 <= cov <= 0.94
        Xh, _, idx = dataset.rows(train=False)
        buckets = dataset.bucket[idx]
        violations = 0
        for b in np.unique(buckets):
            m = buckets == b
            qs = bundle.forest_for(int(b)).quantiles(Xh[m], (0.05, 0.5, 0.95))
            violations += int((np.diff(qs, axis=1) < 0).sum())
        assert violations == 0
        _ok(
            f"criterion 4 intervals: coverage {cov:.4f} in [0.85, 0.94] on {n_test} holdout rows "
            f"({n_train} train); quantile monotonicity violations: 0"
        )


class TestC05Bkt:
    def test_likelihood_enumeration_em_and_recovery(self):
        rng = np.random.default_rng(55)
        worst = 0.0
        for _ in range(30):
            p = BktParams(
                rng.uniform(0.05, 0.95), rng.uniform(0.0, 0.6),
                rng.uniform(0.05, 0.45), rng.uniform(0.05, 0.45),
            )
            n = int(rng.integers(1, 11))
            obs = [bool(b) for b in rng.integers(0, 2, size=n)]
            total = 0.0
            for z in itertools.product((0, 1), repeat=n):
                prob = p.p_init if z[0] else 1 - p.p_init
                for t in range(n):
                    if t > 0:
                        prev, cur = z[t - 1], z[t]
                        prob *= (
                            (p.p_transit if cur else 1 - p.p_transit) if prev == 0 else (1.0 if cur else 0.0)
                        )
                    prob *= (1 - p.p_slip if obs[t] else p.p_slip) if z[t] else (p.p_guess if obs[t] else 1 - p.p_guess)
                total += prob
            worst = max(worst, abs(sequence_likelihood(obs, p) - math.log(total)))
        assert worst <= 1e-10

        planted = (0.3, 0.2, 0.15, 0.1)
        seqs = bkt_attempt_sequences(*planted, n_learners=500, n_attempts=50, seed=7)
        fitted, rep = fit_em(seqs, init=BktParams(0.4, 0.15, 0.25, 0.2))
        trace = rep.loglik_trace
        assert all(b2 - a >= -1e-9 for a, b2 in zip(trace, trace[1:]))
        errs = [
            abs(fitted.p_init - planted[0]), abs(fitted.p_transit - planted[1]),
            abs(fitted.p_guess - planted[2]), abs(fitted.p_slip - planted[3]),
        ]
        assert max(errs) <= 0.05
        _ok(
            f"criterion 5 knowledge tracing: likelihood vs enumeration {worst:.1e} <= 1e-10; "
            f"EM monotone; planted recovery max err {max(errs):.3f} <= 0.05"
        )


class TestC06Fm:
    def test_identity_and_planted_gain(self):
        rng = np.random.default_rng(66)
        worst = 0.0
        for _ in range(60):
            p, k = int(rng.integers(2, 10)), int(rng.integers(1, 7))
            w0, w, v = float(rng.normal()), rng.normal(size=p), rng.normal(size=(p, k))
            m = int(rng.integers(2, p + 1))
            active = list(rng.choice(p, size=m, replace=False))
            worst = max(worst, abs(fm_score_rank(w0, w, v, active) - fm_score_naive(w0, w, v, active)))
        assert worst <= 1e-9

        U = rng.normal(size=(2000, 3))
        C = rng.normal(size=(50, 3))
        bu, bc = rng.normal(0, 0.5, 2000), rng.normal(0, 0.5, 50)
        data = []
        for u in range(2000):
            cs = rng.integers(0, 50, size=40)
            pr = 1 / (1 + np.exp(-(bu[u] + bc[cs] + U[u] @ C[cs].T)))
            ok = rng.random(40) < pr
            data.extend((f"u{u}", int(c), bool(o)) for c, o in zip(cs, ok))
        model = fit_fm(data, 50, FmConfig(seed=1))
        hold = model.loss_trace[-1][1]
        ybar = np.mean([1.0 if d[2] else 0.0 for d in data])
        baseline = float(-(ybar * np.log(ybar) + (1 - ybar) * np.log(1 - ybar)))
        assert hold <= 0.9 * baseline
        _ok(
            f"criterion 6 factorization machine: rank-k identity {worst:.1e} <= 1e-9; "
            f"holdout log-loss {hold:.4f} <= 0.9 x baseline {baseline:.4f}"
        )


class TestC07Projection:
    def test_linearity_norm_and_distortion(self):
        rng = np.random.default_rng(77)
        # exact additivity: dyadic inputs, power-of-four output dim
        cfg16 = ProjectionConfig(input_dim=50, output_dim=16, seed=3, scheme="sign")
        a = rng.integers(0, 1 << 20, size=50) / float(1 << 20)
        b = rng.integers(0, 1 << 20, size=50) / float(1 << 20)
        assert np.array_equal(project(a + b, cfg16), project(a, cfg16) + project(b, cfg16))
        cfg_prod = ProjectionConfig(input_dim=1242, output_dim=50, seed=3, scheme="sign")
        aa, bb = rng.random(1242), rng.random(1242)
        assert np.allclose(project(aa + bb, cfg_prod), project(aa, cfg_prod) + project(bb, cfg_prod), atol=1e-9)

        x = rng.random(80)
        ratios = []
        for seed in range(2000):
            c = ProjectionConfig(80, 20, seed=seed, scheme="sign")
            ratios.append(float(np.sum(project(x, c) ** 2) / np.sum(x**2)))
        ratios = np.array(ratios)
        se = ratios.std(ddof=1) / np.sqrt(len(ratios))
        dev = abs(ratios.mean() - 1.0)
        assert dev <= 3 * se

        dists = []
        for i in range(100):
            c = ProjectionConfig(1242, 50, seed=1000 + i, scheme="sign")
            u, v = rng.random(1242), rng.random(1242)
            d = u - v
            dists.append(abs(np.sum(project(d, c) ** 2) / np.sum(d**2) - 1.0))
        mean_dist = float(np.mean(dists))
        assert mean_dist <= 0.25
        _ok(
            f"criterion 7 projection: exact additivity (dyadic/d=16); norm MC dev {dev:.2e} <= 3SE {3*se:.2e} "
            f"(2000 seeds); mean pairwise distortion {mean_dist:.3f} <= 0.25 at 1242->50"
        )


class TestC08EndToEnd:
    def test_directional_quality_and_bucketing(self, corpus):
        rep = corpus["report"]["test"]
        m, pm = rep["metrics"], rep["pooled_model_metrics"]
        assert m.medae <= 8.0
        assert m.pearson_rho is not None and m.pearson_rho >= 0.7
        assert m.medae < pm.medae
        _ok(
            f"criterion 8 end-to-end: holdout MedAE {m.medae:.3f} <= 8, rho {m.pearson_rho:.3f} >= 0.7; "
            f"bucketed MedAE {m.medae:.3f} < pooled {pm.medae:.3f}"
        )


class TestC09Leakage:
    def test_future_events_never_change_vectors(self, corpus):
        from scorecast.simulator import InteractionEvent, TestSession, filter_valid_tests

        sim = ACCEPT_SIM
        world = corpus["world"]
        bundle = corpus["bundle"]
        builder = bundle.builder()
        from scorecast.simulator import generate_population

        profiles = generate_population(200, 909, sim)
        sessions = filter_valid_tests(generate_events(profiles, world, seed=909))
        by_learner = {}
        for s in sessions:
            by_learner.setdefault(s.learner_id, []).append(s)
        cases = 0
        rng = np.random.default_rng(911)
        kinds = ["attempt", "browse_content", "watch_video", "search", "view_question"]
        learners = sorted(by_learner)
        while cases < 500:
            lid = learners[int(rng.integers(0, len(learners)))]
            hist = by_learner[lid]
            scored = [s for s in hist if s.test_kind in ("mock", "sectional")]
            if len(scored) < 2:
                continue
            tgt = scored[int(rng.integers(1, len(scored)))]
            target = TargetTest(tgt.test_id, tgt.test_kind, tgt.start_ts)
            before = builder.featurize(lid, hist, target)
            # future-dated activity: a new session entirely after the cutoff,
            # plus stray events appended into a past session
            future_id = f"{lid}-future-{cases}"
            fstart = tgt.start_ts + int(rng.integers(1, 10**9))
            fevents = [
                InteractionEvent(
                    lid, future_id, fstart + j * 1000, str(rng.choice(kinds)),
                    world.catalog[int(rng.integers(len(world.catalog)))].question_id,
                    bool(rng.integers(2)), float(rng.uniform(1, 60)),
                )
                for j in range(int(rng.integers(1, 6)))
            ]
            fsession = TestSession(
                future_id, lid, future_id, "practice", fstart, fstart + 10_000_000,
                len(fevents), 600.0, fevents, None,
            )
            victim = hist[int(rng.integers(0, len(hist)))]
            strays = [
                InteractionEvent(
                    lid, victim.session_id, tgt.start_ts + int(rng.integers(0, 10**8)),
                    "search", None, None, float(rng.uniform(1, 30)),
                )
                for _ in range(int(rng.integers(1, 4)))
            ]
            patched = TestSession(
                victim.session_id, victim.learner_id, victim.test_id, victim.test_kind,
                victim.start_ts, victim.end_ts, victim.total_questions, victim.total_time_s,
                victim.events + strays, victim.score_pct,
            )
            extended = [patched if s is victim else s for s in hist] + [fsession]
            after = builder.featurize(lid, extended, target)
            assert np.array_equal(before.values, after.values), f"leak for {lid} target {tgt.test_id}"
            cases += 1
        _ok(f"criterion 9 leakage: {cases} fuzz cases, every vector bit-identical under future events")


class TestC10NudgeSoundness:
    def test_random_requests_and_analytic_oracle(self, corpus):
        bundle, dataset = corpus["bundle"], corpus["dataset"]
        reg = bundle.registry
        mutable = set(reg.mutable_codes())
        Xh, _, idx = dataset.rows(train=False)
        buckets = dataset.bucket[idx]
        rng = np.random.default_rng(120)
        n_achieved = 0
        for i in range(200):
            r = int(rng.integers(0, len(Xh)))
            x = Xh[r]
            forest = bundle.forest_for(int(buckets[r]))
            dy = float(rng.uniform(1.0, 20.0))
            res = solve_nudge(forest.predict_mean, x, dy, reg)
            assert set(res.delta_map()) <= mutable
            newx = x.copy()
            for nd in res.deltas:
                j = reg.index(nd.code)
                newx[j] += nd.delta
                assert -1e-12 <= newx[j] <= 1.0 + 1e-12
            frozen = [j for j, d in enumerate(reg.defs) if not d.mutable]
            assert np.array_equal(newx[frozen], x[frozen])
            if res.status == "achieved":
                fresh = float(forest.predict_mean(newx[None, :])[0])
                assert fresh - res.base_score >= dy - 0.5 - 1e-9
                n_achieved += 1

        from scorecast.features import FeatureDef, FeatureRegistry

        oracle_reg = FeatureRegistry(
            [FeatureDef(f"f{i}", "TQ", f"f{i}", mutable=(i == 0)) for i in range(5)]
        )
        res = solve_nudge(
            lambda X: 100.0 * np.asarray(X).mean(axis=1), np.full(5, 0.2), 10.0, oracle_reg
        )
        assert res.status == "achieved"
        assert res.delta_map()["f0"] == pytest.approx(0.5, abs=1e-12)
        _ok(
            f"criterion 10 nudges: 200 random requests sound ({n_achieved} achieved, all re-verified); "
            f"analytic oracle delta = +0.500 exactly"
        )


class TestC11DeterminismPersistence:
    def test_digest_and_round_trip(self, corpus, tmp_path):
        sim = SimConfig(n_questions=150, questions_per_test=20, n_tests=5, horizon_days=45)
        world, _, sessions = simulate_corpus(100, seed=42, sim=sim)
        cfg = FitConfig(seed=9, d_mastery=8, forest=TrainConfig(n_trees=25, max_depth=4, seed=3), min_bucket_rows=30)
        b1, _, _ = fit_bundle(sessions, world.catalog, cfg)
        b2, _, _ = fit_bundle(sessions, world.catalog, cfg)
        d1 = save_bundle(b1, str(tmp_path / "one.bundle"))
        d2 = save_bundle(b2, str(tmp_path / "two.bundle"))
        assert d1 == d2
        for k in b1.forests:
            assert b1.forests[k].digest() == b2.forests[k].digest()

        bundle = corpus["bundle"]
        path = str(tmp_path / "big.bundle")
        save_bundle(bundle, path)
        back = load_bundle(path)
        rng = np.random.default_rng(4242)
        Q = rng.random((1000, bundle.n_features))
        for k, forest in bundle.forests.items():
            assert np.array_equal(forest.predict_mean(Q), back.forests[k].predict_mean(Q))
        _ok(
            f"criterion 11 determinism/persistence: refit digests equal ({d1[:12]}...); "
            f"save->load->predict bit-exact on 1000 vectors"
        )


class TestC12ApiContract:
    def test_contract(self, corpus):
        bundle, dataset = corpus["bundle"], corpus["dataset"]
        client = TestClient(create_app(bundle))
        X, _, _ = dataset.rows(train=False)
        fmap = {c: float(v) for c, v in zip(bundle.registry.codes, X[0])}

        p = client.post("/v1/predict", json={"features": fmap})
        w = client.post("/v1/whatif", json={"features": fmap, "overrides": {}})
        assert p.status_code == w.status_code == 200
        pj, wj = p.json(), w.json()
        assert (wj["yhat"], wj["q05"], wj["q95"]) == (pj["yhat"], pj["q05"], pj["q95"])

        worst = 0.0
        for i in range(20):
            fm_i = {c: float(v) for c, v in zip(bundle.registry.codes, X[i])}
            rec = client.post("/v1/explain", json={"features": fm_i}).json()
            worst = max(worst, abs(rec["base"] + sum(it["phi"] for it in rec["items"]) - rec["prediction"]))
        assert worst <= 1e-6

        assert client.post("/v1/predict", content=b"{bad", headers={"content-type": "application/json"}).status_code == 400
        assert client.post("/v1/predict", json={"features": {**fmap, "zz": 0.1}}).status_code == 400
        assert client.post("/v1/predict", json={"features": {**fmap, "aq_0": 7.0}}).status_code == 422
        assert client.post("/v1/nudges", json={"features": fmap}).status_code == 400
        _ok(
            f"criterion 12 API contract: whatif(empty) == predict; explain additivity {worst:.1e} <= 1e-6; "
            f"malformed -> 400, out-of-range -> 422"
        )

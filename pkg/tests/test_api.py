"""HTTP API contract tests via the in-process test client."""

import numpy as np
import pytest
from fastapi.testclient import TestClient

from scorecast.api import create_app


@pytest.fixture(scope="module")
def client(small_setup):
    _, sessions, bundle, _ = small_setup
    return TestClient(create_app(bundle, sessions, cors_origin="http://localhost:5173"))


@pytest.fixture(scope="module")
def feature_map(small_setup):
    _, _, bundle, dataset = small_setup
    X, _, _ = dataset.rows(train=False)
    return {c: float(v) for c, v in zip(bundle.registry.codes, X[0])}


class TestHealthAndInfo:
    def test_healthz(self, client):
        r = client.get("/healthz")
        assert r.status_code == 200
        assert r.text == "ok"

    def test_model_info(self, client, small_setup):
        _, _, bundle, _ = small_setup
        r = client.get("/v1/model/info")
        assert r.status_code == 200
        info = r.json()
        assert info["n_features"] == bundle.n_features
        assert len(info["features"]) == bundle.n_features
        assert info["sample_features"]

    def test_no_bundle_503(self):
        bare = TestClient(create_app(None))
        r = bare.post("/v1/predict", json={"features": {}})
        assert r.status_code == 503


class TestPredict:
    def test_basic_shape(self, client, feature_map):
        r = client.post("/v1/predict", json={"features": feature_map})
        assert r.status_code == 200
        out = r.json()
        assert set(out) == {"yhat", "q05", "q95", "bucket"}
        assert out["q05"] <= out["yhat"] <= out["q95"] or out["q05"] <= out["q95"]

    def test_learner_id_path(self, client, small_setup):
        _, sessions, _, dataset = small_setup
        lid = dataset.learner_ids[0]
        r = client.post("/v1/predict", json={"learner_id": lid})
        assert r.status_code == 200
        assert 0.0 <= r.json()["yhat"] <= 100.0

    def test_unknown_code_400(self, client, feature_map):
        bad = dict(feature_map)
        bad["zz_99"] = 0.5
        r = client.post("/v1/predict", json={"features": bad})
        assert r.status_code == 400

    def test_missing_codes_400(self, client):
        r = client.post("/v1/predict", json={"features": {"aq_0": 0.5}})
        assert r.status_code == 400

    def test_out_of_range_422(self, client, feature_map):
        bad = dict(feature_map)
        bad["aq_0"] = 1.7
        r = client.post("/v1/predict", json={"features": bad})
        assert r.status_code == 422

    def test_malformed_body_400(self, client):
        r = client.post("/v1/predict", content=b"{not json", headers={"content-type": "application/json"})
        assert r.status_code == 400

    def test_deterministic(self, client, feature_map):
        a = client.post("/v1/predict", json={"features": feature_map}).json()
        b = client.post("/v1/predict", json={"features": feature_map}).json()
        assert a == b

    def test_concurrent_identical_requests_identical_bodies(self, client, feature_map):
        from concurrent.futures import ThreadPoolExecutor

        def call(_):
            return client.post("/v1/whatif", json={"features": feature_map, "overrides": {}}).text

        with ThreadPoolExecutor(max_workers=8) as pool:
            bodies = list(pool.map(call, range(16)))
        assert len(set(bodies)) == 1

    def test_oversized_body_rejected(self, small_setup):
        from scorecast.api import ApiConfig, create_app as make

        _, _, bundle, _ = small_setup
        tiny = TestClient(make(bundle, config=ApiConfig(max_body_bytes=2048)))
        blob = {"features": {f"pad_{i}": 0.0 for i in range(500)}}
        r = tiny.post("/v1/predict", json=blob)
        assert r.status_code == 400
        assert "exceeds" in r.json()["error"]


class TestExplainAndWhatIf:
    def test_explain_additivity(self, client, feature_map):
        r = client.post("/v1/explain", json={"features": feature_map})
        assert r.status_code == 200
        rec = r.json()
        total = rec["base"] + sum(i["phi"] for i in rec["items"])
        assert abs(total - rec["prediction"]) <= 1e-6

    def test_whatif_empty_overrides_equals_predict(self, client, feature_map):
        p = client.post("/v1/predict", json={"features": feature_map}).json()
        w = client.post("/v1/whatif", json={"features": feature_map, "overrides": {}}).json()
        assert w["yhat"] == p["yhat"]
        assert w["q05"] == p["q05"]
        assert w["q95"] == p["q95"]
        assert "attribution" in w

    def test_whatif_prediction_matches_attribution(self, client, feature_map):
        w = client.post(
            "/v1/whatif", json={"features": feature_map, "overrides": {"tq_35": 0.9}}
        ).json()
        rec = w["attribution"]
        total = rec["base"] + sum(i["phi"] for i in rec["items"])
        assert abs(total - rec["prediction"]) <= 1e-6

    def test_whatif_override_validation(self, client, feature_map):
        r = client.post("/v1/whatif", json={"features": feature_map, "overrides": {"nope": 0.4}})
        assert r.status_code == 400
        r = client.post("/v1/whatif", json={"features": feature_map, "overrides": {"tq_35": 2.0}})
        assert r.status_code == 422


class TestNudges:
    def test_basic_contract(self, client, feature_map):
        r = client.post("/v1/nudges", json={"features": feature_map, "delta_y": 5.0})
        assert r.status_code == 200
        out = r.json()
        assert out["status"] in ("achieved", "partial", "infeasible")
        assert isinstance(out["deltas"], list)
        if out["status"] == "achieved":
            assert out["new_score"] >= out["target"] - 0.5 - 1e-9

    def test_missing_delta_400(self, client, feature_map):
        r = client.post("/v1/nudges", json={"features": feature_map})
        assert r.status_code == 400

    def test_constraints_respected(self, client, feature_map):
        r = client.post(
            "/v1/nudges",
            json={"features": feature_map, "delta_y": 4.0, "constraints": {"mutable": ["eq_41"]}},
        )
        assert r.status_code == 200
        assert all(d["code"] == "eq_41" for d in r.json()["deltas"])

    def test_bad_constraint_code_400(self, client, feature_map):
        r = client.post(
            "/v1/nudges",
            json={"features": feature_map, "delta_y": 4.0, "constraints": {"mutable": ["zz"]}},
        )
        assert r.status_code == 400

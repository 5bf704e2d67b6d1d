"""Read-only JSON API over a loaded model bundle.

Serves predictions with intervals, attribution force-plot records,
counterfactual what-if evaluation, and nudge recommendations.  All handlers
are pure functions of (bundle, request body): no state mutates after startup,
so concurrent identical requests return identical bodies.

Status codes: 400 for malformed bodies or unknown feature codes, 422 for
out-of-range values, 503 when no bundle is loaded.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse

from .attribution import TreeExplainer, force_plot_export
from .bundle import ModelBundle
from .features import TargetTest, assign_bucket
from .nudge import FeasibilitySpec, solve_nudge
from .pipeline import bucket_from_features
from .simulator import TestSession

__all__ = ["ApiConfig", "create_app"]


@dataclass
class ApiConfig:
    """Service settings; the bundle must load before the app starts."""

    host: str = "127.0.0.1"
    port: int = 8000
    bundle_path: str = ""
    max_body_bytes: int = 1_000_000
    cors_origin: str | None = None

    def __post_init__(self) -> None:
        if not (0 < self.port < 65536):
            raise ValueError("port must be in 1..65535")
        if self.max_body_bytes < 1024:
            raise ValueError("max_body_bytes unreasonably small")


class _ApiError(Exception):
    def __init__(self, status: int, message: str):
        self.status = status
        self.message = message


def _finite(obj):
    """Replace non-finite floats with None so every response is strict JSON."""
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def create_app(
    bundle: ModelBundle | None,
    sessions: list[TestSession] | None = None,
    cors_origin: str | None = None,
    config: ApiConfig | None = None,
) -> FastAPI:
    cfg = config or ApiConfig(cors_origin=cors_origin)
    if cors_origin and cfg.cors_origin is None:
        cfg.cors_origin = cors_origin
    app = FastAPI(title="score forecast service", docs_url=None, redoc_url=None)
    if cfg.cors_origin:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=[cfg.cors_origin],
            allow_methods=["*"],
            allow_headers=["*"],
        )

    state: dict = {"bundle": bundle, "sessions": sessions or [], "explainers": {}}
    if bundle is not None:
        state["builder"] = bundle.builder()

    @app.exception_handler(_ApiError)
    async def _api_error(_, exc: _ApiError):
        return JSONResponse({"error": exc.message}, status_code=exc.status)

    def need_bundle() -> ModelBundle:
        if state["bundle"] is None:
            raise _ApiError(503, "model bundle not loaded")
        return state["bundle"]

    def explainer_for(bucket: int) -> TreeExplainer:
        b = need_bundle()
        forest = b.forest_for(bucket)
        key = forest.bucket if forest.bucket is not None else 0
        if key not in state["explainers"]:
            state["explainers"][key] = TreeExplainer(forest, b.background_for(key))
        return state["explainers"][key]

    async def parse_body(request: Request) -> dict:
        raw = await request.body()
        if len(raw) > cfg.max_body_bytes:
            raise _ApiError(400, f"request body exceeds {cfg.max_body_bytes} bytes")
        try:
            body = json.loads(raw)
        except Exception:
            raise _ApiError(400, "request body is not valid JSON") from None
        if not isinstance(body, dict):
            raise _ApiError(400, "request body must be a JSON object")
        return body

    def vector_from_features(features) -> np.ndarray:
        b = need_bundle()
        reg = b.registry
        if not isinstance(features, dict):
            raise _ApiError(400, "'features' must map feature codes to values")
        unknown = [c for c in features if c not in set(reg.codes)]
        if unknown:
            raise _ApiError(400, f"unknown feature codes: {sorted(unknown)[:5]}")
        missing = [c for c in reg.codes if c not in features]
        if missing:
            raise _ApiError(400, f"missing {len(missing)} feature codes (e.g. {missing[:3]})")
        x = np.zeros(len(reg))
        for code, value in features.items():
            if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(float(value)):
                raise _ApiError(400, f"feature {code!r} must be a finite number")
            v = float(value)
            if not (0.0 <= v <= 1.0):
                raise _ApiError(422, f"feature {code!r} out of range [0, 1]: {v}")
            x[reg.index(code)] = v
        return x

    def resolve_vector(body: dict) -> tuple[np.ndarray, int]:
        """(feature vector, bucket) from either a features map or learner_id+as_of."""
        b = need_bundle()
        if "features" in body:
            x = vector_from_features(body["features"])
            bucket = body.get("bucket")
            if bucket is not None:
                if bucket not in (1, 2, 3, 4):
                    raise _ApiError(422, "bucket must be 1..4")
                return x, int(bucket)
            return x, int(bucket_from_features(x, b.registry))
        if "learner_id" in body:
            if not state["sessions"]:
                raise _ApiError(400, "server has no event log loaded; send 'features' instead")
            learner_id = body["learner_id"]
            as_of = body.get("as_of")
            hist = [s for s in state["sessions"] if s.learner_id == learner_id]
            if not hist:
                raise _ApiError(400, f"unknown learner_id {learner_id!r}")
            if as_of is None:
                as_of = max(s.end_ts for s in hist) + 1
            if not isinstance(as_of, int):
                raise _ApiError(400, "'as_of' must be an integer millisecond timestamp")
            fv = state["builder"].featurize(
                learner_id, hist, TargetTest("adhoc", "mock", as_of)
            )
            prev = state["builder"].prior_scores(learner_id, hist, as_of)
            bucket, _ = assign_bucket(prev)
            return fv.values, int(bucket)
        raise _ApiError(400, "body must contain 'features' or 'learner_id'")

    def predict_payload(x: np.ndarray, bucket: int) -> dict:
        b = need_bundle()
        forest = b.forest_for(bucket)
        yhat = float(forest.predict_mean(x[None, :])[0])
        band = forest.predict_interval(x[None, :], 0.05)[0]
        return {"yhat": yhat, "q05": float(band[0]), "q95": float(band[1]), "bucket": bucket}

    @app.get("/healthz")
    async def healthz():
        return PlainTextResponse("ok")

    @app.get("/v1/model/info")
    async def model_info():
        b = need_bundle()
        return _finite(
            {
                "format_version": b.format_version,
                "n_features": len(b.registry),
                "buckets": sorted(k for k in b.forests if k != 0),
                "metrics": b.metadata.get("metrics", {}),
                "sample_features": b.metadata.get("sample_features", {}),
                "features": [
                    {
                        "code": d.code,
                        "name": d.name,
                        "group": d.group,
                        "mutable": d.mutable,
                        "direction": d.direction,
                    }
                    for d in b.registry.defs
                ],
            }
        )

    @app.post("/v1/predict")
    async def predict(request: Request):
        body = await parse_body(request)
        x, bucket = resolve_vector(body)
        return _finite(predict_payload(x, bucket))

    @app.post("/v1/explain")
    async def explain(request: Request):
        body = await parse_body(request)
        b = need_bundle()
        x, bucket = resolve_vector(body)
        attr = explainer_for(bucket).shap_values(x)
        rec = force_plot_export(attr, b.registry)
        rec["bucket"] = bucket
        return _finite(rec)

    @app.post("/v1/whatif")
    async def whatif_endpoint(request: Request):
        body = await parse_body(request)
        b = need_bundle()
        x, bucket = resolve_vector(body)
        overrides = body.get("overrides", {})
        if not isinstance(overrides, dict):
            raise _ApiError(400, "'overrides' must be an object")
        q = x.copy()
        codes = set(b.registry.codes)
        for code, value in overrides.items():
            if code not in codes:
                raise _ApiError(400, f"unknown override code {code!r}")
            if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(float(value)):
                raise _ApiError(400, f"override {code!r} must be a finite number")
            v = float(value)
            if not (0.0 <= v <= 1.0):
                raise _ApiError(422, f"override {code!r} out of range [0, 1]: {v}")
            q[b.registry.index(code)] = v
        payload = predict_payload(q, bucket)
        attr = explainer_for(bucket).shap_values(q)
        payload["attribution"] = force_plot_export(attr, b.registry)
        return _finite(payload)

    @app.post("/v1/nudges")
    async def nudges(request: Request):
        body = await parse_body(request)
        b = need_bundle()
        x, bucket = resolve_vector(body)
        if "delta_y" not in body:
            raise _ApiError(400, "missing 'delta_y'")
        delta_y = body["delta_y"]
        if not isinstance(delta_y, (int, float)) or isinstance(delta_y, bool) or not math.isfinite(float(delta_y)):
            raise _ApiError(400, "'delta_y' must be a finite number")
        constraints = body.get("constraints", {})
        if not isinstance(constraints, dict):
            raise _ApiError(400, "'constraints' must be an object")
        spec_kwargs = {}
        if "mutable" in constraints:
            mutable = constraints["mutable"]
            if not isinstance(mutable, list):
                raise _ApiError(400, "'constraints.mutable' must be a list of codes")
            codes = set(b.registry.codes)
            bad = [c for c in mutable if c not in codes]
            if bad:
                raise _ApiError(400, f"unknown feature codes in constraints: {bad[:5]}")
            spec_kwargs["mutable"] = mutable
        if "max_step" in constraints:
            spec_kwargs["max_step"] = float(constraints["max_step"])
        if "max_rounds" in constraints:
            spec_kwargs["max_rounds"] = int(constraints["max_rounds"])
        try:
            spec = FeasibilitySpec(**spec_kwargs)
        except ValueError as exc:
            raise _ApiError(422, str(exc)) from None
        forest = b.forest_for(bucket)
        result = solve_nudge(forest.predict_mean, x, float(delta_y), b.registry, spec)
        return _finite(
            {
                "status": result.status,
                "bucket": bucket,
                "base_score": result.base_score,
                "new_score": result.new_score,
                "target": result.target,
                "target_clamped": result.target_clamped,
                "deltas": [
                    {
                        "code": d.code,
                        "delta": d.delta,
                        "new_value": d.new_value,
                        "marginal_gain": d.marginal_gain,
                        "message": d.message,
                    }
                    for d in result.deltas
                ],
                "messages": result.messages,
            }
        )

    return app

"""Inverse queries on the score model: what feature change earns a target gain.

Treats the fitted predictor as an oracle and searches the feasible box by
greedy coordinate moves: each round scans a grid of single-feature changes
(respecting per-feature bounds, direction locks, and a per-move step cap)
and keeps the move with the largest squared-loss reduction toward the
target.  Changes are reported per feature with their marginal gains and
rendered into actionable feedback messages.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .attribution import Attribution, TreeExplainer
from .features import FeatureRegistry
from .forest import Forest

__all__ = [
    "FeasibilitySpec",
    "NudgeDelta",
    "NudgeResult",
    "solve_nudge",
    "whatif",
    "WhatIfResult",
    "render_feedback",
]

MAX_SCORE = 100.0
ACHIEVE_TOL = 0.5  # score points


@dataclass
class FeasibilitySpec:
    """Which features may move, and how far."""

    mutable: list[str] | None = None  # None: every registry feature marked mutable
    bounds: dict[str, tuple[float, float]] = field(default_factory=dict)  # default (0, 1)
    directions: dict[str, int] | None = None  # None: registry locks; -1 down only, +1 up only
    max_step: float = 0.2  # largest |delta| per accepted move
    grid_step: float = 0.05
    max_rounds: int = 25
    max_changes_per_round: int = 1
    tol: float = ACHIEVE_TOL

    def __post_init__(self) -> None:
        if self.grid_step <= 0 or self.max_step < self.grid_step:
            raise ValueError("need 0 < grid_step <= max_step")
        for code, (lo, hi) in self.bounds.items():
            if not (0.0 <= lo <= hi <= 1.0):
                raise ValueError(f"bounds for {code!r} must sit inside [0, 1]")


@dataclass
class NudgeDelta:
    code: str
    delta: float
    new_value: float
    marginal_gain: float  # score points gained by this feature's moves
    message: str | None = None


@dataclass
class NudgeResult:
    status: str  # "achieved" | "partial" | "infeasible"
    deltas: list[NudgeDelta]
    base_score: float
    new_score: float
    target: float
    target_clamped: bool
    messages: list[str] = field(default_factory=list)

    def delta_map(self) -> dict[str, float]:
        return {d.code: d.delta for d in self.deltas}


def solve_nudge(
    predict: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    delta_y: float,
    registry: FeatureRegistry,
    spec: FeasibilitySpec | None = None,
) -> NudgeResult:
    """Find a feasible feature change whose predicted score meets the target.

    ``predict`` maps a (n, p) batch to scores; the query point is never
    modified.  Deterministic: ties break by registry order, then by the
    smaller move.
    """
    spec = spec or FeasibilitySpec()
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    base_score = float(predict(x[None, :])[0])

    mutable = spec.mutable if spec.mutable is not None else registry.mutable_codes()
    for code in mutable:
        registry.index(code)  # raises on unknown codes
    directions = spec.directions or {}

    if delta_y <= 0.0:
        return NudgeResult("achieved", [], base_score, base_score, base_score + delta_y, False)
    raw_target = base_score + delta_y
    clamped = raw_target > MAX_SCORE
    target = min(raw_target, MAX_SCORE)
    if not mutable:
        return NudgeResult("infeasible", [], base_score, base_score, target, clamped)

    cur = x.copy()
    cur_score = base_score
    loss = (target - cur_score) ** 2
    n_steps = int(round(spec.max_step / spec.grid_step))
    moves: list[tuple[int, float, float]] = []  # (feature index, delta, gain)

    for _ in range(spec.max_rounds):
        if cur_score >= target - spec.tol:
            break
        any_accept = False
        for _ in range(spec.max_changes_per_round):
            cands: list[tuple[int, float]] = []  # (feature index, delta), in tie-break order
            for code in mutable:
                j = registry.index(code)
                lo, hi = spec.bounds.get(code, (0.0, 1.0))
                d = directions.get(code, registry.defs[j].direction)
                for k in range(1, n_steps + 1):
                    step = k * spec.grid_step
                    if d >= 0 and cur[j] + step <= hi + 1e-12:
                        cands.append((j, step))
                    if d <= 0 and cur[j] - step >= lo - 1e-12:
                        cands.append((j, -step))
            if not cands:
                break
            batch = np.tile(cur, (len(cands), 1))
            for row, (j, dlt) in enumerate(cands):
                batch[row, j] += dlt
            preds = np.asarray(predict(batch), dtype=np.float64)
            losses = (target - preds) ** 2
            best_row = -1
            best_loss = loss - 1e-12
            for row in range(len(cands)):
                if losses[row] < best_loss:
                    best_loss = losses[row]
                    best_row = row
            if best_row < 0:
                break
            j, dlt = cands[best_row]
            gain = float(preds[best_row] - cur_score)
            cur[j] += dlt
            cur_score = float(preds[best_row])
            loss = float(best_loss)
            moves.append((j, dlt, gain))
            any_accept = True
            if cur_score >= target - spec.tol:
                break
        if not any_accept:
            break

    per_feature: dict[int, tuple[float, float]] = {}
    for j, dlt, gain in moves:
        acc_d, acc_g = per_feature.get(j, (0.0, 0.0))
        per_feature[j] = (acc_d + dlt, acc_g + gain)
    deltas = [
        NudgeDelta(
            code=registry.defs[j].code,
            delta=d,
            new_value=float(cur[j]),
            marginal_gain=g,
            message=registry.defs[j].message,
        )
        for j, (d, g) in per_feature.items()
        if d != 0.0
    ]
    deltas.sort(key=lambda nd: -nd.marginal_gain)

    new_score = float(predict(cur[None, :])[0])  # fresh verification pass
    if new_score >= target - spec.tol and not clamped:
        status = "achieved"
    elif deltas:
        status = "partial"
    else:
        status = "infeasible"
    result = NudgeResult(status, deltas, base_score, new_score, target, clamped)
    result.messages = render_feedback(result, registry)
    return result


def render_feedback(result: NudgeResult, registry: FeatureRegistry) -> list[str]:
    """Actionable message per changed feature, ordered by marginal gain."""
    out = []
    for nd in result.deltas:
        d = registry.defs[registry.index(nd.code)]
        improving = d.direction == 0 or (d.direction > 0) == (nd.delta > 0)
        if d.message and improving:
            out.append(d.message)
        else:
            verb = "Raise" if nd.delta > 0 else "Lower"
            out.append(f"{verb} {d.name} from {nd.new_value - nd.delta:.2f} to {nd.new_value:.2f}.")
    return out


@dataclass
class WhatIfResult:
    prediction: float
    interval: tuple[float, float]
    attribution: Attribution
    x: np.ndarray


def whatif(
    x: np.ndarray,
    overrides: dict[str, float],
    registry: FeatureRegistry,
    forest: Forest,
    explainer: TreeExplainer,
    tau: float = 0.05,
) -> WhatIfResult:
    """Pure counterfactual evaluation at ``x`` with named feature overrides."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    q = x.copy()
    for code, value in overrides.items():
        j = registry.index(code)  # KeyError on unknown codes
        if not (0.0 <= value <= 1.0):
            raise ValueError(f"override for {code!r} must be in [0, 1], got {value}")
        q[j] = float(value)
    pred = float(forest.predict_mean(q[None, :])[0])
    band = forest.predict_interval(q[None, :], tau)[0]
    attr = explainer.shap_values(q)
    return WhatIfResult(pred, (float(band[0]), float(band[1])), attr, q)

"""Leakage-free feature assembly for (learner, upcoming test) pairs.

Features come in four families: academic (AQ), behavioral (BQ), test-taking
(TQ), and effort (EQ).  The registry is an ordered list of 54 base features
whose codes carry the family prefix and the global position index, followed
by the projected concept-mastery block ``aq_cm_*``.  Every emitted value lies
in [0, 1]: natural ratios pass through, counts and times go through min-max
bounds frozen at train time and clamped at inference.

A vector for a target test is a pure function of events strictly before the
``as_of`` cutoff; sessions only contribute once their recorded end precedes
the cutoff, so future-dated activity can never alter a vector.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .bkt import MASTERY_CUT, BktParams, KnowledgeState
from .mastery import FmModel, ProjectionConfig, mastery_vector, project
from .simulator import QuestionMeta, TestSession

__all__ = [
    "TOO_FAST_FACTOR",
    "TOO_SLOW_FACTOR",
    "FeatureDef",
    "FeatureRegistry",
    "FeatureVector",
    "ScoreRecord",
    "Bucket",
    "TargetTest",
    "LeakageError",
    "FeatureBuilder",
    "Dataset",
    "default_registry",
    "assign_bucket",
    "build_dataset",
    "cohort_trends",
]

TOO_FAST_FACTOR = 0.25  # attempt faster than this fraction of ideal time
TOO_SLOW_FACTOR = 2.0  # attempt slower than this multiple of ideal time

SCORED_KINDS = ("mock", "sectional")
_KIND_CODE = {"mock": 0.0, "sectional": 0.5, "practice": 1.0}
_N_EVENT_KINDS = 10


class LeakageError(ValueError):
    """Raised when a feature request would peek past its own cutoff."""


@dataclass
class FeatureDef:
    code: str
    group: str  # AQ | BQ | TQ | EQ
    name: str
    kind: str = "ratio"  # "ratio" (already in [0,1]) or "minmax"
    lo: float = 0.0
    hi: float = 1.0
    mutable: bool = False
    direction: int = 0  # nudge lock: -1 may only decrease, +1 may only increase
    message: str | None = None


@dataclass
class FeatureRegistry:
    defs: list[FeatureDef]

    def __post_init__(self) -> None:
        codes = [d.code for d in self.defs]
        if len(set(codes)) != len(codes):
            raise ValueError("duplicate feature codes")
        self._index = {c: i for i, c in enumerate(codes)}

    def __len__(self) -> int:
        return len(self.defs)

    def index(self, code: str) -> int:
        if code not in self._index:
            raise KeyError(f"unknown feature code {code!r}")
        return self._index[code]

    @property
    def codes(self) -> list[str]:
        return [d.code for d in self.defs]

    def mutable_codes(self) -> list[str]:
        return [d.code for d in self.defs if d.mutable]

    def group_of(self, code: str) -> str:
        return self.defs[self.index(code)].group

    def freeze_bounds(self, raw: np.ndarray) -> None:
        """Pin min-max bounds for count-like features from training rows."""
        for j, d in enumerate(self.defs):
            if d.kind != "minmax":
                continue
            col = raw[:, j]
            lo, hi = float(col.min()), float(col.max())
            if hi <= lo:
                hi = lo + 1.0
            d.lo, d.hi = lo, hi

    def normalize(self, raw: np.ndarray) -> np.ndarray:
        out = np.empty_like(raw, dtype=np.float64)
        for j, d in enumerate(self.defs):
            if d.kind == "minmax":
                out[..., j] = (raw[..., j] - d.lo) / (d.hi - d.lo)
            else:
                out[..., j] = raw[..., j]
        return np.clip(out, 0.0, 1.0)

    def to_dict(self) -> dict:
        return {
            "defs": [
                {
                    "code": d.code, "group": d.group, "name": d.name, "kind": d.kind,
                    "lo": d.lo, "hi": d.hi, "mutable": d.mutable,
                    "direction": d.direction, "message": d.message,
                }
                for d in self.defs
            ]
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "FeatureRegistry":
        return cls([FeatureDef(**d) for d in payload["defs"]])


def default_registry(d_mastery: int = 16) -> FeatureRegistry:
    """The 54 base features plus the projected mastery block.

    Position indexes are part of the code so downstream reports stay stable:
    position 16 is the mean accuracy over the last three tests, 17 the target
    test kind, 20 the count of past test sessions.
    """
    R, M = "ratio", "minmax"
    defs = [
        FeatureDef("aq_0", "AQ", "last test score", R),
        FeatureDef("aq_1", "AQ", "second-last test score", R),
        FeatureDef("aq_2", "AQ", "third-last test score", R),
        FeatureDef("aq_3", "AQ", "accuracy on last test", R),
        FeatureDef("aq_4", "AQ", "accuracy on second-last test", R),
        FeatureDef("aq_5", "AQ", "accuracy on third-last test", R),
        FeatureDef("aq_6", "AQ", "mean score over last 3 tests", R),
        FeatureDef("aq_7", "AQ", "score trend over last 3 tests", R),
        FeatureDef("aq_8", "AQ", "best score so far", R),
        FeatureDef("aq_9", "AQ", "worst score so far", R),
        FeatureDef("aq_10", "AQ", "mean score over all past tests", R),
        FeatureDef("aq_11", "AQ", "mean concept mastery belief", R),
        FeatureDef("aq_12", "AQ", "weakest concept mastery belief", R),
        FeatureDef("aq_13", "AQ", "fraction of concepts mastered", R),
        FeatureDef("aq_14", "AQ", "mean guess tendency on seen concepts", R),
        FeatureDef("aq_15", "AQ", "fraction of catalog concepts attempted", R),
        FeatureDef("aq_16", "AQ", "mean accuracy over last 3 tests", R),
        FeatureDef("bq_17", "BQ", "target test kind", R),
        FeatureDef("aq_18", "AQ", "practice accuracy since last test", R),
        FeatureDef("aq_19", "AQ", "lifetime attempt accuracy", R),
        FeatureDef("bq_20", "BQ", "number of test sessions", M),
        FeatureDef(
            "bq_21", "BQ", "careless mistake ratio", R, mutable=True, direction=-1,
            message="You seem to be making careless mistakes. Revise your calculations before submissions",
        ),
        FeatureDef(
            "bq_22", "BQ", "time spent on non-attempts", R, mutable=True, direction=-1,
            message="A lot of your test time goes to questions you never answer. Commit or move on sooner.",
        ),
        FeatureDef(
            "bq_23", "BQ", "rushed incorrect ratio", R, mutable=True, direction=-1,
            message="Quick answers are costing you marks. Take a breath before answering.",
        ),
        FeatureDef(
            "bq_24", "BQ", "overtime incorrect ratio", R, mutable=True, direction=-1,
            message="Long stretches on questions you miss anyway: practice letting go and returning later.",
        ),
        FeatureDef(
            "bq_25", "BQ", "wasted attempt ratio", R, mutable=True, direction=-1,
            message="Rushed attempts on topics you have not mastered rarely land. Study first, then attempt.",
        ),
        FeatureDef(
            "bq_26", "BQ", "skipped question ratio", R, mutable=True, direction=-1,
            message="You are leaving many questions untouched. Attempt more of the paper.",
        ),
        FeatureDef("bq_27", "BQ", "subject switching rate", R, mutable=True, direction=-1,
                   message="Frequent subject switching breaks your flow. Finish a section before moving."),
        FeatureDef("bq_28", "BQ", "question revisit ratio", R),
        FeatureDef(
            "tq_29", "TQ", "first-look attempt ratio", R, mutable=True, direction=1,
            message="Trust your first read: decide on first look more often.",
        ),
        FeatureDef(
            "tq_30", "TQ", "too-fast attempt ratio", R, mutable=True, direction=-1,
            message="Many attempts are far quicker than the ideal time. Slow down.",
        ),
        FeatureDef(
            "tq_31", "TQ", "too-slow attempt ratio", R, mutable=True, direction=-1,
            message="Some questions absorb far more than their ideal time. Set a per-question limit.",
        ),
        FeatureDef("tq_32", "TQ", "review-mark ratio", R, mutable=True),
        FeatureDef(
            "tq_33", "TQ", "option change ratio", R, mutable=True, direction=-1,
            message="Second-guessing answers is hurting you. Change answers only with a concrete reason.",
        ),
        FeatureDef("tq_34", "TQ", "mean attempt pace vs ideal", R),
        FeatureDef(
            "tq_35", "TQ", "test time utilization", R, mutable=True, direction=1,
            message="You finish with unused time. Use it to attempt or review more questions.",
        ),
        FeatureDef(
            "tq_36", "TQ", "attempt rate", R, mutable=True, direction=1,
            message="Attempt a larger share of the paper to give yourself scoring chances.",
        ),
        FeatureDef("tq_37", "TQ", "fast and correct ratio", R),
        FeatureDef("tq_38", "TQ", "mean question view time", M),
        FeatureDef("tq_39", "TQ", "attempts in first half of test", R),
        FeatureDef("tq_40", "TQ", "single-view attempt ratio", R),
        FeatureDef(
            "eq_41", "EQ", "practice minutes since last test", M, mutable=True, direction=1,
            message="Add regular practice sessions between tests.",
        ),
        FeatureDef(
            "eq_42", "EQ", "practice attempts since last test", M, mutable=True, direction=1,
            message="Solve more practice questions before your next test.",
        ),
        FeatureDef("eq_43", "EQ", "variety of activity kinds", R, mutable=True, direction=1,
                   message="Mix up how you study: practice, watch, search, and ask."),
        FeatureDef("eq_44", "EQ", "events since last test", M, mutable=True, direction=1,
                   message="Stay more active on the platform between tests."),
        FeatureDef("eq_45", "EQ", "days since last test", M),
        FeatureDef("eq_46", "EQ", "content browses since last test", M, mutable=True, direction=1,
                   message="Browse more study content between tests."),
        FeatureDef("eq_47", "EQ", "video minutes since last test", M, mutable=True, direction=1,
                   message="Watch concept videos for the topics you keep missing."),
        FeatureDef("eq_48", "EQ", "searches since last test", M),
        FeatureDef("eq_49", "EQ", "questions asked since last test", M),
        FeatureDef("eq_50", "EQ", "practice sessions since last test", M, mutable=True, direction=1,
                   message="Short, frequent practice sessions beat cramming."),
        FeatureDef("eq_51", "EQ", "daily event rate since last test", M),
        FeatureDef("eq_52", "EQ", "fraction of days active", R, mutable=True, direction=1,
                   message="Practice on more days each week, even briefly."),
        FeatureDef("eq_53", "EQ", "practice concept coverage", R, mutable=True, direction=1,
                   message="Spread practice across more concepts."),
    ]
    assert len(defs) == 54
    for j in range(d_mastery):
        defs.append(FeatureDef(f"aq_cm_{j}", "AQ", f"projected mastery {j}", M))
    return FeatureRegistry(defs)


@dataclass
class FeatureVector:
    learner_id: str
    test_id: str
    as_of: int
    values: np.ndarray
    cold_start: dict[str, bool] = field(default_factory=dict)


@dataclass(frozen=True)
class ScoreRecord:
    learner_id: str
    test_id: str
    y: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.y <= 100.0):
            raise ValueError("score must be in [0, 100]")


@dataclass(frozen=True)
class TargetTest:
    test_id: str
    kind: str
    start_ts: int


class Bucket(IntEnum):
    """Prior-performance segments: [0,25), [25,50), [50,75), [75,100]."""

    B1 = 1
    B2 = 2
    B3 = 3
    B4 = 4


def assign_bucket(prev_scores: list[float]) -> tuple[Bucket, bool]:
    """Bucket of the mean of up to the last three prior test scores.

    With no prior tests the learner lands in B2 with the cold-start flag set.
    """
    if not prev_scores:
        return Bucket.B2, True
    m = float(np.mean(prev_scores[-3:]))
    if m < 25.0:
        return Bucket.B1, False
    if m < 50.0:
        return Bucket.B2, False
    if m < 75.0:
        return Bucket.B3, False
    return Bucket.B4, False


@dataclass
class _AttemptTag:
    ts: int
    concept: int
    correct: bool
    duration: float
    ideal: float
    mastered_before: bool
    in_practice: bool
    session_id: str


@dataclass
class _SessionStats:
    session: TestSession
    attempts: list[_AttemptTag]
    n_views: int
    view_time: float
    non_attempt_time: float
    total_event_time: float
    option_changes: int
    review_marks: int
    swaps: int
    multi_view_questions: int
    viewed_questions: int
    single_view_attempts: int
    first_look_attempts: int
    front_half_attempts: int


class FeatureBuilder:
    """Turns a learner's history into registry-ordered feature vectors.

    Holds the fitted upstream artifacts: per-concept knowledge-tracing
    parameters, the factorization model, and the projection config.
    """

    def __init__(
        self,
        registry: FeatureRegistry,
        catalog: list[QuestionMeta],
        bkt_params: dict[int, BktParams],
        fm_model: FmModel | None = None,
        projection: ProjectionConfig | None = None,
        default_bkt: BktParams | None = None,
        too_fast: float = TOO_FAST_FACTOR,
        too_slow: float = TOO_SLOW_FACTOR,
        mastery_cut: float = MASTERY_CUT,
    ) -> None:
        self.registry = registry
        self.catalog = {q.question_id: q for q in catalog}
        self.n_concepts = 1 + max((q.concept_id for q in catalog), default=0)
        self.bkt_params = bkt_params
        self.fm_model = fm_model
        self.projection = projection
        self.default_bkt = default_bkt or BktParams(0.3, 0.1, 0.25, 0.15)
        self.too_fast = too_fast
        self.too_slow = too_slow
        self.mastery_cut = mastery_cut
        self._mastery_cache: dict[str, np.ndarray] = {}

    # -- chronological scan ------------------------------------------------

    def _scan(self, sessions: list[TestSession], as_of: int):
        """One pass over pre-cutoff history: tagged attempts and session stats."""
        hist = sorted(
            (s for s in sessions if s.end_ts <= as_of),
            key=lambda s: (s.start_ts, s.session_id),
        )
        states: dict[int, KnowledgeState] = {}
        stats: list[_SessionStats] = []
        for s in hist:
            tags: list[_AttemptTag] = []
            views: dict[str, int] = {}
            view_time = 0.0
            non_attempt_time = 0.0
            total_time = 0.0
            changes = reviews = swaps = 0
            changed_q: set[str] = set()
            attempted_q: set[str] = set()
            half_ts = s.start_ts + (s.end_ts - s.start_ts) / 2.0
            front = single = firstlook = 0
            for e in s.events:
                if e.ts >= as_of:
                    continue
                if e.duration_s is not None:
                    total_time += e.duration_s
                if e.kind == "view_question" and e.question_id is not None:
                    views[e.question_id] = views.get(e.question_id, 0) + 1
                    if e.duration_s is not None:
                        view_time += e.duration_s
                elif e.kind == "change_option":
                    changes += 1
                    if e.question_id is not None:
                        changed_q.add(e.question_id)
                elif e.kind == "mark_review":
                    reviews += 1
                elif e.kind == "swap_subject":
                    swaps += 1
                elif e.kind == "attempt" and e.question_id in self.catalog:
                    q = self.catalog[e.question_id]
                    p = self.bkt_params.get(q.concept_id, self.default_bkt)
                    st = states.get(q.concept_id)
                    if st is None:
                        st = KnowledgeState(q.concept_id, p.p_init, 0)
                    mastered = st.p_learned > self.mastery_cut
                    # forward update (inline for speed)
                    L, g, sl, tr = st.p_learned, p.p_guess, p.p_slip, p.p_transit
                    if e.correct:
                        num, den = L * (1 - sl), L * (1 - sl) + (1 - L) * g
                    else:
                        num, den = L * sl, L * sl + (1 - L) * (1 - g)
                    post = num / den if den > 0 else L
                    states[q.concept_id] = KnowledgeState(
                        q.concept_id, min(1.0, post + (1 - post) * tr), st.n_attempts + 1
                    )
                    dur = e.duration_s if e.duration_s is not None else q.ideal_time_s
                    tags.append(
                        _AttemptTag(
                            e.ts, q.concept_id, bool(e.correct), float(dur),
                            q.ideal_time_s, mastered, s.test_kind == "practice", s.session_id,
                        )
                    )
                    attempted_q.add(e.question_id)
                    if e.ts <= half_ts:
                        front += 1
            for qid in attempted_q:
                v = views.get(qid, 0)
                if v <= 1:
                    single += 1
                    if qid not in changed_q:
                        firstlook += 1
            for e in s.events:
                if e.ts >= as_of or e.duration_s is None:
                    continue
                if e.question_id is not None and e.question_id not in attempted_q:
                    non_attempt_time += e.duration_s
            stats.append(
                _SessionStats(
                    session=s,
                    attempts=tags,
                    n_views=sum(views.values()),
                    view_time=view_time,
                    non_attempt_time=non_attempt_time,
                    total_event_time=total_time,
                    option_changes=changes,
                    review_marks=reviews,
                    swaps=swaps,
                    multi_view_questions=sum(1 for v in views.values() if v > 1),
                    viewed_questions=len(views),
                    single_view_attempts=single,
                    first_look_attempts=firstlook,
                    front_half_attempts=front,
                )
            )
        return stats, states

    def _mastery_block(self, learner_id: str) -> np.ndarray:
        if self.fm_model is None or self.projection is None:
            return np.zeros(sum(1 for d in self.registry.defs if d.code.startswith("aq_cm_")))
        cached = self._mastery_cache.get(learner_id)
        if cached is None:
            row, _ = mastery_vector(self.fm_model, learner_id)
            cached = project(row, self.projection)
            self._mastery_cache[learner_id] = cached
        return cached

    # -- feature assembly ----------------------------------------------------

    def raw_features(
        self, learner_id: str, sessions: list[TestSession], target: TargetTest,
        as_of: int | None = None,
    ) -> FeatureVector:
        """Pre-normalization feature values (used to freeze min-max bounds)."""
        cutoff = target.start_ts if as_of is None else as_of
        if cutoff > target.start_ts:
            raise LeakageError(
                f"as_of {cutoff} is after the target test start {target.start_ts}"
            )
        stats, states = self._scan(sessions, cutoff)
        scored = [
            st for st in stats
            if st.session.test_kind in SCORED_KINDS and st.session.score_pct is not None
        ]
        last3 = scored[-3:]
        v = np.zeros(len(self.registry))
        cold = {"AQ": not scored, "BQ": not scored, "TQ": not scored, "EQ": False}

        def put(code: str, value: float) -> None:
            v[self.registry.index(code)] = value

        def ratio(num, den):
            return num / den if den > 0 else 0.0

        # score lags (most recent first)
        scores = [st.session.score_pct for st in scored]
        for k, code in enumerate(("aq_0", "aq_1", "aq_2")):
            if len(scores) > k:
                put(code, scores[-1 - k] / 100.0)
        accs = [ratio(sum(t.correct for t in st.attempts), len(st.attempts)) for st in scored]
        for k, code in enumerate(("aq_3", "aq_4", "aq_5")):
            if len(accs) > k:
                put(code, accs[-1 - k])
        if scores:
            put("aq_6", float(np.mean(scores[-3:])) / 100.0)
            put("aq_7", (scores[-1] - scores[-3]) / 200.0 + 0.5 if len(scores) >= 3 else 0.5)
            put("aq_8", max(scores) / 100.0)
            put("aq_9", min(scores) / 100.0)
            put("aq_10", float(np.mean(scores)) / 100.0)
            put("aq_16", float(np.mean(accs[-3:])))
        attempted_states = [s for s in states.values() if s.n_attempts > 0]
        if attempted_states:
            pl = np.array([s.p_learned for s in attempted_states])
            put("aq_11", float(pl.mean()))
            put("aq_12", float(pl.min()))
            put("aq_13", float((pl > self.mastery_cut).mean()))
            guesses = [
                self.bkt_params[s.concept_id].p_guess
                for s in attempted_states if s.concept_id in self.bkt_params
            ]
            put("aq_14", float(np.mean(guesses)) if guesses else 0.0)
            put("aq_15", len(attempted_states) / self.n_concepts)
        all_attempts = [t for st in stats for t in st.attempts]
        put("aq_19", ratio(sum(t.correct for t in all_attempts), len(all_attempts)))

        # target-test and history counts
        put("bq_17", _KIND_CODE.get(target.kind, 0.0))
        put("bq_20", float(len(scored)))

        # test-taking behavior over the last up-to-3 scored tests
        if last3:
            def mean_over(fn):
                return float(np.mean([fn(st) for st in last3]))

            put("bq_21", mean_over(lambda st: ratio(
                sum(1 for t in st.attempts if not t.correct and t.duration < self.too_fast * t.ideal and t.mastered_before),
                len(st.attempts))))
            put("bq_22", mean_over(lambda st: ratio(st.non_attempt_time, st.total_event_time)))
            put("bq_23", mean_over(lambda st: ratio(
                sum(1 for t in st.attempts if not t.correct and t.duration < self.too_fast * t.ideal),
                len(st.attempts))))
            put("bq_24", mean_over(lambda st: ratio(
                sum(1 for t in st.attempts if not t.correct and t.duration > self.too_slow * t.ideal),
                len(st.attempts))))
            put("bq_25", mean_over(lambda st: ratio(
                sum(1 for t in st.attempts if t.duration < self.too_fast * t.ideal and not t.mastered_before),
                len(st.attempts))))
            put("bq_26", mean_over(lambda st: 1.0 - min(1.0, ratio(len(st.attempts), st.session.total_questions))))
            put("bq_27", mean_over(lambda st: min(1.0, ratio(st.swaps, len(st.attempts)))))
            put("bq_28", mean_over(lambda st: ratio(st.multi_view_questions, st.viewed_questions)))
            put("tq_29", mean_over(lambda st: ratio(st.first_look_attempts, len(st.attempts))))
            put("tq_30", mean_over(lambda st: ratio(
                sum(1 for t in st.attempts if t.duration < self.too_fast * t.ideal), len(st.attempts))))
            put("tq_31", mean_over(lambda st: ratio(
                sum(1 for t in st.attempts if t.duration > self.too_slow * t.ideal), len(st.attempts))))
            put("tq_32", mean_over(lambda st: min(1.0, ratio(st.review_marks, len(st.attempts)))))
            put("tq_33", mean_over(lambda st: min(1.0, ratio(st.option_changes, len(st.attempts)))))
            put("tq_34", mean_over(lambda st: min(3.0, float(np.mean([t.duration / t.ideal for t in st.attempts])) if st.attempts else 0.0) / 3.0))
            put("tq_35", mean_over(lambda st: min(1.0, ratio(st.total_event_time, st.session.total_time_s))))
            put("tq_36", mean_over(lambda st: min(1.0, ratio(len(st.attempts), st.session.total_questions))))
            put("tq_37", mean_over(lambda st: ratio(
                sum(1 for t in st.attempts if t.correct and t.duration < self.too_fast * t.ideal), len(st.attempts))))
            put("tq_38", mean_over(lambda st: ratio(st.view_time, st.n_views)))
            put("tq_39", mean_over(lambda st: ratio(st.front_half_attempts, len(st.attempts))))
            put("tq_40", mean_over(lambda st: ratio(st.single_view_attempts, len(st.attempts))))

        # effort window: from the end of the last scored test (or the first
        # recorded activity) up to the cutoff
        win_start = scored[-1].session.end_ts if scored else (stats[0].session.start_ts if stats else cutoff)
        win = [st for st in stats if st.session.start_ts >= win_start]
        win_events = [
            e for st in win for e in st.session.events
            if e.ts >= win_start and e.ts < cutoff
        ]
        cold["EQ"] = not win_events
        practice_attempts = [t for st in win for t in st.attempts if t.in_practice and t.ts >= win_start]
        put("aq_18", ratio(sum(t.correct for t in practice_attempts), len(practice_attempts)))
        gap_days = max((cutoff - win_start) / 86_400_000.0, 1e-9)
        kinds = {e.kind for e in win_events}
        durations = {
            k: sum(e.duration_s or 0.0 for e in win_events if e.kind == k)
            for k in ("attempt", "watch_video",)
        }
        practice_secs = sum(
            e.duration_s or 0.0 for st in win if st.session.test_kind == "practice"
            for e in st.session.events if win_start <= e.ts < cutoff
        )
        put("eq_41", practice_secs / 60.0)
        put("eq_42", float(len(practice_attempts)))
        put("eq_43", len(kinds) / _N_EVENT_KINDS)
        put("eq_44", float(len(win_events)))
        put("eq_45", gap_days if scored else 0.0)
        put("eq_46", float(sum(1 for e in win_events if e.kind == "browse_content")))
        put("eq_47", durations["watch_video"] / 60.0)
        put("eq_48", float(sum(1 for e in win_events if e.kind == "search")))
        put("eq_49", float(sum(1 for e in win_events if e.kind == "ask_question")))
        put("eq_50", float(sum(1 for st in win if st.session.test_kind == "practice")))
        put("eq_51", len(win_events) / gap_days)
        active_days = {int((e.ts - win_start) // 86_400_000) for e in win_events}
        put("eq_52", min(1.0, len(active_days) / max(gap_days, 1.0)))
        concepts_practiced = {t.concept for t in practice_attempts}
        put("eq_53", len(concepts_practiced) / self.n_concepts)

        # projected mastery block
        block = self._mastery_block(learner_id)
        for j, val in enumerate(block):
            put(f"aq_cm_{j}", float(val))

        return FeatureVector(learner_id, target.test_id, cutoff, v, cold)

    def featurize(
        self, learner_id: str, sessions: list[TestSession], target: TargetTest,
        as_of: int | None = None,
    ) -> FeatureVector:
        """Normalized [0, 1] feature vector for one (learner, upcoming test)."""
        fv = self.raw_features(learner_id, sessions, target, as_of)
        fv.values = self.registry.normalize(fv.values)
        return fv

    def prior_scores(self, learner_id: str, sessions: list[TestSession], as_of: int) -> list[float]:
        """Scores of the learner's completed scored tests before the cutoff."""
        scored = sorted(
            (
                s for s in sessions
                if s.learner_id == learner_id and s.end_ts <= as_of
                and s.test_kind in SCORED_KINDS and s.score_pct is not None
            ),
            key=lambda s: (s.start_ts, s.session_id),
        )
        return [s.score_pct for s in scored]


@dataclass
class Dataset:
    """Feature rows paired with next-test scores, split by time."""

    X: np.ndarray
    y: np.ndarray
    bucket: np.ndarray
    learner_ids: list[str]
    test_ids: list[str]
    as_of: np.ndarray
    is_train: np.ndarray

    def rows(self, train: bool, bucket: Bucket | None = None):
        m = self.is_train if train else ~self.is_train
        if bucket is not None:
            m = m & (self.bucket == int(bucket))
        return self.X[m], self.y[m], np.where(m)[0]

    def __len__(self) -> int:
        return len(self.y)


def build_dataset(
    sessions: list[TestSession],
    builder: FeatureBuilder,
    train_frac: float = 0.8,
    freeze_bounds: bool = True,
) -> Dataset:
    """One row per (learner, scored valid test with at least one prior).

    Rows are ordered chronologically within each learner; the earliest
    ``train_frac`` of rows (by feature cutoff time) form the training split.
    When ``freeze_bounds`` is set, min-max bounds in the builder's registry
    are pinned from the training rows before normalization.
    """
    by_learner: dict[str, list[TestSession]] = {}
    for s in sessions:
        by_learner.setdefault(s.learner_id, []).append(s)

    raw_rows, ys, buckets, lids, tids, cut = [], [], [], [], [], []
    for lid in sorted(by_learner):
        hist = sorted(by_learner[lid], key=lambda s: (s.start_ts, s.session_id))
        scored = [s for s in hist if s.test_kind in SCORED_KINDS and s.score_pct is not None]
        for k in range(1, len(scored)):
            tgt = scored[k]
            target = TargetTest(tgt.test_id, tgt.test_kind, tgt.start_ts)
            fv = builder.raw_features(lid, hist, target)
            prev = [s.score_pct for s in scored[:k]]
            b, _ = assign_bucket(prev)
            raw_rows.append(fv.values)
            ys.append(tgt.score_pct)
            buckets.append(int(b))
            lids.append(lid)
            tids.append(tgt.test_id)
            cut.append(tgt.start_ts)

    if not raw_rows:
        return Dataset(
            np.zeros((0, len(builder.registry))), np.zeros(0), np.zeros(0, dtype=int),
            [], [], np.zeros(0, dtype=np.int64), np.zeros(0, dtype=bool),
        )
    raw = np.vstack(raw_rows)
    y = np.array(ys)
    bucket = np.array(buckets)
    as_of = np.array(cut, dtype=np.int64)

    order = np.argsort(as_of, kind="stable")
    n_train = int(round(train_frac * len(y)))
    is_train = np.zeros(len(y), dtype=bool)
    is_train[order[:n_train]] = True

    if freeze_bounds:
        builder.registry.freeze_bounds(raw[is_train])
    X = builder.registry.normalize(raw)
    return Dataset(X, y, bucket, lids, tids, as_of, is_train)


def cohort_trends(
    sessions: list[TestSession],
    builder: FeatureBuilder,
    min_tests: int = 10,
    n_index: int = 10,
) -> dict[str, np.ndarray]:
    """Test-on-test progression for learners with at least ``min_tests`` valid tests.

    For each test index, the mean over qualifying learners of: marks scored,
    wasted-attempt ratio (too fast on unmastered concepts), unused-time ratio,
    and overtime-incorrect ratio.
    """
    by_learner: dict[str, list[TestSession]] = {}
    for s in sessions:
        by_learner.setdefault(s.learner_id, []).append(s)

    acc = {k: np.zeros(n_index) for k in ("marks", "wasted", "unused_time", "overtime_incorrect")}
    counts = np.zeros(n_index)
    for lid, hist in sorted(by_learner.items()):
        hist = sorted(hist, key=lambda s: (s.start_ts, s.session_id))
        scored_total = [s for s in hist if s.test_kind in SCORED_KINDS and s.score_pct is not None]
        if len(scored_total) < min_tests:
            continue
        horizon = max(s.end_ts for s in hist) + 1
        stats, _ = builder._scan(hist, horizon)
        scored = [st for st in stats if st.session.test_kind in SCORED_KINDS and st.session.score_pct is not None]
        for i, st in enumerate(scored[:n_index]):
            n_att = len(st.attempts)
            acc["marks"][i] += st.session.score_pct
            if n_att:
                acc["wasted"][i] += sum(
                    1 for t in st.attempts
                    if t.duration < builder.too_fast * t.ideal and not t.mastered_before
                ) / n_att
                acc["overtime_incorrect"][i] += sum(
                    1 for t in st.attempts
                    if not t.correct and t.duration > builder.too_slow * t.ideal
                ) / n_att
            acc["unused_time"][i] += max(0.0, 1.0 - st.total_event_time / st.session.total_time_s)
            counts[i] += 1
    if counts.max() == 0:
        warnings.warn("no learners meet the min_tests threshold; trend table is empty")
        return {"n_learners": counts, **{k: np.zeros(0) for k in acc}}
    out = {k: np.divide(v, counts, out=np.zeros_like(v), where=counts > 0) for k, v in acc.items()}
    out["n_learners"] = counts
    return out

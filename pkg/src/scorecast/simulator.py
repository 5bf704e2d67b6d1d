"""Synthetic learner populations and interaction logs with planted ground truth.

The generator plants a per-concept knowledge-tracing process (learn/guess/slip)
shifted by learner ability against question difficulty, so every downstream
fit in the pipeline can be checked against known truth.  The same JSONL schema
used for emitted logs is accepted back by the ingest path, and external logs
in that schema can be validated and loaded the same way.

Log schema (one JSON object per line):
  session header: {"session": {... TestSession fields sans events ...}}
  event:          {"learner_id", "session_id", "ts", "kind",
                   "question_id"?, "correct"?, "duration_s"?}
Question catalog: CSV ``question_id,concept_id,difficulty,ideal_time_s``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

__all__ = [
    "EVENT_KINDS",
    "LearnerProfile",
    "QuestionMeta",
    "InteractionEvent",
    "TestSession",
    "TestBlueprint",
    "SimConfig",
    "PlantedWorld",
    "LogSchemaError",
    "generate_population",
    "make_world",
    "generate_events",
    "write_log",
    "write_catalog",
    "read_catalog",
    "ingest_log",
    "filter_valid_tests",
    "bkt_attempt_sequences",
]

EVENT_KINDS = frozenset(
    {
        "view_question",
        "choose_option",
        "change_option",
        "mark_review",
        "attempt",
        "swap_subject",
        "browse_content",
        "watch_video",
        "search",
        "ask_question",
    }
)

TEST_KINDS = frozenset({"mock", "practice", "sectional"})

_EPOCH_MS = 1_767_225_600_000  # 2026-01-01T00:00:00Z
_DAY_MS = 86_400_000


def _logit(p: float | np.ndarray):
    p = np.clip(p, 1e-9, 1 - 1e-9)
    return np.log(p / (1 - p))


def _sigmoid(z):
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)), np.exp(z) / (1.0 + np.exp(z)))


@dataclass(frozen=True)
class LearnerProfile:
    learner_id: str
    ability: float  # latent, logit scale
    learn_rate: float  # probability multiplier driver in (0, 1]
    carelessness: float  # probability of a rushed attempt
    pace_bias: float  # multiplier on ideal time, > 0
    engagement: float  # expected practice events per day, >= 0

    def __post_init__(self) -> None:
        if not (0.0 <= self.learn_rate <= 1.0):
            raise ValueError("learn_rate must be in [0, 1]")
        if not (0.0 <= self.carelessness <= 1.0):
            raise ValueError("carelessness must be in [0, 1]")
        if self.pace_bias <= 0.0:
            raise ValueError("pace_bias must be > 0")
        if self.engagement < 0.0:
            raise ValueError("engagement must be >= 0")


@dataclass(frozen=True)
class QuestionMeta:
    question_id: str
    concept_id: int
    difficulty: float
    ideal_time_s: float

    def __post_init__(self) -> None:
        if self.ideal_time_s <= 0.0:
            raise ValueError("ideal_time_s must be > 0")
        if self.concept_id < 0:
            raise ValueError("concept_id must be >= 0")


@dataclass(slots=True)
class InteractionEvent:
    learner_id: str
    session_id: str
    ts: int  # ms epoch
    kind: str
    question_id: str | None = None
    correct: bool | None = None
    duration_s: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.kind == "attempt" and (self.question_id is None or self.correct is None):
            raise ValueError("attempt events require question_id and correct")


@dataclass
class TestSession:
    session_id: str
    learner_id: str
    test_id: str
    test_kind: str
    start_ts: int
    end_ts: int
    total_questions: int
    total_time_s: float
    events: list[InteractionEvent] = field(default_factory=list)
    score_pct: float | None = None

    def __post_init__(self) -> None:
        if self.test_kind not in TEST_KINDS:
            raise ValueError(f"unknown test kind {self.test_kind!r}")
        if self.end_ts < self.start_ts:
            raise ValueError("end_ts must be >= start_ts")
        if self.score_pct is not None and not (0.0 <= self.score_pct <= 100.0):
            raise ValueError("score_pct must be in [0, 100]")

    @property
    def attempts(self) -> list[InteractionEvent]:
        return [e for e in self.events if e.kind == "attempt"]

    def time_spent_s(self) -> float:
        return float(sum(e.duration_s for e in self.events if e.duration_s is not None))


@dataclass(frozen=True)
class TestBlueprint:
    test_id: str
    kind: str
    question_idx: tuple[int, ...]  # positions into the catalog
    total_time_s: float


@dataclass
class SimConfig:
    """Population, catalog, and behavior knobs.  Desk-scale defaults."""

    n_concepts: int = 50
    n_questions: int = 400
    questions_per_test: int = 40
    n_tests: int = 5
    horizon_days: int = 60
    # profile distributions
    ability_sd: float = 1.0
    learn_rate_range: tuple[float, float] = (0.2, 1.0)
    carelessness_range: tuple[float, float] = (0.0, 0.3)
    pace_sigma: float = 0.22
    engagement_range: tuple[float, float] = (0.3, 6.0)
    # planted per-concept knowledge-tracing parameters
    p_init_range: tuple[float, float] = (0.1, 0.55)
    p_transit_range: tuple[float, float] = (0.08, 0.3)
    p_guess_range: tuple[float, float] = (0.12, 0.3)
    p_slip_range: tuple[float, float] = (0.03, 0.15)
    ability_weight: float = 1.0  # logistic shift of guess/init by ability vs difficulty
    slip_ability_weight: float = 0.0  # logistic shift of slip down with ability
    careless_extra_slip: float = 0.5
    rush_time_range: tuple[float, float] = (0.08, 0.22)  # fraction of ideal time
    skip_learned: float = 0.04  # chance of skipping a question on a mastered concept
    skip_unlearned: float = 0.12
    skip_hard: float = 0.28  # unmastered and difficulty above ability
    # answer churn: a stable per-learner habit of revisiting and changing options.
    # Changing a remembered answer multiplies the slip chance; changing a guess
    # recovers part of the miss probability.
    churn_range: tuple[float, float] = (0.05, 0.45)
    churn_slip_multiplier: float = 6.0
    churn_guess_gain: float = 0.35
    careless_decay: float = 0.95  # carelessness multiplier applied after each test
    test_learn_factor: float = 0.6  # learning chance scale during tests vs practice
    time_budget_factor: float = 0.65  # test time allowance vs sum of ideal times
    max_practice_events_per_gap: int = 240

    def __post_init__(self) -> None:
        for name in (
            "learn_rate_range",
            "carelessness_range",
            "engagement_range",
            "p_init_range",
            "p_transit_range",
            "p_guess_range",
            "p_slip_range",
            "rush_time_range",
        ):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} must be (lo, hi) with lo <= hi")
            if lo < 0.0:
                raise ValueError(f"{name} lower bound must be >= 0")
        if self.carelessness_range[1] > 1.0 or self.learn_rate_range[1] > 1.0:
            raise ValueError("probability ranges must stay within [0, 1]")
        if self.n_concepts < 1 or self.n_questions < 1:
            raise ValueError("catalog sizes must be >= 1")


@dataclass
class PlantedWorld:
    """Catalog plus the planted per-concept truth backing event generation."""

    config: SimConfig
    catalog: list[QuestionMeta]
    blueprints: list[TestBlueprint]
    p_init: np.ndarray
    p_transit: np.ndarray
    p_guess: np.ndarray
    p_slip: np.ndarray

    @property
    def concept_of(self) -> np.ndarray:
        return np.array([q.concept_id for q in self.catalog])

    @property
    def ideal_time(self) -> np.ndarray:
        return np.array([q.ideal_time_s for q in self.catalog])

    @property
    def difficulty(self) -> np.ndarray:
        return np.array([q.difficulty for q in self.catalog])


class LogSchemaError(ValueError):
    """Raised for malformed log lines; the message names the offending line."""


def _learner_stream(seed: int, learner_id: str) -> np.random.Generator:
    # counter-based per-learner key so streams are independent of iteration order
    h = int.from_bytes(hashlib.sha256(learner_id.encode()).digest()[:8], "big")
    return np.random.Generator(np.random.Philox(key=(seed & 0xFFFFFFFFFFFFFFFF, h)))


def generate_population(n: int, seed: int, config: SimConfig | None = None) -> list[LearnerProfile]:
    """Draw ``n`` learner profiles from the configured distributions."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cfg = config or SimConfig()
    rng = np.random.Generator(np.random.Philox(key=(seed & 0xFFFFFFFFFFFFFFFF, 0xA11CE)))
    ability = rng.normal(0.0, cfg.ability_sd, size=n)
    learn = rng.uniform(*cfg.learn_rate_range, size=n)
    care = rng.uniform(*cfg.carelessness_range, size=n)
    pace = np.exp(rng.normal(0.0, cfg.pace_sigma, size=n))
    engage = rng.uniform(*cfg.engagement_range, size=n)
    return [
        LearnerProfile(
            learner_id=f"L{i:06d}",
            ability=float(ability[i]),
            learn_rate=float(learn[i]),
            carelessness=float(care[i]),
            pace_bias=float(pace[i]),
            engagement=float(engage[i]),
        )
        for i in range(n)
    ]


def make_world(seed: int, config: SimConfig | None = None) -> PlantedWorld:
    """Build the question catalog, test blueprints, and planted concept truth."""
    cfg = config or SimConfig()
    rng = np.random.Generator(np.random.Philox(key=(seed & 0xFFFFFFFFFFFFFFFF, 0xCA7A)))
    concept = rng.integers(0, cfg.n_concepts, size=cfg.n_questions)
    difficulty = rng.normal(0.0, 1.0, size=cfg.n_questions)
    ideal = rng.uniform(40.0, 120.0, size=cfg.n_questions)
    catalog = [
        QuestionMeta(f"q{i:05d}", int(concept[i]), float(difficulty[i]), float(ideal[i]))
        for i in range(cfg.n_questions)
    ]
    blueprints = []
    for t in range(cfg.n_tests):
        idx = tuple(int(i) for i in rng.choice(cfg.n_questions, size=cfg.questions_per_test, replace=False))
        kind = "sectional" if (t + 1) % 4 == 0 else "mock"
        total_time = cfg.time_budget_factor * float(sum(catalog[i].ideal_time_s for i in idx))
        blueprints.append(TestBlueprint(f"T{t:03d}", kind, idx, total_time))
    return PlantedWorld(
        config=cfg,
        catalog=catalog,
        blueprints=blueprints,
        p_init=rng.uniform(*cfg.p_init_range, size=cfg.n_concepts),
        p_transit=rng.uniform(*cfg.p_transit_range, size=cfg.n_concepts),
        p_guess=rng.uniform(*cfg.p_guess_range, size=cfg.n_concepts),
        p_slip=rng.uniform(*cfg.p_slip_range, size=cfg.n_concepts),
    )


def _practice_session(
    profile: LearnerProfile,
    world: PlantedWorld,
    rng: np.random.Generator,
    learned: np.ndarray,
    session_id: str,
    day_ms: int,
    n_events: int,
) -> TestSession:
    cfg = world.config
    start_ts = day_ms + int(rng.integers(8 * 3600_000, 21 * 3600_000))
    ts = start_ts
    events: list[InteractionEvent] = []
    kinds = rng.choice(
        ["attempt", "browse_content", "watch_video", "search", "ask_question"],
        size=n_events,
        p=[0.45, 0.2, 0.15, 0.12, 0.08],
    )
    attempted: set[int] = set()
    n_correct = 0
    n_attempts = 0
    for kind in kinds:
        if kind == "attempt":
            q = int(rng.integers(0, len(world.catalog)))
            c = world.catalog[q].concept_id
            dur = float(world.catalog[q].ideal_time_s * profile.pace_bias * math.exp(rng.normal(0.0, 0.3)))
            events.append(
                InteractionEvent(profile.learner_id, session_id, ts, "view_question", world.catalog[q].question_id)
            )
            ts += int(rng.uniform(2, 8) * 1000)
            if learned[c]:
                slip = float(_sigmoid(_logit(world.p_slip[c]) - cfg.slip_ability_weight * profile.ability))
                correct = rng.random() >= slip
            else:
                g = float(_sigmoid(_logit(world.p_guess[c]) + cfg.ability_weight * (profile.ability - world.catalog[q].difficulty)))
                correct = rng.random() < g
                if rng.random() < world.p_transit[c] * profile.learn_rate:
                    learned[c] = True
            events.append(
                InteractionEvent(
                    profile.learner_id, session_id, ts, "attempt", world.catalog[q].question_id, bool(correct), dur
                )
            )
            ts += int(dur * 1000)
            attempted.add(q)
            n_attempts += 1
            n_correct += int(correct)
        else:
            dur = float(rng.uniform(20, 300))
            events.append(InteractionEvent(profile.learner_id, session_id, ts, str(kind), None, None, dur))
            ts += int(dur * 1000)
    total_time = sum(e.duration_s for e in events if e.duration_s is not None)
    return TestSession(
        session_id=session_id,
        learner_id=profile.learner_id,
        test_id=session_id,
        test_kind="practice",
        start_ts=start_ts,
        end_ts=ts,
        total_questions=len(attempted),
        total_time_s=float(total_time),
        events=events,
        score_pct=round(100.0 * n_correct / n_attempts, 6) if n_attempts else None,
    )


def _test_session(
    profile: LearnerProfile,
    world: PlantedWorld,
    rng: np.random.Generator,
    learned: np.ndarray,
    bp: TestBlueprint,
    seq_no: int,
    day_ms: int,
    carelessness: float,
    churn_rate: float,
) -> TestSession:
    cfg = world.config
    session_id = f"{profile.learner_id}-{bp.test_id}"
    start_ts = day_ms + int(rng.integers(9 * 3600_000, 18 * 3600_000))
    t = 0.0  # seconds into the session
    events: list[InteractionEvent] = []

    def emit(kind: str, q: str | None = None, correct: bool | None = None, dur: float | None = None):
        events.append(
            InteractionEvent(profile.learner_id, session_id, start_ts + int(t * 1000), kind, q, correct, dur)
        )

    n_correct = 0
    for pos, qi in enumerate(bp.question_idx):
        meta = world.catalog[qi]
        c = meta.concept_id
        view_dur = float(rng.uniform(2.0, 9.0))
        emit("view_question", meta.question_id, dur=view_dur)
        t += view_dur
        if t >= bp.total_time_s:
            break
        hard = (not learned[c]) and meta.difficulty > profile.ability
        p_skip = cfg.skip_hard if hard else (cfg.skip_learned if learned[c] else cfg.skip_unlearned)
        if rng.random() < p_skip:
            continue
        rushed = rng.random() < carelessness
        if rushed:
            dur = float(meta.ideal_time_s * rng.uniform(*cfg.rush_time_range))
        else:
            dur = float(meta.ideal_time_s * profile.pace_bias * math.exp(rng.normal(0.0, 0.35)))
        dur = max(1.0, min(dur, 4.0 * meta.ideal_time_s))
        t_choose = t + 0.6 * dur
        emit("choose_option", meta.question_id)
        churn = rng.random() < churn_rate
        if churn:
            t = t_choose
            emit("view_question", meta.question_id, dur=float(rng.uniform(1.0, 4.0)))
            emit("change_option", meta.question_id)
        if rng.random() < 0.07:
            emit("mark_review", meta.question_id)
        if learned[c]:
            slip = float(_sigmoid(_logit(world.p_slip[c]) - cfg.slip_ability_weight * profile.ability))
            slip_eff = min(0.9, slip + (cfg.careless_extra_slip if rushed else 0.0))
            if churn:
                # swapping a remembered answer mostly swaps it for a worse one
                slip_eff = min(0.9, slip_eff * cfg.churn_slip_multiplier)
            correct = rng.random() >= slip_eff
        else:
            g = float(_sigmoid(_logit(world.p_guess[c]) + cfg.ability_weight * (profile.ability - meta.difficulty)))
            if churn:
                # reconsidering a guess recovers part of the miss chance
                g = g + (1.0 - g) * cfg.churn_guess_gain
            correct = rng.random() < g
        t += dur
        emit("attempt", meta.question_id, bool(correct), dur)
        n_correct += int(correct)
        if not learned[c] and rng.random() < world.p_transit[c] * profile.learn_rate * cfg.test_learn_factor:
            learned[c] = True
        if rng.random() < 0.03:
            emit("swap_subject")
        if t >= bp.total_time_s:
            break
    score = 100.0 * n_correct / len(bp.question_idx)
    return TestSession(
        session_id=session_id,
        learner_id=profile.learner_id,
        test_id=bp.test_id,
        test_kind=bp.kind,
        start_ts=start_ts,
        end_ts=start_ts + int(t * 1000),
        total_questions=len(bp.question_idx),
        total_time_s=bp.total_time_s,
        events=events,
        score_pct=round(score, 6),
    )


def generate_events(
    profiles: list[LearnerProfile],
    world: PlantedWorld,
    seed: int,
) -> list[TestSession]:
    """Generate the full session stream (tests and practice) for each learner.

    Each learner gets an independent counter-based substream of ``seed``, so
    output is reproducible regardless of profile ordering or sharding.
    """
    if not profiles:
        raise ValueError("profiles must be nonempty")
    cfg = world.config
    sessions: list[TestSession] = []
    for profile in profiles:
        rng = _learner_stream(seed, profile.learner_id)
        learned = rng.random(cfg.n_concepts) < np.asarray(
            _sigmoid(_logit(world.p_init) + cfg.ability_weight * profile.ability)
        )
        n_tests = len(world.blueprints)
        spacing = cfg.horizon_days / (n_tests + 1)
        test_days = np.sort(
            np.clip(
                (np.arange(1, n_tests + 1) * spacing + rng.uniform(-0.3 * spacing, 0.3 * spacing, n_tests)),
                1,
                cfg.horizon_days - 1,
            )
        )
        carelessness = profile.carelessness
        churn_rate = float(rng.uniform(*cfg.churn_range))
        prev_day = 0.0
        for t_i, bp in enumerate(world.blueprints):
            day = float(test_days[t_i])
            gap = max(0.0, day - prev_day)
            n_events = int(min(rng.poisson(profile.engagement * gap), cfg.max_practice_events_per_gap))
            p_i = 0
            while n_events >= 3:
                chunk = int(min(rng.integers(5, 15), n_events))
                n_events -= chunk
                pday = _EPOCH_MS + int((prev_day + rng.uniform(0.05, 0.95) * gap) * _DAY_MS)
                sessions.append(
                    _practice_session(
                        profile, world, rng, learned,
                        f"{profile.learner_id}-P{t_i:02d}{p_i:02d}", pday, chunk,
                    )
                )
                p_i += 1
            sessions.append(
                _test_session(
                    profile, world, rng, learned, bp, t_i, _EPOCH_MS + int(day * _DAY_MS),
                    carelessness, churn_rate,
                )
            )
            carelessness *= cfg.careless_decay
            prev_day = day
    sessions.sort(key=lambda s: (s.start_ts, s.session_id))
    return sessions


def bkt_attempt_sequences(
    p_init: float, p_transit: float, p_guess: float, p_slip: float,
    n_learners: int, n_attempts: int, seed: int,
) -> list[list[bool]]:
    """Clean correctness sequences from exact knowledge-tracing parameters.

    No ability shifts or carelessness: the reference process for fitter checks.
    """
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_learners):
        learned = rng.random() < p_init
        seq = []
        for _ in range(n_attempts):
            if learned:
                seq.append(bool(rng.random() >= p_slip))
            else:
                seq.append(bool(rng.random() < p_guess))
                if rng.random() < p_transit:
                    learned = True
        out.append(seq)
    return out


# ---------------------------------------------------------------------------
# serialization / ingest
# ---------------------------------------------------------------------------

_SESSION_FIELDS = (
    "session_id", "learner_id", "test_id", "test_kind",
    "start_ts", "end_ts", "total_questions", "total_time_s", "score_pct",
)


def write_log(sessions: list[TestSession], path: str) -> None:
    """Emit the JSONL log: one header line per session, then its events."""
    with open(path, "w") as fh:
        for s in sessions:
            header = {k: getattr(s, k) for k in _SESSION_FIELDS}
            fh.write(json.dumps({"session": header}, separators=(",", ":")) + "\n")
            for e in s.events:
                rec = {"learner_id": e.learner_id, "session_id": e.session_id, "ts": e.ts, "kind": e.kind}
                if e.question_id is not None:
                    rec["question_id"] = e.question_id
                if e.correct is not None:
                    rec["correct"] = e.correct
                if e.duration_s is not None:
                    rec["duration_s"] = e.duration_s
                fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def write_catalog(catalog: list[QuestionMeta], path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["question_id", "concept_id", "difficulty", "ideal_time_s"])
        for q in catalog:
            w.writerow([q.question_id, q.concept_id, repr(q.difficulty), repr(q.ideal_time_s)])


def read_catalog(path: str) -> list[QuestionMeta]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                QuestionMeta(
                    row["question_id"], int(row["concept_id"]),
                    float(row["difficulty"]), float(row["ideal_time_s"]),
                )
            )
    return out


def ingest_log(
    path: str,
    excluded_learners: frozenset[str] | set[str] = frozenset(),
) -> list[TestSession]:
    """Parse and validate a JSONL log back into sessions.

    Sessions of learners on the exclusion list (bots, internal testers) are
    dropped.  Any schema violation raises :class:`LogSchemaError` naming the
    1-based line number; so do non-monotone timestamps within a session.
    """
    sessions: dict[str, TestSession] = {}
    order: list[str] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogSchemaError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            if "session" in rec:
                h = rec["session"]
                missing = [k for k in _SESSION_FIELDS if k != "score_pct" and k not in h]
                if missing:
                    raise LogSchemaError(f"line {lineno}: session header missing {missing}")
                try:
                    s = TestSession(**{k: h.get(k) for k in _SESSION_FIELDS})
                except (TypeError, ValueError) as exc:
                    raise LogSchemaError(f"line {lineno}: bad session header: {exc}") from None
                if s.session_id in sessions:
                    raise LogSchemaError(f"line {lineno}: duplicate session {s.session_id!r}")
                sessions[s.session_id] = s
                order.append(s.session_id)
            else:
                for req in ("learner_id", "session_id", "ts", "kind"):
                    if req not in rec:
                        raise LogSchemaError(f"line {lineno}: event missing {req!r}")
                try:
                    e = InteractionEvent(
                        rec["learner_id"], rec["session_id"], int(rec["ts"]), rec["kind"],
                        rec.get("question_id"), rec.get("correct"), rec.get("duration_s"),
                    )
                except (TypeError, ValueError) as exc:
                    raise LogSchemaError(f"line {lineno}: bad event: {exc}") from None
                s = sessions.get(e.session_id)
                if s is None:
                    raise LogSchemaError(f"line {lineno}: event for unknown session {e.session_id!r}")
                if s.events and e.ts < s.events[-1].ts:
                    raise LogSchemaError(f"line {lineno}: non-monotone timestamp in session {e.session_id!r}")
                s.events.append(e)
    return [sessions[sid] for sid in order if sessions[sid].learner_id not in excluded_learners]


def filter_valid_tests(sessions: list[TestSession]) -> list[TestSession]:
    """Keep sessions with >= 10% of questions attempted and >= 10% of time spent.

    Pure, order-preserving, idempotent.
    """
    kept = []
    for s in sessions:
        if len(s.attempts) < 0.10 * s.total_questions:
            continue
        if s.time_spent_s() < 0.10 * s.total_time_s:
            continue
        kept.append(s)
    return kept

"""Bayesian Knowledge Tracing: forward filtering, EM fitting, and mastery features.

A two-state hidden Markov model per concept.  The latent state is "learned"
vs "not learned"; the learner never forgets (transitions only flow toward
the learned state).  Observations are attempt correctness, emitted with a
guess probability from the unlearned state and a slip probability from the
learned state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BktParams",
    "KnowledgeState",
    "FitReport",
    "forward_update",
    "sequence_likelihood",
    "fit_em",
    "personalize",
    "trace_states",
    "bkt_features",
    "write_diagnostics_csv",
]

_EPS = 1e-15


@dataclass(frozen=True)
class BktParams:
    """Per-concept model parameters, all probabilities.

    p_init: P(learned before any attempt)
    p_transit: P(unlearned -> learned) after each attempt
    p_guess: P(correct | not learned)
    p_slip: P(incorrect | learned)
    """

    p_init: float
    p_transit: float
    p_guess: float
    p_slip: float

    def __post_init__(self) -> None:
        for name in ("p_init", "p_transit", "p_guess", "p_slip"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0) or not np.isfinite(v):
                raise ValueError(f"{name} must be in [0, 1], got {v!r}")


@dataclass
class KnowledgeState:
    """Filtered belief that a learner has mastered one concept."""

    concept_id: int
    p_learned: float
    n_attempts: int = 0


@dataclass
class FitReport:
    """Diagnostics from one EM run."""

    loglik_trace: list[float] = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False
    boundary: bool = False
    reflected: bool = False
    n_sequences: int = 0
    n_obs: int = 0

    @property
    def loglik(self) -> float:
        return self.loglik_trace[-1] if self.loglik_trace else float("nan")


def forward_update(state: KnowledgeState, correct: bool, params: BktParams) -> KnowledgeState:
    """One filtering step: condition on the observed attempt, then apply learning.

    Returns a new state; the input is not modified.
    """
    L = state.p_learned
    g, s, t = params.p_guess, params.p_slip, params.p_transit
    if correct:
        num = L * (1.0 - s)
        den = num + (1.0 - L) * g
    else:
        num = L * s
        den = num + (1.0 - L) * (1.0 - g)
    posterior = num / den if den > 0.0 else L
    p_next = posterior + (1.0 - posterior) * t
    return KnowledgeState(state.concept_id, min(max(p_next, 0.0), 1.0), state.n_attempts + 1)


def _forward_scaled(obs: np.ndarray, lengths: np.ndarray, params: BktParams):
    """Scaled forward pass over a padded batch of observation sequences.

    obs: (n, T) float array of 0/1 correctness, padded arbitrarily past each length.
    Returns (alpha_hat, scales, loglik) where alpha_hat is (n, T, 2) with the
    normalized filtered state distribution and scales is (n, T).
    Past a sequence's end the filter is frozen and the scale forced to 1.
    """
    n, T = obs.shape
    A = np.array([[1.0 - params.p_transit, params.p_transit], [0.0, 1.0]])
    emit = np.array(
        [
            [1.0 - params.p_guess, params.p_guess],  # state 0: P(incorrect), P(correct)
            [params.p_slip, 1.0 - params.p_slip],  # state 1
        ]
    )
    alpha_hat = np.zeros((n, T, 2))
    scales = np.ones((n, T))
    pi = np.array([1.0 - params.p_init, params.p_init])

    o0 = obs[:, 0].astype(np.intp)
    a = pi[None, :] * emit[:, o0].T
    c = a.sum(axis=1)
    c = np.where(c <= 0.0, _EPS, c)
    alpha_hat[:, 0] = a / c[:, None]
    scales[:, 0] = c
    for t in range(1, T):
        active = lengths > t
        ot = obs[:, t].astype(np.intp)
        a = (alpha_hat[:, t - 1] @ A) * emit[:, ot].T
        c = a.sum(axis=1)
        c = np.where(c <= 0.0, _EPS, c)
        alpha_hat[:, t] = np.where(active[:, None], a / c[:, None], alpha_hat[:, t - 1])
        scales[:, t] = np.where(active, c, 1.0)
    loglik = float(np.log(scales).sum())
    return alpha_hat, scales, loglik


def sequence_likelihood(obs, params: BktParams) -> float:
    """Exact marginal log-likelihood of one correctness sequence.

    Equals the log of the sum over all latent trajectories, computed by the
    scaled forward recursion.
    """
    arr = np.asarray([1.0 if o else 0.0 for o in obs], dtype=float)
    if arr.size == 0:
        raise ValueError("obs must be nonempty")
    _, _, ll = _forward_scaled(arr[None, :], np.array([arr.size]), params)
    return ll


def _pad(sequences: list[list[bool]]):
    lengths = np.array([len(s) for s in sequences], dtype=np.intp)
    T = int(lengths.max())
    obs = np.zeros((len(sequences), T))
    for i, s in enumerate(sequences):
        obs[i, : len(s)] = np.asarray(s, dtype=float)
    return obs, lengths


def _e_step(obs: np.ndarray, lengths: np.ndarray, params: BktParams):
    """Forward-backward; returns loglik and the expected-count sums for the M-step."""
    n, T = obs.shape
    A = np.array([[1.0 - params.p_transit, params.p_transit], [0.0, 1.0]])
    emit = np.array(
        [
            [1.0 - params.p_guess, params.p_guess],
            [params.p_slip, 1.0 - params.p_slip],
        ]
    )
    alpha_hat, scales, loglik = _forward_scaled(obs, lengths, params)

    beta = np.zeros((n, T, 2))
    beta[:, T - 1] = 1.0
    # gamma accumulators; xi only needed for the 0->1 cell
    valid = lengths[:, None] > np.arange(T)[None, :]
    xi01_sum = 0.0
    gamma0_trans_sum = 0.0  # sum of gamma_t(0) over t < len-1
    for t in range(T - 2, -1, -1):
        active = lengths > t + 1  # obs at t+1 exists
        ot1 = obs[:, t + 1].astype(np.intp)
        b_emit = emit[:, ot1].T * beta[:, t + 1]  # (n, 2)
        b = (b_emit @ A.T) / scales[:, t + 1][:, None]
        beta[:, t] = np.where(active[:, None], b, beta[:, t + 1])
        # xi_t(0,1) = alpha_hat_t(0) * A[0,1] * emit[1, o_{t+1}] * beta_{t+1}(1) / c_{t+1}
        xi01 = (
            alpha_hat[:, t, 0]
            * A[0, 1]
            * emit[1, ot1]
            * beta[:, t + 1, 1]
            / scales[:, t + 1]
        )
        gamma_t0 = alpha_hat[:, t, 0] * beta[:, t, 0]
        xi01_sum += float(xi01[active].sum())
        gamma0_trans_sum += float(gamma_t0[active].sum())

    gamma = alpha_hat * beta  # (n, T, 2), rows sum to 1 at valid steps
    g0 = gamma[:, :, 0]
    g1 = gamma[:, :, 1]
    correct = obs
    stats = {
        "init1": float(gamma[:, 0, 1].sum()),
        "n_seq": n,
        "trans_num": xi01_sum,
        "trans_den": gamma0_trans_sum,
        "guess_num": float((g0 * correct * valid).sum()),
        "guess_den": float((g0 * valid).sum()),
        "slip_num": float((g1 * (1.0 - correct) * valid).sum()),
        "slip_den": float((g1 * valid).sum()),
    }
    return loglik, stats


def _safe_ratio(num: float, den: float, fallback: float) -> float:
    if den <= 0.0:
        return fallback
    return min(max(num / den, _EPS), 1.0 - _EPS)


def fit_em(
    sequences: list[list[bool]],
    init: BktParams | None = None,
    max_iter: int = 200,
    tol: float = 1e-6,
) -> tuple[BktParams, FitReport]:
    """Fit parameters by EM (Baum-Welch restricted to the no-forgetting chain).

    The log-likelihood trace is non-decreasing up to float roundoff.  Stops when
    the improvement drops below ``tol`` or after ``max_iter`` iterations.

    If the converged emission parameters land in the unidentifiable half
    (guess or slip >= 0.5) the state labels are reflected to the equivalent
    parameterization and the report is flagged ``reflected``; any parameter
    pinned near 0/1 flags ``boundary``.
    """
    sequences = [s for s in sequences if len(s) > 0]
    if not sequences:
        raise ValueError("need at least one nonempty sequence")
    if init is None:
        init = BktParams(0.4, 0.15, 0.25, 0.2)
    obs, lengths = _pad(sequences)

    params = init
    report = FitReport(n_sequences=len(sequences), n_obs=int(lengths.sum()))
    prev_ll = -np.inf
    for it in range(max_iter):
        ll, stats = _e_step(obs, lengths, params)
        report.loglik_trace.append(ll)
        report.n_iter = it + 1
        if ll - prev_ll < tol and it > 0:
            report.converged = True
            break
        prev_ll = ll
        params = BktParams(
            p_init=_safe_ratio(stats["init1"], stats["n_seq"], params.p_init),
            p_transit=_safe_ratio(stats["trans_num"], stats["trans_den"], params.p_transit),
            p_guess=_safe_ratio(stats["guess_num"], stats["guess_den"], params.p_guess),
            p_slip=_safe_ratio(stats["slip_num"], stats["slip_den"], params.p_slip),
        )

    if params.p_guess >= 0.5 and params.p_slip >= 0.5:
        # swap state labels: the reflected chain explains the data identically
        params = BktParams(
            p_init=1.0 - params.p_init,
            p_transit=params.p_transit,
            p_guess=1.0 - params.p_slip,
            p_slip=1.0 - params.p_guess,
        )
        report.reflected = True
    cap = 0.5 - 1e-6
    if params.p_guess >= 0.5 or params.p_slip >= 0.5:
        params = BktParams(
            p_init=params.p_init,
            p_transit=params.p_transit,
            p_guess=min(params.p_guess, cap),
            p_slip=min(params.p_slip, cap),
        )
        report.reflected = True
    bound = 1e-4
    if any(
        v < bound or v > 1.0 - bound
        for v in (params.p_init, params.p_transit, params.p_guess, params.p_slip)
    ):
        report.boundary = True
    return params, report


def personalize(
    sequences: list[list[bool]],
    population: BktParams,
) -> tuple[BktParams, tuple[float, float]]:
    """One EM sweep re-estimating p_init/p_transit for a single learner.

    Emission parameters stay fixed at the population fit.  Returns the
    personalized parameters and the (init, transit) multipliers relative to
    the population values.
    """
    sequences = [s for s in sequences if len(s) > 0]
    if not sequences:
        return population, (1.0, 1.0)
    obs, lengths = _pad(sequences)
    _, stats = _e_step(obs, lengths, population)
    p_init = _safe_ratio(stats["init1"], stats["n_seq"], population.p_init)
    p_transit = _safe_ratio(stats["trans_num"], stats["trans_den"], population.p_transit)
    personal = BktParams(p_init, p_transit, population.p_guess, population.p_slip)
    mult = (
        p_init / population.p_init if population.p_init > 0 else 1.0,
        p_transit / population.p_transit if population.p_transit > 0 else 1.0,
    )
    return personal, mult


def trace_states(
    attempts: list[tuple[int, bool]],
    params_by_concept: dict[int, BktParams],
    default: BktParams | None = None,
) -> dict[int, KnowledgeState]:
    """Forward-filter a learner's chronological (concept, correct) attempts.

    Concepts without fitted parameters fall back to ``default``.
    """
    if default is None:
        default = BktParams(0.3, 0.1, 0.25, 0.15)
    states: dict[int, KnowledgeState] = {}
    for concept_id, correct in attempts:
        p = params_by_concept.get(concept_id, default)
        st = states.get(concept_id)
        if st is None:
            st = KnowledgeState(concept_id, p.p_init, 0)
        states[concept_id] = forward_update(st, correct, p)
    return states


def write_diagnostics_csv(
    fits: dict[int, tuple[BktParams, FitReport]],
    path: str,
) -> None:
    """Per-concept fit diagnostics as CSV."""
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["concept_id", "p_init", "p_transit", "p_guess", "p_slip", "loglik", "n_seq"])
        for c, (p, rep) in sorted(fits.items()):
            w.writerow(
                [c, repr(p.p_init), repr(p.p_transit), repr(p.p_guess), repr(p.p_slip),
                 repr(rep.loglik), rep.n_sequences]
            )


MASTERY_CUT = 0.95


def bkt_features(
    states: dict[int, KnowledgeState],
    params_by_concept: dict[int, BktParams],
) -> tuple[dict[str, float], bool]:
    """Summarize a learner's filtered states into [0, 1] features.

    Returns (features, cold_start).  With no attempted concepts every feature
    is 0 and cold_start is True.
    """
    attempted = [s for s in states.values() if s.n_attempts > 0]
    if not attempted:
        return (
            {"mean_learned": 0.0, "min_learned": 0.0, "mastered_frac": 0.0, "mean_guess": 0.0},
            True,
        )
    p = np.array([s.p_learned for s in attempted])
    guesses = [
        params_by_concept[s.concept_id].p_guess
        for s in attempted
        if s.concept_id in params_by_concept
    ]
    return (
        {
            "mean_learned": float(p.mean()),
            "min_learned": float(p.min()),
            "mastered_frac": float((p > MASTERY_CUT).mean()),
            "mean_guess": float(np.mean(guesses)) if guesses else 0.0,
        },
        False,
    )

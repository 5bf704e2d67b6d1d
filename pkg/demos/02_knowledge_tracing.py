"""Tracing what a learner knows, one concept at a time.

A two-state chain per concept: unlearned -> learned, with guess and slip
emissions.  The demo filters a belief forward through observations, checks
the likelihood against exhaustive enumeration, and recovers planted
parameters with EM.
"""

import itertools
import math

from scorecast.bkt import BktParams, KnowledgeState, fit_em, forward_update, sequence_likelihood
from scorecast.simulator import bkt_attempt_sequences

params = BktParams(p_init=0.3, p_transit=0.25, p_guess=0.2, p_slip=0.1)

print("=== forward filtering ===")
state = KnowledgeState(concept_id=0, p_learned=params.p_init)
for i, correct in enumerate([True, True, False, True, True, True]):
    state = forward_update(state, correct, params)
    print(f"  after attempt {i + 1} ({'correct' if correct else 'wrong'}): P(learned) = {state.p_learned:.4f}")

print("\n=== likelihood vs exhaustive trajectory sum ===")
obs = [True, False, True, True]
ll = sequence_likelihood(obs, params)
total = 0.0
for z in itertools.product((0, 1), repeat=len(obs)):
    prob = params.p_init if z[0] else 1 - params.p_init
    for t in range(len(obs)):
        if t > 0:
            prev, cur = z[t - 1], z[t]
            prob *= (params.p_transit if cur else 1 - params.p_transit) if prev == 0 else (1.0 if cur else 0.0)
        prob *= (1 - params.p_slip if obs[t] else params.p_slip) if z[t] else (
            params.p_guess if obs[t] else 1 - params.p_guess
        )
    total += prob
print(f"  forward recursion: {ll:.12f}")
print(f"  2^n enumeration:   {math.log(total):.12f}")
print(f"  difference:        {abs(ll - math.log(total)):.2e}")

print("\n=== EM recovery of planted parameters ===")
planted = (0.3, 0.2, 0.15, 0.1)
sequences = bkt_attempt_sequences(*planted, n_learners=500, n_attempts=50, seed=11)
fitted, report = fit_em(sequences, init=BktParams(0.4, 0.15, 0.25, 0.2))
print(f"  planted: init={planted[0]:.3f} transit={planted[1]:.3f} guess={planted[2]:.3f} slip={planted[3]:.3f}")
print(f"  fitted:  init={fitted.p_init:.3f} transit={fitted.p_transit:.3f} "
      f"guess={fitted.p_guess:.3f} slip={fitted.p_slip:.3f}")
print(f"  {report.n_iter} EM iterations, log-likelihood {report.loglik:.1f}, converged={report.converged}")
deltas = [abs(a - b) for a, b in zip(planted, (fitted.p_init, fitted.p_transit, fitted.p_guess, fitted.p_slip))]
print(f"  max parameter error: {max(deltas):.4f}")

"""scorecast: learner test-score forecasting with uncertainty, explanations, and nudges.

The package wires a chain of models: knowledge tracing and a factorization
model summarize raw interaction logs into mastery features, per-bucket
quantile regression forests map features to score predictions with
prediction intervals, Shapley attributions break each prediction into
per-feature contributions, and a coordinate-search solver inverts the model
to recommend feasible feature changes for a desired score gain.
"""

__version__ = "0.1.0"

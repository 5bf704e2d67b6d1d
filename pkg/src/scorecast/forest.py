"""Per-bucket regression forests with conditional-quantile prediction.

Bagged CART trees grown on the variance-reduction criterion.  Every leaf
retains the sorted responses of the bootstrap rows routed to it, so the
forest answers conditional-quantile queries: the weight of a training
response for a query point is the average over trees of (co-leaf indicator /
leaf size), and quantiles come from the weighted empirical CDF using the
left-continuous (inf) convention.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TrainConfig",
    "Tree",
    "Forest",
    "Metrics",
    "train",
    "check_loss",
    "weighted_quantile",
    "evaluate",
]

_CDF_TOL = 1e-9  # absorbs float accumulation when comparing CDF mass to tau


@dataclass
class TrainConfig:
    n_trees: int = 500
    max_depth: int = 5
    min_leaf: int = 5
    features_per_split: float = 1.0 / 3.0
    seed: int = 0
    quantiles: tuple[float, ...] = (0.05, 0.5, 0.95)

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if not all(0.0 < t < 1.0 for t in self.quantiles):
            raise ValueError("quantiles must lie strictly inside (0, 1)")


@dataclass
class Tree:
    """Array-encoded binary tree; node 0 is the root, feature -1 marks leaves."""

    feature: np.ndarray  # int32, -1 for leaf
    threshold: np.ndarray  # float64, split: x[f] <= thr goes left
    left: np.ndarray  # int32
    right: np.ndarray  # int32
    leaf_start: np.ndarray  # int64 slice start into leaf_values (leaves only)
    leaf_count: np.ndarray  # int64
    leaf_mean: np.ndarray  # float64 (leaves only)
    leaf_values: np.ndarray  # float64, responses sorted within each leaf slice

    def leaf_of(self, X: np.ndarray) -> np.ndarray:
        """Vectorized routing: the leaf node index for every row of X."""
        node = np.zeros(len(X), dtype=np.int64)
        while True:
            f = self.feature[node]
            active = f >= 0
            if not active.any():
                return node
            rows = np.where(active)[0]
            fa = f[rows]
            goes_left = X[rows, fa] <= self.threshold[node[rows]]
            node[rows] = np.where(goes_left, self.left[node[rows]], self.right[node[rows]])


def _grow_tree(X: np.ndarray, y: np.ndarray, cfg: TrainConfig, rng: np.random.Generator) -> Tree:
    n, p = X.shape
    boot = rng.integers(0, n, size=n)
    Xb, yb = X[boot], y[boot]
    k = max(1, int(round(p * cfg.features_per_split)))

    feature, threshold, left, right = [], [], [], []
    leaf_start, leaf_count, leaf_mean = [], [], []
    leaf_values: list[np.ndarray] = []
    values_off = 0

    def new_node():
        feature.append(-1)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        leaf_start.append(-1)
        leaf_count.append(0)
        leaf_mean.append(0.0)
        return len(feature) - 1

    def make_leaf(node, idx):
        nonlocal values_off
        vals = np.sort(yb[idx])
        leaf_start[node] = values_off
        leaf_count[node] = len(vals)
        leaf_mean[node] = float(yb[idx].mean())
        leaf_values.append(vals)
        values_off += len(vals)

    def best_split(idx):
        """(score, feature, threshold) of the best variance-reducing split.

        Ties break toward the lowest feature index, then the lowest
        threshold, for cross-run reproducibility.
        """
        y_node = yb[idx]
        m = len(idx)
        parent = float(y_node.sum()) ** 2 / m
        best = (parent + 1e-12, -1, np.nan)
        feats = np.sort(rng.choice(p, size=k, replace=False))
        for f in feats:
            xv = Xb[idx, f]
            order = np.argsort(xv, kind="stable")
            xs, ys = xv[order], y_node[order]
            csum = np.cumsum(ys)[:-1]
            nl = np.arange(1, m)
            valid = (xs[:-1] < xs[1:]) & (nl >= cfg.min_leaf) & (m - nl >= cfg.min_leaf)
            if not valid.any():
                continue
            score = np.where(valid, csum**2 / nl + (csum[-1] + ys[-1] - csum) ** 2 / (m - nl), -np.inf)
            j = int(np.argmax(score))
            if score[j] > best[0]:
                # threshold sits exactly on the left value: a float midpoint
                # could round up to xs[j+1] and leave one side empty
                best = (float(score[j]), int(f), float(xs[j]))
        return best

    def grow(idx, depth):
        node = new_node()
        y_node = yb[idx]
        if depth >= cfg.max_depth or len(idx) < 2 * cfg.min_leaf or y_node.max() == y_node.min():
            make_leaf(node, idx)
            return node
        score, f, thr = best_split(idx)
        if f < 0:
            make_leaf(node, idx)
            return node
        mask = Xb[idx, f] <= thr
        feature[node], threshold[node] = f, thr
        left[node] = grow(idx[mask], depth + 1)
        right[node] = grow(idx[~mask], depth + 1)
        return node

    grow(np.arange(n), 0)
    return Tree(
        np.array(feature, dtype=np.int32),
        np.array(threshold),
        np.array(left, dtype=np.int32),
        np.array(right, dtype=np.int32),
        np.array(leaf_start, dtype=np.int64),
        np.array(leaf_count, dtype=np.int64),
        np.array(leaf_mean),
        np.concatenate(leaf_values) if leaf_values else np.zeros(0),
    )


@dataclass
class Forest:
    trees: list[Tree]
    config: TrainConfig
    n_features: int
    bucket: int | None = None

    def predict_raw(self, X: np.ndarray) -> np.ndarray:
        """Mean over trees of leaf-mean responses, unclamped."""
        X = self._check(X)
        acc = np.zeros(len(X))
        for t in self.trees:
            acc += t.leaf_mean[t.leaf_of(X)]
        return acc / len(self.trees)

    def predict_mean(self, X: np.ndarray) -> np.ndarray:
        """predict_raw clamped to the score range [0, 100]."""
        return np.clip(self.predict_raw(X), 0.0, 100.0)

    def quantiles(self, X: np.ndarray, taus: tuple[float, ...]) -> np.ndarray:
        """Weighted empirical quantiles at each tau; shape (n_rows, n_taus)."""
        X = self._check(X)
        T = len(self.trees)
        leaf_ids = [t.leaf_of(X) for t in self.trees]
        out = np.empty((len(X), len(taus)))
        for i in range(len(X)):
            vals = []
            wts = []
            for t, ids in zip(self.trees, leaf_ids):
                node = ids[i]
                s, c = t.leaf_start[node], t.leaf_count[node]
                vals.append(t.leaf_values[s : s + c])
                wts.append(np.full(c, 1.0 / (T * c)))
            out[i] = weighted_quantile(np.concatenate(vals), np.concatenate(wts), taus)
        return out

    def predict_interval(self, X: np.ndarray, tau: float = 0.05) -> np.ndarray:
        """(Q_tau, Q_{1-tau}) prediction band; requires 0 < tau < 0.5."""
        if not (0.0 < tau < 0.5):
            raise ValueError("tau must be in (0, 0.5)")
        return self.quantiles(X, (tau, 1.0 - tau))

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(repr((self.config, self.n_features, self.bucket)).encode())
        for t in self.trees:
            for arr in (t.feature, t.threshold, t.left, t.right, t.leaf_start, t.leaf_count, t.leaf_mean, t.leaf_values):
                h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return X


def train(X: np.ndarray, y: np.ndarray, config: TrainConfig | None = None, bucket: int | None = None) -> Forest:
    """Fit a bagged forest; deterministic for fixed (X, y, config)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(X) == 0:
        raise ValueError("training rows must be nonempty")
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be (n, p) with matching y")
    cfg = config or TrainConfig()
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_trees)
    trees = [_grow_tree(X, y, cfg, np.random.Generator(np.random.Philox(s))) for s in seeds]
    return Forest(trees, cfg, X.shape[1], bucket)


def check_loss(e, tau: float):
    """Pinball loss (tau - 1{e < 0}) * e, elementwise."""
    e = np.asarray(e, dtype=np.float64)
    return (tau - (e < 0.0)) * e


def weighted_quantile(values: np.ndarray, weights: np.ndarray, taus) -> np.ndarray:
    """Left-continuous inverse of the weighted CDF: inf{y: sum w 1{y_i<=y} >= tau}.

    Comparison uses a 1e-9 slack so float accumulation cannot push a mass
    boundary just below its nominal tau.
    """
    order = np.argsort(values, kind="stable")
    v = values[order]
    cum = np.cumsum(weights[order])
    idx = np.searchsorted(cum, np.asarray(taus) - _CDF_TOL, side="left")
    return v[np.minimum(idx, len(v) - 1)]


@dataclass
class Metrics:
    rmse: float
    mae: float
    medae: float
    pearson_rho: float | None
    rho_undefined: bool
    check_loss: dict[float, float] = field(default_factory=dict)
    n: int = 0

    def to_dict(self) -> dict:
        return {
            "rmse": self.rmse,
            "mae": self.mae,
            "medae": self.medae,
            "pearson_rho": self.pearson_rho,
            "rho_undefined": self.rho_undefined,
            "check_loss": {str(k): v for k, v in self.check_loss.items()},
            "n": self.n,
        }


def evaluate(y: np.ndarray, yhat: np.ndarray, quantile_preds: dict[float, np.ndarray] | None = None) -> Metrics:
    """Point metrics plus mean check loss for any supplied quantile predictions.

    Zero-variance predictions (or observations) flag the correlation as
    undefined instead of propagating NaN.
    """
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if len(y) == 0:
        raise ValueError("holdout must be nonempty")
    err = yhat - y
    rmse = float(np.sqrt(np.mean(err**2)))
    mae = float(np.mean(np.abs(err)))
    medae = float(np.median(np.abs(err)))
    sy, sp = float(np.std(y)), float(np.std(yhat))
    if sy == 0.0 or sp == 0.0:
        rho, undefined = None, True
    else:
        rho = float(np.corrcoef(y, yhat)[0, 1])
        undefined = bool(math.isnan(rho))
        rho = None if undefined else rho
    closses = {}
    if quantile_preds:
        for tau, q in quantile_preds.items():
            closses[tau] = float(np.mean(check_loss(y - np.asarray(q), tau)))
    return Metrics(rmse, mae, medae, rho, undefined, closses, len(y))

"""Exact Shapley attributions for forest predictions.

The value function is the path-conditional expectation: walking a tree, a
split on a feature inside the coalition follows the query point, and a split
on a feature outside it blends both children by their background cover.  For
one leaf this factorizes per unique path feature into (follow indicator,
cover weight) pairs, so each leaf's Shapley contribution has a closed form
via the coefficients of a degree-(m-1) polynomial, where m is the number of
distinct features on the path.  Summing over leaves and trees is exact and
fast; ``shap_brute`` recomputes the same game by direct subset enumeration
for verification.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .features import FeatureRegistry
from .forest import Forest, Tree

__all__ = [
    "Attribution",
    "GroupSummary",
    "TreeExplainer",
    "shap_tree",
    "shap_brute",
    "group_contributions",
    "force_plot_export",
]


@dataclass
class Attribution:
    """Additive per-feature breakdown: base_value + phi.sum() == prediction."""

    base_value: float
    phi: np.ndarray
    prediction: float
    x: np.ndarray | None = None


def _node_covers(tree: Tree, X: np.ndarray) -> np.ndarray:
    """How many background rows pass through each node."""
    counts = np.zeros(len(tree.feature), dtype=np.float64)
    node = np.zeros(len(X), dtype=np.int64)
    counts[0] = len(X)
    while True:
        f = tree.feature[node]
        active = f >= 0
        if not active.any():
            return counts
        rows = np.where(active)[0]
        cur = node[rows]
        goes_left = X[rows, f[rows]] <= tree.threshold[cur]
        nxt = np.where(goes_left, tree.left[cur], tree.right[cur])
        np.add.at(counts, nxt, 1.0)
        node[rows] = nxt


def _leaf_paths(tree: Tree, covers: np.ndarray):
    """Per-leaf path factors: (leaf value, {feature: (lo, hi, cover weight)}).

    Multiple splits on one feature merge into a single interval and a single
    product of per-split cover ratios; a zero-cover parent contributes ratio
    0 (the background never reaches below it).
    """
    out = []

    def walk(node: int, constraints: dict[int, tuple[float, float, float]]):
        f = int(tree.feature[node])
        if f < 0:
            out.append((float(tree.leaf_mean[node]), dict(constraints)))
            return
        thr = float(tree.threshold[node])
        cp = covers[node]
        prev = constraints.get(f)
        lo, hi, pw = prev if prev is not None else (-np.inf, np.inf, 1.0)
        for child, is_left in ((int(tree.left[node]), True), (int(tree.right[node]), False)):
            ratio = covers[child] / cp if cp > 0 else 0.0
            if is_left:
                constraints[f] = (lo, min(hi, thr), pw * ratio)
            else:
                constraints[f] = (max(lo, thr), hi, pw * ratio)
            walk(child, constraints)
        if prev is None:
            del constraints[f]
        else:
            constraints[f] = prev

    walk(0, {})
    return out


def _shapley_weights(m: int) -> np.ndarray:
    # w[k] = k! (m-1-k)! / m!
    return np.array([factorial(k) * factorial(m - 1 - k) / factorial(m) for k in range(m)])


class TreeExplainer:
    """Shapley attributions for one forest against a fixed background sample.

    The background defaults to (a seeded subsample of) the bucket's training
    rows, capped at ``max_background``.
    """

    def __init__(self, forest: Forest, background: np.ndarray, max_background: int = 2000, seed: int = 0):
        background = np.atleast_2d(np.asarray(background, dtype=np.float64))
        if len(background) == 0:
            raise ValueError("background must be nonempty")
        if background.shape[1] != forest.n_features:
            raise ValueError("background feature count does not match the forest")
        if len(background) > max_background:
            rng = np.random.default_rng(seed)
            background = background[rng.choice(len(background), size=max_background, replace=False)]
        self.forest = forest
        self.n_features = forest.n_features
        self._groups: dict[int, dict[str, np.ndarray]] = {}
        self._const = 0.0  # leaves with no split on their path (single-leaf trees)

        T = len(forest.trees)
        staged: dict[int, list] = {}
        for tree in forest.trees:
            covers = _node_covers(tree, background)
            for value, constraints in _leaf_paths(tree, covers):
                m = len(constraints)
                if m == 0:
                    self._const += value / T
                    continue
                feats = sorted(constraints)
                staged.setdefault(m, []).append(
                    (
                        value / T,
                        feats,
                        [constraints[f][0] for f in feats],
                        [constraints[f][1] for f in feats],
                        [constraints[f][2] for f in feats],
                    )
                )
        for m, rows in staged.items():
            self._groups[m] = {
                "coeff": np.array([r[0] for r in rows]),
                "feat": np.array([r[1] for r in rows], dtype=np.int64),
                "lo": np.array([r[2] for r in rows]),
                "hi": np.array([r[3] for r in rows]),
                "pw": np.array([r[4] for r in rows]),
                "w": _shapley_weights(m),
            }

    def shap_values(self, x: np.ndarray) -> Attribution:
        """Exact Shapley attribution of the forest prediction at ``x``."""
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.shape != (self.n_features,):
            raise ValueError(f"expected {self.n_features} features, got {x.shape}")
        phi = np.zeros(self.n_features)
        base = self._const
        pred = self._const
        for m, g in self._groups.items():
            xv = x[g["feat"]]
            O = ((xv > g["lo"]) & (xv <= g["hi"])).astype(np.float64)  # (c, m)
            P = g["pw"]
            coeff = g["coeff"]
            base += float(coeff @ _poly_const(P, O))
            pred += float(coeff @ O.prod(axis=1))
            for i in range(m):
                Q = _poly_skip(P, O, i)  # (c, m) coefficients of prod_{j != i}
                s = Q @ g["w"]
                np.add.at(phi, g["feat"][:, i], coeff * (O[:, i] - P[:, i]) * s)
        return Attribution(base, phi, pred, x)

    def shap_batch(self, X: np.ndarray) -> list[Attribution]:
        return [self.shap_values(row) for row in np.atleast_2d(X)]


def _poly_const(P: np.ndarray, O: np.ndarray) -> np.ndarray:
    """prod_j p_j per leaf: the background mass of the leaf."""
    return P.prod(axis=1)


def _poly_skip(P: np.ndarray, O: np.ndarray, skip: int) -> np.ndarray:
    """Coefficients of prod_{j != skip} (p_j + o_j t), shape (c, m)."""
    c, m = P.shape
    Q = np.zeros((c, m))
    Q[:, 0] = 1.0
    deg = 0
    for j in range(m):
        if j == skip:
            continue
        Qn = Q * P[:, j, None]
        Qn[:, 1 : deg + 2] += Q[:, : deg + 1] * O[:, j, None]
        Q = Qn
        deg += 1
    return Q


def shap_tree(forest: Forest, x: np.ndarray, background: np.ndarray, **kw) -> Attribution:
    """One-shot convenience wrapper around :class:`TreeExplainer`."""
    return TreeExplainer(forest, background, **kw).shap_values(x)


def shap_brute(forest: Forest, x: np.ndarray, background: np.ndarray, max_features: int = 15) -> Attribution:
    """Shapley values by direct subset enumeration of the same path game.

    The value of every coalition is computed by the defining tree recursion
    (follow inside the coalition, cover-blend outside), then the classical
    factorial-weighted sum runs over all subsets.  Exponential in the feature
    count; guarded at ``max_features``.
    """
    p = forest.n_features
    if p > max_features:
        raise ValueError(f"brute-force attribution guarded at {max_features} features, got {p}")
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    background = np.atleast_2d(np.asarray(background, dtype=np.float64))
    n_subsets = 1 << p
    subsets = np.arange(n_subsets)
    in_set = [(subsets >> f) & 1 == 1 for f in range(p)]

    v = np.zeros(n_subsets)
    T = len(forest.trees)
    for tree in forest.trees:
        covers = _node_covers(tree, background)

        def rec(node: int) -> np.ndarray:
            f = int(tree.feature[node])
            if f < 0:
                return np.full(n_subsets, float(tree.leaf_mean[node]))
            l, r = int(tree.left[node]), int(tree.right[node])
            vl, vr = rec(l), rec(r)
            follow = vl if x[f] <= tree.threshold[node] else vr
            cp = covers[node]
            if cp > 0:
                blend = (covers[l] * vl + covers[r] * vr) / cp
            else:
                blend = np.zeros(n_subsets)
            return np.where(in_set[f], follow, blend)

        v += rec(0) / T

    popcount = np.zeros(n_subsets, dtype=np.int64)
    for s in range(1, n_subsets):
        popcount[s] = popcount[s >> 1] + (s & 1)
    wvec = np.array([factorial(k) * factorial(p - k - 1) / factorial(p) for k in range(p)])

    phi = np.zeros(p)
    for i in range(p):
        without = subsets[~in_set[i]]
        phi[i] = float(np.sum(wvec[popcount[without]] * (v[without | (1 << i)] - v[without])))
    return Attribution(float(v[0]), phi, float(v[-1]), x)


@dataclass
class GroupSummary:
    """Share of total mean |phi| per feature family, in percent."""

    shares: dict[str, float]
    undefined: bool = False


def group_contributions(attributions: list[Attribution], registry: FeatureRegistry) -> GroupSummary:
    """Family rollup over a batch: percent of summed mean-|phi| per group."""
    if not attributions:
        raise ValueError("need at least one attribution")
    mean_abs = np.mean([np.abs(a.phi) for a in attributions], axis=0)
    total = float(mean_abs.sum())
    groups = sorted({d.group for d in registry.defs})
    if total <= 0.0:
        return GroupSummary({g: 0.0 for g in groups}, undefined=True)
    shares = {
        g: float(sum(mean_abs[j] for j, d in enumerate(registry.defs) if d.group == g) / total * 100.0)
        for g in groups
    }
    return GroupSummary(shares)


def force_plot_export(attribution: Attribution, registry: FeatureRegistry, x: np.ndarray | None = None) -> dict:
    """Display record for one prediction: features sorted by |phi| descending."""
    values = attribution.x if x is None else np.asarray(x, dtype=np.float64)
    order = np.argsort(-np.abs(attribution.phi), kind="stable")
    items = []
    for j in order:
        d = registry.defs[int(j)]
        items.append(
            {
                "code": d.code,
                "name": d.name,
                "group": d.group,
                "value": float(values[int(j)]) if values is not None else None,
                "phi": float(attribution.phi[int(j)]),
            }
        )
    return {
        "base": float(attribution.base_value),
        "prediction": float(attribution.prediction),
        "items": items,
    }

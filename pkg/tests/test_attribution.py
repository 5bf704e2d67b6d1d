"""Shapley attribution tests: oracle equivalence, axioms, and exports."""

import numpy as np
import pytest

from scorecast.attribution import (
    TreeExplainer,
    force_plot_export,
    group_contributions,
    shap_brute,
    shap_tree,
)
from scorecast.features import default_registry
from scorecast.forest import Forest, TrainConfig, train

from .test_forest import single_leaf_tree, stump


def random_forest_and_background(rng, p=None, n_trees=None, depth=None, n=150):
    p = p or int(rng.integers(3, 13))
    n_trees = n_trees or int(rng.integers(1, 21))
    depth = depth or int(rng.integers(1, 5))
    X = rng.random((n, p))
    y = rng.normal(50.0, 20.0, size=n) + 30.0 * X[:, 0] - 10.0 * X[:, p - 1]
    f = train(X, y, TrainConfig(n_trees=n_trees, max_depth=depth, min_leaf=5, seed=int(rng.integers(1 << 30))))
    return f, X


class TestWorkedStump:
    def test_half_mass_stump(self):
        # split on f0 at 0.5, leaves 0 / 10, background half on each side
        f = Forest([stump([0.0], [10.0])], TrainConfig(n_trees=1), n_features=2)
        background = np.array([[0.2, 0.0], [0.8, 0.0]])
        attr = shap_tree(f, np.array([0.8, 0.3]), background)
        assert attr.base_value == pytest.approx(5.0)
        assert attr.phi[0] == pytest.approx(5.0)
        assert attr.phi[1] == pytest.approx(0.0)
        assert attr.prediction == pytest.approx(10.0)
        brute = shap_brute(f, np.array([0.8, 0.3]), background)
        assert np.allclose(attr.phi, brute.phi, atol=1e-12)

    def test_constant_forest_zero_phi(self):
        f = Forest([single_leaf_tree([7.0, 7.0, 7.0])], TrainConfig(n_trees=1), n_features=3)
        attr = shap_tree(f, np.array([0.1, 0.5, 0.9]), np.random.default_rng(0).random((10, 3)))
        assert np.allclose(attr.phi, 0.0)
        assert attr.base_value == pytest.approx(7.0)

    def test_singleton_background_equal_to_x(self):
        rng = np.random.default_rng(3)
        f, X = random_forest_and_background(rng, p=5, n_trees=8, depth=3)
        x = X[4]
        attr = shap_tree(f, x, x[None, :])
        assert np.allclose(attr.phi, 0.0, atol=1e-9)
        assert attr.base_value == pytest.approx(attr.prediction, abs=1e-9)


class TestOracleEquivalence:
    def test_tree_matches_brute_on_random_forests(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            f, X = random_forest_and_background(rng)
            x = rng.random(f.n_features)
            fast = shap_tree(f, x, X)
            brute = shap_brute(f, x, X)
            assert np.allclose(fast.phi, brute.phi, atol=1e-9)
            assert fast.base_value == pytest.approx(brute.base_value, abs=1e-9)
            assert fast.prediction == pytest.approx(brute.prediction, abs=1e-9)

    def test_brute_guard(self):
        rng = np.random.default_rng(1)
        f, X = random_forest_and_background(rng, p=16, n_trees=2, depth=2)
        with pytest.raises(ValueError, match="guarded"):
            shap_brute(f, np.zeros(16), X)

    def test_symmetry_axiom(self):
        # two trees using f0 and f1 identically; symmetric x and background
        t0 = stump([0.0], [10.0], feat=0)
        t1 = stump([0.0], [10.0], feat=1)
        f = Forest([t0, t1], TrainConfig(n_trees=2), n_features=2)
        background = np.array([[0.2, 0.2], [0.8, 0.8], [0.2, 0.8], [0.8, 0.2]])
        attr = shap_brute(f, np.array([0.9, 0.9]), background)
        assert attr.phi[0] == pytest.approx(attr.phi[1], abs=1e-12)

    def test_efficiency_axiom(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            f, X = random_forest_and_background(rng, p=6)
            x = rng.random(6)
            attr = shap_brute(f, x, X)
            assert attr.base_value + attr.phi.sum() == pytest.approx(attr.prediction, abs=1e-9)


class TestLocalAccuracy:
    def test_additivity_against_forest_output(self):
        rng = np.random.default_rng(21)
        f, X = random_forest_and_background(rng, p=8, n_trees=25, depth=4, n=400)
        ex = TreeExplainer(f, X)
        Q = rng.random((50, 8))
        raw = f.predict_raw(Q)
        for i, attr in enumerate(ex.shap_batch(Q)):
            assert abs(attr.base_value + attr.phi.sum() - raw[i]) <= 1e-9

    def test_dummy_feature_exact_zero(self):
        rng = np.random.default_rng(22)
        X = rng.random((200, 4))
        y = 50.0 * X[:, 1]  # only f1 matters; forests see all features though
        f = train(X, y, TrainConfig(n_trees=10, max_depth=3, features_per_split=1.0, seed=3))
        used = {int(fi) for t in f.trees for fi in t.feature if fi >= 0}
        ex = TreeExplainer(f, X)
        attr = ex.shap_values(rng.random(4))
        for j in range(4):
            if j not in used:
                assert attr.phi[j] == 0.0

    def test_consistency_on_paired_stumps(self):
        # increasing the right-leaf payoff never decreases phi for the split feature
        background = np.array([[0.25, 0.0], [0.75, 0.0]])
        x = np.array([0.9, 0.5])
        f_small = Forest([stump([0.0], [8.0])], TrainConfig(n_trees=1), n_features=2)
        f_big = Forest([stump([0.0], [12.0])], TrainConfig(n_trees=1), n_features=2)
        phi_small = shap_tree(f_small, x, background).phi[0]
        phi_big = shap_tree(f_big, x, background).phi[0]
        assert phi_big >= phi_small


class TestGroupRollup:
    def _registry(self):
        return default_registry(d_mastery=2)

    def test_all_mass_on_one_aq_feature(self):
        reg = self._registry()
        phi = np.zeros(len(reg))
        phi[reg.index("aq_16")] = 3.0
        from scorecast.attribution import Attribution

        s = group_contributions([Attribution(0.0, phi, 3.0)], reg)
        assert s.shares["AQ"] == pytest.approx(100.0)
        assert s.shares["BQ"] == 0.0

    def test_equal_mass_across_groups(self):
        reg = self._registry()
        from scorecast.attribution import Attribution

        phi = np.zeros(len(reg))
        for code in ("aq_0", "bq_21", "tq_30", "eq_41"):
            phi[reg.index(code)] = 2.5
        s = group_contributions([Attribution(0.0, phi, 10.0)], reg)
        for g in ("AQ", "BQ", "TQ", "EQ"):
            assert s.shares[g] == pytest.approx(25.0)
        assert sum(s.shares.values()) == pytest.approx(100.0, abs=1e-9)

    def test_all_zero_flagged(self):
        reg = self._registry()
        from scorecast.attribution import Attribution

        s = group_contributions([Attribution(5.0, np.zeros(len(reg)), 5.0)], reg)
        assert s.undefined

    def test_academic_dominance_on_simulated_scores(self, small_setup):
        # scores in the simulator are driven by knowledge state, so academic
        # features should carry most of the attribution mass
        _, _, bundle, dataset = small_setup
        X, _, idx = dataset.rows(train=False)
        b = int(dataset.bucket[idx][0])
        ex = TreeExplainer(bundle.forest_for(b), bundle.background_for(b))
        rows = X[dataset.bucket[idx] == b][:100]
        summary = group_contributions(ex.shap_batch(rows), bundle.registry)
        assert summary.shares["AQ"] > 50.0


class TestForcePlot:
    def test_sorted_and_additive(self):
        reg = default_registry(d_mastery=2)
        from scorecast.attribution import Attribution

        phi = np.zeros(len(reg))
        phi[reg.index("aq_16")] = 5.0
        phi[reg.index("bq_20")] = -0.73
        attr = Attribution(5.0, phi, 9.27, x=np.zeros(len(reg)))
        rec = force_plot_export(attr, reg)
        assert rec["items"][0]["code"] == "aq_16"
        assert rec["items"][0]["phi"] == pytest.approx(5.0)
        assert rec["base"] + sum(i["phi"] for i in rec["items"]) == pytest.approx(rec["prediction"])

    def test_includes_names_and_groups(self):
        reg = default_registry(d_mastery=2)
        from scorecast.attribution import Attribution

        attr = Attribution(1.0, np.zeros(len(reg)), 1.0, x=np.zeros(len(reg)))
        rec = force_plot_export(attr, reg)
        assert all({"code", "name", "group", "value", "phi"} <= set(i) for i in rec["items"])

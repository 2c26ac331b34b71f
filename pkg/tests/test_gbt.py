import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_force_split, random_dataset
from slftrack.gbt import (BoostedModel, ColumnIndex, GradHess, Leaf, Split, Tree, TrainParams, dump, dumps,
                          find_best_split, fit_tree, grad_hess, leaf_weight, load, loads, predict, split_gain, train)


def objective(G, H, lam, w):
    return G * w + 0.5 * (H + lam) * w**2


class TestPrimitives:
    @pytest.mark.parametrize("t, p, g", [(3, 1, -2), (0, 0, 0), (-1.5, 2.5, 4)])
    def test_grad_hess(self, t, p, g):
        gh = grad_hess(t, p)
        assert gh.g == g and gh.h == 1

    def test_leaf_weight_examples(self):
        assert leaf_weight(-4, 2, 0) == 2
        assert leaf_weight(-4, 2, 2) == 1
        assert abs(leaf_weight(-4, 2, 1e12)) < 1e-9

    def test_leaf_weight_rejects_nonpositive_denominator(self):
        with pytest.raises(ValueError):
            leaf_weight(1, 0, 0)

    @settings(max_examples=200)
    @given(st.floats(-100, 100), st.floats(0, 50), st.floats(0, 10))
    def test_leaf_weight_minimizes_objective(self, G, H, lam):
        if H + lam < 1e-3:
            return
        w = leaf_weight(G, H, lam)
        grid = w + np.linspace(-5, 5, 2001)
        assert objective(G, H, lam, w) <= objective(G, H, lam, grid).min() + 1e-9

    def test_split_gain_examples(self):
        assert split_gain(-1, 1, 1, 1, 0, 0) == 1.0
        assert split_gain(0, 3, 0, 2, 1, 0.7) == -0.7

    @settings(max_examples=200)
    @given(st.lists(st.tuples(st.floats(-10, 10), st.floats(0.1, 5)), min_size=2, max_size=20), st.data())
    def test_split_gain_is_objective_reduction(self, rows, data):
        g, h = np.array(rows).T
        cut = data.draw(st.integers(1, len(g) - 1))
        lam, gamma = 1.0, 0.3

        def best_obj(G, H):
            return objective(G, H, lam, leaf_weight(G, H, lam))

        before = best_obj(g.sum(), h.sum()) + gamma
        after = best_obj(g[:cut].sum(), h[:cut].sum()) + best_obj(g[cut:].sum(), h[cut:].sum()) + 2 * gamma
        assert split_gain(g[:cut].sum(), h[:cut].sum(), g[cut:].sum(), h[cut:].sum(), lam, gamma) == \
            pytest.approx(before - after, abs=1e-9)


class TestFindBestSplit:
    def test_two_point_example(self):
        s = find_best_split(np.array([[0.0], [1.0]]), GradHess(np.array([-1.0, 1.0]), np.ones(2)),
                            params=TrainParams(lam=0.0))
        assert (s.feature_index, s.threshold, s.gain) == (0, 0.5, 1.0)

    def test_constant_targets_no_split(self):
        X = np.random.default_rng(0).normal(size=(20, 3))
        assert find_best_split(X, GradHess(np.zeros(20), np.ones(20))) is None

    def test_missing_goes_to_better_side(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0], [np.nan]])
        g = np.array([-1.0, -1.0, 1.0, 1.0, 1.0])
        s = find_best_split(X, GradHess(g, np.ones(5)), params=TrainParams(lam=0.0))
        assert s.threshold == 1.5 and s.default_left is False
        s = find_best_split(X, GradHess(-g * [1, 1, 1, 1, -1], np.ones(5)), params=TrainParams(lam=0.0))
        assert s.threshold == 1.5 and s.default_left is True

    def test_missing_tie_goes_left(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0], [np.nan]])
        g = np.array([-1.0, -1.0, 1.0, 1.0, 0.0])
        s = find_best_split(X, GradHess(g, np.ones(5)), params=TrainParams(lam=0.0))
        assert s.default_left is True

    def test_tie_lowest_feature(self):
        x = np.array([0.0, 1.0, 2.0, 3.0])
        s = find_best_split(np.stack([x, x], axis=1), GradHess(np.array([-1.0, -1, 1, 1]), np.ones(4)))
        assert s.feature_index == 0

    def test_tie_lowest_threshold(self):
        s = find_best_split(np.array([[0.0], [1], [2], [3]]), GradHess(np.array([1.0, -1, -1, 1]), np.ones(4)))
        assert s.threshold == 0.5

    def test_members_restrict_the_node(self):
        X = np.array([[0.0], [1], [2], [3]])
        g = np.array([5.0, -5, 1, -1])
        s = find_best_split(X, GradHess(g, np.ones(4)), members=[2, 3], params=TrainParams(lam=0.0))
        assert s.threshold == 2.5

    def test_min_samples_leaf(self):
        X = np.array([[0.0], [1], [2], [3]])
        g = np.array([-10.0, 1, 1, 1])
        s = find_best_split(X, GradHess(g, np.ones(4)), params=TrainParams(min_samples_leaf=2))
        assert s.threshold == 1.5
        assert find_best_split(X[:3], GradHess(g[:3], np.ones(3)), params=TrainParams(min_samples_leaf=2)) is None

    def test_adjacent_doubles_get_a_separating_threshold(self):
        a = 1.0
        b = np.nextafter(a, 2.0)
        s = find_best_split(np.array([[a], [b]]), GradHess(np.array([-1.0, 1.0]), np.ones(2)))
        assert a < s.threshold <= b

    @pytest.mark.parametrize("seed", range(40))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        X, g = random_dataset(rng, levels=5 if seed % 2 else None)
        h = np.ones_like(g) if seed % 3 else rng.uniform(0.1, 2.0, len(g))
        lam = float(rng.choice([0.0, 1.0])) if seed % 3 else 1.0
        gamma = float(rng.choice([0.0, 0.1]))
        got = find_best_split(X, GradHess(g, h), params=TrainParams(lam=lam, gamma=gamma))
        want = brute_force_split(X, g, h, lam, gamma)
        assert (got is None) == (want is None)
        if got is not None:
            assert got.gain == pytest.approx(want[0], abs=1e-9)
            assert (got.feature_index, got.threshold, got.default_left) == want[1:]


class TestFitTree:
    def test_depth_zero_is_regularized_mean(self):
        y = np.array([1.0, 2.0, 6.0])
        tree = fit_tree(y[:, None], grad_hess(y, np.zeros(3)), TrainParams(max_depth=0, lam=1.0))
        assert len(tree) == 1 and tree.value[0] == pytest.approx(9.0 / 4.0)

    def test_separable_stump(self):
        X = np.array([[0.0], [1.0]])
        y = np.array([-1.0, 1.0])
        m = train(X, y, TrainParams(nrounds=1, max_depth=1, lam=0.0, eta=1.0))
        np.testing.assert_array_equal(m.predict(X), y)
        assert predict(m, [0.0]) == -1.0

    def test_interaction_depth_two(self):
        X = np.array([[0.0, 0], [0, 1], [1, 0], [1, 1]])
        y = np.array([0.0, 1.0, 2.0, 0.0])
        tree = fit_tree(X, grad_hess(y, np.zeros(4)), TrainParams(max_depth=2, lam=0.0))
        m = BoostedModel([tree], 1.0, 0.0, 2)
        np.testing.assert_allclose(m.predict(X), y, atol=1e-12)

    def test_pure_xor_has_no_greedy_root_split(self):
        X = np.array([[0.0, 0], [0, 1], [1, 0], [1, 1]])
        y = np.array([0.0, 1.0, 1.0, 0.0])
        tree = fit_tree(X, grad_hess(y, np.zeros(4)), TrainParams(max_depth=2, lam=0.0))
        assert len(tree) == 1

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000), st.integers(0, 5))
    def test_depth_limit_and_structure(self, seed, depth):
        rng = np.random.default_rng(seed)
        X, y = random_dataset(rng, n_max=80, f_max=4)
        tree = fit_tree(X, grad_hess(y, np.zeros(len(y))), TrainParams(max_depth=depth))
        assert tree.depth <= depth
        internal = tree.feature >= 0
        assert ((tree.left >= 0) == internal).all() and ((tree.right >= 0) == internal).all()
        assert np.isfinite(tree.threshold[internal]).all()

    def test_leaves_hold_member_weights(self):
        rng = np.random.default_rng(3)
        X, y = random_dataset(rng, n_max=60, f_max=3)
        lam = 0.5
        params = TrainParams(max_depth=3, lam=lam, nrounds=1, eta=1.0)
        tree = fit_tree(X, grad_hess(y, np.zeros(len(y))), params)
        m = BoostedModel([tree], 1.0, 0.0, X.shape[1])
        pred = m.predict(X)
        for v in np.unique(pred):
            members = pred == v
            assert v == pytest.approx(y[members].sum() / (members.sum() + lam))

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            fit_tree(np.empty((0, 2)), GradHess(np.empty(0), np.empty(0)))


class TestTrain:
    def test_zero_rounds_predicts_base_score(self):
        m = train(np.zeros((3, 2)), np.array([1.0, 2, 3]), TrainParams(nrounds=0, base_score=0.25))
        assert m.trees == [] and (m.predict(np.random.default_rng(0).normal(size=(5, 2))) == 0.25).all()

    def test_monotone_feature_fit(self):
        x = np.linspace(0, 10, 400)
        y = np.sqrt(x) + 0.1 * x
        m = train(x[:, None], y, TrainParams(nrounds=200, max_depth=2, eta=0.1, lam=1.0))
        assert np.sqrt(np.mean((m.predict(x[:, None]) - y) ** 2)) < 0.1 * y.std()

    def test_constant_targets(self):
        X = np.random.default_rng(0).normal(size=(10, 2))
        y = np.full(10, 3.5)
        m = train(X, y, TrainParams(nrounds=4, eta=1.0, lam=0.0))
        assert len(m.trees[0]) == 1 and m.trees[0].value[0] == 3.5
        assert all(t.value[0] == 0 and len(t) == 1 for t in m.trees[1:])

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.sampled_from([0.1, 0.5, 1.0]), st.sampled_from([0.0, 1.0]))
    def test_loss_non_increasing(self, seed, eta, lam):
        X, y = random_dataset(np.random.default_rng(seed), n_max=50)
        m = train(X, y, TrainParams(nrounds=15, max_depth=3, eta=eta, lam=lam))
        # allowance for one-ulp wobble once the loss has converged
        assert all(b <= a * (1 + 1e-12) for a, b in zip(m.train_loss, m.train_loss[1:]))

    def test_train_loss_matches_predictions(self):
        X, y = random_dataset(np.random.default_rng(1), n_max=64)
        m = train(X, y, TrainParams(nrounds=10, max_depth=3, eta=0.3))
        assert m.train_loss[-1] == pytest.approx(0.5 * np.mean((m.predict(X) - y) ** 2), rel=1e-12)

    def test_shared_index(self):
        X, y = random_dataset(np.random.default_rng(2), n_max=64)
        idx = ColumnIndex.build(X)
        a = train(X, y, TrainParams(nrounds=5), index=idx)
        b = train(X, y, TrainParams(nrounds=5))
        assert dumps(a) == dumps(b)

    def test_deterministic(self):
        X, y = random_dataset(np.random.default_rng(4), n_max=64, levels=3)
        assert dumps(train(X, y, TrainParams(nrounds=8))) == dumps(train(X, y, TrainParams(nrounds=8)))

    def test_validation(self):
        with pytest.raises(ValueError):
            train(np.empty((0, 2)), np.empty(0))
        with pytest.raises(ValueError):
            train(np.zeros((2, 1)), np.array([0.0, np.inf]))
        with pytest.raises(ValueError):
            train(np.zeros((2, 1)), np.zeros(3))
        with pytest.raises(ValueError):
            train(np.array([[np.inf], [0.0]]), np.zeros(2))

    @pytest.mark.parametrize("bad", [dict(eta=0), dict(eta=1.5), dict(lam=-1), dict(gamma=-1),
                                     dict(min_samples_leaf=0), dict(max_depth=-1), dict(nrounds=-1)])
    def test_params_validation(self, bad):
        with pytest.raises(ValueError):
            TrainParams(**bad)

    def test_params_accept_lambda_key(self):
        assert TrainParams.from_dict({"lambda": 2.0}).lam == 2.0


class TestPredict:
    def test_empty_model(self):
        assert predict(BoostedModel([], 0.3, -1.25, 4), [1, 2, 3, 4]) == -1.25

    def test_missing_follows_default_directions(self):
        root = Split(0, 0.5, True, Leaf(1.0), Split(1, 2.0, False, Leaf(2.0), Leaf(3.0)))
        m = BoostedModel([Tree.from_node(root), Tree.from_node(Split(1, 0.0, False, Leaf(10.0), Leaf(20.0)))],
                         1.0, 0.0, 2)
        assert predict(m, [np.nan, np.nan]) == 1.0 + 20.0
        assert predict(m, [1.0, np.nan]) == 3.0 + 20.0
        assert predict(m, [1.0, -1.0]) == 2.0 + 10.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            predict(BoostedModel([], 1.0, 0.0, 3), [1.0, 2.0])

    def test_node_round_trip(self):
        root = Split(1, -0.5, False, Split(0, 3.0, True, Leaf(1.5), Leaf(-2.0)), Leaf(0.25))
        assert Tree.from_node(root).to_node() == root


class TestSerialization:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(7)
        X, y = random_dataset(rng, n_max=64, f_max=3, p_missing=0.3)
        m = train(X, y, TrainParams(nrounds=20, max_depth=4, eta=0.3, lam=0.7, base_score=0.1))
        dump(m, tmp_path / "m.json")
        back = load(tmp_path / "m.json")
        Z = rng.normal(size=(2000, X.shape[1])) * 2
        Z[rng.random(Z.shape) < 0.2] = np.nan
        assert m.predict(Z).tobytes() == back.predict(Z).tobytes()
        assert back.params == m.params and back.eta == m.eta and back.base_score == m.base_score

    def test_dump_is_readable_structure(self):
        m = BoostedModel([Tree.from_node(Split(0, 0.5, True, Leaf(-1.0), Leaf(1.0)))], 0.5, 0.0, 1,
                         TrainParams(nrounds=1))
        d = json.loads(dumps(m))
        assert d["trees"][0] == {"split": 0, "threshold": 0.5, "default_left": True, "left": {"leaf": -1.0},
                                 "right": {"leaf": 1.0}}
        assert d["params"]["eta"] == 0.05 and d["eta"] == 0.5

    def test_rejects_unknown_format(self):
        with pytest.raises(ValueError):
            loads(json.dumps({"format": "other"}))


def test_all_candidates_enumerated_small():
    # every (feature, threshold, direction) of a tiny set, compared against the oracle
    X = np.array([[1.0, np.nan], [2.0, 0.0], [np.nan, 1.0], [4.0, 1.0]])
    for signs in itertools.product([-1.0, 1.0], repeat=4):
        g = np.array(signs) * [1.0, 2.0, 3.0, 4.0]
        got = find_best_split(X, GradHess(g, np.ones(4)), params=TrainParams(lam=0.0))
        want = brute_force_split(X, g, np.ones(4), 0.0, 0.0)
        assert (got is None) == (want is None)
        if got:
            assert (got.feature_index, got.threshold, got.default_left) == want[1:]

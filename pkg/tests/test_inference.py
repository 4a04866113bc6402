import numpy as np
import pytest
from hypothesis import given, strategies as st

from prefnet.data import AttributeCatalog, RatingTable
from prefnet.features import FeatureConfig
from prefnet.inference import (CONTENT_ONLY, FULL, GLOBAL_MEAN, Recommender, _icm, _joint_terms,
                               candidate_set, joint_predict, joint_score, predict_many, predict_rating)
from prefnet.model import PNModel
from prefnet.similarity import PairIndex, SelectedPairs

from oracles import brute_joint_map, cooccurrence_pairs, random_model, random_table


def test_zero_parameters_predict_lowest_with_uniform_confidence(rng):
    m = random_model(rng, 3, 3, 4, S=5, scale=0.0)
    p = predict_rating(m, 1, 1)
    assert (p.predicted, p.confidence) == (1, pytest.approx(0.2))


def test_no_active_neighbours_equals_content_only_scoring(rng):
    m = random_model(rng, 4, 4, 6, 5, keep=0.0)
    alone = PNModel(m.table, m.attrs, m.pairs, m.params, FeatureConfig(True, True, False), m.means)
    qu, qi = np.array([1, 2, 3]), np.array([4, 1, 2])
    np.testing.assert_array_equal(predict_many(m, qu, qi).probs, predict_many(alone, qu, qi).probs)
    assert set(predict_many(m, qu, qi).fallback_level) <= {CONTENT_ONLY, GLOBAL_MEAN}


def test_fallback_levels():
    t = RatingTable([1, 1, 2], [1, 2, 1], [5, 4, 4], n_users=3, n_items=3)
    pairs = SelectedPairs(PairIndex([1], [2], 3), PairIndex([1], [2], 3))
    m = PNModel(t, AttributeCatalog.empty(3, 3), pairs)
    pred = predict_many(m, np.array([2, 3, 3]), np.array([2, 3, 1]))
    assert pred.fallback_level.tolist() == [FULL, GLOBAL_MEAN, CONTENT_ONLY]
    # global mean 13/3 rounds to 4
    assert pred.predicted[1] == 4


def test_joint_of_one_target_is_single_prediction(rng):
    m = random_model(rng, 3, 3, 4, 5)
    jp = joint_predict(m, [(1, 2)])
    assert jp.ratings[(1, 2)] == predict_rating(m, 1, 2).predicted


def test_unconnected_targets_factorise(rng):
    m = random_model(rng, 4, 4, 5, 3)
    targets = [(1, 1), (2, 2), (3, 3)]
    jp = joint_predict(m, targets)
    for t in targets:
        assert jp.ratings[t] == predict_rating(m, *t).predicted


@pytest.mark.parametrize("seed", range(120))
def test_exact_joint_map_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    S = int(rng.integers(2, 4))
    m = random_model(rng, 2, 2, int(rng.integers(1, 3)), S, keep=rng.random())
    free = [(u, i) for u in (1, 2) for i in (1, 2) if m.table.rating(u, i) is None]
    targets = free[: int(rng.integers(1, len(free) + 1))]
    jp = joint_predict(m, targets)
    want, score = brute_joint_map(m, targets)
    assert jp.method == "exact"
    assert jp.score == pytest.approx(score, abs=1e-10)
    assert joint_score(*_joint_terms(m, targets), [jp.ratings[t] - 1 for t in targets]) == pytest.approx(score,
                                                                                                          abs=1e-10)


def test_three_connected_targets_exact():
    # three unrated items of one user are pairwise adjacent
    for seed in range(10):
        rng = np.random.default_rng(seed)
        t = RatingTable([2, 2, 3], [1, 2, 3], rng.integers(1, 4, 3), scale=3, n_users=3, n_items=3)
        m = PNModel(t, AttributeCatalog.empty(3, 3), cooccurrence_pairs(RatingTable(
            [1, 1, 1, 2, 3], [1, 2, 3, 1, 1], [1] * 5, scale=3)))
        m.params.w[:] = rng.normal(0, 1.5, m.params.w.shape)
        targets = [(1, 1), (1, 2), (1, 3)]
        jp = joint_predict(m, targets)
        want, score = brute_joint_map(m, targets)
        assert jp.ratings == want and jp.score == pytest.approx(score, abs=1e-10)


@given(st.integers(0, 10_000))
def test_icm_never_beats_exact_and_is_monotone(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng, 3, 3, 2, 3, scale=2.0)
    targets = [(u, i) for u in (1, 2, 3) for i in (1, 2, 3) if m.table.rating(u, i) is None][:5]
    exact = joint_predict(m, targets)
    icm = joint_predict(m, targets, budget=0)
    assert icm.method == "icm" and icm.score <= exact.score + 1e-12
    unary, pairwise = _joint_terms(m, targets)
    assert icm.score >= joint_score(unary, pairwise, unary.argmax(axis=1)) - 1e-12
    assert 1 <= icm.sweeps <= 50


def test_icm_sweep_cap():
    unary = np.zeros((2, 2))
    config, score, sweeps = _icm(unary, {}, max_sweeps=1)
    assert sweeps == 1


def test_joint_rejects_bad_targets(rng):
    m = random_model(rng)
    with pytest.raises(ValueError):
        joint_predict(m, [])
    with pytest.raises(ValueError):
        joint_predict(m, [(1, 1), (1, 1)])


@pytest.mark.parametrize("seed", range(120))
def test_candidate_sets_equivalent_at_unbounded_k(seed):
    rng = np.random.default_rng(seed)
    t = random_table(rng, 10, 10, int(rng.integers(5, 45)), 5)
    pairs = cooccurrence_pairs(t)
    for u in np.flatnonzero(t.user_counts).tolist():
        ub = candidate_set(u, t, pairs.user_pairs, pairs.item_pairs, None, "user-based")
        ib = candidate_set(u, t, pairs.user_pairs, pairs.item_pairs, None, "item-based")
        assert ub == ib


def test_candidate_k1_toy():
    t = RatingTable([1, 2, 2, 3], [1, 1, 2, 3], [4, 4, 5, 2], n_users=3, n_items=3)
    users = PairIndex([1, 1], [2, 3], 3, [0.9, 0.1])
    assert candidate_set(1, t, users, None, 1, "user-based") == {2}


def test_user_who_rated_everything_has_no_candidates():
    t = RatingTable([1, 1, 2], [1, 2, 1], [4, 4, 5], n_users=2, n_items=2)
    pairs = cooccurrence_pairs(t)
    assert candidate_set(1, t, pairs.user_pairs, pairs.item_pairs, None, "union") == set()


def test_recommender_zero_parameters_uses_tie_break(rng):
    m = random_model(rng, 6, 8, 20, 5, scale=0.0)
    rec = Recommender(m, N=3, C=8, K=5).recommend(1)
    assert np.all(rec.scores == 0)
    pop = m.table.item_counts[rec.items]
    # equal confidence, so popularity then id
    assert list(zip(-pop, rec.items)) == sorted(zip(-pop, rec.items))


@given(st.integers(0, 10_000))
def test_recommendations_unseen_sorted_and_deterministic(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng, 6, 10, 25, 5, keep=0.6)
    for ranking in ("maximal-energy", "expected-energy"):
        r = Recommender(m, N=4, C=6, K=3, ranking=ranking)
        for u in range(1, 7):
            a, b = r.recommend(u), r.recommend(u)
            np.testing.assert_array_equal(a.items, b.items)
            assert not set(a.items.tolist()) & set(m.table.items_of(u).tolist())
            assert np.all(np.diff(a.scores) >= 0)
            assert len(a) <= 4


def test_concentrated_candidates_rank_alike():
    t = RatingTable([1, 2, 2, 2], [1, 1, 2, 3], [5, 5, 5, 5], n_users=2, n_items=3)
    m = PNModel(t, AttributeCatalog.empty(2, 3), cooccurrence_pairs(t))
    m.params.block("user_identity")[1] = 300.0
    m.params.block("item_identity")[2] = 5.0
    a = Recommender(m, 2, 2, 5, "maximal-energy").recommend(1)
    b = Recommender(m, 2, 2, 5, "expected-energy").recommend(1)
    np.testing.assert_array_equal(a.items, b.items)
    np.testing.assert_allclose(a.scores, b.scores, atol=1e-9)


def test_recommender_validates():
    with pytest.raises(ValueError):
        Recommender(None, ranking="fastest")
    with pytest.raises(ValueError):
        Recommender(None, N=10, C=5)

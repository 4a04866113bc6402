import numpy as np
import pytest
from hypothesis import given, strategies as st

from prefnet.data import (GENRES, ITEM_DIM, OCCUPATIONS, USER_DIM, AttributeCatalog, ParseError, Rating,
                          RatingTable, ValidationError, align, compute_means, encode_user_attributes,
                          load_dataset, load_items, load_ratings, load_users, write_ratings)

ratings_st = st.lists(
    st.tuples(st.integers(1, 8), st.integers(1, 8), st.integers(1, 5)),
    min_size=1, max_size=40, unique_by=lambda t: (t[0], t[1]))


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_parse_single_line(tmp_path):
    t = load_ratings(write(tmp_path, "r.tsv", "196\t242\t3\t881250949\n"))
    assert list(t) == [Rating(196, 242, 3)]


def test_parse_error_has_line_number(tmp_path):
    p = write(tmp_path, "r.tsv", "1\t2\t3\t0\n1\tx\t3\t0\n")
    with pytest.raises(ParseError) as exc:
        load_ratings(p)
    assert exc.value.lineno == 2
    assert ":2:" in str(exc.value)


def test_short_line_is_parse_error(tmp_path):
    with pytest.raises(ParseError):
        load_ratings(write(tmp_path, "r.tsv", "1\t2\n"))


def test_rating_out_of_scale(tmp_path):
    with pytest.raises(ValidationError):
        load_ratings(write(tmp_path, "r.tsv", "1\t2\t6\t0\n"))
    with pytest.raises(ValidationError):
        load_ratings(write(tmp_path, "r.tsv", "1\t2\t0\t0\n"))


def test_duplicate_rating_rejected():
    with pytest.raises(ValidationError):
        RatingTable([1, 1], [2, 2], [3, 4])


def test_unknown_occupation(tmp_path):
    with pytest.raises(ValidationError):
        load_users(write(tmp_path, "u.user", "1|24|M|astronaut|85711\n"))


def test_user_encoding_bits():
    v = encode_user_attributes(24, "M", "technician")
    assert v.shape == (USER_DIM,) and USER_DIM == 30
    assert v[:7].sum() == 1 and v[1] == 1  # 18-24
    assert v[7:9].sum() == 1 and v[7] == 1
    assert v[9:].sum() == 1 and v[9 + OCCUPATIONS.index("technician")] == 1


@pytest.mark.parametrize("age,bucket", [(0, 0), (17, 0), (18, 1), (24, 1), (25, 2), (34, 2), (35, 3),
                                        (44, 3), (45, 4), (49, 4), (50, 5), (55, 5), (56, 6), (90, 6)])
def test_age_buckets(age, bucket):
    assert np.argmax(encode_user_attributes(age, "F", "none")[:7]) == bucket


def test_item_genres(tmp_path):
    flags = "|".join(["0"] * 5 + ["1"] + ["0"] * 13)
    items = load_items(write(tmp_path, "u.item", f"7|Toy Story (1995)|01-Jan-1995|||{flags}\n"))
    assert items[7].shape == (ITEM_DIM,) and ITEM_DIM == len(GENRES) == 19
    assert items[7][GENRES.index("comedy")] == 1 and items[7].sum() == 1


def test_item_flags_must_be_binary(tmp_path):
    flags = "|".join(["2"] + ["0"] * 18)
    with pytest.raises((ParseError, ValidationError)):
        load_items(write(tmp_path, "u.item", f"7|T|d|||{flags}\n"))


def test_missing_attribute_record(tmp_path):
    r = write(tmp_path, "r.tsv", "1\t1\t3\t0\n2\t1\t4\t0\n")
    u = write(tmp_path, "u.user", "1|30|F|writer|0\n")
    i = write(tmp_path, "u.item", "1|T|d|||" + "|".join(["0"] * 19) + "\n")
    with pytest.raises(ValidationError, match="user 2"):
        load_dataset(r, u, i)


@given(ratings_st)
def test_indexes_consistent(triples):
    t = RatingTable.from_ratings(Rating(*x) for x in triples)
    assert len(t) == len(triples)
    for u, items in t.by_user.items():
        assert sorted(items) == sorted(i for (v, i, _) in triples if v == u)
        assert len(items) == t.user_counts[u]
    for i, users in t.by_item.items():
        assert sorted(users) == sorted(u for (u, j, _) in triples if j == i)
    for u, i, r in triples:
        assert t.rating(u, i) == r


@given(ratings_st)
def test_means_in_range(triples):
    t = RatingTable.from_ratings(Rating(*x) for x in triples)
    m = compute_means(t)
    for u in set(x[0] for x in triples):
        vals = [r for (v, _, r) in triples if v == u]
        assert m.user(u) == pytest.approx(np.mean(vals))
        assert 1 <= m.user(u) <= 5
    assert m.user(t.n_users + 3) == m.global_mean
    assert m.global_mean == pytest.approx(np.mean([x[2] for x in triples]))


@given(ratings_st, st.floats(0.05, 1.0), st.integers(0, 5))
def test_subsample_is_seeded_subset(triples, frac, seed):
    t = RatingTable.from_ratings(Rating(*x) for x in triples)
    a, b = t.subsample(frac, seed), t.subsample(frac, seed)
    assert a == b
    assert len(a) == round(frac * len(t))
    assert set(a) <= set(t)


@given(ratings_st)
def test_write_load_round_trip(tmp_path_factory, triples):
    t = RatingTable.from_ratings(Rating(*x) for x in triples)
    p = tmp_path_factory.mktemp("rt") / "r.tsv"
    write_ratings(t, p)
    assert load_ratings(p) == t


def test_align_shares_universe():
    a = RatingTable([1], [2], [3])
    b = RatingTable([5], [1], [3])
    (a2, b2), cat = align([a, b], AttributeCatalog.empty(2, 7))
    assert a2.n_users == b2.n_users == cat.n_users == 5
    assert a2.n_items == b2.n_items == cat.n_items == 7


def test_movielens_counts(movielens):
    t, cat = load_dataset(movielens / "u.data", movielens / "u.user", movielens / "u.item")
    assert (len(t), int((t.user_counts > 0).sum()), int((t.item_counts > 0).sum())) == (100_000, 943, 1682)
    assert t.rating(196, 242) == 3
    assert np.all(cat.user_vec[1:, :7].sum(axis=1) == 1)
    assert np.all(cat.user_vec[1:, 7:9].sum(axis=1) == 1)
    assert np.all(cat.user_vec[1:, 9:].sum(axis=1) == 1)
    assert set(np.unique(cat.item_vec)) <= {0.0, 1.0}


def test_empty_ratings_file(tmp_path):
    t = load_ratings(write(tmp_path, "r.tsv", ""))
    assert len(t) == 0 and list(t) == []

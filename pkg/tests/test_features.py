import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from transfer_er.features import (Feature, FeatureSpec, RawRecord, RecordError, Standardizer,
                                  absdiff_score, add_constant, apply, clean_text,
                                  featurize_pair, featurize_pairs, fit_standardizer, jaccard,
                                  normalize_record, read_feature_csv, read_pairs_csv,
                                  read_records, write_feature_csv, write_records)


def rec(**kw):
    base = dict(source="imdb", id="1", title="The Matrix")
    base.update(kw)
    return RawRecord(**base)


def test_normalize_examples():
    r = normalize_record(rec(title="  The Matrix! ", cast=("Keanu REEVES",)))
    assert r.title == "the matrix"
    assert r.cast == ("keanu reeves",)


def test_normalize_idempotent_and_empty_title():
    r = normalize_record(rec(title="Se7en", alt_titles=("Seven!!",), directors=(" David  Fincher",)))
    assert normalize_record(r) == r
    with pytest.raises(RecordError):
        normalize_record(rec(title=" !?. "))


@given(st.text(max_size=40))
def test_clean_text_idempotent(s):
    assert clean_text(clean_text(s)) == clean_text(s)


def test_jaccard_examples():
    assert jaccard({"a", "b"}, {"b", "c"}) == pytest.approx(1 / 3)
    assert jaccard({"x", "y"}, {"y", "x"}) == 1.0
    assert jaccard({"x"}, {"y"}) == 0.0
    assert jaccard(set(), set()) == 1.0
    assert jaccard(set(), set(), empty=0.0) == 0.0


@given(st.sets(st.sampled_from("abcdefg")), st.sets(st.sampled_from("abcdefg")))
def test_jaccard_bounds_and_symmetry(a, b):
    v = jaccard(a, b)
    assert 0.0 <= v <= 1.0 and v == jaccard(b, a)


def test_absdiff_examples():
    assert absdiff_score(1999, 1999) == 0.0
    assert absdiff_score(120, 115) == -5.0
    assert absdiff_score(None, 1999) == 0.0
    # no negative zero in outputs
    assert str(absdiff_score(3, 3)) == "0.0"


def test_featurize_identical_records():
    r = normalize_record(rec(year=1999, runtime=136, cast=("a b", "c d"), directors=("e f",)))
    assert featurize_pair(r, r).tolist() == [1.0, 1.0, 1.0, 0.0, 0.0]


def test_featurize_cast_overlap_half():
    r1 = normalize_record(rec(cast=("a", "b", "c")))
    r2 = normalize_record(rec(source="msn", cast=("a", "b", "d")))
    # 2 shared out of 4 distinct names
    assert featurize_pair(r1, r2)[1] == 0.5


def test_featurize_title_uses_alt_titles():
    r1 = normalize_record(rec(title="Se7en", alt_titles=("Seven",)))
    r2 = normalize_record(rec(source="msn", title="Seven"))
    assert featurize_pair(r1, r2)[0] == 0.5


record_st = st.builds(
    lambda t, y, rt, cast: normalize_record(rec(title=t, year=y, runtime=rt, cast=tuple(cast))),
    st.sampled_from(["alpha beta", "beta gamma", "delta", "the alpha"]),
    st.one_of(st.none(), st.integers(1900, 2020)),
    st.one_of(st.none(), st.integers(60, 200)),
    st.lists(st.sampled_from(["ann", "bob", "cy", "di"]), max_size=4))


@given(record_st, record_st)
def test_featurize_symmetric_and_finite(r1, r2):
    f12, f21 = featurize_pair(r1, r2), featurize_pair(r2, r1)
    assert np.array_equal(f12, f21)
    assert np.all(np.isfinite(f12))
    assert np.all((f12[:3] >= 0) & (f12[:3] <= 1))


def test_feature_spec_validation():
    with pytest.raises(ValueError):
        FeatureSpec(())
    with pytest.raises(ValueError):
        FeatureSpec((Feature("a", "jaccard", "cast"), Feature("a", "jaccard", "directors")))
    with pytest.raises(ValueError):
        FeatureSpec((Feature("a", "cosine", "cast"),))
    assert FeatureSpec().d == 5
    assert FeatureSpec.numeric(3).names == ("absdiff_a0", "absdiff_a1", "absdiff_a2")


def test_numeric_features_from_attrs():
    r1 = RawRecord("s0", "e1", "e1", attrs=(0.25, 0.5))
    r2 = RawRecord("s1", "e1", "e1", attrs=(0.75, 0.5))
    assert featurize_pair(r1, r2, FeatureSpec.numeric(2)).tolist() == [-0.5, 0.0]


def test_standardizer_hand_values():
    std = fit_standardizer([[0.0], [2.0]])
    assert std.means.tolist() == [1.0] and std.stds.tolist() == [1.0]
    assert apply(std, [2.0]).tolist() == [1.0]


def test_standardizer_constant_column():
    std = fit_standardizer([[3.0, 1.0], [3.0, 2.0], [3.0, 6.0]])
    assert std.stds[0] == 1.0
    assert not std.apply([[3.0, 1.0]])[:, 0].any()


def test_standardizer_moments_and_round_trip():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((200, 4)) * [1, 5, 0.1, 30] + [0, -3, 9, 100]
    std = fit_standardizer(X)
    Z = std.apply(X)
    assert np.abs(Z.mean(axis=0)).max() < 1e-9
    assert np.abs(Z.var(axis=0) - 1).max() < 1e-6
    assert np.abs(std.invert(Z) - X).max() < 1e-12
    back = Standardizer.from_dict(json.loads(json.dumps(std.to_dict())))
    assert np.array_equal(back.means, std.means) and np.array_equal(back.stds, std.stds)


def test_standardizer_ignores_test_statistics():
    rng = np.random.default_rng(1)
    train = rng.standard_normal((50, 3))
    std = fit_standardizer(train)
    before = std.apply(train)
    _ = fit_standardizer(np.vstack([train, 100 + rng.standard_normal((50, 3))]))
    assert np.array_equal(std.apply(train), before)


def test_standardizer_empty():
    with pytest.raises(ValueError):
        fit_standardizer(np.empty((0, 3)))


def test_add_constant():
    assert add_constant([[1.0], [2.0]]).tolist() == [[1.0, 1.0], [2.0, 1.0]]


def test_records_round_trip(tmp_path):
    rs = [rec(alt_titles=("Matrix",), year=1999, cast=("K R",)), rec(id="2", runtime=None),
          RawRecord("s0", "e1", "e1", attrs=(0.1, 1 / 3))]
    path = tmp_path / "r.jsonl"
    write_records(rs, path)
    assert read_records(path) == rs


def test_records_absent_keys_are_missing(tmp_path):
    path = tmp_path / "r.jsonl"
    path.write_text('{"source": "a", "id": "1", "title": "x"}\n\n')
    (r,) = read_records(path)
    assert r.year is None and r.cast == ()


@pytest.mark.parametrize("line", ['{"source": "a", "id": "1"}', '{"source": "a", "id": "1", "title": "x", "year": "1999"}', "not json"])
def test_records_bad_lines(tmp_path, line):
    path = tmp_path / "r.jsonl"
    path.write_text(line + "\n")
    with pytest.raises(RecordError, match=":1:"):
        read_records(path)


def _toy_records():
    return [normalize_record(r) for r in (
        rec(source="imdb", id="1", title="Alpha Beta", year=2000),
        rec(source="msn", id="7", title="alpha beta", year=2001),
        rec(source="amg", id="3", title="Gamma", year=1990),
    )]


def test_featurize_pairs_and_csv_round_trip(tmp_path):
    pairs = [("msn", "7", "imdb", "1", 1), ("amg", "3", "imdb", "1", 0), ("amg", "3", "msn", "7", None)]
    table = featurize_pairs(_toy_records(), pairs, FeatureSpec())
    # canonical order by source name
    assert table.source_a == ["imdb", "amg", "amg"] and table.id_a == ["1", "3", "3"]
    assert table.label.tolist() == [1.0, -1.0, 0.0]  # unlabeled written as 0
    assert table.X[0].tolist() == [1.0, 1.0, 1.0, -1.0, 0.0]
    path = tmp_path / "f.csv"
    write_feature_csv(table, path)
    header = path.read_text().splitlines()[0]
    assert header == "source_a,id_a,source_b,id_b,label,jaccard_title,jaccard_cast,jaccard_directors,absdiff_year,absdiff_runtime"
    back = read_feature_csv(path)
    assert np.array_equal(back.X, table.X)
    # 0 on input maps to -1
    assert back.label.tolist() == [1.0, -1.0, -1.0]
    data = back.to_dataset()
    assert data.source_names == ("amg", "imdb", "msn")
    with pytest.raises(RecordError, match="imdb"):
        back.to_dataset(["amg", "msn"])


def test_featurize_pairs_errors():
    with pytest.raises(RecordError):
        featurize_pairs(_toy_records(), [("imdb", "1", "imdb", "1", 1)], FeatureSpec())
    with pytest.raises(RecordError):
        featurize_pairs(_toy_records(), [("imdb", "9", "msn", "7", 1)], FeatureSpec())


def test_read_feature_csv_errors(tmp_path):
    path = tmp_path / "f.csv"
    path.write_text("a,b\n")
    with pytest.raises(RecordError):
        read_feature_csv(path)
    path.write_text("source_a,id_a,source_b,id_b,label,f\nx,1,y,2,5,0.1\n")
    with pytest.raises(RecordError, match=":2:"):
        read_feature_csv(path)


def test_read_pairs_csv(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("source_a,id_a,source_b,id_b\nx,1,y,2\n")
    assert read_pairs_csv(path) == [("x", "1", "y", "2", None)]
    path.write_text("source_a,id_a,source_b,id_b,label\nx,1,y,2,1\n")
    assert read_pairs_csv(path) == [("x", "1", "y", "2", 1)]

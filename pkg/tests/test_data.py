import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtrack import data as D
from qtrack.data import (QueryPair, RawLogRecord, Reject, TrackingTriplet,
                         build_triplet, filter_frequency, mine_pairs,
                         split_triplets, tokenize)


def rec(user, minutes, query):
    return RawLogRecord(user, minutes * 60.0, query)


class TestTokenize:
    def test_lowercase_and_split(self):
        assert tokenize("Red  Dress") == ["red", "dress"]

    def test_pure_punctuation_invalid(self):
        assert tokenize("!!!") == []

    def test_unicode_words_preserved(self):
        assert tokenize("nike 黑色") == ["nike", "黑色"]

    def test_punctuation_stripped_from_tokens(self):
        assert tokenize("nike, shoes!") == ["nike", "shoes"]


class TestMinePairs:
    def test_pair_inside_window(self):
        pairs, _ = mine_pairs([rec("u", 0, "dress"), rec("u", 29, "red dress")])
        assert len(pairs) == 1 and pairs[0].count == 1

    def test_no_pair_outside_window(self):
        pairs, _ = mine_pairs([rec("u", 0, "dress"), rec("u", 31, "red dress")])
        assert pairs == []

    def test_interleaved_users_split_by_user(self):
        # Brute-force per-user sessioning oracle: pair only same-user adjacency.
        records = [rec("a", 0, "dress"), rec("b", 1, "shoes"),
                   rec("a", 2, "red dress"), rec("b", 3, "nike shoes")]
        pairs, _ = mine_pairs(records)
        got = {(p.first, p.second) for p in pairs}
        by_user = {}
        for r in sorted(records, key=lambda r: (r.user_id, r.timestamp)):
            by_user.setdefault(r.user_id, []).append(tuple(tokenize(r.query)))
        expected = set()
        for qs in by_user.values():
            expected |= set(zip(qs, qs[1:]))
        assert got == expected

    def test_identical_queries_discarded(self):
        pairs, _ = mine_pairs([rec("u", 0, "dress"), rec("u", 1, "Dress")])
        assert pairs == []

    def test_bad_records_counted(self):
        pairs, rejects = mine_pairs([rec("u", 0, "!!!"), rec("u", 1, "dress"),
                                     rec("u", 2, "red dress")])
        assert len(pairs) == 1
        assert [r.reason for r in rejects] == [D.BAD_RECORD]

    def test_counts_aggregate(self):
        records = []
        for u in range(3):
            records += [rec(f"u{u}", 0, "dress"), rec(f"u{u}", 1, "red dress")]
        pairs, _ = mine_pairs(records)
        assert len(pairs) == 1 and pairs[0].count == 3


class TestFilterFrequency:
    def test_boundary_count_kept(self):
        p = QueryPair(("a",), ("b", "a"), 5)
        assert filter_frequency([p]) == [p]

    def test_below_boundary_removed(self):
        assert filter_frequency([QueryPair(("a",), ("b", "a"), 4)]) == []

    def test_empty_input(self):
        assert filter_frequency([]) == []


class TestBuildTriplet:
    def test_brand_replacement(self):
        t = build_triplet(QueryPair(("adidas", "shoes"), ("nike", "shoes"), 1))
        assert t.q2 == ("nike",)
        assert t.labels == (0, 1)
        assert t.q3 == ("nike", "shoes")

    def test_refinement(self):
        t = build_triplet(QueryPair(("dress",), ("red", "dress"), 1))
        assert t.q2 == ("red",) and t.labels == (1,)

    def test_pure_narrowing_rejected(self):
        r = build_triplet(QueryPair(("red", "dress"), ("red",), 1))
        assert isinstance(r, Reject) and r.reason == D.EMPTY_Q2

    def test_stopword_only_q2_rejected(self):
        r = build_triplet(QueryPair(("red", "dress"), ("red", "dress", "the"), 1))
        assert isinstance(r, Reject) and r.reason == D.MEANINGLESS_Q2


class TestTripletInvariants:
    def test_label_mismatch_rejected(self):
        with pytest.raises(ValueError):
            TrackingTriplet(("a", "b"), ("c",), ("b", "c"), (1, 1))

    def test_q2_must_be_in_q3(self):
        with pytest.raises(ValueError):
            TrackingTriplet(("a",), ("c",), ("a",), (1,))

    def test_q3_subset_of_union(self):
        with pytest.raises(ValueError):
            TrackingTriplet(("a",), ("c",), ("a", "c", "d"), (1,))

    def test_json_round_trip(self):
        t = TrackingTriplet(("adidas", "shoes"), ("nike",),
                            ("shoes", "nike"), (0, 1))
        assert TrackingTriplet.from_json(t.to_json()) == t


class TestSplit:
    @pytest.fixture
    def triplets(self):
        out = []
        for i in range(200):
            out.append(TrackingTriplet((f"a{i}",), (f"b{i}",),
                                       (f"a{i}", f"b{i}"), (1,)))
        return out

    def test_ratio_one_all_train(self, triplets):
        tr, va, te = split_triplets(triplets, (1.0, 0.0, 0.0), 0)
        assert len(tr) == 200 and not va and not te

    def test_uneven_proportions(self, triplets):
        tr, va, te = split_triplets(triplets, (0.899, 0.050, 0.051), 0)
        assert len(tr) + len(va) + len(te) == 200
        assert 160 <= len(tr) <= 195

    def test_deterministic(self, triplets):
        a = split_triplets(triplets, (0.8, 0.1, 0.1), 7)
        b = split_triplets(triplets, (0.8, 0.1, 0.1), 7)
        assert a == b

    def test_no_key_in_two_splits(self, triplets):
        # Duplicate keys must travel together.
        doubled = triplets + triplets[:50]
        parts = split_triplets(doubled, (0.6, 0.2, 0.2), 1)
        keys = [{(t.q1, t.q2) for t in part} for part in parts]
        assert not (keys[0] & keys[1]) and not (keys[0] & keys[2]) \
            and not (keys[1] & keys[2])

    def test_bad_ratios(self, triplets):
        with pytest.raises(ValueError):
            split_triplets(triplets, (0.5, 0.2, 0.2), 0)

    def test_empty_corpus(self):
        with pytest.raises(ValueError):
            split_triplets([], (1.0, 0.0, 0.0), 0)


class TestFileFormats:
    def test_log_tsv_round_trip(self, tmp_path):
        records = [RawLogRecord("u1", 10.0, "red dress"),
                   RawLogRecord("u2", 20.0, "nike 黑色")]
        D.write_log_tsv(tmp_path / "log.tsv", records)
        loaded = list(D.read_log_tsv(tmp_path / "log.tsv"))
        assert loaded == records

    def test_malformed_log_lines_become_rejects(self, tmp_path):
        (tmp_path / "log.tsv").write_text("u1\tnot-a-number\tdress\nonly-one-field\n")
        items = list(D.read_log_tsv(tmp_path / "log.tsv"))
        assert all(isinstance(i, Reject) for i in items) and len(items) == 2

    def test_dataset_round_trip(self, tmp_path):
        triplets = [TrackingTriplet(("adidas", "shoes"), ("nike",),
                                    ("shoes", "nike"), (0, 1))]
        D.write_dataset(tmp_path / "d.jsonl", triplets)
        assert D.read_dataset(tmp_path / "d.jsonl") == triplets


@given(st.lists(st.tuples(st.sampled_from("abcd"), st.integers(0, 100)),
                min_size=0, max_size=30))
@settings(max_examples=50, deadline=None)
def test_mine_pairs_deterministic(events):
    records = [RawLogRecord(u, float(t * 60), f"q{u}{t} x") for u, t in events]
    a = mine_pairs(records)
    b = mine_pairs(list(reversed(records)))
    assert a[0] == b[0]

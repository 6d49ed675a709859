import random

import pytest

from orgmarl.patterns import (
    Leaf,
    Node,
    PatternError,
    STAR,
    belongs,
    match_ends_at,
    matches,
    matches_empty,
    parse_pattern,
    pattern_text,
    realize,
)

from gen import all_histories, random_history, random_pattern
from oracles import BruteForceMatcher, oracle_matches


class TestParser:
    def test_nested_example(self):
        p = parse_pattern("[o1,a1,[o2,a2]<0,2>]<1,*>")
        assert p == Node(
            children=(
                Leaf(pairs=(("o1", "a1"),), cmin=1, cmax=1),
                Leaf(pairs=(("o2", "a2"),), cmin=0, cmax=2),
            ),
            cmin=1,
            cmax=STAR,
        )

    def test_single_pair_leaf(self):
        assert parse_pattern("[o1,a1]<1,1>") == Leaf(pairs=(("o1", "a1"),), cmin=1, cmax=1)

    def test_unpaired_label_rejected(self):
        with pytest.raises(PatternError, match="odd number of labels"):
            parse_pattern("[o1]<1,1>")

    def test_unpaired_run_in_node_rejected(self):
        with pytest.raises(PatternError, match="odd number of labels"):
            parse_pattern("[o1,[o2,a2]<1,1>]<1,1>")

    def test_cmin_above_cmax_rejected(self):
        with pytest.raises(PatternError, match="exceeds"):
            parse_pattern("[o1,a1]<3,2>")

    def test_syntax_error_carries_offset(self):
        with pytest.raises(PatternError) as err:
            parse_pattern("[o1,a1<1,1>")
        assert err.value.offset == 6

    def test_trailing_garbage_rejected(self):
        with pytest.raises(PatternError, match="trailing"):
            parse_pattern("[o1,a1]<1,1>extra")

    def test_whitespace_insignificant(self):
        a = parse_pattern("[ o1 , a1 , [ o2 , a2 ] < 0 , 2 > ] < 1 , * >")
        b = parse_pattern("[o1,a1,[o2,a2]<0,2>]<1,*>")
        assert a == b

    def test_multi_pair_leaf(self):
        p = parse_pattern("[o1,a1,o2,a2]<2,3>")
        assert p == Leaf(pairs=(("o1", "a1"), ("o2", "a2")), cmin=2, cmax=3)

    def test_label_run_between_subpatterns_groups_once(self):
        p = parse_pattern("[[x,y]<1,1>,o1,a1,o2,a2,[x,y]<1,1>]<1,1>")
        assert isinstance(p, Node)
        assert len(p.children) == 3
        assert p.children[1] == Leaf(pairs=(("o1", "a1"), ("o2", "a2")), cmin=1, cmax=1)

    def test_round_trip_generated(self):
        rng = random.Random(7)
        for _ in range(200):
            p = random_pattern(rng, depth=3)
            assert parse_pattern(pattern_text(p)) == p

    def test_round_trip_parsed(self):
        for text in (
            "[o1,a1,[o2,a2]<0,2>]<1,*>",
            "[o1,a1]<0,*>",
            "[[a,b]<0,1>,[c,d]<2,2>]<1,3>",
            "[#any,a1]<1,2>",
        ):
            p = parse_pattern(text)
            assert parse_pattern(pattern_text(p)) == p


class TestMatcher:
    def test_nested_cardinality_example_matches(self):
        p = parse_pattern("[o1,a1,[o2,a2]<0,2>]<1,*>")
        assert matches(p, (("o1", "a1"), ("o2", "a2"), ("o2", "a2")))

    def test_missing_mandatory_prefix(self):
        p = parse_pattern("[o1,a1,[o2,a2]<0,2>]<1,*>")
        assert not matches(p, (("o2", "a2"),))

    def test_zero_cmin_matches_empty_history(self):
        p = parse_pattern("[o1,a1,[o2,a2]<0,1>]<0,*>")
        assert matches_empty(p)
        assert matches(p, ())

    def test_match_is_contiguous(self):
        p = parse_pattern("[o1,a1,o2,a2]<1,1>")
        assert matches(p, (("x", "y"), ("o1", "a1"), ("o2", "a2"), ("z", "w")))
        # o1,a1 ... o2,a2 with an interloper between them is not contiguous.
        assert not matches(p, (("o1", "a1"), ("x", "y"), ("o2", "a2")))

    def test_too_many_repetitions_rejected_inside_body(self):
        # Anchored on both sides so surplus repetitions cannot be skipped.
        p = parse_pattern("[o3,a3,[o2,a2]<0,2>,o3,a3]<1,1>")
        over = (("o3", "a3"),) + (("o2", "a2"),) * 3 + (("o3", "a3"),)
        okay = (("o3", "a3"),) + (("o2", "a2"),) * 2 + (("o3", "a3"),)
        assert not matches(p, over)
        assert matches(p, okay)

    def test_wildcard_matches_exactly_one_label(self):
        p = parse_pattern("[#any,a1]<1,1>")
        assert matches(p, (("anything", "a1"),))
        assert not matches(p, (("anything", "a2"),))

    def test_belongs_is_matches(self):
        p = parse_pattern("[o1,a1]<1,1>")
        h = (("o1", "a1"),)
        assert belongs(p, h) == matches(p, h)

    def test_match_ends_at_tail(self):
        p = parse_pattern("[o1,a1]<1,1>")
        assert match_ends_at(p, (("x", "y"), ("o1", "a1")))
        assert not match_ends_at(p, (("o1", "a1"), ("x", "y")))

    def test_oracle_agreement_random_patterns(self):
        rng = random.Random(11)
        histories = [random_history(rng, rng.randint(0, 5)) for _ in range(60)]
        for _ in range(40):
            p = random_pattern(rng, depth=2)
            oracle = BruteForceMatcher(p)
            for h in histories:
                assert matches(p, h) == oracle.matches(h), (pattern_text(p), h)

    def test_oracle_agreement_exhaustive_small(self):
        rng = random.Random(5)
        histories = list(all_histories(4))
        for _ in range(12):
            p = random_pattern(rng, depth=2)
            oracle = BruteForceMatcher(p)
            for h in histories:
                assert matches(p, h) == oracle.matches(h), (pattern_text(p), h)

    def test_star_unbounded_repetition(self):
        p = parse_pattern("[o1,a1]<1,*>")
        for reps in (1, 2, 7):
            assert matches(p, (("o1", "a1"),) * reps)
        assert not matches(p, ())


class TestRealize:
    def test_minimal_realization(self):
        p = parse_pattern("[o1,a1,[o2,a2]<0,2>]<1,*>")
        assert realize(p) == (("o1", "a1"),)

    def test_repetitions_expanded(self):
        p = parse_pattern("[o1,a1]<3,5>")
        assert realize(p) == (("o1", "a1"),) * 3

    def test_wildcard_rejected(self):
        with pytest.raises(PatternError, match="wildcard"):
            realize(parse_pattern("[#any,a1]<1,1>"))

    def test_realization_matches_its_pattern(self):
        rng = random.Random(23)
        for _ in range(100):
            p = random_pattern(rng, depth=2, wildcards=False)
            h = realize(p)
            if p.cmin == 0 and not h:
                assert matches(p, h)
            else:
                assert matches(p, h), pattern_text(p)


def test_oracle_matches_helper_consistent():
    p = parse_pattern("[oA,aA]<1,1>")
    assert oracle_matches(p, (("oA", "aA"),))
    assert not oracle_matches(p, (("oB", "aB"),))

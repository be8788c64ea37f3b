"""
Tests for affinity measures and matchers.
"""
import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ais_engine.affinity import (
    EuclideanMatcher,
    ExactMatcher,
    PacketFieldMatcher,
    RContiguousMatcher,
    build_matcher,
    euclidean_distance,
    hamming_similarity,
    longest_contiguous_match,
    pearson,
    r_contiguous_match,
)
from ais_engine.config import GenerationConfig, MatcherKind, PearsonConfig
from ais_engine.encoding import RealVector, UserProfile, parse_bitstring, parse_packet
from ais_engine.errors import DimensionError, ParameterError, RepresentationError
from tests.conftest import all_bitstrings

NO_PENALTY = PearsonConfig(overlap_penalty_threshold=1)


def naive_longest_run(a, b):
    best = run = 0
    for x, y in zip(a.bits, b.bits):
        run = run + 1 if x == y else 0
        best = max(best, run)
    return best


def naive_pearson(u, v, threshold):
    """Straight evaluation of the penalised Pearson formula."""
    common = [i for i in u.votes if i in v.votes]
    if not common:
        return 0.0
    mu = sum(u.votes.values()) / len(u.votes)
    mv = sum(v.votes.values()) / len(v.votes)
    num = sum((u.votes[i] - mu) * (v.votes[i] - mv) for i in common)
    su = sum((u.votes[i] - mu) ** 2 for i in common)
    sv = sum((v.votes[i] - mv) ** 2 for i in common)
    if su == 0 or sv == 0:
        return 0.0
    r = num / math.sqrt(su * sv) * min(1.0, len(common) / threshold)
    return max(-1.0, min(1.0, r))


def random_profile(rng, name, items=12):
    chosen = rng.random(items) < 0.6
    return UserProfile(
        name,
        {f"i{j}": int(rng.integers(0, 6)) for j in range(items) if chosen[j]},
    )


class TestBitMatching:
    """Agreement counts and contiguous runs on bit strings."""

    def test_golden_cases(self):
        """Worked examples: 00000 against 00011 and 01010."""
        a = parse_bitstring("00000")
        assert hamming_similarity(a, parse_bitstring("00011")) == 3
        assert hamming_similarity(a, parse_bitstring("01010")) == 3
        assert longest_contiguous_match(a, parse_bitstring("00011")) == 3
        assert longest_contiguous_match(a, parse_bitstring("01010")) == 1

    def test_identity(self):
        a = parse_bitstring("1011001")
        assert hamming_similarity(a, a) == 7
        assert longest_contiguous_match(a, a) == 7
        assert r_contiguous_match(a, a, 7) is True

    def test_exhaustive_five_bit_oracle(self):
        """All 1024 pairs agree with per-bit counting and a naive run scan."""
        universe = all_bitstrings(5)
        for a, b in itertools.product(universe, repeat=2):
            distance = sum(x != y for x, y in zip(a.bits, b.bits))
            assert hamming_similarity(a, b) == 5 - distance
            assert longest_contiguous_match(a, b) == naive_longest_run(a, b)
            assert longest_contiguous_match(a, b) <= hamming_similarity(a, b)

    def test_r_contiguous_examples(self):
        a = parse_bitstring("00000")
        assert r_contiguous_match(a, parse_bitstring("00011"), 3) is True
        assert r_contiguous_match(a, parse_bitstring("01010"), 2) is False

    def test_r_out_of_range(self):
        a = parse_bitstring("00000")
        with pytest.raises(ParameterError):
            r_contiguous_match(a, a, 0)
        with pytest.raises(ParameterError):
            r_contiguous_match(a, a, 6)

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            hamming_similarity(parse_bitstring("01"), parse_bitstring("011"))
        with pytest.raises(DimensionError):
            longest_contiguous_match(parse_bitstring("01"), parse_bitstring("011"))


class TestEuclidean:
    def test_three_four_five(self):
        assert euclidean_distance(RealVector((0, 0)), RealVector((3, 4))) == pytest.approx(5.0)

    def test_identity(self):
        x = RealVector((1.5, -2.0))
        assert euclidean_distance(x, x) == 0.0

    def test_hand_arithmetic(self):
        d = euclidean_distance(RealVector((1, 2, 3)), RealVector((2, 4, 6)))
        assert d == pytest.approx(math.sqrt(14))

    def test_dimension_error(self):
        with pytest.raises(DimensionError):
            euclidean_distance(RealVector((1,)), RealVector((1, 2)))


class TestPearson:
    """Penalised Pearson correlation between users."""

    def test_disjoint_votes_default_to_zero(self):
        u = UserProfile("u", {"a": 1, "b": 5})
        v = UserProfile("v", {"c": 2, "d": 4})
        assert pearson(u, v, NO_PENALTY) == 0.0

    def test_self_correlation(self):
        u = UserProfile("u", {"a": 1, "b": 4, "c": 5})
        assert pearson(u, UserProfile("v", dict(u.votes)), NO_PENALTY) == pytest.approx(1.0, abs=1e-9)

    def test_anti_correlation(self):
        u = UserProfile("u", {"a": 1, "b": 2, "c": 3})
        v = UserProfile("v", {"a": 3, "b": 2, "c": 1})
        assert pearson(u, v, NO_PENALTY) == pytest.approx(-1.0, abs=1e-12)

    def test_partial_overlap_matches_oracle(self):
        """Means come from all votes, sums from the overlap only."""
        u = UserProfile("u", {"a": 4, "b": 2, "c": 5, "d": 1})
        v = UserProfile("v", {"a": 3, "b": 1, "c": 4})
        expected = (14 / 3) / math.sqrt(6 * 42 / 9)
        assert pearson(u, v, NO_PENALTY) == pytest.approx(expected, abs=1e-12)
        assert pearson(u, v, NO_PENALTY) == pytest.approx(naive_pearson(u, v, 1), abs=1e-9)

    def test_flat_overlap_is_zero(self):
        u = UserProfile("u", {"a": 3, "b": 3})
        v = UserProfile("v", {"a": 1, "b": 5, "c": 2})
        assert pearson(u, v, NO_PENALTY) == 0.0

    def test_random_pairs_symmetric_and_match_oracle(self):
        """1,000 seeded pairs: symmetric to 1e-12, oracle to 1e-9, within [-1, 1]."""
        rng = np.random.default_rng(2024)
        cfg = PearsonConfig(overlap_penalty_threshold=4)
        for k in range(1000):
            u, v = random_profile(rng, f"u{k}"), random_profile(rng, f"v{k}")
            r = pearson(u, v, cfg)
            assert -1.0 <= r <= 1.0
            assert r == pytest.approx(pearson(v, u, cfg), abs=1e-12)
            assert r == pytest.approx(naive_pearson(u, v, 4), abs=1e-9)

    def test_penalty_monotone_in_overlap(self):
        """With r fixed at 1 by construction, fewer common items never raise |r|."""
        cfg = PearsonConfig(overlap_penalty_threshold=10)
        previous = 0.0
        for n in range(2, 14):
            votes = {f"i{j}": (1 if j % 2 else 5) for j in range(n)}
            r = abs(pearson(UserProfile("u", votes), UserProfile("v", votes), cfg))
            assert r == pytest.approx(min(1.0, n / 10), abs=1e-12)
            assert r >= previous
            previous = r

    @given(
        st.dictionaries(st.sampled_from("abcdefgh"), st.integers(0, 5)),
        st.dictionaries(st.sampled_from("abcdefgh"), st.integers(0, 5)),
        st.integers(1, 8),
    )
    def test_symmetric_property(self, a, b, threshold):
        cfg = PearsonConfig(overlap_penalty_threshold=threshold)
        u, v = UserProfile("u", a), UserProfile("v", b)
        assert pearson(u, v, cfg) == pytest.approx(pearson(v, u, cfg), abs=1e-12)


class TestMatchers:
    """Boolean predicates used for censoring and monitoring."""

    def test_build_matcher(self):
        assert isinstance(build_matcher(GenerationConfig(matcher=MatcherKind.EXACT)), ExactMatcher)
        assert isinstance(build_matcher(GenerationConfig()), PacketFieldMatcher)
        m = build_matcher(GenerationConfig(matcher=MatcherKind.R_CONTIGUOUS, r=3))
        assert isinstance(m, RContiguousMatcher) and m.r == 3
        e = build_matcher(GenerationConfig(matcher=MatcherKind.EUCLIDEAN, radius=0.5))
        assert isinstance(e, EuclideanMatcher)

    def test_representation_mismatch(self, smtp_record):
        bits = parse_bitstring("0101")
        with pytest.raises(RepresentationError):
            ExactMatcher()(bits, smtp_record)
        with pytest.raises(RepresentationError):
            PacketFieldMatcher()(bits, bits)
        with pytest.raises(TypeError):
            RContiguousMatcher(2)(smtp_record, smtp_record)

    def test_euclidean_radius(self):
        matcher = EuclideanMatcher(1.0)
        assert matcher(RealVector((0.0, 0.0)), RealVector((0.6, 0.6)))
        assert not matcher(RealVector((0.0, 0.0)), RealVector((1.0, 0.0)))

    def test_affinity_normalised(self, smtp_record):
        exact = ExactMatcher()
        assert exact.affinity(parse_bitstring("0000"), parse_bitstring("0011")) == 0.5
        sig = parse_packet("udp,*,*,108.200.111.12,25")
        assert PacketFieldMatcher().affinity(sig, smtp_record) == pytest.approx(0.8)

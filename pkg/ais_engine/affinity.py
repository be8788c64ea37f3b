"""
Affinity (matching) functions between antibodies and antigens.

Bit strings are compared by agreement count or by the longest run of
agreeing positions, real vectors by Euclidean distance and user profiles by
a penalised Pearson correlation. The matcher classes wrap these into the
boolean predicates negative selection censors with.
"""
import math
from itertools import groupby
from typing import Union

import numpy as np

from ais_engine.config import GenerationConfig, MatcherKind, PearsonConfig
from ais_engine.encoding import (
    BitString,
    PacketSignature,
    Pattern,
    Protocol,
    RealVector,
    UserProfile,
    packet_matches,
)
from ais_engine.errors import DimensionError, ParameterError, RepresentationError


def _check_lengths(a, b) -> None:
    if a.length != b.length:
        raise DimensionError(f"Length mismatch: {a.length} vs {b.length}")


def hamming_similarity(a: BitString, b: BitString) -> int:
    """Number of positions where ``a`` and ``b`` agree (length minus Hamming distance)."""
    _check_lengths(a, b)
    return int(np.count_nonzero(a.as_array() == b.as_array()))


def longest_contiguous_match(a: BitString, b: BitString) -> int:
    """Length of the longest run of consecutive agreeing positions."""
    _check_lengths(a, b)
    agree = (x == y for x, y in zip(a.bits, b.bits))
    return max(
        (sum(1 for _ in run) for same, run in groupby(agree) if same),
        default=0,
    )


def r_contiguous_match(a: BitString, b: BitString, r: int) -> bool:
    _check_lengths(a, b)
    if not 1 <= r <= a.length:
        raise ParameterError(f"r must lie in [1, {a.length}], got {r}")
    return longest_contiguous_match(a, b) >= r


def euclidean_distance(a: RealVector, b: RealVector) -> float:
    _check_lengths(a, b)
    return float(np.linalg.norm(a.as_array() - b.as_array()))


def pearson(u: UserProfile, v: UserProfile, cfg: PearsonConfig = PearsonConfig()) -> float:
    """
    Penalised Pearson correlation between two users.

    Sums run over co-voted items but each user's mean is taken over all of
    their votes. The raw value is scaled by min(1, n / threshold) for n
    co-voted items and clamped to [-1, 1]. No overlap, or a flat overlap for
    either user, gives 0.

    Args:
        u: First user profile.
        v: Second user profile.
        cfg: Overlap penalty settings.

    Returns:
        Correlation in [-1, 1].
    """
    overlap = sorted(u.votes.keys() & v.votes.keys())
    n = len(overlap)
    if n == 0:
        return cfg.zero_overlap_default

    du = [u.votes[item] - u.mean for item in overlap]
    dv = [v.votes[item] - v.mean for item in overlap]
    su = math.fsum(d * d for d in du)
    sv = math.fsum(d * d for d in dv)
    if su == 0.0 or sv == 0.0:
        return 0.0

    r = math.fsum(x * y for x, y in zip(du, dv)) / math.sqrt(su * sv)
    r *= min(1.0, n / cfg.overlap_penalty_threshold)
    return max(-1.0, min(1.0, r))


# --- matchers: boolean detector/record predicates ---

class Matcher:
    """Predicate deciding whether a detector pattern matches a record."""

    pattern_type: type = object

    def _check(self, detector: Pattern, record: Pattern) -> None:
        if not (isinstance(detector, self.pattern_type) and isinstance(record, self.pattern_type)):
            raise RepresentationError(
                f"{type(self).__name__} compares {self.pattern_type.__name__} patterns, "
                f"got {type(detector).__name__} and {type(record).__name__}"
            )

    def matches(self, detector: Pattern, record: Pattern) -> bool:
        raise NotImplementedError

    def affinity(self, detector: Pattern, record: Pattern) -> float:
        """Normalised closeness in [0, 1]; 1 means identical."""
        raise NotImplementedError

    def __call__(self, detector: Pattern, record: Pattern) -> bool:
        return self.matches(detector, record)


class ExactMatcher(Matcher):
    """Match on equality. Works for bit strings, vectors and signatures."""

    pattern_type = (BitString, RealVector, PacketSignature)

    def _check(self, detector, record):
        if type(detector) is not type(record):
            raise RepresentationError(
                f"Cannot compare {type(detector).__name__} with {type(record).__name__}"
            )

    def matches(self, detector, record) -> bool:
        self._check(detector, record)
        if isinstance(detector, PacketSignature):
            return detector.field_values() == record.field_values()
        if isinstance(detector, RealVector):
            return detector.values == record.values
        return detector == record

    def affinity(self, detector, record) -> float:
        self._check(detector, record)
        if isinstance(detector, BitString):
            return hamming_similarity(detector, record) / detector.length
        if isinstance(detector, PacketSignature):
            return _packet_affinity(detector, record)
        return 1.0 if self.matches(detector, record) else 0.0


class RContiguousMatcher(Matcher):
    pattern_type = BitString

    def __init__(self, r: int):
        if r < 1:
            raise ParameterError(f"r must be >= 1, got {r}")
        self.r = r

    def matches(self, detector: BitString, record: BitString) -> bool:
        self._check(detector, record)
        return r_contiguous_match(detector, record, self.r)

    def affinity(self, detector: BitString, record: BitString) -> float:
        self._check(detector, record)
        return longest_contiguous_match(detector, record) / detector.length

    def __repr__(self):
        return f"RContiguousMatcher(r={self.r})"


def _packet_affinity(detector: PacketSignature, record: PacketSignature) -> float:
    agreeing = 0
    for expected, actual in zip(detector.field_values(), record.field_values()):
        if expected is None or expected is Protocol.ANY or expected == actual:
            agreeing += 1
    return agreeing / len(detector.field_values())


class PacketFieldMatcher(Matcher):
    """Field-wise match with wildcards in the detector."""

    pattern_type = PacketSignature

    def matches(self, detector: PacketSignature, record: PacketSignature) -> bool:
        self._check(detector, record)
        return packet_matches(detector, record)

    def affinity(self, detector: PacketSignature, record: PacketSignature) -> float:
        self._check(detector, record)
        return _packet_affinity(detector, record)


class EuclideanMatcher(Matcher):
    """A detector covers every record closer than ``radius``."""

    pattern_type = RealVector

    def __init__(self, radius: float):
        if not radius > 0:
            raise ParameterError(f"radius must be > 0, got {radius}")
        self.radius = float(radius)

    def matches(self, detector: RealVector, record: RealVector) -> bool:
        self._check(detector, record)
        return euclidean_distance(detector, record) < self.radius

    def affinity(self, detector: RealVector, record: RealVector) -> float:
        self._check(detector, record)
        return max(0.0, 1.0 - euclidean_distance(detector, record) / self.radius)

    def __repr__(self):
        return f"EuclideanMatcher(radius={self.radius})"


AnyMatcher = Union[ExactMatcher, RContiguousMatcher, PacketFieldMatcher, EuclideanMatcher]


def build_matcher(cfg: GenerationConfig) -> AnyMatcher:
    """Construct the matcher a GenerationConfig selects."""
    if cfg.matcher is MatcherKind.EXACT:
        return ExactMatcher()
    if cfg.matcher is MatcherKind.R_CONTIGUOUS:
        return RContiguousMatcher(cfg.r)
    if cfg.matcher is MatcherKind.EUCLIDEAN:
        return EuclideanMatcher(cfg.radius)
    return PacketFieldMatcher()

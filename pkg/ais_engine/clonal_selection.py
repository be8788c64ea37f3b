"""
Clonal selection and somatic hypermutation.

Cells proliferate in proportion to how well they recognise the antigen and
each clone is mutated at a rate tied to that recognition. ``mutate`` is also
the hypermutation engine negative selection uses to rescue censored candidates.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from ais_engine.affinity import hamming_similarity
from ais_engine.config import CloneConfig
from ais_engine.encoding import (
    PACKET_FIELDS,
    BitString,
    PacketSignature,
    Pattern,
    RealVector,
    random_bitstring,
    sample_packet_field,
)
from ais_engine.errors import ParameterError

logger = logging.getLogger(__name__)

REAL_OFFSET_FRACTION = 0.1
RESAMPLE_WILDCARD_PROBABILITY = 0.5


def _check_unit(name: str, value: float) -> float:
    if not (math.isfinite(value) and 0.0 <= value <= 1.0):
        raise ParameterError(f"{name} must lie in [0, 1], got {value}")
    return float(value)


def clone_count(affinity: float, cfg: CloneConfig) -> int:
    """round-half-up(affinity * max_clones)."""
    affinity = _check_unit("affinity", affinity)
    return int(math.floor(affinity * cfg.max_clones + 0.5))


def mutation_rate(affinity: float, cfg: CloneConfig) -> float:
    """
    Per-position mutation probability for a clone of the given affinity.

    Linear between rate_min and rate_max. In inverse mode a perfect match
    mutates at rate_min; otherwise the schedule is reflected.
    """
    affinity = _check_unit("affinity", affinity)
    span = cfg.rate_max - cfg.rate_min
    if cfg.inverse:
        return cfg.rate_min + (1.0 - affinity) * span
    return cfg.rate_min + affinity * span


def mutate(pattern: Pattern, rate: float, rng: np.random.Generator) -> Pattern:
    """
    Somatic hypermutation of one pattern.

    Bit strings flip each bit with probability ``rate``. Real vectors move each
    selected position by a uniform offset of up to a tenth of the domain width
    (unit width without a domain), clamped to the domain. Packet signatures
    resample each selected field, wildcard included.
    """
    rate = _check_unit("rate", rate)

    if isinstance(pattern, BitString):
        bits = pattern.as_array()
        flip = rng.random(bits.size) < rate
        return BitString.from_array(np.where(flip, 1 - bits, bits))

    if isinstance(pattern, RealVector):
        values = pattern.as_array()
        chosen = rng.random(values.size) < rate
        low, high = pattern.domain if pattern.domain is not None else (0.0, 1.0)
        reach = REAL_OFFSET_FRACTION * (high - low)
        offsets = rng.uniform(-reach, reach, size=values.size)
        moved = np.where(chosen, values + offsets, values)
        if pattern.domain is not None:
            moved = np.clip(moved, low, high)
        return RealVector(tuple(float(v) for v in moved), pattern.domain)

    if isinstance(pattern, PacketSignature):
        fields = []
        for name, value in zip(PACKET_FIELDS, pattern.field_values()):
            if rng.random() < rate:
                value = sample_packet_field(name, rng, RESAMPLE_WILDCARD_PROBABILITY)
            fields.append(value)
        return PacketSignature(*fields)

    raise ParameterError(f"Cannot mutate {type(pattern).__name__}")


def clone_and_mutate(
    parent: Pattern, affinity: float, cfg: CloneConfig, rng: np.random.Generator
) -> List[Pattern]:
    """
    Clone ``parent`` clone_count(affinity) times and hypermutate each copy.

    Every clone gets its own child stream spawned from ``rng`` (index order),
    so the result does not depend on how clones are scheduled.
    """
    count = clone_count(affinity, cfg)
    rate = mutation_rate(affinity, cfg)
    if count == 0:
        return []
    return [mutate(parent, rate, child) for child in rng.spawn(count)]


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    best_affinity: float
    mean_affinity: float
    best_pattern: str


def _normalised(target: BitString, pattern: BitString) -> float:
    return hamming_similarity(target, pattern) / target.length


def _rank(target: BitString, pool) -> List[BitString]:
    return sorted(pool, key=lambda p: (-hamming_similarity(target, p), p.render()))


def _stats(generation: int, target: BitString, population: List[BitString]) -> GenerationStats:
    scores = [_normalised(target, p) for p in population]
    return GenerationStats(
        generation=generation,
        best_affinity=max(scores),
        mean_affinity=math.fsum(scores) / len(scores),
        best_pattern=population[0].render(),
    )


def initial_population(length: int, size: int, rng: np.random.Generator) -> List[BitString]:
    """``size`` distinct uniform bit strings."""
    if size < 1:
        raise ParameterError(f"population size must be >= 1, got {size}")
    if length < 63 and size > 2**length:
        raise ParameterError(f"Cannot draw {size} distinct strings of length {length}")
    seen = {}
    while len(seen) < size:
        candidate = random_bitstring(length, rng)
        seen.setdefault(candidate.render(), candidate)
    return list(seen.values())


def run_clonal_search(
    target: BitString,
    population_size: int,
    generations: int,
    cfg: CloneConfig,
    rng: Optional[np.random.Generator] = None,
    stop_at_target: bool = False,
) -> List[GenerationStats]:
    """
    Elitist clonal selection towards a target bit string.

    Each generation scores members by normalised Hamming affinity, clones and
    hypermutates them, and keeps the best ``population_size`` distinct
    patterns of parents plus clones (ties broken by rendered pattern).
    Returns one stats row per generation, generation 0 being the initial
    population.
    """
    if generations < 0:
        raise ParameterError(f"generations must be >= 0, got {generations}")
    rng = rng if rng is not None else np.random.default_rng(cfg.rng_seed)

    population = _rank(target, initial_population(target.length, population_size, rng))
    trace = [_stats(0, target, population)]

    for generation in range(1, generations + 1):
        pool = {p.render(): p for p in population}
        for member in population:
            for clone in clone_and_mutate(member, _normalised(target, member), cfg, rng):
                pool.setdefault(clone.render(), clone)
        population = _rank(target, pool.values())[:population_size]
        trace.append(_stats(generation, target, population))
        if stop_at_target and trace[-1].best_affinity == 1.0:
            break

    logger.info(
        "Clonal search finished after %d generations, best affinity %.4f",
        trace[-1].generation, trace[-1].best_affinity,
    )
    return trace

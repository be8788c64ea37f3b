"""
Negative selection: detector generation, monitoring and immunisation.

Candidates are drawn uniformly from the representation space and censored
against self; survivors mature and monitor a record stream. A detector whose
match count reaches its activation threshold raises an alert. An operator
(or ground-truth labels) may then promote it to a memory detector with an
unbounded lifetime and threshold 1.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.metrics import confusion_matrix

from ais_engine.affinity import AnyMatcher, build_matcher
from ais_engine.clonal_selection import mutate, mutation_rate
from ais_engine.config import CloneConfig, GenerationConfig
from ais_engine.encoding import (
    BitString,
    Label,
    PacketSignature,
    Pattern,
    RealVector,
    pattern_from_json,
    pattern_to_json,
    random_bitstring,
    random_packet_signature,
    random_real_vector,
)
from ais_engine.errors import (
    CoverageExhaustedError,
    InputError,
    InvalidRecordError,
    LifecycleError,
    ParameterError,
    RepresentationError,
)

logger = logging.getLogger(__name__)

CANDIDATE_BATCH = 64


class DetectorState(str, Enum):
    IMMATURE = "immature"
    MATURE = "mature"
    MEMORY = "memory"


@dataclass(frozen=True)
class Detector:
    """
    A non-self recogniser with its lifecycle bookkeeping.

    ``match_count`` counts matches since the last alert, ``age`` counts
    monitored records and ``activations`` counts alerts raised this session.
    Memory detectors never expire (``lifetime`` is None) and alert on every match.
    """

    pattern: Pattern
    state: DetectorState = DetectorState.MATURE
    match_count: int = 0
    activation_threshold: int = 2
    age: int = 0
    lifetime: Optional[int] = 1000
    activations: int = 0

    def __post_init__(self):
        object.__setattr__(self, "state", DetectorState(self.state))
        if self.activation_threshold < 1:
            raise ParameterError(f"activation_threshold must be >= 1, got {self.activation_threshold}")
        if self.match_count < 0 or self.age < 0 or self.activations < 0:
            raise ParameterError("Detector counters must be non-negative")
        if self.state is DetectorState.MEMORY:
            if self.lifetime is not None or self.activation_threshold != 1:
                raise LifecycleError("Memory detectors need unbounded lifetime and threshold 1")
        elif self.lifetime is not None and self.lifetime < 1:
            raise ParameterError(f"lifetime must be >= 1, got {self.lifetime}")

    @property
    def activated(self) -> bool:
        return self.activations > 0 or self.match_count >= self.activation_threshold

    @property
    def key(self) -> str:
        return _pattern_key(self.pattern)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "pattern": pattern_to_json(self.pattern),
            "state": self.state.value,
            "activation_threshold": self.activation_threshold,
            "lifetime": self.lifetime,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Detector":
        try:
            return cls(
                pattern=pattern_from_json(data["pattern"]),
                state=DetectorState(data.get("state", DetectorState.MATURE.value)),
                activation_threshold=int(data.get("activation_threshold", 2)),
                lifetime=data.get("lifetime"),
            )
        except (KeyError, TypeError) as e:
            raise InputError(f"Malformed detector entry: {data!r}") from e


def _pattern_key(pattern: Pattern) -> str:
    value = pattern_to_json(pattern)
    return value if isinstance(value, str) else ",".join(repr(v) for v in value)


class SelfSet:
    """Deduplicated collection of trusted, wildcard-free records of one representation."""

    def __init__(self, records: Iterable[Pattern]):
        unique: Dict[str, Pattern] = {}
        kind = None
        for record in records:
            if kind is None:
                kind = type(record)
            elif type(record) is not kind:
                raise RepresentationError(
                    f"Self set mixes {kind.__name__} and {type(record).__name__}"
                )
            if isinstance(record, PacketSignature) and record.has_wildcards:
                raise InvalidRecordError(f"Self record contains wildcards: {record.render()}")
            unique.setdefault(_pattern_key(record), record)
        self.records: Tuple[Pattern, ...] = tuple(unique.values())
        self.kind = kind

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __contains__(self, pattern: Pattern) -> bool:
        return any(_pattern_key(pattern) == _pattern_key(r) for r in self.records)


@dataclass(frozen=True)
class GenerationResult:
    detectors: Tuple[Detector, ...]
    attempts: int
    censored: int
    rescued: int


def censor(candidate: Pattern, self_set: SelfSet, matcher: AnyMatcher) -> bool:
    """True when the candidate survives, i.e. it matches no self record."""
    return not any(matcher(candidate, record) for record in self_set.records)


def _candidate_sampler(self_set: SelfSet, cfg: GenerationConfig):
    sample = self_set.records[0]
    if isinstance(sample, BitString):
        return lambda rng: random_bitstring(sample.length, rng)
    if isinstance(sample, RealVector):
        domain = sample.domain or (0.0, 1.0)
        return lambda rng: random_real_vector(sample.length, rng, domain)
    if isinstance(sample, PacketSignature):
        return lambda rng: random_packet_signature(rng, cfg.wildcard_probability)
    raise RepresentationError(f"Unsupported self representation {type(sample).__name__}")


def _rescue(
    candidate: Pattern,
    index: int,
    self_set: SelfSet,
    matcher: AnyMatcher,
    cfg: GenerationConfig,
) -> Optional[Pattern]:
    """Hypermutate a censored candidate until it survives or retries run out."""
    rng = np.random.default_rng([cfg.rng_seed, index])
    schedule = CloneConfig(
        max_clones=1,
        rate_min=cfg.censor_rate_min,
        rate_max=cfg.censor_rate_max,
        inverse=False,
    )
    for _ in range(cfg.max_mutation_retries):
        closeness = max(matcher.affinity(candidate, record) for record in self_set.records)
        candidate = mutate(candidate, mutation_rate(min(1.0, closeness), schedule), rng)
        if censor(candidate, self_set, matcher):
            return candidate
    return None


def run_generation(
    self_set: SelfSet,
    cfg: GenerationConfig,
    matcher: Optional[AnyMatcher] = None,
) -> GenerationResult:
    """
    Generate up to ``cfg.target_count`` mature detectors that match no self record.

    Candidates are drawn in fixed-size batches from one seeded stream, so a
    run with a larger target extends the detector list of a smaller one.
    Censoring may run on ``cfg.workers`` threads; results are consumed in
    candidate order. Censored candidates are optionally hypermutated, the
    mutation rate growing with their closeness to self.

    Raises:
        InputError: empty self set.
        CoverageExhaustedError: no candidate survived within max_attempts.
    """
    if len(self_set) == 0:
        raise InputError("Self set is empty")
    matcher = matcher or build_matcher(cfg)
    sample = _candidate_sampler(self_set, cfg)
    rng = np.random.default_rng(cfg.rng_seed)

    detectors: List[Detector] = []
    seen = set()
    attempts = censored = rescued = 0
    def check(candidate: Pattern) -> bool:
        return censor(candidate, self_set, matcher)

    executor = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    try:
        while len(detectors) < cfg.target_count and attempts < cfg.max_attempts:
            batch = [sample(rng) for _ in range(min(CANDIDATE_BATCH, cfg.max_attempts - attempts))]
            verdicts = list(executor.map(check, batch)) if executor else [check(c) for c in batch]

            for candidate, survives in zip(batch, verdicts):
                index = attempts
                attempts += 1
                if not survives:
                    censored += 1
                    if not cfg.mutate_instead_of_discard:
                        continue
                    candidate = _rescue(candidate, index, self_set, matcher, cfg)
                    if candidate is None:
                        continue
                    rescued += 1
                key = _pattern_key(candidate)
                if key in seen:
                    continue
                seen.add(key)
                detectors.append(
                    Detector(
                        pattern=candidate,
                        state=DetectorState.MATURE,
                        activation_threshold=cfg.activation_threshold,
                        lifetime=cfg.detector_lifetime,
                    )
                )
                if len(detectors) == cfg.target_count:
                    break
    finally:
        if executor:
            executor.shutdown()

    if not detectors:
        raise CoverageExhaustedError(
            f"No detector survived censoring in {attempts} attempts; self covers the candidate space"
        )
    if len(detectors) < cfg.target_count:
        logger.warning(
            "Generated %d of %d detectors before exhausting %d attempts",
            len(detectors), cfg.target_count, cfg.max_attempts,
        )
    logger.info(
        "Generated %d detectors in %d attempts (%d censored, %d rescued)",
        len(detectors), attempts, censored, rescued,
    )
    return GenerationResult(tuple(detectors), attempts, censored, rescued)


def generate_detectors(self_set: SelfSet, cfg: GenerationConfig) -> List[Detector]:
    return list(run_generation(self_set, cfg).detectors)


@dataclass(frozen=True)
class Alert:
    record_index: int
    detector_id: int


@dataclass(frozen=True)
class MonitorReport:
    """Alerts raised over a stream plus the detectors' state afterwards."""

    alerts: Tuple[Alert, ...] = ()
    retired: Tuple[int, ...] = ()
    detectors: Tuple[Detector, ...] = field(default_factory=tuple)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "alerts": [
                {"record_index": a.record_index, "detector_id": a.detector_id}
                for a in self.alerts
            ],
            "retired": list(self.retired),
        }

    def alerted_records(self) -> set:
        return {a.record_index for a in self.alerts}


def monitor(
    detectors: Sequence[Detector],
    stream: Sequence[Pattern],
    matcher: AnyMatcher,
) -> MonitorReport:
    """
    Run detectors over an ordered record stream.

    Detector ids are positions in ``detectors``. Each match increments the
    detector's count; reaching the threshold alerts and resets the count.
    Every detector ages by one per record. A mature detector is retired after
    the record on which its age reaches its lifetime; memory detectors never retire.
    """
    for detector_id, detector in enumerate(detectors):
        if detector.state is DetectorState.IMMATURE:
            raise LifecycleError(f"Detector {detector_id} is immature and cannot monitor")

    counts = [d.match_count for d in detectors]
    ages = [d.age for d in detectors]
    activations = [d.activations for d in detectors]
    active = list(range(len(detectors)))
    alerts: List[Alert] = []
    retired: List[int] = []

    for record_index, record in enumerate(stream):
        still_active = []
        for detector_id in active:
            detector = detectors[detector_id]
            if matcher(detector.pattern, record):
                counts[detector_id] += 1
                if counts[detector_id] >= detector.activation_threshold:
                    alerts.append(Alert(record_index, detector_id))
                    counts[detector_id] = 0
                    activations[detector_id] += 1
            ages[detector_id] += 1
            if (
                detector.state is DetectorState.MATURE
                and detector.lifetime is not None
                and ages[detector_id] >= detector.lifetime
            ):
                retired.append(detector_id)
            else:
                still_active.append(detector_id)
        active = still_active

    updated = tuple(
        replace(d, match_count=counts[i], age=ages[i], activations=activations[i])
        for i, d in enumerate(detectors)
    )
    logger.info(
        "Monitored %d records with %d detectors: %d alerts, %d retired",
        len(stream), len(detectors), len(alerts), len(retired),
    )
    return MonitorReport(tuple(alerts), tuple(retired), updated)


def promote(detector: Detector, operator_confirms: bool) -> Detector:
    """
    Apply the operator's verdict on an activated detector.

    Confirmation turns it into a memory detector; rejection resets its count.
    """
    if detector.state is DetectorState.IMMATURE:
        raise LifecycleError("Cannot promote an immature detector")
    if not detector.activated:
        raise LifecycleError("Only activated detectors can be promoted")
    if operator_confirms:
        return replace(
            detector,
            state=DetectorState.MEMORY,
            lifetime=None,
            activation_threshold=1,
            match_count=0,
        )
    return replace(detector, match_count=0)


def _is_nonself(label: Any) -> bool:
    if isinstance(label, Label):
        return label is Label.NONSELF
    if isinstance(label, (bool, np.bool_)):
        return bool(label)
    if isinstance(label, str):
        try:
            return Label(label.strip().lower()) is Label.NONSELF
        except ValueError:
            pass
    raise InputError(f"Unknown label {label!r}; expected self, nonself or a boolean")


def monitor_metrics(report: MonitorReport, labels: Sequence[Any]) -> Dict[str, float]:
    """
    Detection metrics for a labeled stream.

    A record counts as flagged when any detector alerted on it. Labels are
    ``Label`` values, their text forms or booleans (True for non-self).
    """
    if len(labels) == 0:
        return {
            "true_positives": 0,
            "false_positives": 0,
            "detection_rate": 0.0,
            "false_alarm_rate": 0.0,
        }
    flagged = report.alerted_records()
    y_true = [int(_is_nonself(label)) for label in labels]
    y_pred = [int(i in flagged) for i in range(len(labels))]
    tn, fp, fn, tp = confusion_matrix(y_true, y_pred, labels=[0, 1]).ravel()
    n_nonself = tp + fn
    n_self = tn + fp
    return {
        "true_positives": int(tp),
        "false_positives": int(fp),
        "detection_rate": float(tp / n_nonself) if n_nonself else 0.0,
        "false_alarm_rate": float(fp / n_self) if n_self else 0.0,
    }


def auto_confirm(report: MonitorReport, labels: Sequence[Any]) -> List[Detector]:
    """
    Promote activated detectors using ground truth in place of an operator.

    A detector is confirmed when at least one of its alerts fell on a
    non-self record. Detectors that never activated are returned unchanged.
    """
    confirmed = {
        a.detector_id for a in report.alerts
        if a.record_index < len(labels) and _is_nonself(labels[a.record_index])
    }
    return [
        promote(d, i in confirmed) if d.activated else d
        for i, d in enumerate(report.detectors)
    ]

"""
Shared antigen/antibody representations.

Antigens and antibodies are encoded the same way: bit strings, real vectors,
sparse user vote profiles, or packet signatures. Signatures used as detectors
may carry wildcards; observed records never do.
"""
import ipaddress
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from types import MappingProxyType
from typing import Any, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from ais_engine.errors import (
    InvalidRecordError,
    MalformedEncodingError,
    ParameterError,
)

WILDCARD = "*"
MIN_SCORE = 0
MAX_SCORE = 5
MAX_PORT = 65535
PACKET_FIELDS = ("protocol", "src_ip", "src_port", "dst_ip", "dst_port")


@dataclass(frozen=True)
class BitString:
    """Fixed-length binary pattern."""

    bits: Tuple[int, ...]

    def __post_init__(self):
        bits = tuple(self.bits)
        if not bits:
            raise MalformedEncodingError("Bit string must contain at least one bit", 0)
        for position, bit in enumerate(bits):
            if bit not in (0, 1):
                raise MalformedEncodingError(
                    f"Invalid bit {bit!r} at position {position}", position
                )
        object.__setattr__(self, "bits", tuple(int(b) for b in bits))

    @property
    def length(self) -> int:
        return len(self.bits)

    def as_array(self) -> np.ndarray:
        return np.fromiter(self.bits, dtype=np.int8, count=len(self.bits))

    @classmethod
    def from_array(cls, values: np.ndarray) -> "BitString":
        return cls(tuple(int(v) for v in values))

    def render(self) -> str:
        return "".join(str(b) for b in self.bits)

    def __str__(self) -> str:
        return self.render()


@dataclass(frozen=True)
class RealVector:
    """Fixed-length real-valued pattern with an optional (low, high) domain."""

    values: Tuple[float, ...]
    domain: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        if not values:
            raise MalformedEncodingError("Real vector must contain at least one value", 0)
        for position, value in enumerate(values):
            if not math.isfinite(value):
                raise MalformedEncodingError(
                    f"Non-finite value {value!r} at position {position}", position
                )
        object.__setattr__(self, "values", values)
        if self.domain is not None:
            low, high = (float(v) for v in self.domain)
            if not (math.isfinite(low) and math.isfinite(high) and low < high):
                raise ParameterError(f"Invalid domain {self.domain!r}")
            object.__setattr__(self, "domain", (low, high))

    @property
    def length(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


@dataclass(frozen=True, eq=True)
class UserProfile:
    """
    Sparse item -> score vote map for one user.

    Plays the antigen role (target user) and the antibody role (candidate
    neighbour). Scores are integers in [0, 5].
    """

    user_id: str
    votes: Mapping[str, int]

    def __post_init__(self):
        checked = {}
        for item_id, score in dict(self.votes).items():
            if isinstance(score, bool) or not isinstance(score, (int, np.integer)):
                raise MalformedEncodingError(
                    f"User {self.user_id}: score for {item_id!r} must be an integer, got {score!r}"
                )
            if not MIN_SCORE <= score <= MAX_SCORE:
                raise MalformedEncodingError(
                    f"User {self.user_id}: score {score} for {item_id!r} outside [0, 5]"
                )
            checked[str(item_id)] = int(score)
        object.__setattr__(self, "votes", MappingProxyType(checked))

    __hash__ = None  # votes is a mapping

    @cached_property
    def mean(self) -> float:
        """Average vote over all the user's votes (0.0 when there are none)."""
        if not self.votes:
            return 0.0
        return math.fsum(self.votes.values()) / len(self.votes)

    def without(self, item_ids) -> "UserProfile":
        hidden = set(item_ids)
        return UserProfile(
            self.user_id, {i: s for i, s in self.votes.items() if i not in hidden}
        )


class Protocol(str, Enum):
    TCP = "tcp"
    UDP = "udp"
    ICMP = "icmp"
    ANY = "any"


@dataclass(frozen=True)
class PacketSignature:
    """
    Connection signature ``protocol, src_ip, src_port, dst_ip, dst_port``.

    ``None`` in an address or port field (and ``Protocol.ANY``) is a wildcard.
    """

    protocol: Protocol
    src_ip: Optional[ipaddress.IPv4Address] = None
    src_port: Optional[int] = None
    dst_ip: Optional[ipaddress.IPv4Address] = None
    dst_port: Optional[int] = None

    def __post_init__(self):
        try:
            object.__setattr__(self, "protocol", Protocol(self.protocol))
        except ValueError as e:
            raise MalformedEncodingError(f"Unknown protocol {self.protocol!r}", 0) from e
        for position, name in ((1, "src_ip"), (3, "dst_ip")):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, _parse_ipv4(value, position))
        for position, name in ((2, "src_port"), (4, "dst_port")):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, _check_port(value, position))

    @property
    def has_wildcards(self) -> bool:
        return self.protocol is Protocol.ANY or any(
            getattr(self, name) is None for name in PACKET_FIELDS[1:]
        )

    def field_values(self) -> Tuple[Any, ...]:
        return tuple(getattr(self, name) for name in PACKET_FIELDS)

    def render(self) -> str:
        return render_packet(self)

    def __str__(self) -> str:
        return self.render()


Pattern = Union[BitString, RealVector, PacketSignature]


class Label(str, Enum):
    """Ground-truth class of an observed record."""

    SELF = "self"
    NONSELF = "nonself"


def _parse_ipv4(value: Any, position: int) -> ipaddress.IPv4Address:
    if isinstance(value, ipaddress.IPv4Address):
        return value
    if isinstance(value, ipaddress.IPv6Address):
        raise MalformedEncodingError("IPv6 addresses are not supported", position)
    try:
        return ipaddress.IPv4Address(value)
    except (ipaddress.AddressValueError, ValueError) as e:
        raise MalformedEncodingError(
            f"Invalid IPv4 address {value!r} in field {position}", position
        ) from e


def _check_port(value: Any, position: int) -> int:
    if isinstance(value, bool):
        raise MalformedEncodingError(f"Invalid port {value!r} in field {position}", position)
    try:
        port = int(value)
    except (TypeError, ValueError) as e:
        raise MalformedEncodingError(
            f"Invalid port {value!r} in field {position}", position
        ) from e
    if port != value and not isinstance(value, str):
        raise MalformedEncodingError(f"Invalid port {value!r} in field {position}", position)
    if not 0 <= port <= MAX_PORT:
        raise MalformedEncodingError(
            f"Port {port} outside [0, {MAX_PORT}] in field {position}", position
        )
    return port


def parse_bitstring(text: str) -> BitString:
    """Decode ``'10010'`` into a BitString, one bit per character."""
    if not text:
        raise MalformedEncodingError("Bit string text is empty", 0)
    bits = []
    for position, char in enumerate(text):
        if char not in "01":
            raise MalformedEncodingError(
                f"Invalid character {char!r} at position {position}", position
            )
        bits.append(int(char))
    return BitString(tuple(bits))


def render_bitstring(bits: BitString) -> str:
    return bits.render()


def parse_packet(text: Union[str, Sequence[str]], allow_wildcards: bool = True) -> PacketSignature:
    """
    Decode ``protocol,src_ip,src_port,dst_ip,dst_port``.

    ``*`` is a wildcard in any field; ``any`` is also accepted as protocol wildcard.
    """
    fields = [f.strip() for f in (text.split(",") if isinstance(text, str) else text)]
    if len(fields) != len(PACKET_FIELDS):
        raise MalformedEncodingError(
            f"Packet signature needs {len(PACKET_FIELDS)} fields, got {len(fields)}"
        )
    protocol_text = fields[0].lower()
    if protocol_text == WILDCARD:
        protocol_text = Protocol.ANY.value
    values: List[Any] = [protocol_text]
    for raw in fields[1:]:
        values.append(None if raw == WILDCARD else raw)

    signature = PacketSignature(*values)
    if not allow_wildcards and signature.has_wildcards:
        position = next(
            i for i, v in enumerate(signature.field_values())
            if v is None or v is Protocol.ANY
        )
        raise InvalidRecordError(f"Wildcard not allowed in field {position} of a record")
    return signature


def render_packet(sig: PacketSignature) -> str:
    parts = []
    for value in sig.field_values():
        if value is None:
            parts.append(WILDCARD)
        elif isinstance(value, Protocol):
            parts.append(WILDCARD if value is Protocol.ANY else value.value)
        else:
            parts.append(str(value))
    return ",".join(parts)


def packet_matches(sig: PacketSignature, record: PacketSignature) -> bool:
    """True iff every non-wildcard field of ``sig`` equals the record's field."""
    if record.has_wildcards:
        raise InvalidRecordError(f"Observed record contains wildcards: {render_packet(record)}")
    if sig.protocol is not Protocol.ANY and sig.protocol is not record.protocol:
        return False
    for name in PACKET_FIELDS[1:]:
        expected = getattr(sig, name)
        if expected is not None and expected != getattr(record, name):
            return False
    return True


def pattern_to_json(pattern: Pattern) -> Union[str, List[float]]:
    if isinstance(pattern, BitString):
        return pattern.render()
    if isinstance(pattern, PacketSignature):
        return pattern.render()
    return list(pattern.values)


def pattern_from_json(value: Union[str, Sequence[float]]) -> Pattern:
    if isinstance(value, str):
        return parse_packet(value) if "," in value else parse_bitstring(value)
    return RealVector(tuple(value))


# --- uniform samplers over the representation spaces ---

def random_bitstring(length: int, rng: np.random.Generator) -> BitString:
    if length < 1:
        raise ParameterError(f"Bit string length must be >= 1, got {length}")
    return BitString.from_array(rng.integers(0, 2, size=length))


def random_real_vector(
    length: int, rng: np.random.Generator, domain: Tuple[float, float] = (0.0, 1.0)
) -> RealVector:
    low, high = domain
    return RealVector(tuple(float(v) for v in rng.uniform(low, high, size=length)), domain)


def sample_packet_field(name: str, rng: np.random.Generator, wildcard_probability: float) -> Any:
    """Draw one packet field: wildcard with the given probability, else uniform."""
    if name == "protocol":
        protocols = list(Protocol)
        return protocols[int(rng.integers(len(protocols)))]
    if rng.random() < wildcard_probability:
        return None
    if name.endswith("_ip"):
        return ipaddress.IPv4Address(int(rng.integers(0, 2**32)))
    return int(rng.integers(0, MAX_PORT + 1))


def random_packet_signature(
    rng: np.random.Generator, wildcard_probability: float = 0.5
) -> PacketSignature:
    return PacketSignature(
        *(sample_packet_field(name, rng, wildcard_probability) for name in PACKET_FIELDS)
    )

"""
Data loading, saving and synthetic fixtures for the two pipelines.

Ratings files are ``user_id,item_id,rating``; traffic files are
``protocol,src_ip,src_port,dst_ip,dst_port[,label]``; bit-pattern files are
``pattern[,label]``. Errors name the 1-based file line (header is line 1).
"""
import ipaddress
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ais_engine.encoding import (
    PACKET_FIELDS,
    BitString,
    Label,
    PacketSignature,
    Pattern,
    Protocol,
    UserProfile,
    parse_bitstring,
    parse_packet,
    render_packet,
)
from ais_engine.errors import (
    DataFileError,
    DuplicateRowError,
    InputError,
    MalformedEncodingError,
    ParameterError,
    ScoreRangeError,
    UnknownLabelError,
    WildcardInRecordError,
)
from ais_engine.reports import write_csv

logger = logging.getLogger(__name__)

RATINGS_COLUMNS = ["user_id", "item_id", "rating"]
TRAFFIC_COLUMNS = list(PACKET_FIELDS)
PATTERN_COLUMNS = ["pattern"]
LABEL_COLUMN = "label"
FIRST_DATA_LINE = 2
_INTEGER = re.compile(r"^[+-]?\d+$")


def _read_frame(path: Union[str, Path]) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise DataFileError(f"File not found: {path}")
    try:
        frame = pd.read_csv(
            path, dtype=str, keep_default_na=False, skipinitialspace=True, index_col=False
        )
    except pd.errors.EmptyDataError as e:
        raise DataFileError(f"{path} is empty", 1) from e
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise DataFileError(f"Cannot parse {path}: {e}") from e
    frame.columns = [str(c).strip() for c in frame.columns]
    return frame.fillna("")


def _rows(frame: pd.DataFrame):
    for offset, row in enumerate(frame.itertuples(index=False, name=None)):
        yield offset + FIRST_DATA_LINE, [str(v).strip() for v in row]


# --- ratings ---

class RatingsTable:
    """Votes indexed by user. Row order is preserved for round trips."""

    def __init__(self, frame: pd.DataFrame):
        frame = frame.loc[:, RATINGS_COLUMNS].reset_index(drop=True)
        frame = frame.astype({"user_id": str, "item_id": str, "rating": int})
        if frame.empty:
            raise InputError("Ratings table has no votes")
        if frame.duplicated(subset=["user_id", "item_id"]).any():
            raise InputError("Ratings table has duplicate (user_id, item_id) pairs")
        self.frame = frame
        self._profiles: Optional[Dict[str, UserProfile]] = None

    @classmethod
    def from_profiles(cls, profiles: Sequence[UserProfile]) -> "RatingsTable":
        rows = [
            (p.user_id, item_id, score)
            for p in profiles
            for item_id, score in p.votes.items()
        ]
        return cls(pd.DataFrame(rows, columns=RATINGS_COLUMNS))

    @property
    def profiles(self) -> Dict[str, UserProfile]:
        """user_id -> UserProfile, users in order of first appearance."""
        if self._profiles is None:
            votes: Dict[str, Dict[str, int]] = {}
            for user_id, item_id, rating in self.frame.itertuples(index=False, name=None):
                votes.setdefault(user_id, {})[item_id] = int(rating)
            self._profiles = {u: UserProfile(u, v) for u, v in votes.items()}
        return self._profiles

    @property
    def users(self) -> List[str]:
        return list(self.profiles)

    def profile(self, user_id: str) -> UserProfile:
        try:
            return self.profiles[user_id]
        except KeyError:
            raise InputError(f"Unknown user: {user_id}") from None

    def __len__(self) -> int:
        return len(self.frame)

    def __eq__(self, other) -> bool:
        return isinstance(other, RatingsTable) and self.frame.equals(other.frame)


def load_ratings(path: Union[str, Path]) -> RatingsTable:
    """
    Parse a ratings CSV.

    Raises:
        DataFileError: missing file, bad header or malformed row.
        DuplicateRowError: a (user_id, item_id) pair appears twice.
        ScoreRangeError: rating outside [0, 5].
    """
    frame = _read_frame(path)
    if list(frame.columns) != RATINGS_COLUMNS:
        raise DataFileError(
            f"Expected header {','.join(RATINGS_COLUMNS)}, got {','.join(frame.columns)}", 1
        )

    rows = []
    seen: Dict[Tuple[str, str], int] = {}
    for line, (user_id, item_id, rating) in _rows(frame):
        if not user_id or not item_id or not rating:
            raise DataFileError("Missing field", line)
        if not _INTEGER.match(rating):
            raise DataFileError(f"Rating {rating!r} is not an integer", line)
        score = int(rating)
        if not 0 <= score <= 5:
            raise ScoreRangeError(f"Rating {score} outside [0, 5]", line)
        pair = (user_id, item_id)
        if pair in seen:
            raise DuplicateRowError(
                f"Duplicate vote of {user_id} for {item_id} (first on row {seen[pair]})", line
            )
        seen[pair] = line
        rows.append((user_id, item_id, score))

    if not rows:
        raise DataFileError(f"{path} contains no ratings")
    logger.info("Loaded %d ratings from %s", len(rows), path)
    return RatingsTable(pd.DataFrame(rows, columns=RATINGS_COLUMNS))


def save_ratings(table: RatingsTable, path: Union[str, Path]) -> Path:
    return write_csv(path, table.frame)


# --- traffic and bit-pattern streams ---

@dataclass(frozen=True)
class TrafficLog:
    """Ordered wildcard-free records with optional ground-truth labels."""

    records: Tuple[Pattern, ...]
    labels: Tuple[Optional[Label], ...] = field(default=())

    def __post_init__(self):
        records = tuple(self.records)
        labels = tuple(self.labels) if self.labels else (None,) * len(records)
        if len(labels) != len(records):
            raise InputError("records and labels differ in length")
        object.__setattr__(self, "records", records)
        object.__setattr__(self, "labels", labels)

    @property
    def labeled(self) -> bool:
        return bool(self.labels) and all(label is not None for label in self.labels)

    @property
    def has_labels(self) -> bool:
        return any(label is not None for label in self.labels)

    def __len__(self) -> int:
        return len(self.records)


def _parse_label(text: str, line: int) -> Optional[Label]:
    if text == "":
        return None
    try:
        return Label(text.lower())
    except ValueError:
        raise UnknownLabelError(f"Unknown label {text!r}", line) from None


def _split_header(frame: pd.DataFrame, expected: List[str]) -> bool:
    columns = list(frame.columns)
    if columns == expected:
        return False
    if columns == expected + [LABEL_COLUMN]:
        return True
    raise DataFileError(
        f"Expected header {','.join(expected)}[,{LABEL_COLUMN}], got {','.join(columns)}", 1
    )


def load_traffic(path: Union[str, Path]) -> TrafficLog:
    """
    Parse a traffic CSV of concrete packet records.

    Raises:
        DataFileError: missing file, bad header, malformed address or port.
        WildcardInRecordError: a record uses ``*``.
        UnknownLabelError: label other than self/nonself.
    """
    frame = _read_frame(path)
    with_labels = _split_header(frame, TRAFFIC_COLUMNS)

    records, labels = [], []
    for line, values in _rows(frame):
        fields = values[: len(TRAFFIC_COLUMNS)]
        if any(v == "*" or (i == 0 and v.lower() == "any") for i, v in enumerate(fields)):
            raise WildcardInRecordError("Wildcard in observed record", line)
        try:
            record = parse_packet(fields, allow_wildcards=False)
        except MalformedEncodingError as e:
            raise DataFileError(str(e), line) from e
        records.append(record)
        labels.append(_parse_label(values[-1], line) if with_labels else None)

    logger.info("Loaded %d traffic records from %s", len(records), path)
    return TrafficLog(tuple(records), tuple(labels))


def load_bit_patterns(path: Union[str, Path]) -> TrafficLog:
    """Parse a ``pattern[,label]`` CSV of bit strings of one length."""
    frame = _read_frame(path)
    with_labels = _split_header(frame, PATTERN_COLUMNS)

    records, labels = [], []
    for line, values in _rows(frame):
        try:
            record = parse_bitstring(values[0])
        except MalformedEncodingError as e:
            raise DataFileError(str(e), line) from e
        if records and record.length != records[0].length:
            raise DataFileError(
                f"Pattern length {record.length} differs from {records[0].length}", line
            )
        records.append(record)
        labels.append(_parse_label(values[-1], line) if with_labels else None)

    logger.info("Loaded %d bit patterns from %s", len(records), path)
    return TrafficLog(tuple(records), tuple(labels))


def load_records(path: Union[str, Path]) -> TrafficLog:
    """Load a traffic or bit-pattern file, chosen by its header."""
    path = Path(path)
    if not path.is_file():
        raise DataFileError(f"File not found: {path}")
    with open(path, "r", encoding="utf-8") as handle:
        first = handle.readline().strip().split(",")[0].strip()
    if first == PATTERN_COLUMNS[0]:
        return load_bit_patterns(path)
    return load_traffic(path)


def save_traffic(log: TrafficLog, path: Union[str, Path]) -> Path:
    if log.records and isinstance(log.records[0], BitString):
        frame = pd.DataFrame({"pattern": [r.render() for r in log.records]})
    else:
        frame = pd.DataFrame(
            [render_packet(r).split(",") for r in log.records], columns=TRAFFIC_COLUMNS
        )
    if log.has_labels:
        frame[LABEL_COLUMN] = [label.value if label else "" for label in log.labels]
    return write_csv(path, frame)


# --- synthetic fixtures ---

def _id_width(count: int) -> int:
    return max(3, len(str(count)))


def synth_ratings(
    users: int,
    items: int,
    density: float,
    seed: int,
    groups: int = 2,
    noise: int = 1,
) -> RatingsTable:
    """
    Block-structured synthetic ratings.

    Users are split round-robin into taste groups. Even groups draw item
    means uniformly from 0..5 and each odd group mirrors the group before it
    (5 - mean), so neighbouring groups have opposite tastes. Votes are the
    group mean plus integer noise in [-noise, noise], clamped to [0, 5];
    every user votes on at least one item.
    """
    if users < 1 or items < 1:
        raise ParameterError("users and items must be >= 1")
    if not 0.0 < density <= 1.0:
        raise ParameterError(f"density must lie in (0, 1], got {density}")
    if groups < 1 or noise < 0:
        raise ParameterError("groups must be >= 1 and noise >= 0")

    rng = np.random.default_rng(seed)
    means = np.zeros((groups, items), dtype=int)
    for g in range(groups):
        means[g] = 5 - means[g - 1] if g % 2 else rng.integers(0, 6, size=items)

    uw, iw = _id_width(users), _id_width(items)
    item_ids = [f"i{j:0{iw}d}" for j in range(1, items + 1)]
    rows = []
    for u in range(users):
        voted = rng.random(items) < density
        if not voted.any():
            voted[rng.integers(items)] = True
        scores = np.clip(means[u % groups] + rng.integers(-noise, noise + 1, size=items), 0, 5)
        user_id = f"u{u + 1:0{uw}d}"
        rows.extend(
            (user_id, item_ids[j], int(scores[j])) for j in np.flatnonzero(voted)
        )
    return RatingsTable(pd.DataFrame(rows, columns=RATINGS_COLUMNS))


@dataclass(frozen=True)
class TrafficProfile:
    """What normal traffic looks like: allowed services and address ranges."""

    services: Tuple[Tuple[Protocol, int], ...] = (
        (Protocol.TCP, 25),
        (Protocol.TCP, 80),
        (Protocol.TCP, 443),
        (Protocol.UDP, 53),
    )
    src_network: ipaddress.IPv4Network = ipaddress.IPv4Network("113.112.0.0/16")
    dst_network: ipaddress.IPv4Network = ipaddress.IPv4Network("108.200.111.0/24")

    def allows(self, record: PacketSignature) -> bool:
        return (
            (record.protocol, record.dst_port) in self.services
            and record.src_ip in self.src_network
            and record.dst_ip in self.dst_network
        )


def _host_in(network: ipaddress.IPv4Network, rng: np.random.Generator) -> ipaddress.IPv4Address:
    return network.network_address + int(rng.integers(0, network.num_addresses))


def _host_outside(network: ipaddress.IPv4Network, rng: np.random.Generator) -> ipaddress.IPv4Address:
    while True:
        address = ipaddress.IPv4Address(int(rng.integers(0, 2**32)))
        if address not in network:
            return address


def _self_record(profile: TrafficProfile, rng: np.random.Generator) -> PacketSignature:
    protocol, port = profile.services[int(rng.integers(len(profile.services)))]
    return PacketSignature(
        protocol,
        _host_in(profile.src_network, rng),
        int(rng.integers(1024, 65536)),
        _host_in(profile.dst_network, rng),
        port,
    )


def _attack_record(profile: TrafficProfile, rng: np.random.Generator) -> PacketSignature:
    base = _self_record(profile, rng)
    violation = int(rng.integers(3))
    if violation == 0:
        concrete = [p for p in Protocol if p is not Protocol.ANY]
        while True:
            protocol = concrete[int(rng.integers(len(concrete)))]
            port = int(rng.integers(0, 65536))
            if (protocol, port) not in profile.services:
                return PacketSignature(protocol, base.src_ip, base.src_port, base.dst_ip, port)
    if violation == 1:
        return PacketSignature(
            base.protocol, _host_outside(profile.src_network, rng), base.src_port,
            base.dst_ip, base.dst_port,
        )
    return PacketSignature(
        base.protocol, base.src_ip, base.src_port,
        _host_outside(profile.dst_network, rng), base.dst_port,
    )


def synth_traffic(
    profile: TrafficProfile,
    n_self: int,
    n_attack: int,
    seed: int,
) -> TrafficLog:
    """
    Labeled synthetic traffic: self rows follow the profile, attack rows
    break it in exactly one of service, source network or destination
    network. Rows are shuffled with the same seed.
    """
    if not profile.services:
        raise ParameterError("Traffic profile needs at least one service")
    if n_self < 0 or n_attack < 0 or n_self + n_attack < 1:
        raise ParameterError("n_self and n_attack must be >= 0 with at least one row")

    rng = np.random.default_rng(seed)
    rows = [(_self_record(profile, rng), Label.SELF) for _ in range(n_self)]
    rows += [(_attack_record(profile, rng), Label.NONSELF) for _ in range(n_attack)]
    order = rng.permutation(len(rows))
    return TrafficLog(
        tuple(rows[i][0] for i in order),
        tuple(rows[i][1] for i in order),
    )

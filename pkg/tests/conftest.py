"""
Pytest configuration for the immune engine tests.
"""
import itertools
import os
import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

import ais_engine.config  # noqa: E402,F401  loads .env once
from ais_engine.encoding import BitString, UserProfile, parse_packet  # noqa: E402

# a developer .env must not change seeded expectations
os.environ.pop("AIS_SEED", None)


def all_bitstrings(length: int):
    """Every bit string of the given length, in lexicographic order."""
    return [BitString(bits) for bits in itertools.product((0, 1), repeat=length)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def movie_profiles():
    """Five users over six films, two opposite tastes."""
    return [
        UserProfile("alice", {"f1": 5, "f2": 4, "f3": 1, "f4": 2}),
        UserProfile("bob", {"f1": 4, "f2": 5, "f3": 2, "f5": 4}),
        UserProfile("carol", {"f1": 1, "f2": 2, "f3": 5, "f4": 4, "f6": 1}),
        UserProfile("dave", {"f1": 5, "f2": 5, "f3": 1, "f5": 5, "f6": 3}),
        UserProfile("erin", {"f2": 1, "f3": 4, "f4": 5, "f5": 2, "f6": 4}),
    ]


@pytest.fixture
def smtp_record():
    return parse_packet("tcp,113.112.255.254,4912,108.200.111.12,25", allow_wildcards=False)


@pytest.fixture
def ratings_csv(tmp_path):
    path = tmp_path / "ratings.csv"
    path.write_text(
        "user_id,item_id,rating\n"
        "u1,i1,5\nu1,i2,4\nu1,i3,1\n"
        "u2,i1,4\nu2,i2,5\nu2,i3,2\nu2,i4,5\n"
        "u3,i1,1\nu3,i2,2\nu3,i3,5\nu3,i4,1\n"
        "u4,i1,5\nu4,i2,5\nu4,i3,1\nu4,i5,4\n",
        encoding="utf-8",
    )
    return path

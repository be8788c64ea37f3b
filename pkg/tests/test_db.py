"""
Tests for the TinyDB memory-detector store.
"""
import pytest

from ais_engine.db import MemoryDetectorDB, load_memory_detectors, store_memory_detectors
from ais_engine.encoding import parse_bitstring, parse_packet
from ais_engine.errors import LifecycleError
from ais_engine.negative_selection import Detector, DetectorState


def memory(pattern):
    return Detector(pattern, state=DetectorState.MEMORY, activation_threshold=1, lifetime=None)


@pytest.fixture
def db(tmp_path):
    store = MemoryDetectorDB(str(tmp_path / "db" / "memory.json"))
    yield store
    store.close()


class TestMemoryDetectorDB:
    def test_upsert_and_get(self, db):
        d = memory(parse_packet("tcp,*,*,108.200.111.12,22"))
        db.upsert_detector(d)
        assert db.get_detector(d.key) == d
        assert db.get_detector("missing") is None

    def test_upsert_is_idempotent(self, db):
        d = memory(parse_bitstring("0110"))
        db.upsert_detector(d)
        db.upsert_detector(d)
        assert db.get_all_detectors() == [d]

    def test_only_memory_detectors(self, db):
        with pytest.raises(LifecycleError):
            db.upsert_detector(Detector(parse_bitstring("01")))

    def test_sorted_by_key(self, db):
        for text in ("11", "00", "10"):
            db.upsert_detector(memory(parse_bitstring(text)))
        assert [d.key for d in db.get_all_detectors()] == ["00", "10", "11"]

    def test_delete(self, db):
        d = memory(parse_bitstring("1"))
        db.upsert_detector(d)
        assert db.delete_detector(d.key) is True
        assert db.delete_detector(d.key) is False


class TestStoreHelpers:
    def test_store_skips_non_memory(self, tmp_path):
        path = str(tmp_path / "memory.json")
        detectors = [memory(parse_bitstring("01")), Detector(parse_bitstring("10"))]
        assert store_memory_detectors(detectors, path) == 1
        assert load_memory_detectors(path) == [detectors[0]]

    def test_survives_reopen(self, tmp_path):
        path = str(tmp_path / "memory.json")
        store_memory_detectors([memory(parse_bitstring("111"))], path)
        store_memory_detectors([memory(parse_bitstring("000"))], path)
        assert [d.key for d in load_memory_detectors(path)] == ["000", "111"]

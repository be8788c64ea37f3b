"""
Memory detector store.
Uses TinyDB so immunisation survives across monitoring sessions.
"""
import os
from pathlib import Path
from typing import Dict, Iterable, List, Optional

from dotenv import load_dotenv
from tinydb import Query, TinyDB

from ais_engine.errors import LifecycleError
from ais_engine.negative_selection import Detector, DetectorState

load_dotenv()

DEFAULT_DB_PATH = os.getenv("AIS_MEMORY_DB", "data/memory_detectors.json")


class MemoryDetectorDB:
    """
    TinyDB wrapper for memory detectors with upsert functionality.
    Records are keyed by rendered pattern, so storing the same detector twice
    updates it rather than duplicating it.
    """

    def __init__(self, db_path: str = DEFAULT_DB_PATH):
        Path(db_path).parent.mkdir(parents=True, exist_ok=True)
        self.db = TinyDB(db_path, sort_keys=True, indent=2)
        self.table = self.db.table("memory_detectors")

    def upsert_detector(self, detector: Detector) -> None:
        """
        Store one memory detector.

        Raises:
            LifecycleError: the detector is not in the memory state.
        """
        if detector.state is not DetectorState.MEMORY:
            raise LifecycleError(f"Only memory detectors are stored, got {detector.state.value}")
        record = dict(detector.to_dict(), key=detector.key)
        Memory = Query()
        self.table.upsert(record, Memory.key == detector.key)

    def get_detector(self, key: str) -> Optional[Detector]:
        Memory = Query()
        result = self.table.search(Memory.key == key)
        return _to_detector(result[0]) if result else None

    def get_all_detectors(self) -> List[Detector]:
        return [_to_detector(r) for r in sorted(self.table.all(), key=lambda r: r["key"])]

    def delete_detector(self, key: str) -> bool:
        Memory = Query()
        return bool(self.table.remove(Memory.key == key))

    def close(self) -> None:
        self.db.close()


def _to_detector(record: Dict) -> Detector:
    return Detector.from_dict({k: v for k, v in record.items() if k != "key"})


def load_memory_detectors(db_path: str = DEFAULT_DB_PATH) -> List[Detector]:
    db = MemoryDetectorDB(db_path)
    try:
        return db.get_all_detectors()
    finally:
        db.close()


def store_memory_detectors(detectors: Iterable[Detector], db_path: str = DEFAULT_DB_PATH) -> int:
    """Upsert every memory detector in ``detectors``; returns how many were stored."""
    db = MemoryDetectorDB(db_path)
    stored = 0
    try:
        for detector in detectors:
            if detector.state is DetectorState.MEMORY:
                db.upsert_detector(detector)
                stored += 1
    finally:
        db.close()
    return stored

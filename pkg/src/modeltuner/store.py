"""Append-only JSONL store of generation records with a completed-key sidecar."""

import json
import logging
import os
import threading
from dataclasses import asdict, dataclass
from typing import Callable, Dict, Iterable, List, Optional, Tuple

from .errors import StorageFailure

log = logging.getLogger(__name__)

STATUS_OK = "ok"
STATUS_NO_MODEL = "no_model_found"
STATUS_BACKEND_ERROR = "backend_error"
STATUSES = (STATUS_OK, STATUS_NO_MODEL, STATUS_BACKEND_ERROR)

TIMESTAMP_FIELDS = ("started_at", "finished_at")

CellKey = Tuple[str, str, str, int]


@dataclass
class GenerationRecord:
    plan_id: str
    domain_id: str
    strategy: str
    config_id: str
    rep_index: int
    seed: int
    raw_digest: Optional[str]
    model_text: Optional[str]
    scores: Optional[Dict[str, float]]
    status: str
    started_at: str = ""
    finished_at: str = ""

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown record status {self.status!r}")
        if (self.scores is not None) != (self.status == STATUS_OK):
            raise ValueError("scores must be present exactly when status is ok")

    @property
    def key(self) -> CellKey:
        return (self.domain_id, self.strategy, self.config_id, self.rep_index)

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False)

    @classmethod
    def from_dict(cls, obj: dict) -> "GenerationRecord":
        return cls(**obj)


def key_text(key: CellKey) -> str:
    return json.dumps(list(key), ensure_ascii=False)


def read_records(path) -> List[GenerationRecord]:
    records = []
    if not os.path.exists(path):
        return records
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            records.append(GenerationRecord.from_dict(json.loads(line)))
        except (json.JSONDecodeError, TypeError, ValueError):
            if lineno >= len(lines) - 1:
                log.warning("ignoring torn final record in %s", path)
                continue
            raise StorageFailure(f"{path}:{lineno}: unreadable record")
    return records


class RecordStore:
    """Records keyed by (domain, strategy, config, repetition); first write wins."""

    def __init__(self, path):
        self.path = os.fspath(path)
        self.index_path = self.path + ".idx"
        self._lock = threading.Lock()
        parent = os.path.dirname(os.path.abspath(self.path))
        try:
            os.makedirs(parent, exist_ok=True)
            self.records: Dict[CellKey, GenerationRecord] = {}
            for rec in read_records(self.path):
                self.records.setdefault(rec.key, rec)
            self._drop_torn_tail()
        except OSError as exc:
            raise StorageFailure(f"cannot open record store {self.path}: {exc}") from exc

    def _drop_torn_tail(self) -> None:
        if not os.path.exists(self.path):
            return
        with open(self.path, "rb+") as fh:
            data = fh.read()
            if data and not data.endswith(b"\n"):
                cut = data.rfind(b"\n") + 1
                fh.truncate(cut)

    def __len__(self):
        return len(self.records)

    def __contains__(self, key: CellKey):
        return key in self.records

    def append(self, rec: GenerationRecord) -> bool:
        with self._lock:
            if rec.key in self.records:
                return False
            try:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(rec.to_json() + "\n")
                with open(self.index_path, "a", encoding="utf-8") as fh:
                    fh.write(key_text(rec.key) + "\n")
            except OSError as exc:
                raise StorageFailure(f"cannot append to {self.path}: {exc}") from exc
            self.records[rec.key] = rec
            return True

    def compact(self, sort_key: Optional[Callable[[GenerationRecord], object]] = None) -> None:
        """Rewrite the store in a canonical order and rebuild the sidecar index."""
        with self._lock:
            recs = sorted(self.records.values(), key=sort_key or (lambda r: r.key))
            try:
                for target, lines in (
                    (self.path, [r.to_json() for r in recs]),
                    (self.index_path, [key_text(r.key) for r in recs]),
                ):
                    tmp = target + ".tmp"
                    with open(tmp, "w", encoding="utf-8") as fh:
                        fh.write("".join(line + "\n" for line in lines))
                    os.replace(tmp, target)
            except OSError as exc:
                raise StorageFailure(f"cannot rewrite {self.path}: {exc}") from exc

    def all(self) -> List[GenerationRecord]:
        return list(self.records.values())


def strip_timestamps(records: Iterable[GenerationRecord]) -> List[dict]:
    out = []
    for r in records:
        d = asdict(r)
        for f in TIMESTAMP_FIELDS:
            d.pop(f)
        out.append(d)
    return out

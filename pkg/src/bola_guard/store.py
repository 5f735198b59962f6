"""Durable, crash-consistent journal stores.

The journal is newline-delimited JSON, one record per line: either a value
upsert or a tombstone ``{"op": "del", "id": ..., "path": ...}``. Opening a
store replays the journal; a partial trailing record (torn write) is dropped
with a warning and the file is repaired, while damage before the final record
raises :class:`CorruptJournalError`. Appends are flushed and fsynced before
they are applied in memory, so an acknowledged write survives a crash.

Single writer, any number of readers: mutations take the store lock and
install fully-built immutable entries, so readers never observe a torn value.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from pathlib import Path
from typing import Generic, Iterator, TypeVar

from .acl import AccessControlEntry
from .errors import CorruptJournalError, NoSuchObjectError, StorageError

logger = logging.getLogger(__name__)

T = TypeVar("T")


class JournalStore(Generic[T]):
    """Append-only NDJSON store keyed by (path, id). Subclasses fix the value type."""

    def __init__(self, location: str | Path):
        self.location = Path(location)
        self._lock = threading.Lock()
        self._entries: dict[tuple[str, int], T] = {}
        self._max_ids: dict[str, int] = {}
        self.journal_position = 0
        self._fh = None
        self._replay()
        self._fh = open(self.location, "a", encoding="utf-8")

    # Subclass surface -----------------------------------------------------

    def _encode(self, value: T) -> dict:
        raise NotImplementedError

    def _decode(self, record: dict) -> T:
        raise NotImplementedError

    def _key_of(self, value: T) -> tuple[str, int]:
        raise NotImplementedError

    # Replay ---------------------------------------------------------------

    def _replay(self) -> None:
        if not self.location.exists():
            self.location.parent.mkdir(parents=True, exist_ok=True)
            self.location.touch()
            return
        data = self.location.read_bytes()
        lines = data.splitlines(keepends=True)
        offset = 0
        for i, raw in enumerate(lines):
            last = i == len(lines) - 1
            terminated = raw.endswith(b"\n")
            if not raw.strip():
                offset += len(raw)
                continue
            record = None
            try:
                parsed = json.loads(raw.decode("utf-8"))
                if isinstance(parsed, dict):
                    record = parsed
            except (ValueError, UnicodeDecodeError):
                record = None
            if record is None or not terminated:
                # A record is committed only once newline-terminated; an
                # unparseable or unterminated tail is a torn write.
                if last:
                    logger.warning("discarding partial trailing record in %s",
                                   self.location)
                    self._truncate(offset)
                    return
                raise CorruptJournalError(
                    f"{self.location}: damaged record at line {i + 1}")
            try:
                self._apply(record)
            except (KeyError, TypeError, ValueError) as exc:
                raise CorruptJournalError(
                    f"{self.location}: malformed record at line {i + 1}: {exc}"
                ) from exc
            offset += len(raw)
            self.journal_position += 1

    def _truncate(self, size: int) -> None:
        with open(self.location, "r+b") as fh:
            fh.truncate(size)

    def _apply(self, record: dict) -> None:
        if record.get("op") == "del":
            key = (record["path"], int(record["id"]))
            self._entries.pop(key, None)
            return
        value = self._decode(record)
        key = self._key_of(value)
        self._entries[key] = value
        self._max_ids[key[0]] = max(self._max_ids.get(key[0], 0), key[1])

    # Mutation -------------------------------------------------------------

    def _append(self, record: dict) -> None:
        try:
            self._fh.write(json.dumps(record) + "\n")
            self._fh.flush()
            os.fsync(self._fh.fileno())
        except OSError as exc:
            raise StorageError(f"append to {self.location} failed: {exc}") from exc

    def put(self, value: T) -> T:
        """Upsert; durable before return."""
        record = self._encode(value)
        key = self._key_of(value)
        with self._lock:
            self._append(record)
            self._entries[key] = value
            self._max_ids[key[0]] = max(self._max_ids.get(key[0], 0), key[1])
            self.journal_position += 1
        return value

    def delete(self, path: str, object_id: int) -> None:
        """Append a tombstone; raises if the key is absent."""
        key = (path, object_id)
        with self._lock:
            if key not in self._entries:
                raise NoSuchObjectError(f"no entry for id={object_id} path={path!r}")
            self._append({"op": "del", "id": object_id, "path": path})
            del self._entries[key]
            self.journal_position += 1

    # Reads ----------------------------------------------------------------

    def get(self, path: str, object_id: int) -> T | None:
        return self._entries.get((path, object_id))

    def entries(self) -> list[T]:
        """Snapshot of live entries, ordered by (path, id)."""
        snapshot = list(self._entries.items())
        snapshot.sort(key=lambda kv: kv[0])
        return [value for _, value in snapshot]

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[T]:
        return iter(self.entries())

    def next_id(self, path: str) -> int:
        """Next monotonic object id for a path (1-based; replay-derived)."""
        return self._max_ids.get(path, 0) + 1

    # Maintenance ----------------------------------------------------------

    def compact(self) -> int:
        """Rewrite the journal with live entries only; returns records written.

        Drops history, so ids of deleted objects may be handed out again by
        :meth:`next_id`. Run offline.
        """
        with self._lock:
            tmp = self.location.with_suffix(self.location.suffix + ".compact")
            with open(tmp, "w", encoding="utf-8") as fh:
                count = 0
                for value in self.entries():
                    fh.write(json.dumps(self._encode(value)) + "\n")
                    count += 1
                fh.flush()
                os.fsync(fh.fileno())
            self._fh.close()
            os.replace(tmp, self.location)
            self._fh = open(self.location, "a", encoding="utf-8")
            self.journal_position = count
            return count

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()
        return False


class AclStore(JournalStore[AccessControlEntry]):
    """ACL persistence; each upsert line is exactly the wire-format entry."""

    @classmethod
    def open(cls, location: str | Path) -> "AclStore":
        return cls(location)

    def _encode(self, value: AccessControlEntry) -> dict:
        return value.to_record()

    def _decode(self, record: dict) -> AccessControlEntry:
        return AccessControlEntry.from_record(record)

    def _key_of(self, value: AccessControlEntry) -> tuple[str, int]:
        return (value.path, value.id)


class ObjectStore(JournalStore[dict]):
    """Journal of stored object bodies: ``{"id", "path", "body"}`` records."""

    @classmethod
    def open(cls, location: str | Path) -> "ObjectStore":
        return cls(location)

    def _encode(self, value: dict) -> dict:
        return {"id": value["id"], "path": value["path"], "body": value["body"]}

    def _decode(self, record: dict) -> dict:
        return {"id": int(record["id"]), "path": record["path"],
                "body": record["body"]}

    def _key_of(self, value: dict) -> tuple[str, int]:
        return (value["path"], int(value["id"]))

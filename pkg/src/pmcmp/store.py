"""File-backed entity store with cursor pagination and atomic updates.

One directory per entity kind, one file per entity; writes go through a
temp file plus ``os.replace`` so an acknowledged put survives a process
kill. Structure bodies are capped at 1 MB. Experiment mutations are
serialized per key, which is the single point of synchronization the
engine relies on when many workers record results concurrently.
"""

from __future__ import annotations

import enum
import json
import os
import re
import threading
from pathlib import Path

from .errors import ConflictRetryExhausted, EntityTooLargeError, NotFoundError

STRUCTURE_BODY_LIMIT = 1_048_576

_KEY_RE = re.compile(r"^[A-Za-z0-9._-]+$")

_LOCK_TIMEOUT = 30.0


class Kind(enum.Enum):
    EXPERIMENT = "experiments"
    STRUCTURE = "structures"
    RESULT = "results"
    TASK = "tasks"


def _check_key(key: str) -> str:
    if not _KEY_RE.match(key):
        raise ValueError(f"invalid entity key {key!r}")
    return key


class FileStore:
    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        for kind in Kind:
            (self.root / kind.value).mkdir(parents=True, exist_ok=True)
        self._locks_guard = threading.Lock()
        self._key_locks: dict[str, threading.Lock] = {}

    def _path(self, kind: Kind, key: str) -> Path:
        return self.root / kind.value / _check_key(key)

    def _key_lock(self, kind: Kind, key: str) -> threading.Lock:
        name = f"{kind.value}/{key}"
        with self._locks_guard:
            lock = self._key_locks.get(name)
            if lock is None:
                lock = threading.Lock()
                self._key_locks[name] = lock
            return lock

    def put(self, kind: Kind, key: str, body: bytes) -> None:
        if kind is Kind.STRUCTURE and len(body) > STRUCTURE_BODY_LIMIT:
            raise EntityTooLargeError(
                f"structure body of {len(body)} bytes exceeds the "
                f"{STRUCTURE_BODY_LIMIT}-byte limit"
            )
        path = self._path(kind, key)
        tmp = path.with_name(path.name + f".tmp{threading.get_ident()}")
        with open(tmp, "wb") as fh:
            fh.write(body)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)

    def get(self, kind: Kind, key: str) -> bytes:
        try:
            return self._path(kind, key).read_bytes()
        except FileNotFoundError:
            raise NotFoundError(f"{kind.value}/{key} not found") from None

    def delete(self, kind: Kind, key: str) -> bool:
        try:
            self._path(kind, key).unlink()
            return True
        except FileNotFoundError:
            return False

    def exists(self, kind: Kind, key: str) -> bool:
        return self._path(kind, key).exists()

    def list_by_kind(
        self,
        kind: Kind,
        cursor: str | None = None,
        limit: int | None = None,
        prefix: str | None = None,
    ) -> tuple[list[str], str | None]:
        """One page of keys in ascending order, resumable from ``cursor``.

        The returned cursor re-enters after the last key of the page; pages
        chain without overlap or omission. ``None`` cursor means exhausted.
        """
        keys = sorted(
            name
            for name in os.listdir(self.root / kind.value)
            if ".tmp" not in name
            and (prefix is None or name.startswith(prefix))
            and (cursor is None or name > cursor)
        )
        if limit is not None and len(keys) > limit:
            page = keys[:limit]
            return page, page[-1]
        return keys, None

    def put_json(self, kind: Kind, key: str, doc: dict) -> None:
        self.put(kind, key, json.dumps(doc).encode("utf-8"))

    def get_json(self, kind: Kind, key: str) -> dict:
        return json.loads(self.get(kind, key))

    def update_experiment_atomic(self, key: str, mutation) -> dict:
        """Read-modify-write an experiment document under its key lock.

        ``mutation`` receives the parsed document and returns the updated
        one (or None to keep in-place mutations); exceptions it raises abort
        the update and propagate. Raises :class:`NotFoundError` for missing
        keys and :class:`ConflictRetryExhausted` if the key lock cannot be
        taken within the bounded wait.
        """
        lock = self._key_lock(Kind.EXPERIMENT, key)
        if not lock.acquire(timeout=_LOCK_TIMEOUT):
            raise ConflictRetryExhausted(
                f"could not serialize update of experiment {key}"
            )
        try:
            doc = self.get_json(Kind.EXPERIMENT, key)
            updated = mutation(doc)
            if updated is None:
                updated = doc
            self.put_json(Kind.EXPERIMENT, key, updated)
            return updated
        finally:
            lock.release()

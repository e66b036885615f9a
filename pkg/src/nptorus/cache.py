"""Content-addressed result cache with atomic writes.

Entries are files named by the SHA-256 of a canonical parameter string.  Each
file holds the SHA-256 of its payload on the first line, so truncated or
corrupted entries are detected and treated as misses.  Writes go to a
temporary file in the same directory followed by ``os.replace``; concurrent
writers of one key therefore leave exactly one complete entry.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

SCHEMA_VERSION = 1


def canonical_key(xi: float, k: int, l: int, L: int, rel_tol: float, abs_tol: float,
                  version: int = SCHEMA_VERSION) -> str:
    return f"xi={xi:.17g}|k={int(k)}|l={int(l)}|L={int(L)}|tol={rel_tol:.6e},{abs_tol:.6e}|ver={int(version)}"


def key_digest(canonical: str) -> str:
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class ResultCache:
    """Byte cache under ``root/namespace``; ``root=None`` disables caching."""

    def __init__(self, root, namespace: str = ""):
        self.dir = None if root is None else Path(root) / namespace

    @property
    def enabled(self) -> bool:
        return self.dir is not None

    def _path(self, canonical: str) -> Path:
        return self.dir / key_digest(canonical)

    def get(self, canonical: str) -> bytes | None:
        if self.dir is None:
            return None
        try:
            raw = self._path(canonical).read_bytes()
        except OSError:
            return None
        head, sep, payload = raw.partition(b"\n")
        if not sep or head.decode("ascii", "replace") != hashlib.sha256(payload).hexdigest():
            return None
        return payload

    def put(self, canonical: str, payload: bytes) -> None:
        if self.dir is None:
            return
        self.dir.mkdir(parents=True, exist_ok=True)
        data = hashlib.sha256(payload).hexdigest().encode("ascii") + b"\n" + payload
        fd, tmp = tempfile.mkstemp(dir=self.dir, prefix=".tmp-")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, self._path(canonical))
        except BaseException:
            try:
                os.unlink(tmp)
            except OSError:
                pass
            raise

    def get_json(self, canonical: str):
        payload = self.get(canonical)
        if payload is None:
            return None
        try:
            return json.loads(payload)
        except ValueError:
            return None

    def put_json(self, canonical: str, obj) -> None:
        self.put(canonical, json.dumps(obj, sort_keys=True).encode("utf-8"))


def cache_get(cache: ResultCache, canonical: str) -> bytes | None:
    return cache.get(canonical)


def cache_put(cache: ResultCache, canonical: str, payload: bytes) -> None:
    cache.put(canonical, payload)

"""Year-keyed JSONL persistence for news summaries and embeddings.

Both stores keep one record per year and always serialize in ascending year
order with a fixed field order, so rewriting an unchanged store reproduces
the exact same bytes.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path

from .errors import StoreError, ValidationError

SUMMARY_FIELDS = (
    "year", "commodities", "summary", "verified", "retries",
    "backend_id", "created_at",
)
EMBEDDING_FORMAT = "spikecast-embeddings/1"


@dataclass(frozen=True)
class NewsSummary:
    """One year's summary record, draft or verified."""

    year: int
    commodities: tuple[str, ...]
    summary: str
    verified: bool
    retries: int
    backend_id: str
    created_at: str

    def __post_init__(self):
        if self.retries < 0:
            raise ValidationError(f"retries must be >= 0, got {self.retries}")
        if self.verified and not self.summary.strip():
            raise ValidationError("a verified summary must have non-empty text")


@dataclass(frozen=True)
class EmbeddingVector:
    """Dense representation of one year's verified summary."""

    year: int
    dim: int
    values: tuple[float, ...]

    def __post_init__(self):
        if self.dim < 1:
            raise ValidationError(f"dim must be >= 1, got {self.dim}")
        if len(self.values) != self.dim:
            raise ValidationError(
                f"year {self.year}: {len(self.values)} values for dim {self.dim}"
            )
        if not all(math.isfinite(v) for v in self.values):
            raise ValidationError(f"year {self.year}: non-finite embedding values")


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise StoreError(f"cannot write {path}: {exc}") from exc


class SummaryStore:
    """One summary per year; load-merge-rewrite with byte-stable output."""

    def __init__(self, path):
        self.path = Path(path)
        self._records: dict[int, NewsSummary] = {}
        self._lock = threading.Lock()
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        try:
            lines = self.path.read_text().splitlines()
        except OSError as exc:
            raise StoreError(f"cannot read {self.path}: {exc}") from exc
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise StoreError(f"{self.path}:{lineno}: invalid JSON: {exc}") from None
            if not isinstance(obj, dict) or set(obj) != set(SUMMARY_FIELDS):
                raise StoreError(
                    f"{self.path}:{lineno}: record fields must be exactly "
                    f"{SUMMARY_FIELDS}"
                )
            try:
                rec = NewsSummary(
                    year=int(obj["year"]),
                    commodities=tuple(str(c) for c in obj["commodities"]),
                    summary=str(obj["summary"]),
                    verified=bool(obj["verified"]),
                    retries=int(obj["retries"]),
                    backend_id=str(obj["backend_id"]),
                    created_at=str(obj["created_at"]),
                )
            except (TypeError, ValueError, ValidationError) as exc:
                raise StoreError(f"{self.path}:{lineno}: {exc}") from None
            self._records[rec.year] = rec

    def __len__(self) -> int:
        return len(self._records)

    def get(self, year: int) -> NewsSummary | None:
        return self._records.get(year)

    def years(self) -> list[int]:
        return sorted(self._records)

    def verified_years(self) -> set[int]:
        return {y for y, r in self._records.items() if r.verified}

    def records(self) -> list[NewsSummary]:
        return [self._records[y] for y in sorted(self._records)]

    def upsert(self, summary: NewsSummary) -> None:
        """Insert or replace a year's record.

        A record identical to the stored one except for created_at keeps the
        original timestamp, so re-running a pipeline that reaches the same
        outcome never changes the store's bytes.
        """
        with self._lock:
            old = self._records.get(summary.year)
            if (
                old is not None
                and old.summary == summary.summary
                and old.verified == summary.verified
                and old.retries == summary.retries
                and old.backend_id == summary.backend_id
                and old.commodities == summary.commodities
            ):
                return
            self._records[summary.year] = summary

    def write(self) -> None:
        lines = []
        for year in sorted(self._records):
            r = self._records[year]
            lines.append(json.dumps({
                "year": r.year,
                "commodities": list(r.commodities),
                "summary": r.summary,
                "verified": r.verified,
                "retries": r.retries,
                "backend_id": r.backend_id,
                "created_at": r.created_at,
            }))
        _atomic_write(self.path, "".join(line + "\n" for line in lines))


class EmbeddingStore:
    """Header line fixing the dimension, then one vector per year."""

    def __init__(self, path, dim: int | None = None):
        self.path = Path(path)
        self.dim = dim
        self._records: dict[int, EmbeddingVector] = {}
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        try:
            lines = self.path.read_text().splitlines()
        except OSError as exc:
            raise StoreError(f"cannot read {self.path}: {exc}") from exc
        if not lines:
            return
        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise StoreError(f"{self.path}:1: invalid header: {exc}") from None
        if not isinstance(header, dict) or header.get("format") != EMBEDDING_FORMAT:
            raise StoreError(
                f"{self.path}:1: expected header with format={EMBEDDING_FORMAT!r}"
            )
        stored_dim = int(header.get("dim", 0))
        if self.dim is not None and stored_dim != self.dim:
            raise StoreError(
                f"{self.path}: store dim {stored_dim} != requested {self.dim}"
            )
        self.dim = stored_dim
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rec = EmbeddingVector(
                    year=int(obj["year"]),
                    dim=int(obj["dim"]),
                    values=tuple(float(v) for v in obj["values"]),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise StoreError(f"{self.path}:{lineno}: {exc}") from None
            except ValidationError as exc:
                raise StoreError(f"{self.path}:{lineno}: {exc}") from None
            if rec.dim != self.dim:
                raise StoreError(
                    f"{self.path}:{lineno}: dim {rec.dim} != store dim {self.dim}"
                )
            self._records[rec.year] = rec

    def __len__(self) -> int:
        return len(self._records)

    def get(self, year: int) -> EmbeddingVector | None:
        return self._records.get(year)

    def records(self) -> list[EmbeddingVector]:
        return [self._records[y] for y in sorted(self._records)]

    def put(self, vector: EmbeddingVector) -> None:
        if self.dim is None:
            self.dim = vector.dim
        if vector.dim != self.dim:
            raise StoreError(
                f"year {vector.year}: dim {vector.dim} != store dim {self.dim}"
            )
        self._records[vector.year] = vector

    def write(self) -> None:
        if self.dim is None:
            raise StoreError("cannot write an embedding store with no dimension")
        lines = [json.dumps({"format": EMBEDDING_FORMAT, "dim": self.dim})]
        for year in sorted(self._records):
            r = self._records[year]
            lines.append(json.dumps({
                "year": r.year,
                "dim": r.dim,
                "values": [float(v) for v in r.values],
            }))
        _atomic_write(self.path, "".join(line + "\n" for line in lines))

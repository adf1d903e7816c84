"""Canonical image-record model and streaming manifest I/O.

A manifest is a UTF-8 text file with one JSON object per line. Unknown keys
are preserved on rewrite; final writes sort records by id so reruns diff
cleanly. Record ids are the lowercase hex of a 128-bit stable hash over
(source, native id), so re-crawls dedupe without keeping provider ids as keys.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path
from typing import Iterable, Iterator, Optional

SOURCES = ("flickr", "mapillary", "unsplash")
SPLITS = ("train", "val", "test")
STATUSES = ("raw", "kept", "rejected")
REJECTION_REASONS = (
    "date",
    "grey",
    "non_urban",
    "blacklisted_scene",
    "face_area",
    "unassignable_gps",
)

# Serialization order for known keys; unknown keys follow, sorted.
_FIELD_ORDER = (
    "id",
    "source",
    "lat",
    "lon",
    "captured_at",
    "width",
    "height",
    "is_color",
    "country_code",
    "class_id",
    "split",
    "status",
    "rejection_reason",
    "path_or_url",
)


class ManifestError(ValueError):
    """Malformed manifest line or invariant violation."""

    def __init__(self, message: str, line_no: Optional[int] = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


def make_record_id(source: str, native_id: str) -> str:
    """Stable 128-bit id over (source, native id), lowercase hex."""
    digest = hashlib.md5(f"{source}\x1f{native_id}".encode("utf-8"))
    return digest.hexdigest()


@dataclass
class ImageRecord:
    id: str
    source: str
    lat: float
    lon: float
    width: int
    height: int
    path_or_url: str
    captured_at: Optional[date] = None
    is_color: Optional[bool] = None
    country_code: Optional[str] = None
    class_id: Optional[int] = None
    split: Optional[str] = None
    status: str = "raw"
    rejection_reason: Optional[str] = None
    extra: dict = field(default_factory=dict)

    def validate(self) -> None:
        if not self.id:
            raise ManifestError("id is empty")
        if self.source not in SOURCES:
            raise ManifestError(f"source {self.source!r} not one of {SOURCES}")
        if not (-90.0 <= self.lat <= 90.0):
            raise ManifestError(f"lat out of range: {self.lat!r}")
        if not (-180.0 <= self.lon < 180.0):
            raise ManifestError(f"lon out of range: {self.lon!r}")
        if self.width < 1:
            raise ManifestError(f"width out of range: {self.width!r}")
        if self.height < 1:
            raise ManifestError(f"height out of range: {self.height!r}")
        if self.status not in STATUSES:
            raise ManifestError(f"status {self.status!r} not one of {STATUSES}")
        if (self.rejection_reason is not None) != (self.status == "rejected"):
            raise ManifestError(
                "rejection_reason must be present iff status is 'rejected'"
            )
        if self.rejection_reason is not None and self.rejection_reason not in REJECTION_REASONS:
            raise ManifestError(
                f"rejection_reason {self.rejection_reason!r} not one of {REJECTION_REASONS}"
            )
        if self.class_id is not None and self.country_code is None:
            raise ManifestError("class_id present without country_code")
        if self.class_id is not None and self.class_id < 0:
            raise ManifestError(f"class_id out of range: {self.class_id!r}")
        if self.split is not None and self.split not in SPLITS:
            raise ManifestError(f"split {self.split!r} not one of {SPLITS}")
        if not self.path_or_url:
            raise ManifestError("path_or_url is empty")

    def with_updates(self, **kwargs) -> "ImageRecord":
        return replace(self, **kwargs)


def parse_record(line: str, line_no: Optional[int] = None) -> ImageRecord:
    """Parse one manifest line into a validated ImageRecord."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise ManifestError(f"not valid JSON: {e.msg}", line_no) from e
    if not isinstance(obj, dict):
        raise ManifestError("record is not a JSON object", line_no)

    def take(key, kind, required=False):
        if key not in obj:
            if required:
                raise ManifestError(f"missing required field {key!r}", line_no)
            return None
        value = obj.pop(key)
        if value is None:
            if required:
                raise ManifestError(f"field {key!r} is null", line_no)
            return None
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if kind is int and isinstance(value, bool):
            raise ManifestError(f"field {key!r} has wrong type", line_no)
        if not isinstance(value, kind):
            raise ManifestError(f"field {key!r} has wrong type", line_no)
        return value

    captured_raw = take("captured_at", str)
    captured_at = None
    if captured_raw is not None:
        try:
            captured_at = date.fromisoformat(captured_raw)
        except ValueError as e:
            raise ManifestError(f"captured_at not an ISO date: {captured_raw!r}", line_no) from e

    record = ImageRecord(
        id=take("id", str, required=True),
        source=take("source", str, required=True),
        lat=take("lat", float, required=True),
        lon=take("lon", float, required=True),
        width=take("width", int, required=True),
        height=take("height", int, required=True),
        path_or_url=take("path_or_url", str, required=True),
        captured_at=captured_at,
        is_color=take("is_color", bool),
        country_code=take("country_code", str),
        class_id=take("class_id", int),
        split=take("split", str),
        status=take("status", str) or "raw",
        rejection_reason=take("rejection_reason", str),
        extra=obj,
    )
    try:
        record.validate()
    except ManifestError as e:
        raise ManifestError(str(e), line_no) from e
    return record


def serialize_record(record: ImageRecord) -> str:
    """Canonical one-line JSON form: known keys in fixed order, unknown keys sorted."""
    obj: dict = {}
    for key in _FIELD_ORDER:
        value = getattr(record, key)
        if value is None:
            continue
        if key == "captured_at":
            value = value.isoformat()
        obj[key] = value
    for key in sorted(record.extra):
        if key not in obj:
            obj[key] = record.extra[key]
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def read_manifest(path: Path | str) -> Iterator[ImageRecord]:
    """Stream records from a manifest file; blank lines are skipped."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            yield parse_record(line, line_no)


def write_manifest(path: Path | str, records: Iterable[ImageRecord], sort_by_id: bool = True) -> int:
    """Write records one per line; sorted by id by default for reproducible diffs.

    Returns the number of records written.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    records = list(records)
    if sort_by_id:
        records.sort(key=lambda r: r.id)
    with path.open("w", encoding="utf-8") as f:
        for record in records:
            f.write(serialize_record(record) + "\n")
    return len(records)


@dataclass
class ManifestStats:
    total: int = 0
    per_source: Counter = field(default_factory=Counter)
    per_country: Counter = field(default_factory=Counter)
    per_class: Counter = field(default_factory=Counter)
    per_split: Counter = field(default_factory=Counter)
    per_status: Counter = field(default_factory=Counter)

    def add(self, record: ImageRecord) -> None:
        self.total += 1
        self.per_source[record.source] += 1
        self.per_status[record.status] += 1
        if record.country_code is not None:
            self.per_country[record.country_code] += 1
        if record.class_id is not None:
            self.per_class[record.class_id] += 1
        if record.split is not None:
            self.per_split[record.split] += 1

    def merge(self, other: "ManifestStats") -> "ManifestStats":
        """Associative merge so partial tallies from parallel shards combine."""
        merged = ManifestStats(
            total=self.total + other.total,
            per_source=self.per_source + other.per_source,
            per_country=self.per_country + other.per_country,
            per_class=self.per_class + other.per_class,
            per_split=self.per_split + other.per_split,
            per_status=self.per_status + other.per_status,
        )
        return merged

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "per_source": dict(sorted(self.per_source.items())),
            "per_country": dict(sorted(self.per_country.items())),
            "per_class": {str(k): v for k, v in sorted(self.per_class.items())},
            "per_split": dict(sorted(self.per_split.items())),
            "per_status": dict(sorted(self.per_status.items())),
        }


def validate_manifest(records: Iterable[ImageRecord]) -> ManifestStats:
    """Tally stats over records; raises listing duplicate ids if any repeat."""
    stats = ManifestStats()
    seen: set[str] = set()
    duplicates: set[str] = set()
    for record in records:
        if record.id in seen:
            duplicates.add(record.id)
        seen.add(record.id)
        stats.add(record)
    if duplicates:
        listed = ", ".join(sorted(duplicates))
        raise ManifestError(f"duplicate record ids: {listed}")
    return stats

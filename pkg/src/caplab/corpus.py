"""Canonical data types and shard-file I/O for caption datasets.

Shard files are line-delimited JSON (one record per line, UTF-8). Images are
referenced by URI and never embedded; this package moves text, not pixels.
Readers are streaming generators so memory stays flat regardless of shard
size. Shard files are single-writer; concurrent readers are fine.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator, Sequence

LANGUAGES = ("EN", "CN")
CAPTION_MODES = ("caption", "recaption")
SHARD_STATUSES = ("pending", "leased", "done")

CHECKSUM_ALGORITHM = "sha256"


class CorpusError(Exception):
    """Base class for dataset I/O and validation failures."""


class ShardFormatError(CorpusError):
    """A shard line failed to parse or validate.

    The message always carries ``line <n>`` and, for a missing or empty
    required field, ends with the field name so callers can match on it.
    """

    def __init__(self, path: str | Path, line_no: int, detail: str):
        self.path = str(path)
        self.line_no = line_no
        self.detail = detail
        super().__init__(f"{self.path}: line {line_no}: {detail}")


class DuplicateSampleError(CorpusError):
    def __init__(self, duplicates: Sequence[str]):
        self.duplicates = sorted(set(duplicates))
        super().__init__(f"duplicate sample_id values: {', '.join(self.duplicates)}")


class ChecksumMismatchError(CorpusError):
    def __init__(self, shard_id: str, expected: str, actual: str):
        self.shard_id = shard_id
        super().__init__(
            f"checksum mismatch for shard {shard_id!r}: "
            f"manifest has {expected}, file has {actual}"
        )


class UnreadableShardError(CorpusError):
    def __init__(self, path: str | Path, cause: Exception):
        self.path = str(path)
        super().__init__(f"cannot read shard {self.path}: {cause}")


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def iso_from_epoch(seconds: float) -> str:
    return datetime.fromtimestamp(seconds, tz=timezone.utc).isoformat(timespec="seconds")


@dataclass(frozen=True)
class CaptionSample:
    """A source image reference with optional alt-text."""

    sample_id: str
    image_ref: str
    source_dataset: str
    language: str
    alt_text: str | None = None

    def __post_init__(self):
        if not self.sample_id:
            raise ValueError("sample_id must be non-empty")
        if not self.image_ref:
            raise ValueError("image_ref must be non-empty")
        if self.language not in LANGUAGES:
            raise ValueError(f"language must be one of {LANGUAGES}, got {self.language!r}")

    def to_json_obj(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "image_ref": self.image_ref,
            "source_dataset": self.source_dataset,
            "language": self.language,
            "alt_text": self.alt_text,
        }


@dataclass(frozen=True)
class CaptionRecord:
    """A generated caption attached to a sample."""

    sample_id: str
    caption_text: str
    captioner_id: str
    mode: str
    created_at: str

    def __post_init__(self):
        if not self.sample_id:
            raise ValueError("sample_id must be non-empty")
        if not self.caption_text:
            raise ValueError("caption_text must be non-empty")
        if self.mode not in CAPTION_MODES:
            raise ValueError(f"mode must be one of {CAPTION_MODES}, got {self.mode!r}")

    def to_json_obj(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "caption_text": self.caption_text,
            "captioner_id": self.captioner_id,
            "mode": self.mode,
            "created_at": self.created_at,
        }


@dataclass(frozen=True)
class ShardManifest:
    shard_id: str
    path: str
    sample_count: int
    checksum: str
    status: str = "pending"

    def __post_init__(self):
        if self.sample_count < 0:
            raise ValueError("sample_count must be non-negative")
        if self.status not in SHARD_STATUSES:
            raise ValueError(f"status must be one of {SHARD_STATUSES}, got {self.status!r}")

    def to_json_obj(self) -> dict:
        return {
            "shard_id": self.shard_id,
            "path": self.path,
            "sample_count": self.sample_count,
            "checksum": self.checksum,
            "status": self.status,
        }


@dataclass(frozen=True)
class DatasetManifest:
    dataset_id: str
    shards: tuple[ShardManifest, ...]
    total_samples: int
    created_at: str

    def __post_init__(self):
        object.__setattr__(self, "shards", tuple(self.shards))
        ids = [s.shard_id for s in self.shards]
        if len(ids) != len(set(ids)):
            raise ValueError("shard_ids must be unique")
        expected = sum(s.sample_count for s in self.shards)
        if self.total_samples != expected:
            raise ValueError(
                f"total_samples {self.total_samples} != sum of shard counts {expected}"
            )

    def to_json_obj(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "created_at": self.created_at,
            "total_samples": self.total_samples,
            "shards": [s.to_json_obj() for s in self.shards],
        }

    def shard(self, shard_id: str) -> ShardManifest:
        for s in self.shards:
            if s.shard_id == shard_id:
                return s
        raise KeyError(shard_id)


# (non_empty_fields, present_fields): presence allows empty strings
_SAMPLE_REQUIRED = (("sample_id", "image_ref"), ("source_dataset", "language"))
_RECORD_REQUIRED = (("sample_id", "caption_text"), ("captioner_id", "mode", "created_at"))


def _parse_line(path, line_no: int, line: str) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ShardFormatError(path, line_no, f"malformed JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise ShardFormatError(path, line_no, "record is not a JSON object")
    return obj


def _require(path, line_no: int, obj: dict, spec: tuple) -> None:
    non_empty, present = spec
    for name in non_empty:
        if not obj.get(name):
            raise ShardFormatError(path, line_no, f"{name} missing or empty")
    for name in present:
        if obj.get(name) is None:
            raise ShardFormatError(path, line_no, f"{name} missing")


def read_shard(path: str | Path) -> Iterator[CaptionSample]:
    """Yield samples from a shard file in order, one line at a time."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = _parse_line(path, line_no, line)
            _require(path, line_no, obj, _SAMPLE_REQUIRED)
            try:
                yield CaptionSample(
                    sample_id=obj["sample_id"],
                    image_ref=obj["image_ref"],
                    source_dataset=obj["source_dataset"],
                    language=obj["language"],
                    alt_text=obj.get("alt_text"),
                )
            except ValueError as exc:
                raise ShardFormatError(path, line_no, str(exc)) from exc


def read_records(path: str | Path) -> Iterator[CaptionRecord]:
    """Yield caption records from an annotation output file, streaming."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = _parse_line(path, line_no, line)
            _require(path, line_no, obj, _RECORD_REQUIRED)
            try:
                yield CaptionRecord(
                    sample_id=obj["sample_id"],
                    caption_text=obj["caption_text"],
                    captioner_id=obj["captioner_id"],
                    mode=obj["mode"],
                    created_at=obj["created_at"],
                )
            except ValueError as exc:
                raise ShardFormatError(path, line_no, str(exc)) from exc


def iter_jsonl(path: str | Path) -> Iterator[dict]:
    """Yield raw JSON objects from a line-delimited file, streaming."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            yield _parse_line(path, line_no, line)


def dump_json_line(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def _write_jsonl(objs: Iterable[dict], path: Path) -> tuple[int, str]:
    """Write objects as JSONL, returning (count, checksum). Single pass."""
    digest = hashlib.new(CHECKSUM_ALGORITHM)
    count = 0
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        for obj in objs:
            data = (dump_json_line(obj) + "\n").encode("utf-8")
            fh.write(data)
            digest.update(data)
            count += 1
    return count, f"{CHECKSUM_ALGORITHM}:{digest.hexdigest()}"


def write_shard(samples: Iterable[CaptionSample], path: str | Path) -> ShardManifest:
    """Write samples to a shard file and return its manifest entry.

    Rejects duplicate sample_ids within the batch before touching the file.
    """
    path = Path(path)
    samples = list(samples)
    seen: set[str] = set()
    dups: list[str] = []
    for s in samples:
        if s.sample_id in seen:
            dups.append(s.sample_id)
        seen.add(s.sample_id)
    if dups:
        raise DuplicateSampleError(dups)
    count, checksum = _write_jsonl((s.to_json_obj() for s in samples), path)
    return ShardManifest(
        shard_id=path.stem,
        path=path.name,
        sample_count=count,
        checksum=checksum,
        status="pending",
    )


def write_records(records: Iterable[CaptionRecord], path: str | Path) -> ShardManifest:
    """Write caption records to a shard file; same container format as samples."""
    path = Path(path)
    records = list(records)
    count, checksum = _write_jsonl((r.to_json_obj() for r in records), path)
    return ShardManifest(
        shard_id=path.stem,
        path=path.name,
        sample_count=count,
        checksum=checksum,
        status="pending",
    )


def file_checksum(path: str | Path) -> str:
    digest = hashlib.new(CHECKSUM_ALGORITHM)
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return f"{CHECKSUM_ALGORITHM}:{digest.hexdigest()}"


def count_lines(path: str | Path) -> int:
    n = 0
    with open(path, "rb") as fh:
        for line in fh:
            if line.strip():
                n += 1
    return n


MANIFEST_FILENAME = "manifest.json"


def build_manifest(shard_directory: str | Path, dataset_id: str | None = None) -> DatasetManifest:
    """Scan a directory of ``*.jsonl`` shards and build a dataset manifest.

    If a manifest already exists in the directory, shard checksums are
    verified against it; any drift raises ChecksumMismatchError.
    """
    directory = Path(shard_directory)
    prior: DatasetManifest | None = None
    prior_path = directory / MANIFEST_FILENAME
    if prior_path.exists():
        prior = load_manifest(prior_path)

    shards: list[ShardManifest] = []
    for shard_path in sorted(directory.glob("*.jsonl")):
        try:
            checksum = file_checksum(shard_path)
            sample_count = count_lines(shard_path)
        except OSError as exc:
            raise UnreadableShardError(shard_path, exc) from exc
        shard_id = shard_path.stem
        if prior is not None:
            try:
                old = prior.shard(shard_id)
            except KeyError:
                old = None
            if old is not None and old.checksum != checksum:
                raise ChecksumMismatchError(shard_id, old.checksum, checksum)
        shards.append(
            ShardManifest(
                shard_id=shard_id,
                path=shard_path.name,
                sample_count=sample_count,
                checksum=checksum,
            )
        )
    return DatasetManifest(
        dataset_id=dataset_id or directory.name,
        shards=tuple(shards),
        total_samples=sum(s.sample_count for s in shards),
        created_at=utc_now_iso(),
    )


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(manifest.to_json_obj(), ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )


def load_manifest(path: str | Path) -> DatasetManifest:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    shards = tuple(
        ShardManifest(
            shard_id=s["shard_id"],
            path=s["path"],
            sample_count=s["sample_count"],
            checksum=s["checksum"],
            status=s.get("status", "pending"),
        )
        for s in obj["shards"]
    )
    return DatasetManifest(
        dataset_id=obj["dataset_id"],
        shards=shards,
        total_samples=obj["total_samples"],
        created_at=obj["created_at"],
    )


def resolve_shard_path(manifest_root: str | Path, shard: ShardManifest) -> Path:
    return Path(manifest_root) / shard.path


def with_status(manifest: DatasetManifest, shard_id: str, status: str) -> DatasetManifest:
    shards = tuple(
        replace(s, status=status) if s.shard_id == shard_id else s for s in manifest.shards
    )
    return replace(manifest, shards=shards)

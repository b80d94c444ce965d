"""Idempotent finalization: dedupe re-leased output and emit a manifest.

Duplicates from crashed or re-leased runs are collapsed per sample, keeping
the record with the latest created_at (later lease files break ties).
Output records are sorted by sample_id, so re-running finalize writes
byte-identical shards and manifest.
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

from ..corpus import (
    CaptionRecord,
    DatasetManifest,
    MANIFEST_FILENAME,
    read_records,
    save_manifest,
    write_records,
)
from .coordinator import Coordinator
from .model import PendingShardsError


def finalize(job_dir: str | Path) -> DatasetManifest:
    coordinator = Coordinator.open(job_dir)
    try:
        return finalize_coordinator(coordinator)
    finally:
        coordinator.close()


def finalize_coordinator(coordinator: Coordinator) -> DatasetManifest:
    plan = coordinator.plan()
    if plan.pending_shards:
        raise PendingShardsError(plan.pending_shards)
    out_dir = coordinator.output_dir
    shard_manifests = []
    total = 0
    for shard_id in coordinator.shard_order():
        records = _dedupe_shard(coordinator.records_dir / shard_id)
        manifest_entry = write_records(records, out_dir / f"{shard_id}.jsonl")
        shard_manifests.append(replace(manifest_entry, status="done"))
        total += manifest_entry.sample_count
    manifest = DatasetManifest(
        dataset_id=f"{coordinator.job_id}-records",
        shards=tuple(shard_manifests),
        total_samples=total,
        created_at=coordinator.created_at,
    )
    save_manifest(manifest, out_dir / MANIFEST_FILENAME)
    return manifest


def _dedupe_shard(shard_records_dir: Path) -> list[CaptionRecord]:
    best: dict[str, tuple[tuple, CaptionRecord]] = {}
    if shard_records_dir.is_dir():
        for file_no, path in enumerate(sorted(shard_records_dir.glob("*.jsonl"))):
            for line_no, record in enumerate(read_records(path)):
                key = (record.created_at, file_no, line_no)
                prev = best.get(record.sample_id)
                if prev is None or key > prev[0]:
                    best[record.sample_id] = (key, record)
    return [rec for _, rec in sorted(best.values(), key=lambda kv: kv[1].sample_id)]

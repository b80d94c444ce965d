"""Lease coordinator for shard annotation jobs.

One coordinator owns all lease state for a job and persists it as an
append-only journal, so a crashed run recovers by replay. Workers only talk
to the coordinator through lease, checkpoint, and done calls; everything
else travels through shard files.

Delivery is at-least-once: an expired lease makes its shard leasable again
from the last flushed checkpoint, and duplicates are collapsed at finalize.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from ..corpus import DatasetManifest, iso_from_epoch
from ..journal import Journal
from .model import (
    AnnotationError,
    JobPlan,
    LeaseLostError,
    ShardLease,
    TaskSpec,
    UnknownJobError,
)

JOURNAL_FILENAME = "journal.jsonl"
RECORDS_DIRNAME = "records"
FAILURES_DIRNAME = "failures"
OUTPUT_DIRNAME = "out"


def plan_jobs(manifest: DatasetManifest, task: TaskSpec, job_id: str | None = None) -> JobPlan:
    """Build a fresh plan: every shard pending, in manifest order."""
    if not manifest.shards:
        raise AnnotationError("no shards in manifest")
    return JobPlan(
        job_id=job_id or f"{task.task_id}-{manifest.dataset_id}",
        task=task,
        pending_shards=tuple(s.shard_id for s in manifest.shards),
        completed_shards=frozenset(),
    )


@dataclass
class _ShardState:
    shard_id: str
    path: str
    sample_count: int
    checkpoint: int = 0
    done: bool = False
    lease_token: str | None = None
    lease_worker: str | None = None
    lease_expiry: float = 0.0


class Coordinator:
    """Single-owner lease state machine over one job journal."""

    def __init__(self, job_dir: str | Path, clock: Callable[[], float] = time.time):
        self.job_dir = Path(job_dir)
        self.clock = clock
        self._journal = Journal(self.job_dir / JOURNAL_FILENAME)
        self._lock = threading.Lock()
        self._shards: dict[str, _ShardState] = {}
        self._order: list[str] = []
        self._lease_seq = 0
        self.job_id: str = ""
        self.task: TaskSpec | None = None
        self.dataset_root: str = ""
        self.created_at: str = ""

    # -- construction ------------------------------------------------------

    @classmethod
    def create(
        cls,
        job_dir: str | Path,
        manifest: DatasetManifest,
        dataset_root: str | Path,
        task: TaskSpec,
        job_id: str | None = None,
        clock: Callable[[], float] = time.time,
    ) -> "Coordinator":
        plan = plan_jobs(manifest, task, job_id)
        coord = cls(job_dir, clock=clock)
        if coord._journal.path.exists():
            raise AnnotationError(f"job already exists at {coord.job_dir}")
        coord._journal.append(
            {
                "event": "job_created",
                "job_id": plan.job_id,
                "task": task.to_json_obj(),
                "dataset_root": str(Path(dataset_root).resolve()),
                "created_at": iso_from_epoch(clock()),
                "shards": [
                    {"shard_id": s.shard_id, "path": s.path, "sample_count": s.sample_count}
                    for s in manifest.shards
                ],
            }
        )
        coord._load()
        return coord

    @classmethod
    def open(cls, job_dir: str | Path, clock: Callable[[], float] = time.time) -> "Coordinator":
        coord = cls(job_dir, clock=clock)
        if not coord._journal.path.exists():
            raise UnknownJobError(f"no job journal at {coord.job_dir}")
        coord._load()
        return coord

    def _load(self) -> None:
        self._shards.clear()
        self._order.clear()
        for event in self._journal.replay():
            kind = event["event"]
            if kind == "job_created":
                self.job_id = event["job_id"]
                self.task = TaskSpec.from_json_obj(event["task"])
                self.dataset_root = event["dataset_root"]
                self.created_at = event["created_at"]
                for s in event["shards"]:
                    state = _ShardState(
                        shard_id=s["shard_id"],
                        path=s["path"],
                        sample_count=s["sample_count"],
                    )
                    self._shards[state.shard_id] = state
                    self._order.append(state.shard_id)
            elif kind == "lease_granted":
                state = self._shards[event["shard_id"]]
                state.lease_token = event["token"]
                state.lease_worker = event["worker_id"]
                state.lease_expiry = event["expiry"]
                self._lease_seq = max(self._lease_seq, event["seq"])
            elif kind == "checkpoint":
                state = self._shards[event["shard_id"]]
                state.checkpoint = max(state.checkpoint, event["offset"])
            elif kind == "shard_done":
                state = self._shards[event["shard_id"]]
                state.done = True
                state.lease_token = None
        if self.task is None:
            raise AnnotationError(f"journal at {self.job_dir} has no job_created event")

    # -- paths -------------------------------------------------------------

    def shard_path(self, shard_id: str) -> Path:
        return Path(self.dataset_root) / self._shards[shard_id].path

    def shard_sample_count(self, shard_id: str) -> int:
        return self._shards[shard_id].sample_count

    @property
    def records_dir(self) -> Path:
        return self.job_dir / RECORDS_DIRNAME

    @property
    def failures_dir(self) -> Path:
        return self.job_dir / FAILURES_DIRNAME

    @property
    def output_dir(self) -> Path:
        return self.job_dir / OUTPUT_DIRNAME

    # -- plan view ---------------------------------------------------------

    def plan(self) -> JobPlan:
        with self._lock:
            pending = tuple(sid for sid in self._order if not self._shards[sid].done)
            completed = frozenset(sid for sid in self._order if self._shards[sid].done)
        assert self.task is not None
        return JobPlan(
            job_id=self.job_id, task=self.task, pending_shards=pending, completed_shards=completed
        )

    def all_done(self) -> bool:
        with self._lock:
            return all(s.done for s in self._shards.values())

    def shard_order(self) -> list[str]:
        return list(self._order)

    # -- lease protocol ----------------------------------------------------

    def lease_shard(self, worker_id: str, lease_duration: float) -> ShardLease | None:
        """Grant the first pending shard without a live lease, or None."""
        if not worker_id:
            raise AnnotationError("worker_id must be non-empty")
        now = self.clock()
        with self._lock:
            for shard_id in self._order:
                state = self._shards[shard_id]
                if state.done:
                    continue
                if state.lease_token is not None and state.lease_expiry > now:
                    continue
                self._lease_seq += 1
                token = f"lease{self._lease_seq:06d}"
                expiry = now + lease_duration
                state.lease_token = token
                state.lease_worker = worker_id
                state.lease_expiry = expiry
                self._journal.append(
                    {
                        "event": "lease_granted",
                        "shard_id": shard_id,
                        "worker_id": worker_id,
                        "token": token,
                        "seq": self._lease_seq,
                        "expiry": expiry,
                        "checkpoint_offset": state.checkpoint,
                    }
                )
                return ShardLease(
                    shard_id=shard_id,
                    worker_id=worker_id,
                    lease_expiry=expiry,
                    checkpoint_offset=state.checkpoint,
                    token=token,
                )
        return None

    def _validate_lease(self, lease: ShardLease) -> _ShardState:
        state = self._shards.get(lease.shard_id)
        if state is None:
            raise AnnotationError(f"unknown shard {lease.shard_id}")
        if state.lease_token != lease.token:
            raise LeaseLostError(lease.shard_id, lease.token, "superseded by a newer lease")
        if state.lease_expiry <= self.clock():
            raise LeaseLostError(lease.shard_id, lease.token, "expired")
        return state

    def checkpoint(self, lease: ShardLease, offset: int) -> None:
        """Record progress; offsets never move backwards."""
        with self._lock:
            state = self._validate_lease(lease)
            if offset < state.checkpoint:
                raise AnnotationError(
                    f"checkpoint for {lease.shard_id} would regress "
                    f"{state.checkpoint} -> {offset}"
                )
            if offset > state.sample_count:
                raise AnnotationError(
                    f"checkpoint {offset} beyond shard size {state.sample_count}"
                )
            state.checkpoint = offset
            self._journal.append(
                {"event": "checkpoint", "shard_id": lease.shard_id, "offset": offset}
            )

    def mark_done(self, lease: ShardLease) -> None:
        with self._lock:
            state = self._validate_lease(lease)
            state.done = True
            state.lease_token = None
            self._journal.append(
                {"event": "shard_done", "shard_id": lease.shard_id, "token": lease.token}
            )

    def live_leases(self) -> dict[str, str]:
        """shard_id -> worker_id for unexpired leases; diagnostics and tests."""
        now = self.clock()
        with self._lock:
            return {
                s.shard_id: s.lease_worker or ""
                for s in self._shards.values()
                if not s.done and s.lease_token is not None and s.lease_expiry > now
            }

    def close(self) -> None:
        self._journal.close()

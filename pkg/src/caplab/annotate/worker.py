"""Shard annotation workers: drive the captioner and checkpoint progress.

A worker holds one lease at a time. Records are appended to a per-lease
file under ``records/<shard_id>/``, so a re-leased shard never clobbers a
previous attempt's output; finalize collapses the duplicates.
"""

from __future__ import annotations

import itertools
import threading
import time
from pathlib import Path
from typing import Callable

from ..corpus import CaptionRecord, dump_json_line, iso_from_epoch, read_shard
from ..ratelimit import TokenBucket
from .client import CaptionerClient, CaptionerError, CaptionerUnreachableError
from .coordinator import Coordinator
from .model import (
    AnnotationError,
    AnnotationResult,
    LeaseLostError,
    SampleFailure,
    ShardLease,
    TaskSpec,
)
from .prompts import build_prompt

DEFAULT_FLUSH_INTERVAL = 64


class TransportFailureError(AnnotationError):
    """Endpoint unreachable past the retry budget; shard progress is intact."""


def annotate_shard(
    lease: ShardLease,
    client: CaptionerClient,
    task: TaskSpec,
    coordinator: Coordinator,
    flush_interval: int = DEFAULT_FLUSH_INTERVAL,
    rate_limiter: TokenBucket | None = None,
    clock: Callable[[], float] | None = None,
    max_samples: int | None = None,
) -> AnnotationResult:
    """Annotate one leased shard from its checkpoint onward.

    Per-sample failures are retried up to ``task.max_retries`` and then
    recorded, never aborting the shard. ``max_samples`` bounds how many
    samples this call handles before returning incomplete, which doubles
    as the crash hook in fault-injection tests.
    """
    if flush_interval < 1:
        raise AnnotationError(f"flush_interval must be >= 1, got {flush_interval}")
    clock = clock or coordinator.clock
    shard_path = coordinator.shard_path(lease.shard_id)
    records_path = coordinator.records_dir / lease.shard_id / f"{lease.token}.jsonl"
    failures_path = coordinator.failures_dir / lease.shard_id / f"{lease.token}.jsonl"
    records_path.parent.mkdir(parents=True, exist_ok=True)

    result = AnnotationResult(processed=lease.checkpoint_offset)
    handled_this_run = 0
    samples = itertools.islice(read_shard(shard_path), lease.checkpoint_offset, None)
    with records_path.open("a", encoding="utf-8") as records_fh:
        for sample in samples:
            if max_samples is not None and handled_this_run >= max_samples:
                return result  # simulated crash / bounded drain: no final checkpoint
            if clock() >= lease.lease_expiry:
                raise LeaseLostError(lease.shard_id, lease.token, "expired mid-run")
            prompt = build_prompt(sample, task.mode, task.prompt_template_id)
            caption = None
            last_error: CaptionerError | None = None
            attempts = 0
            for attempts in range(1, task.max_retries + 2):
                if rate_limiter is not None:
                    rate_limiter.acquire()
                try:
                    caption = client.generate(prompt, sample.image_ref)
                    break
                except CaptionerUnreachableError as exc:
                    last_error = exc
                except CaptionerError as exc:
                    last_error = exc
            if caption is None and isinstance(last_error, CaptionerUnreachableError):
                raise TransportFailureError(
                    f"shard {lease.shard_id}: endpoint unreachable at sample "
                    f"{sample.sample_id} after {attempts} attempts: {last_error}"
                )
            if caption is None:
                result.failures.append(
                    SampleFailure(
                        sample_id=sample.sample_id,
                        attempts=attempts,
                        error=str(last_error),
                    )
                )
                _append_failure(failures_path, sample.sample_id, attempts, str(last_error))
            else:
                record = CaptionRecord(
                    sample_id=sample.sample_id,
                    caption_text=caption,
                    captioner_id=client.model_id,
                    mode=task.mode,
                    created_at=iso_from_epoch(clock()),
                )
                records_fh.write(dump_json_line(record.to_json_obj()) + "\n")
                records_fh.flush()
                result.records.append(record)
            result.processed += 1
            handled_this_run += 1
            if handled_this_run % flush_interval == 0:
                coordinator.checkpoint(lease, result.processed)
    coordinator.checkpoint(lease, result.processed)
    coordinator.mark_done(lease)
    result.completed = True
    return result


def _append_failure(path: Path, sample_id: str, attempts: int, error: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as fh:
        fh.write(
            dump_json_line({"sample_id": sample_id, "attempts": attempts, "error": error}) + "\n"
        )


def run_worker_loop(
    coordinator: Coordinator,
    client: CaptionerClient,
    worker_id: str,
    lease_duration: float,
    flush_interval: int = DEFAULT_FLUSH_INTERVAL,
    idle_sleep: float = 0.002,
) -> list[AnnotationResult]:
    """Lease and annotate shards until the whole job is done."""
    assert coordinator.task is not None
    limiter = TokenBucket(coordinator.task.rate_limit)
    results = []
    while True:
        lease = coordinator.lease_shard(worker_id, lease_duration)
        if lease is None:
            if coordinator.all_done():
                return results
            time.sleep(idle_sleep)
            continue
        try:
            results.append(
                annotate_shard(
                    lease,
                    client,
                    coordinator.task,
                    coordinator,
                    flush_interval=flush_interval,
                    rate_limiter=limiter,
                )
            )
        except LeaseLostError:
            continue  # shard will be re-leased from its checkpoint


def run_job(
    job_dir,
    client_factory: Callable[[str], CaptionerClient],
    workers: int = 1,
    lease_duration: float = 300.0,
    flush_interval: int = DEFAULT_FLUSH_INTERVAL,
) -> Coordinator:
    """Run a full job with N worker threads against one coordinator."""
    coordinator = Coordinator.open(job_dir)
    if workers < 1:
        raise AnnotationError(f"workers must be >= 1, got {workers}")
    threads = []
    errors: list[BaseException] = []

    def work(worker_id: str):
        try:
            run_worker_loop(
                coordinator,
                client_factory(worker_id),
                worker_id,
                lease_duration,
                flush_interval,
            )
        except BaseException as exc:  # surfaced after join
            errors.append(exc)

    for i in range(workers):
        t = threading.Thread(target=work, args=(f"worker-{i}",), daemon=True)
        threads.append(t)
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise errors[0]
    return coordinator

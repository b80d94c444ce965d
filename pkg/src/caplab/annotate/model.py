"""Task, plan, and lease types for the annotation work queue."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from ..corpus import CAPTION_MODES, CaptionRecord


class AnnotationError(Exception):
    pass


class UnknownJobError(AnnotationError):
    pass


class LeaseLostError(AnnotationError):
    """The lease backing an in-flight shard run expired or was superseded."""

    def __init__(self, shard_id: str, token: str, detail: str = ""):
        self.shard_id = shard_id
        self.token = token
        super().__init__(f"lease {token} on shard {shard_id} lost{': ' + detail if detail else ''}")


class PendingShardsError(AnnotationError):
    def __init__(self, pending: Sequence[str]):
        self.pending = tuple(pending)
        super().__init__(f"shards still pending: {', '.join(self.pending)}")


class PromptError(AnnotationError):
    pass


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    dataset_id: str
    mode: str
    prompt_template_id: str = "default"
    max_retries: int = 2
    rate_limit: float = 10.0

    def __post_init__(self):
        if self.mode not in CAPTION_MODES:
            raise ValueError(f"mode must be one of {CAPTION_MODES}, got {self.mode!r}")
        if self.max_retries < 0:
            raise ValueError(f"max_retries must be >= 0, got {self.max_retries}")
        if self.rate_limit <= 0:
            raise ValueError(f"rate_limit must be positive, got {self.rate_limit}")

    def to_json_obj(self) -> dict:
        return {
            "task_id": self.task_id,
            "dataset_id": self.dataset_id,
            "mode": self.mode,
            "prompt_template_id": self.prompt_template_id,
            "max_retries": self.max_retries,
            "rate_limit": self.rate_limit,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "TaskSpec":
        return cls(**obj)


@dataclass(frozen=True)
class JobPlan:
    job_id: str
    task: TaskSpec
    pending_shards: tuple[str, ...]
    completed_shards: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "pending_shards", tuple(self.pending_shards))
        object.__setattr__(self, "completed_shards", frozenset(self.completed_shards))
        overlap = set(self.pending_shards) & self.completed_shards
        if overlap:
            raise ValueError(f"shards both pending and completed: {sorted(overlap)}")


@dataclass(frozen=True)
class ShardLease:
    shard_id: str
    worker_id: str
    lease_expiry: float
    checkpoint_offset: int
    token: str

    def __post_init__(self):
        if self.checkpoint_offset < 0:
            raise ValueError("checkpoint_offset must be >= 0")


@dataclass(frozen=True)
class SampleFailure:
    sample_id: str
    attempts: int
    error: str


@dataclass
class AnnotationResult:
    records: list[CaptionRecord] = field(default_factory=list)
    failures: list[SampleFailure] = field(default_factory=list)
    completed: bool = False
    processed: int = 0

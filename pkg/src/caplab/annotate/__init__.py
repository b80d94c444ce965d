"""Distributed recaption annotation: lease queue, workers, finalization."""

from .client import (
    CaptionerClient,
    CaptionerError,
    CaptionerUnreachableError,
    HttpCaptionerClient,
    MockCaptionerClient,
)
from .coordinator import Coordinator, plan_jobs
from .finalize import finalize, finalize_coordinator
from .model import (
    AnnotationError,
    AnnotationResult,
    JobPlan,
    LeaseLostError,
    PendingShardsError,
    PromptError,
    SampleFailure,
    ShardLease,
    TaskSpec,
    UnknownJobError,
)
from .prompts import build_prompt
from .worker import TransportFailureError, annotate_shard, run_job, run_worker_loop

__all__ = [
    "AnnotationError",
    "AnnotationResult",
    "CaptionerClient",
    "CaptionerError",
    "CaptionerUnreachableError",
    "Coordinator",
    "HttpCaptionerClient",
    "JobPlan",
    "LeaseLostError",
    "MockCaptionerClient",
    "PendingShardsError",
    "PromptError",
    "SampleFailure",
    "ShardLease",
    "TaskSpec",
    "TransportFailureError",
    "UnknownJobError",
    "annotate_shard",
    "build_prompt",
    "finalize",
    "finalize_coordinator",
    "plan_jobs",
    "run_job",
    "run_worker_loop",
]

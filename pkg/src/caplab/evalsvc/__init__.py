"""Blinded side-by-side caption rating: service core and HTTP layer."""

from .core import (
    EvalService,
    EvalServiceError,
    EvalTask,
    PresentedPair,
    TaskPair,
    presentation_order,
    select_gold,
    unblind_submission,
)
from .server import make_server, serve, start_background

__all__ = [
    "EvalService",
    "EvalServiceError",
    "EvalTask",
    "PresentedPair",
    "TaskPair",
    "make_server",
    "presentation_order",
    "select_gold",
    "serve",
    "start_background",
    "unblind_submission",
]

"""Blinded side-by-side rating service: state machine and persistence.

Raters see an image with two captions in randomized left/right order and
return 1-5 scores plus a good/same/bad verdict. The canonical orientation
(which caption came from which source) never leaves the server; verdicts
are un-blinded into canonical space on submission.

Presentation order is derived from a keyed hash of (seed, task, rater,
pair), so it is uniform across pairs yet stable across refetches and
restarts without journaling anything. All accepted submissions go through
an append-only journal and survive restart by replay.
"""

from __future__ import annotations

import hashlib
import random
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from ..quality import GsbJudgment, gold_accuracy, gsb_aggregate
from ..journal import Journal

WIRE_VERDICTS = ("left_better", "same", "right_better")


class EvalServiceError(Exception):
    pass


@dataclass(frozen=True)
class TaskPair:
    pair_id: str
    image_ref: str
    caption_left: str
    caption_right: str
    source_left: str = ""
    source_right: str = ""
    expected_verdict: str | None = None

    def __post_init__(self):
        if not self.pair_id:
            raise ValueError("pair_id must be non-empty")
        if self.expected_verdict is not None and self.expected_verdict not in ("G", "S", "B"):
            raise ValueError(f"expected_verdict must be G, S, or B, got {self.expected_verdict!r}")

    def to_json_obj(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "image_ref": self.image_ref,
            "caption_left": self.caption_left,
            "caption_right": self.caption_right,
            "source_left": self.source_left,
            "source_right": self.source_right,
            "expected_verdict": self.expected_verdict,
        }


@dataclass(frozen=True)
class PresentedPair:
    """A pair in presentation space; the order mapping stays server-side."""

    pair_id: str
    image_ref: str
    caption_a: str
    caption_b: str
    presented_order: str

    def shown_left(self) -> str:
        return self.caption_a if self.presented_order == "AB" else self.caption_b

    def shown_right(self) -> str:
        return self.caption_b if self.presented_order == "AB" else self.caption_a

    def wire_payload(self) -> dict:
        """What the rater's client receives: no sources, no canonical order."""
        return {
            "pair_id": self.pair_id,
            "image_ref": self.image_ref,
            "caption_left": self.shown_left(),
            "caption_right": self.shown_right(),
        }


@dataclass
class EvalTask:
    task_id: str
    pairs: list[TaskPair]
    gold: dict[str, str]
    gold_fraction: float
    seed: int
    raters: list[str]
    judgments: dict[tuple[str, str], GsbJudgment] = field(default_factory=dict)
    tokens: dict[str, tuple[str, str]] = field(default_factory=dict)  # token -> (rater, pair)

    def pair(self, pair_id: str) -> TaskPair:
        for p in self.pairs:
            if p.pair_id == pair_id:
                return p
        raise EvalServiceError(f"unknown pair {pair_id!r}")

    def judged_by(self, rater_id: str) -> set[str]:
        return {pair_id for (r, pair_id) in self.judgments if r == rater_id}


def presentation_order(seed: int, task_id: str, rater_id: str, pair_id: str) -> str:
    digest = hashlib.sha256(f"blind:{seed}:{task_id}:{rater_id}:{pair_id}".encode()).digest()
    return "AB" if digest[0] % 2 == 0 else "BA"


def unblind_submission(
    presented_order: str, score_left: int, score_right: int, verdict: str
) -> tuple[int, int, str]:
    """Map a presentation-space submission to canonical (a, b, G/S/B)."""
    if verdict not in WIRE_VERDICTS:
        raise EvalServiceError(f"verdict must be one of {WIRE_VERDICTS}, got {verdict!r}")
    if presented_order == "AB":
        score_a, score_b = score_left, score_right
        canonical = {"left_better": "G", "same": "S", "right_better": "B"}[verdict]
    else:
        score_a, score_b = score_right, score_left
        canonical = {"left_better": "B", "same": "S", "right_better": "G"}[verdict]
    return score_a, score_b, canonical


def select_gold(pairs: Sequence[TaskPair], gold_fraction: float, seed: int) -> dict[str, str]:
    """Deterministically choose the gold subset among pairs with known answers."""
    if not 0.0 <= gold_fraction <= 1.0:
        raise EvalServiceError(f"gold_fraction must be in [0,1], got {gold_fraction}")
    n_gold = round(len(pairs) * gold_fraction)
    if n_gold == 0:
        return {}
    eligible = sorted(p.pair_id for p in pairs if p.expected_verdict is not None)
    if len(eligible) < n_gold:
        raise EvalServiceError(
            f"need {n_gold} gold pairs but only {len(eligible)} carry an expected verdict"
        )
    chosen = random.Random(seed).sample(eligible, n_gold)
    by_id = {p.pair_id: p for p in pairs}
    return {pair_id: by_id[pair_id].expected_verdict for pair_id in sorted(chosen)}


class EvalService:
    """Journal-backed task store; every mutation is serialized and replayable."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self._journal = Journal(self.data_dir / "evalsvc.journal.jsonl")
        self._tasks: dict[str, EvalTask] = {}
        self._lock = threading.Lock()
        self._replay()

    def _replay(self) -> None:
        for event in self._journal.replay():
            if event["event"] == "task_created":
                task = EvalTask(
                    task_id=event["task_id"],
                    pairs=[TaskPair(**p) for p in event["pairs"]],
                    gold=dict(event["gold"]),
                    gold_fraction=event["gold_fraction"],
                    seed=event["seed"],
                    raters=list(event["raters"]),
                )
                self._tasks[task.task_id] = task
            elif event["event"] == "judgment":
                task = self._tasks[event["task_id"]]
                judgment = GsbJudgment(
                    pair_id=event["pair_id"],
                    rater_id=event["rater_id"],
                    score_a=event["score_a"],
                    score_b=event["score_b"],
                    verdict=event["verdict"],
                    presented_order=event["presented_order"],
                )
                task.judgments[(judgment.rater_id, judgment.pair_id)] = judgment
                task.tokens[event["token"]] = (judgment.rater_id, judgment.pair_id)

    # -- operations ----------------------------------------------------------

    def create_task(
        self,
        pairs: Sequence[TaskPair],
        raters: Sequence[str],
        gold_fraction: float = 0.10,
        seed: int = 0,
    ) -> str:
        if not pairs:
            raise EvalServiceError("a task needs at least one pair")
        if not raters:
            raise EvalServiceError("a task needs at least one registered rater")
        ids = [p.pair_id for p in pairs]
        if len(ids) != len(set(ids)):
            raise EvalServiceError("pair_ids must be unique")
        gold = select_gold(pairs, gold_fraction, seed)
        with self._lock:
            task_id = f"task-{len(self._tasks) + 1:04d}"
            task = EvalTask(
                task_id=task_id,
                pairs=list(pairs),
                gold=gold,
                gold_fraction=gold_fraction,
                seed=seed,
                raters=list(raters),
            )
            self._journal.append(
                {
                    "event": "task_created",
                    "task_id": task_id,
                    "pairs": [p.to_json_obj() for p in pairs],
                    "gold": gold,
                    "gold_fraction": gold_fraction,
                    "seed": seed,
                    "raters": list(raters),
                }
            )
            self._tasks[task_id] = task
        return task_id

    def _task(self, task_id: str) -> EvalTask:
        task = self._tasks.get(task_id)
        if task is None:
            raise EvalServiceError(f"unknown task {task_id!r}")
        return task

    def _check_rater(self, task: EvalTask, rater_id: str) -> None:
        if rater_id not in task.raters:
            raise EvalServiceError(f"rater {rater_id!r} not registered for {task.task_id}")

    def progress(self, task_id: str, rater_id: str) -> tuple[int, int]:
        task = self._task(task_id)
        self._check_rater(task, rater_id)
        return len(task.judged_by(rater_id)), len(task.pairs)

    def next_item(self, task_id: str, rater_id: str) -> PresentedPair | None:
        """The rater's next unjudged pair with a stable blinded order, or None."""
        task = self._task(task_id)
        self._check_rater(task, rater_id)
        judged = task.judged_by(rater_id)
        for pair in task.pairs:
            if pair.pair_id in judged:
                continue
            order = presentation_order(task.seed, task_id, rater_id, pair.pair_id)
            return PresentedPair(
                pair_id=pair.pair_id,
                image_ref=pair.image_ref,
                caption_a=pair.caption_left,
                caption_b=pair.caption_right,
                presented_order=order,
            )
        return None

    def submit(
        self,
        task_id: str,
        rater_id: str,
        pair_id: str,
        score_left: int,
        score_right: int,
        verdict: str,
        token: str,
    ) -> dict:
        """Accept one judgment; idempotent when retried with the same token."""
        for score in (score_left, score_right):
            if not isinstance(score, int) or not 1 <= score <= 5:
                raise EvalServiceError(f"scores must be integers in 1..5, got {score!r}")
        if not token:
            raise EvalServiceError("a submission token is required")
        with self._lock:
            task = self._task(task_id)
            self._check_rater(task, rater_id)
            if token in task.tokens:
                prev_rater, prev_pair = task.tokens[token]
                if (prev_rater, prev_pair) != (rater_id, pair_id):
                    raise EvalServiceError("token reused across a different submission")
                return {"ok": True, "duplicate": True}
            current = self.next_item(task_id, rater_id)
            if current is None or current.pair_id != pair_id:
                raise EvalServiceError(
                    f"pair {pair_id!r} is not currently presented to {rater_id!r}"
                )
            score_a, score_b, canonical = unblind_submission(
                current.presented_order, score_left, score_right, verdict
            )
            judgment = GsbJudgment(
                pair_id=pair_id,
                rater_id=rater_id,
                score_a=score_a,
                score_b=score_b,
                verdict=canonical,
                presented_order=current.presented_order,
            )
            self._journal.append(
                {
                    "event": "judgment",
                    "task_id": task_id,
                    "token": token,
                    **judgment.to_json_obj(),
                }
            )
            task.judgments[(rater_id, pair_id)] = judgment
            task.tokens[token] = (rater_id, pair_id)
        return {"ok": True, "duplicate": False}

    def report(self, task_id: str, gold_threshold: float = 0.95) -> dict:
        """Aggregate GSB rates, gold accuracy, and per-rater breakdown."""
        task = self._task(task_id)
        judgments = list(task.judgments.values())
        if not judgments:
            raise EvalServiceError(f"task {task_id!r} has no judgments yet")
        gsb = gsb_aggregate(judgments)
        per_rater = {}
        gold_matched = gold_total = 0
        for rater in task.raters:
            mine = [j for j in judgments if j.rater_id == rater]
            entry: dict = {"judged": len(mine)}
            judged_gold = {
                pid: verdict for pid, verdict in task.gold.items()
                if any(j.pair_id == pid for j in mine)
            }
            if judged_gold:
                check = gold_accuracy(mine, judged_gold, threshold=gold_threshold)
                entry.update(
                    gold_accuracy=check.accuracy,
                    gold_total=check.total,
                    flagged=not check.passed,
                )
                gold_matched += check.matched
                gold_total += check.total
            per_rater[rater] = entry
        report: dict = {
            "task_id": task_id,
            "gsb": {
                "win_rate": gsb.win_rate,
                "tie_rate": gsb.tie_rate,
                "loss_rate": gsb.loss_rate,
                "win_plus_tie": gsb.win_plus_tie,
                "total": gsb.total,
            },
            "per_rater": per_rater,
        }
        if gold_total:
            accuracy = gold_matched / gold_total
            report["gold"] = {
                "accuracy": accuracy,
                "passed": accuracy >= gold_threshold,
                "matched": gold_matched,
                "total": gold_total,
                "threshold": gold_threshold,
            }
        return report

    def close(self) -> None:
        self._journal.close()

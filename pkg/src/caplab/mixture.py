"""SFT data-mixture machinery: subsetting, quality evaluation loops, curricula.

Group weights are exact rationals so repeated halving and largest-remainder
allocation stay exact. The expensive train-then-benchmark step is abstracted
behind an oracle interface; a shell-command adapter lets real training runs
plug in, while tests use synthetic analytic oracles.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import subprocess
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Protocol, Sequence

from .corpus import (
    CaptionSample,
    DatasetManifest,
    ShardManifest,
    iter_jsonl,
    resolve_shard_path,
    utc_now_iso,
    write_shard,
)
from .quality import QualityDimensions

STANDARD_GROUPS = (
    "closed_form_vqa",
    "open_ended_vqa",
    "document_vqa",
    "math_reasoning",
    "pure_text",
)


class MixtureError(Exception):
    pass


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(value).limit_denominator(10**9)
    return Fraction(value)


@dataclass(frozen=True)
class DataGroup:
    name: str
    datasets: tuple[str, ...]
    weight: Fraction
    repeat_factor: int = 1

    def __post_init__(self):
        object.__setattr__(self, "datasets", tuple(self.datasets))
        object.__setattr__(self, "weight", _as_fraction(self.weight))
        if self.weight <= 0:
            raise ValueError(f"weight must be positive, got {self.weight}")
        if self.repeat_factor < 1:
            raise ValueError(f"repeat_factor must be >= 1, got {self.repeat_factor}")

    def to_json_obj(self) -> dict:
        return {
            "name": self.name,
            "datasets": list(self.datasets),
            "weight": str(self.weight),
            "repeat_factor": self.repeat_factor,
        }


@dataclass(frozen=True)
class MixtureSpec:
    groups: tuple[DataGroup, ...]
    total_budget: int

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        if not self.groups:
            raise ValueError("a mixture needs at least one group")
        names = [g.name for g in self.groups]
        if len(names) != len(set(names)):
            raise ValueError("group names must be unique")
        if self.total_budget < 1:
            raise ValueError(f"total_budget must be >= 1, got {self.total_budget}")

    def group(self, name: str) -> DataGroup:
        for g in self.groups:
            if g.name == name:
                return g
        raise KeyError(name)

    def weight_of(self, name: str) -> Fraction:
        return self.group(name).weight

    def with_weight(self, name: str, weight: Fraction) -> "MixtureSpec":
        self.group(name)
        groups = tuple(
            replace(g, weight=_as_fraction(weight)) if g.name == name else g
            for g in self.groups
        )
        return replace(self, groups=groups)

    def with_budget(self, budget: int) -> "MixtureSpec":
        return replace(self, total_budget=budget)

    def contains_dataset(self, dataset_id: str) -> bool:
        return any(dataset_id in g.datasets for g in self.groups)

    def allocation(self) -> dict[str, int]:
        """Per-group sample counts by largest remainder; sums to the budget."""
        total_weight = sum(g.weight for g in self.groups)
        quotas = [(g.name, g.weight / total_weight * self.total_budget) for g in self.groups]
        counts = {name: int(q) for name, q in quotas}  # Fraction floors toward zero
        leftover = self.total_budget - sum(counts.values())
        remainders = sorted(
            ((q - int(q), i) for i, (_, q) in enumerate(quotas)),
            key=lambda t: (-t[0], t[1]),
        )
        for _, i in remainders[:leftover]:
            counts[quotas[i][0]] += 1
        return counts

    def to_json_obj(self) -> dict:
        return {
            "groups": [g.to_json_obj() for g in self.groups],
            "total_budget": self.total_budget,
        }

    def spec_hash(self) -> str:
        payload = json.dumps(self.to_json_obj(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()[:16]


def mixture_from_json_obj(obj: dict) -> MixtureSpec:
    groups = tuple(
        DataGroup(
            name=g["name"],
            datasets=tuple(g.get("datasets", ())),
            weight=Fraction(g["weight"]),
            repeat_factor=g.get("repeat_factor", 1),
        )
        for g in obj["groups"]
    )
    return MixtureSpec(groups=groups, total_budget=obj["total_budget"])


class EvalOracle(Protocol):
    """Scores a data mixture at a training budget; deterministic per inputs."""

    def evaluate(self, mixture: MixtureSpec, budget: int) -> float: ...


class CommandOracle:
    """Adapter for external trainers: mixture JSON on stdin, score on stdout."""

    def __init__(self, command: str, timeout: float | None = None):
        self.command = command
        self.timeout = timeout

    def evaluate(self, mixture: MixtureSpec, budget: int) -> float:
        payload = json.dumps({"mixture": mixture.to_json_obj(), "budget": budget})
        proc = subprocess.run(
            self.command,
            shell=True,
            input=payload.encode("utf-8"),
            capture_output=True,
            timeout=self.timeout,
        )
        if proc.returncode != 0:
            raise MixtureError(
                f"oracle command failed ({proc.returncode}): {proc.stderr.decode()[:500]}"
            )
        try:
            return float(proc.stdout.decode().strip())
        except ValueError as exc:
            raise MixtureError(f"oracle printed non-numeric score: {proc.stdout!r}") from exc


def _stratum_hash(seed: int, sample_id: str) -> int:
    digest = hashlib.blake2b(f"{seed}:{sample_id}".encode("utf-8"), digest_size=8)
    return int.from_bytes(digest.digest(), "big")


def _stratum_targets(sizes: Mapping[str, int], k: int) -> dict[str, int]:
    """Water-filling: small strata are taken whole, the rest split evenly.

    Strata that are not capped by their own size end up within one sample
    of each other.
    """
    targets: dict[str, int] = {}
    open_strata = sorted(sizes)
    remaining = k
    while open_strata:
        fair = Fraction(remaining, len(open_strata))
        small = [n for n in open_strata if sizes[n] <= fair]
        if not small:
            break
        for n in small:
            targets[n] = sizes[n]
            remaining -= sizes[n]
        open_strata = [n for n in open_strata if n not in small]
    if open_strata:
        share, extra = divmod(remaining, len(open_strata))
        for i, n in enumerate(open_strata):
            targets[n] = share + (1 if i < extra else 0)
    return targets


def stratified_subset(
    manifest: DatasetManifest,
    root: str | Path,
    k: int,
    strata_key: str,
    seed: int,
    out_dir: str | Path,
) -> DatasetManifest:
    """Select an evenly distributed k-sample subset and write it as shards.

    One output shard per stratum; within a stratum, samples are picked by
    keyed hash so the choice is deterministic and order-independent.
    """
    out_dir = Path(out_dir)
    sizes: dict[str, int] = {}
    heaps: dict[str, list] = {}
    total = 0
    for shard in manifest.shards:
        for obj in iter_jsonl(resolve_shard_path(root, shard)):
            stratum = str(obj.get(strata_key, ""))
            sizes[stratum] = sizes.get(stratum, 0) + 1
            total += 1
            key = _stratum_hash(seed, str(obj.get("sample_id", total)))
            heaps.setdefault(stratum, []).append((key, obj))
    if k > total:
        raise MixtureError(f"k {k} exceeds total samples {total}")
    targets = _stratum_targets(sizes, k)

    shards: list[ShardManifest] = []
    for stratum in sorted(heaps):
        want = targets.get(stratum, 0)
        if want == 0:
            continue
        chosen = heapq.nsmallest(want, heaps[stratum], key=lambda t: (t[0], t[1]["sample_id"]))
        samples = [
            CaptionSample(
                sample_id=obj["sample_id"],
                image_ref=obj["image_ref"],
                source_dataset=obj["source_dataset"],
                language=obj["language"],
                alt_text=obj.get("alt_text"),
            )
            for _, obj in chosen
        ]
        shard_path = out_dir / f"{_safe_name(stratum)}.jsonl"
        shards.append(write_shard(samples, shard_path))
    subset = DatasetManifest(
        dataset_id=f"{manifest.dataset_id}-subset{k}",
        shards=tuple(shards),
        total_samples=sum(s.sample_count for s in shards),
        created_at=utc_now_iso(),
    )
    return subset


def _safe_name(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in name) or "unnamed"


@dataclass(frozen=True)
class EvalLedgerEntry:
    mixture_hash: str
    budget: int
    score: float

    def to_json_obj(self) -> dict:
        return dict(self.__dict__)


def quick_quality_eval(
    collection: MixtureSpec,
    k: int,
    oracle: EvalOracle,
    ledger: list[EvalLedgerEntry] | None = None,
) -> float:
    """Score a collection by evaluating its proportional k-sample subset."""
    if k > collection.total_budget:
        raise MixtureError(f"k {k} exceeds collection budget {collection.total_budget}")
    scaled = collection.with_budget(k)
    score = oracle.evaluate(scaled, k)
    if ledger is not None:
        ledger.append(EvalLedgerEntry(mixture_hash=scaled.spec_hash(), budget=k, score=score))
    return score


@dataclass(frozen=True)
class TrialRecord:
    pass_no: int
    group: str | None
    weight_tried: Fraction | None
    score: float
    retained: bool
    best_after: float

    def to_json_obj(self) -> dict:
        return {
            "pass_no": self.pass_no,
            "group": self.group,
            "weight_tried": str(self.weight_tried) if self.weight_tried is not None else None,
            "score": self.score,
            "retained": self.retained,
            "best_after": self.best_after,
        }


def composition_search(
    initial: MixtureSpec,
    oracle: EvalOracle,
    k: int,
    max_passes: int = 4,
) -> tuple[MixtureSpec, list[TrialRecord]]:
    """Greedy proportion search: halve each group, keep strict improvements.

    Groups are tried in declared order; passes repeat until one full pass
    retains nothing or max_passes is hit. The trail records the baseline
    evaluation plus every halving trial, so the oracle is called at most
    ``len(groups) * max_passes`` times beyond the single baseline call.
    """
    if max_passes < 1:
        raise MixtureError(f"max_passes must be >= 1, got {max_passes}")
    current = initial
    best = quick_quality_eval(current, k, oracle)
    trail: list[TrialRecord] = [
        TrialRecord(
            pass_no=0, group=None, weight_tried=None, score=best, retained=True, best_after=best
        )
    ]
    for pass_no in range(1, max_passes + 1):
        retained_any = False
        for group in current.groups:
            half = group.weight / 2
            candidate = current.with_weight(group.name, half)
            score = quick_quality_eval(candidate, k, oracle)
            retained = score > best
            if retained:
                current = candidate
                best = score
                retained_any = True
            trail.append(
                TrialRecord(
                    pass_no=pass_no,
                    group=group.name,
                    weight_tried=half,
                    score=score,
                    retained=retained,
                    best_after=best,
                )
            )
        if not retained_any:
            break
    return current, trail


INCREMENTAL_DECISIONS = ("accept_improves", "accept_maintains", "reject")


@dataclass(frozen=True)
class IncrementalDecision:
    decision: str
    score_with: float
    score_without: float
    epsilon: float

    def to_json_obj(self) -> dict:
        return dict(self.__dict__)


def incremental_eval(
    base: MixtureSpec,
    new_dataset: str,
    group_name: str,
    oracle: EvalOracle,
    k: int,
    epsilon: float = 0.1,
) -> IncrementalDecision:
    """Accept or reject adding a dataset, by score delta against epsilon.

    Exactly one decision fires for any score pair: improvement beyond
    epsilon accepts, a delta within epsilon accepts to grow scale, and a
    drop beyond epsilon rejects.
    """
    if base.contains_dataset(new_dataset):
        raise MixtureError(f"dataset {new_dataset!r} already in the mixture")
    base.group(group_name)  # fail fast on unknown group
    groups = tuple(
        replace(g, datasets=g.datasets + (new_dataset,)) if g.name == group_name else g
        for g in base.groups
    )
    with_new = replace(base, groups=groups)

    score_without = quick_quality_eval(base, k, oracle)
    score_with = quick_quality_eval(with_new, k, oracle)
    diff = score_with - score_without
    if diff > epsilon:
        decision = "accept_improves"
    elif diff < -epsilon:
        decision = "reject"
    else:
        decision = "accept_maintains"
    return IncrementalDecision(
        decision=decision,
        score_with=score_with,
        score_without=score_without,
        epsilon=epsilon,
    )


@dataclass(frozen=True)
class CurriculumStage:
    name: str
    mixture: MixtureSpec
    quality: QualityDimensions
    budget: int

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError(f"budget must be >= 1, got {self.budget}")


@dataclass(frozen=True)
class CurriculumPlan:
    stages: tuple[CurriculumStage, ...]

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        if not self.stages:
            raise ValueError("a curriculum needs at least one stage")


def curriculum_plan(stages: Sequence[CurriculumStage]) -> CurriculumPlan:
    """Validate stage ordering: data complexity must not decrease."""
    plan = CurriculumPlan(stages=tuple(stages))
    for prev, nxt in zip(plan.stages, plan.stages[1:]):
        if nxt.quality.complexity < prev.quality.complexity:
            raise MixtureError(
                f"complexity regresses from stage {prev.name!r} "
                f"({prev.quality.complexity}) to {nxt.name!r} ({nxt.quality.complexity})"
            )
    return plan


def _midranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        rank = (i + j) / 2 + 1  # average of 1-based positions
        for t in range(i, j + 1):
            ranks[order[t]] = rank
        i = j + 1
    return ranks


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Rank correlation with midranks; 0 when either ranking is constant."""
    if len(xs) != len(ys) or len(xs) < 2:
        raise MixtureError("need two aligned sequences of length >= 2")
    rx = _midranks(xs)
    ry = _midranks(ys)
    mx = sum(rx) / len(rx)
    my = sum(ry) / len(ry)
    sxx = sum((r - mx) ** 2 for r in rx)
    syy = sum((r - my) ** 2 for r in ry)
    if sxx == 0.0 or syy == 0.0:
        return 0.0
    sxy = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    return sxy / (sxx * syy) ** 0.5


@dataclass(frozen=True)
class RankConsistencyReport:
    pair_rho: dict[tuple, float]
    min_rho: float

    def to_json_obj(self) -> dict:
        return {
            "pairs": [
                {"sizes": list(sizes), "rho": rho} for sizes, rho in sorted(self.pair_rho.items())
            ],
            "min_rho": self.min_rho,
        }


def rank_consistency(scores: Mapping[str, Mapping[float, float]]) -> RankConsistencyReport:
    """Spearman rho between dataset rankings at every pair of data sizes."""
    datasets = sorted(scores)
    if len(datasets) < 2:
        raise MixtureError("need at least 2 datasets")
    sizes = sorted({size for per in scores.values() for size in per})
    if len(sizes) < 2:
        raise MixtureError("need at least 2 data sizes")
    holes = [
        (d, size) for d in datasets for size in sizes if size not in scores[d]
    ]
    if holes:
        listed = ", ".join(f"{d}@{size}" for d, size in holes)
        raise MixtureError(f"incomplete score grid, missing: {listed}")
    pair_rho: dict[tuple, float] = {}
    for i in range(len(sizes)):
        for j in range(i + 1, len(sizes)):
            a = [scores[d][sizes[i]] for d in datasets]
            b = [scores[d][sizes[j]] for d in datasets]
            pair_rho[(sizes[i], sizes[j])] = spearman(a, b)
    return RankConsistencyReport(pair_rho=pair_rho, min_rho=min(pair_rho.values()))

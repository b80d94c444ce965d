"""Caption and OCR quality scoring.

Covers the normalized-Levenshtein OCR score, judge-model caption scoring
against references, Good-Same-Bad aggregation of paired human verdicts,
gold-sample inspection accuracy, and per-stage quality-dimension reporting.

Scoring functions here are pure and thread-safe. ``judge_caption`` is the
one network-facing operation; its batch variant shares the token-bucket
rate limiting used by the annotation workers.
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

from .ratelimit import TokenBucket

GSB_VERDICTS = ("G", "S", "B")
PRESENTED_ORDERS = ("AB", "BA")


class QualityError(Exception):
    pass


class JudgeTransportError(QualityError):
    """The judge endpoint could not be reached or returned garbage transport-wise."""


class UnparseableJudgeReplyError(QualityError):
    def __init__(self, raw_reply: str, attempts: int):
        self.raw_reply = raw_reply
        self.attempts = attempts
        super().__init__(
            f"no numeric score found in judge reply after {attempts} attempts: {raw_reply!r}"
        )


def levenshtein(a: str, b: str) -> int:
    """Edit distance over Unicode code points, two-row dynamic programming."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost))
        prev = cur
    return prev[-1]


def anls(prediction: str, reference: str, tau: float = 0.5) -> float:
    """Similarity in [0,1]: 1 - normalized edit distance, zeroed at tau.

    Case-sensitive and computed over code points; OCR output is
    case-meaningful. Two empty strings count as a perfect match.
    """
    if not 0.0 < tau < 1.0:
        raise QualityError(f"tau must be in (0,1), got {tau}")
    if not prediction and not reference:
        return 1.0
    nl = levenshtein(prediction, reference) / max(len(prediction), len(reference))
    return 1.0 - nl if nl < tau else 0.0


@dataclass(frozen=True)
class OcrScore:
    per_sample: tuple[float, ...]
    mean: float
    tau: float

    def __post_init__(self):
        object.__setattr__(self, "per_sample", tuple(self.per_sample))
        for s in self.per_sample:
            if not 0.0 <= s <= 1.0:
                raise ValueError(f"per-sample score {s} outside [0,1]")


def ocr_benchmark_score(
    predictions: Sequence[str], references: Sequence[str], tau: float = 0.5
) -> OcrScore:
    if len(predictions) != len(references):
        raise QualityError(
            f"got {len(predictions)} predictions for {len(references)} references"
        )
    if not predictions:
        raise QualityError("empty benchmark")
    per_sample = tuple(anls(p, r, tau) for p, r in zip(predictions, references))
    return OcrScore(per_sample=per_sample, mean=sum(per_sample) / len(per_sample), tau=tau)


class JudgeClient(Protocol):
    def complete(self, prompt: str) -> str: ...


class HttpJudgeClient:
    """Minimal judge wire client: POST {prompt, model_id} -> {text}."""

    def __init__(self, endpoint: str, model_id: str = "judge", timeout: float = 60.0):
        self.endpoint = endpoint
        self.model_id = model_id
        self.timeout = timeout

    def complete(self, prompt: str) -> str:
        import json as _json
        import urllib.error
        import urllib.request

        payload = _json.dumps({"prompt": prompt, "model_id": self.model_id}).encode("utf-8")
        request = urllib.request.Request(
            self.endpoint, data=payload, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                body = _json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, TimeoutError) as exc:
            raise JudgeTransportError(f"judge endpoint unreachable: {exc}") from exc
        text = body.get("text") or body.get("response") or body.get("caption")
        if not text:
            raise JudgeTransportError(f"judge returned no text: {body!r}")
        return text


JUDGE_PROMPT_TEMPLATE = """You are grading a candidate image caption against reference captions.

Reference captions:
{references}

Candidate caption:
{candidate}

Judge the candidate on two axes:
- precision: every visual element the candidate mentions must appear in the references;
- recall: the candidate should cover the visual elements the references mention.

Weigh both axes equally. Reply with a single line of the form "score: X/5"
where X may be fractional, followed by a short justification.
"""


def render_judge_prompt(candidate: str, references: Sequence[str]) -> str:
    refs = "\n".join(f"{i}. {r}" for i, r in enumerate(references, start=1))
    return JUDGE_PROMPT_TEMPLATE.format(references=refs, candidate=candidate)


@dataclass(frozen=True)
class JudgeScore:
    raw: float
    rescaled: float
    rationale_text: str
    scale: str

    def __post_init__(self):
        if not 0.0 <= self.rescaled <= 100.0:
            raise ValueError(f"rescaled score {self.rescaled} outside [0,100]")


_FRACTION_RE = re.compile(r"(?:score\s*[:=]?\s*)?(\d+(?:\.\d+)?)\s*/\s*(\d+(?:\.\d+)?)", re.I)
_NUMBER_RE = re.compile(r"(\d+(?:\.\d+)?)")


def parse_judge_score(reply: str) -> tuple[float, float, str] | None:
    """Extract (raw, rescaled, scale) from a judge reply, or None.

    Accepts "score: X/D" fractions, then bare numbers read on a 0-5 scale
    if <= 5, else on a 0-100 scale if <= 100. The detected scale is
    recorded because the raw scale is a per-run guess, not a protocol.
    """
    m = _FRACTION_RE.search(reply)
    if m:
        raw, denom = float(m.group(1)), float(m.group(2))
        if denom > 0 and raw <= denom:
            return raw, raw / denom * 100.0, f"fraction/{m.group(2)}"
    m = _NUMBER_RE.search(reply)
    if m:
        raw = float(m.group(1))
        if raw <= 5.0:
            return raw, raw / 5.0 * 100.0, "bare-0-5"
        if raw <= 100.0:
            return raw, raw, "bare-0-100"
    return None


def judge_caption(
    candidate: str,
    references: Sequence[str],
    judge: JudgeClient,
    attempts: int = 3,
) -> JudgeScore:
    """Score a candidate caption with a judge model, rescaled to [0,100]."""
    if not references:
        raise QualityError("at least one reference caption is required")
    prompt = render_judge_prompt(candidate, references)
    last_reply = ""
    for _ in range(attempts):
        last_reply = judge.complete(prompt)
        parsed = parse_judge_score(last_reply)
        if parsed is not None:
            raw, rescaled, scale = parsed
            return JudgeScore(
                raw=raw, rescaled=rescaled, rationale_text=last_reply, scale=scale
            )
    raise UnparseableJudgeReplyError(last_reply, attempts)


def judge_captions_batch(
    candidates: Sequence[str],
    references_list: Sequence[Sequence[str]],
    judge: JudgeClient,
    max_workers: int = 4,
    rate_limit: float | None = None,
) -> list[JudgeScore]:
    """Bounded-parallel judge calls; order of results matches inputs."""
    if len(candidates) != len(references_list):
        raise QualityError("candidates and references_list must align")
    bucket = TokenBucket(rate_limit) if rate_limit else None

    def one(args):
        cand, refs = args
        if bucket:
            bucket.acquire()
        return judge_caption(cand, refs, judge)

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(one, zip(candidates, references_list)))


@dataclass(frozen=True)
class GsbJudgment:
    """One paired human verdict, stored in canonical A/B orientation."""

    pair_id: str
    rater_id: str
    score_a: int
    score_b: int
    verdict: str
    presented_order: str = "AB"

    def __post_init__(self):
        for s in (self.score_a, self.score_b):
            if not 1 <= s <= 5:
                raise ValueError(f"scores must be in 1..5, got {s}")
        if self.verdict not in GSB_VERDICTS:
            raise ValueError(f"verdict must be one of {GSB_VERDICTS}")
        if self.presented_order not in PRESENTED_ORDERS:
            raise ValueError(f"presented_order must be one of {PRESENTED_ORDERS}")

    def to_json_obj(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "rater_id": self.rater_id,
            "score_a": self.score_a,
            "score_b": self.score_b,
            "verdict": self.verdict,
            "presented_order": self.presented_order,
        }


def unblind(verdict: str, presented_order: str) -> str:
    """Map a presentation-space verdict into canonical space. Involutive."""
    if presented_order == "AB" or verdict == "S":
        return verdict
    return {"G": "B", "B": "G"}[verdict]


@dataclass(frozen=True)
class GsbReport:
    win_rate: float
    tie_rate: float
    loss_rate: float
    win_plus_tie: float
    total: int


def gsb_aggregate(judgments: Sequence[GsbJudgment]) -> GsbReport:
    """Aggregate canonical G/S/B verdicts into win, tie, and loss rates."""
    if not judgments:
        raise QualityError("no judgments to aggregate")
    n = len(judgments)
    wins = sum(1 for j in judgments if j.verdict == "G")
    ties = sum(1 for j in judgments if j.verdict == "S")
    losses = n - wins - ties
    return GsbReport(
        win_rate=wins / n,
        tie_rate=ties / n,
        loss_rate=losses / n,
        win_plus_tie=(wins + ties) / n,
        total=n,
    )


@dataclass(frozen=True)
class GoldCheck:
    accuracy: float
    passed: bool
    matched: int
    total: int


def gold_accuracy(
    judgments: Sequence[GsbJudgment],
    gold: Mapping[str, str],
    threshold: float = 0.95,
) -> GoldCheck:
    """Fraction of gold pairs whose judged verdict matches the expected one."""
    if not gold:
        raise QualityError("empty gold set")
    by_pair = {j.pair_id: j.verdict for j in judgments}
    missing = sorted(set(gold) - set(by_pair))
    if missing:
        raise QualityError(f"gold references unjudged pairs: {', '.join(missing)}")
    matched = sum(1 for pair_id, expected in gold.items() if by_pair[pair_id] == expected)
    accuracy = matched / len(gold)
    return GoldCheck(
        accuracy=accuracy, passed=accuracy >= threshold, matched=matched, total=len(gold)
    )


@dataclass(frozen=True)
class QualityDimensions:
    difficulty: float
    complexity: float
    relevance: float

    def __post_init__(self):
        for v in (self.difficulty, self.complexity, self.relevance):
            if not 1.0 <= v <= 5.0:
                raise ValueError(f"dimension mean {v} outside [1,5]")


DIMENSIONS = ("difficulty", "complexity", "relevance")


def quality_dimension_report(
    stage_ratings: Mapping[str, Mapping[str, Sequence[float]]],
) -> tuple[list[tuple[str, QualityDimensions]], dict[str, bool]]:
    """Per-stage dimension means plus a non-decreasing flag per dimension.

    ``stage_ratings`` maps stage name to a mapping of dimension name to 1-5
    ratings; stage order is the mapping's iteration order.
    """
    if not stage_ratings:
        raise QualityError("no stages provided")
    per_stage: list[tuple[str, QualityDimensions]] = []
    for stage, ratings in stage_ratings.items():
        means = {}
        for dim in DIMENSIONS:
            values = ratings.get(dim)
            if not values:
                raise QualityError(f"stage {stage!r} has no {dim} ratings")
            for v in values:
                if not 1.0 <= v <= 5.0:
                    raise QualityError(f"rating {v} outside [1,5] in stage {stage!r}")
            means[dim] = sum(values) / len(values)
        per_stage.append((stage, QualityDimensions(**means)))
    monotone = {
        dim: all(
            getattr(per_stage[i + 1][1], dim) >= getattr(per_stage[i][1], dim)
            for i in range(len(per_stage) - 1)
        )
        for dim in DIMENSIONS
    }
    return per_stage, monotone

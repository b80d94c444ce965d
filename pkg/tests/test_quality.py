from functools import lru_cache

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from caplab.quality import (
    judge_captions_batch,
    GsbJudgment,
    QualityError,
    UnparseableJudgeReplyError,
    anls,
    gold_accuracy,
    gsb_aggregate,
    judge_caption,
    levenshtein,
    ocr_benchmark_score,
    parse_judge_score,
    quality_dimension_report,
    unblind,
)


def brute_force_edit_distance(a: str, b: str) -> int:
    """Independent oracle: textbook recursion with memoization."""

    @lru_cache(maxsize=None)
    def rec(i: int, j: int) -> int:
        if i == 0:
            return j
        if j == 0:
            return i
        cost = 0 if a[i - 1] == b[j - 1] else 1
        return min(rec(i - 1, j) + 1, rec(i, j - 1) + 1, rec(i - 1, j - 1) + cost)

    return rec(len(a), len(b))


class TestAnls:
    def test_identical_strings_score_one(self):
        assert anls("hello", "hello") == 1.0

    def test_single_edit_scores_point_eight(self):
        # distance 1, max length 5: similarity 1 - 1/5
        assert anls("helo", "hello") == pytest.approx(0.8)

    def test_fully_dissimilar_zeroed_by_threshold(self):
        assert anls("abc", "xyz") == 0.0

    def test_both_empty_is_perfect_match(self):
        assert anls("", "") == 1.0

    def test_one_empty_is_zero(self):
        assert anls("", "abc") == 0.0

    def test_case_sensitive(self):
        assert anls("ABC", "abc") == 0.0

    def test_tau_must_be_strictly_inside_unit_interval(self):
        with pytest.raises(QualityError):
            anls("a", "a", tau=0.0)
        with pytest.raises(QualityError):
            anls("a", "a", tau=1.0)

    @given(a=st.text(max_size=12), b=st.text(max_size=12))
    @settings(max_examples=300, deadline=None)
    def test_matches_brute_force_oracle(self, a, b):
        assert levenshtein(a, b) == brute_force_edit_distance(a, b)

    @given(a=st.text(max_size=12), b=st.text(max_size=12))
    @settings(max_examples=200, deadline=None)
    def test_symmetry_and_range(self, a, b):
        left, right = anls(a, b), anls(b, a)
        assert left == right
        assert left == 0.0 or 0.5 < left <= 1.0  # zeroed below tau=0.5


class TestOcrBenchmark:
    def test_perfect_predictions(self):
        score = ocr_benchmark_score(["a", "bb"], ["a", "bb"])
        assert score.mean == 1.0

    def test_batch_mean_over_known_samples(self):
        score = ocr_benchmark_score(["hello", "helo", "abc"], ["hello", "hello", "xyz"])
        assert score.per_sample == (1.0, pytest.approx(0.8), 0.0)
        assert score.mean == pytest.approx(0.6)

    def test_empty_lists_rejected(self):
        with pytest.raises(QualityError):
            ocr_benchmark_score([], [])

    def test_length_mismatch_rejected(self):
        with pytest.raises(QualityError):
            ocr_benchmark_score(["a"], ["a", "b"])


class ScriptedJudge:
    def __init__(self, replies):
        self.replies = list(replies)
        self.prompts = []

    def complete(self, prompt):
        self.prompts.append(prompt)
        return self.replies.pop(0) if len(self.replies) > 1 else self.replies[0]


class TestJudgeCaption:
    def test_fraction_reply_rescaled(self):
        judge = ScriptedJudge(["score: 4/5 because it covers most elements"])
        score = judge_caption("a cat", ["a cat on a mat"], judge)
        assert score.rescaled == pytest.approx(80.0)
        assert score.raw == 4.0

    def test_prompt_contains_candidate_and_references(self):
        judge = ScriptedJudge(["score: 5/5"])
        judge_caption("candidate text", ["ref one", "ref two"], judge)
        prompt = judge.prompts[0]
        assert "candidate text" in prompt
        assert "ref one" in prompt and "ref two" in prompt

    def test_unparseable_after_attempts_carries_raw_reply(self):
        judge = ScriptedJudge(["no score here at all"])
        with pytest.raises(UnparseableJudgeReplyError) as exc_info:
            judge_caption("c", ["r"], judge)
        assert exc_info.value.attempts == 3
        assert "no score here" in exc_info.value.raw_reply

    def test_retry_succeeds_on_second_reply(self):
        judge = ScriptedJudge(["hmm let me think", "score: 3/5", "unused"])
        score = judge_caption("c", ["r"], judge)
        assert score.rescaled == pytest.approx(60.0)

    def test_requires_at_least_one_reference(self):
        with pytest.raises(QualityError):
            judge_caption("c", [], ScriptedJudge(["score: 5/5"]))

    @pytest.mark.parametrize(
        "reply,rescaled,scale",
        [
            ("score: 4/5", 80.0, "fraction/5"),
            ("score = 9/10", 90.0, "fraction/10"),
            ("I give it 3", 60.0, "bare-0-5"),
            ("quality: 85", 85.0, "bare-0-100"),
            ("4.5/5 overall", 90.0, "fraction/5"),
        ],
    )
    def test_scale_detection(self, reply, rescaled, scale):
        parsed = parse_judge_score(reply)
        assert parsed is not None
        assert parsed[1] == pytest.approx(rescaled)
        assert parsed[2] == scale

    def test_rescaling_preserves_order(self):
        replies = ["score: 1/5", "score: 2/5", "score: 4/5", "score: 5/5"]
        scores = [
            judge_caption("c", ["r"], ScriptedJudge([reply])).rescaled for reply in replies
        ]
        assert scores == sorted(scores)

    def test_batch_execution_preserves_input_order(self):
        class EchoJudge:
            def complete(self, prompt):
                # score tracks the candidate index embedded in the prompt
                idx = int(prompt.split("cand-")[1].split()[0])
                return f"score: {idx}/5"

        candidates = [f"cand-{i} text" for i in range(5)]
        refs = [["ref"]] * 5
        scores = judge_captions_batch(candidates, refs, EchoJudge(), max_workers=3)
        assert [s.raw for s in scores] == [0.0, 1.0, 2.0, 3.0, 4.0]

    def test_batch_respects_rate_limit_hook(self):
        judge = ScriptedJudge(["score: 3/5"])
        scores = judge_captions_batch(["a", "b"], [["r"], ["r"]], judge, rate_limit=10_000)
        assert len(scores) == 2


def _judgments(verdicts):
    return [
        GsbJudgment(pair_id=f"p{i}", rater_id="r", score_a=3, score_b=3, verdict=v)
        for i, v in enumerate(verdicts)
    ]


class TestGsbAggregate:
    def test_small_mixed_batch(self):
        report = gsb_aggregate(_judgments(["G", "G", "S", "B"]))
        assert report.win_plus_tie == pytest.approx(0.75)
        assert report.win_rate == pytest.approx(0.5)

    def test_all_same_is_pure_tie(self):
        report = gsb_aggregate(_judgments(["S"] * 6))
        assert report.win_plus_tie == 1.0
        assert report.win_rate == 0.0

    def test_empty_rejected(self):
        with pytest.raises(QualityError):
            gsb_aggregate([])

    @given(
        verdicts=st.lists(st.sampled_from(["G", "S", "B"]), min_size=1, max_size=200)
    )
    @settings(max_examples=100, deadline=None)
    def test_rates_sum_to_one(self, verdicts):
        report = gsb_aggregate(_judgments(verdicts))
        assert abs(report.win_rate + report.tie_rate + report.loss_rate - 1.0) < 1e-12

    @given(
        verdict=st.sampled_from(["G", "S", "B"]),
        order=st.sampled_from(["AB", "BA"]),
    )
    def test_unblind_is_an_involution(self, verdict, order):
        assert unblind(unblind(verdict, order), order) == verdict


class TestGoldAccuracy:
    def _run(self, n_match, n_total):
        judgments = [
            GsbJudgment(
                pair_id=f"p{i}",
                rater_id="r",
                score_a=3,
                score_b=3,
                verdict="G" if i < n_match else "B",
            )
            for i in range(n_total)
        ]
        gold = {f"p{i}": "G" for i in range(n_total)}
        return gold_accuracy(judgments, gold)

    def test_nineteen_of_twenty_passes(self):
        check = self._run(19, 20)
        assert check.accuracy == pytest.approx(0.95)
        assert check.passed

    def test_eighteen_of_twenty_fails(self):
        check = self._run(18, 20)
        assert check.accuracy == pytest.approx(0.90)
        assert not check.passed

    def test_empty_gold_rejected(self):
        with pytest.raises(QualityError):
            gold_accuracy(_judgments(["G"]), {})

    def test_unjudged_gold_pair_rejected(self):
        with pytest.raises(QualityError, match="unjudged"):
            gold_accuracy(_judgments(["G"]), {"p0": "G", "p9": "S"})


class TestQualityDimensionReport:
    def test_increasing_stages_are_monotone(self):
        stages = {
            "stage1": {"difficulty": [1.90], "complexity": [2.44], "relevance": [3.94]},
            "stage2": {"difficulty": [2.15], "complexity": [2.62], "relevance": [4.45]},
            "stage3": {"difficulty": [2.20], "complexity": [2.74], "relevance": [4.55]},
        }
        per_stage, monotone = quality_dimension_report(stages)
        assert [name for name, _ in per_stage] == ["stage1", "stage2", "stage3"]
        assert monotone == {"difficulty": True, "complexity": True, "relevance": True}

    def test_dip_breaks_monotonicity(self):
        stages = {
            "a": {"difficulty": [2.0], "complexity": [2.0], "relevance": [4.5]},
            "b": {"difficulty": [2.0], "complexity": [2.1], "relevance": [4.4]},
            "c": {"difficulty": [2.1], "complexity": [2.2], "relevance": [4.6]},
        }
        _, monotone = quality_dimension_report(stages)
        assert monotone["relevance"] is False
        assert monotone["complexity"] is True

    def test_single_stage_trivially_monotone(self):
        stages = {"only": {"difficulty": [3], "complexity": [3], "relevance": [3]}}
        _, monotone = quality_dimension_report(stages)
        assert all(monotone.values())

    def test_means_computed_from_ratings(self):
        stages = {"s": {"difficulty": [1, 2, 3], "complexity": [2, 2], "relevance": [5]}}
        per_stage, _ = quality_dimension_report(stages)
        assert per_stage[0][1].difficulty == pytest.approx(2.0)

    def test_missing_dimension_rejected(self):
        with pytest.raises(QualityError, match="complexity"):
            quality_dimension_report({"s": {"difficulty": [1], "relevance": [1]}})

    def test_out_of_range_rating_rejected(self):
        with pytest.raises(QualityError):
            quality_dimension_report(
                {"s": {"difficulty": [6], "complexity": [1], "relevance": [1]}}
            )

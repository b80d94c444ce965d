import sys
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from caplab.corpus import CaptionSample, build_manifest, read_shard, write_shard
from caplab.mixture import (
    CommandOracle,
    CurriculumStage,
    DataGroup,
    MixtureError,
    MixtureSpec,
    _stratum_targets,
    composition_search,
    curriculum_plan,
    incremental_eval,
    mixture_from_json_obj,
    quick_quality_eval,
    rank_consistency,
    spearman,
    stratified_subset,
)
from caplab.quality import QualityDimensions


def _mixture(weights, budget=1000):
    groups = tuple(
        DataGroup(name=name, datasets=(f"{name}-ds",), weight=Fraction(w))
        for name, w in weights.items()
    )
    return MixtureSpec(groups=groups, total_budget=budget)


class WeightOracle:
    """score = weight of one group; analytic and deterministic."""

    def __init__(self, group):
        self.group = group
        self.calls = 0

    def evaluate(self, mixture, budget):
        self.calls += 1
        return float(mixture.weight_of(self.group))


class PenaltyOracle:
    """score = 1 - weight of one group: halving that group always helps."""

    def __init__(self, group):
        self.group = group
        self.calls = 0

    def evaluate(self, mixture, budget):
        self.calls += 1
        return 1.0 - float(mixture.weight_of(self.group))


class TestAllocation:
    def test_allocation_sums_to_budget(self):
        spec = _mixture({"a": 1, "b": 1, "c": 1}, budget=10)
        alloc = spec.allocation()
        assert sum(alloc.values()) == 10
        assert sorted(alloc.values()) == [3, 3, 4]

    @given(
        weights=st.lists(st.integers(min_value=1, max_value=50), min_size=1, max_size=8),
        budget=st.integers(min_value=1, max_value=10_000),
    )
    @settings(max_examples=150, deadline=None)
    def test_largest_remainder_always_exact(self, weights, budget):
        spec = MixtureSpec(
            groups=tuple(
                DataGroup(name=f"g{i}", datasets=(), weight=Fraction(w))
                for i, w in enumerate(weights)
            ),
            total_budget=budget,
        )
        alloc = spec.allocation()
        assert sum(alloc.values()) == budget
        total_w = sum(weights)
        for i, w in enumerate(weights):
            exact = Fraction(w, total_w) * budget
            assert abs(alloc[f"g{i}"] - exact) < 1

    def test_mixture_json_round_trip(self):
        spec = _mixture({"document_vqa": Fraction(3, 2), "pure_text": 1})
        assert mixture_from_json_obj(spec.to_json_obj()) == spec


class TestStratumTargets:
    def test_even_strata_split_evenly(self):
        assert _stratum_targets({"a": 100, "b": 100, "c": 100}, 9) == {"a": 3, "b": 3, "c": 3}

    def test_small_stratum_capped_remainder_redistributed(self):
        targets = _stratum_targets({"a": 5, "b": 100, "c": 100}, 60)
        assert targets["a"] == 5
        assert sorted((targets["b"], targets["c"])) == [27, 28]

    def test_k_equals_total_takes_everything(self):
        sizes = {"a": 3, "b": 7}
        assert _stratum_targets(sizes, 10) == sizes

    @given(
        sizes=st.dictionaries(
            st.text(alphabet="abcdefgh", min_size=1, max_size=2),
            st.integers(min_value=1, max_value=60),
            min_size=1,
            max_size=8,
        ),
        data=st.data(),
    )
    @settings(max_examples=200, deadline=None)
    def test_balance_bound_holds_for_random_configs(self, sizes, data):
        total = sum(sizes.values())
        k = data.draw(st.integers(min_value=0, max_value=total))
        targets = _stratum_targets(sizes, k)
        assert sum(targets.values()) == k
        uncapped = [targets[n] for n in sizes if targets[n] < sizes[n]]
        if uncapped:
            assert max(uncapped) - min(uncapped) <= 1
            # capped strata are never larger than what uncapped ones got + 1
        for name in sizes:
            assert 0 <= targets[name] <= sizes[name]


def _write_strata_dataset(tmp_path, sizes):
    i = 0
    for stratum, size in sizes.items():
        samples = []
        for _ in range(size):
            samples.append(
                CaptionSample(
                    sample_id=f"s{i:05d}",
                    image_ref=f"img://{i}",
                    source_dataset=stratum,
                    language="EN",
                )
            )
            i += 1
        write_shard(samples, tmp_path / f"{stratum}.jsonl")
    return build_manifest(tmp_path, dataset_id="strata")


class TestStratifiedSubset:
    def test_subset_counts_and_determinism(self, tmp_path):
        manifest = _write_strata_dataset(tmp_path / "src", {"x": 5, "y": 100, "z": 100})
        out_a = tmp_path / "out_a"
        out_b = tmp_path / "out_b"
        sub_a = stratified_subset(manifest, tmp_path / "src", 60, "source_dataset", 9, out_a)
        sub_b = stratified_subset(manifest, tmp_path / "src", 60, "source_dataset", 9, out_b)
        assert sub_a.total_samples == 60
        counts = {s.shard_id: s.sample_count for s in sub_a.shards}
        assert counts["x"] == 5
        assert sorted((counts["y"], counts["z"])) == [27, 28]
        ids_a = [s.sample_id for shard in sub_a.shards for s in read_shard(out_a / shard.path)]
        ids_b = [s.sample_id for shard in sub_b.shards for s in read_shard(out_b / shard.path)]
        assert ids_a == ids_b

    def test_k_equal_total_is_identity_subset(self, tmp_path):
        manifest = _write_strata_dataset(tmp_path / "src", {"x": 4, "y": 6})
        subset = stratified_subset(
            manifest, tmp_path / "src", 10, "source_dataset", 0, tmp_path / "out"
        )
        assert subset.total_samples == 10
        all_ids = {
            s.sample_id for shard in subset.shards for s in read_shard(tmp_path / "out" / shard.path)
        }
        assert all_ids == {f"s{i:05d}" for i in range(10)}

    def test_k_above_total_rejected(self, tmp_path):
        manifest = _write_strata_dataset(tmp_path / "src", {"x": 3})
        with pytest.raises(MixtureError, match="exceeds"):
            stratified_subset(manifest, tmp_path / "src", 4, "source_dataset", 0, tmp_path / "o")


class TestQuickQualityEval:
    def test_oracle_passthrough(self):
        spec = _mixture({"document_vqa": Fraction(1, 4), "pure_text": Fraction(3, 4)})
        score = quick_quality_eval(spec, 100, WeightOracle("document_vqa"))
        assert score == pytest.approx(0.25)

    def test_deterministic_for_same_inputs(self):
        spec = _mixture({"a": 1, "b": 2})
        oracle = WeightOracle("a")
        assert quick_quality_eval(spec, 10, oracle) == quick_quality_eval(spec, 10, oracle)

    def test_ranking_matches_analytic_oracle(self):
        better = _mixture({"document_vqa": Fraction(2), "pure_text": Fraction(1)})
        worse = _mixture({"document_vqa": Fraction(1), "pure_text": Fraction(1)})
        oracle = WeightOracle("document_vqa")
        assert quick_quality_eval(better, 10, oracle) > quick_quality_eval(worse, 10, oracle)

    def test_k_above_budget_rejected(self):
        with pytest.raises(MixtureError):
            quick_quality_eval(_mixture({"a": 1}, budget=10), 11, WeightOracle("a"))

    def test_ledger_records_trials(self):
        ledger = []
        spec = _mixture({"a": 1})
        quick_quality_eval(spec, 10, WeightOracle("a"), ledger=ledger)
        assert len(ledger) == 1
        assert ledger[0].budget == 10


class TestCompositionSearch:
    def test_penalized_group_halved_every_pass(self):
        spec = _mixture({"a": 1, "x": 1, "b": 1})
        oracle = PenaltyOracle("x")
        result, trail = composition_search(spec, oracle, k=100, max_passes=3)
        assert result.weight_of("x") == Fraction(1, 8)  # halved 3 times
        assert result.weight_of("a") == Fraction(1)
        assert result.weight_of("b") == Fraction(1)
        # trial evaluations bounded by groups x passes, plus one baseline
        assert oracle.calls <= 3 * 3 + 1
        best_scores = [t.best_after for t in trail]
        assert best_scores == sorted(best_scores)

    def test_constant_oracle_changes_nothing(self):
        spec = _mixture({"a": 1, "b": 2})

        class Constant:
            calls = 0

            def evaluate(self, mixture, budget):
                Constant.calls += 1
                return 5.0

        result, trail = composition_search(spec, Constant(), k=10, max_passes=5)
        assert result == spec
        # one pass of trials, nothing retained, then stop
        assert Constant.calls == 1 + 2
        assert all(not t.retained for t in trail if t.group is not None)

    def test_balanced_mixture_under_balance_oracle_is_stable(self):
        spec = _mixture({"a": 1, "b": 1, "c": 1})

        class BalanceOracle:
            def evaluate(self, mixture, budget):
                weights = [float(g.weight) for g in mixture.groups]
                mean = sum(weights) / len(weights)
                return -sum((w - mean) ** 2 for w in weights)

        # analytic check: halving any single group strictly worsens the score
        oracle = BalanceOracle()
        base = oracle.evaluate(spec, 10)
        for g in spec.groups:
            assert oracle.evaluate(spec.with_weight(g.name, g.weight / 2), 10) < base

        result, trail = composition_search(spec, oracle, k=10, max_passes=4)
        assert result == spec

    def test_trail_records_every_trial(self):
        spec = _mixture({"a": 1, "x": 1})
        _, trail = composition_search(spec, PenaltyOracle("x"), k=10, max_passes=2)
        trials = [t for t in trail if t.group is not None]
        assert len(trials) == 4  # 2 groups x 2 passes
        assert {t.group for t in trials} == {"a", "x"}

    def test_weights_never_increase(self):
        spec = _mixture({"a": 3, "x": 5})
        result, _ = composition_search(spec, PenaltyOracle("x"), k=10, max_passes=3)
        for g in result.groups:
            assert g.weight <= spec.weight_of(g.name)


class TestIncrementalEval:
    class FavorNew:
        def __init__(self, dataset, delta):
            self.dataset = dataset
            self.delta = delta

        def evaluate(self, mixture, budget):
            return 10.0 + (self.delta if mixture.contains_dataset(self.dataset) else 0.0)

    def test_improvement_accepted(self):
        spec = _mixture({"a": 1})
        decision = incremental_eval(spec, "newds", "a", self.FavorNew("newds", 1.0), 10)
        assert decision.decision == "accept_improves"

    def test_flat_diff_maintains(self):
        spec = _mixture({"a": 1})
        decision = incremental_eval(spec, "newds", "a", self.FavorNew("newds", 0.0), 10)
        assert decision.decision == "accept_maintains"

    def test_regression_rejected(self):
        spec = _mixture({"a": 1})
        decision = incremental_eval(spec, "newds", "a", self.FavorNew("newds", -0.5), 10)
        assert decision.decision == "reject"

    def test_duplicate_dataset_rejected(self):
        spec = _mixture({"a": 1})
        with pytest.raises(MixtureError, match="already"):
            incremental_eval(spec, "a-ds", "a", self.FavorNew("a-ds", 1.0), 10)

    @given(delta=st.floats(min_value=-5, max_value=5, allow_nan=False))
    @settings(max_examples=100, deadline=None)
    def test_exactly_one_decision_fires(self, delta):
        spec = _mixture({"a": 1})
        decision = incremental_eval(spec, "n", "a", self.FavorNew("n", delta), 10)
        matches = [
            decision.decision == "accept_improves" and delta > 0.1,
            decision.decision == "accept_maintains" and abs(delta) <= 0.1,
            decision.decision == "reject" and delta < -0.1,
        ]
        assert sum(matches) == 1


def _stage(name, complexity, budget=1000):
    return CurriculumStage(
        name=name,
        mixture=_mixture({"a": 1}, budget=budget),
        quality=QualityDimensions(difficulty=2.0, complexity=complexity, relevance=4.0),
        budget=budget,
    )


class TestCurriculumPlan:
    def test_increasing_complexity_is_valid(self):
        plan = curriculum_plan(
            [
                _stage("knowledge", 2.44, 21_000_000),
                _stage("instruction", 2.62, 12_000_000),
                _stage("preference", 2.74, 3_500_000),
            ]
        )
        assert [s.name for s in plan.stages] == ["knowledge", "instruction", "preference"]

    def test_complexity_regression_names_the_pair(self):
        with pytest.raises(MixtureError, match="'mid'.*'late'"):
            curriculum_plan([_stage("early", 2.0), _stage("mid", 2.6), _stage("late", 2.4)])

    def test_single_stage_valid(self):
        assert len(curriculum_plan([_stage("only", 3.0)]).stages) == 1

    def test_equal_complexity_allowed(self):
        plan = curriculum_plan([_stage("a", 2.5), _stage("b", 2.5)])
        assert len(plan.stages) == 2


class TestRankConsistency:
    def test_identical_rankings_everywhere(self):
        scores = {
            "d1": {1e3: 10.0, 1e4: 20.0, 1e5: 30.0},
            "d2": {1e3: 11.0, 1e4: 21.0, 1e5: 31.0},
            "d3": {1e3: 12.0, 1e4: 22.0, 1e5: 32.0},
        }
        report = rank_consistency(scores)
        assert report.min_rho == pytest.approx(1.0)
        assert all(rho == pytest.approx(1.0) for rho in report.pair_rho.values())

    def test_full_reversal_gives_minus_one(self):
        scores = {
            "d1": {10.0: 1.0, 20.0: 3.0},
            "d2": {10.0: 2.0, 20.0: 2.5},
            "d3": {10.0: 3.0, 20.0: 1.0},
        }
        report = rank_consistency(scores)
        assert report.pair_rho[(10.0, 20.0)] == pytest.approx(-1.0)

    def test_tie_at_one_size_gives_zero(self):
        scores = {"d1": {1.0: 5.0, 2.0: 6.0}, "d2": {1.0: 5.0, 2.0: 7.0}}
        report = rank_consistency(scores)
        assert report.pair_rho[(1.0, 2.0)] == 0.0

    def test_incomplete_grid_lists_holes(self):
        scores = {"d1": {1.0: 5.0, 2.0: 6.0}, "d2": {1.0: 5.0}}
        with pytest.raises(MixtureError, match="d2@2.0"):
            rank_consistency(scores)

    def test_spearman_midranks_by_hand(self):
        # xs ranks [1.5, 1.5, 3], ys ranks [1, 2, 3]
        assert spearman([4.0, 4.0, 9.0], [1.0, 2.0, 3.0]) == pytest.approx(0.866, abs=1e-3)


class TestCommandOracle:
    def test_shell_contract(self):
        cmd = (
            f"{sys.executable} -c \"import json,sys; d=json.load(sys.stdin); "
            f"print(d['budget'] * 0.5)\""
        )
        oracle = CommandOracle(cmd)
        assert oracle.evaluate(_mixture({"a": 1}), 10) == pytest.approx(5.0)

    def test_failing_command_raises(self):
        oracle = CommandOracle(f"{sys.executable} -c 'import sys; sys.exit(3)'")
        with pytest.raises(MixtureError, match="failed"):
            oracle.evaluate(_mixture({"a": 1}), 10)

    def test_non_numeric_output_raises(self):
        oracle = CommandOracle("echo not-a-number")
        with pytest.raises(MixtureError, match="non-numeric"):
            oracle.evaluate(_mixture({"a": 1}), 10)

import math
import random

import pytest

from svadyn.analysis import (
    AccuracyCell,
    PhaseLabel,
    TrajectoryPoint,
    TrajectorySeries,
    aggregate_score,
    aggregate_trajectory,
    bootstrap_ci,
    build_trajectory,
    detect_changepoints,
    disaggregate,
    heuristic_alignment,
    label_for_order,
    label_phases,
    pooled_trajectory,
)
from svadyn.scoring import (
    Aggregation,
    CandidateScore,
    NGramOracleScorer,
    ScoreRecord,
    ScorerFamily,
    ScorerId,
    VerbClass,
    score_items,
)

ORACLE_ID = ScorerId(family=ScorerFamily.NGRAM_ORACLE, model_name="ngram", order=1)


def fake_record(item_id, decision, scorer=ORACLE_ID, verb_class=VerbClass.SINGLE_TOKEN):
    good, bad = (-1.0, -2.0) if decision else (-2.0, -1.0)
    return ScoreRecord(
        item_id=item_id,
        scorer=scorer,
        correct=CandidateScore(" a", ("a",), (good,)),
        incorrect=CandidateScore(" b", ("b",), (bad,)),
        verb_class=verb_class,
        decision_sum=decision,
        decision_mean=decision,
    )


def stepped_id(step, seed=0, model="synthetic", size="toy"):
    return ScorerId(
        family=ScorerFamily.NEURAL_PROVIDER, model_name=model, size_label=size, seed=seed, step=step
    )


def series_from_accuracies(accuracies, n=100, start_step=0):
    points = []
    for i, accuracy in enumerate(accuracies):
        step = start_step + i
        cell = AccuracyCell(
            group={"step": step}, n=n, accuracy=accuracy, ci_low=accuracy, ci_high=accuracy
        )
        points.append(TrajectoryPoint(step=step, cell=cell))
    return TrajectorySeries(key={"model": "m"}, condition="S", points=tuple(points))


class TestDisaggregate:
    def test_partition_counts(self, pile_index, all_items, items_by_id):
        records = score_items(NGramOracleScorer(pile_index, 1), all_items).records
        cells = disaggregate(records, ["condition"], items=items_by_id, resamples=10)
        assert sum(c.n for c in cells) == len(records)
        assert {c.group["condition"] for c in cells} == {"S", "P", "SS", "SP", "PS", "PP"}

    def test_four_conditions_two_each(self, items_by_id, all_items):
        nounpp = [i for i in all_items if i.verb_lemma in ("be",)]
        records = []
        for item in nounpp:
            records.append(fake_record(item.id, True))
            # a second scorer's record for the same item
            records.append(fake_record(item.id, True, scorer=stepped_id(0)))
        cells = disaggregate(records, ["condition"], items=items_by_id, resamples=10)
        by_label = {c.group["condition"]: c for c in cells}
        assert by_label["SS"].n == 4  # 2 be templates x 2 scorers
        assert all(c.accuracy == 1.0 for c in cells)

    def test_unigram_be_pattern(self, pile_index, all_items, items_by_id):
        be_items = [i for i in all_items if i.verb_lemma == "be"]
        records = score_items(NGramOracleScorer(pile_index, 1), be_items).records
        cells = disaggregate(records, ["condition"], items=items_by_id, resamples=10)
        accuracy = {c.group["condition"]: c.accuracy for c in cells}
        assert accuracy == {"S": 1.0, "P": 0.0, "SS": 1.0, "SP": 1.0, "PS": 0.0, "PP": 0.0}

    def test_unknown_dim(self):
        with pytest.raises(ValueError):
            disaggregate([fake_record("x", True)], ["flavor"])

    def test_empty_dims(self):
        with pytest.raises(ValueError):
            disaggregate([fake_record("x", True)], [])

    def test_item_dims_need_items(self):
        with pytest.raises(ValueError):
            disaggregate([fake_record("x", True)], ["condition"])

    def test_record_dims_work_without_items(self):
        cells = disaggregate([fake_record("x", True)], ["order"], resamples=5)
        assert cells[0].group == {"order": 1}

    def test_mean_mode_uses_mean_flag(self):
        record = ScoreRecord(
            item_id="x",
            scorer=ORACLE_ID,
            correct=CandidateScore(" a b", ("a", "b"), (-1.0, -4.0)),
            incorrect=CandidateScore(" c", ("c",), (-3.0,)),
            verb_class=VerbClass.MULTI_TOKEN,
            decision_sum=False,  # -5 < -3
            decision_mean=True,  # -2.5 > -3
        )
        sum_cells = disaggregate([record], ["order"], Aggregation.SUM, resamples=5)
        mean_cells = disaggregate([record], ["order"], Aggregation.MEAN, resamples=5)
        assert sum_cells[0].accuracy == 0.0
        assert mean_cells[0].accuracy == 1.0

    def test_ci_brackets_accuracy(self):
        rng = random.Random(3)
        records = [fake_record(f"i{k}", rng.random() < 0.6) for k in range(40)]
        for cell in disaggregate(records, ["order"], resamples=200, seed=11):
            assert cell.ci_low <= cell.accuracy <= cell.ci_high


class TestAggregateScore:
    def cells(self, accuracies, ns=None):
        ns = ns or [4] * len(accuracies)
        return [
            AccuracyCell(group={"condition": label}, n=n, accuracy=a, ci_low=a, ci_high=a)
            for label, a, n in zip(["S", "P", "SS", "SP", "PS", "PP"], accuracies, ns)
        ]

    def test_mean(self):
        assert aggregate_score(self.cells([1.0, 1.0, 0.0, 0.0])) == 0.5
        assert aggregate_score(self.cells([1.0, 1.0, 1.0, 1.0])) == 1.0

    def test_unweighted(self):
        # unequal n must not matter
        assert aggregate_score(self.cells([1.0, 0.0], ns=[100, 2])) == 0.5

    def test_duplicate_condition(self):
        cells = self.cells([1.0, 1.0])
        cells[1] = AccuracyCell(group={"condition": "S"}, n=4, accuracy=1.0, ci_low=1.0, ci_high=1.0)
        with pytest.raises(ValueError):
            aggregate_score(cells)

    def test_missing_condition(self):
        with pytest.raises(ValueError):
            aggregate_score(self.cells([1.0, 1.0]), expected_conditions=["S", "P", "SS"])


class TestBootstrap:
    def test_degenerate_all_true(self):
        assert bootstrap_ci([True] * 12, 500, 0.05, seed=1) == (1.0, 1.0)

    def test_degenerate_all_false(self):
        assert bootstrap_ci([False] * 12, 500, 0.05, seed=1) == (0.0, 0.0)

    def test_interval_contains_point_estimate(self):
        outcomes = [True] * 6 + [False] * 4
        low, high = bootstrap_ci(outcomes, 1000, 0.05, seed=42)
        assert 0.0 <= low <= 0.6 <= high <= 1.0

    def test_deterministic(self):
        outcomes = [True, False] * 10
        assert bootstrap_ci(outcomes, 300, 0.05, seed=9) == bootstrap_ci(outcomes, 300, 0.05, seed=9)

    def test_validation(self):
        with pytest.raises(ValueError):
            bootstrap_ci([], 10, 0.05)
        with pytest.raises(ValueError):
            bootstrap_ci([True], 0, 0.05)
        with pytest.raises(ValueError):
            bootstrap_ci([True], 10, 1.5)


class TestTrajectory:
    def make_records(self, steps, seeds=(0,), per=3, decision=True):
        records = []
        for seed in seeds:
            for step in steps:
                for k in range(per):
                    records.append(fake_record(f"item{k}", decision, scorer=stepped_id(step, seed)))
        return records

    def items_map(self, per=3, all_items=None):
        return {f"item{k}": all_items[k] for k in range(per)}

    def test_points_sorted(self, all_items):
        records = self.make_records([20, 0, 10])
        series = build_trajectory(records, self.items_map(all_items=all_items), resamples=5)
        assert all(ts.steps == [0, 10, 20] for ts in series)

    def test_single_step(self, all_items):
        series = build_trajectory(
            self.make_records([5]), self.items_map(all_items=all_items), resamples=5
        )
        assert all(len(ts.points) == 1 for ts in series)

    def test_seed_pooling_triples_n(self, all_items):
        records = self.make_records([0], seeds=(0, 1, 2))
        items = self.items_map(all_items=all_items)
        per_seed = build_trajectory(records, items, resamples=5)
        pooled = build_trajectory(records, items, pool_seeds=True, resamples=5)
        assert len(pooled) == len(per_seed) // 3
        for pooled_ts in pooled:
            matching = [
                ts for ts in per_seed
                if ts.condition == pooled_ts.condition
                and ts.key["model"] == pooled_ts.key["model"]
            ]
            assert pooled_ts.points[0].cell.n == 3 * matching[0].points[0].cell.n

    def test_step_required(self, all_items):
        with pytest.raises(ValueError):
            build_trajectory([fake_record("item0", True)], self.items_map(all_items=all_items))

    def test_aggregate_is_unweighted_mean(self):
        a = series_from_accuracies([1.0, 1.0])
        b = TrajectorySeries(key={"model": "m"}, condition="P",
                             points=series_from_accuracies([0.0, 0.5]).points)
        agg = aggregate_trajectory([a, b])
        assert [p.cell.accuracy for p in agg.points] == [0.5, 0.75]
        pooled = pooled_trajectory([a, b], resamples=5)
        assert pooled.points[0].cell.n == 200


class TestChangepoints:
    def loglik(self, k, n):
        K, N = sum(k), sum(n)
        ll = 0.0
        if K:
            ll += K * math.log(K / N)
        if N - K:
            ll += (N - K) * math.log((N - K) / N)
        return ll

    def exhaustive_single_split(self, accs, n=100, min_segment=2):
        k = [round(a * n) for a in accs]
        ns = [n] * len(accs)
        best, best_gain = None, -math.inf
        for i in range(min_segment, len(accs) - min_segment + 1):
            gain = (
                self.loglik(k[:i], ns[:i])
                + self.loglik(k[i:], ns[i:])
                - self.loglik(k, ns)
            )
            if gain > best_gain:
                best, best_gain = i, gain
        return best, best_gain

    def test_two_plateaus_exact(self):
        accs = [0.1] * 8 + [0.9] * 8
        series = series_from_accuracies(accs)
        assert detect_changepoints(series, min_segment=2) == [8]
        assert self.exhaustive_single_split(accs)[0] == 8

    def test_constant_series(self):
        series = series_from_accuracies([0.7] * 12)
        assert detect_changepoints(series, min_segment=2) == []

    def test_three_plateaus_exact(self):
        accs = [0.1] * 8 + [0.5] * 8 + [0.9] * 8
        series = series_from_accuracies(accs)
        assert detect_changepoints(series, min_segment=2) == [8, 16]

    def test_two_split_exhaustive_agreement(self):
        accs = [0.1] * 8 + [0.5] * 8 + [0.9] * 8
        k = [round(a * 100) for a in accs]
        ns = [100] * len(accs)
        best, best_ll = None, -math.inf
        for i in range(2, len(accs) - 3):
            for j in range(i + 2, len(accs) - 1):
                ll = self.loglik(k[:i], ns[:i]) + self.loglik(k[i:j], ns[i:j]) + self.loglik(k[j:], ns[j:])
                if ll > best_ll:
                    best, best_ll = (i, j), ll
        assert best == (8, 16)

    def test_step_shift_invariance(self):
        accs = [0.2] * 5 + [0.8] * 5
        base = detect_changepoints(series_from_accuracies(accs), min_segment=2)
        shifted = detect_changepoints(series_from_accuracies(accs, start_step=1000), min_segment=2)
        assert shifted == [b + 1000 for b in base]

    def test_too_short(self):
        with pytest.raises(ValueError):
            detect_changepoints(series_from_accuracies([0.5, 0.5, 0.5]), min_segment=2)

    def test_min_segment_respected(self):
        # a jump at index 1 cannot be reported with min_segment=4
        accs = [0.1] + [0.9] * 11
        breaks = detect_changepoints(series_from_accuracies(accs), min_segment=4)
        assert all(4 <= b <= 8 for b in breaks)


class TestAlignment:
    def test_identical_records(self):
        model = [fake_record(f"i{k}", k % 2 == 0, scorer=stepped_id(0)) for k in range(10)]
        oracle = [fake_record(f"i{k}", k % 2 == 0) for k in range(10)]
        assert heuristic_alignment(model, oracle) == 1.0

    def test_complemented_records(self):
        model = [fake_record(f"i{k}", True, scorer=stepped_id(0)) for k in range(10)]
        oracle = [fake_record(f"i{k}", False) for k in range(10)]
        assert heuristic_alignment(model, oracle) == 0.0

    def test_symmetric_and_order_invariant(self):
        rng = random.Random(5)
        model = [fake_record(f"i{k}", rng.random() < 0.5, scorer=stepped_id(0)) for k in range(20)]
        oracle = [fake_record(f"i{k}", rng.random() < 0.5) for k in range(20)]
        forward = heuristic_alignment(model, oracle)
        backward = heuristic_alignment(oracle, model)
        shuffled = list(model)
        rng.shuffle(shuffled)
        assert forward == backward == heuristic_alignment(shuffled, oracle)

    def test_item_mismatch(self):
        with pytest.raises(ValueError):
            heuristic_alignment([fake_record("a", True)], [fake_record("b", True)])

    def test_bigram_vs_unigram_brute_force(self, pile_index, agreement_index, all_items):
        unigram = score_items(NGramOracleScorer(pile_index, 1), all_items).records
        bigram = score_items(NGramOracleScorer(agreement_index, 2), all_items).records
        expected = sum(
            1 for u, b in zip(unigram, bigram) if u.decision_sum == b.decision_sum
        ) / len(unigram)
        assert heuristic_alignment(bigram, unigram) == expected


class TestLabelPhases:
    def test_labels_by_argmax(self):
        alignments = {
            PhaseLabel.UNIGRAM: {0: 1.0, 1: 1.0, 2: 0.2, 3: 0.2},
            PhaseLabel.BIGRAM: {0: 0.5, 1: 0.5, 2: 0.9, 3: 0.9},
        }
        segments = label_phases(alignments, [2])
        assert [s.label for s in segments] == [PhaseLabel.UNIGRAM, PhaseLabel.BIGRAM]
        assert segments[0].start_step == 0 and segments[0].end_step == 1
        assert segments[1].start_step == 2 and segments[1].end_step == 3

    def test_single_segment(self):
        segments = label_phases({PhaseLabel.GRAMMAR: {0: 1.0, 1: 1.0}}, [])
        assert len(segments) == 1
        assert segments[0].label is PhaseLabel.GRAMMAR

    def test_tie_breaks_to_lower_order(self):
        alignments = {
            PhaseLabel.BIGRAM: {0: 0.8},
            PhaseLabel.UNIGRAM: {0: 0.8},
        }
        assert label_phases(alignments, [])[0].label is PhaseLabel.UNIGRAM

    def test_missing_step_rejected(self):
        with pytest.raises(ValueError):
            label_phases(
                {PhaseLabel.UNIGRAM: {0: 1.0, 1: 1.0}, PhaseLabel.BIGRAM: {0: 1.0}}, []
            )

    def test_breakpoint_must_be_interior(self):
        with pytest.raises(ValueError):
            label_phases({PhaseLabel.UNIGRAM: {0: 1.0, 1: 1.0}}, [0])
        with pytest.raises(ValueError):
            label_phases({PhaseLabel.UNIGRAM: {0: 1.0, 1: 1.0}}, [7])

    def test_label_for_order(self):
        assert label_for_order(1) is PhaseLabel.UNIGRAM
        assert label_for_order(2) is PhaseLabel.BIGRAM
        assert label_for_order(3) is PhaseLabel.TRIGRAM
        assert label_for_order(7) is PhaseLabel.LONGER_CONTEXT


def test_monotone_transform_leaves_phases_invariant(pile_index, all_items, items_by_id):
    """Decisions (hence alignments and labels) depend only on comparisons."""
    records = score_items(NGramOracleScorer(pile_index, 1), all_items).records
    scaled = []
    for record in records:
        scaled.append(
            ScoreRecord(
                item_id=record.item_id,
                scorer=record.scorer,
                correct=CandidateScore(
                    record.correct.surface,
                    record.correct.tokens,
                    tuple(lp * 3.0 for lp in record.correct.logprobs),
                ),
                incorrect=CandidateScore(
                    record.incorrect.surface,
                    record.incorrect.tokens,
                    tuple(lp * 3.0 for lp in record.incorrect.logprobs),
                ),
                verb_class=record.verb_class,
                decision_sum=record.decision_sum,
                decision_mean=record.decision_mean,
            )
        )
    original = disaggregate(records, ["condition"], items=items_by_id, resamples=5)
    transformed = disaggregate(scaled, ["condition"], items=items_by_id, resamples=5)
    assert [(c.group, c.accuracy) for c in original] == [(c.group, c.accuracy) for c in transformed]

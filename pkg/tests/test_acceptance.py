"""Acceptance suite: one test per criterion, each printing a PASS line
with its runtime and enforcing the stated budget.

Criterion 9 (provider conformance) lives with the provider package under
provider/tests/, since it requires that component.
"""

import hashlib
import json
import math
import random
import sys
import time
import xml.etree.ElementTree as ET
from contextlib import contextmanager
from pathlib import Path

from svadyn.analysis import (
    AccuracyCell,
    TrajectoryPoint,
    TrajectorySeries,
    aggregate_score,
    detect_changepoints,
    disaggregate,
)
from svadyn.fixtures import (
    bundled_stimuli,
    generate_agreement_corpus,
    load_bundled_templates,
    load_pile_fixture_index,
    load_pile_frequencies,
)
from svadyn.ngram import build_index, tokenize
from svadyn.pipeline import config_from_dict, run_pipeline, verify_manifest
from svadyn.scoring import (
    Aggregation,
    NGramOracleScorer,
    aggregate,
    decide,
    read_records,
    score_items,
)
from svadyn.stimuli import ImportFormat, import_items

CASCADE_PROVIDER = str(Path(__file__).parent / "cascade_provider.py")


@contextmanager
def criterion(number, name, budget_seconds):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"[ACCEPTANCE] {number} {name}: FAIL")
        raise
    elapsed = time.perf_counter() - start
    assert elapsed < budget_seconds, f"criterion {number} took {elapsed:.2f}s >= {budget_seconds}s"
    print(f"[ACCEPTANCE] {number} {name}: PASS ({elapsed:.2f}s < {budget_seconds}s)")


def condition_accuracies(records, items):
    cells = disaggregate(records, ["condition"], items={i.id: i for i in items}, resamples=10)
    return {c.group["condition"]: c.accuracy for c in cells}


def test_criterion_1_unigram_phase_be():
    with criterion(1, "unigram phase, be-verb", 1.0):
        index = load_pile_fixture_index()
        assert index.word_frequency("is") == 2_055_643_528
        assert index.word_frequency("are") == 816_249_141
        items = [i for i in bundled_stimuli() if i.verb_lemma == "be"]
        assert items, "bundled stimuli must include be-items"
        outcome = score_items(NGramOracleScorer(index, 1), items)
        assert outcome.failure_count == 0
        accuracy = condition_accuracies(outcome.records, items)
        assert accuracy == {"S": 1.0, "P": 0.0, "SS": 1.0, "SP": 1.0, "PS": 0.0, "PP": 0.0}


def test_criterion_2_unigram_phase_other_verbs():
    with criterion(2, "unigram phase, other verbs", 1.0):
        frequencies = load_pile_frequencies()
        templates = load_bundled_templates()
        non_be = [t for t in templates if t.verb.lemma != "be"]
        assert len(non_be) == 15
        for template in non_be:
            verb = template.verb
            assert frequencies[verb.plural_form] > frequencies[verb.singular_form], verb.lemma
        index = load_pile_fixture_index()
        scorer = NGramOracleScorer(index, 1)
        items = [i for i in bundled_stimuli() if i.verb_lemma != "be"]
        outcome = score_items(scorer, items)
        assert outcome.failure_count == 0
        by_lemma = {}
        for item, record in zip(items, outcome.records):
            by_lemma.setdefault(item.verb_lemma, []).append((item, record))
        assert len(by_lemma) == 15
        for lemma, pairs in by_lemma.items():
            accuracy = condition_accuracies([r for _, r in pairs], [i for i, _ in pairs])
            assert accuracy == {"S": 0.0, "P": 1.0, "SS": 0.0, "SP": 0.0, "PS": 1.0, "PP": 1.0}, lemma


def test_criterion_3_bigram_attractor_effect():
    with criterion(3, "bigram attractor effect", 5.0):
        templates = load_bundled_templates()
        corpus = generate_agreement_corpus(templates, repeats=3)
        index = build_index(corpus, max_order=2)
        items = bundled_stimuli()
        outcome = score_items(NGramOracleScorer(index, 2), items)
        assert outcome.failure_count == 0
        accuracy = condition_accuracies(outcome.records, items)
        assert accuracy == {"S": 1.0, "P": 1.0, "SS": 1.0, "PP": 1.0, "SP": 0.0, "PS": 0.0}


def _naive_counts(text, max_order):
    from svadyn.ngram import DOC_BOUNDARY

    docs = [tokenize(line) for line in text.splitlines()]
    docs = [d for d in docs if d]
    stream = []
    for i, doc in enumerate(docs):
        if i:
            stream.append(DOC_BOUNDARY)
        stream.extend(doc)
    counts = {(): len(stream)}
    for order in range(1, max_order + 1):
        for i in range(len(stream) - order + 1):
            gram = tuple(stream[i : i + order])
            counts[gram] = counts.get(gram, 0) + 1
    return counts


def test_criterion_4_oracle_equivalence():
    with criterion(4, "n-gram engine oracle equivalence", 60.0):
        rng = random.Random(2024)
        vocabulary = [
            "the", "a", "cat", "cats", "dog", "dogs", "runs", "run", "sees", "see",
            "near", "big", "small", ".", ",", "and", "or", "bird", "birds", "sleeps",
        ]
        for trial in range(50):
            size = int(10 ** rng.uniform(1, 4))  # 10 .. 10,000 tokens
            n_lines = rng.randint(1, 6)
            tokens = [rng.choice(vocabulary) for _ in range(size)]
            per_line = max(1, size // n_lines)
            lines = [" ".join(tokens[i : i + per_line]) for i in range(0, size, per_line)]
            text = "\n".join(lines)
            max_order = rng.randint(1, 5)
            index = build_index(text, max_order)
            expected = _naive_counts(text, max_order)
            vocab = index.vocabulary
            stored = {
                tuple(vocab.word_of(t) for t in gram): count
                for gram, count in index.stored_counts().items()
            }
            assert stored == expected, f"trial {trial} count mismatch"
            words = list(vocab)
            for _ in range(100):
                ctx_len = rng.randrange(0, max_order)
                context = [rng.choice(words) for _ in range(ctx_len)]
                total = math.fsum(index.cond_prob(context, w) for w in words)
                assert abs(total - 1.0) <= 1e-9, f"trial {trial} context {context}"


def test_criterion_5_aggregation_properties():
    with criterion(5, "aggregation properties", 5.0):
        rng = random.Random(99)
        for _ in range(10_000):
            correct = -rng.random() * 20
            incorrect = -rng.random() * 20
            decision_sum = decide(aggregate([correct], Aggregation.SUM), aggregate([incorrect], Aggregation.SUM))
            decision_mean = decide(aggregate([correct], Aggregation.MEAN), aggregate([incorrect], Aggregation.MEAN))
            assert decision_sum == decision_mean
        # exact unweighted means on dyadic-rational cases
        cases = [
            ({"S": 1.0, "P": 1.0, "SS": 0.0, "SP": 0.0}, 0.5),
            ({"S": 1.0, "P": 0.0}, 0.5),
            ({"S": 0.25, "P": 0.75, "SS": 0.5, "SP": 0.5}, 0.5),
            ({"S": 1.0, "P": 1.0, "SS": 1.0, "SP": 0.0, "PS": 0.0, "PP": 0.0}, 0.5),
            ({"S": 1.0, "P": 1.0, "SS": 1.0, "SP": 1.0, "PS": 1.0, "PP": 1.0}, 1.0),
            ({"S": 0.125, "P": 0.375, "SS": 0.625, "SP": 0.875}, 0.5),
        ]
        for accuracies, expected in cases:
            ns = [2 ** (i + 3) for i in range(len(accuracies))]  # deliberately unequal
            cells = [
                AccuracyCell(group={"condition": label}, n=n, accuracy=a, ci_low=a, ci_high=a)
                for (label, a), n in zip(accuracies.items(), ns)
            ]
            assert aggregate_score(cells) == expected


def _series(accuracies, n=100):
    points = []
    for step, accuracy in enumerate(accuracies):
        cell = AccuracyCell(
            group={"step": step}, n=n, accuracy=accuracy, ci_low=accuracy, ci_high=accuracy
        )
        points.append(TrajectoryPoint(step=step, cell=cell))
    return TrajectorySeries(key={}, condition="S", points=tuple(points))


def test_criterion_6_changepoint_exactness():
    with criterion(6, "changepoint exactness", 5.0):
        two = _series([0.1] * 8 + [0.9] * 8)
        assert detect_changepoints(two, min_segment=2) == [8]
        three = _series([0.1] * 8 + [0.5] * 8 + [0.9] * 8)
        assert detect_changepoints(three, min_segment=2) == [8, 16]
        for value in (0.0, 0.3, 1.0):
            constant = _series([value] * 16)
            assert detect_changepoints(constant, min_segment=2) == []


def _cascade_config(out_dir):
    return {
        "schema_version": "1",
        "seed": 0,
        "output_dir": str(out_dir),
        "aggregation": "sum",
        "stimuli": {"bundled": True},
        "scorers": [
            {"family": "ngram_oracle", "name": "pile", "orders": [1], "corpus": {"kind": "pile_fixture"}},
            {
                "family": "ngram_oracle",
                "name": "agree",
                "orders": [2],
                "corpus": {"kind": "synthetic_agreement", "max_order": 2, "repeats": 3},
            },
            {
                "family": "neural_provider",
                "cmd": [sys.executable, CASCADE_PROVIDER],
                "model": {"name": "cascade", "size": "toy", "seeds": [0], "steps": list(range(30))},
            },
        ],
        "analysis": {
            "dims": ["condition"],
            "ci_pooling": "items",
            "bootstrap": {"resamples": 200, "alpha": 0.05},
            "changepoint": {"min_segment": 2, "penalty": None},
        },
    }


def test_criterion_7_cascade_recovery(tmp_path):
    with criterion(7, "end-to-end cascade recovery", 30.0):
        out = tmp_path / "cascade"
        manifest = run_pipeline(config_from_dict(_cascade_config(out)))
        assert not manifest.failed
        assert manifest.total_failure_count == 0

        phases = json.loads((out / "analysis" / "phases.json").read_text(encoding="utf-8"))
        segments = phases["segments"]
        assert [s["label"] for s in segments] == ["unigram", "bigram", "grammar"]
        starts = [s["start_step"] for s in segments]
        assert starts[0] == 0
        assert abs(starts[1] - 10) <= 1
        assert abs(starts[2] - 20) <= 1
        assert segments[-1]["end_step"] == 29

        # per-condition curves carry the expected cascade signature,
        # checked from the emitted artifacts (records + stimuli)
        items = import_items(out / "stimuli.jsonl", ImportFormat.NATIVE_JSONL)
        items_map = {i.id: i for i in items}
        be_ids = {i.id for i in items if i.verb_lemma == "be"}
        for step in range(30):
            records = read_records(out / "records" / f"cascade-toy-seed0-step{step}.jsonl")
            be_records = [r for r in records if r.item_id in be_ids]
            cells = disaggregate(be_records, ["condition"], items=items_map, resamples=5)
            accuracy = {c.group["condition"]: c.accuracy for c in cells}
            if step < 10:
                assert accuracy["S"] == 1.0  # be-singular high in phase 1
                assert accuracy["P"] == 0.0
            elif step < 20:
                # attractor-mismatch collapse: SP/PS split off from SS/PP
                assert accuracy["SS"] == 1.0 and accuracy["PP"] == 1.0
                assert accuracy["SP"] == 0.0 and accuracy["PS"] == 0.0
            else:
                assert all(a == 1.0 for a in accuracy.values())

        figure = (out / "report" / "figure.svg").read_text(encoding="utf-8")
        root = ET.fromstring(figure)
        polylines = root.findall(".//{http://www.w3.org/2000/svg}polyline")
        assert len(polylines) == 7  # 6 conditions + aggregate
        assert verify_manifest(out / "manifest.json") == []


def test_criterion_8_pipeline_determinism(tmp_path):
    with criterion(8, "oracle pipeline determinism", 30.0):
        digests = []
        for name in ("first", "second"):
            out = tmp_path / name
            config = {
                "schema_version": "1",
                "seed": 7,
                "output_dir": str(out),
                "aggregation": "sum",
                "stimuli": {"bundled": True},
                "scorers": [
                    {"family": "ngram_oracle", "name": "pile", "orders": [1], "corpus": {"kind": "pile_fixture"}},
                    {
                        "family": "ngram_oracle",
                        "name": "agree",
                        "orders": [2],
                        "corpus": {"kind": "synthetic_agreement", "max_order": 2},
                    },
                ],
                "analysis": {
                    "dims": ["condition", "verb_class"],
                    "ci_pooling": "items",
                    "bootstrap": {"resamples": 1000, "alpha": 0.05},
                    "changepoint": {"min_segment": 2, "penalty": None},
                },
            }
            manifest = run_pipeline(config_from_dict(config))
            assert not manifest.failed
            per_run = {}
            for rel in (
                "stimuli.jsonl",
                "records/pile-order1.jsonl",
                "records/agree-order2.jsonl",
                "analysis/accuracy.csv",
            ):
                per_run[rel] = hashlib.sha256((out / rel).read_bytes()).hexdigest()
            digests.append(per_run)
        assert digests[0] == digests[1]

"""Scorer contract, minimal-pair decisions, and score records.

A scorer takes a context string and candidate continuations (each verb
form prefixed with exactly one space, the boundary convention shared by
the n-gram oracles and the neural provider) and returns per-token
log-probabilities. A record stores both candidates' tokens and
log-probs plus the decision under both aggregation modes, so sum/mean
reanalysis never requires rescoring. Ties count as incorrect under
both modes.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Protocol, Sequence, runtime_checkable

from .ngram import NGramIndex, tokenize
from .stimuli import Number, StimulusItem, VerbPair


class ScorerFailure(Exception):
    """A scorer could not produce a result for one item."""


class Aggregation(Enum):
    SUM = "sum"
    MEAN = "mean"


class ScorerFamily(Enum):
    NGRAM_ORACLE = "ngram_oracle"
    NEURAL_PROVIDER = "neural_provider"


class VerbClass(Enum):
    BE = "be"
    SINGLE_TOKEN = "single_token"
    MULTI_TOKEN = "multi_token"


@dataclass(frozen=True)
class ScorerId:
    """Identity of one scorer: oracle (order) or neural checkpoint
    (size label, seed, training step)."""

    family: ScorerFamily
    model_name: str
    size_label: str | None = None
    seed: int | None = None
    step: int | None = None
    order: int | None = None

    def __post_init__(self):
        if self.family is ScorerFamily.NGRAM_ORACLE:
            if self.order is None:
                raise ValueError("ngram oracle scorer requires an order")
            if (self.size_label, self.seed, self.step) != (None, None, None):
                raise ValueError("size_label/seed/step are neural-provider fields")
        else:
            if self.order is not None:
                raise ValueError("order is an oracle-only field")
            if self.size_label is None or self.seed is None or self.step is None:
                raise ValueError("neural provider scorer requires size_label, seed and step")
            if self.step < 0:
                raise ValueError("step must be nonnegative")

    @property
    def slug(self) -> str:
        """Filesystem-safe name for record artifacts."""
        if self.family is ScorerFamily.NGRAM_ORACLE:
            parts = [self.model_name, f"order{self.order}"]
        else:
            parts = [self.model_name, self.size_label, f"seed{self.seed}", f"step{self.step}"]
        return "-".join(str(p).replace("/", "_").replace(" ", "_") for p in parts)


@dataclass(frozen=True)
class CandidateScore:
    """Per-token log-probs for one candidate surface. Tokens detokenize
    to the surface under the scorer's own convention."""

    surface: str
    tokens: tuple[str, ...]
    logprobs: tuple[float, ...]

    def __post_init__(self):
        if len(self.tokens) != len(self.logprobs):
            raise ValueError("tokens and logprobs must have equal length")
        if not self.tokens:
            raise ValueError(f"candidate {self.surface!r} has no tokens")
        for lp in self.logprobs:
            if not math.isfinite(lp) or lp > 0:
                raise ValueError(f"log-probs must be finite and <= 0, got {lp}")


@dataclass(frozen=True)
class ScoreRecord:
    item_id: str
    scorer: ScorerId
    correct: CandidateScore
    incorrect: CandidateScore
    verb_class: VerbClass
    decision_sum: bool
    decision_mean: bool


def aggregate(scores: Sequence[float], mode: Aggregation) -> float:
    """Sum or arithmetic mean of a nonempty score sequence."""
    if not scores:
        raise ValueError("cannot aggregate an empty score sequence")
    total = math.fsum(scores)
    return total if mode is Aggregation.SUM else total / len(scores)


def decide(correct_score: float, incorrect_score: float) -> bool:
    """Strictly higher wins; ties are wrong."""
    if not (math.isfinite(correct_score) and math.isfinite(incorrect_score)):
        raise ValueError("scores must be finite")
    return correct_score > incorrect_score


def classify_verb(pair: VerbPair, tokenization: Mapping[str, int]) -> VerbClass:
    """Class of a verb under one scorer's tokenizer: be / single / multi.

    tokenization maps each form to its token count under that scorer;
    the class is per-scorer because tokenizers differ.
    """
    if pair.lemma == "be":
        return VerbClass.BE
    counts = []
    for form in (pair.singular_form, pair.plural_form):
        if form not in tokenization:
            raise ScorerFailure(f"missing tokenization entry for {form!r}")
        counts.append(tokenization[form])
    return VerbClass.MULTI_TOKEN if any(c > 1 for c in counts) else VerbClass.SINGLE_TOKEN


def candidate_surfaces(item: StimulusItem) -> tuple[str, str]:
    """The scoreable continuations: each form with one leading space."""
    return (" " + item.correct_form, " " + item.incorrect_form)


@runtime_checkable
class Scorer(Protocol):
    scorer_id: ScorerId
    supports_concurrency: bool

    def score_candidates(self, context: str, candidates: Sequence[str]) -> list[CandidateScore]:
        ...


class NGramOracleScorer:
    """Oracle scorer over an n-gram index at a fixed order."""

    supports_concurrency = True

    def __init__(self, index: NGramIndex, order: int, model_name: str = "ngram"):
        if not 1 <= order <= index.max_order:
            raise ValueError(f"order {order} out of range [1, {index.max_order}]")
        self.index = index
        self.order = order
        self.scorer_id = ScorerId(family=ScorerFamily.NGRAM_ORACLE, model_name=model_name, order=order)

    def score_candidates(self, context: str, candidates: Sequence[str]) -> list[CandidateScore]:
        out = []
        for candidate in candidates:
            tokens = tuple(tokenize(candidate))
            logprobs = tuple(self.index.oracle_score(self.order, context, candidate))
            out.append(CandidateScore(surface=candidate, tokens=tokens, logprobs=logprobs))
        return out


def _verb_pair_of(item: StimulusItem) -> VerbPair:
    """Recover the VerbPair from an item: the correct form carries the
    subject's number."""
    if item.condition.subject_number is Number.SINGULAR:
        return VerbPair(item.verb_lemma, item.correct_form, item.incorrect_form)
    return VerbPair(item.verb_lemma, item.incorrect_form, item.correct_form)


def build_record(
    item: StimulusItem, scorer_id: ScorerId, correct: CandidateScore, incorrect: CandidateScore
) -> ScoreRecord:
    tokenization = {
        item.correct_form: len(correct.tokens),
        item.incorrect_form: len(incorrect.tokens),
    }
    verb_class = classify_verb(_verb_pair_of(item), tokenization)
    return ScoreRecord(
        item_id=item.id,
        scorer=scorer_id,
        correct=correct,
        incorrect=incorrect,
        verb_class=verb_class,
        decision_sum=decide(aggregate(correct.logprobs, Aggregation.SUM), aggregate(incorrect.logprobs, Aggregation.SUM)),
        decision_mean=decide(aggregate(correct.logprobs, Aggregation.MEAN), aggregate(incorrect.logprobs, Aggregation.MEAN)),
    )


@dataclass(frozen=True)
class ScoreFailure:
    item_id: str
    message: str


@dataclass
class ScoringOutcome:
    """Records in input order plus per-item failures (the run continues
    past individual scorer errors)."""

    records: list[ScoreRecord]
    failures: list[ScoreFailure]

    @property
    def failure_count(self) -> int:
        return len(self.failures)


def score_items(scorer: Scorer, items: Sequence[StimulusItem], jobs: int = 1) -> ScoringOutcome:
    """Score every item's minimal pair against the same prefix.

    Output record order matches input order; a failing item yields a
    failure entry instead of aborting the run.
    """

    def one(item: StimulusItem) -> ScoreRecord:
        corr_surface, incorr_surface = candidate_surfaces(item)
        correct, incorrect = scorer.score_candidates(item.prefix_text, [corr_surface, incorr_surface])
        return build_record(item, scorer.scorer_id, correct, incorrect)

    results: list[ScoreRecord | ScoreFailure] = []
    if jobs > 1 and scorer.supports_concurrency:
        def guarded(item):
            try:
                return one(item)
            except Exception as exc:
                return ScoreFailure(item.id, str(exc))

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(guarded, items))
    else:
        for item in items:
            try:
                results.append(one(item))
            except Exception as exc:
                results.append(ScoreFailure(item.id, str(exc)))

    records = [r for r in results if isinstance(r, ScoreRecord)]
    failures = [r for r in results if isinstance(r, ScoreFailure)]
    return ScoringOutcome(records=records, failures=failures)


# ---------------------------------------------------------------------------
# Record persistence: JSON Lines, one record per line. Floats are written
# with Python's shortest round-trip repr, which is lossless.
# ---------------------------------------------------------------------------


def scorer_to_dict(scorer_id: ScorerId) -> dict:
    return {
        "family": scorer_id.family.value,
        "model_name": scorer_id.model_name,
        "size_label": scorer_id.size_label,
        "seed": scorer_id.seed,
        "step": scorer_id.step,
        "order": scorer_id.order,
    }


def scorer_from_dict(payload: Mapping) -> ScorerId:
    return ScorerId(
        family=ScorerFamily(payload["family"]),
        model_name=payload["model_name"],
        size_label=payload.get("size_label"),
        seed=payload.get("seed"),
        step=payload.get("step"),
        order=payload.get("order"),
    )


def record_to_dict(record: ScoreRecord) -> dict:
    return {
        "item_id": record.item_id,
        "scorer": scorer_to_dict(record.scorer),
        "verb_class": record.verb_class.value,
        "correct_tokens": list(record.correct.tokens),
        "correct_logprobs": list(record.correct.logprobs),
        "incorrect_tokens": list(record.incorrect.tokens),
        "incorrect_logprobs": list(record.incorrect.logprobs),
        "decision_sum": record.decision_sum,
        "decision_mean": record.decision_mean,
    }


def record_from_dict(payload: Mapping, correct_surface: str = "", incorrect_surface: str = "") -> ScoreRecord:
    correct = CandidateScore(
        surface=correct_surface or "".join(payload["correct_tokens"]),
        tokens=tuple(payload["correct_tokens"]),
        logprobs=tuple(payload["correct_logprobs"]),
    )
    incorrect = CandidateScore(
        surface=incorrect_surface or "".join(payload["incorrect_tokens"]),
        tokens=tuple(payload["incorrect_tokens"]),
        logprobs=tuple(payload["incorrect_logprobs"]),
    )
    return ScoreRecord(
        item_id=payload["item_id"],
        scorer=scorer_from_dict(payload["scorer"]),
        correct=correct,
        incorrect=incorrect,
        verb_class=VerbClass(payload["verb_class"]),
        decision_sum=payload["decision_sum"],
        decision_mean=payload["decision_mean"],
    )


def write_records(records: Iterable[ScoreRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(json.dumps(record_to_dict(record), ensure_ascii=False) + "\n")


def read_records(path) -> list[ScoreRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(record_from_dict(json.loads(line)))
    return records

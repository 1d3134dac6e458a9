"""Bundled data: Pile verb frequencies, stimulus templates, and the
synthetic agreement corpus generator.

The frequency fixture is the 16-verb table of Pile counts (one row per
form), shipped so unigram-oracle runs need no corpus. The templates
cover the same 16 verbs, one nounpp frame each, plus two be-frames in
the style of the psycholinguistic attraction stimuli (including a
multi-word subject).
"""

from __future__ import annotations

import csv
from importlib import resources
from typing import Sequence

from .ngram import NGramIndex, SmoothingSpec
from .stimuli import NounPPTemplate, StimulusItem, VerbPair, expand_template, load_templates

BE_LEMMA = "be"


def _data_path(name: str):
    return resources.files("svadyn.data").joinpath(name)


def load_pile_frequencies() -> dict[str, int]:
    """The shipped word -> Pile count table (32 rows, insertion order)."""
    out: dict[str, int] = {}
    with _data_path("pile_verb_frequencies.csv").open("r", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out[row["word"]] = int(row["count"])
    return out


def load_pile_fixture_index(smoothing: SmoothingSpec | None = None) -> NGramIndex:
    """The fixture as a read-only order-1 index."""
    return NGramIndex.from_unigram_counts(load_pile_frequencies(), smoothing)


def load_bundled_templates() -> list[NounPPTemplate]:
    with resources.as_file(_data_path("templates.jsonl")) as path:
        return load_templates(path)


def verb_lexicon(templates: Sequence[NounPPTemplate] | None = None) -> dict[str, VerbPair]:
    """lemma -> VerbPair map for the given (default: bundled) templates."""
    if templates is None:
        templates = load_bundled_templates()
    return {t.verb.lemma: t.verb for t in templates}


def bundled_stimuli(include_simple: bool = True) -> list[StimulusItem]:
    """Expand every bundled template; 4 nounpp (+2 simple) items each."""
    items: list[StimulusItem] = []
    seen: set[str] = set()
    for template in load_bundled_templates():
        for item in expand_template(template, include_simple=include_simple):
            if item.id not in seen:
                seen.add(item.id)
                items.append(item)
    return items


def generate_agreement_corpus(templates: Sequence[NounPPTemplate], repeats: int = 3) -> str:
    """Synthetic corpus in which every noun is immediately followed by its
    agreeing verb form.

    For each template and each of its noun pairs (subject and attractor),
    emits "the <sg noun> <sg verb>" and "the <pl noun> <pl verb>" lines,
    each `repeats` times. Under this corpus an order-2 oracle decides the
    minimal pair purely from the word before the verb slot, so matched
    conditions (S, P, SS, PP) come out correct and mismatched ones
    (SP, PS) incorrect: the attractor effect in its sharpest form. Both
    verb forms occur equally often, so the unigram term of the
    interpolated estimate never tips a decision. Deterministic: line
    order follows template order.
    """
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    lines = []
    for template in templates:
        for nouns in (template.subject, template.attractor):
            for noun, verb_form in (
                (nouns.singular, template.verb.singular_form),
                (nouns.plural, template.verb.plural_form),
            ):
                lines.extend([f"the {noun} {verb_form}"] * repeats)
    return "\n".join(lines) + "\n"


def export_fixtures(dest_dir) -> list[str]:
    """Write the frequency CSV and template JSONL into dest_dir; returns
    the written paths."""
    from pathlib import Path

    dest = Path(dest_dir)
    dest.mkdir(parents=True, exist_ok=True)
    written = []
    for name in ("pile_verb_frequencies.csv", "templates.jsonl"):
        target = dest / name
        target.write_bytes(_data_path(name).read_bytes())
        written.append(str(target))
    return written

"""Condition-controlled subject-verb agreement minimal pairs.

A stimulus item is one minimal pair: a sentence prefix up to (but
excluding) the verb, plus the correct and incorrect verb forms. Items
come in two structures: simple ("The athlete" + knows/know) and nounpp,
where a prepositional-phrase attractor intervenes ("The athlete near
the bike" + knows/know). Items never carry post-verb continuations;
scoring stops at the verb.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence


class StimulusError(Exception):
    """Base class for stimulus construction and IO failures."""


class InvalidTemplateError(StimulusError):
    """A template field is empty or a word pair does not alternate."""


class InvalidDerivationError(StimulusError):
    """derive_simple applied to an item that is already simple."""


class MissingSpanError(StimulusError):
    """The PP span cannot be recovered (no or unknown template metadata)."""


class StimulusParseError(StimulusError):
    """A stimulus file failed to parse; carries the offending line number."""

    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class DuplicateIdError(StimulusError):
    """Two items in one file share an id."""


class Number(Enum):
    SINGULAR = "sg"
    PLURAL = "pl"


class Structure(Enum):
    SIMPLE = "simple"
    NOUNPP = "nounpp"


class Source(Enum):
    TEMPLATE = "template"
    BIGBENCH = "bigbench"
    BOCK_CUTTING = "bock_cutting"


def _require_word(value: str, field: str) -> None:
    if not isinstance(value, str) or not value.strip():
        raise InvalidTemplateError(f"empty {field}")
    if value != value.strip():
        raise InvalidTemplateError(f"{field} has surrounding whitespace: {value!r}")


@dataclass(frozen=True)
class NounPair:
    """A singular/plural noun alternation. Forms may contain internal
    spaces (multi-word subjects like "teaching assistant")."""

    singular: str
    plural: str

    def __post_init__(self):
        _require_word(self.singular, "singular noun")
        _require_word(self.plural, "plural noun")
        if self.singular == self.plural:
            raise InvalidTemplateError(f"noun forms must differ: {self.singular!r}")

    def form(self, number: Number) -> str:
        return self.singular if number is Number.SINGULAR else self.plural


@dataclass(frozen=True)
class VerbPair:
    """A verb lemma with its singular and plural present-tense forms."""

    lemma: str
    singular_form: str
    plural_form: str

    def __post_init__(self):
        _require_word(self.lemma, "lemma")
        _require_word(self.singular_form, "singular verb form")
        _require_word(self.plural_form, "plural verb form")
        if self.singular_form == self.plural_form:
            raise InvalidTemplateError(f"verb forms must differ: {self.singular_form!r}")
        if self.lemma == "be" and (self.singular_form, self.plural_form) != ("is", "are"):
            raise InvalidTemplateError('lemma "be" must have forms "is"/"are"')

    def form(self, number: Number) -> str:
        return self.singular_form if number is Number.SINGULAR else self.plural_form


@dataclass(frozen=True)
class Condition:
    """An experimental cell: structure, subject number, attractor number.

    The attractor number is present exactly when the structure is nounpp.
    """

    structure: Structure
    subject_number: Number
    attractor_number: Number | None = None

    def __post_init__(self):
        if self.structure is Structure.NOUNPP and self.attractor_number is None:
            raise ValueError("nounpp condition requires an attractor number")
        if self.structure is Structure.SIMPLE and self.attractor_number is not None:
            raise ValueError("simple condition must not carry an attractor number")

    @property
    def attractor_match(self) -> bool:
        """Whether subject and attractor numbers agree (nounpp only)."""
        if self.structure is not Structure.NOUNPP:
            raise ValueError("attractor_match is defined only for nounpp conditions")
        return self.subject_number is self.attractor_number

    @property
    def label(self) -> str:
        """Condition label: S/P for simple, SS/SP/PS/PP for nounpp."""
        first = "S" if self.subject_number is Number.SINGULAR else "P"
        if self.structure is Structure.SIMPLE:
            return first
        second = "S" if self.attractor_number is Number.SINGULAR else "P"
        return first + second


#: The four nounpp conditions in canonical order.
NOUNPP_CONDITIONS = tuple(
    Condition(Structure.NOUNPP, subj, attr)
    for subj in (Number.SINGULAR, Number.PLURAL)
    for attr in (Number.SINGULAR, Number.PLURAL)
)
SIMPLE_CONDITIONS = (
    Condition(Structure.SIMPLE, Number.SINGULAR),
    Condition(Structure.SIMPLE, Number.PLURAL),
)
ALL_CONDITION_LABELS = ("S", "P", "SS", "SP", "PS", "PP")


def stable_item_id(prefix_text: str, correct_form: str, incorrect_form: str, condition: Condition) -> str:
    """Content hash of (prefix, forms, condition); stable across runs so
    the same pair always joins to the same id."""
    payload = "\x1f".join([prefix_text, correct_form, incorrect_form, condition.label])
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class StimulusItem:
    id: str
    source: Source
    prefix_text: str
    correct_form: str
    incorrect_form: str
    verb_lemma: str
    condition: Condition
    template_id: str | None = None

    def __post_init__(self):
        if not self.prefix_text:
            raise ValueError("prefix_text must be nonempty")
        if self.prefix_text != self.prefix_text.rstrip():
            raise ValueError(f"prefix_text must not end in whitespace: {self.prefix_text!r}")
        if self.correct_form == self.incorrect_form:
            raise ValueError("correct and incorrect forms must differ")


def build_item(
    source: Source,
    prefix_text: str,
    correct_form: str,
    incorrect_form: str,
    verb_lemma: str,
    condition: Condition,
    template_id: str | None = None,
) -> StimulusItem:
    """Construct an item with its content-hash id."""
    return StimulusItem(
        id=stable_item_id(prefix_text, correct_form, incorrect_form, condition),
        source=source,
        prefix_text=prefix_text,
        correct_form=correct_form,
        incorrect_form=incorrect_form,
        verb_lemma=verb_lemma,
        condition=condition,
        template_id=template_id,
    )


@dataclass(frozen=True)
class NounPPTemplate:
    """One nounpp frame: subject pair, preposition, attractor pair, verb."""

    template_id: str
    subject: NounPair
    preposition: str
    attractor: NounPair
    verb: VerbPair

    def __post_init__(self):
        _require_word(self.template_id, "template_id")
        _require_word(self.preposition, "preposition")


def expand_nounpp(
    subject: NounPair,
    preposition: str,
    attractor: NounPair,
    verb: VerbPair,
    template_id: str,
    source: Source = Source.TEMPLATE,
) -> list[StimulusItem]:
    """Expand one frame into the four nounpp conditions (SS, SP, PS, PP).

    The prefix has the shape "The <subj> <prep> the <attr>"; the correct
    form always follows the subject's number.
    """
    _require_word(preposition, "preposition")
    _require_word(template_id, "template_id")
    items = []
    for condition in NOUNPP_CONDITIONS:
        subj_form = subject.form(condition.subject_number)
        attr_form = attractor.form(condition.attractor_number)
        prefix = f"The {subj_form} {preposition} the {attr_form}"
        items.append(
            build_item(
                source=source,
                prefix_text=prefix,
                correct_form=verb.form(condition.subject_number),
                incorrect_form=verb.form(_other(condition.subject_number)),
                verb_lemma=verb.lemma,
                condition=condition,
                template_id=template_id,
            )
        )
    return items


def _other(number: Number) -> Number:
    return Number.PLURAL if number is Number.SINGULAR else Number.SINGULAR


def derive_simple(item: StimulusItem, templates: Mapping[str, NounPPTemplate]) -> StimulusItem:
    """Derive the simple-condition item by removing the PP span.

    The span ("<prep> the <attr-form>") is recovered from the item's
    template; whitespace in the result collapses to single spaces.
    """
    if item.condition.structure is not Structure.NOUNPP:
        raise InvalidDerivationError(f"item {item.id} is already simple")
    if item.template_id is None:
        raise MissingSpanError(f"item {item.id} has no template metadata")
    template = templates.get(item.template_id)
    if template is None:
        raise MissingSpanError(f"unknown template {item.template_id!r} for item {item.id}")
    attr_form = template.attractor.form(item.condition.attractor_number)
    span = f"{template.preposition} the {attr_form}"
    if span not in item.prefix_text:
        raise MissingSpanError(f"PP span {span!r} not found in prefix {item.prefix_text!r}")
    stripped = item.prefix_text.replace(span, "", 1)
    prefix = " ".join(stripped.split())
    return build_item(
        source=item.source,
        prefix_text=prefix,
        correct_form=item.correct_form,
        incorrect_form=item.incorrect_form,
        verb_lemma=item.verb_lemma,
        condition=Condition(Structure.SIMPLE, item.condition.subject_number),
        template_id=item.template_id,
    )


def expand_template(template: NounPPTemplate, include_simple: bool = True) -> list[StimulusItem]:
    """All items for one template: 4 nounpp conditions plus, optionally,
    the 2 simple conditions derived by PP removal (deduplicated by id)."""
    items = expand_nounpp(
        template.subject, template.preposition, template.attractor, template.verb, template.template_id
    )
    if include_simple:
        registry = {template.template_id: template}
        seen = set()
        for nounpp_item in list(items):
            simple = derive_simple(nounpp_item, registry)
            if simple.id not in seen:
                seen.add(simple.id)
                items.append(simple)
    return items


def validate_item(item: StimulusItem, verb_lexicon: Mapping[str, VerbPair]) -> list[str]:
    """Return all violated invariants (empty list = ok)."""
    violations = []
    if item.correct_form == item.incorrect_form:
        violations.append("forms: correct_form equals incorrect_form")
    if not item.prefix_text.strip():
        violations.append("prefix: empty")
    else:
        if item.prefix_text != item.prefix_text.strip():
            violations.append("prefix: surrounding whitespace")
        if "  " in item.prefix_text:
            violations.append("prefix: uncollapsed whitespace run")
    pair = verb_lexicon.get(item.verb_lemma)
    if pair is None:
        violations.append(f"lexicon-miss: unknown lemma {item.verb_lemma!r}")
        return violations
    expected_correct = pair.form(item.condition.subject_number)
    expected_incorrect = pair.form(_other(item.condition.subject_number))
    if item.correct_form != expected_correct:
        violations.append(
            f"agreement: correct_form {item.correct_form!r} does not agree with "
            f"{item.condition.subject_number.value} subject (expected {expected_correct!r})"
        )
    if item.incorrect_form != expected_incorrect:
        violations.append(
            f"forms: incorrect_form {item.incorrect_form!r} is not the opposite form "
            f"(expected {expected_incorrect!r})"
        )
    return violations


# ---------------------------------------------------------------------------
# Persistence. Native format: JSON Lines, UTF-8, LF; one item per line with
# exactly the fields below. Ids are content hashes (see stable_item_id), so
# a file edited by hand must recompute them.
# ---------------------------------------------------------------------------

NATIVE_FIELDS = (
    "id",
    "source",
    "prefix_text",
    "correct_form",
    "incorrect_form",
    "verb_lemma",
    "structure",
    "subject_number",
    "attractor_number",
    "template_id",
)

TABULAR_REQUIRED = (
    "prefix_text",
    "correct_form",
    "incorrect_form",
    "verb_lemma",
    "structure",
    "subject_number",
)


class ImportFormat(Enum):
    NATIVE_JSONL = "native_jsonl"
    TABULAR_PAIRS = "tabular_pairs"


def item_to_dict(item: StimulusItem) -> dict:
    attr = item.condition.attractor_number
    return {
        "id": item.id,
        "source": item.source.value,
        "prefix_text": item.prefix_text,
        "correct_form": item.correct_form,
        "incorrect_form": item.incorrect_form,
        "verb_lemma": item.verb_lemma,
        "structure": item.condition.structure.value,
        "subject_number": item.condition.subject_number.value,
        "attractor_number": attr.value if attr is not None else None,
        "template_id": item.template_id,
    }


def item_from_dict(payload: Mapping) -> StimulusItem:
    missing = [k for k in NATIVE_FIELDS if k not in payload]
    if missing:
        raise ValueError(f"missing fields: {', '.join(missing)}")
    condition = Condition(
        Structure(payload["structure"]),
        Number(payload["subject_number"]),
        Number(payload["attractor_number"]) if payload["attractor_number"] is not None else None,
    )
    item = StimulusItem(
        id=payload["id"],
        source=Source(payload["source"]),
        prefix_text=payload["prefix_text"],
        correct_form=payload["correct_form"],
        incorrect_form=payload["incorrect_form"],
        verb_lemma=payload["verb_lemma"],
        condition=condition,
        template_id=payload["template_id"],
    )
    expected = stable_item_id(item.prefix_text, item.correct_form, item.incorrect_form, condition)
    if item.id != expected:
        raise ValueError(f"id {item.id!r} is not the content hash of the item (expected {expected!r})")
    return item


def export_items(items: Iterable[StimulusItem], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for item in items:
            fh.write(json.dumps(item_to_dict(item), ensure_ascii=False) + "\n")


def import_items(path, fmt: ImportFormat, default_source: Source = Source.BIGBENCH) -> list[StimulusItem]:
    """Load items from a native JSONL or tabular-pairs CSV file.

    Every returned item satisfies the structural invariants; ids are
    unique within the returned list. Parse failures report line numbers.
    """
    if fmt is ImportFormat.NATIVE_JSONL:
        items = _import_native(path)
    else:
        items = _import_tabular(path, default_source)
    seen: dict[str, int] = {}
    for idx, item in enumerate(items):
        if item.id in seen:
            raise DuplicateIdError(f"{path}: duplicate id {item.id} (items {seen[item.id]} and {idx})")
        seen[item.id] = idx
    return items


def _import_native(path) -> list[StimulusItem]:
    items = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
                items.append(item_from_dict(payload))
            except (ValueError, KeyError, TypeError) as exc:
                raise StimulusParseError(path, line_no, str(exc)) from exc
    return items


def _import_tabular(path, default_source: Source) -> list[StimulusItem]:
    items = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in TABULAR_REQUIRED if c not in header]
        if missing:
            raise StimulusParseError(path, 1, f"missing columns: {', '.join(missing)}")
        for row in reader:
            try:
                attractor = row.get("attractor_number") or None
                condition = Condition(
                    Structure(row["structure"]),
                    Number(row["subject_number"]),
                    Number(attractor) if attractor else None,
                )
                source = Source(row["source"]) if row.get("source") else default_source
                items.append(
                    build_item(
                        source=source,
                        prefix_text=row["prefix_text"],
                        correct_form=row["correct_form"],
                        incorrect_form=row["incorrect_form"],
                        verb_lemma=row["verb_lemma"],
                        condition=condition,
                        template_id=row.get("template_id") or None,
                    )
                )
            except (ValueError, KeyError) as exc:
                raise StimulusParseError(path, reader.line_num, str(exc)) from exc
    return items


# --- template files (JSONL) -------------------------------------------------


def template_to_dict(template: NounPPTemplate) -> dict:
    return {
        "template_id": template.template_id,
        "subject": [template.subject.singular, template.subject.plural],
        "preposition": template.preposition,
        "attractor": [template.attractor.singular, template.attractor.plural],
        "verb": {
            "lemma": template.verb.lemma,
            "singular": template.verb.singular_form,
            "plural": template.verb.plural_form,
        },
    }


def template_from_dict(payload: Mapping) -> NounPPTemplate:
    return NounPPTemplate(
        template_id=payload["template_id"],
        subject=NounPair(*payload["subject"]),
        preposition=payload["preposition"],
        attractor=NounPair(*payload["attractor"]),
        verb=VerbPair(
            lemma=payload["verb"]["lemma"],
            singular_form=payload["verb"]["singular"],
            plural_form=payload["verb"]["plural"],
        ),
    )


def load_templates(path) -> list[NounPPTemplate]:
    templates = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                templates.append(template_from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError, InvalidTemplateError) as exc:
                raise StimulusParseError(path, line_no, str(exc)) from exc
    return templates


def save_templates(templates: Sequence[NounPPTemplate], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for template in templates:
            fh.write(json.dumps(template_to_dict(template), ensure_ascii=False) + "\n")

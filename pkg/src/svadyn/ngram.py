"""N-gram count indexes and oracle scorers.

Builds an immutable count index over a line-per-document corpus and
answers frequency and smoothed conditional-probability queries up to a
maximum order. The conditional estimate interpolates an additive-delta
MLE at each order with the next-lower order, grounding at the smoothed
unigram:

    P_n(t | c) = lam * (count(c+t) + delta) / (ext(c) + delta * |V|)
               + (1 - lam) * P_{n-1}(t | c[1:])

where ext(c) = sum over the vocabulary of count(c+t), so each level sums
to exactly 1 over the vocabulary. Out-of-vocabulary query tokens are an
escape hatch: they receive (delta) / (ext(c) + delta * (|V| + 1)), i.e.
the mass one extra reserved type would get. That keeps scores finite on
stimuli absent from small corpora, at the cost of the extended measure
summing to slightly more than 1; in-vocabulary distributions are exact.

No begin/end-of-sentence padding is applied; a single reserved boundary
token separates input documents.
"""

from __future__ import annotations

import math
import re
import struct
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

#: Inserted between documents; can never be produced by tokenize()
#: (tokenize splits punctuation into single characters).
DOC_BOUNDARY = "<doc>"

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


class OrderOverflowError(ValueError):
    """Context longer than the index's max_order - 1."""


class IndexFormatError(ValueError):
    """A persisted index file is malformed or has the wrong version."""


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, split punctuation into single-char
    tokens. Deterministic; empty text yields an empty list."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class SmoothingSpec:
    """Additive-backoff smoothing parameters.

    delta is the additive mass; interpolation_lambda weights the current
    order against the next-lower one. lambda = 1 is the degenerate
    pure-additive mode used by hand-checkable tests.
    """

    delta: float = 0.1
    interpolation_lambda: float = 0.9

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if not 0 < self.interpolation_lambda <= 1:
            raise ValueError(f"interpolation_lambda must be in (0, 1], got {self.interpolation_lambda}")


class Vocabulary:
    """Bijection between word strings and dense token ids (assignment in
    first-occurrence order, so identical corpora yield identical ids)."""

    def __init__(self, words: Iterable[str] = ()):
        self._words: list[str] = []
        self._ids: dict[str, int] = {}
        for word in words:
            self.add(word)

    def add(self, word: str) -> int:
        tid = self._ids.get(word)
        if tid is None:
            tid = len(self._words)
            self._ids[word] = tid
            self._words.append(word)
        return tid

    def id_of(self, word: str) -> int | None:
        return self._ids.get(word)

    def word_of(self, tid: int) -> str:
        return self._words[tid]

    def __contains__(self, word: str) -> bool:
        return word in self._ids

    def __len__(self) -> int:
        return len(self._words)

    def __iter__(self):
        return iter(self._words)


class NGramIndex:
    """Immutable token-count index over a corpus.

    counts maps token-id tuples of length <= max_order to occurrence
    counts in the token stream; the empty tuple maps to the stream
    length. ext_totals[c] is the number of occurrences of context c that
    are followed by at least one token (the normalizer for conditional
    estimates). Queries are safe from any number of threads.
    """

    def __init__(
        self,
        max_order: int,
        vocabulary: Vocabulary,
        counts: Mapping[tuple[int, ...], int],
        ext_totals: Mapping[tuple[int, ...], int],
        smoothing: SmoothingSpec,
    ):
        if max_order < 1:
            raise ValueError(f"max_order must be >= 1, got {max_order}")
        self._max_order = max_order
        self._vocab = vocabulary
        self._counts = dict(counts)
        self._ext_totals = dict(ext_totals)
        self._smoothing = smoothing

    @property
    def max_order(self) -> int:
        return self._max_order

    @property
    def vocabulary(self) -> Vocabulary:
        return self._vocab

    @property
    def smoothing(self) -> SmoothingSpec:
        return self._smoothing

    @property
    def token_count(self) -> int:
        return self._counts.get((), 0)

    def count(self, sequence: Sequence[str | int]) -> int:
        """Occurrence count of a token sequence (words or ids); 0 for
        any sequence containing an out-of-vocabulary word."""
        ids = self._to_ids(sequence)
        if ids is None:
            return 0
        if len(ids) > self._max_order:
            raise OrderOverflowError(f"sequence of length {len(ids)} exceeds max_order {self._max_order}")
        return self._counts.get(ids, 0)

    def stored_counts(self) -> dict[tuple[int, ...], int]:
        return dict(self._counts)

    def _to_ids(self, sequence: Sequence[str | int]) -> tuple[int, ...] | None:
        ids = []
        for token in sequence:
            if isinstance(token, str):
                tid = self._vocab.id_of(token)
                if tid is None:
                    return None
            else:
                tid = int(token)
                if not 0 <= tid < len(self._vocab):
                    raise ValueError(f"token id {tid} out of range")
            ids.append(tid)
        return tuple(ids)

    # -- probability queries -------------------------------------------------

    def cond_prob(self, context: Sequence[str | int], token: str | int) -> float:
        """Interpolated additive-smoothed P(token | context).

        The order used is len(context) + 1; contexts longer than
        max_order - 1 raise OrderOverflowError (callers truncate).
        Strictly positive; sums to 1 over the vocabulary.
        """
        if len(context) > self._max_order - 1:
            raise OrderOverflowError(
                f"context of length {len(context)} needs order {len(context) + 1} "
                f"> max_order {self._max_order}"
            )
        token_id = self._query_token_id(token)
        ctx_ids = self._context_ids(context)
        return self._interp_prob(ctx_ids, token_id)

    def _query_token_id(self, token: str | int) -> int | None:
        """None marks an out-of-vocabulary query token."""
        if isinstance(token, str):
            return self._vocab.id_of(token)
        tid = int(token)
        if not 0 <= tid < len(self._vocab):
            raise ValueError(f"token id {tid} out of range")
        return tid

    def _context_ids(self, context: Sequence[str | int]) -> tuple[int | None, ...]:
        out = []
        for token in context:
            out.append(self._query_token_id(token))
        return tuple(out)

    def _interp_prob(self, ctx: tuple[int | None, ...], token_id: int | None) -> float:
        vocab_size = len(self._vocab)
        delta = self._smoothing.delta
        lam = self._smoothing.interpolation_lambda
        slots = vocab_size if token_id is not None else vocab_size + 1

        if None in ctx:
            # an OOV context word means the full context never occurs
            joint = 0
            ext = 0
        else:
            joint = self._counts.get(ctx + (token_id,), 0) if token_id is not None else 0
            ext = self._ext_totals.get(ctx, 0)
        p_here = (joint + delta) / (ext + delta * slots)
        if not ctx:
            return p_here
        p_lower = self._interp_prob(ctx[1:], token_id)
        return lam * p_here + (1.0 - lam) * p_lower

    def word_frequency(self, word: str) -> int:
        """Unigram count of a word; 0 for out-of-vocabulary."""
        tid = self._vocab.id_of(word)
        if tid is None:
            return 0
        return self._counts.get((tid,), 0)

    def oracle_score(self, order: int, context_text: str, candidate_text: str) -> list[float]:
        """Per-token log-probabilities of the candidate after the context,
        with the context truncated to the last (order - 1) tokens."""
        if not 1 <= order <= self._max_order:
            raise OrderOverflowError(f"order {order} out of range [1, {self._max_order}]")
        context_tokens = tokenize(context_text)
        candidate_tokens = tokenize(candidate_text)
        if not candidate_tokens:
            raise ValueError(f"candidate {candidate_text!r} tokenizes to no tokens")
        logprobs = []
        for i, token in enumerate(candidate_tokens):
            full_context = context_tokens + candidate_tokens[:i]
            start = max(0, len(full_context) - (order - 1))
            truncated = full_context[start:] if order > 1 else []
            logprobs.append(math.log(self.cond_prob(truncated, token)))
        return logprobs

    # -- construction ---------------------------------------------------------

    @classmethod
    def from_unigram_counts(
        cls, word_counts: Mapping[str, int], smoothing: SmoothingSpec | None = None
    ) -> "NGramIndex":
        """Order-1 index straight from a word -> count table (used for the
        shipped Pile frequency fixture)."""
        vocab = Vocabulary(word_counts.keys())
        counts: dict[tuple[int, ...], int] = {}
        total = 0
        for word, count in word_counts.items():
            if count < 0:
                raise ValueError(f"negative count for {word!r}")
            counts[(vocab.id_of(word),)] = count
            total += count
        counts[()] = total
        ext_totals = {(): total}
        return cls(1, vocab, counts, ext_totals, smoothing or SmoothingSpec())


def build_index(
    corpus_text: str, max_order: int, smoothing: SmoothingSpec | None = None
) -> NGramIndex:
    """Tokenize a corpus (one document per line; blank lines dropped) and
    count every n-gram of length <= max_order exactly."""
    if max_order < 1:
        raise ValueError(f"max_order must be >= 1, got {max_order}")
    vocab = Vocabulary()
    stream: list[int] = []
    first = True
    for line in corpus_text.splitlines():
        tokens = tokenize(line)
        if not tokens:
            continue
        if not first:
            stream.append(vocab.add(DOC_BOUNDARY))
        first = False
        stream.extend(vocab.add(t) for t in tokens)
    if not stream:
        raise ValueError("corpus has no tokens")

    counts: Counter[tuple[int, ...]] = Counter()
    n = len(stream)
    for order in range(1, max_order + 1):
        for i in range(n - order + 1):
            counts[tuple(stream[i : i + order])] += 1
    table: dict[tuple[int, ...], int] = dict(counts)
    table[()] = n

    ext_totals: Counter[tuple[int, ...]] = Counter()
    for gram, count in table.items():
        if len(gram) >= 1:
            ext_totals[gram[:-1]] += count
    return NGramIndex(max_order, vocab, table, dict(ext_totals), smoothing or SmoothingSpec())


# ---------------------------------------------------------------------------
# Persistence: "NGIX" binary format, version 1, little-endian.
#
#   magic            4 bytes  b"NGIX"
#   version          u32
#   max_order        u32
#   delta            f64
#   interpolation    f64
#   vocab_size       u32
#   words            vocab_size x (u32 byte length, UTF-8 bytes); id = index
#   count entries    u64 count, then per entry: u8 length, length x u32 ids, u64 value
#   ext entries      same layout as count entries
#
# Entries are sorted by (length, ids) so identical indexes serialize to
# identical bytes.
# ---------------------------------------------------------------------------

_MAGIC = b"NGIX"
_VERSION = 1


def save_index(index: NGramIndex, path) -> None:
    chunks = [_MAGIC, struct.pack("<II", _VERSION, index.max_order)]
    chunks.append(struct.pack("<dd", index.smoothing.delta, index.smoothing.interpolation_lambda))
    vocab = index.vocabulary
    chunks.append(struct.pack("<I", len(vocab)))
    for word in vocab:
        raw = word.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)) + raw)
    for table in (index.stored_counts(), index._ext_totals):
        entries = sorted(table.items(), key=lambda kv: (len(kv[0]), kv[0]))
        chunks.append(struct.pack("<Q", len(entries)))
        for gram, value in entries:
            chunks.append(struct.pack("<B", len(gram)))
            chunks.append(struct.pack(f"<{len(gram)}I", *gram) if gram else b"")
            chunks.append(struct.pack("<Q", value))
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_index(path) -> NGramIndex:
    with open(path, "rb") as fh:
        data = fh.read()
    view = memoryview(data)
    if view[:4].tobytes() != _MAGIC:
        raise IndexFormatError("bad magic bytes (not an NGIX file)")
    offset = 4
    version, max_order = struct.unpack_from("<II", view, offset)
    offset += 8
    if version != _VERSION:
        raise IndexFormatError(f"unsupported NGIX version {version}")
    delta, lam = struct.unpack_from("<dd", view, offset)
    offset += 16
    (vocab_size,) = struct.unpack_from("<I", view, offset)
    offset += 4
    words = []
    for _ in range(vocab_size):
        (length,) = struct.unpack_from("<I", view, offset)
        offset += 4
        words.append(view[offset : offset + length].tobytes().decode("utf-8"))
        offset += length
    tables = []
    for _ in range(2):
        (n_entries,) = struct.unpack_from("<Q", view, offset)
        offset += 8
        table: dict[tuple[int, ...], int] = {}
        for _ in range(n_entries):
            (length,) = struct.unpack_from("<B", view, offset)
            offset += 1
            gram = struct.unpack_from(f"<{length}I", view, offset) if length else ()
            offset += 4 * length
            (value,) = struct.unpack_from("<Q", view, offset)
            offset += 8
            table[tuple(gram)] = value
        tables.append(table)
    if offset != len(data):
        raise IndexFormatError(f"{len(data) - offset} trailing bytes")
    return NGramIndex(
        max_order, Vocabulary(words), tables[0], tables[1], SmoothingSpec(delta, lam)
    )


# Module-level function forms of the index queries, matching how the
# operations are named elsewhere in the toolkit.


def word_frequency(index: NGramIndex, word: str) -> int:
    return index.word_frequency(word)


def cond_prob(index: NGramIndex, context: Sequence[str | int], token: str | int) -> float:
    return index.cond_prob(context, token)


def oracle_score(index: NGramIndex, order: int, context_text: str, candidate_text: str) -> list[float]:
    return index.oracle_score(order, context_text, candidate_text)

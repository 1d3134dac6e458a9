"""Scoring backends: a real transformer checkpoint and a deterministic fake.

Both expose the same surface: identity attributes plus
score(context, candidates) returning, per candidate, the candidate-region
token strings and their conditional log-probs (finite, <= 0, tokens
joining back to the candidate string).
"""

from __future__ import annotations

import hashlib
import re


class ScoringError(ValueError):
    """A request that cannot be scored (empty candidate, overlong context)."""


class FakeBackend:
    """Hash-derived scores; no model weights. Used for protocol tests and
    as a cheap stand-in when wiring up pipelines. Candidates containing
    "unscorable" raise, to exercise error paths."""

    def __init__(self, label: str = "fake"):
        self.model_id = label
        self.tokenizer_id = "fake-space-tokenizer"
        self.max_context = 2048

    def score(self, context: str, candidates: list[str]) -> list[dict]:
        if len(context) > self.max_context:
            raise ScoringError("context exceeds max_context")
        results = []
        for candidate in candidates:
            if "unscorable" in candidate:
                raise ScoringError(f"cannot score {candidate!r}")
            tokens = re.findall(r"\s*\S+", candidate)
            if not tokens:
                raise ScoringError("candidate tokenizes to no tokens")
            logprobs = []
            running = context
            for token in tokens:
                digest = hashlib.sha256(f"{running[-64:]}\x1f{token}".encode("utf-8")).digest()
                logprobs.append(-1.0 - (int.from_bytes(digest[:4], "little") % 10_000) / 1000.0)
                running += token
            results.append({"tokens": tokens, "logprobs": logprobs})
        return results


class TransformerBackend:
    """CPU inference over one loaded causal-LM checkpoint.

    The context and each candidate are tokenized separately and
    concatenated, so the candidate region is well defined; the leading
    space carried by candidates keeps word-initial BPE pieces intact.
    """

    def __init__(self, source: str, revision: str | None = None, device: str = "cpu"):
        import torch
        from transformers import AutoModelForCausalLM, AutoTokenizer

        self._torch = torch
        self.tokenizer = AutoTokenizer.from_pretrained(source, revision=revision)
        self.model = AutoModelForCausalLM.from_pretrained(source, revision=revision)
        self.model.to(device)
        self.model.eval()
        self.device = device
        self.model_id = source if revision is None else f"{source}@{revision}"
        self.tokenizer_id = (
            getattr(self.tokenizer, "name_or_path", "") or type(self.tokenizer).__name__
        )
        self.max_context = int(getattr(self.model.config, "max_position_embeddings", 2048))

    def _encode(self, text: str) -> list[int]:
        return self.tokenizer(text, add_special_tokens=False)["input_ids"]

    def _token_strings(self, ids: list[int], candidate: str) -> list[str]:
        pieces = [self.tokenizer.decode([i]) for i in ids]
        if "".join(pieces) == candidate:
            return pieces
        # per-id decode can break inside multi-token unicode; fall back to
        # the raw vocabulary symbols
        return self.tokenizer.convert_ids_to_tokens(ids)

    def score(self, context: str, candidates: list[str]) -> list[dict]:
        torch = self._torch
        context_ids = self._encode(context)
        if not context_ids:
            bos = self.tokenizer.bos_token_id
            if bos is None:
                raise ScoringError("empty context and the tokenizer has no BOS token")
            context_ids = [bos]
        results = []
        with torch.inference_mode():
            for candidate in candidates:
                candidate_ids = self._encode(candidate)
                if not candidate_ids:
                    raise ScoringError(f"candidate {candidate!r} tokenizes to no tokens")
                if len(context_ids) + len(candidate_ids) > self.max_context:
                    raise ScoringError(
                        f"context + candidate is {len(context_ids) + len(candidate_ids)} tokens, "
                        f"over max_context {self.max_context}"
                    )
                input_ids = torch.tensor([context_ids + candidate_ids], device=self.device)
                logits = self.model(input_ids).logits[0]
                logprobs = torch.log_softmax(logits.float(), dim=-1)
                out = []
                for j, token_id in enumerate(candidate_ids):
                    position = len(context_ids) + j
                    out.append(min(0.0, float(logprobs[position - 1, token_id])))
                results.append(
                    {"tokens": self._token_strings(candidate_ids, candidate), "logprobs": out}
                )
        return results

"""Client for the neural-provider wire protocol.

The provider is a child process speaking UTF-8 JSON Lines on stdio
(protocol version "1"): requests carry `id`, `kind` ("handshake" |
"score" | "list_checkpoints" | "shutdown") and kind-specific fields;
every request yields exactly one response echoing the id. Requests may
be pipelined; responses are matched by id, so the client is safe to use
from several scoring threads at once.
"""

from __future__ import annotations

import json
import subprocess
import threading
from dataclasses import dataclass
from typing import Mapping, Sequence

from .scoring import CandidateScore, ScorerId

PROTOCOL_VERSION = "1"


class ProviderError(Exception):
    """Transport failure or an error response from the provider."""


@dataclass(frozen=True)
class ProviderCapabilities:
    model_id: str
    tokenizer_id: str
    max_context: int
    protocol: str


class ProviderClient:
    """Owns one provider child process for its lifetime."""

    def __init__(self, cmd: Sequence[str], timeout: float = 300.0):
        self.cmd = list(cmd)
        self.timeout = timeout
        self._proc = subprocess.Popen(
            self.cmd,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            encoding="utf-8",
        )
        self._write_lock = threading.Lock()
        self._cond = threading.Condition()
        self._responses: dict[str, dict] = {}
        self._eof = False
        self._counter = 0
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()
        return False

    def _read_loop(self) -> None:
        try:
            for line in self._proc.stdout:
                line = line.strip()
                if not line:
                    continue
                try:
                    response = json.loads(line)
                except json.JSONDecodeError:
                    continue
                with self._cond:
                    rid = response.get("id")
                    if rid is not None:
                        self._responses[str(rid)] = response
                        self._cond.notify_all()
        finally:
            with self._cond:
                self._eof = True
                self._cond.notify_all()

    def request(self, kind: str, **fields) -> dict:
        """Send one request and block for its response."""
        with self._write_lock:
            self._counter += 1
            rid = str(self._counter)
            payload = {"id": rid, "kind": kind, **{k: v for k, v in fields.items() if v is not None}}
            try:
                self._proc.stdin.write(json.dumps(payload, ensure_ascii=False) + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, ValueError) as exc:
                raise ProviderError(f"provider process not accepting requests: {exc}") from exc
        with self._cond:
            ok = self._cond.wait_for(
                lambda: rid in self._responses or self._eof, timeout=self.timeout
            )
            if rid in self._responses:
                return self._responses.pop(rid)
            if not ok:
                raise ProviderError(f"timed out waiting for response to request {rid}")
            raise ProviderError("provider process closed its output stream")

    def _checked(self, response: dict) -> dict:
        if response.get("ok"):
            return response
        raise ProviderError(response.get("error") or "provider reported an unspecified error")

    def handshake(self, model_ref: Mapping | None = None) -> ProviderCapabilities:
        response = self._checked(self.request("handshake", model_ref=model_ref))
        caps = response.get("capabilities") or {}
        return ProviderCapabilities(
            model_id=caps.get("model_id", ""),
            tokenizer_id=caps.get("tokenizer_id", ""),
            max_context=int(caps.get("max_context", 0)),
            protocol=str(caps.get("protocol", "")),
        )

    def score(self, context: str, candidates: Sequence[str]) -> list[tuple[list[str], list[float]]]:
        response = self._checked(self.request("score", context=context, candidates=list(candidates)))
        results = response.get("results")
        if results is None or len(results) != len(candidates):
            raise ProviderError("score response does not cover all candidates")
        return [(list(r["tokens"]), [float(x) for x in r["logprobs"]]) for r in results]

    def list_checkpoints(self, name: str, size: str, seed: int) -> list[int]:
        response = self._checked(
            self.request("list_checkpoints", model_ref={"name": name, "size": size, "seed": seed})
        )
        steps = [int(s) for s in response.get("results") or []]
        if steps != sorted(set(steps)):
            raise ProviderError("checkpoint list is not ascending and deduplicated")
        return steps

    def shutdown(self, timeout: float = 30.0) -> int:
        """Graceful stop; returns the process exit code."""
        try:
            self.request("shutdown")
        except ProviderError:
            pass
        try:
            return self._proc.wait(timeout=timeout)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            return self._proc.wait()

    def close(self) -> None:
        if self._proc.poll() is None:
            self.shutdown(timeout=5.0)
        if self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()


class ProviderScorer:
    """Scorer adapter over a live provider client."""

    supports_concurrency = True

    def __init__(self, client: ProviderClient, scorer_id: ScorerId):
        self.client = client
        self.scorer_id = scorer_id

    def score_candidates(self, context: str, candidates: Sequence[str]) -> list[CandidateScore]:
        results = self.client.score(context, candidates)
        return [
            CandidateScore(surface=cand, tokens=tuple(tokens), logprobs=tuple(logprobs))
            for cand, (tokens, logprobs) in zip(candidates, results)
        ]

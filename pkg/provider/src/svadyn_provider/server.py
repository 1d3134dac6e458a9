"""The stdio server: UTF-8 JSON lines, protocol version 1.

Requests: {"id": ..., "kind": "handshake" | "score" | "list_checkpoints"
| "shutdown", "context": ..., "candidates": [...], "model_ref":
{"name", "size", "seed", "step"}}. Every well-formed request line gets
exactly one response line echoing the id, even on internal failure; a
line that is not JSON gets an error response with id null. One model
per process; the checkpoint ref normally arrives on the command line
and the model loads on the first handshake (a load failure is reported
in the response and the process stays alive for another try).

Request processing is strictly in arrival order; clients may pipeline
and match responses by id. Exit code 0 on shutdown or EOF.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import PROTOCOL_VERSION
from .backends import FakeBackend, TransformerBackend
from .hub import list_checkpoints, resolve_checkpoint


def _build_backend(args, model_ref: dict | None):
    if args.fake:
        label = f"{args.model or 'fake'}-{args.size or '0m'}-seed{args.seed}-step{args.step}"
        return FakeBackend(label)
    ref = model_ref or {}
    name = ref.get("name") or args.model
    size = ref.get("size") or args.size
    seed = ref.get("seed", args.seed)
    step = ref.get("step", args.step)
    if not name and not args.local_path:
        raise ValueError("no model ref: pass --model/--size/--seed/--step or --local-path")
    source, revision = resolve_checkpoint(
        name or "local", size, seed, step, local_path=args.local_path
    )
    return TransformerBackend(source, revision=revision, device=args.device)


def serve(args, stdin=None, stdout=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    backend = None

    def respond(payload: dict) -> None:
        stdout.write(json.dumps(payload, ensure_ascii=False) + "\n")
        stdout.flush()

    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
            if not isinstance(request, dict):
                raise ValueError("request must be a JSON object")
        except (json.JSONDecodeError, ValueError) as exc:
            respond({"id": None, "ok": False, "error": f"malformed request line: {exc}"})
            continue
        rid = request.get("id")
        kind = request.get("kind")
        try:
            if kind == "handshake":
                if backend is None:
                    backend = _build_backend(args, request.get("model_ref"))
                respond(
                    {
                        "id": rid,
                        "ok": True,
                        "capabilities": {
                            "model_id": backend.model_id,
                            "tokenizer_id": backend.tokenizer_id,
                            "max_context": backend.max_context,
                            "protocol": PROTOCOL_VERSION,
                        },
                    }
                )
            elif kind == "score":
                if backend is None:
                    raise ValueError("handshake required before score")
                context = request.get("context")
                candidates = request.get("candidates")
                if not isinstance(context, str) or not isinstance(candidates, list):
                    raise ValueError("score requires a context string and a candidates list")
                results = backend.score(context, [str(c) for c in candidates])
                respond({"id": rid, "ok": True, "results": results})
            elif kind == "list_checkpoints":
                ref = request.get("model_ref") or {}
                if args.fake:
                    if int(ref.get("seed", args.seed) or 0) > 9:
                        raise ValueError(f"unknown seed {ref.get('seed')}")
                    steps = [0, 1, 512, 3000]
                else:
                    name = ref.get("name") or args.model
                    if not name and not args.local_path:
                        raise ValueError("list_checkpoints needs a model ref or --local-path")
                    steps = list_checkpoints(
                        name or "local",
                        ref.get("size") or args.size,
                        ref.get("seed", args.seed),
                        local_path=args.local_path,
                    )
                respond({"id": rid, "ok": True, "results": steps})
            elif kind == "shutdown":
                respond({"id": rid, "ok": True})
                return 0
            else:
                raise ValueError(f"unknown request kind {kind!r}")
        except Exception as exc:
            respond({"id": rid, "ok": False, "error": f"{type(exc).__name__}: {exc}"})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="svadyn-provider",
        description="Per-token log-probability server over stdio JSON lines",
    )
    parser.add_argument("--model", default="", help="model name or full hub repo id")
    parser.add_argument("--size", default="", help="size label, e.g. 14m")
    parser.add_argument("--seed", type=int, default=0, help="training seed (0 = original run)")
    parser.add_argument("--step", type=int, default=None, help="checkpoint training step")
    parser.add_argument("--local-path", default=None, help="local checkpoint dir (or parent of step<N>/ dirs)")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--fake", action="store_true", help="deterministic weightless backend")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return serve(args)


if __name__ == "__main__":
    sys.exit(main())

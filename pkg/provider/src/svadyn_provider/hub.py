"""Checkpoint reference resolution and enumeration.

A model ref is (name, size, seed, step). Names containing "/" are taken
as full hub repo ids; bare names follow the PolyPythia convention
("EleutherAI/<name>-<size>" with a "-seed<k>" suffix for the reseeded
runs, seed 0 being the original release). Training steps map to hub
revisions "step<N>". A local checkpoint tree may stand in for the hub:
either a single saved model directory or a directory of step<N>/
subdirectories.
"""

from __future__ import annotations

import re
from pathlib import Path

_STEP_DIR = re.compile(r"^step(\d+)$")


def repo_id(name: str, size: str | None, seed: int | None) -> str:
    if "/" in name:
        return name
    if not size:
        raise ValueError("a bare model name needs a size label")
    base = f"EleutherAI/{name}-{size}"
    if seed:
        return f"{base}-seed{seed}"
    return base


def resolve_checkpoint(
    name: str,
    size: str | None = None,
    seed: int | None = None,
    step: int | None = None,
    local_path: str | None = None,
) -> tuple[str, str | None]:
    """Return (model source, revision) for from_pretrained."""
    if local_path:
        base = Path(local_path)
        if step is not None and (base / f"step{step}").is_dir():
            return str(base / f"step{step}"), None
        if not base.exists():
            raise ValueError(f"local checkpoint path {base} does not exist")
        return str(base), None
    revision = f"step{step}" if step is not None else None
    return repo_id(name, size, seed), revision


def list_checkpoints(
    name: str,
    size: str | None = None,
    seed: int | None = None,
    local_path: str | None = None,
) -> list[int]:
    """Ascending, deduplicated training steps for a model ref."""
    if local_path:
        base = Path(local_path)
        if not base.is_dir():
            raise ValueError(f"local checkpoint path {base} does not exist")
        steps = set()
        for child in base.iterdir():
            match = _STEP_DIR.match(child.name)
            if match and child.is_dir():
                steps.add(int(match.group(1)))
        return sorted(steps)

    from huggingface_hub import list_repo_refs  # network path; deferred import

    refs = list_repo_refs(repo_id(name, size, seed))
    steps = set()
    for branch in refs.branches:
        match = re.match(r"^step(\d+)$", branch.name)
        if match:
            steps.add(int(match.group(1)))
    return sorted(steps)

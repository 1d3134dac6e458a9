"""Shared test machinery: a minimal line client, the be-verb stimulus
frames, and the randomized request generator for conformance runs."""

import json
import random
import subprocess
import sys

FAKE_ARGS = ["--fake", "--model", "fake", "--size", "0m", "--seed", "0", "--step", "0"]

# (subject sg, subject pl, preposition, attractor sg, attractor pl);
# all with the verb be (is/are), the shape the attraction literature uses
BE_FRAMES = [
    ("key", "keys", "to", "cabinet", "cabinets"),
    ("teaching assistant", "teaching assistants", "near", "desk", "desks"),
    ("label", "labels", "on", "bottle", "bottles"),
    ("bridge", "bridges", "over", "canyon", "canyons"),
    ("picture", "pictures", "above", "sofa", "sofas"),
    ("door", "doors", "to", "office", "offices"),
    ("path", "paths", "through", "meadow", "meadows"),
    ("lamp", "lamps", "beside", "bed", "beds"),
    ("ladder", "ladders", "against", "wall", "walls"),
    ("pipe", "pipes", "under", "sink", "sinks"),
    ("sign", "signs", "near", "entrance", "entrances"),
    ("cable", "cables", "behind", "monitor", "monitors"),
    ("statue", "statues", "in", "garden", "gardens"),
]


def be_items():
    """All four nounpp conditions for every frame: dicts with prefix,
    correct, incorrect, and the condition label."""
    items = []
    for subj_sg, subj_pl, prep, attr_sg, attr_pl in BE_FRAMES:
        for subj_label, subj in (("S", subj_sg), ("P", subj_pl)):
            for attr_label, attr in (("S", attr_sg), ("P", attr_pl)):
                correct, incorrect = ("is", "are") if subj_label == "S" else ("are", "is")
                items.append(
                    {
                        "prefix": f"The {subj} {prep} the {attr}",
                        "correct": correct,
                        "incorrect": incorrect,
                        "condition": subj_label + attr_label,
                    }
                )
    return items


class LineClient:
    """Serial request/response over a provider subprocess."""

    def __init__(self, argv):
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "svadyn_provider", *argv],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            encoding="utf-8",
        )
        self._counter = 0

    def send_raw(self, line):
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()

    def read_response(self):
        line = self.proc.stdout.readline()
        if not line:
            raise RuntimeError("provider closed its output stream")
        return json.loads(line)

    def request(self, kind, **fields):
        self._counter += 1
        rid = f"r{self._counter}"
        self.send_raw(json.dumps({"id": rid, "kind": kind, **fields}))
        response = self.read_response()
        assert response["id"] == rid
        return response

    def shutdown(self):
        try:
            self.request("shutdown")
        except Exception:
            pass
        return self.proc.wait(timeout=30)

    def close(self):
        if self.proc.poll() is None:
            self.proc.kill()
            self.proc.wait()


def random_requests(count, rng):
    """Well-formed requests with unique ids: a mix of valid scores,
    scores that must fail, handshakes, checkpoint listings, and unknown
    kinds. Never shutdown (totality across the whole batch)."""
    requests = [{"id": "req-0", "kind": "handshake"}]
    words = ["alpha", "beta", "gamma", "delta", "unscorable", "key", "is", "are"]
    for k in range(1, count):
        rid = f"req-{k}"
        roll = rng.random()
        if roll < 0.55:
            n_candidates = rng.randint(0, 3)
            candidates = [
                " " + " ".join(rng.choice(words) for _ in range(rng.randint(1, 3)))
                for _ in range(n_candidates)
            ]
            requests.append(
                {
                    "id": rid,
                    "kind": "score",
                    "context": " ".join(rng.choice(words) for _ in range(rng.randint(1, 8))),
                    "candidates": candidates,
                }
            )
        elif roll < 0.65:
            requests.append({"id": rid, "kind": "score"})  # missing fields -> error
        elif roll < 0.75:
            requests.append({"id": rid, "kind": "handshake"})
        elif roll < 0.85:
            requests.append(
                {
                    "id": rid,
                    "kind": "list_checkpoints",
                    "model_ref": {"name": "fake", "size": "0m", "seed": rng.randint(0, 20)},
                }
            )
        elif roll < 0.95:
            requests.append({"id": rid, "kind": rng.choice(["train", "embed", ""])})
        else:
            requests.append({"id": rid, "kind": "score", "context": 42, "candidates": "nope"})
    return requests


def run_conformance(count=1000, seed=20240801):
    """Send `count` randomized requests to a fake-backend provider; return
    the (requests, responses) transcript after checking totality."""
    rng = random.Random(seed)
    requests = random_requests(count, rng)
    proc = subprocess.Popen(
        [sys.executable, "-m", "svadyn_provider", *FAKE_ARGS],
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        stderr=subprocess.DEVNULL,
        text=True,
        encoding="utf-8",
    )
    payload = "".join(json.dumps(r) + "\n" for r in requests)
    stdout, _ = proc.communicate(payload, timeout=120)
    responses = [json.loads(line) for line in stdout.splitlines() if line.strip()]
    assert proc.returncode == 0
    return requests, responses

"""Pipeline orchestration: run configuration, stages, and the manifest.

A run executes generate -> score -> analyze -> phases -> report, each
stage persisting its artifacts before the next starts. Oracle-only runs
are fully deterministic (rerunning an unchanged config reproduces
byte-identical record and analysis files); stages that need training
steps (phases, report) are recorded as skipped when no scorer has them.
"""

from __future__ import annotations

import hashlib
import json
import shlex
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

from . import __version__
from .analysis import (
    AGGREGATE_LABEL,
    POOLED_LABEL,
    AccuracyCell,
    PhaseLabel,
    PhaseSegment,
    TrajectorySeries,
    aggregate_score,
    aggregate_trajectory,
    build_trajectory,
    detect_changepoints,
    disaggregate,
    heuristic_alignment,
    label_for_order,
    label_phases,
    pooled_trajectory,
    write_accuracy_csv,
)
from .fixtures import generate_agreement_corpus, load_bundled_templates, load_pile_fixture_index
from .ngram import NGramIndex, SmoothingSpec, build_index, load_index
from .provider_client import ProviderClient, ProviderScorer
from .scoring import (
    Aggregation,
    NGramOracleScorer,
    ScoreRecord,
    ScorerFamily,
    ScorerId,
    ScoringOutcome,
    score_items,
    write_records,
)
from .stimuli import (
    ImportFormat,
    StimulusItem,
    expand_template,
    export_items,
    import_items,
    load_templates,
)
from .svgplot import emit_plot

IDENTITY_DIMS = ("family", "model", "size", "seed", "step", "order")


class ConfigError(Exception):
    """Invalid run configuration (CLI exit code 1)."""


class StageError(Exception):
    """A pipeline stage failed (CLI exit code 2)."""


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class StimuliSpec:
    bundled: bool = False
    templates: str | None = None
    import_path: str | None = None
    import_format: ImportFormat | None = None
    include_simple: bool = True

    def validate(self):
        chosen = sum([self.bundled, self.templates is not None, self.import_path is not None])
        if chosen != 1:
            raise ConfigError("stimuli must name exactly one of: bundled, templates, import")
        if self.import_path is not None and self.import_format is None:
            raise ConfigError("stimuli.import requires a format")


@dataclass
class CorpusSpec:
    """Where an oracle index comes from: the Pile fixture, a text corpus,
    a synthetic agreement corpus, or a persisted .ngix file."""

    kind: str  # pile_fixture | text | synthetic_agreement | index
    path: str | None = None
    max_order: int = 5
    delta: float = 0.1
    interpolation_lambda: float = 0.9
    repeats: int = 3

    def validate(self):
        if self.kind not in ("pile_fixture", "text", "synthetic_agreement", "index"):
            raise ConfigError(f"unknown corpus kind {self.kind!r}")
        if self.kind in ("text", "index") and not self.path:
            raise ConfigError(f"corpus kind {self.kind!r} requires a path")

    def build(self) -> NGramIndex:
        smoothing = SmoothingSpec(self.delta, self.interpolation_lambda)
        if self.kind == "pile_fixture":
            return load_pile_fixture_index(smoothing)
        if self.kind == "synthetic_agreement":
            text = generate_agreement_corpus(load_bundled_templates(), repeats=self.repeats)
            return build_index(text, self.max_order, smoothing)
        if self.kind == "index":
            return load_index(self.path)
        return build_index(Path(self.path).read_text(encoding="utf-8"), self.max_order, smoothing)


@dataclass
class OracleScorerSpec:
    orders: list[int]
    corpus: CorpusSpec
    name: str = "ngram"

    def validate(self):
        if not self.orders:
            raise ConfigError("oracle scorer needs at least one order")
        if any(o < 1 for o in self.orders):
            raise ConfigError("oracle orders must be >= 1")
        self.corpus.validate()


@dataclass
class ProviderScorerSpec:
    cmd: list[str]
    model_name: str
    size_label: str
    seeds: list[int]
    steps: list[int]
    args: list[str] = field(default_factory=list)

    def validate(self):
        if not self.cmd:
            raise ConfigError("provider scorer needs a command")
        if not self.seeds or not self.steps:
            raise ConfigError("provider scorer needs at least one seed and one step")


@dataclass
class AnalysisSpec:
    dims: list[str]
    ci_pooling: str  # "items" | "items_and_seeds"; must be named explicitly
    resamples: int = 1000
    alpha: float = 0.05
    min_segment: int = 2
    penalty: float | None = None

    def validate(self):
        if not self.dims:
            raise ConfigError("analysis.dims must be nonempty")
        if self.ci_pooling not in ("items", "items_and_seeds"):
            raise ConfigError('analysis.ci_pooling must be "items" or "items_and_seeds"')
        if self.resamples < 1 or not 0 < self.alpha < 1 or self.min_segment < 1:
            raise ConfigError("invalid bootstrap/changepoint parameters")


@dataclass
class RunConfig:
    output_dir: str
    stimuli: StimuliSpec
    oracles: list[OracleScorerSpec]
    providers: list[ProviderScorerSpec]
    analysis: AnalysisSpec
    aggregation: Aggregation = Aggregation.SUM
    seed: int = 0
    jobs: int = 1
    max_providers: int = 1
    log_x: bool = True
    schema_version: str = "1"

    def validate(self):
        if self.schema_version != "1":
            raise ConfigError(f"unsupported schema_version {self.schema_version!r}")
        if not self.oracles and not self.providers:
            raise ConfigError("config needs at least one scorer")
        if self.jobs < 1 or self.max_providers < 1:
            raise ConfigError("jobs and max_providers must be >= 1")
        self.stimuli.validate()
        for spec in self.oracles:
            spec.validate()
        for spec in self.providers:
            spec.validate()
        self.analysis.validate()
        seen = set()
        for spec in self.oracles:
            for order in spec.orders:
                if (spec.name, order) in seen:
                    raise ConfigError(f"duplicate oracle scorer {spec.name!r} order {order}")
                seen.add((spec.name, order))


def _resolve(base: Path | None, path: str | None) -> str | None:
    if path is None or base is None:
        return path
    p = Path(path)
    return str(p if p.is_absolute() else base / p)


def config_from_dict(payload: Mapping, base_dir: Path | None = None) -> RunConfig:
    """Parse and validate a config document; relative paths resolve
    against the config file's directory."""
    try:
        stim = payload.get("stimuli") or {}
        imp = stim.get("import") or {}
        stimuli = StimuliSpec(
            bundled=bool(stim.get("bundled", False)),
            templates=_resolve(base_dir, stim.get("templates")),
            import_path=_resolve(base_dir, imp.get("path")),
            import_format=ImportFormat(imp["format"]) if imp.get("format") else None,
            include_simple=bool(stim.get("include_simple", True)),
        )
        oracles = []
        providers = []
        for spec in payload.get("scorers") or []:
            family = spec.get("family")
            if family == "ngram_oracle":
                corpus_raw = spec.get("corpus") or {}
                corpus = CorpusSpec(
                    kind=corpus_raw.get("kind", "pile_fixture"),
                    path=_resolve(base_dir, corpus_raw.get("path")),
                    max_order=int(corpus_raw.get("max_order", 5)),
                    delta=float(corpus_raw.get("delta", 0.1)),
                    interpolation_lambda=float(corpus_raw.get("interpolation_lambda", 0.9)),
                    repeats=int(corpus_raw.get("repeats", 3)),
                )
                oracles.append(
                    OracleScorerSpec(
                        orders=[int(o) for o in spec.get("orders") or []],
                        corpus=corpus,
                        name=spec.get("name", "ngram"),
                    )
                )
            elif family == "neural_provider":
                cmd = spec.get("cmd")
                if isinstance(cmd, str):
                    cmd = shlex.split(cmd)
                model = spec.get("model") or {}
                providers.append(
                    ProviderScorerSpec(
                        cmd=[str(c) for c in cmd or []],
                        model_name=model.get("name", ""),
                        size_label=model.get("size", ""),
                        seeds=[int(s) for s in model.get("seeds") or []],
                        steps=[int(s) for s in model.get("steps") or []],
                        args=[str(a) for a in spec.get("args") or []],
                    )
                )
            else:
                raise ConfigError(f"unknown scorer family {family!r}")
        ana = payload.get("analysis") or {}
        boot = ana.get("bootstrap") or {}
        chg = ana.get("changepoint") or {}
        if "ci_pooling" not in ana:
            raise ConfigError("analysis.ci_pooling must be named explicitly")
        analysis = AnalysisSpec(
            dims=[str(d) for d in ana.get("dims") or ["condition"]],
            ci_pooling=str(ana["ci_pooling"]),
            resamples=int(boot.get("resamples", 1000)),
            alpha=float(boot.get("alpha", 0.05)),
            min_segment=int(chg.get("min_segment", 2)),
            penalty=None if chg.get("penalty") is None else float(chg["penalty"]),
        )
        if "output_dir" not in payload:
            raise ConfigError("config needs an output_dir")
        config = RunConfig(
            output_dir=_resolve(base_dir, str(payload["output_dir"])),
            stimuli=stimuli,
            oracles=oracles,
            providers=providers,
            analysis=analysis,
            aggregation=Aggregation(payload.get("aggregation", "sum")),
            seed=int(payload.get("seed", 0)),
            jobs=int(payload.get("jobs", 1)),
            max_providers=int(payload.get("max_providers", 1)),
            log_x=bool(payload.get("log_x", True)),
            schema_version=str(payload.get("schema_version", "1")),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    config.validate()
    return config


def config_to_dict(config: RunConfig) -> dict:
    scorers: list[dict] = []
    for spec in config.oracles:
        scorers.append(
            {
                "family": "ngram_oracle",
                "name": spec.name,
                "orders": list(spec.orders),
                "corpus": {
                    "kind": spec.corpus.kind,
                    "path": spec.corpus.path,
                    "max_order": spec.corpus.max_order,
                    "delta": spec.corpus.delta,
                    "interpolation_lambda": spec.corpus.interpolation_lambda,
                    "repeats": spec.corpus.repeats,
                },
            }
        )
    for spec in config.providers:
        scorers.append(
            {
                "family": "neural_provider",
                "cmd": list(spec.cmd),
                "args": list(spec.args),
                "model": {
                    "name": spec.model_name,
                    "size": spec.size_label,
                    "seeds": list(spec.seeds),
                    "steps": list(spec.steps),
                },
            }
        )
    return {
        "schema_version": config.schema_version,
        "seed": config.seed,
        "jobs": config.jobs,
        "max_providers": config.max_providers,
        "log_x": config.log_x,
        "output_dir": config.output_dir,
        "aggregation": config.aggregation.value,
        "stimuli": {
            "bundled": config.stimuli.bundled,
            "templates": config.stimuli.templates,
            "import": (
                {"path": config.stimuli.import_path, "format": config.stimuli.import_format.value}
                if config.stimuli.import_path
                else None
            ),
            "include_simple": config.stimuli.include_simple,
        },
        "scorers": scorers,
        "analysis": {
            "dims": list(config.analysis.dims),
            "ci_pooling": config.analysis.ci_pooling,
            "bootstrap": {"resamples": config.analysis.resamples, "alpha": config.analysis.alpha},
            "changepoint": {
                "min_segment": config.analysis.min_segment,
                "penalty": config.analysis.penalty,
            },
        },
    }


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(payload, base_dir=path.resolve().parent)


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------


@dataclass
class StageRecord:
    name: str
    status: str  # ok | skipped | failed
    artifacts: list[dict] = field(default_factory=list)
    failure_count: int = 0
    reason: str | None = None


@dataclass
class RunManifest:
    config: dict
    stages: list[StageRecord] = field(default_factory=list)
    started_at: str = ""
    finished_at: str = ""

    @property
    def total_failure_count(self) -> int:
        return sum(s.failure_count for s in self.stages)

    @property
    def failed(self) -> bool:
        return any(s.status == "failed" for s in self.stages)

    def to_dict(self) -> dict:
        return {
            "schema_version": "1",
            "tool_version": __version__,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "config": self.config,
            "stages": [
                {
                    "name": s.name,
                    "status": s.status,
                    "reason": s.reason,
                    "failure_count": s.failure_count,
                    "artifacts": s.artifacts,
                }
                for s in self.stages
            ],
            "total_failure_count": self.total_failure_count,
        }

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def verify_manifest(manifest_path) -> list[str]:
    """Recheck that every artifact listed in a manifest exists and hashes
    to its recorded value; returns the problems found."""
    manifest_path = Path(manifest_path)
    doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    root = manifest_path.parent
    problems = []
    for stage in doc.get("stages", []):
        for artifact in stage.get("artifacts", []):
            target = root / artifact["path"]
            if not target.exists():
                problems.append(f"missing artifact {artifact['path']}")
            elif _sha256_file(target) != artifact["sha256"]:
                problems.append(f"hash mismatch for {artifact['path']}")
    return problems


# ---------------------------------------------------------------------------
# Stage implementations
# ---------------------------------------------------------------------------


def _load_stage_items(config: RunConfig) -> list[StimulusItem]:
    spec = config.stimuli
    if spec.import_path is not None:
        return import_items(spec.import_path, spec.import_format)
    templates = load_bundled_templates() if spec.bundled else load_templates(spec.templates)
    items: list[StimulusItem] = []
    seen: set[str] = set()
    for template in templates:
        for item in expand_template(template, include_simple=spec.include_simple):
            if item.id not in seen:
                seen.add(item.id)
                items.append(item)
    return items


def _iter_oracle_scorers(config: RunConfig):
    """Yield oracle scorers lazily, one corpus build at a time, so work
    already persisted survives a later scorer's failure."""
    for spec in config.oracles:
        index = spec.corpus.build()
        for order in spec.orders:
            yield NGramOracleScorer(index, order, model_name=spec.name)


def _provider_checkpoints(config: RunConfig) -> list[tuple[ProviderScorerSpec, int, int]]:
    out = []
    for spec in config.providers:
        for seed in spec.seeds:
            for step in spec.steps:
                out.append((spec, seed, step))
    return out


def _score_with_provider(
    spec: ProviderScorerSpec, seed: int, step: int, items: Sequence[StimulusItem], jobs: int
) -> tuple[ScorerId, ScoringOutcome]:
    scorer_id = ScorerId(
        family=ScorerFamily.NEURAL_PROVIDER,
        model_name=spec.model_name,
        size_label=spec.size_label,
        seed=seed,
        step=step,
    )
    cmd = [
        *spec.cmd,
        "--model",
        spec.model_name,
        "--size",
        spec.size_label,
        "--seed",
        str(seed),
        "--step",
        str(step),
        *spec.args,
    ]
    with ProviderClient(cmd) as client:
        client.handshake()
        scorer = ProviderScorer(client, scorer_id)
        outcome = score_items(scorer, items, jobs=jobs)
        client.shutdown()
    return scorer_id, outcome


def method_metadata(config: RunConfig) -> dict:
    """The method block embedded in every analysis output."""
    return {
        "tool_version": __version__,
        "aggregation": config.aggregation.value,
        "bootstrap_resamples": config.analysis.resamples,
        "bootstrap_alpha": config.analysis.alpha,
        "bootstrap_seed": config.seed,
        "ci_pooling": config.analysis.ci_pooling,
        "changepoint_min_segment": config.analysis.min_segment,
        "changepoint_penalty": config.analysis.penalty,
    }


def compute_analysis_cells(
    records: Sequence[ScoreRecord],
    items: Mapping[str, StimulusItem],
    config: RunConfig,
) -> tuple[list[AccuracyCell], list[str]]:
    """Main disaggregation plus, per scorer, the unweighted-aggregate and
    item-pooled summary rows (condition labels "aggregate"/"pooled")."""
    dims = list(IDENTITY_DIMS) + [d for d in config.analysis.dims if d not in IDENTITY_DIMS]
    cells = disaggregate(
        records,
        dims,
        config.aggregation,
        items,
        resamples=config.analysis.resamples,
        alpha=config.analysis.alpha,
        seed=config.seed,
    )
    if "condition" in dims:
        by_scorer: dict[ScorerId, list[ScoreRecord]] = {}
        for record in records:
            by_scorer.setdefault(record.scorer, []).append(record)
        for scorer_id in sorted(by_scorer, key=lambda s: s.slug):
            recs = by_scorer[scorer_id]
            cond_cells = disaggregate(
                recs,
                ["condition"],
                config.aggregation,
                items,
                resamples=config.analysis.resamples,
                alpha=config.analysis.alpha,
                seed=config.seed,
            )
            agg = aggregate_score(cond_cells)
            identity = {
                "family": scorer_id.family.value,
                "model": scorer_id.model_name,
                "size": scorer_id.size_label,
                "seed": scorer_id.seed,
                "step": scorer_id.step,
                "order": scorer_id.order,
            }
            n_total = sum(c.n for c in cond_cells)
            cells.append(
                AccuracyCell(
                    group={**identity, "condition": AGGREGATE_LABEL},
                    n=n_total,
                    accuracy=agg,
                    ci_low=agg,
                    ci_high=agg,
                )
            )
            decisions = [
                r.decision_sum if config.aggregation is Aggregation.SUM else r.decision_mean
                for r in recs
            ]
            pooled_acc = sum(decisions) / len(decisions)
            cells.append(
                AccuracyCell(
                    group={**identity, "condition": POOLED_LABEL},
                    n=len(decisions),
                    accuracy=pooled_acc,
                    ci_low=pooled_acc,
                    ci_high=pooled_acc,
                )
            )
    return cells, dims


@dataclass
class PhaseGroup:
    key: dict
    series: list[TrajectorySeries]
    aggregate: TrajectorySeries
    pooled: TrajectorySeries
    breakpoints: list[int]
    segments: list[PhaseSegment]
    alignments: dict


def compute_phase_groups(
    records: Sequence[ScoreRecord],
    items: Mapping[str, StimulusItem],
    config: RunConfig,
) -> list[PhaseGroup]:
    """Trajectories, change points, and labeled phases for every stepped
    scorer group. Breakpoints are the union over per-condition series and
    the pooled series (per-condition detection is what surfaces
    breakthroughs the aggregate hides)."""
    stepped = [r for r in records if r.scorer.step is not None]
    if not stepped:
        return []
    pool_seeds = config.analysis.ci_pooling == "items_and_seeds"

    # one oracle per label; if several scorers share a label (say two
    # order-1 oracles over different corpora), the lexicographically
    # first slug wins, deterministically
    per_label_scorers: dict[PhaseLabel, dict[str, dict[str, ScoreRecord]]] = {}
    for record in records:
        if record.scorer.family is ScorerFamily.NGRAM_ORACLE:
            label = label_for_order(record.scorer.order)
            per_label_scorers.setdefault(label, {}).setdefault(record.scorer.slug, {})[
                record.item_id
            ] = record
    oracle_decisions: dict[PhaseLabel, dict[str, ScoreRecord]] = {
        label: slugs[min(slugs)] for label, slugs in per_label_scorers.items()
    }

    group_key = lambda r: (
        r.scorer.model_name,
        r.scorer.size_label,
        None if pool_seeds else r.scorer.seed,
    )
    grouped: dict[tuple, list[ScoreRecord]] = {}
    for record in stepped:
        grouped.setdefault(group_key(record), []).append(record)

    out = []
    for key in sorted(grouped, key=lambda k: tuple(str(v) for v in k)):
        recs = grouped[key]
        series = build_trajectory(
            recs,
            items,
            pool_seeds=pool_seeds,
            resamples=config.analysis.resamples,
            alpha=config.analysis.alpha,
            seed=config.seed,
        )
        agg_series = aggregate_trajectory(series)
        pooled_series = pooled_trajectory(
            series,
            resamples=config.analysis.resamples,
            alpha=config.analysis.alpha,
            seed=config.seed,
        )

        by_step: dict[int, list[ScoreRecord]] = {}
        for record in recs:
            by_step.setdefault(record.scorer.step, []).append(record)
        steps = sorted(by_step)

        alignments: dict[PhaseLabel, dict[int, float]] = {}
        for label, oracle_by_id in sorted(oracle_decisions.items(), key=lambda kv: kv[0].value):
            per_step = {}
            for step in steps:
                model_recs = by_step[step]
                oracle_recs = [oracle_by_id[r.item_id] for r in model_recs if r.item_id in oracle_by_id]
                if len(oracle_recs) != len(model_recs):
                    missing = [r.item_id for r in model_recs if r.item_id not in oracle_by_id]
                    raise StageError(f"oracle {label.value} lacks decisions for items {missing[:3]}")
                per_step[step] = heuristic_alignment(model_recs, oracle_recs, config.aggregation)
            alignments[label] = per_step
        grammar = {}
        for step in steps:
            decisions = [
                r.decision_sum if config.aggregation is Aggregation.SUM else r.decision_mean
                for r in by_step[step]
            ]
            grammar[step] = sum(decisions) / len(decisions)
        alignments[PhaseLabel.GRAMMAR] = grammar

        breakpoints: set[int] = set()
        for ts in [*series, pooled_series]:
            if len(ts.points) >= 2 * config.analysis.min_segment:
                breakpoints.update(
                    detect_changepoints(ts, config.analysis.min_segment, config.analysis.penalty)
                )
        merged = sorted(b for b in breakpoints if b in steps and b != steps[0])
        segments = label_phases(alignments, merged)
        out.append(
            PhaseGroup(
                key=dict(zip(("model", "size", "seed"), key)),
                series=series,
                aggregate=agg_series,
                pooled=pooled_series,
                breakpoints=merged,
                segments=segments,
                alignments={
                    label.value: {str(s): v for s, v in per_step.items()}
                    for label, per_step in alignments.items()
                },
            )
        )
    return out


def phases_document(groups: Sequence[PhaseGroup], method: Mapping) -> dict:
    doc: dict = {
        "method": dict(method),
        "groups": [
            {
                "key": g.key,
                "breakpoints": g.breakpoints,
                "segments": [
                    {
                        "start_step": s.start_step,
                        "end_step": s.end_step,
                        "label": s.label.value,
                        "alignment": s.alignment,
                    }
                    for s in g.segments
                ],
                "alignments": g.alignments,
            }
            for g in groups
        ],
    }
    if len(groups) == 1:
        doc["breakpoints"] = doc["groups"][0]["breakpoints"]
        doc["segments"] = doc["groups"][0]["segments"]
    return doc


# ---------------------------------------------------------------------------
# The pipeline
# ---------------------------------------------------------------------------


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run_pipeline(config: RunConfig) -> RunManifest:
    """Execute all stages; every artifact is persisted and hashed into the
    manifest before the next stage starts. A stage failure stops the run
    but leaves earlier artifacts (and the manifest) valid."""
    config.validate()
    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} not writable: {exc}") from exc

    manifest = RunManifest(config=config_to_dict(config), started_at=_utcnow())
    manifest_path = out / "manifest.json"

    def finish_stage(stage: StageRecord) -> None:
        manifest.stages.append(stage)
        manifest.finished_at = _utcnow()
        manifest.write(manifest_path)

    def artifact(path: Path) -> dict:
        return {"path": str(path.relative_to(out)), "sha256": _sha256_file(path)}

    items: list[StimulusItem] = []
    all_records: list[ScoreRecord] = []

    # stage: stimuli
    stage = StageRecord(name="stimuli", status="ok")
    try:
        items = _load_stage_items(config)
        stimuli_path = out / "stimuli.jsonl"
        export_items(items, stimuli_path)
        stage.artifacts.append(artifact(stimuli_path))
    except Exception as exc:
        stage.status = "failed"
        stage.reason = f"{type(exc).__name__}: {exc}"
        finish_stage(stage)
        return manifest
    finish_stage(stage)

    # stage: score
    stage = StageRecord(name="score", status="ok")
    try:
        records_dir = out / "records"
        records_dir.mkdir(exist_ok=True)
        for scorer in _iter_oracle_scorers(config):
            outcome = score_items(scorer, items, jobs=config.jobs)
            path = records_dir / f"{scorer.scorer_id.slug}.jsonl"
            write_records(outcome.records, path)
            all_records.extend(outcome.records)
            stage.failure_count += outcome.failure_count
            stage.artifacts.append(artifact(path))
        checkpoints = _provider_checkpoints(config)
        if checkpoints:
            if config.max_providers > 1:
                with ThreadPoolExecutor(max_workers=config.max_providers) as pool:
                    results = list(
                        pool.map(
                            lambda c: _score_with_provider(c[0], c[1], c[2], items, config.jobs),
                            checkpoints,
                        )
                    )
            else:
                results = [
                    _score_with_provider(spec, seed, step, items, config.jobs)
                    for spec, seed, step in checkpoints
                ]
            for scorer_id, outcome in results:
                path = records_dir / f"{scorer_id.slug}.jsonl"
                write_records(outcome.records, path)
                all_records.extend(outcome.records)
                stage.failure_count += outcome.failure_count
                stage.artifacts.append(artifact(path))
    except Exception as exc:
        stage.status = "failed"
        stage.reason = f"{type(exc).__name__}: {exc}"
        finish_stage(stage)
        return manifest
    finish_stage(stage)

    items_by_id = {item.id: item for item in items}
    method = method_metadata(config)

    # stage: analyze
    stage = StageRecord(name="analyze", status="ok")
    try:
        cells, dims = compute_analysis_cells(all_records, items_by_id, config)
        analysis_dir = out / "analysis"
        analysis_dir.mkdir(exist_ok=True)
        accuracy_path = analysis_dir / "accuracy.csv"
        write_accuracy_csv(cells, dims, accuracy_path, method)
        stage.artifacts.append(artifact(accuracy_path))
    except Exception as exc:
        stage.status = "failed"
        stage.reason = f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=3)}"
        finish_stage(stage)
        return manifest
    finish_stage(stage)

    # stage: phases
    groups: list[PhaseGroup] = []
    stage = StageRecord(name="phases", status="ok")
    try:
        groups = compute_phase_groups(all_records, items_by_id, config)
        if not groups:
            stage.status = "skipped"
            stage.reason = "no scorer carries training steps"
        else:
            phases_path = out / "analysis" / "phases.json"
            with open(phases_path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(json.dumps(phases_document(groups, method), indent=2, sort_keys=True) + "\n")
            stage.artifacts.append(artifact(phases_path))
    except Exception as exc:
        stage.status = "failed"
        stage.reason = f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=3)}"
        finish_stage(stage)
        return manifest
    finish_stage(stage)

    # stage: report
    stage = StageRecord(name="report", status="ok")
    try:
        if not groups:
            stage.status = "skipped"
            stage.reason = "no trajectories to plot"
        else:
            report_dir = out / "report"
            report_dir.mkdir(exist_ok=True)
            first = groups[0]
            title = " / ".join(str(v) for v in first.key.values() if v is not None)
            svg = emit_plot(first.series, first.aggregate, title=title, log_x=config.log_x)
            figure_path = report_dir / "figure.svg"
            figure_path.write_text(svg, encoding="utf-8", newline="\n")
            stage.artifacts.append(artifact(figure_path))
    except Exception as exc:
        stage.status = "failed"
        stage.reason = f"{type(exc).__name__}: {exc}"
        finish_stage(stage)
        return manifest
    finish_stage(stage)

    return manifest

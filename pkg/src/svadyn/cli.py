"""Command-line front end.

Subcommands: stimuli, index, score, analyze, phases, report, fixtures,
and run (the full pipeline from one config file). Exit codes: 0 success,
1 config error, 2 stage failure, 3 partial success with item-level
scorer failures. Environment overrides: SVADYN_OUT (output directory)
and SVADYN_PROVIDER_CMD (provider executable), nothing else.
"""

from __future__ import annotations

import argparse
import json
import os
import shlex
import sys
from pathlib import Path

from . import __version__
from .analysis import write_accuracy_csv
from .fixtures import (
    export_fixtures,
    generate_agreement_corpus,
    load_bundled_templates,
    load_pile_fixture_index,
    verb_lexicon,
)
from .ngram import SmoothingSpec, build_index, load_index, save_index
from .pipeline import (
    ConfigError,
    RunConfig,
    compute_analysis_cells,
    compute_phase_groups,
    load_config,
    method_metadata,
    phases_document,
    run_pipeline,
)
from .provider_client import ProviderClient, ProviderScorer
from .scoring import (
    Aggregation,
    NGramOracleScorer,
    ScorerFamily,
    ScorerId,
    read_records,
    score_items,
    write_records,
)
from .stimuli import (
    ImportFormat,
    StimulusError,
    expand_template,
    export_items,
    import_items,
    load_templates,
    validate_item,
)
from .svgplot import emit_plot

OK, CONFIG_ERROR, STAGE_FAILURE, PARTIAL = 0, 1, 2, 3


def _add_common_analysis_flags(parser):
    parser.add_argument("--aggregation", choices=["sum", "mean"], default="sum")
    parser.add_argument("--resamples", type=int, default=1000)
    parser.add_argument("--alpha", type=float, default=0.05)
    parser.add_argument("--seed", type=int, default=0)


def _analysis_config(args, dims=("condition",)) -> RunConfig:
    """A minimal in-memory config for the standalone analyze/phases/report
    subcommands (they reuse the pipeline's computation functions)."""
    from .pipeline import AnalysisSpec, OracleScorerSpec, CorpusSpec, StimuliSpec

    return RunConfig(
        output_dir=".",
        stimuli=StimuliSpec(bundled=True),
        oracles=[OracleScorerSpec(orders=[1], corpus=CorpusSpec(kind="pile_fixture"))],
        providers=[],
        analysis=AnalysisSpec(
            dims=list(dims),
            ci_pooling=getattr(args, "ci_pooling", "items"),
            resamples=args.resamples,
            alpha=args.alpha,
            min_segment=getattr(args, "min_segment", 2),
            penalty=getattr(args, "penalty", None),
        ),
        aggregation=Aggregation(args.aggregation),
        seed=args.seed,
    )


def _load_items_map(path):
    items = import_items(path, ImportFormat.NATIVE_JSONL)
    return items, {item.id: item for item in items}


def _read_all_records(paths):
    records = []
    for path in paths:
        records.extend(read_records(path))
    return records


def cmd_stimuli(args) -> int:
    if args.import_path:
        items = import_items(args.import_path, ImportFormat(args.format))
    else:
        templates = load_bundled_templates() if args.bundled else load_templates(args.templates)
        items, seen = [], set()
        for template in templates:
            for item in expand_template(template, include_simple=not args.no_simple):
                if item.id not in seen:
                    seen.add(item.id)
                    items.append(item)
    if args.validate:
        lexicon = verb_lexicon()
        bad = 0
        for item in items:
            violations = validate_item(item, lexicon)
            if violations:
                bad += 1
                print(f"{item.id}: {'; '.join(violations)}", file=sys.stderr)
        if bad:
            print(f"{bad} invalid item(s)", file=sys.stderr)
            return STAGE_FAILURE
    export_items(items, args.out)
    print(f"wrote {len(items)} items to {args.out}")
    return OK


def cmd_index(args) -> int:
    smoothing = SmoothingSpec(args.delta, args.lam)
    if args.synthetic_agreement:
        text = generate_agreement_corpus(load_bundled_templates(), repeats=args.repeats)
    else:
        text = Path(args.corpus).read_text(encoding="utf-8")
    index = build_index(text, args.max_order, smoothing)
    save_index(index, args.out)
    print(
        f"indexed {index.token_count} tokens, vocab {len(index.vocabulary)}, "
        f"max order {index.max_order} -> {args.out}"
    )
    return OK


def cmd_score(args) -> int:
    items, _ = _load_items_map(args.stimuli)
    if args.provider_cmd:
        cmd = shlex.split(args.provider_cmd) + [
            "--model", args.model, "--size", args.size,
            "--seed", str(args.model_seed), "--step", str(args.step),
        ]
        scorer_id = ScorerId(
            family=ScorerFamily.NEURAL_PROVIDER,
            model_name=args.model,
            size_label=args.size,
            seed=args.model_seed,
            step=args.step,
        )
        with ProviderClient(cmd) as client:
            client.handshake()
            outcome = score_items(ProviderScorer(client, scorer_id), items, jobs=args.jobs)
    else:
        if args.pile_fixture:
            index = load_pile_fixture_index()
        elif args.index:
            index = load_index(args.index)
        else:
            raise ConfigError("score needs one of --index, --pile-fixture, or --provider-cmd")
        scorer = NGramOracleScorer(index, args.order, model_name=args.name)
        outcome = score_items(scorer, items, jobs=args.jobs)
    write_records(outcome.records, args.out)
    print(f"wrote {len(outcome.records)} records to {args.out} ({outcome.failure_count} failures)")
    return PARTIAL if outcome.failure_count else OK


def cmd_analyze(args) -> int:
    _, items_map = _load_items_map(args.stimuli)
    records = _read_all_records(args.records)
    config = _analysis_config(args, dims=args.dims)
    cells, dims = compute_analysis_cells(records, items_map, config)
    write_accuracy_csv(cells, dims, args.out, method_metadata(config))
    print(f"wrote {len(cells)} cells to {args.out}")
    return OK


def cmd_phases(args) -> int:
    _, items_map = _load_items_map(args.stimuli)
    records = _read_all_records(args.records)
    config = _analysis_config(args)
    groups = compute_phase_groups(records, items_map, config)
    if not groups:
        print("no stepped records; nothing to segment", file=sys.stderr)
        return STAGE_FAILURE
    doc = phases_document(groups, method_metadata(config))
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"wrote {sum(len(g.segments) for g in groups)} segments to {args.out}")
    return OK


def cmd_report(args) -> int:
    _, items_map = _load_items_map(args.stimuli)
    records = _read_all_records(args.records)
    config = _analysis_config(args)
    groups = compute_phase_groups(records, items_map, config)
    if not groups:
        print("no stepped records; nothing to plot", file=sys.stderr)
        return STAGE_FAILURE
    first = groups[0]
    title = " / ".join(str(v) for v in first.key.values() if v is not None)
    svg = emit_plot(first.series, first.aggregate, title=title, log_x=not args.linear_x)
    Path(args.out).write_text(svg, encoding="utf-8", newline="\n")
    print(f"wrote {args.out}")
    return OK


def cmd_fixtures(args) -> int:
    written = export_fixtures(args.out)
    for path in written:
        print(path)
    return OK


def cmd_run(args) -> int:
    config = load_config(args.config)
    out_override = args.out or os.environ.get("SVADYN_OUT")
    if out_override:
        config.output_dir = out_override
    provider_override = args.provider_cmd or os.environ.get("SVADYN_PROVIDER_CMD")
    if provider_override:
        for spec in config.providers:
            spec.cmd = shlex.split(provider_override)
    if args.jobs is not None:
        config.jobs = args.jobs
    if args.aggregation is not None:
        config.aggregation = Aggregation(args.aggregation)
    if args.seed is not None:
        config.seed = args.seed
    manifest = run_pipeline(config)
    for stage in manifest.stages:
        line = f"{stage.name}: {stage.status}"
        if stage.failure_count:
            line += f" ({stage.failure_count} item failures)"
        if stage.reason:
            line += f" [{stage.reason.splitlines()[0]}]"
        print(line)
    if manifest.failed:
        return STAGE_FAILURE
    if manifest.total_failure_count:
        return PARTIAL
    return OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="svadyn", description="Subject-verb agreement learning-dynamics toolkit"
    )
    parser.add_argument("--version", action="version", version=f"svadyn {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stimuli", help="generate, import, and validate stimulus items")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--templates", help="template JSONL file to expand")
    src.add_argument("--bundled", action="store_true", help="expand the bundled templates")
    src.add_argument("--import", dest="import_path", help="import an existing stimulus file")
    p.add_argument("--format", choices=[f.value for f in ImportFormat], default="native_jsonl")
    p.add_argument("--no-simple", action="store_true", help="skip derived simple conditions")
    p.add_argument("--validate", action="store_true", help="validate against the bundled lexicon")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stimuli)

    p = sub.add_parser("index", help="build and persist an n-gram index")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--corpus", help="UTF-8 text, one document per line")
    src.add_argument(
        "--synthetic-agreement",
        action="store_true",
        help="use the generated agreement corpus (every noun followed by its agreeing verb form)",
    )
    p.add_argument("--repeats", type=int, default=3, help="synthetic corpus repeats per line")
    p.add_argument("--max-order", type=int, default=5)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--lambda", dest="lam", type=float, default=0.9)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("score", help="score stimuli with an oracle or a provider checkpoint")
    p.add_argument("--stimuli", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--index", help="persisted .ngix index")
    p.add_argument("--pile-fixture", action="store_true", help="use the bundled Pile counts")
    p.add_argument("--order", type=int, default=1)
    p.add_argument("--name", default="ngram")
    p.add_argument("--provider-cmd", help="provider executable (JSON-lines stdio protocol)")
    p.add_argument("--model", default="")
    p.add_argument("--size", default="")
    p.add_argument("--model-seed", type=int, default=0)
    p.add_argument("--step", type=int, default=0)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("analyze", help="disaggregate records into accuracy cells")
    p.add_argument("--stimuli", required=True)
    p.add_argument("--records", nargs="+", required=True)
    p.add_argument("--dims", nargs="+", default=["condition"])
    p.add_argument("--out", required=True)
    _add_common_analysis_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("phases", help="detect change points and label heuristic phases")
    p.add_argument("--stimuli", required=True)
    p.add_argument("--records", nargs="+", required=True, help="record files (stepped + oracle)")
    p.add_argument("--out", required=True)
    p.add_argument("--min-segment", type=int, default=2)
    p.add_argument("--penalty", type=float, default=None)
    p.add_argument("--ci-pooling", choices=["items", "items_and_seeds"], default="items")
    _add_common_analysis_flags(p)
    p.set_defaults(func=cmd_phases)

    p = sub.add_parser("report", help="emit the condition-curve SVG figure")
    p.add_argument("--stimuli", required=True)
    p.add_argument("--records", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--linear-x", action="store_true", help="linear instead of log step axis")
    p.add_argument("--ci-pooling", choices=["items", "items_and_seeds"], default="items")
    _add_common_analysis_flags(p)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("fixtures", help="export the bundled frequency table and templates")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fixtures)

    p = sub.add_parser("run", help="run the full pipeline from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override the configured output directory")
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--provider-cmd", help="override the provider executable")
    p.add_argument("--aggregation", choices=["sum", "mean"], default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_run)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    except (StimulusError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return STAGE_FAILURE


if __name__ == "__main__":
    sys.exit(main())

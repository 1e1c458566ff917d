"""Command-line surface for the whole pipeline.

Subcommands: validate, aggregate, stats, split, align, sample-frames,
context build, prompts emit, eval run, serve. Every subcommand accepts
--config (JSON file of defaults) and --seed. Exit codes: 0 success, 1 domain
error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import artifacts
from .annotation import (
    aggregate_document,
    dataset_stats,
    stats_to_csv,
    validate_document,
)
from .context import (
    ContextConfig,
    SchemaExtraction,
    SegmentSummary,
    StreamState,
    build_context,
)
from .dataset import ClipRecord, estimate_alignment, extract_frames, make_split, sample_frames
from .errors import EmoviewError
from .evaluation import ExperimentConfig, run_experiment
from .model_client import (
    ConstantBackend,
    GoldEchoBackend,
    ModelClient,
    ModelEndpointConfig,
    extract_schema,
)
from .prompts import PromptVariant, emit_training_set
from .service import ServiceConfig, serve


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    return artifacts.read_json(path)


# --- subcommand implementations -------------------------------------------------


def cmd_validate(args, _config) -> int:
    doc = validate_document(Path(args.infile).read_bytes())
    report = {
        "ok": True,
        "frames": len(doc.frames),
        "mode": doc.mode,
        "roster": doc.roster,
        "underfilled_frames": doc.underfilled_frames(),
    }
    if args.out:
        artifacts.write_json(args.out, report)
    print(f"valid document: {len(doc.frames)} frames, roster {doc.roster}")
    return 0


def cmd_aggregate(args, _config) -> int:
    doc = validate_document(Path(args.infile).read_bytes())
    agg = aggregate_document(doc)
    Path(args.out).write_text(agg.to_json())
    print(f"aggregated {len(agg.frames)} frames ({len(agg.excluded)} excluded) -> {args.out}")
    return 0


def cmd_stats(args, _config) -> int:
    doc = validate_document(Path(args.infile).read_bytes())
    stats = dataset_stats(doc)
    if args.out_json:
        artifacts.write_json(args.out_json, stats)
    if args.out_csv:
        Path(args.out_csv).write_text(stats_to_csv(stats))
    if not args.out_json and not args.out_csv:
        print(json.dumps(stats, indent=2, sort_keys=True))
    return 0


def cmd_split(args, _config) -> int:
    clips = [ClipRecord.from_dict(d) for d in artifacts.read_json(args.clips)]
    manifest = make_split(clips, test_fraction=args.test_fraction, seed=args.seed)
    Path(args.out).write_text(manifest.to_json())
    print(
        f"split {len(manifest.train_movies)} train / {len(manifest.test_movies)} test movies "
        f"-> {args.out}"
    )
    return 0


def cmd_align(args, _config) -> int:
    fpv = np.load(args.fpv)
    raw = np.load(args.raw)
    estimate = estimate_alignment(fpv, raw, search_window_seconds=args.window)
    result = estimate.to_dict()
    if args.out:
        artifacts.write_json(args.out, result)
    print(json.dumps(result))
    return 0


def cmd_sample_frames(args, _config) -> int:
    clip = ClipRecord.from_dict(artifacts.read_json(args.clip))
    if args.decode:
        index = extract_frames(clip, args.out_dir, fps=args.fps, decoder=args.decoder)
    else:
        index = sample_frames(clip, fps=args.fps, frames_dir=args.out_dir)
    out = {str(t): uri for t, uri in sorted(index.items())}
    if args.out:
        artifacts.write_json(args.out, out)
    print(f"{len(index)} frames for clip {clip.clip_id}")
    return 0


def cmd_context_build(args, config) -> int:
    summaries = [SegmentSummary.from_dict(d) for d in artifacts.read_json(args.summaries)]
    frame_index = {int(t): uri for t, uri in artifacts.read_json(args.frame_index).items()}

    if args.extractions:
        canned = {
            int(i): SchemaExtraction.from_dict(d)
            for i, d in artifacts.read_json(args.extractions).items()
        }

        def extractor(summary: SegmentSummary) -> SchemaExtraction:
            return canned[summary.segment_index]

    else:
        client = ModelClient(ModelEndpointConfig.from_env(**config.get("model", {})))

        def extractor(summary: SegmentSummary) -> SchemaExtraction:
            return extract_schema(client, summary)

    state = StreamState(extractor, config=ContextConfig())
    for summary in summaries:
        state.add_summary(summary)

    times = [int(x) for x in args.times.split(",")]
    triplets = {}
    cumulative = {}
    for t in times:
        triplet = build_context(t, frame_index, args.audio_uri, state)
        triplets[str(t)] = triplet.to_dict()
        if triplet.narrative.recent is not None:
            cumulative[str(t)] = state.cumulative_text(t)
    artifacts.write_json(args.out, {"triplets": triplets, "cumulative": cumulative})
    if args.checkpoint:
        state.save_checkpoint(args.checkpoint)
    print(f"built {len(times)} context triplets -> {args.out}")
    return 0


def cmd_prompts_emit(args, _config) -> int:
    manifest = artifacts.load_manifest(args.manifest)
    aggregates = artifacts.load_aggregates(artifacts.read_json(args.aggregates))
    contexts, cumulative = artifacts.load_contexts(artifacts.read_json(args.contexts))
    rationales = None
    if args.rationales:
        rationales = {
            artifacts.parse_frame_key(k): v
            for k, v in artifacts.read_json(args.rationales).items()
        }
    summary = emit_training_set(
        manifest,
        aggregates,
        contexts,
        PromptVariant(args.variant),
        rationale_fraction=args.rationale_fraction,
        seed=args.seed,
        out_path=args.out,
        rationales=rationales,
        cumulative_texts=cumulative,
        split=args.split,
    )
    print(
        f"wrote {summary['records']} records ({summary['rationale_records']} with rationales) "
        f"-> {summary['path']}"
    )
    return 0


def cmd_eval_run(args, config) -> int:
    if not config:
        print("eval run requires --config with the experiment description", file=sys.stderr)
        return 2
    cfg = ExperimentConfig.from_dict(config["experiment"])
    manifest = artifacts.load_manifest(config["manifest"])
    aggregates = artifacts.load_aggregates(config["aggregates"])
    contexts, cumulative = artifacts.load_contexts(config["contexts"])
    out_dir = args.out_dir or config.get("out_dir", "eval_out")

    backend = None
    mock = args.mock or config.get("mock")
    if mock == "gold":
        backend = GoldEchoBackend(artifacts.gold_map(aggregates))
    elif mock and mock.startswith("constant:"):
        backend = ConstantBackend(mock.split(":", 1)[1])

    report = run_experiment(
        cfg,
        manifest,
        contexts,
        aggregates,
        out_dir,
        backend=backend,
        cumulative_texts=cumulative,
    )
    d = report.to_dict()
    print(
        f"accuracy {d['accuracy']:.2f}  macro_f1 {d['macro_f1']:.2f}  "
        f"weighted_f1 {d['weighted_f1']:.2f}  (n={d['n_examples']})"
    )
    return 0


def cmd_serve(args, config) -> int:
    merged = dict(config.get("service", config))
    if args.corpus:
        merged["corpus_root"] = args.corpus
    if args.port:
        merged["port"] = args.port
    serve(ServiceConfig.from_dict(merged))
    return 0


# --- parser ------------------------------------------------------------------------


def _common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON config file")
    sub.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emoview", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("validate", help="validate an annotation document")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out")
    _common(p)
    p.set_defaults(func=cmd_validate)

    p = subs.add_parser("aggregate", help="confidence-summed aggregation of a document")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_aggregate)

    p = subs.add_parser("stats", help="dataset statistics for a document")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out-json")
    p.add_argument("--out-csv")
    _common(p)
    p.set_defaults(func=cmd_stats)

    p = subs.add_parser("split", help="movie-level train/test split")
    p.add_argument("--clips", required=True, help="JSON list of clip records")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_split)

    p = subs.add_parser("align", help="estimate temporal offset between two frame arrays")
    p.add_argument("--fpv", required=True, help=".npy grayscale frame sequence")
    p.add_argument("--raw", required=True, help=".npy grayscale frame sequence")
    p.add_argument("--window", type=int, default=10)
    p.add_argument("--out")
    _common(p)
    p.set_defaults(func=cmd_align)

    p = subs.add_parser("sample-frames", help="frame index (and optional decode) for a clip")
    p.add_argument("--clip", required=True, help="clip.json record")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--fps", type=float, default=1.0)
    p.add_argument("--decode", action="store_true")
    p.add_argument("--decoder", default="ffmpeg")
    p.add_argument("--out")
    _common(p)
    p.set_defaults(func=cmd_sample_frames)

    p = subs.add_parser("context", help="context-engine commands")
    ctx_subs = p.add_subparsers(dest="subcommand", required=True)
    pb = ctx_subs.add_parser("build", help="build context triplets for given times")
    pb.add_argument("--summaries", required=True, help="JSON list of segment summaries")
    pb.add_argument("--frame-index", required=True, help="JSON {t: uri}")
    pb.add_argument("--audio-uri", required=True)
    pb.add_argument("--times", required=True, help="comma-separated times in seconds")
    pb.add_argument("--extractions", help="JSON {segment_index: extraction} (offline mode)")
    pb.add_argument("--checkpoint", help="write fold-state checkpoint here")
    pb.add_argument("--out", required=True)
    _common(pb)
    pb.set_defaults(func=cmd_context_build)

    p = subs.add_parser("prompts", help="prompt-builder commands")
    pr_subs = p.add_subparsers(dest="subcommand", required=True)
    pe = pr_subs.add_parser("emit", help="emit a JSON-lines training set")
    pe.add_argument("--manifest", required=True)
    pe.add_argument("--aggregates", required=True, help="JSON {clip_id: aggregate path}")
    pe.add_argument("--contexts", required=True, help="JSON {clip_id: contexts path}")
    pe.add_argument("--variant", required=True, choices=[v.value for v in PromptVariant])
    pe.add_argument("--rationale-fraction", type=float, default=0.0)
    pe.add_argument("--rationales", help="JSON {'clip:t': rationale text}")
    pe.add_argument("--split", default="train")
    pe.add_argument("--out", required=True)
    _common(pe)
    pe.set_defaults(func=cmd_prompts_emit)

    p = subs.add_parser("eval", help="evaluation commands")
    ev_subs = p.add_subparsers(dest="subcommand", required=True)
    er = ev_subs.add_parser("run", help="run an experiment from a config file")
    er.add_argument("--mock", help="gold | constant:<label>")
    er.add_argument("--out-dir")
    _common(er)
    er.set_defaults(func=cmd_eval_run)

    p = subs.add_parser("serve", help="run the annotation/eval HTTP service")
    p.add_argument("--corpus")
    p.add_argument("--port", type=int)
    _common(p)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse prints usage to stderr itself
        return exc.code if isinstance(exc.code, int) else 2
    try:
        config = _load_config(args.config)
        return args.func(args, config)
    except EmoviewError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line surface.

    poempixel [--config PATH] [--mock] [--seed N] <command> ...

Commands: ingest, stats, summarize, poekey, instruct, generate, evaluate,
run, tune (start | score | close-round | advance | status | replay), serve.

Exit codes: 0 success, 1 validation/usage error, 2 provider error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import corpus, pipeline, summarizer
from .errors import PoemPixelError, ValidationError
from .providers import build_providers, load_provider_config
from .reviewsvc import ReviewServer
from .tuning import (
    DEFAULT_MAX_ROUNDS,
    DEFAULT_RATERS,
    DEMO_IMAGE_ROUNDS,
    DEMO_SUMMARY_ROUNDS,
    SessionStore,
    replay_rounds,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="poempixel", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="provider config file (TOML or JSON)")
    parser.add_argument("--mock", action="store_true", help="force deterministic mock providers")
    parser.add_argument("--seed", type=int, default=0, help="seed for all randomness")
    sub = parser.add_subparsers(dest="command", metavar="command")

    def dataset_args(p):
        p.add_argument("--dataset", required=True, help="poem dataset (JSONL or CSV)")
        p.add_argument("--format", choices=corpus.FORMATS, default=None)
        p.add_argument("--source", choices=corpus.SOURCES, default="custom")

    p = sub.add_parser("ingest", help="load, validate, and normalize a dataset")
    dataset_args(p)
    p.add_argument("--out", help="write the normalized JSONL here")

    p = sub.add_parser("stats", help="print dataset statistics")
    dataset_args(p)

    def run_dir_arg(p):
        p.add_argument("--run-dir", required=True, help="pipeline run directory")

    p = sub.add_parser("summarize", help="run the summarization stage")
    run_dir_arg(p)
    p.add_argument("--dataset", help="dataset (required when creating the run dir)")
    p.add_argument("--format", choices=corpus.FORMATS, default=None)
    p.add_argument("--source", choices=corpus.SOURCES, default="custom")
    p.add_argument("--template-id", default=summarizer.DEFAULT_SUMMARY_TEMPLATE)
    p.add_argument("--include-title", action="store_true")

    p = sub.add_parser("poekey", help="run key-element extraction over summaries")
    run_dir_arg(p)
    p.add_argument("--themes", help="theme registry JSON")
    p.add_argument("--emotions", help="emotion registry JSON")

    p = sub.add_parser("instruct", help="write diffusion instructions from key elements")
    run_dir_arg(p)
    p.add_argument("--template-id", default=summarizer.DEFAULT_INSTRUCTION_TEMPLATE)

    p = sub.add_parser("generate", help="generate images from instructions")
    run_dir_arg(p)
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--height", type=int, default=None)

    p = sub.add_parser("evaluate", help="write metric reports for a run")
    run_dir_arg(p)
    p.add_argument(
        "--mode", default="text,image", help="comma-joined subset of: text,image"
    )

    p = sub.add_parser("run", help="run the full pipeline")
    dataset_args(p)
    p.add_argument("--out", required=True, help="run directory to create")
    p.add_argument("--template-id", default=summarizer.DEFAULT_SUMMARY_TEMPLATE)
    p.add_argument("--instruction-template-id", default=summarizer.DEFAULT_INSTRUCTION_TEMPLATE)
    p.add_argument("--fraction", type=float, default=1.0, help="deterministic sample fraction")
    p.add_argument("--width", type=int, default=1024)
    p.add_argument("--height", type=int, default=1024)
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--variant", choices=pipeline.VARIANTS, default="full")
    p.add_argument("--caption-source", choices=pipeline.CAPTION_SOURCES, default="instruction")
    p.add_argument("--include-title", action="store_true")
    p.add_argument("--resume", action="store_true", help="complete a partial run")
    p.add_argument("--no-evaluate", action="store_true", help="skip report generation")

    tune = sub.add_parser("tune", help="prompt-tuning session commands")
    tune_sub = tune.add_subparsers(dest="tune_command", metavar="subcommand")

    def session_args(p):
        p.add_argument("--store", required=True, help="session store root directory")
        p.add_argument("--session", default="default", help="session id")

    p = tune_sub.add_parser("start", help="create a session and open round 1")
    session_args(p)
    p.add_argument("--mode", choices=("summary", "image"), required=True)
    p.add_argument("--template-id", required=True)
    p.add_argument("--items-file", help="JSONL of review items for round 1")
    p.add_argument("--raters", default=",".join(DEFAULT_RATERS), help="comma-joined rater ids")
    p.add_argument("--max-rounds", type=int, default=DEFAULT_MAX_ROUNDS)

    p = tune_sub.add_parser("score", help="submit one score without the HTTP service")
    session_args(p)
    p.add_argument("--item", required=True)
    p.add_argument("--rater", required=True)
    p.add_argument("--value", type=float, required=True)

    p = tune_sub.add_parser("close-round", help="aggregate the open round and apply the stop rule")
    session_args(p)

    p = tune_sub.add_parser("advance", help="open the next round with a new template")
    session_args(p)
    p.add_argument("--template-id", required=True)
    p.add_argument("--items-file", help="JSONL of review items for the new round")

    p = tune_sub.add_parser("status", help="print round history and the stop/selection decision")
    session_args(p)

    p = tune_sub.add_parser("replay", help="replay the bundled demo score sheets")
    session_args(p)
    p.add_argument("--mode", choices=("summary", "image"), required=True)

    p = sub.add_parser("serve", help="start the review HTTP service")
    p.add_argument("--store", required=True, help="session store root directory")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--images-dir", help="directory serving /images/*.png")
    p.add_argument("--token", help="shared token required in X-Review-Token")

    return parser


def _load_items_file(path: Optional[str]) -> Optional[list[dict]]:
    if not path:
        return None
    items = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                items.append(json.loads(line))
    return items


def _merge_run_config(args, run_dir: Path, overrides: dict) -> pipeline.RunConfig:
    """Stage commands reuse the run dir's config.json, then apply overrides."""
    config_path = run_dir / "config.json"
    base: dict = {}
    if config_path.exists():
        base = json.loads(config_path.read_text(encoding="utf-8"))
    base.update({k: v for k, v in overrides.items() if v is not None})
    base.setdefault("output_dir", str(run_dir))
    base["resume"] = True
    base.setdefault("mock", True)
    if args.mock:
        base["mock"] = True
    if args.config:
        base["provider_config"] = args.config
        base["mock"] = bool(args.mock)
    base.setdefault("seed", args.seed)
    if "dataset" not in base or not base["dataset"]:
        raise ValidationError(
            f"no config.json in {run_dir}; pass --dataset to create the run"
        )
    known = {f for f in pipeline.RunConfig.__dataclass_fields__}
    return pipeline.RunConfig(**{k: v for k, v in base.items() if k in known})


def _print_manifest(manifest) -> None:
    counts = " ".join(f"{k}={v}" for k, v in manifest.counts.items())
    print(f"run {manifest.run_id}: {counts}")
    for failure in manifest.failures:
        print(f"  failure: poem {failure.poem_id} at {failure.stage}: {failure.error}")


def _cmd_ingest(args) -> int:
    dataset = corpus.load_dataset(args.dataset, args.format, source=args.source)
    findings = corpus.validate_dataset(dataset)
    for finding in findings:
        print(f"{finding.level}: {finding.poem_id}: {finding.message}")
    if args.out:
        corpus.save_dataset(dataset, args.out)
        print(f"wrote {len(dataset.poems)} poems to {args.out}")
    else:
        print(f"loaded {len(dataset.poems)} poems from {args.dataset}")
    return 1 if any(f.level == "error" for f in findings) else 0


def _cmd_stats(args) -> int:
    dataset = corpus.load_dataset(args.dataset, args.format, source=args.source)
    print(corpus.format_stats(corpus.dataset_stats(dataset), dataset.name))
    return 0


def _cmd_stage(args, stage: str) -> int:
    run_dir = Path(args.run_dir)
    overrides: dict = {}
    if stage == "summarize":
        overrides = {
            "dataset": args.dataset,
            "dataset_format": args.format,
            "source": args.source if args.dataset else None,
            "summary_template_id": args.template_id,
            "include_title": args.include_title or None,
        }
    elif stage == "poekey":
        overrides = {"themes_path": args.themes, "emotions_path": args.emotions}
    elif stage == "instruct":
        overrides = {"instruction_template_id": args.template_id}
    elif stage == "generate":
        overrides = {"image_width": args.width, "image_height": args.height}
    cfg = _merge_run_config(args, run_dir, overrides)
    manifest = pipeline.run_pipeline(cfg, stop_after=stage)
    _print_manifest(manifest)
    return 0


def _cmd_evaluate(args) -> int:
    modes = tuple(m.strip() for m in args.mode.split(",") if m.strip())
    for mode in modes:
        if mode not in ("text", "image"):
            raise ValidationError(f"unknown evaluate mode {mode!r}")
    scorer = None
    if "image" in modes and not (Path(args.run_dir) / "scores.jsonl").exists():
        provider_cfg = load_provider_config(args.config) if args.config else None
        scorer = build_providers(provider_cfg, mock_override=args.mock, seed=args.seed).scorer
    results = pipeline.evaluate_run(args.run_dir, modes, scorer=scorer)
    for mode, payload in results.items():
        print(f"[{mode}] report: {payload['markdown']}")
        print(Path(payload["markdown"]).read_text(encoding="utf-8"), end="")
    return 0


def _cmd_run(args) -> int:
    cfg = pipeline.RunConfig(
        dataset=args.dataset,
        dataset_format=args.format,
        source=args.source,
        output_dir=args.out,
        provider_config=args.config,
        mock=args.mock or not args.config,
        seed=args.seed,
        sample_fraction=args.fraction,
        summary_template_id=args.template_id,
        instruction_template_id=args.instruction_template_id,
        image_width=args.width,
        image_height=args.height,
        workers=args.workers,
        include_title=args.include_title,
        caption_source=args.caption_source,
        variant=args.variant,
        resume=args.resume,
    )
    manifest = pipeline.run_pipeline(cfg)
    _print_manifest(manifest)
    if not args.no_evaluate and cfg.variant == "full" and not manifest.failures:
        try:
            pipeline.evaluate_run(args.out, ("text", "image"))
            print(f"reports written to {Path(args.out) / 'reports'}")
        except ValidationError as exc:
            print(f"reports skipped: {exc}")
    return 0


def _session_store(args) -> SessionStore:
    return SessionStore(Path(args.store) / args.session)


def _cmd_tune(args) -> int:
    if args.tune_command == "start":
        store = _session_store(args)
        store.create(
            args.mode,
            args.template_id,
            items=_load_items_file(args.items_file),
            raters=tuple(r.strip() for r in args.raters.split(",") if r.strip()),
            max_rounds=args.max_rounds,
        )
        print(f"session {args.session}: round 1 open with template {args.template_id}")
        return 0
    if args.tune_command == "score":
        store = _session_store(args)
        event = store.submit(args.item, args.rater, args.value)
        print(f"stored: round {event.round_index} item {event.item_id} "
              f"rater {event.rater_id} value {event.value:g}")
        return 0
    if args.tune_command == "close-round":
        store = _session_store(args)
        session = store.close_round()
        closed = session.rounds[len(session.history()) - 1]
        print(f"round {closed.index} closed: aggregate {closed.aggregate:g}")
        if session.stopped:
            selected = session.rounds[session.selected_round - 1]
            print(f"stopped after round {closed.index}, selected {selected.template_id}")
        return 0
    if args.tune_command == "advance":
        store = _session_store(args)
        session = store.advance(args.template_id, items=_load_items_file(args.items_file))
        print(f"round {len(session.rounds)} open with template {args.template_id}")
        return 0
    if args.tune_command == "status":
        store = _session_store(args)
        session = store.load()
        print(f"session {args.session}: mode={session.mode} aggregation={session.aggregation}")
        for round_ in session.rounds:
            aggregate = "-" if round_.aggregate is None else f"{round_.aggregate:g}"
            extras = ""
            if round_.automated_metrics:
                extras = "  " + " ".join(
                    f"{k}={v:.4f}" for k, v in sorted(round_.automated_metrics.items())
                )
            print(
                f"round {round_.index}  {round_.template_id:<4} {round_.status:<6} "
                f"aggregate={aggregate}{extras}"
            )
        if session.stopped:
            selected = session.rounds[session.selected_round - 1]
            print(
                f"stopped after round {len(session.rounds)}, selected {selected.template_id}"
            )
        else:
            open_round = session.open_round()
            state = f"round {open_round.index} open" if open_round else "awaiting next round"
            print(f"running; {state}")
        return 0
    if args.tune_command == "replay":
        rounds = DEMO_SUMMARY_ROUNDS if args.mode == "summary" else DEMO_IMAGE_ROUNDS
        session = replay_rounds(Path(args.store) / args.session, args.mode, rounds)
        print(f"replayed {len(session.rounds)} rounds; aggregates: "
              + ", ".join(f"{a:g}" for a in session.history()))
        selected = session.rounds[session.selected_round - 1]
        print(f"stopped after round {len(session.rounds)}, selected {selected.template_id}")
        return 0
    raise ValidationError("tune needs a subcommand: start|score|close-round|advance|status|replay")


def _cmd_serve(args) -> int:
    server = ReviewServer(
        args.store,
        port=args.port,
        host=args.host,
        images_dir=args.images_dir,
        token=args.token,
        verbose=True,
    )
    print(f"review service listening on {server.url} (Ctrl+C to stop)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
        print("shut down")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_usage(sys.stderr)
        return 1
    try:
        if args.command == "ingest":
            return _cmd_ingest(args)
        if args.command == "stats":
            return _cmd_stats(args)
        if args.command in ("summarize", "poekey", "instruct", "generate"):
            return _cmd_stage(args, args.command)
        if args.command == "evaluate":
            return _cmd_evaluate(args)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "tune":
            return _cmd_tune(args)
        if args.command == "serve":
            return _cmd_serve(args)
        parser.error(f"unknown command {args.command!r}")
    except PoemPixelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""End-to-end orchestration: poem -> summary -> key elements -> instruction
-> image -> alignment scores, plus run evaluation reports.

Run directory layout::

    runs/<run_id>/
      config.json        # config snapshot (pure inputs, no volatile fields)
      poems.jsonl        # the sampled dataset, canonical schema
      summaries.jsonl
      keyelements.jsonl
      instructions.jsonl
      generations.jsonl  # image metadata; bytes live in images/
      scores.jsonl       # per-poem itm/itc
      images/<poem_id>.png
      reports/           # written by evaluate_run
      manifest.json      # written last

Stages run over a bounded worker pool with a barrier between stages; each
poem is isolated (one poem's provider failure never aborts the batch) and
every stage is idempotent per poem_id, which is what --resume keys on. All
randomness flows from the single config seed, so two mock runs with equal
seeds produce byte-identical JSONL artifacts up to timestamp fields.
"""

from __future__ import annotations

import json
import random
import string
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Callable, Optional, Sequence

from . import corpus, poekey, summarizer
from .corpus import Dataset, Poem
from .errors import ValidationError
from .instructor import InstructionRecord, generate_image_for_poem, generate_instruction
from .providers import ImageParams, Providers, build_providers, load_provider_config
from .providers.base import ImageArtifact
from .pngio import read_png
from .textmetrics import bleu, meteor, rouge_l, rouge_n, tokenize

CAPTION_SOURCES = ("instruction", "summary", "poem")
VARIANTS = ("full", "no_summary", "no_tuning")

_TIMESTAMP_FIELDS = ("created_at",)


@dataclass(frozen=True)
class RunConfig:
    dataset: str
    output_dir: str
    dataset_format: Optional[str] = None
    source: str = "custom"
    provider_config: Optional[str] = None
    mock: bool = True
    seed: int = 0
    sample_fraction: float = 1.0
    summary_template_id: str = summarizer.DEFAULT_SUMMARY_TEMPLATE
    instruction_template_id: str = summarizer.DEFAULT_INSTRUCTION_TEMPLATE
    registry_path: Optional[str] = None
    themes_path: Optional[str] = None
    emotions_path: Optional[str] = None
    lexicon_path: Optional[str] = None
    image_width: int = 1024
    image_height: int = 1024
    workers: int = 4
    include_title: bool = False
    caption_source: str = "instruction"
    variant: str = "full"
    resume: bool = False


@dataclass(frozen=True)
class StageFailure:
    poem_id: str
    stage: str
    error: str


@dataclass
class RunManifest:
    run_id: str
    created_at: str
    config: dict
    counts: dict[str, int]
    failures: list[StageFailure] = field(default_factory=list)
    wall_time: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "created_at": self.created_at,
            "config": self.config,
            "counts": self.counts,
            "failures": [asdict(f) for f in self.failures],
            "wall_time": self.wall_time,
        }


def bundled_fixture_path() -> Path:
    """The packaged 10-poem demo dataset."""
    return Path(str(resources.files("poempixel.data") / "fixture_poems.jsonl"))


def _validate_config(cfg: RunConfig) -> None:
    if not Path(cfg.dataset).exists():
        raise ValidationError(f"dataset file not found: {cfg.dataset}")
    if not 0 < cfg.sample_fraction <= 1:
        raise ValidationError(f"sample_fraction must be in (0, 1], got {cfg.sample_fraction}")
    if cfg.caption_source not in CAPTION_SOURCES:
        raise ValidationError(f"caption_source must be one of {CAPTION_SOURCES}")
    if cfg.variant not in VARIANTS:
        raise ValidationError(f"variant must be one of {VARIANTS}")
    if cfg.workers < 1:
        raise ValidationError("workers must be >= 1")
    if cfg.image_width <= 0 or cfg.image_height <= 0:
        raise ValidationError("image dimensions must be positive")
    templates = summarizer.registry_load(cfg.registry_path)
    for template_id in _effective_templates(cfg):
        summarizer.registry_get(templates, template_id)


def _effective_templates(cfg: RunConfig) -> tuple[str, str]:
    if cfg.variant == "no_tuning":
        return "R1", "I1"
    return cfg.summary_template_id, cfg.instruction_template_id


def _run_id(seed: int) -> str:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    rng = random.Random(seed)
    suffix = "".join(rng.choices(string.ascii_lowercase + string.digits, k=6))
    return f"{stamp}-{suffix}"


def _sample(dataset: Dataset, fraction: float, seed: int) -> Dataset:
    if fraction >= 1.0:
        return dataset
    n = len(dataset.poems)
    k = max(1, round(n * fraction))
    rng = random.Random(seed)
    keep = sorted(rng.sample(range(n), k))
    return Dataset(dataset.name, tuple(dataset.poems[i] for i in keep))


def _write_jsonl(path: Path, rows: Sequence[dict]) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    return rows


def _run_stage(
    stage: str,
    items: Sequence[Poem],
    fn: Callable[[Poem], dict],
    workers: int,
) -> tuple[dict[str, dict], list[StageFailure]]:
    """Run fn over items with per-item isolation; results keyed by poem id."""
    results: dict[str, dict] = {}
    failures: list[StageFailure] = []
    if not items:
        return results, failures
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {poem.id: pool.submit(fn, poem) for poem in items}
    for poem in items:
        try:
            results[poem.id] = futures[poem.id].result()
        except Exception as exc:  # provider faults must not abort the batch
            failures.append(StageFailure(poem.id, stage, str(exc)))
    return results, failures


class _StageFiles:
    """Per-stage jsonl persistence with resume support."""

    def __init__(self, run_dir: Path, resume: bool):
        self.run_dir = run_dir
        self.resume = resume

    def existing(self, name: str, key: str = "poem_id") -> dict[str, dict]:
        path = self.run_dir / name
        if not (self.resume and path.exists()):
            return {}
        return {row[key]: row for row in _read_jsonl(path)}

    def write(self, name: str, order: Sequence[str], rows: dict[str, dict]) -> int:
        written = [rows[pid] for pid in order if pid in rows]
        _write_jsonl(self.run_dir / name, written)
        return len(written)


def run_pipeline(
    cfg: RunConfig,
    providers: Optional[Providers] = None,
    stop_after: Optional[str] = None,
) -> RunManifest:
    """Execute the full chain over a dataset and persist every artifact.

    ``providers`` overrides config-derived providers (used by tests for
    fault injection). ``stop_after`` ends the run after the named stage;
    combined with ``resume`` this is how the per-stage CLI commands work.
    """
    _validate_config(cfg)
    summary_tid, instruction_tid = _effective_templates(cfg)
    templates = summarizer.registry_load(cfg.registry_path)
    summary_template = summarizer.registry_get(templates, summary_tid)
    instruction_template = summarizer.registry_get(templates, instruction_tid)

    if providers is None:
        provider_cfg = (
            load_provider_config(cfg.provider_config) if cfg.provider_config else None
        )
        providers = build_providers(provider_cfg, mock_override=cfg.mock, seed=cfg.seed)

    dataset = corpus.load_dataset(
        cfg.dataset, cfg.dataset_format, source=cfg.source
    )
    errors = [f for f in corpus.validate_dataset(dataset) if f.level == "error"]
    if errors:
        detail = "; ".join(f"{f.poem_id}: {f.message}" for f in errors)
        raise ValidationError(f"dataset failed validation: {detail}")

    run_dir = Path(cfg.output_dir)
    if run_dir.exists() and any(run_dir.iterdir()) and not cfg.resume:
        raise ValidationError(
            f"output dir {run_dir} already exists and is not empty; pass resume=True/--resume"
        )
    (run_dir / "images").mkdir(parents=True, exist_ok=True)
    (run_dir / "reports").mkdir(parents=True, exist_ok=True)

    sampled = _sample(dataset, cfg.sample_fraction, cfg.seed)
    order = [p.id for p in sampled.poems]
    by_id = {p.id: p for p in sampled.poems}

    (run_dir / "config.json").write_text(
        json.dumps(asdict(cfg), indent=2, sort_keys=True), encoding="utf-8"
    )
    _write_jsonl(run_dir / "poems.jsonl", [corpus.poem_to_record(p) for p in sampled.poems])

    files = _StageFiles(run_dir, cfg.resume)
    manifest = RunManifest(
        run_id=_run_id(cfg.seed),
        created_at=datetime.now(timezone.utc).isoformat(),
        config=asdict(cfg),
        counts={"poems": len(sampled.poems)},
    )
    image_params = ImageParams(width=cfg.image_width, height=cfg.image_height, seed=cfg.seed)

    def timed(stage: str, items, fn) -> dict[str, dict]:
        start = time.perf_counter()
        fresh, failures = _run_stage(stage, items, fn, cfg.workers)
        manifest.wall_time[stage] = round(time.perf_counter() - start, 6)
        manifest.failures.extend(failures)
        return fresh

    if cfg.variant == "no_summary":
        _run_no_summary(cfg, providers, sampled, order, by_id, files, manifest, image_params)
    else:
        _run_full(
            cfg,
            providers,
            sampled,
            order,
            by_id,
            files,
            manifest,
            image_params,
            summary_template,
            instruction_template,
            timed,
            stop_after,
        )

    (run_dir / "manifest.json").write_text(
        json.dumps(manifest.to_dict(), indent=2), encoding="utf-8"
    )
    return manifest


def _run_full(
    cfg,
    providers,
    sampled,
    order,
    by_id,
    files: _StageFiles,
    manifest: RunManifest,
    image_params: ImageParams,
    summary_template,
    instruction_template,
    timed,
    stop_after: Optional[str] = None,
) -> None:
    run_dir = files.run_dir

    # stage: summarize
    summary_rows = files.existing("summaries.jsonl")
    todo = [p for p in sampled.poems if p.id not in summary_rows]

    def do_summarize(poem: Poem) -> dict:
        summary = summarizer.summarize(
            poem,
            summary_template,
            providers.chat,
            include_title=cfg.include_title,
            seed=cfg.seed,
        )
        return asdict(summary)

    summary_rows.update(timed("summarize", todo, do_summarize))
    manifest.counts["summaries"] = files.write("summaries.jsonl", order, summary_rows)
    if stop_after == "summarize":
        return

    # stage: poekey
    themes = poekey.load_theme_registry(cfg.themes_path, providers.embedder, cache=False)
    emotions = poekey.load_emotion_registry(cfg.emotions_path, providers.embedder, cache=False)
    lexicon = poekey.load_lexicon(cfg.lexicon_path)
    element_rows = files.existing("keyelements.jsonl")
    todo = [by_id[pid] for pid in order if pid in summary_rows and pid not in element_rows]

    def do_poekey(poem: Poem) -> dict:
        row = summary_rows[poem.id]
        summary = summarizer.Summary(**row)
        elements = poekey.poekey(
            summary, themes, emotions, providers.embedder, providers.chat, lexicon=lexicon
        )
        record = asdict(elements)
        record["visual_elements"] = list(elements.visual_elements)
        record["warnings"] = list(elements.warnings)
        return record

    element_rows.update(timed("poekey", todo, do_poekey))
    manifest.counts["key_elements"] = files.write("keyelements.jsonl", order, element_rows)
    if stop_after == "poekey":
        return

    # stage: instruct
    instruction_rows = files.existing("instructions.jsonl")
    todo = [by_id[pid] for pid in order if pid in element_rows and pid not in instruction_rows]

    def do_instruct(poem: Poem) -> dict:
        row = dict(element_rows[poem.id])
        elements = poekey.KeyElements(
            poem_id=row["poem_id"],
            emotion=row["emotion"],
            visual_elements=tuple(row["visual_elements"]),
            theme=row["theme"],
            theme_similarity=row["theme_similarity"],
            methods=poekey.ExtractionMethods(**row["methods"]),
            warnings=tuple(row["warnings"]),
        )
        record = generate_instruction(
            elements, instruction_template, providers.chat, seed=cfg.seed
        )
        return asdict(record)

    instruction_rows.update(timed("instruct", todo, do_instruct))
    manifest.counts["instructions"] = files.write("instructions.jsonl", order, instruction_rows)
    if stop_after == "instruct":
        return

    # stage: generate
    generation_rows = files.existing("generations.jsonl")
    generation_rows = {
        pid: row
        for pid, row in generation_rows.items()
        if row.get("image_path") and (run_dir / row["image_path"]).exists()
    }
    todo = [by_id[pid] for pid in order if pid in instruction_rows and pid not in generation_rows]

    def do_generate(poem: Poem) -> dict:
        record = InstructionRecord(**instruction_rows[poem.id])
        result = generate_image_for_poem(record, providers.image, image_params)
        if result.error is not None:
            raise ValidationError(result.error)
        image_path = f"images/{poem.id}.png"
        (run_dir / image_path).write_bytes(result.image.data)
        return {
            "poem_id": poem.id,
            "template_id": result.template_id,
            "provider_tag": result.image.provider_tag,
            "width": result.image.width,
            "height": result.image.height,
            "seed": result.seed,
            "image_path": image_path,
            "error": None,
        }

    generation_rows.update(timed("generate", todo, do_generate))
    manifest.counts["images"] = files.write("generations.jsonl", order, generation_rows)
    if stop_after == "generate":
        return

    # stage: score
    score_rows = files.existing("scores.jsonl")
    todo = [by_id[pid] for pid in order if pid in generation_rows and pid not in score_rows]

    def do_score(poem: Poem) -> dict:
        generation = generation_rows[poem.id]
        data = (run_dir / generation["image_path"]).read_bytes()
        artifact = ImageArtifact(
            data=data,
            width=generation["width"],
            height=generation["height"],
            provider_tag=generation["provider_tag"],
            instruction_text=instruction_rows[poem.id]["instruction_text"],
            seed=generation["seed"],
        )
        caption = _caption_for(cfg.caption_source, poem, summary_rows, instruction_rows)
        score = providers.scorer.score(artifact, caption)
        return {
            "poem_id": poem.id,
            "itm": score.itm,
            "itc": score.itc,
            "caption_source": cfg.caption_source,
        }

    score_rows.update(timed("score", todo, do_score))
    manifest.counts["scores"] = files.write("scores.jsonl", order, score_rows)


def _run_no_summary(
    cfg, providers, sampled, order, by_id, files, manifest, image_params
) -> None:
    """Ablation: the poem text is fed to the image provider verbatim."""
    run_dir = files.run_dir
    generation_rows = files.existing("generations.jsonl")
    todo = [p for p in sampled.poems if p.id not in generation_rows]

    def do_generate(poem: Poem) -> dict:
        artifact = providers.image.generate(poem.text, image_params)
        image_path = f"images/{poem.id}.png"
        (run_dir / image_path).write_bytes(artifact.data)
        return {
            "poem_id": poem.id,
            "template_id": None,
            "provider_tag": artifact.provider_tag,
            "width": artifact.width,
            "height": artifact.height,
            "seed": image_params.seed,
            "image_path": image_path,
            "error": None,
        }

    start = time.perf_counter()
    fresh, failures = _run_stage("generate", todo, do_generate, cfg.workers)
    manifest.wall_time["generate"] = round(time.perf_counter() - start, 6)
    manifest.failures.extend(failures)
    generation_rows.update(fresh)
    manifest.counts["images"] = files.write("generations.jsonl", order, generation_rows)

    score_rows = files.existing("scores.jsonl")
    todo = [by_id[pid] for pid in order if pid in generation_rows and pid not in score_rows]

    def do_score(poem: Poem) -> dict:
        generation = generation_rows[poem.id]
        data = (run_dir / generation["image_path"]).read_bytes()
        artifact = ImageArtifact(
            data=data,
            width=generation["width"],
            height=generation["height"],
            provider_tag=generation["provider_tag"],
            instruction_text=poem.text,
            seed=generation["seed"],
        )
        score = providers.scorer.score(artifact, poem.text)
        return {"poem_id": poem.id, "itm": score.itm, "itc": score.itc, "caption_source": "poem"}

    start = time.perf_counter()
    fresh, failures = _run_stage("score", todo, do_score, cfg.workers)
    manifest.wall_time["score"] = round(time.perf_counter() - start, 6)
    manifest.failures.extend(failures)
    score_rows.update(fresh)
    manifest.counts["scores"] = files.write("scores.jsonl", order, score_rows)


def _caption_for(source: str, poem: Poem, summary_rows: dict, instruction_rows: dict) -> str:
    if source == "instruction":
        return instruction_rows[poem.id]["instruction_text"]
    if source == "summary":
        return summary_rows[poem.id]["text"]
    return poem.text


# ---------------------------------------------------------------------------
# evaluation reports


_TEXT_COLUMNS = ("rouge1", "rouge2", "rougeL", "bleu1", "bleu2", "bleu3", "bleu4", "meteor")


def _text_row(poem_id: str, candidate: str, reference: str) -> dict:
    cand = tokenize(candidate)
    ref = tokenize(reference)
    row = {
        "poem_id": poem_id,
        "rouge1": rouge_n(cand, ref, 1).f1,
        "rouge2": rouge_n(cand, ref, 2).f1,
        "rougeL": rouge_l(cand, ref).f1,
    }
    for n in (1, 2, 3, 4):
        row[f"bleu{n}"] = bleu(cand, [ref], max_n=n).score
    row["meteor"] = meteor(cand, ref)
    return row


def _mean_row(rows: list[dict], columns: Sequence[str]) -> dict:
    out = {"poem_id": "MEAN"}
    for column in columns:
        out[column] = sum(r[column] for r in rows) / len(rows)
    return out


def _markdown_table(rows: list[dict], columns: Sequence[str]) -> str:
    header = "| poem_id | " + " | ".join(columns) + " |"
    rule = "|" + "---|" * (len(columns) + 1)
    lines = [header, rule]
    for row in rows:
        cells = " | ".join(f"{row[c]:.4f}" for c in columns)
        lines.append(f"| {row['poem_id']} | {cells} |")
    return "\n".join(lines) + "\n"


def evaluate_run(
    run_dir: str | Path,
    modes: Sequence[str] = ("text", "image"),
    scorer=None,
) -> dict:
    """Produce per-poem and mean metric reports for a finished run.

    Text mode needs reference summaries; image mode reuses the run's
    scores.jsonl when present, otherwise scores images with ``scorer``.
    Returns {"text": {...}, "image": {...}} with rows, means, and paths.
    """
    run_dir = Path(run_dir)
    if not (run_dir / "poems.jsonl").exists():
        raise ValidationError(f"not a run directory (no poems.jsonl): {run_dir}")
    reports_dir = run_dir / "reports"
    reports_dir.mkdir(exist_ok=True)
    poems = {row["id"]: row for row in _read_jsonl(run_dir / "poems.jsonl")}
    results: dict = {}

    if "text" in modes:
        if not (run_dir / "summaries.jsonl").exists():
            raise ValidationError("text evaluation needs summaries.jsonl")
        summaries = {r["poem_id"]: r for r in _read_jsonl(run_dir / "summaries.jsonl")}
        missing = [pid for pid in summaries if poems.get(pid, {}).get("reference_summary") is None]
        if missing:
            raise ValidationError(f"poems lack reference summaries: {sorted(missing)}")
        rows = [
            _text_row(pid, summaries[pid]["text"], poems[pid]["reference_summary"])
            for pid in poems
            if pid in summaries
        ]
        if not rows:
            raise ValidationError("no summaries to evaluate")
        mean = _mean_row(rows, _TEXT_COLUMNS)
        table = rows + [mean]
        _write_jsonl(reports_dir / "report_text.jsonl", table)
        (reports_dir / "table_text.md").write_text(
            _markdown_table(table, _TEXT_COLUMNS), encoding="utf-8"
        )
        results["text"] = {
            "rows": rows,
            "mean": mean,
            "jsonl": str(reports_dir / "report_text.jsonl"),
            "markdown": str(reports_dir / "table_text.md"),
        }

    if "image" in modes:
        scores_path = run_dir / "scores.jsonl"
        if scores_path.exists():
            rows = [
                {"poem_id": r["poem_id"], "itm": r["itm"], "itc": r["itc"]}
                for r in _read_jsonl(scores_path)
            ]
        else:
            rows = _score_images(run_dir, poems, scorer)
        if not rows:
            raise ValidationError("no images to evaluate")
        mean = _mean_row(rows, ("itm", "itc"))
        table = rows + [mean]
        _write_jsonl(reports_dir / "report_image.jsonl", table)
        (reports_dir / "table_image.md").write_text(
            _markdown_table(table, ("itm", "itc")), encoding="utf-8"
        )
        results["image"] = {
            "rows": rows,
            "mean": mean,
            "jsonl": str(reports_dir / "report_image.jsonl"),
            "markdown": str(reports_dir / "table_image.md"),
        }
    return results


def _score_images(run_dir: Path, poems: dict, scorer) -> list[dict]:
    if scorer is None:
        raise ValidationError("image evaluation needs scores.jsonl or a scoring provider")
    generations_path = run_dir / "generations.jsonl"
    if not generations_path.exists():
        raise ValidationError("image evaluation needs generations.jsonl")
    instructions = {}
    if (run_dir / "instructions.jsonl").exists():
        instructions = {
            r["poem_id"]: r for r in _read_jsonl(run_dir / "instructions.jsonl")
        }
    rows = []
    missing = []
    for generation in _read_jsonl(generations_path):
        pid = generation["poem_id"]
        path = run_dir / (generation.get("image_path") or "")
        if not generation.get("image_path") or not path.exists():
            missing.append(pid)
            continue
        data = path.read_bytes()
        info = read_png(data)
        caption = (
            instructions.get(pid, {}).get("instruction_text")
            or info.text.get("instruction")
            or poems.get(pid, {}).get("poem", "")
        )
        artifact = ImageArtifact(
            data=data,
            width=info.width,
            height=info.height,
            provider_tag=generation.get("provider_tag", ""),
            instruction_text=info.text.get("instruction", caption),
            seed=generation.get("seed"),
        )
        score = scorer.score(artifact, caption)
        rows.append({"poem_id": pid, "itm": score.itm, "itc": score.itc})
    if missing:
        raise ValidationError(f"poems lack generated images: {sorted(missing)}")
    return rows


# ---------------------------------------------------------------------------
# artifact comparison helper (used by tests and `run --verify`)


def jsonl_records_without_timestamps(path: str | Path) -> list[dict]:
    rows = _read_jsonl(Path(path))
    for row in rows:
        for fieldname in _TIMESTAMP_FIELDS:
            row.pop(fieldname, None)
    return rows

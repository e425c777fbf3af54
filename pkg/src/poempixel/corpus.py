"""Poem dataset loading, validation, statistics, and serialization.

Interchange formats: JSONL records ``{"id", "title", "poem",
"reference_summary"?, "image_path"?}`` (canonical) and CSV with header
``id,title,poem[,reference_summary][,image_path]``. All files UTF-8.

Word counting everywhere in the package uses :func:`count_words`: split on
Unicode whitespace, count non-empty segments. Poem text keeps its original
line breaks; only the metrics tokenizer normalizes.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Optional

from .errors import FormatError, ValidationError

SOURCES = ("poemsum", "minipo", "custom")
FORMATS = ("jsonl", "csv")

_REQUIRED_FIELDS = ("id", "title", "poem")
_OPTIONAL_FIELDS = ("reference_summary", "image_path")


@dataclass(frozen=True)
class Poem:
    id: str
    title: str
    text: str
    source: str = "custom"
    reference_summary: Optional[str] = None
    image_path: Optional[str] = None


@dataclass(frozen=True)
class Dataset:
    name: str
    poems: tuple[Poem, ...]

    def __len__(self) -> int:
        return len(self.poems)

    def __iter__(self):
        return iter(self.poems)

    def by_id(self, poem_id: str) -> Poem:
        for poem in self.poems:
            if poem.id == poem_id:
                return poem
        raise KeyError(poem_id)


@dataclass(frozen=True)
class DatasetStats:
    poem_count: int
    max_poem_words: int
    avg_poem_words: float
    max_summary_words: Optional[int] = None
    avg_summary_words: Optional[float] = None


@dataclass(frozen=True)
class Finding:
    """One validation finding; ``level`` is "error" or "warning"."""

    poem_id: str
    rule: str
    message: str
    level: str = "error"


def count_words(text: str) -> int:
    """Number of non-empty whitespace-separated segments."""
    return len(text.split())


def _normalize_optional(value) -> Optional[str]:
    if value is None:
        return None
    value = str(value)
    return value if value.strip() else None


def _poem_from_record(record: dict, source: str, where: str) -> Poem:
    missing = [f for f in _REQUIRED_FIELDS if f not in record or record[f] is None]
    if missing:
        raise ValidationError(f"{where}: missing required field(s): {', '.join(missing)}")
    return Poem(
        id=str(record["id"]),
        title=str(record["title"]),
        text=str(record["poem"]),
        source=source,
        reference_summary=_normalize_optional(record.get("reference_summary")),
        image_path=_normalize_optional(record.get("image_path")),
    )


def _iter_jsonl(path: Path) -> Iterable[tuple[int, dict]]:
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
            if not isinstance(record, dict):
                raise FormatError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, record


def _iter_csv(path: Path) -> Iterable[tuple[int, dict]]:
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [f for f in _REQUIRED_FIELDS if f not in header]
        if missing:
            raise FormatError(f"{path}: CSV header missing column(s): {', '.join(missing)}")
        for lineno, row in enumerate(reader, start=2):
            yield lineno, {k: v for k, v in row.items() if k is not None}


def load_dataset(
    path: str | Path,
    format: Optional[str] = None,
    *,
    source: str = "custom",
    name: Optional[str] = None,
) -> Dataset:
    """Load a poem dataset, preserving file order.

    ``format`` is inferred from the suffix when omitted. Duplicate ids and
    missing required fields raise; softer invariants are left to
    :func:`validate_dataset`.
    """
    path = Path(path)
    if not path.exists():
        raise FormatError(f"dataset file not found: {path}")
    if source not in SOURCES:
        raise ValidationError(f"unknown source {source!r}; expected one of {SOURCES}")
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    if format not in FORMATS:
        raise ValidationError(f"unknown format {format!r}; expected one of {FORMATS}")

    records = _iter_csv(path) if format == "csv" else _iter_jsonl(path)
    poems: list[Poem] = []
    seen: set[str] = set()
    for lineno, record in records:
        poem = _poem_from_record(record, source, f"{path}:{lineno}")
        if poem.id in seen:
            raise ValidationError(f"{path}:{lineno}: duplicate poem id {poem.id!r}")
        seen.add(poem.id)
        poems.append(poem)
    return Dataset(name=name or path.stem, poems=tuple(poems))


def poem_to_record(poem: Poem) -> dict:
    record = {"id": poem.id, "title": poem.title, "poem": poem.text}
    if poem.reference_summary is not None:
        record["reference_summary"] = poem.reference_summary
    if poem.image_path is not None:
        record["image_path"] = poem.image_path
    return record


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write the dataset as canonical JSONL; round-trips through load_dataset."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for poem in dataset.poems:
            fh.write(json.dumps(poem_to_record(poem), ensure_ascii=False) + "\n")


def dataset_stats(dataset: Dataset) -> DatasetStats:
    if not dataset.poems:
        raise ValidationError("empty dataset: statistics undefined")
    poem_counts = [count_words(p.text) for p in dataset.poems]
    summary_counts = [
        count_words(p.reference_summary) for p in dataset.poems if p.reference_summary is not None
    ]
    stats = DatasetStats(
        poem_count=len(dataset.poems),
        max_poem_words=max(poem_counts),
        avg_poem_words=sum(poem_counts) / len(poem_counts),
    )
    if summary_counts:
        stats = replace(
            stats,
            max_summary_words=max(summary_counts),
            avg_summary_words=sum(summary_counts) / len(summary_counts),
        )
    return stats


def format_stats(stats: DatasetStats, name: str = "") -> str:
    """Human-readable statistics block; averages shown to 2 decimals."""
    lines = []
    if name:
        lines.append(f"Dataset: {name}")
    lines.append(f"Number of poems:            {stats.poem_count}")
    lines.append(f"Max poem length (words):    {stats.max_poem_words}")
    lines.append(f"Avg poem length (words):    {stats.avg_poem_words:.2f}")
    if stats.max_summary_words is not None:
        lines.append(f"Max summary length (words): {stats.max_summary_words}")
        lines.append(f"Avg summary length (words): {stats.avg_summary_words:.2f}")
    return "\n".join(lines)


def validate_dataset(dataset: Dataset) -> list[Finding]:
    """Check every Poem and Dataset invariant; returns findings, never raises."""
    findings: list[Finding] = []
    seen: set[str] = set()
    for poem in dataset.poems:
        if not poem.id:
            findings.append(Finding(poem.id, "empty-id", "poem id is empty"))
        if poem.id in seen:
            findings.append(Finding(poem.id, "duplicate-id", f"duplicate poem id {poem.id!r}"))
        seen.add(poem.id)
        if not poem.text.strip():
            findings.append(Finding(poem.id, "empty-text", "empty text"))
        if poem.source not in SOURCES:
            findings.append(Finding(poem.id, "bad-source", f"unknown source {poem.source!r}"))
        if poem.source == "poemsum" and poem.reference_summary is None:
            findings.append(
                Finding(
                    poem.id,
                    "missing-reference-summary",
                    "poemsum record lacks a reference summary",
                    level="warning",
                )
            )
    return findings

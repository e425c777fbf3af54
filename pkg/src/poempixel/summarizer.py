"""Prompt template registry and the summarization stage.

The bundled registry ships seven summarization templates (R1-R7) and six
instruction templates (I1-I6). Templates carry exactly one placeholder:
``{{poem}}`` for summarization, ``{{context}}`` for instruction kinds;
rendering is verbatim substitution, nothing else is altered.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Optional

from .corpus import Poem
from .errors import EmptyResponseError, RegistryError, TemplateKindError
from .providers.base import ChatRequest

KINDS = ("summarization", "instruction")
PLACEHOLDERS = {"summarization": "{{poem}}", "instruction": "{{context}}"}

DEFAULT_SUMMARY_TEMPLATE = "R6"
DEFAULT_INSTRUCTION_TEMPLATE = "I5"


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    kind: str
    text: str
    round_index: int


@dataclass(frozen=True)
class Summary:
    poem_id: str
    text: str
    template_id: str
    model_tag: str
    created_at: str


def default_registry_path() -> Path:
    return Path(str(resources.files("poempixel.data") / "prompt_registry.json"))


def registry_load(path: Optional[str | Path] = None) -> list[PromptTemplate]:
    """Load and validate prompt templates; defaults to the bundled registry."""
    path = Path(path) if path is not None else default_registry_path()
    if not path.exists():
        raise RegistryError(f"prompt registry not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise RegistryError(f"prompt registry is not valid JSON: {path}: {exc.msg}") from exc
    if not isinstance(raw, list):
        raise RegistryError(f"prompt registry must be a JSON list: {path}")

    templates: list[PromptTemplate] = []
    seen: set[str] = set()
    for entry in raw:
        tid = str(entry.get("id", ""))
        kind = entry.get("kind")
        text = entry.get("text", "")
        round_index = entry.get("round_index")
        if not tid:
            raise RegistryError("registry entry with missing id")
        if tid in seen:
            raise RegistryError(f"duplicate template id {tid!r}")
        seen.add(tid)
        if kind not in KINDS:
            raise RegistryError(f"template {tid!r}: unknown kind {kind!r}")
        placeholder = PLACEHOLDERS[kind]
        if text.count(placeholder) != 1:
            raise RegistryError(
                f"template {tid!r}: expected exactly one {placeholder} placeholder"
            )
        if not isinstance(round_index, int) or round_index < 1:
            raise RegistryError(f"template {tid!r}: round_index must be an integer >= 1")
        templates.append(PromptTemplate(id=tid, kind=kind, text=text, round_index=round_index))
    return templates


def registry_get(templates: list[PromptTemplate], template_id: str) -> PromptTemplate:
    for template in templates:
        if template.id == template_id:
            return template
    raise RegistryError(f"template {template_id!r} not found in registry")


def render_prompt(template: PromptTemplate, poem: Poem, *, include_title: bool = False) -> str:
    """Substitute the poem text (optionally preceded by its title) verbatim."""
    if template.kind != "summarization":
        raise TemplateKindError(
            f"template {template.id!r} has kind {template.kind!r}, expected summarization"
        )
    body = f"{poem.title}\n{poem.text}" if include_title else poem.text
    return template.text.replace(PLACEHOLDERS["summarization"], body)


def summarize(
    poem: Poem,
    template: PromptTemplate,
    chat,
    *,
    include_title: bool = False,
    temperature: float = 0.0,
    seed: Optional[int] = 0,
    max_output_tokens: int = 512,
) -> Summary:
    """Run one summarization call; empty completions are rejected."""
    prompt = render_prompt(template, poem, include_title=include_title)
    request = ChatRequest(
        user_prompt=prompt,
        temperature=temperature,
        max_output_tokens=max_output_tokens,
        seed=seed,
    )
    text = chat.complete(request)
    if not text or not text.strip():
        raise EmptyResponseError(f"empty summary for poem {poem.id!r}")
    return Summary(
        poem_id=poem.id,
        text=text,
        template_id=template.id,
        model_tag=getattr(chat, "model_tag", "unknown"),
        created_at=datetime.now(timezone.utc).isoformat(),
    )

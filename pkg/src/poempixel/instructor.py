"""Instruction generation and image generation for one poem.

The instruction prompt context is the key-elements block only (not the
full summary):

    Emotion: <emotion>
    Theme: <theme>
    Visual elements: <comma-joined list or "(none)">

A completion over the 50-word limit triggers one corrective re-prompt;
still-long results are kept verbatim and flagged, never truncated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .corpus import count_words
from .errors import GenerationError, ProviderError, TemplateKindError, ValidationError
from .poekey import KeyElements
from .providers.base import ChatRequest, ImageArtifact, ImageParams
from .summarizer import PLACEHOLDERS, PromptTemplate

WORD_LIMIT = 50
_SHORTEN = "Shorten to under 50 words."


@dataclass(frozen=True)
class InstructionRecord:
    poem_id: str
    template_id: str
    context_block: str
    instruction_text: str
    word_count: int
    retry_count: int = 0
    over_length: bool = False


@dataclass(frozen=True)
class GenerationRecord:
    poem_id: str
    template_id: str
    image: Optional[ImageArtifact] = None
    seed: Optional[int] = None
    error: Optional[str] = None


def context_block(elements: KeyElements) -> str:
    visuals = ", ".join(elements.visual_elements) if elements.visual_elements else "(none)"
    return f"Emotion: {elements.emotion}\nTheme: {elements.theme}\nVisual elements: {visuals}"


def build_instruction_prompt(elements: KeyElements, template: PromptTemplate) -> str:
    if template.kind != "instruction":
        raise TemplateKindError(
            f"template {template.id!r} has kind {template.kind!r}, expected instruction"
        )
    return template.text.replace(PLACEHOLDERS["instruction"], context_block(elements))


def generate_instruction(
    elements: KeyElements,
    template: PromptTemplate,
    chat,
    *,
    word_limit: int = WORD_LIMIT,
    seed: Optional[int] = 0,
) -> InstructionRecord:
    prompt = build_instruction_prompt(elements, template)
    text = chat.complete(ChatRequest(user_prompt=prompt, seed=seed))
    if not text or not text.strip():
        raise ValidationError(f"empty instruction for poem {elements.poem_id!r}")
    retries = 0
    if count_words(text) > word_limit:
        retries = 1
        text = chat.complete(ChatRequest(user_prompt=f"{prompt}\n{_SHORTEN}", seed=seed))
        if not text or not text.strip():
            raise ValidationError(f"empty instruction for poem {elements.poem_id!r}")
    words = count_words(text)
    return InstructionRecord(
        poem_id=elements.poem_id,
        template_id=template.id,
        context_block=context_block(elements),
        instruction_text=text,
        word_count=words,
        retry_count=retries,
        over_length=words > word_limit,
    )


def generate_image_for_poem(
    record: InstructionRecord, image_provider, params: ImageParams
) -> GenerationRecord:
    """One image per poem per run; a provider failure yields a failed record
    so the surrounding batch continues."""
    try:
        artifact = image_provider.generate(record.instruction_text, params)
    except (GenerationError, ProviderError) as exc:
        return GenerationRecord(
            poem_id=record.poem_id,
            template_id=record.template_id,
            seed=params.seed,
            error=str(exc),
        )
    return GenerationRecord(
        poem_id=record.poem_id,
        template_id=record.template_id,
        image=artifact,
        seed=params.seed,
    )

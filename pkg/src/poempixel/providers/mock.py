"""Deterministic offline providers.

Every mock is a pure function of its inputs and the configured seed:
repeated calls return byte-identical results, which is what makes full
pipeline runs reproducible and CI-safe. Each docstring documents the exact
algorithm because tests verify it by hand-executing the rule.
"""

from __future__ import annotations

import hashlib
import json
import random
from collections import Counter
from typing import Sequence

from ..errors import ValidationError
from ..pngio import encode_rgb_png, read_png
from ..textmetrics import tokenize
from .base import AlignmentScore, ChatRequest, EmbeddingVector, ImageArtifact, ImageParams


def _digest(*parts: str) -> str:
    return hashlib.sha256("\x00".join(parts).encode("utf-8")).hexdigest()


class MockChatProvider:
    """Canned completions keyed off the prompt.

    Algorithm: let ``head`` be the first 30 whitespace tokens of the user
    prompt joined by single spaces, and ``tag`` the first 8 hex chars of
    sha256(seed NUL system NUL prompt NUL request-seed). Then:

    - prompt contains "summarize" (case-insensitive) -> ``"SUMMARY: " + head``
    - prompt contains "prompt" or "image"            -> ``"INSTRUCTION[tag]: " + head``
    - otherwise                                      -> ``"REPLY[tag]: " + head``
    """

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.model_tag = "mock-chat"

    def complete(self, request: ChatRequest) -> str:
        head = " ".join(request.user_prompt.split()[:30])
        tag = _digest(
            str(self.seed),
            request.system_context or "",
            request.user_prompt,
            str(request.seed),
        )[:8]
        lowered = request.user_prompt.lower()
        if "summarize" in lowered:
            return f"SUMMARY: {head}"
        if "prompt" in lowered or "image" in lowered:
            return f"INSTRUCTION[{tag}]: {head}"
        return f"REPLY[{tag}]: {head}"


class ScriptedChatProvider:
    """Replays a fixed list of responses; raises once exhausted.

    For tests that need staged outputs (retry paths, malformed JSON)."""

    def __init__(self, responses: Sequence[str]):
        self._responses = list(responses)
        self._next = 0
        self.model_tag = "scripted-chat"
        self.requests: list[ChatRequest] = []

    def complete(self, request: ChatRequest) -> str:
        self.requests.append(request)
        if self._next >= len(self._responses):
            raise ValidationError("scripted chat provider exhausted")
        response = self._responses[self._next]
        self._next += 1
        return response


class MockEmbeddingProvider:
    """Hash-seeded unit vectors.

    Algorithm, per text: start from the zero vector; for each whitespace
    token, seed a PRNG with sha256(seed "|" lowercased-token), draw
    ``dimension`` gaussians, normalize that draw to unit length, and add it
    in; finally normalize the sum to unit length. A text whose token
    contributions cancel exactly (or that has no tokens) falls back to a
    single draw seeded from the whole text.
    """

    def __init__(self, dimension: int = 32, seed: int = 0):
        if dimension <= 0:
            raise ValidationError("dimension must be > 0")
        self.dimension = dimension
        self.seed = seed
        self.model_tag = f"mock-embed-{dimension}-s{seed}"

    def _draw(self, key: str) -> list[float]:
        rng = random.Random(int(_digest(str(self.seed), key)[:16], 16))
        vector = [rng.gauss(0.0, 1.0) for _ in range(self.dimension)]
        norm = sum(v * v for v in vector) ** 0.5
        return [v / norm for v in vector]

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        if not texts:
            raise ValidationError("embed requires at least one text")
        out = []
        for text in texts:
            if not text:
                raise ValidationError("cannot embed an empty text")
            acc = [0.0] * self.dimension
            for token in text.split():
                for i, v in enumerate(self._draw("|" + token.lower())):
                    acc[i] += v
            norm = sum(v * v for v in acc) ** 0.5
            if norm == 0.0:
                acc = self._draw("||" + text)
                norm = 1.0
            out.append(
                EmbeddingVector(
                    values=tuple(v / norm for v in acc),
                    dimension=self.dimension,
                    model_tag=self.model_tag,
                )
            )
        return out


class MockImageProvider:
    """Solid-color PNGs.

    The fill color is the first three bytes of sha256(instruction); the
    instruction (and seed, when given) are embedded as iTXt chunks, which
    is what the mock scorer reads back.
    """

    def __init__(self):
        self.provider_tag = "mock-image"

    def generate(self, instruction: str, params: ImageParams) -> ImageArtifact:
        if not instruction:
            raise ValidationError("instruction must be non-empty")
        color = hashlib.sha256(instruction.encode("utf-8")).digest()[:3]
        text = {"instruction": instruction}
        if params.seed is not None:
            text["seed"] = str(params.seed)
        data = encode_rgb_png(params.width, params.height, tuple(color), text=text)
        return ImageArtifact(
            data=data,
            width=params.width,
            height=params.height,
            provider_tag=self.provider_tag,
            instruction_text=instruction,
            seed=params.seed,
        )


class MockScoringProvider:
    """Token-overlap alignment against the instruction stored in the PNG.

    score = |multiset intersection of tokenized text and tokenized
    instruction| / max(len(text tokens), len(instruction tokens)), in
    [0, 1], reported as both itm and itc. Falls back to the artifact's
    instruction_text when the PNG carries no instruction chunk.
    """

    def __init__(self):
        self.provider_tag = "mock-scorer"

    def score(self, image: ImageArtifact, text: str) -> AlignmentScore:
        if not text:
            raise ValidationError("text must be non-empty")
        info = read_png(image.data)
        instruction = info.text.get("instruction", image.instruction_text)
        text_tokens = tokenize(text).tokens
        instr_tokens = tokenize(instruction).tokens
        if not text_tokens or not instr_tokens:
            return AlignmentScore(0.0, 0.0)
        overlap = sum((Counter(text_tokens) & Counter(instr_tokens)).values())
        value = overlap / max(len(text_tokens), len(instr_tokens))
        return AlignmentScore(value, value)


def scripted_json_array(items: Sequence[str]) -> str:
    """Convenience for tests: a chat response carrying a JSON array."""
    return json.dumps(list(items))

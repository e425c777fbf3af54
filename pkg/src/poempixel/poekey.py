"""Key-element extraction: dominant emotion, visual elements, and theme
from a poem summary.

Theme and (by default) emotion are nearest-centroid classifications: each
registry entry embeds "name: description" once at load time, the summary
text is embedded, and the entry with the highest cosine similarity wins,
ties broken by registry order. Visual elements come either from a chat
provider (JSON-array extraction) or an offline rule: capitalized
mid-sentence tokens, a bundled concrete-noun lexicon, and a closed pronoun
list.
"""

from __future__ import annotations

import hashlib
import json
import re
import unicodedata
from dataclasses import dataclass
from importlib import resources
from math import sqrt
from pathlib import Path
from typing import Optional, Sequence

from .errors import RegistryError, ValidationError
from .providers.base import ChatRequest, EmbeddingVector
from .summarizer import Summary

EXTRACTION_METHODS = ("embedding_centroid", "chat_extraction", "rule_based")
FALLBACK_EMOTION = "neutral"

PRONOUNS = frozenset(
    ["i", "you", "he", "she", "it", "we", "they", "me", "him", "her", "us", "them"]
)

_TERMINAL = (".", "!", "?")


@dataclass(frozen=True)
class ThemeEntry:
    name: str
    description: str
    centroid: EmbeddingVector


@dataclass(frozen=True)
class EmotionEntry:
    name: str
    description: str
    centroid: EmbeddingVector


@dataclass(frozen=True)
class ExtractionMethods:
    emotion: str
    visual_elements: str
    theme: str


@dataclass(frozen=True)
class KeyElements:
    poem_id: str
    emotion: str
    visual_elements: tuple[str, ...]
    theme: str
    theme_similarity: float
    methods: ExtractionMethods
    warnings: tuple[str, ...] = ()


def cosine_similarity(u: EmbeddingVector, v: EmbeddingVector) -> float:
    """dot(u,v)/(|u||v|), clamped to [-1, 1] against rounding drift."""
    if u.dimension != v.dimension:
        raise ValidationError(
            f"dimension mismatch: {u.dimension} vs {v.dimension}"
        )
    dot = sum(a * b for a, b in zip(u.values, v.values))
    nu = sqrt(sum(a * a for a in u.values))
    nv = sqrt(sum(b * b for b in v.values))
    if nu == 0.0 or nv == 0.0:
        raise ValidationError("cosine similarity undefined for a zero vector")
    return max(-1.0, min(1.0, dot / (nu * nv)))


def default_registry_path(kind: str) -> Path:
    name = {"theme": "themes.json", "emotion": "emotions.json"}[kind]
    return Path(str(resources.files("poempixel.data") / name))


def default_lexicon_path() -> Path:
    return Path(str(resources.files("poempixel.data") / "concrete_nouns.txt"))


def _registry_fingerprint(entries: list[dict], model_tag: str) -> str:
    payload = json.dumps(entries, sort_keys=True) + "\x00" + model_tag
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _load_entries(path: Path) -> list[dict]:
    if not path.exists():
        raise RegistryError(f"registry not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise RegistryError(f"registry is not valid JSON: {path}: {exc.msg}") from exc
    if not isinstance(raw, list) or not raw:
        raise RegistryError(f"registry must be a non-empty JSON list: {path}")
    names = set()
    for entry in raw:
        name = entry.get("name")
        description = entry.get("description")
        if not name or not isinstance(name, str):
            raise RegistryError(f"{path}: registry entry without a name")
        if name in names:
            raise RegistryError(f"{path}: duplicate registry name {name!r}")
        names.add(name)
        if not description or not isinstance(description, str):
            raise RegistryError(f"{path}: entry {name!r} needs a non-empty description")
    return raw


def _centroid_cache_path(path: Path, model_tag: str) -> Path:
    safe = re.sub(r"[^A-Za-z0-9._-]", "_", model_tag)
    return path.with_name(f"{path.stem}.centroids-{safe}.json")


def _load_registry(path: Path, embedder, cache: bool) -> list[tuple[str, str, EmbeddingVector]]:
    entries = _load_entries(path)
    model_tag = getattr(embedder, "model_tag", "unknown")
    fingerprint = _registry_fingerprint(entries, model_tag)
    cache_path = _centroid_cache_path(path, model_tag)

    vectors: Optional[list[EmbeddingVector]] = None
    if cache and cache_path.exists():
        try:
            cached = json.loads(cache_path.read_text(encoding="utf-8"))
            if cached.get("fingerprint") == fingerprint:
                vectors = [
                    EmbeddingVector(tuple(v), len(v), model_tag) for v in cached["vectors"]
                ]
        except (json.JSONDecodeError, KeyError, TypeError):
            vectors = None
    if vectors is None:
        texts = [f"{e['name']}: {e['description']}" for e in entries]
        vectors = embedder.embed(texts)
        if cache:
            try:
                cache_path.write_text(
                    json.dumps(
                        {"fingerprint": fingerprint, "model_tag": model_tag,
                         "vectors": [list(v.values) for v in vectors]}
                    ),
                    encoding="utf-8",
                )
            except OSError:
                pass  # read-only installs: caching is best-effort
    return [(e["name"], e["description"], v) for e, v in zip(entries, vectors)]


def load_theme_registry(
    path: Optional[str | Path] = None, embedder=None, *, cache: bool = True
) -> list[ThemeEntry]:
    path = Path(path) if path is not None else default_registry_path("theme")
    return [ThemeEntry(n, d, c) for n, d, c in _load_registry(path, embedder, cache)]


def load_emotion_registry(
    path: Optional[str | Path] = None, embedder=None, *, cache: bool = True
) -> list[EmotionEntry]:
    path = Path(path) if path is not None else default_registry_path("emotion")
    return [EmotionEntry(n, d, c) for n, d, c in _load_registry(path, embedder, cache)]


def load_lexicon(path: Optional[str | Path] = None) -> frozenset[str]:
    path = Path(path) if path is not None else default_lexicon_path()
    words = set()
    for line in path.read_text(encoding="utf-8").splitlines():
        word = line.strip().lower()
        if word and not word.startswith("#"):
            words.add(word)
    return frozenset(words)


def _nearest(vector: EmbeddingVector, entries: Sequence) -> tuple[str, float]:
    best_name, best_score = None, None
    for entry in entries:
        score = cosine_similarity(vector, entry.centroid)
        if best_score is None or score > best_score:
            best_name, best_score = entry.name, score
    return best_name, best_score


def extract_theme(
    summary: Summary, themes: Sequence[ThemeEntry], embedder
) -> tuple[str, float]:
    """Highest-cosine theme for the summary embedding; first entry wins ties."""
    if not themes:
        raise RegistryError("theme registry is empty")
    vector = embedder.embed([summary.text])[0]
    return _nearest(vector, themes)


def extract_emotion(
    summary: Summary,
    emotions: Sequence[EmotionEntry],
    embedder=None,
    chat=None,
    *,
    method: str = "embedding_centroid",
) -> tuple[str, str]:
    """Returns (emotion name, method actually used).

    chat_extraction asks the chat provider to pick one registry label; an
    off-registry answer is retried once, then falls back to "neutral" with
    rule_based provenance.
    """
    if not emotions:
        raise RegistryError("emotion registry is empty")
    names = [e.name for e in emotions]
    if method == "embedding_centroid":
        if embedder is None:
            raise ValidationError("embedding_centroid emotion extraction needs an embedder")
        vector = embedder.embed([summary.text])[0]
        name, _ = _nearest(vector, emotions)
        return name, "embedding_centroid"
    if method != "chat_extraction":
        raise ValidationError(f"unknown emotion extraction method {method!r}")
    if chat is None:
        raise ValidationError("chat_extraction emotion extraction needs a chat provider")

    by_lower = {n.lower(): n for n in names}
    prompt = (
        "Identify the single most dominant emotion of this poem summary. "
        f"Answer with exactly one word from this list: {', '.join(names)}.\n\n{summary.text}"
    )
    for attempt in range(2):
        answer = chat.complete(ChatRequest(user_prompt=prompt)).strip().strip(".").lower()
        if answer in by_lower:
            return by_lower[answer], "chat_extraction"
        prompt = (
            f"Your previous answer was not in the list. Choose one of: {', '.join(names)}. "
            f"Answer with the single word only.\n\n{summary.text}"
        )
    if FALLBACK_EMOTION not in by_lower:
        raise RegistryError(
            f"fallback emotion {FALLBACK_EMOTION!r} missing from registry"
        )
    return by_lower[FALLBACK_EMOTION], "rule_based"


def _strip_edge_punct(token: str) -> str:
    start, end = 0, len(token)
    while start < end and unicodedata.category(token[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(token[end - 1]).startswith("P"):
        end -= 1
    return token[start:end]


def _dedupe(elements: list[str]) -> list[str]:
    seen: set[str] = set()
    out: list[str] = []
    for element in elements:
        key = element.lower()
        if key not in seen:
            seen.add(key)
            out.append(element)
    return out


def _rule_based_visuals(text: str, lexicon: frozenset[str]) -> list[str]:
    picks: list[str] = []
    sentence_start = True
    for raw in text.split():
        token = _strip_edge_punct(raw)
        starts = sentence_start
        sentence_start = raw.rstrip().endswith(_TERMINAL)
        if not token:
            continue
        lower = token.lower()
        in_lexicon = lower in lexicon or (lower.endswith("s") and lower[:-1] in lexicon)
        is_proper = token[0].isupper() and not starts and token.isalpha() and len(token) > 1
        if in_lexicon or lower in PRONOUNS or is_proper:
            picks.append(token)
    return _dedupe(picks)


def _parse_json_array(text: str) -> Optional[list[str]]:
    candidates = [text.strip()]
    start, end = text.find("["), text.rfind("]")
    if start != -1 and end > start:
        candidates.append(text[start : end + 1])
    for candidate in candidates:
        try:
            parsed = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if isinstance(parsed, list) and all(isinstance(x, str) for x in parsed):
            return [x.strip() for x in parsed if x.strip()]
    return None


def extract_visual_elements(
    summary: Summary,
    *,
    method: str = "rule_based",
    chat=None,
    lexicon: Optional[frozenset[str]] = None,
) -> tuple[list[str], str]:
    """Returns (elements, method actually used); elements keep summary order
    and original casing, deduplicated case-insensitively."""
    if not summary.text.strip():
        raise ValidationError("summary text is empty")
    if method == "rule_based":
        return _rule_based_visuals(summary.text, lexicon or load_lexicon()), "rule_based"
    if method != "chat_extraction":
        raise ValidationError(f"unknown visual extraction method {method!r}")
    if chat is None:
        raise ValidationError("chat_extraction needs a chat provider")
    prompt = (
        "List the concrete nouns, pronouns, and named entities that appear in this poem "
        'summary as a JSON array of strings, e.g. ["parrot", "jungle"]. '
        f"Answer with the JSON array only.\n\n{summary.text}"
    )
    for attempt in range(2):
        parsed = _parse_json_array(chat.complete(ChatRequest(user_prompt=prompt)))
        if parsed is not None:
            return _dedupe(parsed), "chat_extraction"
        prompt = (
            "Your previous answer was not valid JSON. Reply with only a JSON array of "
            f"strings naming the concrete nouns, pronouns, and named entities.\n\n{summary.text}"
        )
    return _rule_based_visuals(summary.text, lexicon or load_lexicon()), "rule_based"


def poekey(
    summary: Summary,
    themes: Sequence[ThemeEntry],
    emotions: Sequence[EmotionEntry],
    embedder,
    chat=None,
    *,
    emotion_method: str = "embedding_centroid",
    visual_method: str = "rule_based",
    lexicon: Optional[frozenset[str]] = None,
) -> KeyElements:
    """Compose the three extractors into one KeyElements record.

    Empty visual elements never fail the extraction; they are flagged in
    ``warnings`` instead.
    """
    theme, similarity = extract_theme(summary, themes, embedder)
    emotion, emotion_used = extract_emotion(
        summary, emotions, embedder=embedder, chat=chat, method=emotion_method
    )
    visuals, visual_used = extract_visual_elements(
        summary, method=visual_method, chat=chat, lexicon=lexicon
    )
    warnings = () if visuals else ("no visual elements extracted",)
    return KeyElements(
        poem_id=summary.poem_id,
        emotion=emotion,
        visual_elements=tuple(visuals),
        theme=theme,
        theme_similarity=similarity,
        methods=ExtractionMethods(
            emotion=emotion_used, visual_elements=visual_used, theme="embedding_centroid"
        ),
        warnings=warnings,
    )

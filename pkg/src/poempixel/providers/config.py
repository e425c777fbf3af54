"""Provider configuration: TOML or JSON file -> provider bundle.

Example (TOML)::

    [chat]
    kind = "live"
    base_url = "https://api.example.com/v1"
    model = "gpt-4o-mini"
    credential_env = "POEMPIXEL_CHAT_KEY"
    timeout_s = 30
    concurrency = 4

Sections: chat, embedding, image, scorer. Every section defaults to the
mock when absent. Credentials are named by env var only, never stored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from ..errors import ValidationError
from .base import RateLimiter
from .live import LiveChatProvider, LiveEmbeddingProvider, LiveImageProvider, LiveScoringProvider
from .mock import MockChatProvider, MockEmbeddingProvider, MockImageProvider, MockScoringProvider

_DEFAULT_CRED_ENV = {
    "chat": "POEMPIXEL_CHAT_KEY",
    "embedding": "POEMPIXEL_CHAT_KEY",
    "image": "POEMPIXEL_IMAGE_KEY",
    "scorer": "POEMPIXEL_SCORER_KEY",
}


@dataclass(frozen=True)
class ProviderSettings:
    kind: str = "mock"
    base_url: str = ""
    model: str = ""
    credential_env: str = ""
    timeout_s: float = 30.0
    concurrency: int = 4
    rate_per_s: Optional[float] = None
    dimension: int = 32  # mock embeddings only


@dataclass(frozen=True)
class ProviderConfig:
    chat: ProviderSettings = field(default_factory=ProviderSettings)
    embedding: ProviderSettings = field(default_factory=ProviderSettings)
    image: ProviderSettings = field(default_factory=ProviderSettings)
    scorer: ProviderSettings = field(default_factory=ProviderSettings)


@dataclass
class Providers:
    chat: object
    embedder: object
    image: object
    scorer: object


def load_provider_config(path: str | Path) -> ProviderConfig:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"provider config not found: {path}")
    if path.suffix.lower() == ".toml":
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    else:
        raw = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ValidationError(f"provider config must be a table/object: {path}")
    sections = {}
    for section in ("chat", "embedding", "image", "scorer"):
        entry = raw.get(section, {})
        if not isinstance(entry, dict):
            raise ValidationError(f"provider config section {section!r} must be a table")
        unknown = set(entry) - {f.name for f in ProviderSettings.__dataclass_fields__.values()}
        # reject anything that looks like an inline credential
        if unknown:
            raise ValidationError(
                f"unknown key(s) in provider config section {section!r}: {sorted(unknown)}"
            )
        settings = ProviderSettings(**entry)
        if settings.kind not in ("live", "mock"):
            raise ValidationError(f"provider kind must be live or mock, got {settings.kind!r}")
        if settings.kind == "live" and not settings.base_url:
            raise ValidationError(f"live provider section {section!r} needs base_url")
        sections[section] = settings
    return ProviderConfig(**sections)


def _build_one(section: str, settings: ProviderSettings, seed: int):
    if settings.kind == "mock":
        if section == "chat":
            return MockChatProvider(seed=seed)
        if section == "embedding":
            return MockEmbeddingProvider(dimension=settings.dimension, seed=seed)
        if section == "image":
            return MockImageProvider()
        return MockScoringProvider()
    limiter = RateLimiter(concurrency=settings.concurrency, rate_per_s=settings.rate_per_s)
    kw = dict(
        credential_env=settings.credential_env or _DEFAULT_CRED_ENV[section],
        timeout_s=settings.timeout_s,
        limiter=limiter,
    )
    if section == "chat":
        return LiveChatProvider(settings.base_url, settings.model, **kw)
    if section == "embedding":
        return LiveEmbeddingProvider(settings.base_url, settings.model, **kw)
    if section == "image":
        return LiveImageProvider(settings.base_url, settings.model, **kw)
    return LiveScoringProvider(settings.base_url, settings.model, **kw)


def build_providers(
    config: Optional[ProviderConfig] = None,
    *,
    mock_override: bool = False,
    seed: int = 0,
) -> Providers:
    """Build the four providers; ``mock_override`` forces mocks everywhere."""
    config = config or ProviderConfig()
    if mock_override:
        return mock_providers(seed=seed, dimension=config.embedding.dimension)
    return Providers(
        chat=_build_one("chat", config.chat, seed),
        embedder=_build_one("embedding", config.embedding, seed),
        image=_build_one("image", config.image, seed),
        scorer=_build_one("scorer", config.scorer, seed),
    )


def mock_providers(seed: int = 0, dimension: int = 32) -> Providers:
    return Providers(
        chat=MockChatProvider(seed=seed),
        embedder=MockEmbeddingProvider(dimension=dimension, seed=seed),
        image=MockImageProvider(),
        scorer=MockScoringProvider(),
    )

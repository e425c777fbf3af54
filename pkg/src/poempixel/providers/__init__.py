"""Provider interfaces: chat completion, embeddings, image generation, and
image-text alignment scoring, each with a live HTTP backend and a
deterministic offline mock."""

from .base import (
    AlignmentScore,
    ChatRequest,
    EmbeddingVector,
    ImageArtifact,
    ImageParams,
    RateLimiter,
)
from .config import (
    Providers,
    ProviderConfig,
    ProviderSettings,
    build_providers,
    load_provider_config,
    mock_providers,
)
from .live import LiveChatProvider, LiveEmbeddingProvider, LiveImageProvider, LiveScoringProvider
from .mock import (
    MockChatProvider,
    MockEmbeddingProvider,
    MockImageProvider,
    MockScoringProvider,
    ScriptedChatProvider,
)

__all__ = [
    "AlignmentScore",
    "ChatRequest",
    "EmbeddingVector",
    "ImageArtifact",
    "ImageParams",
    "RateLimiter",
    "Providers",
    "ProviderConfig",
    "ProviderSettings",
    "build_providers",
    "load_provider_config",
    "mock_providers",
    "LiveChatProvider",
    "LiveEmbeddingProvider",
    "LiveImageProvider",
    "LiveScoringProvider",
    "MockChatProvider",
    "MockEmbeddingProvider",
    "MockImageProvider",
    "MockScoringProvider",
    "ScriptedChatProvider",
]

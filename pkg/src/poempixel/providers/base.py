"""Provider data types, protocols, and shared throttling."""

from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence, runtime_checkable

from ..errors import ValidationError


@dataclass(frozen=True)
class ChatRequest:
    user_prompt: str
    system_context: Optional[str] = None
    temperature: float = 0.0
    max_output_tokens: int = 512
    seed: Optional[int] = None

    def __post_init__(self):
        if not self.user_prompt:
            raise ValidationError("user_prompt must be non-empty")
        if self.temperature < 0:
            raise ValidationError("temperature must be >= 0")
        if self.max_output_tokens <= 0:
            raise ValidationError("max_output_tokens must be > 0")


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    dimension: int
    model_tag: str

    def __post_init__(self):
        if self.dimension <= 0:
            raise ValidationError("dimension must be > 0")
        if len(self.values) != self.dimension:
            raise ValidationError(
                f"embedding length {len(self.values)} != declared dimension {self.dimension}"
            )


@dataclass(frozen=True)
class ImageParams:
    width: int = 1024
    height: int = 1024
    seed: Optional[int] = None


@dataclass(frozen=True)
class ImageArtifact:
    data: bytes
    width: int
    height: int
    provider_tag: str
    instruction_text: str
    seed: Optional[int] = None


@dataclass(frozen=True)
class AlignmentScore:
    itm: float
    itc: float

    def __post_init__(self):
        if not (math.isfinite(self.itm) and math.isfinite(self.itc)):
            raise ValidationError("alignment scores must be finite")


@runtime_checkable
class ChatProvider(Protocol):
    model_tag: str

    def complete(self, request: ChatRequest) -> str: ...


@runtime_checkable
class EmbeddingProvider(Protocol):
    model_tag: str
    dimension: int

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]: ...


@runtime_checkable
class ImageProvider(Protocol):
    provider_tag: str

    def generate(self, instruction: str, params: ImageParams) -> ImageArtifact: ...


@runtime_checkable
class ScoringProvider(Protocol):
    provider_tag: str

    def score(self, image: ImageArtifact, text: str) -> AlignmentScore: ...


@dataclass
class RateLimiter:
    """Concurrency gate plus token bucket, shared by one provider's calls.

    ``rate_per_s=None`` disables the bucket; the semaphore alone bounds
    in-flight requests.
    """

    concurrency: int = 4
    rate_per_s: Optional[float] = None
    _semaphore: threading.Semaphore = field(init=False, repr=False)
    _lock: threading.Lock = field(init=False, repr=False)
    _tokens: float = field(init=False, repr=False)
    _last: float = field(init=False, repr=False)

    def __post_init__(self):
        if self.concurrency <= 0:
            raise ValidationError("concurrency must be > 0")
        self._semaphore = threading.Semaphore(self.concurrency)
        self._lock = threading.Lock()
        self._tokens = float(self.rate_per_s or 0)
        self._last = time.monotonic()

    def _take_token(self) -> None:
        if self.rate_per_s is None:
            return
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(
                    float(self.rate_per_s), self._tokens + (now - self._last) * self.rate_per_s
                )
                self._last = now
                if self._tokens >= 1:
                    self._tokens -= 1
                    return
                wait = (1 - self._tokens) / self.rate_per_s
            time.sleep(wait)

    def __enter__(self):
        self._semaphore.acquire()
        self._take_token()
        return self

    def __exit__(self, *exc):
        self._semaphore.release()
        return False

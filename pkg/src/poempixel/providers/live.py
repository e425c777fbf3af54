"""HTTP backends.

Chat and embeddings speak the OpenAI-compatible JSON protocol. Image
generation and scoring use a minimal documented shape:

- POST {base_url}/generate  {"instruction", "width", "height", "seed"} ->
  {"image_b64": "<base64 PNG>"}
- POST {base_url}/score     {"image_b64", "text"} -> {"itm": x, "itc": y}

Credentials are read from environment variables at call time and never
stored in config. Transport faults (timeouts, connection errors, 429, 5xx)
are retried up to 3 attempts with exponential backoff; auth and validation
failures are not.
"""

from __future__ import annotations

import base64
import os
import time
from typing import Optional, Sequence

import requests

from ..errors import EmptyResponseError, GenerationError, ProviderError
from ..pngio import read_png
from .base import (
    AlignmentScore,
    ChatRequest,
    EmbeddingVector,
    ImageArtifact,
    ImageParams,
    RateLimiter,
)

MAX_ATTEMPTS = 3
_RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class _HttpBackend:
    def __init__(
        self,
        base_url: str,
        credential_env: str,
        timeout_s: float = 30.0,
        limiter: Optional[RateLimiter] = None,
        backoff_s: float = 0.5,
    ):
        self.base_url = base_url.rstrip("/")
        self.credential_env = credential_env
        self.timeout_s = timeout_s
        self.limiter = limiter or RateLimiter()
        self.backoff_s = backoff_s

    def _headers(self) -> dict:
        key = os.environ.get(self.credential_env)
        if not key:
            raise ProviderError(
                f"credential env var {self.credential_env} is not set", retryable=False
            )
        return {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}

    def _post(self, path: str, payload: dict) -> dict:
        url = f"{self.base_url}{path}"
        last_error: Optional[ProviderError] = None
        for attempt in range(MAX_ATTEMPTS):
            try:
                with self.limiter:
                    response = requests.post(
                        url, json=payload, headers=self._headers(), timeout=self.timeout_s
                    )
            except requests.RequestException as exc:
                last_error = ProviderError(f"transport error for {url}: {exc}", retryable=True)
            else:
                if response.status_code in (401, 403):
                    raise ProviderError(
                        f"authentication failed for {url} (HTTP {response.status_code})",
                        retryable=False,
                    )
                if response.status_code in _RETRYABLE_STATUS:
                    last_error = ProviderError(
                        f"HTTP {response.status_code} from {url}", retryable=True
                    )
                elif response.status_code >= 400:
                    raise ProviderError(
                        f"HTTP {response.status_code} from {url}: {response.text[:200]}",
                        retryable=False,
                    )
                else:
                    try:
                        return response.json()
                    except ValueError as exc:
                        raise ProviderError(
                            f"non-JSON response from {url}", retryable=False
                        ) from exc
            if attempt + 1 < MAX_ATTEMPTS:
                time.sleep(self.backoff_s * (2**attempt))
        assert last_error is not None
        raise last_error


class LiveChatProvider(_HttpBackend):
    def __init__(self, base_url: str, model: str, credential_env: str = "POEMPIXEL_CHAT_KEY", **kw):
        super().__init__(base_url, credential_env, **kw)
        self.model = model
        self.model_tag = model

    def complete(self, request: ChatRequest) -> str:
        messages = []
        if request.system_context:
            messages.append({"role": "system", "content": request.system_context})
        messages.append({"role": "user", "content": request.user_prompt})
        payload = {
            "model": self.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        if request.seed is not None:
            payload["seed"] = request.seed
        data = self._post("/chat/completions", payload)
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError("malformed chat completion response", retryable=False) from exc
        if not content:
            raise EmptyResponseError()
        return content


class LiveEmbeddingProvider(_HttpBackend):
    def __init__(self, base_url: str, model: str, credential_env: str = "POEMPIXEL_CHAT_KEY", **kw):
        super().__init__(base_url, credential_env, **kw)
        self.model = model
        self.model_tag = model
        self.dimension = 0  # discovered from the first response

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        if not texts:
            raise ProviderError("embed requires at least one text", retryable=False)
        data = self._post("/embeddings", {"model": self.model, "input": list(texts)})
        try:
            rows = sorted(data["data"], key=lambda r: r["index"])
            vectors = [tuple(float(v) for v in row["embedding"]) for row in rows]
        except (KeyError, TypeError) as exc:
            raise ProviderError("malformed embeddings response", retryable=False) from exc
        if len(vectors) != len(texts):
            raise ProviderError(
                f"provider returned {len(vectors)} vectors for {len(texts)} texts",
                retryable=False,
            )
        dims = {len(v) for v in vectors}
        if len(dims) != 1:
            raise ProviderError(f"inconsistent embedding dimensions in batch: {dims}")
        dimension = dims.pop()
        if self.dimension and dimension != self.dimension:
            raise ProviderError(
                f"embedding dimension changed from {self.dimension} to {dimension}"
            )
        self.dimension = dimension
        return [
            EmbeddingVector(values=v, dimension=dimension, model_tag=self.model_tag)
            for v in vectors
        ]


class LiveImageProvider(_HttpBackend):
    def __init__(self, base_url: str, model: str = "", credential_env: str = "POEMPIXEL_IMAGE_KEY", **kw):
        super().__init__(base_url, credential_env, **kw)
        self.provider_tag = model or base_url

    def generate(self, instruction: str, params: ImageParams) -> ImageArtifact:
        if not instruction:
            raise GenerationError("instruction must be non-empty", retryable=False)
        payload = {
            "instruction": instruction,
            "width": params.width,
            "height": params.height,
            "seed": params.seed,
        }
        data = self._post("/generate", payload)
        if "error" in data:
            raise GenerationError(f"provider rejected generation: {data['error']}")
        try:
            raw = base64.b64decode(data["image_b64"])
        except (KeyError, TypeError, ValueError) as exc:
            raise GenerationError("malformed generation response") from exc
        info = read_png(raw)
        return ImageArtifact(
            data=raw,
            width=info.width,
            height=info.height,
            provider_tag=self.provider_tag,
            instruction_text=instruction,
            seed=params.seed,
        )


class LiveScoringProvider(_HttpBackend):
    def __init__(self, base_url: str, model: str = "", credential_env: str = "POEMPIXEL_SCORER_KEY", **kw):
        super().__init__(base_url, credential_env, **kw)
        self.provider_tag = model or base_url

    def score(self, image: ImageArtifact, text: str) -> AlignmentScore:
        if not text:
            raise ProviderError("text must be non-empty", retryable=False)
        payload = {"image_b64": base64.b64encode(image.data).decode("ascii"), "text": text}
        data = self._post("/score", payload)
        try:
            return AlignmentScore(itm=float(data["itm"]), itc=float(data["itc"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ProviderError("malformed scoring response", retryable=False) from exc

from __future__ import annotations

import json
from pathlib import Path

import pytest

from poempixel.providers import EmbeddingVector, mock_providers


@pytest.fixture
def providers():
    return mock_providers(seed=7)


@pytest.fixture
def three_poems(tmp_path: Path) -> Path:
    records = [
        {"id": "a", "title": "A", "poem": "one two three four"},
        {"id": "b", "title": "B", "poem": "one two three four five six"},
        {"id": "c", "title": "C", "poem": "one two three four five six seven eight"},
    ]
    path = tmp_path / "poems.jsonl"
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def fixture_dataset_path() -> Path:
    from importlib import resources

    return Path(str(resources.files("poempixel.data") / "fixture_poems.jsonl"))


class ScriptedEmbedder:
    """Maps exact strings to preset vectors; unknown strings get a default."""

    def __init__(self, mapping: dict[str, tuple[float, ...]], dimension: int, default=None):
        self.mapping = mapping
        self.dimension = dimension
        self.default = default or tuple([1.0] + [0.0] * (dimension - 1))
        self.model_tag = "scripted-embed"

    def embed(self, texts):
        out = []
        for text in texts:
            values = self.mapping.get(text, self.default)
            out.append(EmbeddingVector(tuple(values), self.dimension, self.model_tag))
        return out


@pytest.fixture
def scripted_embedder_cls():
    return ScriptedEmbedder


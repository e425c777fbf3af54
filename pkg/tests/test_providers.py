from __future__ import annotations

import hashlib
import io
import json
import random
import threading

import pytest

from poempixel.errors import ProviderError, ValidationError
from poempixel.pngio import encode_rgb_png, read_png
from poempixel.providers import (
    ChatRequest,
    ImageParams,
    MockChatProvider,
    MockEmbeddingProvider,
    MockImageProvider,
    MockScoringProvider,
    ProviderConfig,
    ScriptedChatProvider,
    build_providers,
    load_provider_config,
    mock_providers,
)
from poempixel.providers.live import LiveChatProvider


# ---------------------------------------------------------------------------
# chat mock


def test_chat_mock_deterministic():
    provider = MockChatProvider(seed=3)
    request = ChatRequest(user_prompt="Tell me about stars")
    assert provider.complete(request) == provider.complete(request)


def test_chat_mock_summarize_rule_by_hand():
    # hand-execute the documented rule: "SUMMARY: " + first 30 tokens
    prompt = "Summarize the following poem.\n" + " ".join(f"t{i}" for i in range(40))
    expected = "SUMMARY: " + " ".join(prompt.split()[:30])
    assert MockChatProvider().complete(ChatRequest(user_prompt=prompt)) == expected


def test_chat_mock_instruction_rule():
    out = MockChatProvider().complete(ChatRequest(user_prompt="Create a prompt for an image"))
    assert out.startswith("INSTRUCTION[")


def test_chat_request_validation():
    with pytest.raises(ValidationError):
        ChatRequest(user_prompt="")
    with pytest.raises(ValidationError):
        ChatRequest(user_prompt="x", temperature=-1)
    with pytest.raises(ValidationError):
        ChatRequest(user_prompt="x", max_output_tokens=0)


def test_scripted_chat_provider():
    provider = ScriptedChatProvider(["one", "two"])
    assert provider.complete(ChatRequest(user_prompt="a")) == "one"
    assert provider.complete(ChatRequest(user_prompt="b")) == "two"
    with pytest.raises(ValidationError):
        provider.complete(ChatRequest(user_prompt="c"))


# ---------------------------------------------------------------------------
# embedding mock


def test_embed_deterministic_and_equal():
    provider = MockEmbeddingProvider(dimension=16, seed=1)
    first = provider.embed(["abc"])
    second = provider.embed(["abc", "abc"])
    assert first[0] == second[0] == second[1]


def test_embed_unit_norm_fuzz():
    provider = MockEmbeddingProvider(dimension=24, seed=4)
    rng = random.Random(99)
    texts = [
        " ".join(rng.choice(["star", "cat", "moon", "sea", "tree"]) for _ in range(rng.randint(1, 8)))
        for _ in range(100)
    ]
    for vector in provider.embed(texts):
        norm = sum(v * v for v in vector.values) ** 0.5
        assert norm == pytest.approx(1.0, abs=1e-9)


def test_embed_preserves_order_and_length():
    provider = MockEmbeddingProvider(dimension=8)
    texts = ["one", "two", "three"]
    vectors = provider.embed(texts)
    assert len(vectors) == 3
    assert vectors[0] != vectors[1]
    assert provider.embed(["two"])[0] == vectors[1]


def test_embed_rejects_empty():
    provider = MockEmbeddingProvider()
    with pytest.raises(ValidationError):
        provider.embed([])
    with pytest.raises(ValidationError):
        provider.embed([""])


# ---------------------------------------------------------------------------
# image mock + png round trips


def test_image_mock_byte_identical():
    provider = MockImageProvider()
    params = ImageParams(width=48, height=32, seed=9)
    a = provider.generate("a parrot on a branch", params)
    b = provider.generate("a parrot on a branch", params)
    assert a.data == b.data


def test_image_mock_declared_dimensions():
    artifact = MockImageProvider().generate("hills", ImageParams(width=40, height=20))
    info = read_png(artifact.data)
    assert (info.width, info.height) == (40, 20)


def test_image_mock_color_from_instruction_hash():
    artifact = MockImageProvider().generate("hills", ImageParams(width=4, height=4))
    expected = hashlib.sha256(b"hills").digest()[:3]
    # independent decode oracle: Pillow
    PIL = pytest.importorskip("PIL.Image")
    with PIL.open(io.BytesIO(artifact.data)) as img:
        assert img.size == (4, 4)
        assert img.convert("RGB").getpixel((2, 2)) == tuple(expected)


def test_png_text_chunk_round_trip():
    instruction = "a kéttle singing — tea for everyone"
    artifact = MockImageProvider().generate(instruction, ImageParams(width=8, height=8, seed=2))
    info = read_png(artifact.data)
    assert info.text["instruction"] == instruction
    assert info.text["seed"] == "2"


def test_png_reader_rejects_garbage():
    with pytest.raises(ValidationError):
        read_png(b"not a png at all")


def test_png_encoder_rejects_bad_dims():
    with pytest.raises(ValidationError):
        encode_rgb_png(0, 5, (1, 2, 3))


# ---------------------------------------------------------------------------
# scoring mock


def _image_for(instruction: str):
    return MockImageProvider().generate(instruction, ImageParams(width=8, height=8))


def test_score_identical_text():
    image = _image_for("a parrot in the jungle")
    score = MockScoringProvider().score(image, "a parrot in the jungle")
    assert score.itm == 1.0 and score.itc == 1.0


def test_score_disjoint_text():
    image = _image_for("a parrot in the jungle")
    score = MockScoringProvider().score(image, "kettle tea cup stove")
    assert score.itm == 0.0 and score.itc == 0.0


def test_score_half_overlap_hand_counted():
    # instruction tokens {a,b,x,y}; text tokens {a,b,p,q}: overlap 2 / max(4,4)
    image = _image_for("alpha bravo xray yankee")
    score = MockScoringProvider().score(image, "alpha bravo papa quebec")
    assert score.itm == pytest.approx(0.5, abs=1e-9)
    assert score.itc == pytest.approx(0.5, abs=1e-9)


def test_score_inputs_validated():
    image = _image_for("x")
    with pytest.raises(ValidationError):
        MockScoringProvider().score(image, "")


# ---------------------------------------------------------------------------
# config + live error handling


def test_load_provider_config_toml(tmp_path):
    path = tmp_path / "providers.toml"
    path.write_text(
        '[chat]\nkind = "live"\nbase_url = "https://api.example.test/v1"\n'
        'model = "m1"\ntimeout_s = 5\n\n[embedding]\nkind = "mock"\ndimension = 16\n',
        encoding="utf-8",
    )
    config = load_provider_config(path)
    assert config.chat.kind == "live"
    assert config.chat.base_url == "https://api.example.test/v1"
    assert config.embedding.dimension == 16
    assert config.image.kind == "mock"


def test_load_provider_config_json_rejects_credentials(tmp_path):
    path = tmp_path / "providers.json"
    path.write_text(json.dumps({"chat": {"kind": "mock", "api_key": "sk-nope"}}))
    with pytest.raises(ValidationError, match="api_key"):
        load_provider_config(path)


def test_mock_override_forces_mocks(tmp_path):
    path = tmp_path / "providers.json"
    path.write_text(json.dumps({"chat": {"kind": "live", "base_url": "https://x.test"}}))
    providers = build_providers(load_provider_config(path), mock_override=True, seed=1)
    assert isinstance(providers.chat, MockChatProvider)


def test_live_missing_credential_not_retryable(monkeypatch):
    monkeypatch.delenv("POEMPIXEL_CHAT_KEY", raising=False)
    provider = LiveChatProvider("https://api.example.test/v1", "m", backoff_s=0)
    with pytest.raises(ProviderError) as excinfo:
        provider.complete(ChatRequest(user_prompt="hi"))
    assert excinfo.value.retryable is False


def test_live_auth_failure_no_retry(monkeypatch):
    monkeypatch.setenv("POEMPIXEL_CHAT_KEY", "k")
    provider = LiveChatProvider("https://api.example.test/v1", "m", backoff_s=0)
    calls = []

    class FakeResponse:
        status_code = 401
        text = "unauthorized"

    def fake_post(url, **kwargs):
        calls.append(url)
        return FakeResponse()

    monkeypatch.setattr("poempixel.providers.live.requests.post", fake_post)
    with pytest.raises(ProviderError) as excinfo:
        provider.complete(ChatRequest(user_prompt="hi"))
    assert excinfo.value.retryable is False
    assert len(calls) == 1


def test_live_retries_transient_then_succeeds(monkeypatch):
    monkeypatch.setenv("POEMPIXEL_CHAT_KEY", "k")
    provider = LiveChatProvider("https://api.example.test/v1", "m", backoff_s=0)
    attempts = []

    class Flaky:
        def __init__(self, status, payload=None):
            self.status_code = status
            self.text = ""
            self._payload = payload

        def json(self):
            return self._payload

    responses = [
        Flaky(503),
        Flaky(200, {"choices": [{"message": {"content": "hello"}}]}),
    ]

    def fake_post(url, **kwargs):
        attempts.append(url)
        return responses[len(attempts) - 1]

    monkeypatch.setattr("poempixel.providers.live.requests.post", fake_post)
    assert provider.complete(ChatRequest(user_prompt="hi")) == "hello"
    assert len(attempts) == 2


def test_mocks_are_thread_safe():
    providers = mock_providers(seed=0)
    outputs = []

    def work(i):
        request = ChatRequest(user_prompt=f"Summarize poem {i % 4}")
        outputs.append((i % 4, providers.chat.complete(request)))

    threads = [threading.Thread(target=work, args=(i,)) for i in range(32)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    by_key = {}
    for key, value in outputs:
        by_key.setdefault(key, set()).add(value)
    assert all(len(v) == 1 for v in by_key.values())


def test_provider_config_defaults():
    config = ProviderConfig()
    providers = build_providers(config, seed=5)
    assert isinstance(providers.embedder, MockEmbeddingProvider)
    assert providers.embedder.dimension == 32

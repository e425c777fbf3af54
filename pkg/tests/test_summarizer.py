from __future__ import annotations

import json

import pytest

from poempixel.corpus import Poem
from poempixel.errors import EmptyResponseError, RegistryError, TemplateKindError
from poempixel.providers import ScriptedChatProvider
from poempixel.summarizer import (
    PromptTemplate,
    registry_get,
    registry_load,
    render_prompt,
    summarize,
)

POEM = Poem(id="p1", title="Stars", text="abc")


def test_default_registry_contents():
    templates = registry_load()
    ids = [t.id for t in templates]
    assert ids == ["R1", "R2", "R3", "R4", "R5", "R6", "R7", "I1", "I2", "I3", "I4", "I5", "I6"]
    assert "notable literary devices" in registry_get(templates, "R6").text
    assert "within 50 words" in registry_get(templates, "I5").text
    assert all(t.kind == "summarization" for t in templates[:7])
    assert all(t.kind == "instruction" for t in templates[7:])
    assert [t.round_index for t in templates[:7]] == [1, 2, 3, 4, 5, 6, 7]


def test_registry_missing_placeholder_names_template(tmp_path):
    path = tmp_path / "registry.json"
    path.write_text(
        json.dumps(
            [
                {"id": "R1", "kind": "summarization", "round_index": 1, "text": "ok {{poem}}"},
                {"id": "R2", "kind": "summarization", "round_index": 2, "text": "no slot"},
            ]
        )
    )
    with pytest.raises(RegistryError, match="R2"):
        registry_load(path)


def test_registry_duplicate_id(tmp_path):
    path = tmp_path / "registry.json"
    entry = {"id": "R1", "kind": "summarization", "round_index": 1, "text": "{{poem}}"}
    path.write_text(json.dumps([entry, entry]))
    with pytest.raises(RegistryError, match="R1"):
        registry_load(path)


def test_render_r1_concatenation():
    templates = registry_load()
    rendered = render_prompt(registry_get(templates, "R1"), POEM)
    assert rendered == "Summarize the following poem.\nabc"


def test_render_contains_poem_verbatim():
    templates = registry_load()
    poem = Poem(id="p2", title="T", text="line one\n  line two\nline three")
    for template in templates[:7]:
        rendered = render_prompt(template, poem)
        assert poem.text in rendered
        assert "{{poem}}" not in rendered


def test_render_leaves_template_unchanged():
    template = PromptTemplate(id="X", kind="summarization", text="Go.\n{{poem}}", round_index=1)
    render_prompt(template, POEM)
    assert template.text == "Go.\n{{poem}}"


def test_render_include_title():
    template = PromptTemplate(id="X", kind="summarization", text="Go.\n{{poem}}", round_index=1)
    assert render_prompt(template, POEM, include_title=True) == "Go.\nStars\nabc"


def test_render_rejects_instruction_kind():
    templates = registry_load()
    with pytest.raises(TemplateKindError):
        render_prompt(registry_get(templates, "I1"), POEM)


def test_summarize_deterministic(providers):
    templates = registry_load()
    template = registry_get(templates, "R6")
    first = summarize(POEM, template, providers.chat)
    second = summarize(POEM, template, providers.chat)
    assert first.text == second.text
    assert first.template_id == "R6"
    assert first.poem_id == "p1"
    assert first.model_tag == "mock-chat"


def test_summarize_rejects_empty_completion():
    template = PromptTemplate(
        id="X", kind="summarization", text="Summarize.\n{{poem}}", round_index=1
    )
    with pytest.raises(EmptyResponseError):
        summarize(POEM, template, ScriptedChatProvider(["   "]))

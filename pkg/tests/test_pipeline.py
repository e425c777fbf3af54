from __future__ import annotations

import json

import pytest

from poempixel.errors import ProviderError, ValidationError
from poempixel.pipeline import (
    RunConfig,
    bundled_fixture_path,
    evaluate_run,
    jsonl_records_without_timestamps,
    run_pipeline,
)
from poempixel.providers import mock_providers

JSONL_ARTIFACTS = (
    "poems.jsonl",
    "summaries.jsonl",
    "keyelements.jsonl",
    "instructions.jsonl",
    "generations.jsonl",
    "scores.jsonl",
)


def _config(tmp_path, name="run", **overrides) -> RunConfig:
    defaults = dict(
        dataset=str(bundled_fixture_path()),
        output_dir=str(tmp_path / name),
        seed=7,
        image_width=32,
        image_height=32,
    )
    defaults.update(overrides)
    return RunConfig(**defaults)


# ---------------------------------------------------------------------------
# fault injection helpers: wrap a provider, fail the nth call that matches


class FailNth:
    def __init__(self, inner, method: str, n: int, predicate=None):
        self._inner = inner
        self._method = method
        self._n = n
        self._predicate = predicate or (lambda *a, **k: True)
        self._count = 0

    def __getattr__(self, name):
        attr = getattr(self._inner, name)
        if name != self._method:
            return attr

        def wrapped(*args, **kwargs):
            if self._predicate(*args, **kwargs):
                self._count += 1
                if self._count == self._n:
                    raise ProviderError("injected fault", retryable=False)
            return attr(*args, **kwargs)

        return wrapped


def _is_instruction_prompt(request):
    return "Visual elements:" in request.user_prompt


def _is_summary_prompt(request):
    return not _is_instruction_prompt(request)


def _is_poem_embedding(texts):
    return any(t.startswith("SUMMARY:") for t in texts)


# ---------------------------------------------------------------------------


def test_full_mock_run_counts(tmp_path):
    manifest = run_pipeline(_config(tmp_path))
    assert manifest.counts == {
        "poems": 10,
        "summaries": 10,
        "key_elements": 10,
        "instructions": 10,
        "images": 10,
        "scores": 10,
    }
    assert manifest.failures == []
    run_dir = tmp_path / "run"
    for name in JSONL_ARTIFACTS:
        assert (run_dir / name).exists(), name
    assert len(list((run_dir / "images").glob("*.png"))) == 10
    assert (run_dir / "manifest.json").exists()


def test_rerun_is_byte_identical_modulo_timestamps(tmp_path):
    run_pipeline(_config(tmp_path, "a"))
    run_pipeline(_config(tmp_path, "b"))
    for name in JSONL_ARTIFACTS:
        first = jsonl_records_without_timestamps(tmp_path / "a" / name)
        second = jsonl_records_without_timestamps(tmp_path / "b" / name)
        assert first == second, name
    # images too: mock PNGs are pure functions of the instruction
    for png in sorted((tmp_path / "a" / "images").glob("*.png")):
        assert png.read_bytes() == (tmp_path / "b" / "images" / png.name).read_bytes()


def test_existing_output_dir_requires_resume(tmp_path):
    run_pipeline(_config(tmp_path))
    with pytest.raises(ValidationError, match="resume"):
        run_pipeline(_config(tmp_path))


def test_sample_fraction_deterministic(tmp_path):
    first = run_pipeline(_config(tmp_path, "a", sample_fraction=0.5))
    second = run_pipeline(_config(tmp_path, "b", sample_fraction=0.5))
    assert first.counts["poems"] == 5
    ids = [r["id"] for r in jsonl_records_without_timestamps(tmp_path / "a" / "poems.jsonl")]
    assert ids == [r["id"] for r in jsonl_records_without_timestamps(tmp_path / "b" / "poems.jsonl")]


def test_unknown_template_aborts_before_work(tmp_path):
    cfg = _config(tmp_path, summary_template_id="R99")
    with pytest.raises(Exception, match="R99"):
        run_pipeline(cfg)
    assert not (tmp_path / "run").exists()


@pytest.mark.parametrize(
    "stage,make_providers",
    [
        (
            "summarize",
            lambda p: p.__class__(
                chat=FailNth(p.chat, "complete", 7, _is_summary_prompt),
                embedder=p.embedder,
                image=p.image,
                scorer=p.scorer,
            ),
        ),
        (
            "poekey",
            lambda p: p.__class__(
                chat=p.chat,
                embedder=FailNth(p.embedder, "embed", 7, _is_poem_embedding),
                image=p.image,
                scorer=p.scorer,
            ),
        ),
        (
            "instruct",
            lambda p: p.__class__(
                chat=FailNth(p.chat, "complete", 7, _is_instruction_prompt),
                embedder=p.embedder,
                image=p.image,
                scorer=p.scorer,
            ),
        ),
        (
            "generate",
            lambda p: p.__class__(
                chat=p.chat,
                embedder=p.embedder,
                image=FailNth(p.image, "generate", 7),
                scorer=p.scorer,
            ),
        ),
        (
            "score",
            lambda p: p.__class__(
                chat=p.chat,
                embedder=p.embedder,
                image=p.image,
                scorer=FailNth(p.scorer, "score", 7),
            ),
        ),
    ],
)
def test_fault_isolation_per_stage(tmp_path, stage, make_providers):
    providers = make_providers(mock_providers(seed=7))
    manifest = run_pipeline(_config(tmp_path, workers=1), providers=providers)
    assert len(manifest.failures) == 1
    failure = manifest.failures[0]
    assert failure.stage == stage
    assert "injected fault" in failure.error
    counts = manifest.counts
    expected_after = {
        "summarize": dict(summaries=9, key_elements=9, instructions=9, images=9, scores=9),
        "poekey": dict(summaries=10, key_elements=9, instructions=9, images=9, scores=9),
        "instruct": dict(summaries=10, key_elements=10, instructions=9, images=9, scores=9),
        "generate": dict(summaries=10, key_elements=10, instructions=10, images=9, scores=9),
        "score": dict(summaries=10, key_elements=10, instructions=10, images=10, scores=9),
    }[stage]
    assert counts["poems"] == 10
    for key, value in expected_after.items():
        assert counts[key] == value, (stage, key)
    # count identities: produced + failed-at-stage = input of that stage
    stage_input = {"summarize": counts["poems"],
                   "poekey": counts["summaries"],
                   "instruct": counts["key_elements"],
                   "generate": counts["instructions"],
                   "score": counts["images"]}[stage]
    produced = {"summarize": counts["summaries"],
                "poekey": counts["key_elements"],
                "instruct": counts["instructions"],
                "generate": counts["images"],
                "score": counts["scores"]}[stage]
    assert produced + 1 == stage_input


def test_resume_completes_only_missing(tmp_path):
    failing = mock_providers(seed=7)
    failing = failing.__class__(
        chat=FailNth(failing.chat, "complete", 3, _is_summary_prompt),
        embedder=failing.embedder,
        image=failing.image,
        scorer=failing.scorer,
    )
    first = run_pipeline(_config(tmp_path, workers=1), providers=failing)
    assert first.counts["summaries"] == 9
    failed_id = first.failures[0].poem_id

    class CountingChat:
        def __init__(self, inner):
            self._inner = inner
            self.calls = []
            self.model_tag = inner.model_tag

        def complete(self, request):
            self.calls.append(request.user_prompt)
            return self._inner.complete(request)

    healthy = mock_providers(seed=7)
    counting = CountingChat(healthy.chat)
    resumed = run_pipeline(
        _config(tmp_path, workers=1, resume=True),
        providers=healthy.__class__(
            chat=counting, embedder=healthy.embedder, image=healthy.image, scorer=healthy.scorer
        ),
    )
    assert resumed.counts["summaries"] == 10
    assert resumed.counts["scores"] == 10
    assert resumed.failures == []
    summarize_calls = [c for c in counting.calls if "Visual elements:" not in c]
    assert len(summarize_calls) == 1  # only the failed poem was redone
    rows = jsonl_records_without_timestamps(tmp_path / "run" / "summaries.jsonl")
    assert [r["poem_id"] for r in rows] == [f"np{i:02d}" for i in range(1, 11)]
    assert failed_id in {r["poem_id"] for r in rows}


def test_no_summary_variant(tmp_path):
    manifest = run_pipeline(_config(tmp_path, variant="no_summary"))
    assert manifest.counts == {"poems": 10, "images": 10, "scores": 10}
    run_dir = tmp_path / "run"
    assert not (run_dir / "summaries.jsonl").exists()
    scores = jsonl_records_without_timestamps(run_dir / "scores.jsonl")
    assert all(r["caption_source"] == "poem" for r in scores)
    # poem text fed verbatim: the embedded instruction is the poem itself
    from poempixel.pngio import read_png

    poems = {r["id"]: r for r in jsonl_records_without_timestamps(run_dir / "poems.jsonl")}
    info = read_png((run_dir / "images" / "np01.png").read_bytes())
    assert info.text["instruction"] == poems["np01"]["poem"]


def test_no_tuning_variant_pins_round_one_templates(tmp_path):
    run_pipeline(_config(tmp_path, variant="no_tuning"))
    rows = jsonl_records_without_timestamps(tmp_path / "run" / "summaries.jsonl")
    assert all(r["template_id"] == "R1" for r in rows)
    rows = jsonl_records_without_timestamps(tmp_path / "run" / "instructions.jsonl")
    assert all(r["template_id"] == "I1" for r in rows)


def test_manifest_counts_match_files(tmp_path):
    manifest = run_pipeline(_config(tmp_path))
    run_dir = tmp_path / "run"
    on_disk = {
        "poems": len(jsonl_records_without_timestamps(run_dir / "poems.jsonl")),
        "summaries": len(jsonl_records_without_timestamps(run_dir / "summaries.jsonl")),
        "key_elements": len(jsonl_records_without_timestamps(run_dir / "keyelements.jsonl")),
        "instructions": len(jsonl_records_without_timestamps(run_dir / "instructions.jsonl")),
        "images": len(jsonl_records_without_timestamps(run_dir / "generations.jsonl")),
        "scores": len(jsonl_records_without_timestamps(run_dir / "scores.jsonl")),
    }
    assert manifest.counts == on_disk


# ---------------------------------------------------------------------------
# evaluation


def test_evaluate_identity_summaries(tmp_path):
    run_pipeline(_config(tmp_path))
    run_dir = tmp_path / "run"
    # overwrite candidates with the references: all text metrics go to 1.0
    poems = {r["id"]: r for r in jsonl_records_without_timestamps(run_dir / "poems.jsonl")}
    rows = jsonl_records_without_timestamps(run_dir / "summaries.jsonl")
    with (run_dir / "summaries.jsonl").open("w", encoding="utf-8") as fh:
        for row in rows:
            row["text"] = poems[row["poem_id"]]["reference_summary"]
            row["created_at"] = ""
            fh.write(json.dumps(row) + "\n")
    report = evaluate_run(run_dir, ("text",))
    mean = report["text"]["mean"]
    for column in ("rouge1", "rouge2", "rougeL", "bleu1", "bleu2", "bleu3", "bleu4"):
        assert mean[column] == pytest.approx(1.0), column


def test_evaluate_image_mean_full_alignment(tmp_path):
    run_pipeline(_config(tmp_path))
    report = evaluate_run(tmp_path / "run", ("image",))
    assert report["image"]["mean"]["itm"] == pytest.approx(1.0)
    assert report["image"]["mean"]["itc"] == pytest.approx(1.0)


def test_evaluate_three_poem_hand_average(tmp_path):
    from poempixel.textmetrics import meteor, rouge_l, rouge_n, tokenize

    dataset_path = tmp_path / "three.jsonl"
    records = [
        {"id": "a", "title": "A", "poem": "x", "reference_summary": "the cat sat on the mat"},
        {"id": "b", "title": "B", "poem": "y", "reference_summary": "stars shine above the sea"},
        {"id": "c", "title": "C", "poem": "z", "reference_summary": "rain falls gently down"},
    ]
    dataset_path.write_text("\n".join(json.dumps(r) for r in records), encoding="utf-8")
    run_dir = tmp_path / "run"
    (run_dir).mkdir()
    (run_dir / "poems.jsonl").write_text(
        "\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8"
    )
    candidates = {"a": "the cat sat", "b": "bright stars shine above", "c": "no overlap here"}
    with (run_dir / "summaries.jsonl").open("w", encoding="utf-8") as fh:
        for pid, text in candidates.items():
            fh.write(
                json.dumps(
                    {"poem_id": pid, "text": text, "template_id": "R6",
                     "model_tag": "m", "created_at": ""}
                )
                + "\n"
            )
    report = evaluate_run(run_dir, ("text",))
    expected_rl = sum(
        rouge_l(tokenize(candidates[r["id"]]), tokenize(r["reference_summary"])).f1
        for r in records
    ) / 3
    expected_met = sum(
        meteor(tokenize(candidates[r["id"]]), tokenize(r["reference_summary"]))
        for r in records
    ) / 3
    expected_r1 = sum(
        rouge_n(tokenize(candidates[r["id"]]), tokenize(r["reference_summary"]), 1).f1
        for r in records
    ) / 3
    assert report["text"]["mean"]["rougeL"] == pytest.approx(expected_rl, abs=1e-9)
    assert report["text"]["mean"]["meteor"] == pytest.approx(expected_met, abs=1e-9)
    assert report["text"]["mean"]["rouge1"] == pytest.approx(expected_r1, abs=1e-9)


def test_evaluate_missing_references_lists_ids(tmp_path):
    run_dir = tmp_path / "run"
    run_dir.mkdir()
    (run_dir / "poems.jsonl").write_text(
        json.dumps({"id": "a", "title": "A", "poem": "x"}) + "\n", encoding="utf-8"
    )
    (run_dir / "summaries.jsonl").write_text(
        json.dumps(
            {"poem_id": "a", "text": "t", "template_id": "R6", "model_tag": "m", "created_at": ""}
        )
        + "\n",
        encoding="utf-8",
    )
    with pytest.raises(ValidationError, match="a"):
        evaluate_run(run_dir, ("text",))


def test_report_table_formatting(tmp_path):
    run_pipeline(_config(tmp_path))
    evaluate_run(tmp_path / "run")
    table = (tmp_path / "run" / "reports" / "table_image.md").read_text(encoding="utf-8")
    lines = table.strip().splitlines()
    assert lines[0] == "| poem_id | itm | itc |"
    assert lines[-1].startswith("| MEAN |")
    assert "1.0000" in lines[-1]

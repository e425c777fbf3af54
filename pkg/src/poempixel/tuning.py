"""Feedback-loop state machine: rounds of (generate -> score -> refine).

Summary-mode rounds aggregate +1/-1 votes by sum; image-mode rounds
aggregate 1..5 ratings by mean. The loop stops when a round's aggregate
strictly decreases from its predecessor (plateaus continue), and the
selected round is the one immediately before the decrease. A max_rounds
cap (default 10) guards non-terminating sessions: hitting it selects the
last round.

Sessions persist as ``session.json`` plus an append-only ``events.jsonl``;
resubmissions are resolved at read time, latest (created_at, file order)
per (round, item, rater) wins.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .corpus import Dataset
from .errors import StateError, ValidationError
from .textmetrics import meteor, rouge_l, tokenize

MODES = ("summary", "image")
DEFAULT_MAX_ROUNDS = 10
DEFAULT_RATERS = ("expert1", "expert2", "expert3", "expert4")


@dataclass(frozen=True)
class ScoreEvent:
    round_index: int
    item_id: str
    rater_id: str
    value: float
    source: str = "human"
    created_at: str = ""


@dataclass
class ReviewItem:
    item_id: str
    round_index: int
    poem_text: str
    payload: dict
    blind: bool


@dataclass
class TuningRound:
    index: int
    template_id: str
    status: str = "open"
    aggregate: Optional[float] = None
    automated_metrics: dict = field(default_factory=dict)
    items: list[ReviewItem] = field(default_factory=list)


@dataclass
class TuningSession:
    mode: str
    rounds: list[TuningRound] = field(default_factory=list)
    stopped: bool = False
    selected_round: Optional[int] = None
    max_rounds: int = DEFAULT_MAX_ROUNDS
    raters: tuple[str, ...] = DEFAULT_RATERS

    @property
    def aggregation(self) -> str:
        return "sum" if self.mode == "summary" else "mean"

    def history(self) -> list[float]:
        return [r.aggregate for r in self.rounds if r.status == "closed"]

    def open_round(self) -> Optional[TuningRound]:
        for round_ in self.rounds:
            if round_.status == "open":
                return round_
        return None


def validate_value(mode: str, value) -> float:
    """Summary mode: exactly +1 or -1. Image mode: integer 1..5."""
    if mode == "summary":
        if value in (1, -1, 1.0, -1.0):
            return float(value)
        raise ValidationError(f"value {value!r} out of domain; allowed: -1, +1")
    if mode == "image":
        if isinstance(value, bool):
            raise ValidationError(f"value {value!r} out of domain; allowed: integers 1..5")
        if isinstance(value, (int, float)) and float(value).is_integer() and 1 <= value <= 5:
            return float(value)
        raise ValidationError(f"value {value!r} out of domain; allowed: integers 1..5")
    raise ValidationError(f"unknown mode {mode!r}; expected one of {MODES}")


def latest_events(events: Sequence[ScoreEvent]) -> list[ScoreEvent]:
    """Resolve overwrites: keep the latest event per (round, item, rater).

    Later created_at wins; equal timestamps fall back to input order."""
    chosen: dict[tuple[int, str, str], tuple[int, ScoreEvent]] = {}
    for position, event in enumerate(events):
        key = (event.round_index, event.item_id, event.rater_id)
        if key not in chosen:
            chosen[key] = (position, event)
            continue
        _, existing = chosen[key]
        if event.created_at >= existing.created_at:
            chosen[key] = (position, event)
    return [e for _, e in sorted(chosen.values(), key=lambda pair: pair[0])]


def aggregate_round(events: Sequence[ScoreEvent], mode: str) -> float:
    """Sum (summary mode) or mean (image mode) of the round's latest events."""
    if not events:
        raise ValidationError("no scores recorded")
    rounds = {e.round_index for e in events}
    if len(rounds) != 1:
        raise ValidationError(f"events span multiple rounds: {sorted(rounds)}")
    resolved = latest_events(events)
    values = [validate_value(mode, e.value) for e in resolved]
    if mode == "summary":
        return float(sum(values))
    return sum(values) / len(values)


def should_stop(history: Sequence[float]) -> bool:
    """True iff the last aggregate strictly decreased from its predecessor."""
    if not history:
        raise ValidationError("history must be non-empty")
    if len(history) == 1:
        return False
    return history[-1] < history[-2]


def select_best(history: Sequence[float], stopped: bool, max_rounds_hit: bool) -> int:
    """1-based index of the selected round."""
    if not history:
        raise ValidationError("history must be non-empty")
    if stopped:
        return len(history) - 1 if len(history) > 1 else 1
    if max_rounds_hit:
        return len(history)
    raise StateError("session is still running; nothing to select")


def run_automated_round(
    round_: TuningRound,
    sample: Dataset,
    mode: str,
    *,
    candidates: Optional[Mapping[str, str]] = None,
    images: Optional[Mapping[str, object]] = None,
    captions: Optional[Mapping[str, str]] = None,
    scorer=None,
) -> dict[str, float]:
    """Mean automated metrics over the sample, stored on the round.

    Summary mode: mean ROUGE-L F1 and METEOR of candidate vs reference.
    Image mode: mean ITM and ITC from the scorer.
    """
    if mode == "summary":
        missing_ref = [p.id for p in sample if p.reference_summary is None]
        if missing_ref:
            raise ValidationError(f"poems lack reference summaries: {missing_ref}")
        missing_cand = [p.id for p in sample if not (candidates or {}).get(p.id)]
        if missing_cand:
            raise ValidationError(f"poems lack candidate summaries: {missing_cand}")
        rl_total = met_total = 0.0
        for poem in sample:
            cand = tokenize(candidates[poem.id])
            ref = tokenize(poem.reference_summary)
            rl_total += rouge_l(cand, ref).f1
            met_total += meteor(cand, ref)
        metrics = {"rougeL": rl_total / len(sample), "meteor": met_total / len(sample)}
    elif mode == "image":
        if scorer is None:
            raise ValidationError("image mode needs a scoring provider")
        missing = [p.id for p in sample if (images or {}).get(p.id) is None]
        if missing:
            raise ValidationError(f"poems lack generated images: {missing}")
        itm_total = itc_total = 0.0
        for poem in sample:
            caption = (captions or {}).get(poem.id) or poem.text
            score = scorer.score(images[poem.id], caption)
            itm_total += score.itm
            itc_total += score.itc
        metrics = {"itm": itm_total / len(sample), "itc": itc_total / len(sample)}
    else:
        raise ValidationError(f"unknown mode {mode!r}")
    round_.automated_metrics = metrics
    return metrics


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _items_from_dicts(raw: list[dict], round_index: int, blind: bool) -> list[ReviewItem]:
    items = []
    for entry in raw:
        items.append(
            ReviewItem(
                item_id=str(entry["item_id"]),
                round_index=round_index,
                poem_text=str(entry.get("poem_text", "")),
                payload=dict(entry.get("payload", {})),
                blind=blind,
            )
        )
    return items


class SessionStore:
    """Directory-backed persistence for one tuning session."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.session_path = self.directory / "session.json"
        self.events_path = self.directory / "events.jsonl"

    def exists(self) -> bool:
        return self.session_path.exists()

    def create(
        self,
        mode: str,
        template_id: str,
        *,
        items: Optional[list[dict]] = None,
        raters: Sequence[str] = DEFAULT_RATERS,
        max_rounds: int = DEFAULT_MAX_ROUNDS,
    ) -> TuningSession:
        if mode not in MODES:
            raise ValidationError(f"unknown mode {mode!r}; expected one of {MODES}")
        if self.exists():
            raise StateError(f"session already exists at {self.session_path}")
        self.directory.mkdir(parents=True, exist_ok=True)
        session = TuningSession(
            mode=mode, max_rounds=max_rounds, raters=tuple(raters)
        )
        session.rounds.append(
            TuningRound(
                index=1,
                template_id=template_id,
                items=_items_from_dicts(items or [], 1, blind=(mode == "summary")),
            )
        )
        self._write(session)
        return session

    def load(self) -> TuningSession:
        if not self.exists():
            raise StateError(f"no session found at {self.session_path}")
        raw = json.loads(self.session_path.read_text(encoding="utf-8"))
        rounds = []
        for r in raw["rounds"]:
            rounds.append(
                TuningRound(
                    index=r["index"],
                    template_id=r["template_id"],
                    status=r["status"],
                    aggregate=r.get("aggregate"),
                    automated_metrics=r.get("automated_metrics", {}),
                    items=[ReviewItem(**item) for item in r.get("items", [])],
                )
            )
        return TuningSession(
            mode=raw["mode"],
            rounds=rounds,
            stopped=raw["stopped"],
            selected_round=raw.get("selected_round"),
            max_rounds=raw.get("max_rounds", DEFAULT_MAX_ROUNDS),
            raters=tuple(raw.get("raters", DEFAULT_RATERS)),
        )

    def _write(self, session: TuningSession) -> None:
        payload = {
            "mode": session.mode,
            "aggregation": session.aggregation,
            "stopped": session.stopped,
            "selected_round": session.selected_round,
            "max_rounds": session.max_rounds,
            "raters": list(session.raters),
            "rounds": [
                {
                    "index": r.index,
                    "template_id": r.template_id,
                    "status": r.status,
                    "aggregate": r.aggregate,
                    "automated_metrics": r.automated_metrics,
                    "items": [asdict(item) for item in r.items],
                }
                for r in session.rounds
            ],
        }
        tmp = self.session_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(payload, indent=2), encoding="utf-8")
        tmp.replace(self.session_path)

    def events(self) -> list[ScoreEvent]:
        if not self.events_path.exists():
            return []
        out = []
        with self.events_path.open("r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    out.append(ScoreEvent(**json.loads(line)))
        return out

    def round_events(self, round_index: int) -> list[ScoreEvent]:
        return [e for e in self.events() if e.round_index == round_index]

    def append_event(self, event: ScoreEvent) -> ScoreEvent:
        if not event.created_at:
            event = ScoreEvent(
                round_index=event.round_index,
                item_id=event.item_id,
                rater_id=event.rater_id,
                value=event.value,
                source=event.source,
                created_at=_now(),
            )
        with self.events_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(asdict(event)) + "\n")
            fh.flush()
        return event

    def submit(self, item_id: str, rater_id: str, value, *, source: str = "human") -> ScoreEvent:
        """Validate against the open round containing the item, then append."""
        session = self.load()
        target = None
        for round_ in session.rounds:
            if any(item.item_id == item_id for item in round_.items):
                target = round_
        if target is None:
            raise ValidationError(f"unknown item {item_id!r}")
        if target.status != "open":
            raise StateError(f"round {target.index} is closed")
        validated = validate_value(session.mode, value)
        return self.append_event(
            ScoreEvent(
                round_index=target.index,
                item_id=item_id,
                rater_id=rater_id,
                value=validated,
                source=source,
            )
        )

    def close_round(self) -> TuningSession:
        """Aggregate the open round, apply the stopping rule, persist."""
        session = self.load()
        round_ = session.open_round()
        if round_ is None:
            raise StateError("no open round to close")
        events = self.round_events(round_.index)
        round_.aggregate = aggregate_round(events, session.mode)
        round_.status = "closed"
        history = session.history()
        if should_stop(history):
            session.stopped = True
            session.selected_round = select_best(history, stopped=True, max_rounds_hit=False)
        elif len(session.rounds) >= session.max_rounds:
            session.stopped = True
            session.selected_round = select_best(history, stopped=False, max_rounds_hit=True)
        self._write(session)
        return session

    def advance(self, template_id: str, *, items: Optional[list[dict]] = None) -> TuningSession:
        """Open the next round; refused when stopped or a round is open."""
        session = self.load()
        if session.stopped:
            raise StateError("session is stopped; cannot advance")
        if session.open_round() is not None:
            raise StateError("current round is still open; close it first")
        if any(r.template_id == template_id for r in session.rounds):
            raise ValidationError(f"template {template_id!r} already used in this session")
        index = len(session.rounds) + 1
        session.rounds.append(
            TuningRound(
                index=index,
                template_id=template_id,
                items=_items_from_dicts(items or [], index, blind=(session.mode == "summary")),
            )
        )
        self._write(session)
        return session

    def set_automated_metrics(self, round_index: int, metrics: dict) -> None:
        session = self.load()
        for round_ in session.rounds:
            if round_.index == round_index:
                round_.automated_metrics = dict(metrics)
                self._write(session)
                return
        raise ValidationError(f"no round {round_index} in session")


def advance_session(
    store: SessionStore, next_template, *, items: Optional[list[dict]] = None
) -> TuningSession:
    """Open the next round with the given template (object with .id, or id)."""
    template_id = getattr(next_template, "id", next_template)
    return store.advance(str(template_id), items=items)


# Bundled demo score sheets for `tune replay`: four expert votes per round.
DEMO_SUMMARY_ROUNDS: tuple[tuple[str, tuple[float, ...]], ...] = (
    ("R1", (1, -1, 1, -1)),
    ("R2", (1, 1, -1, 1)),
    ("R3", (1, 1, -1, 1)),
    ("R4", (1, 1, 1, 1)),
    ("R5", (1, 1, 1, 1)),
    ("R6", (1, 1, 1, 1)),
    ("R7", (1, 1, 1, -1)),
)
DEMO_IMAGE_ROUNDS: tuple[tuple[str, tuple[float, ...]], ...] = (
    ("I1", (2, 2, 1, 2)),
    ("I2", (3, 3, 2, 4)),
    ("I3", (3, 3, 3, 3)),
    ("I4", (3, 4, 4, 4)),
    ("I5", (3, 5, 4, 5)),
    ("I6", (3, 4, 4, 5)),
)


def replay_rounds(
    directory: str | Path,
    mode: str,
    rounds: Sequence[tuple[str, Sequence[float]]],
    *,
    raters: Optional[Sequence[str]] = None,
) -> TuningSession:
    """Drive a fresh session through (template_id, per-rater values) rounds
    via the normal submit/close/advance path; stops when the rule fires."""
    if not rounds:
        raise ValidationError("replay needs at least one round")
    store = SessionStore(directory)
    raters = tuple(raters or (f"expert{i + 1}" for i in range(len(rounds[0][1]))))
    store.create(
        mode,
        rounds[0][0],
        items=[{"item_id": "item-1"}],
        raters=raters,
        max_rounds=max(DEFAULT_MAX_ROUNDS, len(rounds)),
    )
    for k, (template_id, values) in enumerate(rounds, start=1):
        session = store.load()
        if session.stopped:
            break
        if session.open_round() is None:
            store.advance(template_id, items=[{"item_id": f"item-{k}"}])
        for rater, value in zip(raters, values):
            store.submit(f"item-{k}", rater, value)
        store.close_round()
    return store.load()

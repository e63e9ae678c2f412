"""State behind the review service: blinded surveys, votes, match verdicts.

The store owns the only copy of which model produced which candidate; items
handed to clients carry opaque candidate ids and nothing else. Mutations are
serialized by a lock and mirrored to an append-only JSONL event log, which
doubles as the audit trail (re-votes append, they never rewrite history).
"""

from __future__ import annotations

import json
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

from ..matcher import VerificationQueue

SUBTASKS = ("embedded_text", "image_caption", "meme_caption", "literary_devices", "emotions")
SINGLE_MODE_SUBTASKS = frozenset({"image_caption", "meme_caption"})
NONE_OPTION_SUBTASKS = frozenset({"literary_devices", "emotions"})
NONE_CANDIDATE_ID = "none"

SINGLE = "single"
MULTI = "multi"


class ReviewError(Exception):
    pass


@dataclass(frozen=True)
class SourceDescriptor:
    model: str
    with_context: bool

    @property
    def condition(self) -> str:
        return "with" if self.with_context else "without"

    def key(self) -> str:
        return f"{self.model}|{self.condition}"


@dataclass
class SurveyItem:
    item_id: str
    meme_id: str
    subtask: str
    selection_mode: str
    candidates: list[tuple[str, str]]  # (candidate_id, text), order as shown
    source_by_candidate: dict[str, SourceDescriptor] = field(default_factory=dict)
    allow_none: bool = False

    def blinded(self) -> dict:
        """Client payload; never includes source or condition fields."""
        return {
            "schema_version": 1,
            "item_id": self.item_id,
            "meme_id": self.meme_id,
            "subtask": self.subtask,
            "selection_mode": self.selection_mode,
            "candidates": [
                {"candidate_id": cid, "text": text} for cid, text in self.candidates
            ],
            "allow_none": self.allow_none,
        }

    def candidate_ids(self) -> set[str]:
        ids = {cid for cid, _ in self.candidates}
        if self.allow_none:
            ids.add(NONE_CANDIDATE_ID)
        return ids


@dataclass(frozen=True)
class VoteRecord:
    evaluator_id: str
    item_id: str
    selected: tuple[str, ...]
    timestamp: float

    def to_dict(self) -> dict:
        return {
            "evaluator_id": self.evaluator_id,
            "item_id": self.item_id,
            "selected": list(self.selected),
            "timestamp": self.timestamp,
        }


@dataclass
class Tally:
    """Vote counts per (model, condition, subtask) plus per-condition totals."""

    counts: dict[str, dict[str, int]] = field(default_factory=dict)
    abstentions: int = 0

    def increment(self, source_key: str, subtask: str) -> None:
        per = self.counts.setdefault(source_key, {s: 0 for s in SUBTASKS})
        per[subtask] += 1

    def total(self, source_key: str) -> int:
        return sum(self.counts.get(source_key, {}).values())

    def grand_total(self) -> int:
        return sum(self.total(key) for key in self.counts)

    def to_dict(self) -> dict:
        cells = {
            key: {**per, "total": self.total(key)}
            for key, per in sorted(self.counts.items())
        }
        return {
            "schema_version": 1,
            "subtasks": list(SUBTASKS),
            "cells": cells,
            "abstentions": self.abstentions,
            "grand_total": self.grand_total(),
        }


def _candidate_text(record, subtask: str) -> str:
    if subtask == "embedded_text":
        return record.embedded_text
    if subtask == "image_caption":
        return record.image_caption
    if subtask == "meme_caption":
        return record.meme_caption
    if subtask == "literary_devices":
        return ", ".join(sorted(record.literary_devices)) or "None"
    if subtask == "emotions":
        emotions = record.emotions or frozenset()
        return ", ".join(sorted(emotions)) or "None"
    raise ReviewError(f"unknown subtask {subtask!r}")


@dataclass
class Survey:
    survey_id: str
    seed: int
    items: list[SurveyItem]
    sources: list[SourceDescriptor]

    def item(self, item_id: str) -> SurveyItem:
        for item in self.items:
            if item.item_id == item_id:
                return item
        raise ReviewError(f"unknown item {item_id!r}")


class ReviewStore:
    """Surveys, votes, media registry, and the match-verification queue."""

    def __init__(self, data_dir: Optional[str | Path] = None,
                 clock: Callable[[], float] = time.time):
        self._lock = threading.Lock()
        self._clock = clock
        self._surveys: dict[str, Survey] = {}
        self._votes: dict[tuple[str, str, str], VoteRecord] = {}
        self._media: dict[str, str] = {}
        self._data_dir = Path(data_dir) if data_dir is not None else None
        if self._data_dir is not None:
            self._data_dir.mkdir(parents=True, exist_ok=True)
            queue_path = self._data_dir / "match_queue.jsonl"
        else:
            queue_path = None
        self.queue = VerificationQueue(queue_path)
        self._log_path = (
            self._data_dir / "review_events.jsonl" if self._data_dir is not None else None
        )
        if self._log_path is not None and self._log_path.exists():
            self._replay()

    # -- persistence --------------------------------------------------------

    def _append_event(self, event: dict) -> None:
        if self._log_path is None:
            return
        with self._log_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, ensure_ascii=False) + "\n")

    def _replay(self) -> None:
        for line in self._log_path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            event = json.loads(line)
            kind = event.pop("event")
            if kind == "survey":
                self._restore_survey(event)
            elif kind == "vote":
                vote = VoteRecord(
                    evaluator_id=event["evaluator_id"],
                    item_id=event["item_id"],
                    selected=tuple(event["selected"]),
                    timestamp=event["timestamp"],
                )
                key = (event["survey_id"], vote.evaluator_id, vote.item_id)
                self._votes[key] = vote
            elif kind == "media":
                self._media[event["meme_id"]] = event["path"]

    def _restore_survey(self, event: dict) -> None:
        items = []
        for raw in event["items"]:
            items.append(SurveyItem(
                item_id=raw["item_id"],
                meme_id=raw["meme_id"],
                subtask=raw["subtask"],
                selection_mode=raw["selection_mode"],
                candidates=[tuple(c) for c in raw["candidates"]],
                source_by_candidate={
                    cid: SourceDescriptor(src["model"], src["with_context"])
                    for cid, src in raw["sources"].items()
                },
                allow_none=raw["allow_none"],
            ))
        self._surveys[event["survey_id"]] = Survey(
            survey_id=event["survey_id"],
            seed=event["seed"],
            items=items,
            sources=[SourceDescriptor(s["model"], s["with_context"])
                     for s in event["source_list"]],
        )

    def _survey_event(self, survey: Survey) -> dict:
        return {
            "event": "survey",
            "survey_id": survey.survey_id,
            "seed": survey.seed,
            "source_list": [
                {"model": s.model, "with_context": s.with_context} for s in survey.sources
            ],
            "items": [
                {
                    "item_id": item.item_id,
                    "meme_id": item.meme_id,
                    "subtask": item.subtask,
                    "selection_mode": item.selection_mode,
                    "candidates": [list(c) for c in item.candidates],
                    "sources": {
                        cid: {"model": src.model, "with_context": src.with_context}
                        for cid, src in item.source_by_candidate.items()
                    },
                    "allow_none": item.allow_none,
                }
                for item in survey.items
            ],
        }

    # -- surveys -------------------------------------------------------------

    def create_survey(
        self,
        memes: Sequence,
        annotation_sets: Sequence[tuple[SourceDescriptor, Mapping[str, object]]],
        seed: int,
        subtasks: Sequence[str] = SUBTASKS,
    ) -> Survey:
        """One blinded item per (meme, subtask); candidate order seeded.

        ``annotation_sets`` pairs each source condition with its annotation
        records keyed by meme_id; a source missing any survey meme is an
        error naming the gap.
        """
        if len(annotation_sets) < 2:
            raise ReviewError("a survey needs at least two candidate sources")
        for source, records in annotation_sets:
            for meme in memes:
                if meme.meme_id not in records:
                    raise ReviewError(
                        f"source {source.key()!r} has no annotation for "
                        f"meme {meme.meme_id!r}"
                    )
        with self._lock:
            survey_id = f"survey-{len(self._surveys) + 1}"
            items: list[SurveyItem] = []
            for meme in memes:
                for subtask in subtasks:
                    index = len(items)
                    rng = random.Random(f"{seed}:{index}")
                    order = list(range(len(annotation_sets)))
                    rng.shuffle(order)
                    candidates = []
                    source_map = {}
                    for position, source_index in enumerate(order):
                        source, records = annotation_sets[source_index]
                        cid = f"c{position}"
                        candidates.append(
                            (cid, _candidate_text(records[meme.meme_id], subtask))
                        )
                        source_map[cid] = source
                    items.append(SurveyItem(
                        item_id=f"{survey_id}-item-{index}",
                        meme_id=meme.meme_id,
                        subtask=subtask,
                        selection_mode=SINGLE if subtask in SINGLE_MODE_SUBTASKS else MULTI,
                        candidates=candidates,
                        source_by_candidate=source_map,
                        allow_none=subtask in NONE_OPTION_SUBTASKS,
                    ))
                if getattr(meme, "image", None):
                    self._media[meme.meme_id] = str(meme.image)
                    self._append_event({
                        "event": "media", "meme_id": meme.meme_id, "path": str(meme.image),
                    })
            survey = Survey(
                survey_id=survey_id,
                seed=seed,
                items=items,
                sources=[source for source, _ in annotation_sets],
            )
            self._surveys[survey_id] = survey
            self._append_event(self._survey_event(survey))
            return survey

    def survey(self, survey_id: str) -> Survey:
        with self._lock:
            if survey_id not in self._surveys:
                raise ReviewError(f"unknown survey {survey_id!r}")
            return self._surveys[survey_id]

    def next_item(self, survey_id: str, evaluator_id: str) -> Optional[SurveyItem]:
        """First item this evaluator has not answered, or None when done."""
        survey = self.survey(survey_id)
        with self._lock:
            for item in survey.items:
                if (survey_id, evaluator_id, item.item_id) not in self._votes:
                    return item
        return None

    def progress(self, survey_id: str, evaluator_id: str) -> tuple[int, int]:
        survey = self.survey(survey_id)
        with self._lock:
            answered = sum(
                1 for item in survey.items
                if (survey_id, evaluator_id, item.item_id) in self._votes
            )
        return answered, len(survey.items)

    # -- votes ---------------------------------------------------------------

    def _find_survey_for_item(self, item_id: str) -> Survey:
        for survey in self._surveys.values():
            for item in survey.items:
                if item.item_id == item_id:
                    return survey
        raise ReviewError(f"unknown item {item_id!r}")

    def record_vote(self, evaluator_id: str, item_id: str,
                    selected: Sequence[str]) -> VoteRecord:
        """Upsert the evaluator's vote; the event log keeps every version."""
        with self._lock:
            survey = self._find_survey_for_item(item_id)
            item = survey.item(item_id)
            selected = tuple(selected)
            if not selected:
                raise ReviewError("a vote must select at least one candidate")
            unknown = set(selected) - item.candidate_ids()
            if unknown:
                raise ReviewError(f"unknown candidate ids {sorted(unknown)}")
            if len(set(selected)) != len(selected):
                raise ReviewError("duplicate candidate ids in selection")
            if item.selection_mode == SINGLE and len(selected) != 1:
                raise ReviewError(
                    f"item {item_id!r} is single-choice; got {len(selected)} selections"
                )
            if NONE_CANDIDATE_ID in selected and len(selected) > 1:
                raise ReviewError("the none option cannot be combined with candidates")
            vote = VoteRecord(
                evaluator_id=evaluator_id,
                item_id=item_id,
                selected=selected,
                timestamp=self._clock(),
            )
            self._votes[(survey.survey_id, evaluator_id, item_id)] = vote
            self._append_event({"event": "vote", "survey_id": survey.survey_id,
                                **vote.to_dict()})
            return vote

    def tally(self, survey_id: str) -> Tally:
        """Current counts; one increment per selected sourced candidate."""
        survey = self.survey(survey_id)
        tally = Tally()
        for source in survey.sources:
            tally.counts.setdefault(source.key(), {s: 0 for s in SUBTASKS})
        with self._lock:
            votes = [
                vote for (sid, _, _), vote in sorted(self._votes.items())
                if sid == survey_id
            ]
        for vote in votes:
            item = survey.item(vote.item_id)
            for cid in vote.selected:
                if cid == NONE_CANDIDATE_ID:
                    tally.abstentions += 1
                    continue
                source = item.source_by_candidate[cid]
                tally.increment(source.key(), item.subtask)
        return tally

    # -- media and match verification ----------------------------------------

    def register_media(self, meme_id: str, path: str | Path) -> None:
        with self._lock:
            self._media[meme_id] = str(path)
            self._append_event({"event": "media", "meme_id": meme_id, "path": str(path)})

    def media_path(self, meme_id: str) -> str:
        with self._lock:
            if meme_id not in self._media:
                raise ReviewError(f"no media registered for meme {meme_id!r}")
            return self._media[meme_id]

    def match_verdict(self, candidate_key: str, verdict: str, reviewer_id: str = ""):
        if verdict not in ("accept", "reject"):
            raise ReviewError(f"verdict must be accept or reject, got {verdict!r}")
        return self.queue.verdict(candidate_key, verdict == "accept", reviewer_id)

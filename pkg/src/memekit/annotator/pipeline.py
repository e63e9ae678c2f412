"""Annotation orchestration: single memes, three-step labeling, batch runs.

Each annotation carries full provenance (model, prompt, context condition,
timestamp) and the verbatim raw response, so any record can be audited
against what the model actually said. Clock and sleep hooks are injectable:
scripted runs pass a fixed clock and no-op sleeper and become bit-for-bit
reproducible.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

from ..corpus import Corpus, MemeRecord
from .client import Conversation, VlmClient
from .parsing import AnnotationParseError, ParsedAnnotation, parse_annotation
from .prompts import PromptTemplate, render_prompt, split_three_step
from .taxonomy import DEFAULT_TAXONOMY, DeviceTaxonomy

logger = logging.getLogger(__name__)

DEFAULT_RETRIES = 3
DEFAULT_BACKOFF = 1.0

FORMAT_REMINDER = (
    "Your previous answer could not be parsed. Reply again with only a valid "
    "JSON object containing the requested fields."
)


class AnnotationError(Exception):
    def __init__(self, message: str, raw_responses: Sequence[str] = ()):
        super().__init__(message)
        self.raw_responses = list(raw_responses)


@dataclass(frozen=True)
class Provenance:
    model: str
    prompt_id: str
    with_context: bool
    timestamp: float


@dataclass
class AnnotationRecord:
    meme_id: str
    image_caption: str
    embedded_text: str
    meme_caption: str
    literary_devices: frozenset[str]
    provenance: Provenance
    raw_response: str
    emotions: Optional[frozenset[str]] = None
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "meme_id": self.meme_id,
            "image_caption": self.image_caption,
            "embedded_text": self.embedded_text,
            "meme_caption": self.meme_caption,
            "literary_devices": sorted(self.literary_devices),
            "emotions": None if self.emotions is None else sorted(self.emotions),
            "provenance": {
                "model": self.provenance.model,
                "prompt_id": self.provenance.prompt_id,
                "with_context": self.provenance.with_context,
                "timestamp": self.provenance.timestamp,
            },
            "raw_response": self.raw_response,
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, row: dict) -> "AnnotationRecord":
        prov = row["provenance"]
        return cls(
            meme_id=row["meme_id"],
            image_caption=row["image_caption"],
            embedded_text=row["embedded_text"],
            meme_caption=row["meme_caption"],
            literary_devices=frozenset(row["literary_devices"]),
            emotions=None if row.get("emotions") is None else frozenset(row["emotions"]),
            provenance=Provenance(
                model=prov["model"],
                prompt_id=prov["prompt_id"],
                with_context=bool(prov["with_context"]),
                timestamp=float(prov["timestamp"]),
            ),
            raw_response=row["raw_response"],
            flags=tuple(row.get("flags", ())),
        )


# schema field name -> AnnotationRecord attribute
_FIELD_TO_ATTR = {
    "visual elaboration": "image_caption",
    "detected text": "embedded_text",
    "meaning of the meme": "meme_caption",
    "explanation": "meme_caption",
}


def _send_with_retries(
    client: VlmClient,
    image,
    prompt: str,
    template: PromptTemplate,
    vocabulary: Optional[frozenset[str]],
    retries: int,
    backoff: float,
    sleep: Callable[[float], None],
    conversation: Optional[Conversation] = None,
) -> tuple[ParsedAnnotation, list[str]]:
    """Send, parse, and on parse failure retry with a format-reminder turn."""
    raw_responses: list[str] = []
    message = prompt
    for attempt in range(retries + 1):
        raw = client.send(image, message, conversation)
        raw_responses.append(raw)
        try:
            return parse_annotation(raw, template.response_schema, vocabulary), raw_responses
        except AnnotationParseError as exc:
            if attempt == retries:
                raise AnnotationError(
                    f"unparseable response after {retries + 1} attempts: {exc}",
                    raw_responses,
                ) from exc
            logger.info("parse failure (attempt %d), retrying: %s", attempt + 1, exc)
            sleep(backoff * (2 ** attempt))
            if client.supports_multi_turn and conversation is not None:
                message = FORMAT_REMINDER
            else:
                message = f"{prompt}\n\n{FORMAT_REMINDER}"
    raise AssertionError("unreachable")


def annotate_meme(
    meme: MemeRecord,
    template_ctx: Optional[str],
    client: VlmClient,
    template: PromptTemplate,
    retries: int = DEFAULT_RETRIES,
    backoff: float = DEFAULT_BACKOFF,
    taxonomy: DeviceTaxonomy = DEFAULT_TAXONOMY,
    sleep: Callable[[float], None] = time.sleep,
    clock: Callable[[], float] = time.time,
) -> AnnotationRecord:
    """Annotate one meme with a single-turn prompt, retrying parse failures."""
    prompt = render_prompt(template, template_ctx if template.requires_context else None)
    conversation = Conversation() if client.supports_multi_turn else None
    parsed, raw_responses = _send_with_retries(
        client, meme.image, prompt, template, taxonomy.full_set,
        retries, backoff, sleep, conversation,
    )
    fields = parsed.fields
    record = AnnotationRecord(
        meme_id=meme.meme_id,
        image_caption=str(fields.get("visual elaboration", "")),
        embedded_text=str(fields.get("detected text", "")),
        meme_caption=str(fields.get("meaning of the meme", fields.get("explanation", ""))),
        literary_devices=frozenset(parsed.devices()),
        emotions=frozenset(parsed.emotions()) if "emotion" in fields else None,
        provenance=Provenance(
            model=client.model_name,
            prompt_id=template.prompt_id,
            with_context=template.requires_context,
            timestamp=clock(),
        ),
        raw_response=raw_responses[-1],
        flags=tuple(parsed.flags),
    )
    return record


def run_three_step(
    meme: MemeRecord,
    template_ctx: Optional[str],
    client: VlmClient,
    template: PromptTemplate,
    taxonomy: DeviceTaxonomy = DEFAULT_TAXONOMY,
    active_set: Optional[frozenset[str]] = None,
    retries: int = DEFAULT_RETRIES,
    backoff: float = DEFAULT_BACKOFF,
    sleep: Callable[[float], None] = time.sleep,
) -> tuple[set[str], tuple[str, ...], str]:
    """Run the staged labeling conversation; returns (devices, flags, raw).

    The three reasoning stages run in order within one conversation, then the
    final JSON answer is requested, parsed, and intersected with the active
    label set. An empty final set is a valid outcome, not an error.
    """
    if not client.supports_multi_turn:
        raise AnnotationError("three-step labeling needs a multi-turn client")
    if not template.multi_turn:
        raise AnnotationError(f"prompt {template.prompt_id!r} is not a staged prompt")
    active = active_set if active_set is not None else taxonomy.reduced_set
    body = render_prompt(template, template_ctx if template.requires_context else None)
    turns = split_three_step(body)
    conversation = Conversation()
    for stage in turns[:-1]:
        client.send(meme.image, stage, conversation)
    parsed, raw_responses = _send_with_retries(
        client, meme.image, turns[-1], template, None,
        retries, backoff, sleep, conversation,
    )
    words = set(parsed.devices())
    kept = words & active
    flags = list(parsed.flags)
    for word in sorted(words - active):
        flags.append(f"outside_active_set:{word}")
    return kept, tuple(flags), raw_responses[-1]


@dataclass
class BatchResult:
    records: list[AnnotationRecord] = field(default_factory=list)
    failures: list[tuple[str, str]] = field(default_factory=list)  # (meme_id, error)


def annotate_corpus(
    corpus: Corpus,
    client: VlmClient,
    template: PromptTemplate,
    out_path: Optional[str | Path] = None,
    limit: Optional[int] = None,
    resume: bool = False,
    max_in_flight: int = 4,
    retries: int = DEFAULT_RETRIES,
    backoff: float = DEFAULT_BACKOFF,
    taxonomy: DeviceTaxonomy = DEFAULT_TAXONOMY,
    sleep: Callable[[float], None] = time.sleep,
    clock: Callable[[], float] = time.time,
) -> BatchResult:
    """Annotate a corpus with a bounded number of in-flight requests.

    Results are collected order-independently and appended to ``out_path``
    sorted by meme_id, so a finished run is byte-identical regardless of
    scheduling. ``resume`` skips memes already present in the output file.
    """
    contexts = {t.template_id: t.about_context for t in corpus.templates}
    done: set[str] = set()
    if resume and out_path is not None and Path(out_path).exists():
        for line in Path(out_path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                done.add(json.loads(line)["meme_id"])
    todo = [m for m in corpus.memes if m.meme_id not in done]
    if limit is not None:
        todo = todo[:limit]

    result = BatchResult()

    def work(meme: MemeRecord) -> AnnotationRecord:
        return annotate_meme(
            meme, contexts[meme.template_id], client, template,
            retries=retries, backoff=backoff, taxonomy=taxonomy,
            sleep=sleep, clock=clock,
        )

    workers = max_in_flight if getattr(client, "concurrency_safe", False) else 1
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = {pool.submit(work, meme): meme for meme in todo}
        for future, meme in futures.items():
            try:
                result.records.append(future.result())
            except Exception as exc:  # keep the batch going; failures are audited
                logger.error("annotation failed for %s: %s", meme.meme_id, exc)
                result.failures.append((meme.meme_id, str(exc)))

    result.records.sort(key=lambda r: r.meme_id)
    if out_path is not None:
        path = Path(out_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("a", encoding="utf-8") as fh:
            for record in result.records:
                fh.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
    return result


def load_annotations(path: str | Path) -> dict[str, AnnotationRecord]:
    records = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            record = AnnotationRecord.from_dict(json.loads(line))
            records[record.meme_id] = record
    return records


def save_annotations(records: Iterable[AnnotationRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for record in sorted(records, key=lambda r: r.meme_id):
            fh.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")

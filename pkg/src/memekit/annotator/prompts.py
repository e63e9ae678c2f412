"""Prompt registry: versioned prompt texts and template-context rendering.

Prompts ship as text files next to this module. Entries that ground the model
in template knowledge carry exactly one ``{}`` slot for the knowledge-base
"About" text; a ``_no_context`` twin with the slot removed exists for every
such entry so both survey conditions can run.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

ZERO_SHOT_5TASK = "zero_shot_5task"
THREE_STEP_REASONING = "three_step_reasoning"
FEW_SHOT = "few_shot"
FIGMEMES_BASELINE = "figmemes_baseline"
KINDS = (ZERO_SHOT_5TASK, THREE_STEP_REASONING, FEW_SHOT, FIGMEMES_BASELINE)

CONTEXT_SENTENCE = "Here is the context of the meme: {}. "
CONTEXT_SLOT = "{}"

# schema field -> AnnotationRecord attribute
FIVE_TASK_SCHEMA = (
    "visual elaboration",
    "detected text",
    "meaning of the meme",
    "literary device",
    "emotion",
)
BASELINE_SCHEMA = ("detected text", "explanation", "literary device")
DEVICE_ONLY_SCHEMA = ("literary device",)

LIST_FIELDS = frozenset({"literary device", "emotion"})


class PromptError(Exception):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    prompt_id: str
    kind: str
    body: str
    response_schema: tuple[str, ...]
    multi_turn: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PromptError(f"unknown prompt kind {self.kind!r}")
        if not self.response_schema:
            raise PromptError(f"prompt {self.prompt_id!r} has an empty response schema")
        slots = self.body.count(CONTEXT_SLOT)
        if slots > 1:
            raise PromptError(
                f"prompt {self.prompt_id!r} has {slots} context slots, at most 1 allowed"
            )

    @property
    def requires_context(self) -> bool:
        return CONTEXT_SLOT in self.body


def render_prompt(template: PromptTemplate, context: str | None = None) -> str:
    """Substitute the context slot verbatim; no other mutation."""
    if template.requires_context:
        if context is None:
            raise PromptError(
                f"prompt {template.prompt_id!r} requires template context"
            )
        return template.body.replace(CONTEXT_SLOT, context, 1)
    if context is not None:
        raise PromptError(
            f"prompt {template.prompt_id!r} takes no template context"
        )
    return template.body


def _read(name: str) -> str:
    return (resources.files("memekit.annotator") / "prompts" / name).read_text("utf-8")


def _strip_context(body: str) -> str:
    if body.startswith(CONTEXT_SENTENCE):
        return body[len(CONTEXT_SENTENCE):]
    return body.replace(CONTEXT_SENTENCE.rstrip() + "\n\n", "", 1)


def load_registry() -> dict[str, PromptTemplate]:
    entries: dict[str, PromptTemplate] = {}

    def add(template: PromptTemplate) -> None:
        entries[template.prompt_id] = template

    zero_shot = _read("zero_shot_5task.txt")
    add(PromptTemplate(ZERO_SHOT_5TASK, ZERO_SHOT_5TASK, zero_shot, FIVE_TASK_SCHEMA))
    add(PromptTemplate("zero_shot_5task_no_context", ZERO_SHOT_5TASK,
                       _strip_context(zero_shot), FIVE_TASK_SCHEMA))
    compact = _read("zero_shot_5task_compact.txt")
    add(PromptTemplate("zero_shot_5task_compact", ZERO_SHOT_5TASK, compact, FIVE_TASK_SCHEMA))
    add(PromptTemplate("zero_shot_5task_compact_no_context", ZERO_SHOT_5TASK,
                       _strip_context(compact), FIVE_TASK_SCHEMA))

    add(PromptTemplate(FIGMEMES_BASELINE, FIGMEMES_BASELINE,
                       _read("figmemes_baseline.txt"), BASELINE_SCHEMA))
    add(PromptTemplate(FEW_SHOT, FEW_SHOT, _read("few_shot.txt"), DEVICE_ONLY_SCHEMA))

    for stem in ("three_step_reasoning", "three_step_reduced"):
        base = _read(f"{stem}.txt")
        add(PromptTemplate(stem, THREE_STEP_REASONING,
                           CONTEXT_SENTENCE.rstrip() + "\n\n" + base,
                           DEVICE_ONLY_SCHEMA, multi_turn=True))
        add(PromptTemplate(f"{stem}_no_context", THREE_STEP_REASONING, base,
                           DEVICE_ONLY_SCHEMA, multi_turn=True))
    return entries


_REGISTRY: dict[str, PromptTemplate] | None = None


def get_prompt(prompt_id: str) -> PromptTemplate:
    global _REGISTRY
    if _REGISTRY is None:
        _REGISTRY = load_registry()
    try:
        return _REGISTRY[prompt_id]
    except KeyError:
        raise PromptError(
            f"unknown prompt {prompt_id!r}; available: {sorted(_REGISTRY)}"
        ) from None


THREE_STEP_MARKERS = (
    "<Multiple Choice>",
    "<Extraction of answer>",
    "<Choice by choice comparison>",
    "Finally output your answer",
)


def split_three_step(body: str) -> list[str]:
    """Split a rendered three-step prompt into its four conversation turns."""
    positions = []
    for marker in THREE_STEP_MARKERS:
        pos = body.find(marker)
        if pos < 0:
            raise PromptError(f"three-step prompt is missing marker {marker!r}")
        positions.append(pos)
    if positions != sorted(positions):
        raise PromptError("three-step markers are out of order")
    # first turn carries the header plus the multiple-choice question
    turns = [body[: positions[1]].rstrip()]
    for start, end in zip(positions[1:], positions[2:] + [len(body)]):
        turns.append(body[start:end].rstrip())
    return turns

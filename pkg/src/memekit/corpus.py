"""Templatic-meme corpus: loading, validation, filtering, splitting, statistics.

A corpus is two JSONL manifests: one meme record per line plus a sibling
template manifest carrying the knowledge-base "About" context used to ground
annotation prompts. All operations are pure transforms over immutable
records, so corpora can be shared freely between threads.
"""

from __future__ import annotations

import json
import random
import re
import string
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence

Tokenizer = Callable[[str], list[str]]

MEME_FIELDS = ("meme_id", "template_id", "title", "image", "embedded_text")
TEMPLATE_FIELDS = ("template_id", "name")
POPULARITY_FIELDS = ("views", "upvotes", "downvotes")

TRAIN = "train"
VALIDATION = "validation"


class CorpusError(Exception):
    """Raised for malformed manifests, duplicate ids, or dangling references."""


def whitespace_tokenize(text: str) -> list[str]:
    return text.split()


@dataclass(frozen=True)
class TemplateRecord:
    template_id: str
    name: str
    about_context: str = ""
    base_image: str = ""

    def __post_init__(self):
        if not self.name:
            raise CorpusError(f"template {self.template_id!r} has an empty name")


@dataclass(frozen=True)
class MemeRecord:
    meme_id: str
    template_id: str
    title: str
    image: str
    embedded_text: str
    views: Optional[int] = None
    upvotes: Optional[int] = None
    downvotes: Optional[int] = None

    def __post_init__(self):
        if not self.image:
            raise CorpusError(f"meme {self.meme_id!r} has an empty image reference")
        for name in POPULARITY_FIELDS:
            value = getattr(self, name)
            if value is not None and value < 0:
                raise CorpusError(f"meme {self.meme_id!r}: {name} must be non-negative")


@dataclass(frozen=True)
class Corpus:
    templates: tuple[TemplateRecord, ...]
    memes: tuple[MemeRecord, ...]
    split_assignment: Optional[Mapping[str, str]] = None

    def __post_init__(self):
        template_ids = [t.template_id for t in self.templates]
        dup = _first_duplicate(template_ids)
        if dup is not None:
            raise CorpusError(f"duplicate template_id {dup!r}")
        meme_ids = [m.meme_id for m in self.memes]
        dup = _first_duplicate(meme_ids)
        if dup is not None:
            raise CorpusError(f"duplicate meme_id {dup!r}")
        known = set(template_ids)
        for meme in self.memes:
            if meme.template_id not in known:
                raise CorpusError(
                    f"meme {meme.meme_id!r} references unknown template "
                    f"{meme.template_id!r}"
                )
        if self.split_assignment is not None:
            assigned = set(self.split_assignment)
            if assigned != set(meme_ids):
                missing = sorted(set(meme_ids) - assigned)[:3]
                extra = sorted(assigned - set(meme_ids))[:3]
                raise CorpusError(
                    f"split assignment does not partition the memes "
                    f"(missing={missing}, unknown={extra})"
                )
            bad = {s for s in self.split_assignment.values() if s not in (TRAIN, VALIDATION)}
            if bad:
                raise CorpusError(f"invalid split labels: {sorted(bad)}")

    def template_by_id(self, template_id: str) -> TemplateRecord:
        for t in self.templates:
            if t.template_id == template_id:
                return t
        raise KeyError(template_id)

    def memes_by_template(self) -> dict[str, list[MemeRecord]]:
        grouped: dict[str, list[MemeRecord]] = {t.template_id: [] for t in self.templates}
        for meme in self.memes:
            grouped[meme.template_id].append(meme)
        return grouped

    @property
    def counts(self) -> tuple[int, int]:
        return (len(self.templates), len(self.memes))


@dataclass
class CorpusStats:
    """Histograms over a corpus, optionally joined with annotations.

    ``token_histograms`` maps a text field name to ``{token_count: n_items}``;
    ``device_histogram`` counts literary-device labels. Sum of any histogram's
    values equals the number of items counted for it.
    """

    n_templates: int
    n_memes: int
    per_template_counts: dict[str, int] = field(default_factory=dict)
    token_histograms: dict[str, dict[int, int]] = field(default_factory=dict)
    device_histogram: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_templates": self.n_templates,
            "n_memes": self.n_memes,
            "per_template_counts": dict(sorted(self.per_template_counts.items())),
            "token_histograms": {
                name: {str(k): v for k, v in sorted(hist.items())}
                for name, hist in self.token_histograms.items()
            },
            "device_histogram": dict(sorted(self.device_histogram.items())),
        }


def _first_duplicate(items: Iterable[str]) -> Optional[str]:
    seen = set()
    for item in items:
        if item in seen:
            return item
        seen.add(item)
    return None


def _load_jsonl(path: Path, required: Sequence[str], kind: str) -> list[dict]:
    rows = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}: malformed {kind} row at line {line_no}: {exc}") from exc
            if not isinstance(row, dict):
                raise CorpusError(f"{path}: {kind} row at line {line_no} is not an object")
            missing = [name for name in required if name not in row]
            if missing:
                raise CorpusError(
                    f"{path}: {kind} row at line {line_no} missing fields {missing}"
                )
            rows.append(row)
    return rows


def load_corpus(path: str | Path) -> Corpus:
    """Load a corpus from a directory or a meme manifest file.

    A directory must contain ``memes.jsonl`` and ``templates.jsonl``; a file
    path is taken as the meme manifest with ``templates.jsonl`` alongside it.
    """
    path = Path(path)
    if path.is_dir():
        meme_path = path / "memes.jsonl"
        template_path = path / "templates.jsonl"
    else:
        meme_path = path
        template_path = path.parent / "templates.jsonl"
    if not meme_path.exists():
        raise CorpusError(f"meme manifest not found: {meme_path}")
    if not template_path.exists():
        raise CorpusError(f"template manifest not found: {template_path}")

    templates = []
    for row in _load_jsonl(template_path, TEMPLATE_FIELDS, "template"):
        templates.append(
            TemplateRecord(
                template_id=str(row["template_id"]),
                name=str(row["name"]),
                about_context=str(row.get("about_context", "")),
                base_image=str(row.get("base_image", "")),
            )
        )
    memes = []
    for row in _load_jsonl(meme_path, MEME_FIELDS, "meme"):
        popularity = {}
        for name in POPULARITY_FIELDS:
            value = row.get(name)
            popularity[name] = int(value) if value is not None else None
        memes.append(
            MemeRecord(
                meme_id=str(row["meme_id"]),
                template_id=str(row["template_id"]),
                title=str(row["title"]),
                image=str(row["image"]),
                embedded_text=str(row["embedded_text"]),
                **popularity,
            )
        )
    return Corpus(templates=tuple(templates), memes=tuple(memes))


def save_corpus(corpus: Corpus, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with (directory / "templates.jsonl").open("w", encoding="utf-8") as fh:
        for t in corpus.templates:
            fh.write(json.dumps({
                "template_id": t.template_id,
                "name": t.name,
                "about_context": t.about_context,
                "base_image": t.base_image,
            }, ensure_ascii=False) + "\n")
    with (directory / "memes.jsonl").open("w", encoding="utf-8") as fh:
        for m in corpus.memes:
            fh.write(json.dumps({
                "meme_id": m.meme_id,
                "template_id": m.template_id,
                "title": m.title,
                "image": m.image,
                "embedded_text": m.embedded_text,
                "views": m.views,
                "upvotes": m.upvotes,
                "downvotes": m.downvotes,
            }, ensure_ascii=False) + "\n")
    if corpus.split_assignment is not None:
        with (directory / "split.json").open("w", encoding="utf-8") as fh:
            json.dump(dict(sorted(corpus.split_assignment.items())), fh, indent=0)


_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def _normalize_title(text: str) -> str:
    # Case-insensitive, punctuation-stripped, whitespace-collapsed comparison
    # key for "title differs from the template name".
    return re.sub(r"\s+", " ", text.translate(_PUNCT_TABLE)).strip().lower()


def meme_qualifies(
    meme: MemeRecord,
    template: TemplateRecord,
    min_text_tokens: int,
    tokenizer: Tokenizer = whitespace_tokenize,
) -> bool:
    if len(tokenizer(meme.embedded_text)) < min_text_tokens:
        return False
    return _normalize_title(meme.title) != _normalize_title(template.name)


def filter_corpus(
    corpus: Corpus,
    min_instances: int = 150,
    min_text_tokens: int = 1,
    top_k_templates: Optional[int] = 50,
    tokenizer: Tokenizer = whitespace_tokenize,
) -> Corpus:
    """Keep templates with enough qualifying instances, then the top-k of them.

    A meme qualifies iff its embedded text has at least ``min_text_tokens``
    tokens and its title differs from the template name. Qualification only
    drives template selection: all memes of a retained template are kept, so
    the filter is idempotent and the zero-threshold filter is the identity.
    ``top_k_templates=None`` disables the top-k cut; ties on qualifying count
    break by template_id ascending.
    """
    if min_instances < 0 or min_text_tokens < 0:
        raise ValueError("thresholds must be non-negative")
    if top_k_templates is not None and top_k_templates < 0:
        raise ValueError("top_k_templates must be non-negative")

    by_template = {t.template_id: t for t in corpus.templates}
    qualifying: Counter[str] = Counter({tid: 0 for tid in by_template})
    for meme in corpus.memes:
        if meme_qualifies(meme, by_template[meme.template_id], min_text_tokens, tokenizer):
            qualifying[meme.template_id] += 1

    kept = [tid for tid, n in qualifying.items() if n >= min_instances]
    kept.sort(key=lambda tid: (-qualifying[tid], tid))
    if top_k_templates is not None:
        kept = kept[:top_k_templates]
    kept_set = set(kept)

    templates = tuple(t for t in corpus.templates if t.template_id in kept_set)
    memes = tuple(m for m in corpus.memes if m.template_id in kept_set)
    split = None
    if corpus.split_assignment is not None:
        split = {m.meme_id: corpus.split_assignment[m.meme_id] for m in memes}
    return Corpus(templates=templates, memes=memes, split_assignment=split)


def split_corpus(corpus: Corpus, validation_fraction: float, seed: int) -> Corpus:
    """Assign memes to train/validation, stratified by template.

    Each template contributes round(fraction * n_t) validation memes, chosen
    by a seeded shuffle of that template's memes; the result is a new corpus
    with a total split assignment. Deterministic for a given (corpus,
    fraction, seed).
    """
    if not 0 <= validation_fraction < 1:
        raise ValueError(f"validation_fraction must be in [0, 1), got {validation_fraction}")
    assignment: dict[str, str] = {}
    grouped = corpus.memes_by_template()
    for template_id in sorted(grouped):
        ids = sorted(m.meme_id for m in grouped[template_id])
        rng = random.Random(f"{seed}:{template_id}")
        rng.shuffle(ids)
        n_val = round(validation_fraction * len(ids))
        for meme_id in ids[:n_val]:
            assignment[meme_id] = VALIDATION
        for meme_id in ids[n_val:]:
            assignment[meme_id] = TRAIN
    return replace(corpus, split_assignment=assignment)


def compute_stats(
    corpus: Corpus,
    annotations: Optional[Mapping[str, "object"]] = None,
    tokenizer: Tokenizer = whitespace_tokenize,
) -> CorpusStats:
    """Token-length and label histograms over the corpus.

    ``annotations`` maps meme_id to a record exposing ``image_caption``,
    ``meme_caption``, and ``literary_devices``; when present their histograms
    are joined in.
    """
    per_template = {t.template_id: 0 for t in corpus.templates}
    token_hists: dict[str, Counter] = {
        "title": Counter(),
        "embedded_text": Counter(),
    }
    device_hist: Counter = Counter()
    if annotations is not None:
        token_hists["image_caption"] = Counter()
        token_hists["meme_caption"] = Counter()
    for meme in corpus.memes:
        per_template[meme.template_id] += 1
        token_hists["title"][len(tokenizer(meme.title))] += 1
        token_hists["embedded_text"][len(tokenizer(meme.embedded_text))] += 1
        if annotations is not None and meme.meme_id in annotations:
            record = annotations[meme.meme_id]
            token_hists["image_caption"][len(tokenizer(record.image_caption))] += 1
            token_hists["meme_caption"][len(tokenizer(record.meme_caption))] += 1
            for device in record.literary_devices:
                device_hist[device] += 1
    return CorpusStats(
        n_templates=len(corpus.templates),
        n_memes=len(corpus.memes),
        per_template_counts=per_template,
        token_histograms={k: dict(v) for k, v in token_hists.items()},
        device_histogram=dict(device_hist),
    )

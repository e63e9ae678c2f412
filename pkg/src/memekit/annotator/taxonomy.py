"""Literary-device taxonomies and the reduction onto the six-label scheme.

Three vocabularies are in play: the full annotation vocabulary, the 12-label
reduced prompt set, and the six-label target scheme. ``mapping`` sends each
mapped source label to its target (or None for labels the reduction drops);
``antithesis`` sits in the contrast group, its only non-None assignment.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

logger = logging.getLogger(__name__)

FULL_DEVICE_SET = frozenset({
    "sarcasm", "allegory", "alliteration", "allusion", "amplification",
    "anagram", "analogy", "anthropomorphism", "antithesis", "chiasmus",
    "circumlocution", "euphemism", "hyperbole", "imagery", "metaphor",
    "onomatopoeia", "oxymoron", "paradox", "personification", "portmanteau",
    "pun", "satire", "simile", "symbolism",
    "irony", "exaggeration", "contrast",
})

REDUCED_DEVICE_SET = frozenset({
    "irony", "sarcasm", "anthropomorphism", "personification", "contrast",
    "paradox", "oxymoron", "metaphor", "simile", "exaggeration",
    "amplification", "allusion",
})

FIGMEMES_SET = frozenset({
    "allusion", "exaggeration", "irony", "anthrop", "metaphor", "contrast",
})

EMOTION_SET = frozenset({
    "fear", "anger", "joy", "sadness", "surprise", "disgust", "guilt",
    "contempt", "shame", "embarrassment", "envy", "jealousy", "love",
    "hate", "interest",
})

FIGMEMES_MAPPING: dict[str, Optional[str]] = {
    "irony": "irony",
    "sarcasm": "irony",
    "anthropomorphism": "anthrop",
    "personification": "anthrop",
    "contrast": "contrast",
    "paradox": "contrast",
    "antithesis": "contrast",
    "oxymoron": "contrast",
    "metaphor": "metaphor",
    "simile": "metaphor",
    "exaggeration": "exaggeration",
    "amplification": "exaggeration",
    "allusion": "allusion",
    "anagram": None,
    "pun": None,
    "allegory": None,
    "alliteration": None,
    "analogy": None,
    "chiasmus": None,
    "circumlocution": None,
    "euphemism": None,
    "imagery": None,
    "onomatopoeia": None,
    "portmanteau": None,
    "symbolism": None,
    "satire": None,
}


@dataclass(frozen=True)
class DeviceTaxonomy:
    full_set: frozenset[str] = FULL_DEVICE_SET
    reduced_set: frozenset[str] = REDUCED_DEVICE_SET
    figmemes_set: frozenset[str] = FIGMEMES_SET
    mapping: Mapping[str, Optional[str]] = field(default_factory=lambda: dict(FIGMEMES_MAPPING))

    def __post_init__(self):
        unmapped = self.reduced_set - set(self.mapping)
        if unmapped:
            raise ValueError(f"reduced-set labels without a mapping: {sorted(unmapped)}")
        bad = {
            label for label in self.reduced_set
            if self.mapping[label] is None or self.mapping[label] not in self.figmemes_set
        }
        if bad:
            raise ValueError(f"reduced-set labels must map into the target set: {sorted(bad)}")


DEFAULT_TAXONOMY = DeviceTaxonomy()


def normalize_device(word: str) -> str:
    return word.strip().lower()


def map_labels(
    devices: Iterable[str],
    taxonomy: DeviceTaxonomy = DEFAULT_TAXONOMY,
) -> set[str]:
    """Image of a device set under the reduction mapping, deduplicated.

    Labels mapping to None vanish; labels missing from the mapping are logged
    and skipped rather than raised, since model output is untrusted.
    """
    out: set[str] = set()
    for device in devices:
        key = normalize_device(device)
        if key not in taxonomy.mapping:
            logger.warning("unknown source label %r skipped in mapping", device)
            continue
        target = taxonomy.mapping[key]
        if target is not None:
            out.add(target)
    return out

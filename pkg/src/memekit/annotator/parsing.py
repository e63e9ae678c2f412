"""Structured extraction from free-form model responses.

Models are asked for JSON but wrap it in prose, code fences, or both; the
parser takes the first well-formed JSON object it can find, checks it against
the prompt's response schema, and records every normalization it had to make
so no coercion is silent.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .prompts import LIST_FIELDS


class AnnotationParseError(Exception):
    pass


_FENCE_RE = re.compile(r"```[a-zA-Z0-9_-]*\n?|```")


def extract_first_json(raw: str) -> dict:
    """First well-formed JSON object in raw text, tolerating fences and prose."""
    text = _FENCE_RE.sub("", raw)
    decoder = json.JSONDecoder()
    for start in range(len(text)):
        if text[start] != "{":
            continue
        try:
            obj, _ = decoder.raw_decode(text[start:])
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    raise AnnotationParseError("no JSON object found in response")


@dataclass
class ParsedAnnotation:
    fields: dict[str, object]
    flags: list[str] = field(default_factory=list)

    def devices(self) -> list[str]:
        return list(self.fields.get("literary device", []))

    def emotions(self) -> Optional[list[str]]:
        value = self.fields.get("emotion")
        return None if value is None else list(value)


def _normalize_key(key: str) -> str:
    return re.sub(r"\s+", " ", key).strip().lower()


def _coerce_word_list(value, field_name: str, flags: list[str]) -> list[str]:
    if isinstance(value, str):
        flags.append(f"coerced_scalar:{field_name}")
        value = [value]
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise AnnotationParseError(
            f"field {field_name!r} must be a string or list of strings"
        )
    words = [w.strip().lower() for w in value if w.strip()]
    return [w for w in words if w != "none"]


def parse_annotation(
    raw: str,
    schema: Iterable[str],
    device_vocabulary: Optional[frozenset[str]] = None,
) -> ParsedAnnotation:
    """Validate a raw response against a schema and normalize its fields.

    Scalar answers to list-valued fields are coerced to one-element lists
    (flagged), and device words outside the given vocabulary are retained but
    flagged for review.
    """
    obj = extract_first_json(raw)
    normalized = {_normalize_key(k): v for k, v in obj.items()}
    flags: list[str] = []
    fields: dict[str, object] = {}
    for name in schema:
        if name not in normalized:
            raise AnnotationParseError(f"required field {name!r} missing from response")
        value = normalized[name]
        if name in LIST_FIELDS:
            fields[name] = _coerce_word_list(value, name, flags)
        else:
            if not isinstance(value, str):
                raise AnnotationParseError(f"field {name!r} must be a string")
            fields[name] = value
    if device_vocabulary is not None:
        for word in fields.get("literary device", []):
            if word not in device_vocabulary:
                flags.append(f"unknown_device:{word}")
    return ParsedAnnotation(fields=fields, flags=flags)

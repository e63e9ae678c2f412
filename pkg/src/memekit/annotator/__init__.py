from .client import Conversation, OpenAiCompatClient, ScriptedVlmClient, VlmClient, VlmClientError
from .parsing import AnnotationParseError, ParsedAnnotation, extract_first_json, parse_annotation
from .pipeline import (
    AnnotationError,
    AnnotationRecord,
    BatchResult,
    Provenance,
    annotate_corpus,
    annotate_meme,
    load_annotations,
    run_three_step,
    save_annotations,
)
from .prompts import (
    PromptError,
    PromptTemplate,
    get_prompt,
    load_registry,
    render_prompt,
    split_three_step,
)
from .taxonomy import (
    DEFAULT_TAXONOMY,
    EMOTION_SET,
    FIGMEMES_MAPPING,
    FIGMEMES_SET,
    FULL_DEVICE_SET,
    REDUCED_DEVICE_SET,
    DeviceTaxonomy,
    map_labels,
)

__all__ = [
    "AnnotationError",
    "AnnotationParseError",
    "AnnotationRecord",
    "BatchResult",
    "Conversation",
    "DEFAULT_TAXONOMY",
    "DeviceTaxonomy",
    "EMOTION_SET",
    "FIGMEMES_MAPPING",
    "FIGMEMES_SET",
    "FULL_DEVICE_SET",
    "OpenAiCompatClient",
    "ParsedAnnotation",
    "PromptError",
    "PromptTemplate",
    "Provenance",
    "REDUCED_DEVICE_SET",
    "ScriptedVlmClient",
    "VlmClient",
    "VlmClientError",
    "annotate_corpus",
    "annotate_meme",
    "extract_first_json",
    "get_prompt",
    "load_annotations",
    "load_registry",
    "map_labels",
    "parse_annotation",
    "render_prompt",
    "run_three_step",
    "save_annotations",
]

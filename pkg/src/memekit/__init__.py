"""memekit: desk-scale toolkit for templatic-meme corpora.

Pipeline stages: corpus ingestion and filtering, knowledge-grounded VLM
annotation, two-stage template matching with manual verification,
contrastive fine-tuning of an image-text encoder, bidirectional meme/text
retrieval evaluation, text-generation metrics, and a blinded human-review
service.
"""

from .config import VERSION

__version__ = VERSION

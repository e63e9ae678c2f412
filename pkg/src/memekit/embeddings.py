"""Encoders and embedding stores shared by matching, retrieval, and training.

Two deterministic test encoders ship with the toolkit so every downstream
pipeline runs without model weights: a character-n-gram hashing encoder (text
and string image references) and a pixel-projection encoder (real image
content). Stores persist as raw little-endian float32 plus a JSON sidecar,
so round-trips are bit-exact and language-neutral.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Protocol, Sequence, Union

import numpy as np

logger = logging.getLogger(__name__)

ImageLike = Union[str, Path, np.ndarray]

NORM_TOLERANCE = 1e-5


class EmbeddingError(Exception):
    pass


class StoreFormatError(EmbeddingError):
    """Corrupt payload or sidecar/payload disagreement."""


class Encoder(Protocol):
    """Uniform interface over image and text embedding backends."""

    name: str
    dimension: int
    max_text_tokens: Optional[int]
    trainable: bool

    def encode_texts(self, texts: Sequence[str]) -> np.ndarray: ...

    def encode_images(self, images: Sequence[ImageLike]) -> np.ndarray: ...


@dataclass(frozen=True)
class EmbeddingStore:
    ids: tuple[str, ...]
    vectors: np.ndarray  # float32, shape (len(ids), dimension)
    normalized: bool
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.vectors.ndim != 2:
            raise EmbeddingError("vectors must be a 2-D matrix")
        if len(self.ids) != self.vectors.shape[0]:
            raise EmbeddingError(
                f"{len(self.ids)} ids but {self.vectors.shape[0]} vector rows"
            )
        if self.vectors.dtype != np.float32:
            object.__setattr__(self, "vectors", self.vectors.astype(np.float32))
        if self.normalized:
            norms = np.linalg.norm(self.vectors, axis=1)
            if norms.size and np.max(np.abs(norms - 1.0)) > NORM_TOLERANCE:
                worst = self.ids[int(np.argmax(np.abs(norms - 1.0)))]
                raise EmbeddingError(f"store marked normalized but row {worst!r} is not")

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]

    def row(self, item_id: str) -> np.ndarray:
        return self.vectors[self.ids.index(item_id)]


def _stable_digest(data: str) -> bytes:
    return hashlib.sha1(data.encode("utf-8")).digest()


class HashEncoder:
    """Character-n-gram hashing onto the unit sphere, fully deterministic.

    Image references are encoded as their reference string, which lets tests
    construct corpora where a meme and its caption collide in embedding space.
    """

    def __init__(self, dimension: int = 64, seed: int = 0, max_text_tokens: Optional[int] = 77,
                 ngram_sizes: Sequence[int] = (1, 2, 3)):
        self.name = f"hash-{dimension}-s{seed}"
        self.dimension = dimension
        self.seed = seed
        self.max_text_tokens = max_text_tokens
        self.ngram_sizes = tuple(ngram_sizes)
        self.trainable = False

    def _encode_one(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension, dtype=np.float64)
        padded = f"^{text}$"
        for n in self.ngram_sizes:
            for i in range(max(len(padded) - n + 1, 0)):
                digest = _stable_digest(f"{self.seed}|{n}|{padded[i:i + n]}")
                index = int.from_bytes(digest[:4], "little") % self.dimension
                sign = 1.0 if digest[4] % 2 == 0 else -1.0
                vec[index] += sign
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            vec[0] = 1.0
            norm = 1.0
        return (vec / norm).astype(np.float32)

    def _truncate(self, text: str) -> str:
        if self.max_text_tokens is None:
            return text
        tokens = text.split()
        if len(tokens) <= self.max_text_tokens:
            return text
        logger.warning(
            "truncating text of %d tokens to max_text_tokens=%d",
            len(tokens), self.max_text_tokens,
        )
        return " ".join(tokens[: self.max_text_tokens])

    def encode_texts(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack([self._encode_one(self._truncate(t)) for t in texts])

    def encode_images(self, images: Sequence[ImageLike]) -> np.ndarray:
        return np.stack([self._encode_one(str(ref)) for ref in images])


def load_image_array(image: ImageLike) -> np.ndarray:
    """Image reference to a grayscale float array in [0, 1]."""
    if isinstance(image, np.ndarray):
        arr = image.astype(np.float64)
        if arr.ndim == 3:
            arr = arr.mean(axis=2)
        if arr.max() > 1.0:
            arr = arr / 255.0
        return arr
    path = Path(image)
    if not path.exists():
        raise EmbeddingError(f"image not found: {path}")
    from PIL import Image

    with Image.open(path) as img:
        return np.asarray(img.convert("L"), dtype=np.float64) / 255.0


class PixelEncoder:
    """Linear projection of mean-pooled pixels; locality-preserving by design.

    Small pixel edits (a text overlay) move the embedding a little, distinct
    base images move it a lot, which is what two-stage template matching
    needs. Texts go through the same hashing scheme as :class:`HashEncoder`.
    """

    def __init__(self, dimension: int = 32, grid: int = 8, seed: int = 0,
                 max_text_tokens: Optional[int] = 77):
        self.name = f"pixel-{dimension}-g{grid}-s{seed}"
        self.dimension = dimension
        self.grid = grid
        self.seed = seed
        self.max_text_tokens = max_text_tokens
        self.trainable = False
        rng = np.random.default_rng(seed)
        self._projection = rng.standard_normal((grid * grid, dimension)) / np.sqrt(grid * grid)
        self._text_encoder = HashEncoder(dimension=dimension, seed=seed,
                                         max_text_tokens=max_text_tokens)

    def _pool(self, arr: np.ndarray) -> np.ndarray:
        h, w = arr.shape
        if h < self.grid or w < self.grid:
            raise EmbeddingError(f"image {arr.shape} smaller than pooling grid {self.grid}")
        cells = np.zeros((self.grid, self.grid), dtype=np.float64)
        row_edges = np.linspace(0, h, self.grid + 1, dtype=int)
        col_edges = np.linspace(0, w, self.grid + 1, dtype=int)
        for i in range(self.grid):
            for j in range(self.grid):
                cells[i, j] = arr[row_edges[i]:row_edges[i + 1],
                                  col_edges[j]:col_edges[j + 1]].mean()
        return cells.reshape(-1)

    def encode_images(self, images: Sequence[ImageLike]) -> np.ndarray:
        rows = [self._pool(load_image_array(img)) @ self._projection for img in images]
        return np.stack(rows).astype(np.float32)

    def encode_texts(self, texts: Sequence[str]) -> np.ndarray:
        return self._text_encoder.encode_texts(texts)


ENCODER_REGISTRY = {
    "hash": HashEncoder,
    "pixel": PixelEncoder,
}


def make_encoder(name: str, **kwargs) -> Encoder:
    try:
        factory = ENCODER_REGISTRY[name]
    except KeyError:
        raise EmbeddingError(
            f"unknown encoder {name!r}; available: {sorted(ENCODER_REGISTRY)}"
        ) from None
    return factory(**kwargs)


def encode(items: Sequence, ids: Sequence[str], modality: str, encoder: Encoder) -> EmbeddingStore:
    """Encode items into an unnormalized store, one row per item, order kept."""
    if len(items) == 0:
        raise EmbeddingError("cannot encode an empty item list")
    if len(items) != len(ids):
        raise EmbeddingError(f"{len(items)} items but {len(ids)} ids")
    if modality == "text":
        vectors = encoder.encode_texts(list(items))
    elif modality == "image":
        vectors = encoder.encode_images(list(items))
    else:
        raise EmbeddingError(f"unknown modality {modality!r}")
    return EmbeddingStore(
        ids=tuple(ids),
        vectors=np.asarray(vectors, dtype=np.float32),
        normalized=False,
        meta={"encoder": encoder.name, "dimension": encoder.dimension, "modality": modality},
    )


def normalize_rows(store: EmbeddingStore) -> EmbeddingStore:
    """Divide each row by its Euclidean norm; errors on zero rows naming the id."""
    norms = np.linalg.norm(store.vectors.astype(np.float64), axis=1)
    zero = np.where(norms == 0.0)[0]
    if zero.size:
        raise EmbeddingError(f"zero-norm row for id {store.ids[int(zero[0])]!r}")
    vectors = (store.vectors.astype(np.float64) / norms[:, None]).astype(np.float32)
    return replace(store, vectors=vectors, normalized=True)


def save_store(store: EmbeddingStore, path: str | Path) -> None:
    """Write ``<path>`` (raw little-endian float32 rows) and ``<path>.json``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = store.vectors.astype("<f4").tobytes(order="C")
    path.write_bytes(payload)
    sidecar = {
        "ids": list(store.ids),
        "encoder": store.meta.get("encoder", ""),
        "dimension": int(store.dimension),
        "modality": store.meta.get("modality", ""),
        "normalized": bool(store.normalized),
    }
    extra = {k: v for k, v in store.meta.items() if k not in sidecar}
    if extra:
        sidecar["extra"] = extra
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2), encoding="utf-8")


def load_store(path: str | Path) -> EmbeddingStore:
    path = Path(path)
    sidecar_path = Path(str(path) + ".json")
    if not path.exists():
        raise StoreFormatError(f"store payload not found: {path}")
    if not sidecar_path.exists():
        raise StoreFormatError(f"store sidecar not found: {sidecar_path}")
    sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
    ids = tuple(sidecar["ids"])
    dimension = int(sidecar["dimension"])
    payload = path.read_bytes()
    if dimension <= 0:
        raise StoreFormatError(f"sidecar declares non-positive dimension {dimension}")
    if len(payload) % 4 != 0:
        raise StoreFormatError(f"corrupt payload: {len(payload)} bytes is not float32-aligned")
    n_floats = len(payload) // 4
    if n_floats != len(ids) * dimension:
        raise StoreFormatError(
            f"payload holds {n_floats} floats but sidecar declares "
            f"{len(ids)} ids x {dimension} dims"
        )
    vectors = np.frombuffer(payload, dtype="<f4").reshape(len(ids), dimension).copy()
    meta = {
        "encoder": sidecar.get("encoder", ""),
        "dimension": dimension,
        "modality": sidecar.get("modality", ""),
    }
    meta.update(sidecar.get("extra", {}))
    return EmbeddingStore(ids=ids, vectors=vectors,
                          normalized=bool(sidecar["normalized"]), meta=meta)

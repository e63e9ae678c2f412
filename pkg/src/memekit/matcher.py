"""Two-stage templatic-meme identification.

Stage 1 treats matching as retrieval over joint image+text embeddings (a raw
concatenation scored with Euclidean distance, or a normalized element-wise
mean scored with cosine distance) under per-method thresholds. Stage 2
re-checks surviving pairs with a perceptual image scorer, and survivors go to
a manual verification queue whose verdicts gate the final export.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .embeddings import EmbeddingStore, ImageLike, load_image_array

CONCAT = "concat"
FUSION = "fusion"
METHODS = (CONCAT, FUSION)

STAGE1_PASS = "stage1_pass"
STAGE2_PASS = "stage2_pass"
VERIFIED = "verified"
REJECTED = "rejected"


class MatcherError(Exception):
    pass


@dataclass(frozen=True)
class MatcherConfig:
    concat_threshold: float = 30.0
    fusion_threshold: float = 1.0
    perceptual_threshold: float = 1.0
    concat_metric: str = "euclidean"
    fusion_metric: str = "cosine"

    def __post_init__(self):
        for name in ("concat_threshold", "fusion_threshold", "perceptual_threshold"):
            if getattr(self, name) < 0:
                raise MatcherError(f"{name} must be non-negative")

    def threshold_for(self, method: str) -> float:
        return self.concat_threshold if method == CONCAT else self.fusion_threshold

    def metric_for(self, method: str) -> str:
        return self.concat_metric if method == CONCAT else self.fusion_metric


@dataclass(frozen=True)
class MatchCandidate:
    instance_id: str
    template_id: str
    stage1_method: str
    stage1_score: float
    stage2_score: Optional[float] = None
    status: str = STAGE1_PASS
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.stage1_score < 0:
            raise MatcherError("stage1_score must be non-negative")
        if self.stage2_score is not None and self.stage2_score < 0:
            raise MatcherError("stage2_score must be non-negative")
        if self.status == STAGE1_PASS and self.stage2_score is not None:
            raise MatcherError("stage1_pass candidates cannot carry a stage2 score")
        if self.status in (STAGE2_PASS, VERIFIED) and self.stage2_score is None:
            raise MatcherError(f"{self.status} candidates must carry a stage2 score")

    @property
    def pair(self) -> tuple[str, str]:
        return (self.instance_id, self.template_id)

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "template_id": self.template_id,
            "stage1_method": self.stage1_method,
            "stage1_score": self.stage1_score,
            "stage2_score": self.stage2_score,
            "status": self.status,
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, row: Mapping) -> "MatchCandidate":
        return cls(
            instance_id=row["instance_id"],
            template_id=row["template_id"],
            stage1_method=row["stage1_method"],
            stage1_score=float(row["stage1_score"]),
            stage2_score=None if row.get("stage2_score") is None else float(row["stage2_score"]),
            status=row.get("status", STAGE1_PASS),
            flags=tuple(row.get("flags", ())),
        )


def joint_embedding(image_vec: np.ndarray, text_vec: np.ndarray, method: str) -> np.ndarray:
    """Combine an image and a text vector of equal dimension into one vector.

    ``concat`` keeps both raw halves; ``fusion`` averages the unit-normalized
    halves and re-normalizes, so fusing a unit vector with itself is identity.
    """
    image_vec = np.asarray(image_vec, dtype=np.float64)
    text_vec = np.asarray(text_vec, dtype=np.float64)
    if image_vec.shape != text_vec.shape or image_vec.ndim != 1:
        raise MatcherError(
            f"joint_embedding needs two equal-length vectors, got "
            f"{image_vec.shape} and {text_vec.shape}"
        )
    if method == CONCAT:
        return np.concatenate([image_vec, text_vec])
    if method == FUSION:
        img_norm = np.linalg.norm(image_vec)
        txt_norm = np.linalg.norm(text_vec)
        if img_norm == 0 or txt_norm == 0:
            raise MatcherError("fusion cannot normalize a zero vector")
        mean = (image_vec / img_norm + text_vec / txt_norm) / 2.0
        mean_norm = np.linalg.norm(mean)
        if mean_norm == 0:
            raise MatcherError("fusion of opposite vectors is degenerate")
        return mean / mean_norm
    raise MatcherError(f"unknown joint method {method!r}; expected one of {METHODS}")


def build_joint_store(
    image_store: EmbeddingStore, text_store: EmbeddingStore, method: str
) -> EmbeddingStore:
    """Pair image and text rows by shared id order into a joint store."""
    if image_store.ids != text_store.ids:
        raise MatcherError("image and text stores must carry identical ids in order")
    rows = [
        joint_embedding(img, txt, method)
        for img, txt in zip(image_store.vectors, text_store.vectors)
    ]
    return EmbeddingStore(
        ids=image_store.ids,
        vectors=np.stack(rows).astype(np.float32),
        normalized=False,
        meta={
            "encoder": image_store.meta.get("encoder", ""),
            "modality": "joint",
            "joint_method": method,
        },
    )


def _distances(queries: np.ndarray, targets: np.ndarray, metric: str) -> np.ndarray:
    q = queries.astype(np.float64)
    t = targets.astype(np.float64)
    if metric == "euclidean":
        diff = q[:, None, :] - t[None, :, :]
        return np.sqrt(np.sum(diff * diff, axis=2))
    if metric == "cosine":
        qn = q / np.linalg.norm(q, axis=1, keepdims=True)
        tn = t / np.linalg.norm(t, axis=1, keepdims=True)
        return 1.0 - qn @ tn.T
    raise MatcherError(f"unknown distance metric {metric!r}")


def stage1_match(
    instances: EmbeddingStore,
    templates: EmbeddingStore,
    method: str,
    threshold: Optional[float] = None,
    config: MatcherConfig = MatcherConfig(),
) -> list[MatchCandidate]:
    """Nearest template per instance; emit a candidate iff distance <= threshold.

    Both stores must have been built with :func:`build_joint_store` using the
    same method. Equidistant templates resolve to the lower template_id.
    """
    if method not in METHODS:
        raise MatcherError(f"unknown method {method!r}")
    for store, role in ((instances, "instances"), (templates, "templates")):
        if store.meta.get("joint_method") != method:
            raise MatcherError(
                f"{role} store was built with method "
                f"{store.meta.get('joint_method')!r}, not {method!r}"
            )
    if len(templates.ids) == 0:
        raise MatcherError("template store is empty")
    if threshold is None:
        threshold = config.threshold_for(method)
    metric = config.metric_for(method)
    dists = _distances(instances.vectors, templates.vectors, metric)
    # clip tiny negatives from cosine rounding
    dists = np.maximum(dists, 0.0)
    candidates = []
    for i, instance_id in enumerate(instances.ids):
        row = dists[i]
        best = min(range(len(templates.ids)), key=lambda j: (row[j], templates.ids[j]))
        if row[best] <= threshold:
            candidates.append(
                MatchCandidate(
                    instance_id=instance_id,
                    template_id=templates.ids[best],
                    stage1_method=method,
                    stage1_score=float(row[best]),
                )
            )
    return candidates


class PixelDifferenceScorer:
    """Deterministic perceptual surrogate: mean absolute pixel gap in [0, 2].

    Stands in for learned perceptual scorers so the matching pipeline and its
    tests never need network weights.
    """

    name = "pixel_diff"

    def __call__(self, image_a: ImageLike, image_b: ImageLike) -> float:
        a = load_image_array(image_a)
        b = load_image_array(image_b)
        if a.shape != b.shape:
            raise MatcherError(f"image shapes differ: {a.shape} vs {b.shape}")
        return float(np.mean(np.abs(a - b)) * 2.0)


class LpipsScorer:
    """Adapter for the learned perceptual similarity scorer.

    Requires the optional ``lpips`` package and its weights; constructing the
    adapter without them raises immediately so pipelines fail fast.
    """

    name = "lpips"

    def __init__(self, net: str = "alex"):
        try:
            import lpips  # type: ignore
            import torch  # type: ignore
        except ImportError as exc:
            raise MatcherError(
                "LpipsScorer needs the 'lpips' and 'torch' packages; "
                "use PixelDifferenceScorer for weight-free runs"
            ) from exc
        self._torch = torch
        self._model = lpips.LPIPS(net=net)

    def __call__(self, image_a: ImageLike, image_b: ImageLike) -> float:
        torch = self._torch

        def to_tensor(img):
            arr = load_image_array(img)
            t = torch.from_numpy(arr).float()[None, None, :, :].repeat(1, 3, 1, 1)
            return t * 2.0 - 1.0

        with torch.no_grad():
            return float(self._model(to_tensor(image_a), to_tensor(image_b)).item())


def stage2_perceptual(
    candidates: Sequence[MatchCandidate],
    scorer: Callable[[ImageLike, ImageLike], float],
    threshold: float,
    instance_images: Mapping[str, ImageLike],
    template_images: Mapping[str, ImageLike],
) -> list[MatchCandidate]:
    """Retain candidates whose perceptual loss is at most the threshold."""
    out = []
    for cand in candidates:
        loss = float(scorer(instance_images[cand.instance_id],
                            template_images[cand.template_id]))
        if loss < 0:
            raise MatcherError(f"scorer returned negative loss {loss} for {cand.pair}")
        if loss <= threshold:
            out.append(replace(cand, stage2_score=loss, status=STAGE2_PASS))
    return out


def merge_pairs(
    list_a: Sequence[MatchCandidate], list_b: Sequence[MatchCandidate]
) -> list[MatchCandidate]:
    """Union on (instance, template); duplicates keep the smaller stage1 score.

    An instance matched to two different templates is kept on both pairs but
    flagged ``conflicted`` for manual verification.
    """
    merged: dict[tuple[str, str], MatchCandidate] = {}
    for cand in list(list_a) + list(list_b):
        prev = merged.get(cand.pair)
        if prev is None or cand.stage1_score < prev.stage1_score:
            merged[cand.pair] = cand
    by_instance: dict[str, set[str]] = {}
    for inst, tmpl in merged:
        by_instance.setdefault(inst, set()).add(tmpl)
    out = []
    for pair in sorted(merged):
        cand = merged[pair]
        if len(by_instance[cand.instance_id]) > 1 and "conflicted" not in cand.flags:
            cand = replace(cand, flags=cand.flags + ("conflicted",))
        out.append(cand)
    return out


class VerificationQueue:
    """Single-writer queue of stage-2 survivors awaiting a human verdict.

    Entries are keyed ``instance::template``; re-enqueueing a known pair is a
    no-op, and verdicts atomically flip status to verified or rejected. State
    persists as one JSONL row per entry when a path is given.
    """

    def __init__(self, path: Optional[str | Path] = None):
        self._path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._entries: dict[str, MatchCandidate] = {}
        if self._path is not None and self._path.exists():
            for line in self._path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    cand = MatchCandidate.from_dict(json.loads(line))
                    self._entries[self.key_for(cand)] = cand

    @staticmethod
    def key_for(cand: MatchCandidate) -> str:
        return f"{cand.instance_id}::{cand.template_id}"

    def _persist(self) -> None:
        if self._path is None:
            return
        self._path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self._path.with_suffix(".tmp")
        with tmp.open("w", encoding="utf-8") as fh:
            for key in sorted(self._entries):
                fh.write(json.dumps(self._entries[key].to_dict()) + "\n")
        tmp.replace(self._path)

    def enqueue(self, candidates: Iterable[MatchCandidate]) -> list[str]:
        """Add stage2_pass candidates; returns keys newly enqueued."""
        added = []
        with self._lock:
            for cand in candidates:
                if cand.status != STAGE2_PASS:
                    raise MatcherError(
                        f"only stage2_pass candidates can be enqueued, got {cand.status!r}"
                    )
                key = self.key_for(cand)
                if key not in self._entries:
                    self._entries[key] = cand
                    added.append(key)
            if added:
                self._persist()
        return added

    def pending(self) -> list[MatchCandidate]:
        with self._lock:
            return [c for _, c in sorted(self._entries.items()) if c.status == STAGE2_PASS]

    def all_entries(self) -> list[MatchCandidate]:
        with self._lock:
            return [c for _, c in sorted(self._entries.items())]

    def get(self, key: str) -> MatchCandidate:
        with self._lock:
            if key not in self._entries:
                raise MatcherError(f"unknown verification entry {key!r}")
            return self._entries[key]

    def verdict(self, key: str, accept: bool, reviewer_id: str = "") -> MatchCandidate:
        with self._lock:
            if key not in self._entries:
                raise MatcherError(f"unknown verification entry {key!r}")
            cand = self._entries[key]
            if cand.status != STAGE2_PASS:
                raise MatcherError(
                    f"entry {key!r} is not pending (status {cand.status!r})"
                )
            flags = cand.flags + ((f"reviewer:{reviewer_id}",) if reviewer_id else ())
            updated = replace(cand, status=VERIFIED if accept else REJECTED, flags=flags)
            self._entries[key] = updated
            self._persist()
            return updated

    def export(self, only_verified: bool = True) -> list[MatchCandidate]:
        with self._lock:
            wanted = (VERIFIED,) if only_verified else (VERIFIED, STAGE2_PASS)
            return [
                c for _, c in sorted(self._entries.items()) if c.status in wanted
            ]


def enqueue_verification(
    candidates: Sequence[MatchCandidate], queue: VerificationQueue
) -> list[str]:
    return queue.enqueue(candidates)


def save_candidates(candidates: Sequence[MatchCandidate], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for cand in candidates:
            fh.write(json.dumps(cand.to_dict()) + "\n")


def load_candidates(path: str | Path) -> list[MatchCandidate]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            out.append(MatchCandidate.from_dict(json.loads(line)))
    return out

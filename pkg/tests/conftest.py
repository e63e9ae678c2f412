import json

import numpy as np
import pytest

from memekit.corpus import Corpus, MemeRecord, TemplateRecord


def write_jsonl(path, rows):
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


@pytest.fixture
def small_corpus_dir(tmp_path):
    """Two templates, four memes, on disk in the manifest format."""
    write_jsonl(tmp_path / "templates.jsonl", [
        {"template_id": "t1", "name": "Futurama Fry", "about_context": "Squint-eyed Fry.",
         "base_image": "fry.png"},
        {"template_id": "t2", "name": "Success Kid", "about_context": "Fist-pumping baby.",
         "base_image": "kid.png"},
    ])
    write_jsonl(tmp_path / "memes.jsonl", [
        {"meme_id": "m1", "template_id": "t1", "title": "monday again",
         "image": "m1.png", "embedded_text": "not sure if tired or just monday",
         "views": 10, "upvotes": 2, "downvotes": 0},
        {"meme_id": "m2", "template_id": "t1", "title": "coffee",
         "image": "m2.png", "embedded_text": "not sure if awake or dreaming"},
        {"meme_id": "m3", "template_id": "t2", "title": "small wins",
         "image": "m3.png", "embedded_text": "fixed the bug on the first try"},
        {"meme_id": "m4", "template_id": "t2", "title": "victory",
         "image": "m4.png", "embedded_text": "tests passed locally and in ci"},
    ])
    return tmp_path


def build_corpus(template_memes: dict[str, list[tuple[str, str, str]]],
                 names: dict[str, str] | None = None) -> Corpus:
    """Corpus from {template_id: [(meme_id, title, embedded_text), ...]}."""
    names = names or {}
    templates = tuple(
        TemplateRecord(template_id=tid, name=names.get(tid, f"Template {tid}"))
        for tid in sorted(template_memes)
    )
    memes = tuple(
        MemeRecord(meme_id=mid, template_id=tid, title=title,
                   image=f"{mid}.png", embedded_text=text)
        for tid in sorted(template_memes)
        for mid, title, text in template_memes[tid]
    )
    return Corpus(templates=templates, memes=memes)


def make_template_image(rng: np.random.Generator, size: int = 64) -> np.ndarray:
    """Smooth-ish random grayscale template in [0, 1]."""
    base = rng.uniform(0.0, 1.0, size=(size // 8, size // 8))
    return np.kron(base, np.ones((8, 8)))


def overlay_text_band(template: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Instance = template plus a noisy caption band across the bottom rows."""
    instance = template.copy()
    band_height = max(template.shape[0] // 8, 4)
    band = rng.choice([0.0, 1.0], size=(band_height, template.shape[1]), p=[0.4, 0.6])
    instance[-band_height:, :] = band
    return instance


def make_pair_task(image_features=24, text_features=24, latent=8,
                   task_seed=42, noise=0.05):
    """Sampler for a learnable linear image-text alignment task.

    One fixed pair of latent->feature projections defines the task; each call
    draws fresh latent points, so train/val/test share structure but not
    samples.
    """
    rng = np.random.default_rng(task_seed)
    image_proj = rng.standard_normal((latent, image_features))
    text_proj = rng.standard_normal((latent, text_features))

    def sample(n, seed):
        r = np.random.default_rng(seed)
        pairs = []
        for _ in range(n):
            z = r.standard_normal(latent)
            pairs.append((
                z @ image_proj + noise * r.standard_normal(image_features),
                z @ text_proj + noise * r.standard_normal(text_features),
            ))
        return pairs

    return sample


# configuration the toy training runs converge under; see test_finetune
TOY_TRAIN_KWARGS = dict(
    warmup_epochs=1, lr_start=1e-3, lr_peak=2e-2, lr_end=1e-5,
    effective_batch=100, micro_batch=50, epochs=5,
)


@pytest.fixture
def synthetic_match_set():
    """10 templates x 5 instances of text-overlaid synthetic images."""
    rng = np.random.default_rng(1234)
    templates = {f"t{i:02d}": make_template_image(rng) for i in range(10)}
    instances = {}
    truth = {}
    for tid, template in templates.items():
        for j in range(5):
            iid = f"{tid}-inst{j}"
            instances[iid] = overlay_text_band(template, rng)
            truth[iid] = tid
    return templates, instances, truth

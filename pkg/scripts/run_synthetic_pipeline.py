"""End-to-end pipeline demo on a fully synthetic corpus.

Builds a small templatic corpus with rendered PNG images, annotates it with
the scripted client, runs two-stage template matching, and finishes with a
bidirectional retrieval report. Everything is seeded; artifacts land in the
output directory.

Usage: python scripts/run_synthetic_pipeline.py [--out OUT_DIR]
"""

import argparse
import json
from pathlib import Path

import numpy as np
from PIL import Image

from memekit import corpus as corpus_mod
from memekit.annotator import ScriptedVlmClient, annotate_corpus, get_prompt
from memekit.embeddings import HashEncoder, PixelEncoder, encode
from memekit.matcher import (
    CONCAT,
    MatcherConfig,
    PixelDifferenceScorer,
    VerificationQueue,
    build_joint_store,
    stage1_match,
    stage2_perceptual,
)
from memekit.retrieval import evaluate


def build_synthetic_corpus(out_dir: Path, n_templates=6, instances_per_template=8,
                           seed=7):
    rng = np.random.default_rng(seed)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    templates = []
    memes = []
    for t in range(n_templates):
        base = np.kron(rng.uniform(size=(8, 8)), np.ones((8, 8)))
        template_path = images_dir / f"template{t}.png"
        Image.fromarray((base * 255).astype(np.uint8)).save(template_path)
        templates.append({
            "template_id": f"t{t}", "name": f"Template {t}",
            "about_context": f"A recurring base image known as Template {t}.",
            "base_image": str(template_path),
        })
        for j in range(instances_per_template):
            inst = base.copy()
            inst[-8:, :] = rng.choice([0.0, 1.0], size=(8, 64), p=[0.4, 0.6])
            inst_path = images_dir / f"t{t}m{j}.png"
            Image.fromarray((inst * 255).astype(np.uint8)).save(inst_path)
            memes.append({
                "meme_id": f"t{t}m{j}", "template_id": f"t{t}",
                "title": f"joke number {j} on template {t}",
                "image": str(inst_path),
                "embedded_text": f"Template {t} overlay gag {j}",
            })
    with (out_dir / "templates.jsonl").open("w") as fh:
        for row in templates:
            fh.write(json.dumps(row) + "\n")
    with (out_dir / "memes.jsonl").open("w") as fh:
        for row in memes:
            fh.write(json.dumps(row) + "\n")
    return corpus_mod.load_corpus(out_dir)


def scripted_annotations(corpus):
    script = {}
    for meme in corpus.memes:
        script[meme.image] = [json.dumps({
            "visual elaboration": f"a base image with a caption band ({meme.meme_id})",
            "detected text": meme.embedded_text,
            "meaning of the meme": f"a joke riffing on {meme.template_id}",
            "literary device": ["irony"],
            "emotion": ["interest"],
        })]
    return ScriptedVlmClient(script)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="artifacts/synthetic_pipeline")
    args = parser.parse_args()
    out_dir = Path(args.out)

    corpus = build_synthetic_corpus(out_dir)
    print(f"corpus: {corpus.counts[0]} templates, {corpus.counts[1]} memes")

    split = corpus_mod.split_corpus(corpus, validation_fraction=0.25, seed=0)
    n_val = sum(1 for v in split.split_assignment.values() if v == "validation")
    print(f"split: {len(split.memes) - n_val} train / {n_val} validation")

    result = annotate_corpus(
        split, scripted_annotations(split), get_prompt("zero_shot_5task"),
        out_path=out_dir / "annotations.jsonl",
        sleep=lambda s: None, clock=lambda: 0.0,
    )
    print(f"annotated: {len(result.records)} records, {len(result.failures)} failures")

    encoder = PixelEncoder(dimension=32, grid=8, seed=0)
    meme_ids = [m.meme_id for m in split.memes]
    template_ids = [t.template_id for t in split.templates]
    instance_joint = build_joint_store(
        encode([m.image for m in split.memes], meme_ids, "image", encoder),
        encode([m.embedded_text for m in split.memes], meme_ids, "text", encoder),
        CONCAT,
    )
    template_joint = build_joint_store(
        encode([t.base_image for t in split.templates], template_ids, "image", encoder),
        encode([t.name for t in split.templates], template_ids, "text", encoder),
        CONCAT,
    )
    config = MatcherConfig()
    stage1 = stage1_match(instance_joint, template_joint, CONCAT, config=config)
    stage2 = stage2_perceptual(
        stage1, PixelDifferenceScorer(), config.perceptual_threshold,
        {m.meme_id: m.image for m in split.memes},
        {t.template_id: t.base_image for t in split.templates},
    )
    correct = sum(1 for c in stage2 if c.instance_id.startswith(c.template_id))
    print(f"matching: stage1 {len(stage1)}, stage2 {len(stage2)}, correct {correct}")
    queue = VerificationQueue(out_dir / "match_queue.jsonl")
    queue.enqueue(stage2)
    print(f"verification queue: {len(queue.pending())} pending pairs")

    annotations = {r.meme_id: r for r in result.records}
    report = evaluate(split, annotations, HashEncoder(dimension=64),
                      text_types=("meme_caption", "embedded_text", "title"),
                      ks=(1, 5, 10))
    report.save(out_dir / "retrieval_report.json")
    for text_type, per_direction in report.results.items():
        for direction, cell in per_direction.items():
            print(f"retrieval {text_type:>14} {direction}: "
                  f"R@1 {cell['r_at_1']:.3f} R@5 {cell['r_at_5']:.3f} "
                  f"R@10 {cell['r_at_10']:.3f} mean {cell['overall_mean']:.3f}")
    print(f"artifacts in {out_dir}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

"""Command-line entry point wiring the pipeline stages together.

Exit codes: 0 success, 1 module error (message on stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import config as config_mod
from . import corpus as corpus_mod
from . import embeddings as emb_mod
from . import matcher as matcher_mod
from . import retrieval as retrieval_mod
from . import textmetrics as metrics_mod

logger = logging.getLogger("memekit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="memekit", description=__doc__)
    parser.add_argument("--config", help="JSON or TOML config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command")

    corpus = sub.add_parser("corpus", help="validate, filter, split, or summarize a corpus")
    corpus_sub = corpus.add_subparsers(dest="corpus_command")
    for name in ("validate", "filter", "split", "stats"):
        p = corpus_sub.add_parser(name)
        p.add_argument("path", help="corpus directory or meme manifest")
        if name == "filter":
            p.add_argument("--min-instances", type=int, default=150)
            p.add_argument("--min-text-tokens", type=int, default=1)
            p.add_argument("--top-k", type=int, default=50)
            p.add_argument("--out", required=True)
        if name == "split":
            p.add_argument("--val-fraction", type=float, required=True)
            p.add_argument("--out", required=True)
        if name == "stats":
            p.add_argument("--annotations")
            p.add_argument("--out")

    annotate = sub.add_parser("annotate", help="run VLM annotation over a corpus")
    annotate_sub = annotate.add_subparsers(dest="annotate_command")
    run = annotate_sub.add_parser("run")
    run.add_argument("path", help="corpus directory or meme manifest")
    run.add_argument("--prompt", default="zero_shot_5task")
    context = run.add_mutually_exclusive_group()
    context.add_argument("--with-context", dest="with_context", action="store_true", default=True)
    context.add_argument("--no-context", dest="with_context", action="store_false")
    run.add_argument("--limit", type=int, default=None)
    run.add_argument("--resume", action="store_true")
    run.add_argument("--out", required=True)
    run.add_argument("--max-in-flight", type=int, default=4)
    run.add_argument("--script", help="JSON response script for the scripted client")

    match = sub.add_parser("match", help="two-stage template matching")
    match_sub = match.add_subparsers(dest="match_command")
    mrun = match_sub.add_parser("run")
    mrun.add_argument("path", help="corpus directory or meme manifest")
    mrun.add_argument("--method", choices=matcher_mod.METHODS, default="concat")
    mrun.add_argument("--concat-threshold", type=float, default=30.0)
    mrun.add_argument("--fusion-threshold", type=float, default=1.0)
    mrun.add_argument("--perceptual-threshold", type=float, default=1.0)
    mrun.add_argument("--encoder", default="pixel")
    mrun.add_argument("--dimension", type=int, default=32)
    mrun.add_argument("--out", required=True)
    mrun.add_argument("--queue", help="verification queue JSONL to enqueue survivors")
    mexport = match_sub.add_parser("export")
    mexport.add_argument("--queue", required=True)
    mexport.add_argument("--only-verified", action="store_true", default=True)
    mexport.add_argument("--all", dest="only_verified", action="store_false")
    mexport.add_argument("--out", required=True)

    embed = sub.add_parser("embed", help="encode a corpus into an embedding store")
    embed.add_argument("path", help="corpus directory or meme manifest")
    embed.add_argument("--modality", choices=("image", "text"), required=True)
    embed.add_argument("--encoder", default="hash")
    embed.add_argument("--dimension", type=int, default=64)
    embed.add_argument("--text-field", default="embedded_text")
    embed.add_argument("--out", required=True)
    embed.add_argument("--normalize", action="store_true")

    ev = sub.add_parser("eval-retrieval", help="bidirectional retrieval report")
    ev.add_argument("path", help="corpus directory or meme manifest")
    ev.add_argument("--annotations")
    ev.add_argument("--texts", default="meme_caption,image_caption,embedded_text,title")
    ev.add_argument("--ks", default="1,5,10")
    ev.add_argument("--encoder", default="hash")
    ev.add_argument("--dimension", type=int, default=64)
    ev.add_argument("--report", required=True)

    ft = sub.add_parser("finetune", help="contrastive fine-tuning")
    ft_sub = ft.add_subparsers(dest="finetune_command")
    frun = ft_sub.add_parser("run")
    frun.add_argument("--config", dest="ft_config", required=True,
                      help="JSON or TOML file mirroring the training config fields")
    frun.add_argument("--pairs", required=True,
                      help="JSONL of {image: [floats], caption: str} training pairs")
    frun.add_argument("--val-pairs", required=True)
    frun.add_argument("--checkpoint-dir", required=True)

    em = sub.add_parser("eval-metrics", help="text-generation metrics")
    em.add_argument("--strategy", choices=metrics_mod.STRATEGIES, default="best_match")
    em.add_argument("--metrics", default="chrf,rouge_l,bleu4")
    em.add_argument("--pred", required=True, help="JSONL with a 'prediction' field")
    em.add_argument("--ref", required=True, help="JSONL with a 'references' list field")
    em.add_argument("--out")

    serve = sub.add_parser("serve-review", help="run the review service")
    serve.add_argument("--port", type=int, default=8321)
    serve.add_argument("--data-dir", required=True)
    serve.add_argument("--ui-dir")

    export = sub.add_parser("export", help="join corpus, annotations, and verified matches")
    export.add_argument("path", help="corpus directory or meme manifest")
    export.add_argument("--annotations")
    export.add_argument("--queue")
    export.add_argument("--out", required=True)
    return parser


def _write_json(path: str, payload: dict, cfg: dict) -> None:
    payload = {**payload, **config_mod.provenance(cfg)}
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(payload, indent=2), encoding="utf-8")


def _cmd_corpus(args, cfg: dict) -> int:
    corpus = corpus_mod.load_corpus(args.path)
    if args.corpus_command == "validate":
        n_templates, n_memes = corpus.counts
        print(f"valid corpus: {n_templates} templates, {n_memes} memes")
        return 0
    if args.corpus_command == "filter":
        filtered = corpus_mod.filter_corpus(
            corpus,
            min_instances=args.min_instances,
            min_text_tokens=args.min_text_tokens,
            top_k_templates=args.top_k,
        )
        corpus_mod.save_corpus(filtered, args.out)
        _write_json(str(Path(args.out) / "filter_manifest.json"), {
            "input_counts": list(corpus.counts),
            "output_counts": list(filtered.counts),
            "min_instances": args.min_instances,
            "min_text_tokens": args.min_text_tokens,
            "top_k": args.top_k,
        }, cfg)
        print(f"filtered {corpus.counts} -> {filtered.counts}")
        return 0
    if args.corpus_command == "split":
        seed = args.seed if args.seed is not None else 0
        split = corpus_mod.split_corpus(corpus, args.val_fraction, seed)
        corpus_mod.save_corpus(split, args.out)
        n_val = sum(1 for s in split.split_assignment.values() if s == corpus_mod.VALIDATION)
        print(f"split: {len(split.memes) - n_val} train / {n_val} validation")
        return 0
    if args.corpus_command == "stats":
        annotations = None
        if args.annotations:
            from .annotator import load_annotations

            annotations = load_annotations(args.annotations)
        stats = corpus_mod.compute_stats(corpus, annotations)
        payload = stats.to_dict()
        if args.out:
            _write_json(args.out, payload, cfg)
        else:
            print(json.dumps(payload, indent=2))
        return 0
    raise SystemExit(2)


def _cmd_annotate(args, cfg: dict) -> int:
    from .annotator import ScriptedVlmClient, annotate_corpus, get_prompt

    corpus = corpus_mod.load_corpus(args.path)
    prompt_id = args.prompt
    if not args.with_context and not prompt_id.endswith("_no_context"):
        prompt_id = f"{prompt_id}_no_context"
    template = get_prompt(prompt_id)
    if args.script:
        script = json.loads(Path(args.script).read_text(encoding="utf-8"))
        client = ScriptedVlmClient(script.get("responses", {}), script.get("default"))
    else:
        from .annotator import OpenAiCompatClient

        client = OpenAiCompatClient()
    result = annotate_corpus(
        corpus, client, template,
        out_path=args.out, limit=args.limit, resume=args.resume,
        max_in_flight=args.max_in_flight,
    )
    print(f"annotated {len(result.records)} memes, {len(result.failures)} failures")
    return 0 if not result.failures else 1


def _load_meme_images(corpus):
    instance_images = {m.meme_id: m.image for m in corpus.memes}
    template_images = {t.template_id: t.base_image for t in corpus.templates}
    return instance_images, template_images


def _cmd_match(args, cfg: dict) -> int:
    if args.match_command == "export":
        queue = matcher_mod.VerificationQueue(args.queue)
        exported = queue.export(only_verified=args.only_verified)
        matcher_mod.save_candidates(exported, args.out)
        print(f"exported {len(exported)} pairs")
        return 0
    corpus = corpus_mod.load_corpus(args.path)
    encoder = emb_mod.make_encoder(args.encoder, dimension=args.dimension)
    config = matcher_mod.MatcherConfig(
        concat_threshold=args.concat_threshold,
        fusion_threshold=args.fusion_threshold,
        perceptual_threshold=args.perceptual_threshold,
    )
    instance_images, template_images = _load_meme_images(corpus)
    meme_ids = [m.meme_id for m in corpus.memes]
    template_ids = [t.template_id for t in corpus.templates]
    inst_img = emb_mod.encode([instance_images[i] for i in meme_ids], meme_ids, "image", encoder)
    inst_txt = emb_mod.encode([m.embedded_text for m in corpus.memes], meme_ids, "text", encoder)
    tmpl_img = emb_mod.encode([template_images[t] for t in template_ids], template_ids,
                              "image", encoder)
    tmpl_txt = emb_mod.encode([t.name for t in corpus.templates], template_ids, "text", encoder)
    instances = matcher_mod.build_joint_store(inst_img, inst_txt, args.method)
    templates = matcher_mod.build_joint_store(tmpl_img, tmpl_txt, args.method)
    stage1 = matcher_mod.stage1_match(instances, templates, args.method, config=config)
    stage2 = matcher_mod.stage2_perceptual(
        stage1, matcher_mod.PixelDifferenceScorer(), config.perceptual_threshold,
        instance_images, template_images,
    )
    matcher_mod.save_candidates(stage2, args.out)
    if args.queue:
        queue = matcher_mod.VerificationQueue(args.queue)
        queue.enqueue(stage2)
    print(f"stage1: {len(stage1)} pairs, stage2: {len(stage2)} pairs")
    return 0


def _cmd_embed(args, cfg: dict) -> int:
    corpus = corpus_mod.load_corpus(args.path)
    encoder = emb_mod.make_encoder(args.encoder, dimension=args.dimension)
    ids = [m.meme_id for m in corpus.memes]
    if args.modality == "image":
        items = [m.image for m in corpus.memes]
    else:
        items = [getattr(m, args.text_field) for m in corpus.memes]
    store = emb_mod.encode(items, ids, args.modality, encoder)
    if args.normalize:
        store = emb_mod.normalize_rows(store)
    store.meta.update(config_mod.provenance(cfg))
    emb_mod.save_store(store, args.out)
    print(f"wrote {len(store.ids)} x {store.dimension} store to {args.out}")
    return 0


def _cmd_eval_retrieval(args, cfg: dict) -> int:
    corpus = corpus_mod.load_corpus(args.path)
    annotations = {}
    if args.annotations:
        from .annotator import load_annotations

        annotations = load_annotations(args.annotations)
    encoder = emb_mod.make_encoder(args.encoder, dimension=args.dimension)
    text_types = [t.strip() for t in args.texts.split(",") if t.strip()]
    ks = [int(k) for k in args.ks.split(",")]
    report = retrieval_mod.evaluate(
        corpus, annotations, encoder, text_types=text_types, ks=ks,
        provenance=config_mod.provenance(cfg),
    )
    report.save(args.report)
    print(f"wrote retrieval report to {args.report}")
    return 0


def _cmd_finetune(args, cfg: dict) -> int:
    from . import finetune as ft_mod

    config = ft_mod.FinetuneConfig.from_file(args.ft_config)

    def load_pairs(path):
        pairs = []
        import numpy as np

        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                row = json.loads(line)
                caption = row["caption"]
                if isinstance(caption, list):
                    caption = np.asarray(caption, dtype=float)
                pairs.append((np.asarray(row["image"], dtype=float), caption))
        return pairs

    train_pairs = load_pairs(args.pairs)
    val_pairs = load_pairs(args.val_pairs)
    encoder = ft_mod.TrainableToyEncoder(
        image_features=len(train_pairs[0][0]), dimension=16, seed=config.seed,
    )
    trace, best = ft_mod.train(config, train_pairs, val_pairs, encoder,
                               checkpoint_dir=args.checkpoint_dir)
    print(f"best epoch {trace.best_epoch}, val mean R@1 {trace.best_val_mean_r1:.3f}")
    return 0


def _cmd_eval_metrics(args, cfg: dict) -> int:
    predictions = []
    for line in Path(args.pred).read_text(encoding="utf-8").splitlines():
        if line.strip():
            predictions.append(json.loads(line)["prediction"])
    references = []
    for line in Path(args.ref).read_text(encoding="utf-8").splitlines():
        if line.strip():
            row = json.loads(line)
            refs = row.get("references", row.get("reference"))
            references.append([refs] if isinstance(refs, str) else list(refs))
    request = metrics_mod.MetricRequest(
        predictions=predictions,
        references=references,
        strategy=args.strategy,
        metrics=tuple(m.strip() for m in args.metrics.split(",")),
    )
    scores = metrics_mod.apply_strategy(request)
    payload = {"strategy": args.strategy, "scores": scores}
    if args.out:
        _write_json(args.out, payload, cfg)
    print(json.dumps(payload["scores"], indent=2))
    return 0


def _cmd_export(args, cfg: dict) -> int:
    corpus = corpus_mod.load_corpus(args.path)
    annotations = {}
    if args.annotations:
        from .annotator import load_annotations

        annotations = load_annotations(args.annotations)
    verified_templates: dict[str, str] = {}
    if args.queue:
        queue = matcher_mod.VerificationQueue(args.queue)
        for cand in queue.export(only_verified=True):
            verified_templates[cand.instance_id] = cand.template_id
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    prov = config_mod.provenance(cfg)
    with out.open("w", encoding="utf-8") as fh:
        for meme in corpus.memes:
            row = {
                "meme_id": meme.meme_id,
                "template_id": meme.template_id,
                "title": meme.title,
                "image": meme.image,
                "embedded_text": meme.embedded_text,
                **prov,
            }
            record = annotations.get(meme.meme_id)
            if record is not None:
                row["image_caption"] = record.image_caption
                row["meme_caption"] = record.meme_caption
                row["literary_devices"] = sorted(record.literary_devices)
            if meme.meme_id in verified_templates:
                row["verified_template_id"] = verified_templates[meme.meme_id]
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    print(f"exported {len(corpus.memes)} rows to {out}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level.upper(), logging.INFO),
                        stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    file_cfg = config_mod.load_config_file(args.config)
    cfg = config_mod.layer_config(file_cfg, config_mod.env_overrides(),
                                  {"seed": args.seed, "command": args.command})
    handlers = {
        "corpus": _cmd_corpus,
        "annotate": _cmd_annotate,
        "match": _cmd_match,
        "embed": _cmd_embed,
        "eval-retrieval": _cmd_eval_retrieval,
        "finetune": _cmd_finetune,
        "eval-metrics": _cmd_eval_metrics,
        "export": _cmd_export,
    }
    if args.command == "serve-review":
        from .review import serve

        serve(data_dir=args.data_dir, port=args.port, static_dir=args.ui_dir)
        return 0
    handler = handlers[args.command]
    try:
        return handler(args, cfg)
    except Exception as exc:
        logger.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Blinded preference-survey demo: three evaluators over six conditions.

Creates a 5-meme survey comparing three annotation sources in with/without
context conditions, simulates three evaluators voting through the blinded
API, then prints the tally grid (model x condition x subtask).

Usage: python scripts/run_survey_demo.py [--data-dir DIR]
"""

import argparse
from types import SimpleNamespace

import numpy as np

from memekit.review import ReviewStore, SourceDescriptor, SUBTASKS


def record(tag):
    return SimpleNamespace(
        image_caption=f"a character reacts, phrasing {tag}",
        embedded_text=f"overlaid caption wording {tag}",
        meme_caption=f"the humor explained, style {tag}",
        literary_devices=frozenset({"irony"}),
        emotions=frozenset({"interest"}),
    )


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data-dir", default=None)
    args = parser.parse_args()

    store = ReviewStore(data_dir=args.data_dir)
    memes = [SimpleNamespace(meme_id=f"m{i}", image="") for i in range(5)]
    annotation_sets = []
    for model in ("alpha", "beta", "gamma"):
        for with_context in (True, False):
            source = SourceDescriptor(model=model, with_context=with_context)
            tag = len(annotation_sets)
            annotation_sets.append(
                (source, {m.meme_id: record(f"{tag}-{m.meme_id}") for m in memes})
            )
    survey = store.create_survey(memes, annotation_sets, seed=7)
    print(f"survey {survey.survey_id}: {len(survey.items)} items, "
          f"{len(annotation_sets)} conditions")

    rng = np.random.default_rng(3)
    for evaluator in ("evaluator-1", "evaluator-2", "evaluator-3"):
        while (item := store.next_item(survey.survey_id, evaluator)) is not None:
            candidate_ids = [cid for cid, _ in item.candidates]
            if item.selection_mode == "single":
                picks = [candidate_ids[rng.integers(0, len(candidate_ids))]]
            else:
                k = int(rng.integers(1, 3))
                picks = list(rng.choice(candidate_ids, size=k, replace=False))
            store.record_vote(evaluator, item.item_id, picks)
        answered, total = store.progress(survey.survey_id, evaluator)
        print(f"{evaluator}: {answered}/{total} items answered")

    tally = store.tally(survey.survey_id)
    header = " " * 22 + " ".join(f"{s[:10]:>12}" for s in SUBTASKS) + "   total"
    print(header)
    for key in sorted(tally.counts):
        row = tally.counts[key]
        cells = " ".join(f"{row[s]:>12}" for s in SUBTASKS)
        print(f"{key:<22}{cells}{tally.total(key):>8}")
    print(f"abstentions: {tally.abstentions}, grand total: {tally.grand_total()}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

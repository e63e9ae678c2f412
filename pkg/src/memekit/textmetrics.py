"""Native text-generation metrics and multi-reference aggregation strategies.

chrF, ROUGE-L, and BLEU-4 are implemented here; learned scorers (BLEURT,
BERTscore) plug in through :class:`ExternalScorer` and are never computed
natively. Five aggregation strategies reconcile single predictions with
multi-reference gold sets; in the degenerate one-prediction/one-reference
case all five coincide.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Sequence

CHRF_ORDER = 6
CHRF_BETA = 2.0
BLEU_ORDER = 4

STRATEGIES = (
    "extended_predictions",
    "concatenated_references",
    "multi_reference",
    "best_match",
    "fully_concatenated",
)


class MetricError(Exception):
    pass


class StrategyError(MetricError):
    """Strategy and metric cannot be combined (or malformed request)."""


# ---------------------------------------------------------------------------
# chrF
# ---------------------------------------------------------------------------

def _char_ngrams(text: str, n: int) -> Counter:
    return Counter(text[i:i + n] for i in range(len(text) - n + 1))


def chrf(prediction: str, reference: str, order: int = CHRF_ORDER,
         beta: float = CHRF_BETA, remove_whitespace: bool = True) -> float:
    """Character-n-gram F-score in [0, 100].

    Precision and recall are averaged over the orders where both sides have
    n-grams, then combined with F-beta (beta=2 weighs recall twice).
    """
    if remove_whitespace:
        prediction = re.sub(r"\s+", "", prediction)
        reference = re.sub(r"\s+", "", reference)
    avg_precision = 0.0
    avg_recall = 0.0
    effective = 0
    for n in range(1, order + 1):
        pred_grams = _char_ngrams(prediction, n)
        ref_grams = _char_ngrams(reference, n)
        pred_total = sum(pred_grams.values())
        ref_total = sum(ref_grams.values())
        if pred_total == 0 or ref_total == 0:
            continue
        common = sum((pred_grams & ref_grams).values())
        avg_precision += common / pred_total
        avg_recall += common / ref_total
        effective += 1
    if effective == 0:
        return 0.0
    avg_precision /= effective
    avg_recall /= effective
    if avg_precision + avg_recall == 0.0:
        return 0.0
    beta_sq = beta * beta
    score = (1 + beta_sq) * avg_precision * avg_recall / (beta_sq * avg_precision + avg_recall)
    return 100.0 * score


# ---------------------------------------------------------------------------
# ROUGE-L
# ---------------------------------------------------------------------------

def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for token_a in a:
        cur = [0] * (len(b) + 1)
        for j, token_b in enumerate(b, 1):
            if token_a == token_b:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge_l(prediction: str, reference: str) -> float:
    """LCS-based F-measure over whitespace tokens, in [0, 1]."""
    pred_tokens = prediction.split()
    ref_tokens = reference.split()
    lcs = _lcs_length(pred_tokens, ref_tokens)
    if lcs == 0:
        return 0.0
    precision = lcs / len(pred_tokens)
    recall = lcs / len(ref_tokens)
    return 2 * precision * recall / (precision + recall)


# ---------------------------------------------------------------------------
# BLEU-4
# ---------------------------------------------------------------------------

def _token_ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _as_reference_groups(references: Sequence) -> list[list[str]]:
    groups = []
    for refs in references:
        if isinstance(refs, str):
            groups.append([refs])
        else:
            groups.append(list(refs))
    return groups


def bleu4(predictions: Sequence[str], references: Sequence, smooth: bool = True) -> float:
    """Corpus-level BLEU with up-to-4-gram precisions, in [0, 1].

    ``references`` holds one reference or a list of references per prediction.
    Smoothing adds one to numerator and denominator of zero higher-order
    precisions (unigram misses still zero the score); ``smooth=False`` gives
    the raw score, which is 0 whenever any used precision is 0.
    """
    groups = _as_reference_groups(references)
    if len(predictions) != len(groups):
        raise MetricError(
            f"{len(predictions)} predictions but {len(groups)} reference groups"
        )
    if not predictions:
        raise MetricError("bleu4 needs at least one prediction")
    correct = [0] * BLEU_ORDER
    total = [0] * BLEU_ORDER
    pred_len = 0
    ref_len = 0
    for prediction, refs in zip(predictions, groups):
        pred_tokens = prediction.split()
        pred_len += len(pred_tokens)
        ref_token_lists = [r.split() for r in refs]
        # closest reference length, shorter one on ties
        ref_len += min(
            (len(r) for r in ref_token_lists),
            key=lambda n: (abs(n - len(pred_tokens)), n),
        )
        for n in range(1, BLEU_ORDER + 1):
            pred_grams = _token_ngrams(pred_tokens, n)
            max_ref: Counter = Counter()
            for ref_tokens in ref_token_lists:
                max_ref |= _token_ngrams(ref_tokens, n)
            total[n - 1] += sum(pred_grams.values())
            correct[n - 1] += sum((pred_grams & max_ref).values())
    # effective order: drop n-gram sizes the predictions are too short to have
    effective = 0
    for n in range(BLEU_ORDER):
        if total[n] > 0:
            effective = n + 1
    if effective == 0 or correct[0] == 0:
        return 0.0
    log_sum = 0.0
    for n in range(effective):
        c, t = correct[n], total[n]
        if t == 0:
            return 0.0
        if c == 0:
            if not smooth or n == 0:
                return 0.0
            c, t = c + 1, t + 1
        log_sum += math.log(c / t)
    brevity = 1.0
    if pred_len < ref_len:
        brevity = math.exp(1 - ref_len / pred_len) if pred_len > 0 else 0.0
    return brevity * math.exp(log_sum / effective)


# ---------------------------------------------------------------------------
# Multi-label macro F1
# ---------------------------------------------------------------------------

def macro_f1(
    predicted_sets: Sequence[set],
    gold_sets: Sequence[set],
    universe: Sequence[str],
) -> float:
    """Arithmetic mean of per-label F1 over the universe, with 0/0 := 0."""
    if not universe:
        raise MetricError("label universe must be non-empty")
    if len(predicted_sets) != len(gold_sets):
        raise MetricError(
            f"{len(predicted_sets)} predictions but {len(gold_sets)} gold sets"
        )
    allowed = set(universe)
    for i, (pred, gold) in enumerate(zip(predicted_sets, gold_sets)):
        stray = (set(pred) | set(gold)) - allowed
        if stray:
            raise MetricError(f"item {i}: labels outside universe: {sorted(stray)}")
    f1_sum = 0.0
    for label in universe:
        tp = sum(1 for p, g in zip(predicted_sets, gold_sets) if label in p and label in g)
        fp = sum(1 for p, g in zip(predicted_sets, gold_sets) if label in p and label not in g)
        fn = sum(1 for p, g in zip(predicted_sets, gold_sets) if label not in p and label in g)
        denom = 2 * tp + fp + fn
        f1_sum += (2 * tp / denom) if denom else 0.0
    return f1_sum / len(universe)


# ---------------------------------------------------------------------------
# Scorers and aggregation strategies
# ---------------------------------------------------------------------------

@dataclass
class Scorer:
    """A metric the strategy layer can drive.

    ``sentence`` scores one (prediction, single reference) pair; ``corpus``
    aggregates a whole request. ``supports_multi_reference`` declares whether
    ``corpus`` accepts more than one reference per item.
    """

    name: str
    sentence: Callable[[str, str], float]
    corpus: Callable[[Sequence[str], Sequence[Sequence[str]]], float]
    supports_multi_reference: bool = False


def _mean_sentence_corpus(metric: Callable[[str, str], float]):
    def score(predictions, reference_groups):
        vals = []
        for pred, refs in zip(predictions, reference_groups):
            if len(refs) != 1:
                raise StrategyError(
                    f"single-reference metric got {len(refs)} references"
                )
            vals.append(metric(pred, refs[0]))
        return sum(vals) / len(vals)
    return score


class ExternalScorer(Scorer):
    """Adapter for learned scorers (BLEURT, BERTscore) from a callable.

    The callable takes (prediction, references) and returns a float; consumers
    should record which backing model was used.
    """

    def __init__(self, name: str, fn: Callable[[str, Sequence[str]], float],
                 supports_multi_reference: bool = True):
        super().__init__(
            name=name,
            sentence=lambda pred, ref: fn(pred, [ref]),
            corpus=lambda preds, groups: sum(
                fn(p, list(g)) for p, g in zip(preds, groups)
            ) / len(preds),
            supports_multi_reference=supports_multi_reference,
        )


def builtin_scorers() -> dict[str, Scorer]:
    return {
        "chrf": Scorer("chrf", chrf, _mean_sentence_corpus(chrf)),
        "rouge_l": Scorer("rouge_l", rouge_l, _mean_sentence_corpus(rouge_l)),
        "bleu4": Scorer(
            "bleu4",
            sentence=lambda pred, ref: bleu4([pred], [[ref]]),
            corpus=lambda preds, groups: bleu4(list(preds), list(groups)),
            supports_multi_reference=True,
        ),
    }


@dataclass
class MetricRequest:
    predictions: list[str]
    references: list[list[str]]
    strategy: str
    metrics: tuple[str, ...] = ("chrf", "rouge_l", "bleu4")
    scorers: dict[str, Scorer] = field(default_factory=builtin_scorers)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise StrategyError(
                f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}"
            )
        if len(self.predictions) != len(self.references):
            raise StrategyError(
                f"{len(self.predictions)} predictions but "
                f"{len(self.references)} reference groups"
            )
        if not self.predictions:
            raise StrategyError("request must contain at least one item")
        if any(len(refs) == 0 for refs in self.references):
            raise StrategyError("every item needs at least one reference")
        for metric in self.metrics:
            if metric not in self.scorers:
                raise StrategyError(f"no scorer registered for metric {metric!r}")


def _score_one_metric(request: MetricRequest, scorer: Scorer) -> float:
    preds, groups = request.predictions, request.references
    strategy = request.strategy
    if strategy == "extended_predictions":
        flat_preds = [p for p, refs in zip(preds, groups) for _ in refs]
        flat_refs = [[r] for refs in groups for r in refs]
        return scorer.corpus(flat_preds, flat_refs)
    if strategy == "concatenated_references":
        return scorer.corpus(preds, [[" ".join(refs)] for refs in groups])
    if strategy == "multi_reference":
        if not scorer.supports_multi_reference:
            if all(len(refs) == 1 for refs in groups):
                return scorer.corpus(preds, groups)
            raise StrategyError(
                f"metric {scorer.name!r} does not support multiple references"
            )
        return scorer.corpus(preds, groups)
    if strategy == "best_match":
        best_refs = []
        for pred, refs in zip(preds, groups):
            best = max(refs, key=lambda r: scorer.sentence(pred, r))
            best_refs.append([best])
        return scorer.corpus(preds, best_refs)
    if strategy == "fully_concatenated":
        joined_pred = " ".join(preds)
        joined_ref = " ".join(r for refs in groups for r in refs)
        return scorer.corpus([joined_pred], [[joined_ref]])
    raise StrategyError(f"unknown strategy {strategy!r}")


def apply_strategy(request: MetricRequest) -> dict[str, float]:
    """Score every requested metric under the request's strategy."""
    return {
        metric: _score_one_metric(request, request.scorers[metric])
        for metric in request.metrics
    }

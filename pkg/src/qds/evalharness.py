"""Scoring of model outputs.

Three evaluation surfaces:

* summary scoring: per-item overlap metrics plus corpus means, with
  candidate/reference files aligned by item id;
* unconstrained multiple-choice comprehension: the backend answers the
  question without seeing the choices, each choice is scored against the
  generation, and the argmax (lowest index on ties) is the model's pick;
* judge scoring: a backend rates a summary 1-5 on faithfulness, fluency,
  informativeness, and conciseness, and replies are parsed tolerantly.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from statistics import fmean, pstdev
from typing import Callable, Mapping, Sequence

from . import gateway as gw
from .assembler import length_sentence, length_of, render_prompt
from .errors import AlignmentError, EmptyDimensionError, QdsError
from .metrics import (
    KNOWN_METRICS,
    MetricConfig,
    RougeScore,
    SimilarityScore,
    SimilarityScorer,
    aggregate,
    score_pair,
    similarity,
)
from .records import DreamItem

log = logging.getLogger(__name__)

JUDGE_DIMENSIONS = ("faithfulness", "fluency", "informativeness", "conciseness")


@dataclass(frozen=True)
class EvalRecord:
    item_id: str
    candidate: str
    reference: str
    scores: dict[str, RougeScore | SimilarityScore]

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "candidate": self.candidate,
            "reference": self.reference,
            "scores": {k: v.to_dict() for k, v in self.scores.items()},
        }


def eval_summaries(
    candidates: Mapping[str, str],
    references: Mapping[str, str],
    metrics: Sequence[str] = KNOWN_METRICS,
    config: MetricConfig | None = None,
    scorer: SimilarityScorer | None = None,
) -> tuple[list[EvalRecord], dict[str, RougeScore]]:
    """Score aligned candidate/reference maps; returns per-item records and
    per-metric aggregate means. Raises AlignmentError when ids differ."""
    config = config or MetricConfig()
    cand_ids = set(candidates)
    ref_ids = set(references)
    if cand_ids != ref_ids:
        raise AlignmentError(ref_ids - cand_ids, cand_ids - ref_ids)

    records: list[EvalRecord] = []
    for item_id in sorted(candidates):
        scores: dict[str, RougeScore | SimilarityScore] = dict(
            score_pair(candidates[item_id], references[item_id], metrics, config)
        )
        if scorer is not None:
            scores["similarity"] = similarity(candidates[item_id], references[item_id], scorer)
        records.append(
            EvalRecord(
                item_id=item_id,
                candidate=candidates[item_id],
                reference=references[item_id],
                scores=scores,
            )
        )

    aggregates = {
        metric: aggregate([r.scores[metric] for r in records])
        for metric in metrics
        if records
    }
    return records, aggregates


def build_length_instructions(
    references: Mapping[str, str],
    base_instruction: str,
) -> dict[str, str]:
    """Instructions for the reference-length condition.

    Shares the augmentation sentence renderer, so training and evaluation
    state the word count in a byte-identical format.
    """
    return {
        item_id: f"{base_instruction} {length_sentence(length_of(ref))}"
        for item_id, ref in references.items()
    }


@dataclass(frozen=True)
class ChoiceResult:
    item_id: str
    generated: str
    per_choice_scores: tuple[float, float, float]
    chosen_index: int
    correct: bool

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "generated": self.generated,
            "per_choice_scores": list(self.per_choice_scores),
            "chosen_index": self.chosen_index,
            "correct": self.correct,
        }


def argmax_choice(scores: Sequence[float]) -> int:
    """Highest score wins; exact ties go to the lowest index."""
    best = 0
    for i in range(1, len(scores)):
        if scores[i] > scores[best]:
            best = i
    return best


@dataclass
class DreamEvalResult:
    accuracy: float
    results: list[ChoiceResult]
    skipped: int


def eval_dream(
    items: Sequence[DreamItem],
    gateway: gw.Gateway,
    scorer: SimilarityScorer,
    prompt_builder: Callable[[DreamItem], str] | None = None,
    max_new_tokens: int = 64,
) -> DreamEvalResult:
    """Unconstrained comprehension: the prompt never exposes the choices.

    Backend failures on single items are logged and skipped; skipped items
    count as incorrect in the accuracy but are reported separately.
    """
    if prompt_builder is None:
        prompt_builder = lambda item: render_prompt(item.question, item.dialogue_text)

    results: list[ChoiceResult] = []
    skipped = 0
    correct = 0
    for item in items:
        try:
            generated = gateway.generate_one(prompt_builder(item), max_new_tokens=max_new_tokens)
        except QdsError as exc:
            log.warning("item %s skipped: %s", item.id, exc)
            skipped += 1
            continue
        scores = tuple(similarity(generated, choice, scorer).value for choice in item.choices)
        chosen = argmax_choice(scores)
        is_correct = chosen == item.answer_index
        correct += is_correct
        results.append(
            ChoiceResult(
                item_id=item.id,
                generated=generated,
                per_choice_scores=scores,
                chosen_index=chosen,
                correct=is_correct,
            )
        )
    accuracy = correct / len(items) if items else 0.0
    return DreamEvalResult(accuracy=accuracy, results=results, skipped=skipped)


@dataclass(frozen=True)
class JudgeVerdict:
    """One judged item; a dimension is None when the reply had no usable value."""

    item_id: str
    faithfulness: int | None
    fluency: int | None
    informativeness: int | None
    conciseness: int | None

    def get(self, dimension: str) -> int | None:
        return getattr(self, dimension)

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "faithfulness": self.faithfulness,
            "fluency": self.fluency,
            "informativeness": self.informativeness,
            "conciseness": self.conciseness,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "JudgeVerdict":
        def _val(key):
            v = d.get(key)
            return int(v) if v is not None else None

        return cls(
            item_id=str(d["item_id"]),
            faithfulness=_val("faithfulness"),
            fluency=_val("fluency"),
            informativeness=_val("informativeness"),
            conciseness=_val("conciseness"),
        )


def parse_judge_reply(text: str) -> dict[str, int | None]:
    """Extract the four 1-5 ratings from a judge reply.

    Tolerates the requested template, JSON-ish dicts, quoted or bare keys,
    ``=`` instead of ``:``, and trailing prose. Values outside 1-5 are
    treated as missing.
    """
    out: dict[str, int | None] = {}
    for dimension in JUDGE_DIMENSIONS:
        pattern = re.compile(
            rf"['\"]?{dimension}['\"]?\s*[:=]\s*['\"]?(-?\d+(?:\.\d+)?)", re.IGNORECASE
        )
        m = pattern.search(text)
        value: int | None = None
        if m:
            number = float(m.group(1))
            if number.is_integer() and 1 <= number <= 5:
                value = int(number)
        out[dimension] = value
    return out


def judge_evaluate(
    dialogue: str,
    summary: str,
    gateway: gw.Gateway,
    item_id: str = "",
    template_overrides: dict[str, str] | None = None,
    max_new_tokens: int = 64,
) -> JudgeVerdict:
    prompt = gw.render(
        gw.get_template(gw.JUDGE_EVAL, template_overrides),
        {"Dialogue": dialogue, "Summary": summary},
    )
    reply = gateway.generate_one(prompt, max_new_tokens=max_new_tokens)
    parsed = parse_judge_reply(reply)
    return JudgeVerdict(item_id=item_id, **parsed)


def aggregate_verdicts(verdicts: Sequence[JudgeVerdict]) -> dict[str, dict[str, float]]:
    """Per-dimension mean and population standard deviation, missing excluded.

    Raises EmptyDimensionError when a dimension has no value in any verdict.
    """
    out: dict[str, dict[str, float]] = {}
    for dimension in JUDGE_DIMENSIONS:
        values = [v.get(dimension) for v in verdicts if v.get(dimension) is not None]
        if not values:
            raise EmptyDimensionError(f"no parsed values for dimension {dimension!r}")
        out[dimension] = {
            "mean": fmean(values),
            "std": pstdev(values),
            "count": len(values),
        }
    return out

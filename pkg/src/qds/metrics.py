"""Deterministic text-similarity machinery.

Tokenization, n-gram overlap scoring, LCS-based scoring with switchable
sentence semantics, corpus aggregation, and a pluggable similarity scorer
with a lexical fallback that needs no model.

Two scoring profiles are supported because published results differ by
implementation:

* ``GOOGLE_ROUGE``: ``rl`` is the LCS over the whole sequence; ``rlsum``
  splits on sentences and takes the union LCS per reference sentence.
* ``PY_ROUGE``: ``rl`` itself uses the sentence-split union LCS (the
  behavior inherited from the original Perl script).
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from statistics import fmean
from typing import Iterable, Protocol, Sequence

from . import stemmer
from .errors import MixedMetricsError

TOKEN_PATTERN = re.compile(r"[a-z0-9]+")
SENTENCE_BOUNDARY = re.compile(r"[.!?]+\s+|\n+")


class RougeVariant(str, Enum):
    GOOGLE_ROUGE = "google"
    PY_ROUGE = "py"


class RougeLMode(str, Enum):
    SENTENCE = "sentence"
    SUMMARY_LEVEL = "summary_level"


#: Canonical metric names accepted by the scoring surface.
METRIC_R1 = "r1"
METRIC_R2 = "r2"
METRIC_RL = "rl"
METRIC_RLSUM = "rlsum"
KNOWN_METRICS = (METRIC_R1, METRIC_R2, METRIC_RL, METRIC_RLSUM)


@dataclass(frozen=True)
class MetricConfig:
    """Scoring profile: implementation variant, stemming, and LCS semantics.

    ``rouge_l_mode`` defaults to the variant's native behavior; overriding it
    to the other variant's mode is rejected so a profile never silently mixes
    semantics.
    """

    variant: RougeVariant = RougeVariant.GOOGLE_ROUGE
    use_stemmer: bool = False
    rouge_l_mode: RougeLMode | None = None

    def __post_init__(self):
        object.__setattr__(self, "variant", RougeVariant(self.variant))
        if self.rouge_l_mode is not None:
            mode = RougeLMode(self.rouge_l_mode)
            object.__setattr__(self, "rouge_l_mode", mode)
            if mode != self._native_mode():
                raise ValueError(
                    f"variant {self.variant.value} pairs rl with {self._native_mode().value}"
                )

    def _native_mode(self) -> RougeLMode:
        return (
            RougeLMode.SENTENCE
            if self.variant == RougeVariant.GOOGLE_ROUGE
            else RougeLMode.SUMMARY_LEVEL
        )

    @property
    def rl_mode(self) -> RougeLMode:
        return self.rouge_l_mode or self._native_mode()


@dataclass(frozen=True)
class TokenSeq:
    """Lowercased tokens, optionally stemmed, with sentence lengths retained
    so summary-level LCS can recover sentence structure."""

    tokens: tuple[str, ...]
    stemmed: bool = False
    sentence_lengths: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if any(not t for t in self.tokens):
            raise ValueError("token sequence contains an empty token")
        if self.sentence_lengths is not None:
            object.__setattr__(self, "sentence_lengths", tuple(self.sentence_lengths))
            if sum(self.sentence_lengths) != len(self.tokens):
                raise ValueError("sentence lengths do not cover the token sequence")

    def __len__(self) -> int:
        return len(self.tokens)

    def sentences(self) -> list[tuple[str, ...]]:
        if not self.sentence_lengths:
            return [self.tokens] if self.tokens else []
        out, i = [], 0
        for n in self.sentence_lengths:
            out.append(self.tokens[i : i + n])
            i += n
        return out


def tokenize(text: str, config: MetricConfig | None = None) -> TokenSeq:
    """Lowercase, split on non-alphanumeric runs, and optionally stem.

    Sentence boundaries (newlines, or ``.!?`` followed by whitespace) are
    recorded so summary-level scoring can split the sequence back up.
    """
    config = config or MetricConfig()
    tokens: list[str] = []
    lengths: list[int] = []
    for sentence in SENTENCE_BOUNDARY.split(text):
        sent_tokens = TOKEN_PATTERN.findall(sentence.lower())
        if config.use_stemmer:
            sent_tokens = [stemmer.stem(t) for t in sent_tokens]
        if sent_tokens:
            tokens.extend(sent_tokens)
            lengths.append(len(sent_tokens))
    return TokenSeq(tokens=tuple(tokens), stemmed=config.use_stemmer, sentence_lengths=tuple(lengths))


@dataclass(frozen=True)
class RougeScore:
    metric: str
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RougeScore":
        return cls(
            metric=str(d["metric"]),
            precision=float(d["precision"]),
            recall=float(d["recall"]),
            f1=float(d["f1"]),
        )


def _fmeasure(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _from_counts(metric: str, overlap: int, candidate_count: int, reference_count: int) -> RougeScore:
    precision = overlap / candidate_count if candidate_count else 0.0
    recall = overlap / reference_count if reference_count else 0.0
    return RougeScore(metric=metric, precision=precision, recall=recall, f1=_fmeasure(precision, recall))


def ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: TokenSeq, reference: TokenSeq, n: int) -> RougeScore:
    """Clipped n-gram overlap: each reference n-gram credits at most its own count."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cand = ngram_counts(candidate.tokens, n)
    ref = ngram_counts(reference.tokens, n)
    overlap = sum(min(count, ref[gram]) for gram, count in cand.items())
    return _from_counts(f"r{n}", overlap, sum(cand.values()), sum(ref.values()))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest common subsequence length via the standard DP table."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[len(b)]


def _lcs_indices(ref: Sequence[str], cand: Sequence[str]) -> list[int]:
    """Reference-side indices of one LCS, by backtracking the DP table."""
    m, n = len(ref), len(cand)
    table = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            if ref[i - 1] == cand[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    out = []
    i, j = m, n
    while i > 0 and j > 0:
        if ref[i - 1] == cand[j - 1]:
            out.append(i - 1)
            i -= 1
            j -= 1
        elif table[i - 1][j] >= table[i][j - 1]:
            i -= 1
        else:
            j -= 1
    return out[::-1]


def _union_lcs_hits(ref_sentences: list[tuple[str, ...]], cand_sentences: list[tuple[str, ...]]) -> int:
    """Union-LCS token hits with double-count prevention across sentences."""
    ref_budget = Counter(t for s in ref_sentences for t in s)
    cand_budget = Counter(t for s in cand_sentences for t in s)
    hits = 0
    for ref_sent in ref_sentences:
        union: set[int] = set()
        for cand_sent in cand_sentences:
            union.update(_lcs_indices(ref_sent, cand_sent))
        for idx in sorted(union):
            token = ref_sent[idx]
            if ref_budget[token] > 0 and cand_budget[token] > 0:
                hits += 1
                ref_budget[token] -= 1
                cand_budget[token] -= 1
    return hits


def rouge_l(
    candidate: TokenSeq,
    reference: TokenSeq,
    mode: RougeLMode = RougeLMode.SENTENCE,
    metric: str = METRIC_RL,
) -> RougeScore:
    """LCS-based score.

    SENTENCE mode runs one LCS over the whole sequences. SUMMARY_LEVEL mode
    takes, per reference sentence, the union of LCS matches against every
    candidate sentence. Either way precision divides by candidate length and
    recall by reference length.
    """
    mode = RougeLMode(mode)
    if mode == RougeLMode.SENTENCE:
        overlap = lcs_length(candidate.tokens, reference.tokens)
    else:
        cand_sents = candidate.sentences()
        ref_sents = reference.sentences()
        if not cand_sents or not ref_sents:
            overlap = 0
        else:
            overlap = _union_lcs_hits(ref_sents, cand_sents)
    return _from_counts(metric, overlap, len(candidate), len(reference))


def score_pair(
    candidate_text: str,
    reference_text: str,
    metrics: Iterable[str] = KNOWN_METRICS,
    config: MetricConfig | None = None,
) -> dict[str, RougeScore]:
    """Tokenize both texts once and score the requested metrics."""
    config = config or MetricConfig()
    cand = tokenize(candidate_text, config)
    ref = tokenize(reference_text, config)
    out: dict[str, RougeScore] = {}
    for metric in metrics:
        if metric == METRIC_R1:
            out[metric] = rouge_n(cand, ref, 1)
        elif metric == METRIC_R2:
            out[metric] = rouge_n(cand, ref, 2)
        elif metric == METRIC_RL:
            out[metric] = rouge_l(cand, ref, config.rl_mode, metric=METRIC_RL)
        elif metric == METRIC_RLSUM:
            out[metric] = rouge_l(cand, ref, RougeLMode.SUMMARY_LEVEL, metric=METRIC_RLSUM)
        elif metric.startswith("r") and metric[1:].isdigit():
            out[metric] = rouge_n(cand, ref, int(metric[1:]))
        else:
            raise ValueError(f"unknown metric: {metric}")
    return out


def aggregate(scores: Sequence[RougeScore]) -> RougeScore:
    """Arithmetic mean of precision, recall, and f1 over same-metric scores."""
    if not scores:
        raise ValueError("cannot aggregate an empty score list")
    metric = scores[0].metric
    if any(s.metric != metric for s in scores):
        raise MixedMetricsError(f"mixed metrics in aggregation: {sorted({s.metric for s in scores})}")
    return RougeScore(
        metric=metric,
        precision=fmean(s.precision for s in scores),
        recall=fmean(s.recall for s in scores),
        f1=fmean(s.f1 for s in scores),
    )


class SimilarityScorer(Protocol):
    """A normalized similarity backend: ``score`` maps two texts into [0, 1]."""

    backend_id: str

    def score(self, a: str, b: str) -> float: ...


@dataclass(frozen=True)
class SimilarityScore:
    value: float
    backend_id: str

    def to_dict(self) -> dict:
        return {"value": self.value, "backend_id": self.backend_id}

    @classmethod
    def from_dict(cls, d: dict) -> "SimilarityScore":
        return cls(value=float(d["value"]), backend_id=str(d["backend_id"]))


def similarity(a: str, b: str, scorer: SimilarityScorer) -> SimilarityScore:
    value = min(1.0, max(0.0, scorer.score(a, b)))
    return SimilarityScore(value=value, backend_id=scorer.backend_id)


class LexicalOverlapScorer:
    """Deterministic fallback: unigram-overlap F1 on stemmed tokens.

    Symmetric, 1.0 exactly on token-identical inputs (including two empty
    strings), 0.0 on token-disjoint inputs.
    """

    def __init__(self, use_stemmer: bool = True):
        self._config = MetricConfig(use_stemmer=use_stemmer)
        self.backend_id = "lexical-unigram-f1" + ("-stemmed" if use_stemmer else "")

    def score(self, a: str, b: str) -> float:
        ta = tokenize(a, self._config)
        tb = tokenize(b, self._config)
        if not ta.tokens and not tb.tokens:
            return 1.0
        return rouge_n(ta, tb, 1).f1


def rescale_with_baseline(raw: float, baseline: float) -> float:
    """Affine rescale used to normalize backend scores; clamps into [0, 1]."""
    if not 0.0 <= baseline < 1.0:
        raise ValueError("baseline must be in [0, 1)")
    return min(1.0, max(0.0, (raw - baseline) / (1.0 - baseline)))

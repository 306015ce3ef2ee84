"""Three-step synthesis of query-dialogue-summary triples.

For each dialogue-summary pair: generate five candidate queries from the
reference summary, filter them for answerability (two yes/no prompts must
both agree) and for near-duplication (similarity to an earlier kept query
above the threshold), then generate a query-focused summary for each
survivor from the query plus the full reference summary.

Every candidate is accounted for: the stats ledger always balances
``candidates_generated == dropped_text + dropped_semantic + triples_out``,
and every drop lands in the rejects list with its reason and trace.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from . import gateway as gw
from .errors import EmptyGenerationError, QdsError, SynthesisFailureError
from .metrics import SimilarityScorer, similarity
from .records import DialoguePair, load_records

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.65
CANDIDATES_PER_PAIR = 5
MIN_QUERY_TOKENS = 3


class DropStage(str, Enum):
    TEXT_FILTER = "text_filter"
    SEMANTIC_FILTER = "semantic_filter"


@dataclass(frozen=True)
class FilterTrace:
    """Provenance for one candidate: where it sat in the sample, how the
    answerability votes went, and why it was dropped (if it was)."""

    candidate_rank: int
    answerability_votes: tuple[gw.Verdict, gw.Verdict] | None = None
    dropped_by: DropStage | None = None
    similarity_to_kept: float | None = None
    reason: str | None = None

    def to_dict(self) -> dict:
        return {
            "candidate_rank": self.candidate_rank,
            "answerability_votes": [v.value for v in self.answerability_votes]
            if self.answerability_votes
            else None,
            "dropped_by": self.dropped_by.value if self.dropped_by else None,
            "similarity_to_kept": self.similarity_to_kept,
            "reason": self.reason,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FilterTrace":
        votes = d.get("answerability_votes")
        return cls(
            candidate_rank=int(d["candidate_rank"]),
            answerability_votes=tuple(gw.Verdict(v) for v in votes) if votes else None,
            dropped_by=DropStage(d["dropped_by"]) if d.get("dropped_by") else None,
            similarity_to_kept=d.get("similarity_to_kept"),
            reason=d.get("reason"),
        )


@dataclass(frozen=True)
class QdsTriple:
    pair_id: str
    query: str
    query_summary: str
    provenance: FilterTrace

    def to_dict(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "query": self.query,
            "query_summary": self.query_summary,
            "provenance": self.provenance.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QdsTriple":
        return cls(
            pair_id=str(d["pair_id"]),
            query=str(d["query"]),
            query_summary=str(d["query_summary"]),
            provenance=FilterTrace.from_dict(d["provenance"]),
        )


@dataclass(frozen=True)
class RejectedCandidate:
    pair_id: str
    query: str
    provenance: FilterTrace

    def to_dict(self) -> dict:
        return {"pair_id": self.pair_id, "query": self.query, "provenance": self.provenance.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "RejectedCandidate":
        return cls(
            pair_id=str(d["pair_id"]),
            query=str(d["query"]),
            provenance=FilterTrace.from_dict(d["provenance"]),
        )


@dataclass
class SynthesisStats:
    pairs_in: int = 0
    candidates_generated: int = 0
    dropped_text: int = 0
    dropped_semantic: int = 0
    triples_out: int = 0
    failed_pairs: int = 0

    @property
    def triples_per_pair(self) -> float:
        return self.triples_out / self.pairs_in if self.pairs_in else 0.0

    @property
    def text_drop_fraction(self) -> float:
        """Fraction of all candidates removed by the text filter."""
        return self.dropped_text / self.candidates_generated if self.candidates_generated else 0.0

    @property
    def semantic_drop_fraction_of_all(self) -> float:
        return self.dropped_semantic / self.candidates_generated if self.candidates_generated else 0.0

    @property
    def semantic_drop_fraction_of_remainder(self) -> float:
        """Fraction of text-filter survivors removed by the semantic filter."""
        remainder = self.candidates_generated - self.dropped_text
        return self.dropped_semantic / remainder if remainder else 0.0

    def validate(self) -> None:
        if self.candidates_generated != self.dropped_text + self.dropped_semantic + self.triples_out:
            raise ValueError(
                "stats ledger does not balance: "
                f"{self.candidates_generated} != {self.dropped_text} + "
                f"{self.dropped_semantic} + {self.triples_out}"
            )

    def to_dict(self) -> dict:
        return {
            "pairs_in": self.pairs_in,
            "candidates_generated": self.candidates_generated,
            "dropped_text": self.dropped_text,
            "dropped_semantic": self.dropped_semantic,
            "triples_out": self.triples_out,
            "failed_pairs": self.failed_pairs,
            "triples_per_pair": self.triples_per_pair,
            "text_drop_fraction": self.text_drop_fraction,
            "semantic_drop_fraction_of_all": self.semantic_drop_fraction_of_all,
            "semantic_drop_fraction_of_remainder": self.semantic_drop_fraction_of_remainder,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthesisStats":
        return cls(
            pairs_in=int(d["pairs_in"]),
            candidates_generated=int(d["candidates_generated"]),
            dropped_text=int(d["dropped_text"]),
            dropped_semantic=int(d["dropped_semantic"]),
            triples_out=int(d["triples_out"]),
            failed_pairs=int(d.get("failed_pairs", 0)),
        )


def load_triples(path) -> list["QdsTriple"]:
    return load_records(path, QdsTriple.from_dict)


def postprocess_query(text: str) -> str | None:
    """Trim, guarantee a terminal '?', and reject degenerate candidates."""
    text = " ".join(text.split())
    text = text.rstrip(".!")
    if not text:
        return None
    if len(text.rstrip("?").split()) < MIN_QUERY_TOKENS:
        return None
    if not text.endswith("?"):
        text += "?"
    return text


def generate_queries(
    pair: DialoguePair,
    gateway: gw.Gateway,
    n: int = CANDIDATES_PER_PAIR,
    temperature: float = 0.7,
    max_new_tokens: int = 64,
    template_overrides: dict[str, str] | None = None,
) -> list[str]:
    """Sample candidate queries from the reference summary (never the dialogue)."""
    prompt = gw.render(
        gw.get_template(gw.QUERY_GEN, template_overrides), {"Summary": pair.summary}
    )
    request = gw.GenerationRequest(
        prompt=prompt, n_samples=n, temperature=temperature, max_new_tokens=max_new_tokens
    )
    return list(gateway.generate(request).texts)


def text_filter(
    query: str,
    summary: str,
    gateway: gw.Gateway,
    template_overrides: dict[str, str] | None = None,
) -> tuple[bool, tuple[gw.Verdict, gw.Verdict]]:
    """Keep a query only when both answerability prompts come back YES.

    Unparseable replies count as NO: filtering errs toward precision.
    """
    votes = []
    for name in (gw.ANSWERABLE_1, gw.ANSWERABLE_2):
        prompt = gw.render(
            gw.get_template(name, template_overrides), {"Question": query, "Summary": summary}
        )
        votes.append(gw.parse_yes_no(gateway.generate_one(prompt)))
    votes = (votes[0], votes[1])
    return votes[0] == gw.Verdict.YES and votes[1] == gw.Verdict.YES, votes


def semantic_filter(
    queries: Sequence[tuple[int, str]],
    scorer: SimilarityScorer,
    threshold: float = DEFAULT_THRESHOLD,
) -> tuple[list[tuple[int, str]], list[tuple[int, str, float]]]:
    """Greedy first-kept scan over (rank, query) in generation order.

    A query is dropped iff its similarity to any earlier retained query is
    strictly above the threshold; ties at the threshold are retained. Returns
    (retained, dropped) where dropped rows carry the offending similarity.
    """
    retained: list[tuple[int, str]] = []
    dropped: list[tuple[int, str, float]] = []
    for rank, query in queries:
        max_sim = 0.0
        for _, kept in retained:
            max_sim = max(max_sim, similarity(query, kept, scorer).value)
        if retained and max_sim > threshold:
            dropped.append((rank, query, max_sim))
        else:
            retained.append((rank, query))
    return retained, dropped


def generate_query_summary(
    query: str,
    summary: str,
    gateway: gw.Gateway,
    max_new_tokens: int = 128,
    template_overrides: dict[str, str] | None = None,
) -> str:
    """Answer the query from the full reference summary (never the dialogue)."""
    prompt = gw.render(
        gw.get_template(gw.QUERY_SUMMARY, template_overrides),
        {"Question": query, "Summary": summary},
    )
    text = gateway.generate_one(prompt, max_new_tokens=max_new_tokens).strip()
    if not text:
        raise EmptyGenerationError(f"empty query summary for {query!r}")
    return text


@dataclass
class SynthesisResult:
    triples: list[QdsTriple] = field(default_factory=list)
    rejects: list[RejectedCandidate] = field(default_factory=list)
    stats: SynthesisStats = field(default_factory=SynthesisStats)
    failures: list[tuple[str, str]] = field(default_factory=list)


@dataclass
class _PairOutcome:
    triples: list[QdsTriple]
    rejects: list[RejectedCandidate]
    candidates: int


def _synthesize_pair(
    pair: DialoguePair,
    gateway: gw.Gateway,
    scorer: SimilarityScorer,
    threshold: float,
    template_overrides: dict[str, str] | None,
) -> _PairOutcome:
    raw = generate_queries(pair, gateway, template_overrides=template_overrides)
    rejects: list[RejectedCandidate] = []

    # Rule-based postprocessing; degenerate candidates are text-stage drops.
    candidates: list[tuple[int, str]] = []
    for rank, text in enumerate(raw):
        cleaned = postprocess_query(text)
        if cleaned is None:
            rejects.append(
                RejectedCandidate(
                    pair_id=pair.id,
                    query=text.strip(),
                    provenance=FilterTrace(
                        candidate_rank=rank, dropped_by=DropStage.TEXT_FILTER, reason="degenerate"
                    ),
                )
            )
        else:
            candidates.append((rank, cleaned))

    # Exact duplicates never reach the backend; they are similarity-1 drops.
    deduped: list[tuple[int, str]] = []
    seen: set[str] = set()
    for rank, query in candidates:
        if query in seen:
            rejects.append(
                RejectedCandidate(
                    pair_id=pair.id,
                    query=query,
                    provenance=FilterTrace(
                        candidate_rank=rank,
                        dropped_by=DropStage.SEMANTIC_FILTER,
                        similarity_to_kept=1.0,
                        reason="exact duplicate",
                    ),
                )
            )
        else:
            seen.add(query)
            deduped.append((rank, query))

    answerable: list[tuple[int, str, tuple[gw.Verdict, gw.Verdict]]] = []
    for rank, query in deduped:
        keep, votes = text_filter(query, pair.summary, gateway, template_overrides)
        if keep:
            answerable.append((rank, query, votes))
        else:
            rejects.append(
                RejectedCandidate(
                    pair_id=pair.id,
                    query=query,
                    provenance=FilterTrace(
                        candidate_rank=rank,
                        answerability_votes=votes,
                        dropped_by=DropStage.TEXT_FILTER,
                        reason="unanswerable",
                    ),
                )
            )

    votes_by_rank = {rank: votes for rank, _, votes in answerable}
    retained, sem_dropped = semantic_filter([(r, q) for r, q, _ in answerable], scorer, threshold)
    for rank, query, sim in sem_dropped:
        rejects.append(
            RejectedCandidate(
                pair_id=pair.id,
                query=query,
                provenance=FilterTrace(
                    candidate_rank=rank,
                    answerability_votes=votes_by_rank[rank],
                    dropped_by=DropStage.SEMANTIC_FILTER,
                    similarity_to_kept=sim,
                    reason="near duplicate",
                ),
            )
        )

    triples = [
        QdsTriple(
            pair_id=pair.id,
            query=query,
            query_summary=generate_query_summary(
                query, pair.summary, gateway, template_overrides=template_overrides
            ),
            provenance=FilterTrace(candidate_rank=rank, answerability_votes=votes_by_rank[rank]),
        )
        for rank, query in retained
    ]
    rejects.sort(key=lambda r: r.provenance.candidate_rank)
    return _PairOutcome(triples=triples, rejects=rejects, candidates=len(raw))


def synthesize(
    pairs: Sequence[DialoguePair],
    gateway: gw.Gateway,
    scorer: SimilarityScorer,
    threshold: float = DEFAULT_THRESHOLD,
    failure_cap: float = 0.05,
    workers: int = 1,
    template_overrides: dict[str, str] | None = None,
) -> SynthesisResult:
    """Run the full pipeline over pairs, in input order.

    A backend failure on one pair is logged and skipped; the run fails only
    when the failed fraction exceeds ``failure_cap``. All steps for a single
    pair run sequentially; pairs may run in parallel (``workers``), with
    results reduced in input order so output is deterministic.
    """
    result = SynthesisResult()
    result.stats.pairs_in = len(pairs)

    def _run(pair: DialoguePair):
        return _synthesize_pair(pair, gateway, scorer, threshold, template_overrides)

    outcomes: list[_PairOutcome | Exception]
    if workers <= 1:
        outcomes = []
        for pair in pairs:
            try:
                outcomes.append(_run(pair))
            except QdsError as exc:
                outcomes.append(exc)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run, pair) for pair in pairs]
            outcomes = []
            for future in futures:
                try:
                    outcomes.append(future.result())
                except QdsError as exc:
                    outcomes.append(exc)

    for pair, outcome in zip(pairs, outcomes):
        if isinstance(outcome, Exception):
            log.warning("pair %s failed: %s", pair.id, outcome)
            result.failures.append((pair.id, str(outcome)))
            result.stats.failed_pairs += 1
            continue
        result.triples.extend(outcome.triples)
        result.rejects.extend(outcome.rejects)
        result.stats.candidates_generated += outcome.candidates
        result.stats.triples_out += len(outcome.triples)
        result.stats.dropped_text += sum(
            1 for r in outcome.rejects if r.provenance.dropped_by == DropStage.TEXT_FILTER
        )
        result.stats.dropped_semantic += sum(
            1 for r in outcome.rejects if r.provenance.dropped_by == DropStage.SEMANTIC_FILTER
        )

    result.stats.validate()
    if pairs and result.stats.failed_pairs / len(pairs) > failure_cap:
        raise SynthesisFailureError(
            f"{result.stats.failed_pairs}/{len(pairs)} pairs failed "
            f"(cap {failure_cap:.0%}); first: {result.failures[0]}"
        )
    return result

"""Assembly of the mixed, length-aware instruction-tuning corpus.

The corpus mixes general summarization samples (one per dialogue-summary
pair) with query-based samples (a seeded random sample of triples per
dataset), then augments every sample with a copy whose instruction states
the target word count. With one augmentation per sample the total is exactly
``2 x (base pairs + sampled triples)``.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace as dc_replace
from enum import Enum

from .errors import AlreadyAugmentedError, DanglingPairRefError, InsufficientTriplesError
from .records import Dataset, DialoguePair
from .synthesis import QdsTriple

DEFAULT_GENERAL_INSTRUCTION = "Summarize the dialogue"
DEFAULT_QUERY_INSTRUCTION_FORMAT = "Answer the query about the dialogue: {query}"
LENGTH_SENTENCE_FORMAT = "The generated summary should be around {} words long."
PROMPT_FORMAT = "###Instruction: {instruction}. ### Input: {dialogue}."


class SampleTag(str, Enum):
    GENERAL = "general"
    QUERY = "query"
    LENGTH_AUG = "length_aug"


def length_of(summary: str) -> int:
    """Word count as users read it: whitespace-delimited tokens."""
    return len(summary.split())


def length_sentence(word_count: int) -> str:
    return LENGTH_SENTENCE_FORMAT.format(word_count)


def render_prompt(instruction: str, dialogue: str) -> str:
    return PROMPT_FORMAT.format(instruction=instruction, dialogue=dialogue)


@dataclass(frozen=True)
class SampleSource:
    dataset: Dataset
    pair_id: str
    triple_rank: int | None = None

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset.value,
            "pair_id": self.pair_id,
            "triple_rank": self.triple_rank,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SampleSource":
        rank = d.get("triple_rank")
        return cls(
            dataset=Dataset(d["dataset"]),
            pair_id=str(d["pair_id"]),
            triple_rank=int(rank) if rank is not None else None,
        )


@dataclass(frozen=True)
class InstructionSample:
    instruction: str
    input: str
    output: str
    tags: frozenset[SampleTag]
    source: SampleSource

    def render(self) -> str:
        return render_prompt(self.instruction, self.input)

    def to_dict(self) -> dict:
        return {
            "instruction": self.instruction,
            "input": self.input,
            "output": self.output,
            "tags": sorted(t.value for t in self.tags),
            "source": self.source.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InstructionSample":
        return cls(
            instruction=str(d["instruction"]),
            input=str(d["input"]),
            output=str(d["output"]),
            tags=frozenset(SampleTag(t) for t in d["tags"]),
            source=SampleSource.from_dict(d["source"]),
        )


def make_general(pair: DialoguePair, instruction: str = DEFAULT_GENERAL_INSTRUCTION) -> InstructionSample:
    return InstructionSample(
        instruction=instruction,
        input=pair.dialogue_text,
        output=pair.summary,
        tags=frozenset({SampleTag.GENERAL}),
        source=SampleSource(dataset=pair.dataset, pair_id=pair.id),
    )


def make_query(
    triple: QdsTriple,
    pairs_index: dict[str, DialoguePair],
    instruction_format: str = DEFAULT_QUERY_INSTRUCTION_FORMAT,
) -> InstructionSample:
    pair = pairs_index.get(triple.pair_id)
    if pair is None:
        raise DanglingPairRefError(triple.pair_id)
    return InstructionSample(
        instruction=instruction_format.format(query=triple.query),
        input=pair.dialogue_text,
        output=triple.query_summary,
        tags=frozenset({SampleTag.QUERY}),
        source=SampleSource(
            dataset=pair.dataset, pair_id=pair.id, triple_rank=triple.provenance.candidate_rank
        ),
    )


def augment_length(sample: InstructionSample) -> InstructionSample:
    """Copy a sample, appending the word-count sentence for its own output."""
    if SampleTag.LENGTH_AUG in sample.tags:
        raise AlreadyAugmentedError(f"sample for {sample.source.pair_id} is already length-augmented")
    return dc_replace(
        sample,
        instruction=f"{sample.instruction} {length_sentence(length_of(sample.output))}",
        tags=sample.tags | {SampleTag.LENGTH_AUG},
    )


@dataclass(frozen=True)
class MixRecipe:
    """How to mix: which datasets contribute base pairs, how many triples to
    sample per dataset, how many augmented copies to add per sample."""

    include_base: frozenset[Dataset] = frozenset(
        {Dataset.SAMSUM, Dataset.DIALOGSUM, Dataset.TODSUM}
    )
    triples_sample_size: int = 5000
    augment_factor: int = 1
    seed: int = 0
    general_instruction: str = DEFAULT_GENERAL_INSTRUCTION
    query_instruction_format: str = DEFAULT_QUERY_INSTRUCTION_FORMAT

    def __post_init__(self):
        object.__setattr__(self, "include_base", frozenset(Dataset(d) for d in self.include_base))
        if self.triples_sample_size < 0:
            raise ValueError("triples_sample_size must be >= 0")
        if self.augment_factor < 0:
            raise ValueError("augment_factor must be >= 0")


@dataclass
class AssemblyReport:
    total: int = 0
    base_pairs: int = 0
    sampled_triples: int = 0
    augment_factor: int = 1
    seed: int = 0
    by_dataset: dict[str, int] = field(default_factory=dict)
    by_tag: dict[str, int] = field(default_factory=dict)
    sampled_triple_refs: dict[str, list[str]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "base_pairs": self.base_pairs,
            "sampled_triples": self.sampled_triples,
            "augment_factor": self.augment_factor,
            "seed": self.seed,
            "by_dataset": dict(sorted(self.by_dataset.items())),
            "by_tag": dict(sorted(self.by_tag.items())),
            "sampled_triple_refs": {k: v for k, v in sorted(self.sampled_triple_refs.items())},
        }


def _dataset_order(dataset: Dataset) -> int:
    return list(Dataset).index(dataset)


def _sample_order(sample: InstructionSample) -> tuple:
    # Canonical corpus order: (dataset, pair id, tag, triple, original-then-augmented)
    return (
        _dataset_order(sample.source.dataset),
        sample.source.pair_id,
        0 if SampleTag.GENERAL in sample.tags else 1,
        sample.source.triple_rank if sample.source.triple_rank is not None else -1,
        1 if SampleTag.LENGTH_AUG in sample.tags else 0,
    )


def assemble(
    pairs_by_dataset: dict[Dataset, list[DialoguePair]],
    triples_by_dataset: dict[Dataset, list[QdsTriple]],
    recipe: MixRecipe,
) -> tuple[list[InstructionSample], AssemblyReport]:
    """Build the mixed corpus.

    Output order is deterministic: datasets in canonical order, then pair id,
    with each original immediately followed by its augmentations. Triple
    sampling is uniform without replacement, seeded per dataset so adding or
    removing one dataset never reshuffles another.
    """
    report = AssemblyReport(augment_factor=recipe.augment_factor, seed=recipe.seed)
    originals: list[InstructionSample] = []

    for dataset in sorted(pairs_by_dataset, key=_dataset_order):
        if dataset not in recipe.include_base:
            continue
        for pair in sorted(pairs_by_dataset[dataset], key=lambda p: p.id):
            originals.append(make_general(pair, recipe.general_instruction))
            report.base_pairs += 1

    pairs_index = {
        pair.id: pair for pairs in pairs_by_dataset.values() for pair in pairs
    }
    for dataset in sorted(triples_by_dataset, key=_dataset_order):
        triples = triples_by_dataset[dataset]
        if len(triples) < recipe.triples_sample_size:
            raise InsufficientTriplesError(dataset.value, len(triples), recipe.triples_sample_size)
        rng = random.Random(f"{recipe.seed}:{dataset.value}")
        chosen = sorted(
            rng.sample(range(len(triples)), recipe.triples_sample_size)
        )
        report.sampled_triple_refs[dataset.value] = [
            f"{triples[i].pair_id}#{triples[i].provenance.candidate_rank}" for i in chosen
        ]
        for i in chosen:
            originals.append(make_query(triples[i], pairs_index, recipe.query_instruction_format))
            report.sampled_triples += 1

    samples: list[InstructionSample] = []
    for sample in originals:
        samples.append(sample)
        for _ in range(recipe.augment_factor):
            samples.append(augment_length(sample))
    samples.sort(key=_sample_order)

    report.total = len(samples)
    expected = (1 + recipe.augment_factor) * (report.base_pairs + report.sampled_triples)
    if report.total != expected:
        raise AssertionError(f"count identity violated: {report.total} != {expected}")
    for sample in samples:
        report.by_dataset[sample.source.dataset.value] = (
            report.by_dataset.get(sample.source.dataset.value, 0) + 1
        )
        for tag in sample.tags:
            report.by_tag[tag.value] = report.by_tag.get(tag.value, 0) + 1
    return samples, report

from __future__ import annotations

import pytest

from qds.records import Dataset, DialoguePair, Split, Turn


def brute_force_lcs(a, b) -> int:
    """Exponential-time recursive LCS; independent oracle for the DP version."""
    if not a or not b:
        return 0
    if a[-1] == b[-1]:
        return 1 + brute_force_lcs(a[:-1], b[:-1])
    return max(brute_force_lcs(a[:-1], b), brute_force_lcs(a, b[:-1]))


def naive_clipped_overlap(a, b, n) -> int:
    """Clipped n-gram intersection by explicit list removal, no Counter."""
    grams_a = [tuple(a[i : i + n]) for i in range(len(a) - n + 1)]
    grams_b = [tuple(b[i : i + n]) for i in range(len(b) - n + 1)]
    overlap = 0
    for gram in grams_a:
        if gram in grams_b:
            grams_b.remove(gram)
            overlap += 1
    return overlap


def make_pair(
    pair_id: str = "p1",
    dataset: Dataset = Dataset.SAMSUM,
    split: Split = Split.TRAIN,
    turns: list[tuple[str, str]] | None = None,
    summary: str = "Amanda baked cookies and will bring Jerry some tomorrow.",
) -> DialoguePair:
    turns = turns or [
        ("Amanda", "I baked cookies. Do you want some?"),
        ("Jerry", "Sure!"),
        ("Amanda", "I'll bring you tomorrow :-)"),
    ]
    return DialoguePair(
        id=pair_id,
        dataset=dataset,
        split=split,
        dialogue=tuple(Turn(s, u) for s, u in turns),
        summary=summary,
    )


@pytest.fixture
def sample_pair() -> DialoguePair:
    return make_pair()


def build_synthesis_script(pair_specs: list[dict]) -> list[dict]:
    """Build a mock-backend script for the synthesis pipeline.

    Each pair spec: {"summary": str, "candidates": [(query, verdict1, verdict2,
    answer_or_None), ...]} in generation order. Semantic drops need no
    scripting (no backend call); answer is None for text-dropped candidates
    and for semantic drops.
    """
    entries = []
    for spec in pair_specs:
        summary = spec["summary"]
        entries.append(
            {
                "expect_substring": f"following context. Context: {summary[:40]}",
                "responses": [c[0] for c in spec["candidates"]],
            }
        )
        for query, v1, v2, _ in spec["candidates"]:
            entries.append(
                {
                    "expect_substring": f"Can we get an answer from the context, yes or no? Question: {query}",
                    "responses": [v1],
                }
            )
            entries.append(
                {
                    "expect_substring": f"fully answerable from the context without any guessing, yes or no? Question: {query}",
                    "responses": [v2],
                }
            )
        for query, v1, v2, answer in spec["candidates"]:
            if answer is not None:
                entries.append(
                    {
                        "expect_substring": f"Answer the question based on the context. Question: {query}",
                        "responses": [answer],
                    }
                )
    return entries


# The canonical two-pair scenario: 10 candidates, 4 text-dropped,
# 3 semantic-dropped, 3 triples. Similarities under the lexical fallback:
#   pair beach: "Who is Sharol going to the beach with?" vs the kept
#     "Who does Sharol go to the beach with?" -> 7/8 = 0.875 (drop)
#   pair resto: "What kind of food does the restaurant serve?" -> 0.875 (drop)
#               "What type of food is the restaurant?" -> 0.8 (drop)
BEACH_SUMMARY = (
    "Sharol is going to go to the beach with Emma, Anna, Emily, Wendy and Kate. "
    "Sharol is afraid that Wendy doesn't like her."
)
RESTO_SUMMARY = (
    "The user wants to book a table for 6 at an expensive Chinese restaurant on Tuesday."
)

SCENARIO_PAIRS = [
    {
        "summary": BEACH_SUMMARY,
        "candidates": [
            (
                "Who does Sharol go to the beach with?",
                "yes",
                "yes",
                "Sharol is going to go to the beach with Emma, Anna, Emily, Wendy and Kate.",
            ),
            ("Why is Sharol afraid Wendy doesn't like her?", "yes", "no", None),
            ("Who is Sharol going to the beach with?", "yes", "yes", None),
            ("What is Sharol afraid of?", "yes", "yes", "wendy doesn't like her"),
            ("What is Sharol's relationship to Wendy?", "no", "no", None),
        ],
    },
    {
        "summary": RESTO_SUMMARY,
        "candidates": [
            ("What type of food does the restaurant serve?", "yes", "yes", "chinese"),
            ("What kind of food does the restaurant serve?", "yes", "yes", None),
            ("Will the booking be successful?", "yes", "no", None),
            ("What type of food is the restaurant?", "yes", "yes", None),
            ("How would the agent feel about this?", "no", "no", None),
        ],
    },
]


def scenario_pairs() -> list[DialoguePair]:
    beach = make_pair(
        "beach-1",
        turns=[
            ("Emma", "We are going beach would you like to join in?"),
            ("Sharol", "sure who else is coming?"),
        ],
        summary=BEACH_SUMMARY,
    )
    resto = make_pair(
        "resto-1",
        turns=[
            ("User", "Can you find me a Chinese restaurant please?"),
            ("Agent", "Sure. Are you looking for a certain price range?"),
        ],
        summary=RESTO_SUMMARY,
    )
    return [beach, resto]


def scenario_script() -> list[dict]:
    return build_synthesis_script(SCENARIO_PAIRS)

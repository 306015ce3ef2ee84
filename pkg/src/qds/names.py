"""Speaker-name normalization for dialogues with #PersonN# placeholders.

Some corpora anonymize speakers as ``#Person1#``, ``#Person2#``, ... even
though real names may appear in the surrounding text. This module replaces
each placeholder with a plausible name: a generation backend predicts the
speaker's name from the dialogue, a rule-based check validates it, and on
failure a second prompt picks from a pool of ten candidate names (five male,
five female, sampled per dialogue with a seeded RNG). Replacements are also
applied inside the reference summary.
"""

from __future__ import annotations

import random
import re
from dataclasses import replace as dc_replace
from importlib import resources
from pathlib import Path

from . import gateway
from .errors import NoValidNameError
from .records import DialoguePair, Turn, render_dialogue

PLACEHOLDER_PATTERN = re.compile(r"#Person\d+#")

#: Names may use letters plus hyphens or apostrophes ("Mary-Jane", "O'Brien").
_NAME_TOKEN = re.compile(r"^[A-Za-z][A-Za-z'-]*$")

MAX_NAME_TOKENS = 2


def _read_name_file(path: str | Path) -> list[str]:
    names = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            entry = line.split("#", 1)[0].strip()
            if entry:
                names.append(entry)
    return names


def _packaged(filename: str) -> Path:
    return Path(str(resources.files("qds").joinpath("data", filename)))


def load_forbidden_names(path: str | Path | None = None) -> frozenset[str]:
    """Load the forbidden-name config (one name per line, '#' comments)."""
    path = path or _packaged("forbidden_names.txt")
    return frozenset(n.casefold() for n in _read_name_file(path))


def load_name_pools(
    male_path: str | Path | None = None, female_path: str | Path | None = None
) -> tuple[list[str], list[str]]:
    male = _read_name_file(male_path or _packaged("male_names.txt"))
    female = _read_name_file(female_path or _packaged("female_names.txt"))
    return male, female


def sample_candidate_pool(
    pair_id: str,
    seed: int,
    male: list[str] | None = None,
    female: list[str] | None = None,
) -> list[str]:
    """Ten candidate names for one dialogue: 5 male + 5 female, seeded per pair."""
    if male is None or female is None:
        male, female = load_name_pools()
    rng = random.Random(f"{seed}:{pair_id}")
    return rng.sample(male, 5) + rng.sample(female, 5)


def rule_based_name_valid(
    name: str,
    dialogue: str,
    forbidden: frozenset[str] | set[str] = frozenset(),
    from_pool: bool = False,
) -> tuple[bool, str]:
    """Total validity check; returns (verdict, reason).

    A name passes when it is non-empty, at most two tokens, made of
    letters/hyphens/apostrophes only, not forbidden, and appears verbatim in
    the dialogue. Pool-drawn names skip the in-dialogue requirement.
    """
    name = name.strip()
    if not name:
        return False, "empty"
    tokens = name.split()
    if len(tokens) > MAX_NAME_TOKENS:
        return False, "length"
    if not all(_NAME_TOKEN.match(t) for t in tokens):
        return False, "special-symbol"
    if name.casefold() in forbidden:
        return False, "forbidden"
    if not from_pool and name not in dialogue:
        return False, "not-in-dialogue"
    return True, "ok"


def _clean_prediction(text: str) -> str:
    # Trim the kind of framing backends add around a bare name.
    return text.strip().strip(".,:;!\"'").strip()


def _find_pool_name(response: str, pool: list[str]) -> str | None:
    lowered = response.casefold()
    for name in pool:
        if re.search(rf"\b{re.escape(name.casefold())}\b", lowered):
            return name
    return None


def normalize_dialogsum_speakers(
    pair: DialoguePair,
    name_oracle: gateway.Gateway,
    candidate_pool: list[str],
    forbidden: frozenset[str] | set[str] = frozenset(),
    template_overrides: dict[str, str] | None = None,
) -> DialoguePair:
    """Replace every #PersonN# placeholder in a pair with a concrete name.

    Placeholders are handled in numeric order; each replacement is applied to
    the dialogue and the summary before the next placeholder is predicted, and
    names already assigned are off-limits for later placeholders.
    Raises NoValidNameError if neither the prediction nor the pool works.
    """
    working = pair
    taken: set[str] = set()
    while True:
        found = PLACEHOLDER_PATTERN.findall(working.dialogue_text + "\n" + working.summary)
        if not found:
            return working
        placeholder = min(set(found), key=lambda p: int(p.strip("#").removeprefix("Person")))
        dialogue_text = working.dialogue_text
        # A replacement may not collide with an already-assigned name or with a
        # real speaker already present; either would merge two speakers.
        existing_speakers = {
            t.speaker.casefold() for t in working.dialogue if not PLACEHOLDER_PATTERN.search(t.speaker)
        }
        blocked = frozenset(forbidden) | {n.casefold() for n in taken} | existing_speakers

        predict_prompt = gateway.render(
            gateway.get_template(gateway.NAME_PREDICT, template_overrides),
            {"Person": placeholder, "Dialogue": dialogue_text},
        )
        predicted = _clean_prediction(name_oracle.generate_one(predict_prompt))
        ok, _ = rule_based_name_valid(predicted, dialogue_text, blocked)
        chosen = predicted if ok else None

        if chosen is None:
            select_prompt = gateway.render(
                gateway.get_template(gateway.NAME_SELECT, template_overrides),
                {
                    "Person": placeholder,
                    "candidate names": ", ".join(candidate_pool),
                    "Dialogue": dialogue_text,
                },
            )
            response = name_oracle.generate_one(select_prompt)
            selected = _find_pool_name(response, candidate_pool)
            if selected is not None:
                ok, _ = rule_based_name_valid(selected, dialogue_text, blocked, from_pool=True)
                if ok:
                    chosen = selected
        if chosen is None:
            raise NoValidNameError(placeholder)

        taken.add(chosen)
        working = _substitute(working, placeholder, chosen)


def _substitute(pair: DialoguePair, placeholder: str, name: str) -> DialoguePair:
    turns = tuple(
        Turn(
            speaker=t.speaker.replace(placeholder, name),
            utterance=t.utterance.replace(placeholder, name),
        )
        for t in pair.dialogue
    )
    return dc_replace(pair, dialogue=turns, summary=pair.summary.replace(placeholder, name))


def has_placeholders(pair: DialoguePair) -> bool:
    return bool(PLACEHOLDER_PATTERN.search(pair.dialogue_text + "\n" + pair.summary))


__all__ = [
    "PLACEHOLDER_PATTERN",
    "has_placeholders",
    "load_forbidden_names",
    "load_name_pools",
    "normalize_dialogsum_speakers",
    "render_dialogue",
    "rule_based_name_valid",
    "sample_candidate_pool",
]

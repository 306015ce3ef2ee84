"""Domain records and line-delimited JSON I/O.

Every corpus and pipeline artifact is stored as UTF-8 JSON lines, one record
per line, so files stream, diff, and concatenate cleanly. Record types are
frozen dataclasses with ``to_dict``/``from_dict`` pairs; serialization is
lossless (``load(write(x)) == x`` field for field).

Dialogue fields accept two encodings on input: a list of
``{"speaker", "utterance"}`` objects, or a flat string that is split on
newlines and then on the first ``": "`` of each line.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from .errors import DuplicateIdError, MalformedRecordError

_WHITESPACE = re.compile(r"[\r\n\t]+")


class Dataset(str, Enum):
    SAMSUM = "samsum"
    DIALOGSUM = "dialogsum"
    TODSUM = "todsum"
    DREAM = "dream"


#: Datasets whose pairs must carry a non-empty reference summary.
SUMMARIZATION_DATASETS = frozenset({Dataset.SAMSUM, Dataset.DIALOGSUM, Dataset.TODSUM})


class Split(str, Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"


@dataclass(frozen=True)
class Turn:
    """One dialogue turn. Utterances are normalized to a single line."""

    speaker: str
    utterance: str

    def __post_init__(self):
        object.__setattr__(self, "speaker", _WHITESPACE.sub(" ", self.speaker).strip())
        object.__setattr__(self, "utterance", _WHITESPACE.sub(" ", self.utterance).strip())
        if not self.speaker:
            raise ValueError("turn has empty speaker")
        if not self.utterance:
            raise ValueError("turn has empty utterance")

    def to_dict(self) -> dict:
        return {"speaker": self.speaker, "utterance": self.utterance}

    @classmethod
    def from_dict(cls, d: dict) -> "Turn":
        return cls(speaker=str(d["speaker"]), utterance=str(d["utterance"]))


def parse_turns(text: str) -> tuple[Turn, ...]:
    """Split a flat dialogue transcript into turns.

    Lines are separated by newlines; each line is split on its first ``": "``.
    Raises ValueError for lines without a speaker separator.
    """
    turns = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        speaker, sep, utterance = line.partition(": ")
        if not sep:
            raise ValueError(f"turn line has no 'speaker: utterance' separator: {line!r}")
        turns.append(Turn(speaker=speaker, utterance=utterance))
    return tuple(turns)


def render_dialogue(dialogue: Sequence[Turn]) -> str:
    """Serialize turns back to the flat ``speaker: utterance`` transcript."""
    return "\n".join(f"{t.speaker}: {t.utterance}" for t in dialogue)


def _coerce_dialogue(raw: Any) -> tuple[Turn, ...]:
    if isinstance(raw, str):
        return parse_turns(raw)
    if isinstance(raw, (list, tuple)):
        return tuple(Turn.from_dict(t) if isinstance(t, dict) else t for t in raw)
    raise ValueError(f"dialogue must be a string or list of turns, got {type(raw).__name__}")


@dataclass(frozen=True)
class DialoguePair:
    """One dialogue with its reference summary and provenance."""

    id: str
    dataset: Dataset
    split: Split
    dialogue: tuple[Turn, ...]
    summary: str

    def __post_init__(self):
        object.__setattr__(self, "dataset", Dataset(self.dataset))
        object.__setattr__(self, "split", Split(self.split))
        object.__setattr__(self, "dialogue", _coerce_dialogue(self.dialogue))
        if not self.id:
            raise ValueError("pair has empty id")
        if not self.dialogue:
            raise ValueError("pair has empty dialogue")
        if self.dataset in SUMMARIZATION_DATASETS and not self.summary.strip():
            raise ValueError("summarization pair has empty summary")

    @property
    def dialogue_text(self) -> str:
        return render_dialogue(self.dialogue)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "dataset": self.dataset.value,
            "split": self.split.value,
            "dialogue": [t.to_dict() for t in self.dialogue],
            "summary": self.summary,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DialoguePair":
        return cls(
            id=str(d["id"]),
            dataset=Dataset(d["dataset"]),
            split=Split(d["split"]),
            dialogue=_coerce_dialogue(d["dialogue"]),
            summary=str(d.get("summary", "")),
        )


@dataclass(frozen=True)
class DreamItem:
    """A dialogue-comprehension item: question plus exactly three choices."""

    id: str
    dialogue: tuple[Turn, ...]
    question: str
    choices: tuple[str, str, str]
    answer_index: int

    def __post_init__(self):
        object.__setattr__(self, "dialogue", _coerce_dialogue(self.dialogue))
        object.__setattr__(self, "choices", tuple(str(c) for c in self.choices))
        if len(self.choices) != 3:
            raise ValueError(f"item {self.id}: expected 3 choices, got {len(self.choices)}")
        if len(set(self.choices)) != 3:
            raise ValueError(f"item {self.id}: choices are not pairwise distinct")
        if not 0 <= self.answer_index <= 2:
            raise ValueError(f"item {self.id}: answer_index {self.answer_index} out of range")
        if not self.question.strip():
            raise ValueError(f"item {self.id}: empty question")

    @property
    def dialogue_text(self) -> str:
        return render_dialogue(self.dialogue)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "dialogue": [t.to_dict() for t in self.dialogue],
            "question": self.question,
            "choices": list(self.choices),
            "answer_index": self.answer_index,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DreamItem":
        return cls(
            id=str(d["id"]),
            dialogue=_coerce_dialogue(d["dialogue"]),
            question=str(d["question"]),
            choices=tuple(d["choices"]),
            answer_index=int(d["answer_index"]),
        )


@dataclass(frozen=True)
class CorpusStats:
    """Record counts for one dataset, as reported by ``qds stats``."""

    dataset: Dataset
    counts: dict[Split, int] = field(default_factory=dict)
    triple_count: int = 0

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset.value,
            "counts": {s.value: n for s, n in sorted(self.counts.items(), key=lambda kv: kv[0].value)},
            "triple_count": self.triple_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusStats":
        return cls(
            dataset=Dataset(d["dataset"]),
            counts={Split(k): int(v) for k, v in d.get("counts", {}).items()},
            triple_count=int(d.get("triple_count", 0)),
        )


def iter_jsonl(path: str | Path) -> Iterable[tuple[int, dict]]:
    """Yield (1-based line number, parsed object) for non-blank lines."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecordError(lineno, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise MalformedRecordError(lineno, "record is not an object")
            yield lineno, obj


def load_records(path: str | Path, from_dict: Callable[[dict], Any]) -> list:
    """Load a homogeneous record file, wrapping per-record failures with line numbers."""
    out = []
    for lineno, obj in iter_jsonl(path):
        try:
            out.append(from_dict(obj))
        except MalformedRecordError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            reason = f"missing {exc.args[0]}" if isinstance(exc, KeyError) else str(exc)
            raise MalformedRecordError(lineno, reason) from exc
    return out


def load_pairs(path: str | Path, dataset: Dataset, split: Split) -> list[DialoguePair]:
    """Load dialogue-summary pairs, enforcing id uniqueness within (dataset, split).

    Records may omit ``dataset``/``split`` (filled from the arguments); when
    present they must match.
    """
    dataset = Dataset(dataset)
    split = Split(split)
    seen: set[str] = set()
    pairs: list[DialoguePair] = []
    for lineno, obj in iter_jsonl(path):
        rec_dataset = obj.get("dataset", dataset.value)
        rec_split = obj.get("split", split.value)
        if Dataset(rec_dataset) != dataset:
            raise MalformedRecordError(lineno, f"dataset {rec_dataset!r} does not match {dataset.value!r}")
        if Split(rec_split) != split:
            raise MalformedRecordError(lineno, f"split {rec_split!r} does not match {split.value!r}")
        if "summary" not in obj and dataset in SUMMARIZATION_DATASETS:
            raise MalformedRecordError(lineno, "missing summary")
        try:
            pair = DialoguePair(
                id=str(obj.get("id", "")),
                dataset=dataset,
                split=split,
                dialogue=obj.get("dialogue", ()),
                summary=str(obj.get("summary", "")),
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise MalformedRecordError(lineno, str(exc)) from exc
        if pair.id in seen:
            raise DuplicateIdError(pair.id)
        seen.add(pair.id)
        pairs.append(pair)
    return pairs


def load_pairs_auto(path: str | Path) -> list[DialoguePair]:
    """Load a canonical pairs file, taking dataset/split from its first record."""
    for _, obj in iter_jsonl(path):
        return load_pairs(path, Dataset(obj["dataset"]), Split(obj["split"]))
    return []


def load_dream_items(path: str | Path) -> list[DreamItem]:
    seen: set[str] = set()
    items: list[DreamItem] = []
    for lineno, obj in iter_jsonl(path):
        try:
            item = DreamItem.from_dict(obj)
        except (ValueError, KeyError, TypeError) as exc:
            reason = f"missing {exc.args[0]}" if isinstance(exc, KeyError) else str(exc)
            raise MalformedRecordError(lineno, reason) from exc
        if item.id in seen:
            raise DuplicateIdError(item.id)
        seen.add(item.id)
        items.append(item)
    return items


def write_records(items: Iterable[Any], path: str | Path) -> int:
    """Write records as JSON lines and return the number written.

    Items must expose ``to_dict`` (all record types here do) or already be
    plain dicts. Output is deterministic: insertion-ordered fields, no ASCII
    escaping.
    """
    path = Path(path)
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            obj = item.to_dict() if hasattr(item, "to_dict") else item
            fh.write(json.dumps(obj, ensure_ascii=False))
            fh.write("\n")
            count += 1
    return count


def count_records(path: str | Path) -> int:
    return sum(1 for _ in iter_jsonl(path))

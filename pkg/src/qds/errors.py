"""Exception types shared across the toolkit."""


class QdsError(Exception):
    """Base class for all toolkit errors."""


class MalformedRecordError(QdsError):
    """A record file line failed to parse or validate."""

    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class DuplicateIdError(QdsError):
    """Two records in one (dataset, split) share an id."""

    def __init__(self, record_id: str):
        self.record_id = record_id
        super().__init__(f"duplicate id: {record_id}")


class NoValidNameError(QdsError):
    """Neither the predicted name nor the candidate pool produced a valid speaker name."""

    def __init__(self, placeholder: str):
        self.placeholder = placeholder
        super().__init__(f"no valid name for {placeholder}")


class MixedMetricsError(QdsError):
    """Aggregation was asked to average scores of different metrics."""


class BackendUnavailableError(QdsError):
    """A generation or similarity backend could not be reached (after retries)."""


class ResponseMalformedError(QdsError):
    """A backend answered with a payload the client cannot interpret."""


class UnboundPlaceholderError(QdsError):
    """A prompt template was rendered without a binding for one of its placeholders."""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unbound placeholder: {name}")


class MockScriptError(QdsError):
    """The scripted mock backend received a request its script does not cover."""


class EmptyGenerationError(QdsError):
    """The backend returned an empty string where text was required."""


class DanglingPairRefError(QdsError):
    """A triple references a pair id that is not in the given index."""

    def __init__(self, pair_id: str):
        self.pair_id = pair_id
        super().__init__(f"triple references unknown pair: {pair_id}")


class AlreadyAugmentedError(QdsError):
    """Length augmentation was applied to a sample that already carries it."""


class InsufficientTriplesError(QdsError):
    """A mix recipe asked for more triples than a dataset has."""

    def __init__(self, dataset: str, have: int, need: int):
        self.dataset = dataset
        self.have = have
        self.need = need
        super().__init__(f"{dataset}: need {need} triples, have {have}")


class AlignmentError(QdsError):
    """Candidate and reference files do not cover the same item ids."""

    def __init__(self, missing_candidates: set, missing_references: set):
        self.missing_candidates = frozenset(missing_candidates)
        self.missing_references = frozenset(missing_references)
        parts = []
        if missing_candidates:
            parts.append(f"ids without candidate: {sorted(missing_candidates)[:5]}")
        if missing_references:
            parts.append(f"ids without reference: {sorted(missing_references)[:5]}")
        super().__init__("; ".join(parts) or "misaligned files")


class EmptyDimensionError(QdsError):
    """Every verdict is missing the requested judge dimension."""


class SynthesisFailureError(QdsError):
    """Too many pairs failed during synthesis (above the configured cap)."""


class PortInUseError(QdsError):
    """The annotation server port is already bound."""

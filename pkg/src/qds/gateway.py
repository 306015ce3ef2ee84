"""Uniform interface to text-generation backends, plus prompt templates.

Backends speak a minimal wire protocol: ``POST {prompt, n, max_tokens,
temperature, stop}`` answered by ``{"texts": [...]}``. A scripted mock
backend makes every pipeline run reproducible without any network access.
"""

from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Protocol, Sequence

from .errors import (
    BackendUnavailableError,
    MockScriptError,
    ResponseMalformedError,
    UnboundPlaceholderError,
)

PLACEHOLDER = re.compile(r"\$\{([^}]+)\}")

# Template names
QUERY_GEN = "QUERY_GEN"
ANSWERABLE_1 = "ANSWERABLE_1"
ANSWERABLE_2 = "ANSWERABLE_2"
QUERY_SUMMARY = "QUERY_SUMMARY"
JUDGE_EVAL = "JUDGE_EVAL"
NAME_PREDICT = "NAME_PREDICT"
NAME_SELECT = "NAME_SELECT"


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str

    @property
    def placeholders(self) -> tuple[str, ...]:
        seen: list[str] = []
        for m in PLACEHOLDER.finditer(self.body):
            if m.group(1) not in seen:
                seen.append(m.group(1))
        return tuple(seen)


TEMPLATES: dict[str, PromptTemplate] = {
    QUERY_GEN: PromptTemplate(
        QUERY_GEN,
        "Generate an answerable and specific question based on the following context. "
        "Context: ${Summary}",
    ),
    ANSWERABLE_1: PromptTemplate(
        ANSWERABLE_1,
        "Can we get an answer from the context, yes or no? "
        "Question: ${Question} Context: ${Summary}",
    ),
    ANSWERABLE_2: PromptTemplate(
        ANSWERABLE_2,
        "Is the question fully answerable from the context without any guessing, yes or no? "
        "Question: ${Question} Context: ${Summary}",
    ),
    # The query-to-summary task ships with a minimal default; override via config.
    QUERY_SUMMARY: PromptTemplate(
        QUERY_SUMMARY,
        "Answer the question based on the context. "
        "Question: ${Question} Context: ${Summary}",
    ),
    JUDGE_EVAL: PromptTemplate(
        JUDGE_EVAL,
        "Evaluate the quality of the abstractive summary from the dialogue. "
        "Please be extremely picky. Rate each summary on four dimensions: "
        "Faithfullness: whether the summary is correct according to dialogue, "
        "Fluency: Whether summary is grammarly correct, "
        "Informativeness: Whether the summary contains all essential information, "
        "Conciseness: Whether the summary is very concise (not verbose). "
        "Output should follow the template: 'Faithfulness': value, 'Fluency': value "
        "'Informativeness': value, 'Conciseness': value. "
        "You should rate on a scale from 1 (worst) to 5 (best). "
        "Do not give detailed explanations. "
        "Dialogue ${Dialogue}. Summary: ${Summary}",
    ),
    NAME_PREDICT: PromptTemplate(
        NAME_PREDICT,
        "Who is ${Person} in the following dialogue? ${Dialogue}",
    ),
    NAME_SELECT: PromptTemplate(
        NAME_SELECT,
        "Select on proper name for ${Person} from ${candidate names} "
        "in the following dialogue? ${Dialogue}",
    ),
}


def get_template(name: str, overrides: dict[str, str] | None = None) -> PromptTemplate:
    if overrides and name in overrides:
        return PromptTemplate(name, overrides[name])
    return TEMPLATES[name]


def render(template: PromptTemplate, bindings: dict[str, str]) -> str:
    """Byte-exact substitution of ``${placeholder}`` occurrences.

    Raises UnboundPlaceholderError for any placeholder without a binding;
    guarantees no unresolved ``${...}`` remains in the output.
    """

    def _sub(match: re.Match) -> str:
        name = match.group(1)
        if name not in bindings:
            raise UnboundPlaceholderError(name)
        return bindings[name]

    return PLACEHOLDER.sub(_sub, template.body)


class Verdict(str, Enum):
    YES = "yes"
    NO = "no"
    UNPARSEABLE = "unparseable"


_FIRST_WORD = re.compile(r"[A-Za-z]+")


def parse_yes_no(text: str) -> Verdict:
    """Classify by the first alphabetic token, case-insensitive."""
    m = _FIRST_WORD.search(text)
    if m is None:
        return Verdict.UNPARSEABLE
    word = m.group(0).lower()
    if word == "yes":
        return Verdict.YES
    if word == "no":
        return Verdict.NO
    return Verdict.UNPARSEABLE


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    max_new_tokens: int = 64
    temperature: float = 0.0
    n_samples: int = 1
    stop: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class GenerationResult:
    texts: tuple[str, ...]
    backend_id: str
    latency_ms: int = 0


class Backend(Protocol):
    backend_id: str

    def complete(
        self,
        prompt: str,
        n: int,
        max_tokens: int,
        temperature: float,
        stop: Sequence[str] | None,
    ) -> list[str]: ...


@dataclass
class MockEntry:
    expect_substring: str
    responses: list[str]
    consumed: bool = False


class MockBackend:
    """Deterministic scripted backend.

    In strict order mode the next unconsumed entry must match the prompt; in
    content-keyed mode the first unconsumed entry whose ``expect_substring``
    occurs in the prompt is used, so pair order does not matter. Calls are
    serialized, but entry/exit is instrumented first so a concurrency bound
    above the mock remains observable.
    """

    backend_id = "mock"

    def __init__(self, entries: Sequence[dict | MockEntry], strict_order: bool = True, delay_s: float = 0.0):
        self.entries = [
            e if isinstance(e, MockEntry) else MockEntry(str(e["expect_substring"]), list(e["responses"]))
            for e in entries
        ]
        self.strict_order = strict_order
        self.delay_s = delay_s
        self.calls: list[str] = []
        self.max_in_flight_observed = 0
        self._in_flight = 0
        self._cursor = 0
        self._gauge_lock = threading.Lock()
        self._exec_lock = threading.Lock()

    def _pick(self, prompt: str) -> MockEntry:
        if self.strict_order:
            while self._cursor < len(self.entries) and self.entries[self._cursor].consumed:
                self._cursor += 1
            if self._cursor < len(self.entries):
                entry = self.entries[self._cursor]
                if entry.expect_substring not in prompt:
                    raise MockScriptError(
                        f"next script entry expects {entry.expect_substring!r}, "
                        f"prompt was {prompt[:120]!r}"
                    )
                return entry
        else:
            for entry in self.entries:
                if not entry.consumed and entry.expect_substring in prompt:
                    return entry
        raise MockScriptError(f"no script entry left for prompt {prompt[:120]!r}")

    def complete(self, prompt, n, max_tokens, temperature, stop):
        with self._gauge_lock:
            self._in_flight += 1
            self.max_in_flight_observed = max(self.max_in_flight_observed, self._in_flight)
        try:
            if self.delay_s:
                time.sleep(self.delay_s)
            with self._exec_lock:
                self.calls.append(prompt)
                entry = self._pick(prompt)
                entry.consumed = True
                if len(entry.responses) < n:
                    raise MockScriptError(
                        f"script entry for {entry.expect_substring!r} has "
                        f"{len(entry.responses)} responses, request wants {n}"
                    )
                return list(entry.responses[:n])
        finally:
            with self._gauge_lock:
                self._in_flight -= 1


def load_mock_script(path: str | Path, strict_order: bool = True) -> MockBackend:
    """Load a mock script: a JSON array of {expect_substring, responses}."""
    with open(path, "r", encoding="utf-8") as fh:
        entries = json.load(fh)
    if not isinstance(entries, list):
        raise MockScriptError("mock script must be a JSON array")
    return MockBackend(entries, strict_order=strict_order)


class HttpBackend:
    """Minimal JSON-over-HTTP backend client.

    Transport failures and 5xx responses raise BackendUnavailableError (the
    gateway retries those); a 2xx with an unusable body raises
    ResponseMalformedError (not retried).
    """

    def __init__(
        self,
        endpoint: str,
        api_key: str | None = None,
        timeout: float = 60.0,
        post: Callable | None = None,
    ):
        self.endpoint = endpoint
        self.api_key = api_key
        self.timeout = timeout
        self.backend_id = f"http:{endpoint}"
        if post is None:
            import requests

            session = requests.Session()

            def post(url, json, headers, timeout):  # noqa: A002 - mirrors requests signature
                return session.post(url, json=json, headers=headers, timeout=timeout)

        self._post = post

    def complete(self, prompt, n, max_tokens, temperature, stop):
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {
            "prompt": prompt,
            "n": n,
            "max_tokens": max_tokens,
            "temperature": temperature,
        }
        if stop:
            payload["stop"] = list(stop)
        try:
            response = self._post(self.endpoint, json=payload, headers=headers, timeout=self.timeout)
        except Exception as exc:
            raise BackendUnavailableError(f"{self.endpoint}: {exc}") from exc
        status = getattr(response, "status_code", 0)
        if status >= 500 or status == 429:
            raise BackendUnavailableError(f"{self.endpoint}: HTTP {status}")
        if status >= 400:
            raise ResponseMalformedError(f"{self.endpoint}: HTTP {status}")
        try:
            body = response.json()
            texts = body["texts"]
        except Exception as exc:
            raise ResponseMalformedError(f"{self.endpoint}: unusable response body") from exc
        if not isinstance(texts, list) or len(texts) < n:
            raise ResponseMalformedError(
                f"{self.endpoint}: expected >= {n} texts, got {texts!r:.120}"
            )
        return [str(t) for t in texts[:n]]


class HttpSimilarityScorer:
    """Similarity backend client: ``POST {text_a, text_b}`` -> ``{"score": s}``.

    The raw score is normalized by an affine rescale against a configurable
    baseline constant and clamped into [0, 1].
    """

    def __init__(
        self,
        endpoint: str,
        api_key: str | None = None,
        baseline: float = 0.0,
        timeout: float = 60.0,
        post: Callable | None = None,
    ):
        from .metrics import rescale_with_baseline

        self._rescale = rescale_with_baseline
        self.endpoint = endpoint
        self.baseline = baseline
        self.api_key = api_key
        self.timeout = timeout
        self.backend_id = f"http:{endpoint};baseline={baseline}"
        if post is None:
            import requests

            session = requests.Session()

            def post(url, json, headers, timeout):  # noqa: A002
                return session.post(url, json=json, headers=headers, timeout=timeout)

        self._post = post

    def score(self, a: str, b: str) -> float:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = self._post(
                self.endpoint, json={"text_a": a, "text_b": b}, headers=headers, timeout=self.timeout
            )
        except Exception as exc:
            raise BackendUnavailableError(f"{self.endpoint}: {exc}") from exc
        status = getattr(response, "status_code", 0)
        if status >= 500 or status == 429:
            raise BackendUnavailableError(f"{self.endpoint}: HTTP {status}")
        try:
            raw = float(response.json()["score"])
        except Exception as exc:
            raise ResponseMalformedError(f"{self.endpoint}: unusable similarity response") from exc
        return self._rescale(raw, self.baseline)


@dataclass
class Gateway:
    """Shared dispatch in front of a backend: retries with exponential
    backoff and a bounded number of concurrent in-flight requests."""

    backend: Backend
    retry_limit: int = 2
    backoff_base: float = 0.5
    max_in_flight: int = 4
    sleep: Callable[[float], None] = time.sleep
    _semaphore: threading.Semaphore = field(init=False, repr=False)

    def __post_init__(self):
        self._semaphore = threading.Semaphore(self.max_in_flight)

    @property
    def backend_id(self) -> str:
        return self.backend.backend_id

    def generate(self, request: GenerationRequest) -> GenerationResult:
        last_error: BackendUnavailableError | None = None
        with self._semaphore:
            start = time.monotonic()
            for attempt in range(self.retry_limit + 1):
                try:
                    texts = self.backend.complete(
                        request.prompt,
                        request.n_samples,
                        request.max_new_tokens,
                        request.temperature,
                        request.stop,
                    )
                    latency_ms = int((time.monotonic() - start) * 1000)
                    return GenerationResult(
                        texts=tuple(texts), backend_id=self.backend.backend_id, latency_ms=latency_ms
                    )
                except BackendUnavailableError as exc:
                    last_error = exc
                    if attempt < self.retry_limit:
                        self.sleep(self.backoff_base * (2**attempt))
        raise BackendUnavailableError(
            f"backend unavailable after {self.retry_limit + 1} attempts: {last_error}"
        )

    def generate_one(self, prompt: str, max_new_tokens: int = 64, temperature: float = 0.0) -> str:
        request = GenerationRequest(prompt=prompt, max_new_tokens=max_new_tokens, temperature=temperature)
        return self.generate(request).texts[0]

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor

import pytest

from qds.errors import (
    BackendUnavailableError,
    MockScriptError,
    ResponseMalformedError,
    UnboundPlaceholderError,
)
from qds.gateway import (
    ANSWERABLE_1,
    ANSWERABLE_2,
    JUDGE_EVAL,
    NAME_PREDICT,
    NAME_SELECT,
    QUERY_GEN,
    Gateway,
    GenerationRequest,
    HttpBackend,
    HttpSimilarityScorer,
    MockBackend,
    PromptTemplate,
    Verdict,
    get_template,
    load_mock_script,
    parse_yes_no,
    render,
)


class TestTemplates:
    def test_query_gen_renders_verbatim(self):
        text = render(get_template(QUERY_GEN), {"Summary": "S"})
        assert text == (
            "Generate an answerable and specific question based on the following context. "
            "Context: S"
        )

    def test_answerable_prompts_render_verbatim(self):
        one = render(get_template(ANSWERABLE_1), {"Question": "Q", "Summary": "S"})
        assert one == "Can we get an answer from the context, yes or no? Question: Q Context: S"
        two = render(get_template(ANSWERABLE_2), {"Question": "Q", "Summary": "S"})
        assert two == (
            "Is the question fully answerable from the context without any guessing, yes or no? "
            "Question: Q Context: S"
        )

    def test_name_templates_render_verbatim(self):
        predict = render(get_template(NAME_PREDICT), {"Person": "#Person1#", "Dialogue": "D"})
        assert predict == "Who is #Person1# in the following dialogue? D"
        select = render(
            get_template(NAME_SELECT),
            {"Person": "#Person1#", "candidate names": "Anna, Ben", "Dialogue": "D"},
        )
        assert select == (
            "Select on proper name for #Person1# from Anna, Ben in the following dialogue? D"
        )

    def test_judge_template_mentions_all_dimensions_and_scale(self):
        text = render(get_template(JUDGE_EVAL), {"Dialogue": "D", "Summary": "S"})
        assert text.startswith("Evaluate the quality of the abstractive summary from the dialogue.")
        for needle in (
            "'Faithfulness': value",
            "'Fluency': value",
            "'Informativeness': value",
            "'Conciseness': value",
            "from 1 (worst) to 5 (best)",
            "Dialogue D. Summary: S",
        ):
            assert needle in text

    def test_unbound_placeholder(self):
        with pytest.raises(UnboundPlaceholderError) as err:
            render(get_template(QUERY_GEN), {})
        assert err.value.name == "Summary"

    def test_no_unresolved_placeholder_remains(self):
        text = render(get_template(ANSWERABLE_1), {"Question": "q", "Summary": "s"})
        assert "${" not in text

    def test_rendering_injective_for_distinct_bindings(self):
        template = PromptTemplate("t", "A ${x} B ${y}")
        a = render(template, {"x": "1", "y": "2"})
        b = render(template, {"x": "12", "y": ""})
        c = render(template, {"x": "1", "y": "3"})
        assert len({a, b, c}) == 3

    def test_override_replaces_body(self):
        text = render(
            get_template(QUERY_GEN, {QUERY_GEN: "Ask about ${Summary}"}), {"Summary": "X"}
        )
        assert text == "Ask about X"


class TestParseYesNo:
    @pytest.mark.parametrize(
        "text,expected",
        [
            ("Yes.", Verdict.YES),
            ("yes", Verdict.YES),
            ("  YES!", Verdict.YES),
            ("no, it cannot", Verdict.NO),
            ("No", Verdict.NO),
            ("maybe", Verdict.UNPARSEABLE),
            ("", Verdict.UNPARSEABLE),
            ("42", Verdict.UNPARSEABLE),
            ("I think yes", Verdict.UNPARSEABLE),
        ],
    )
    def test_first_alphabetic_token(self, text, expected):
        assert parse_yes_no(text) == expected


class TestRequestValidation:
    def test_n_samples_must_be_positive(self):
        with pytest.raises(ValueError):
            GenerationRequest(prompt="p", n_samples=0)

    def test_temperature_must_be_non_negative(self):
        with pytest.raises(ValueError):
            GenerationRequest(prompt="p", temperature=-0.1)


class TestMockBackend:
    def test_scripted_single_reply(self):
        gateway = Gateway(MockBackend([{"expect_substring": "hello", "responses": ["yes"]}]))
        result = gateway.generate(GenerationRequest(prompt="hello there"))
        assert result.texts == ("yes",)

    def test_five_samples_in_script_order(self):
        responses = [f"q{i}" for i in range(5)]
        gateway = Gateway(MockBackend([{"expect_substring": "Context:", "responses": responses}]))
        result = gateway.generate(GenerationRequest(prompt="... Context: S", n_samples=5))
        assert result.texts == tuple(responses)

    def test_strict_order_mismatch_raises(self):
        backend = MockBackend([{"expect_substring": "first", "responses": ["a"]}])
        with pytest.raises(MockScriptError):
            backend.complete("second prompt", 1, 64, 0.0, None)

    def test_content_keyed_matches_out_of_order(self):
        backend = MockBackend(
            [
                {"expect_substring": "alpha", "responses": ["a"]},
                {"expect_substring": "beta", "responses": ["b"]},
            ],
            strict_order=False,
        )
        assert backend.complete("ask beta now", 1, 64, 0.0, None) == ["b"]
        assert backend.complete("ask alpha now", 1, 64, 0.0, None) == ["a"]

    def test_insufficient_responses_raise(self):
        backend = MockBackend([{"expect_substring": "x", "responses": ["only one"]}])
        with pytest.raises(MockScriptError):
            backend.complete("x", 2, 64, 0.0, None)

    def test_script_exhaustion_raises(self):
        backend = MockBackend([{"expect_substring": "x", "responses": ["a"]}])
        backend.complete("x", 1, 64, 0.0, None)
        with pytest.raises(MockScriptError):
            backend.complete("x", 1, 64, 0.0, None)

    def test_load_script_file(self, tmp_path):
        path = tmp_path / "script.json"
        path.write_text(json.dumps([{"expect_substring": "s", "responses": ["r"]}]))
        backend = load_mock_script(path)
        assert backend.complete("a s prompt", 1, 64, 0.0, None) == ["r"]


class TestRetries:
    def test_transient_failures_then_success(self):
        attempts = []

        class Flaky:
            backend_id = "flaky"

            def complete(self, prompt, n, max_tokens, temperature, stop):
                attempts.append(1)
                if len(attempts) < 3:
                    raise BackendUnavailableError("HTTP 500")
                return ["ok"]

        waits = []
        gateway = Gateway(Flaky(), retry_limit=2, backoff_base=0.1, sleep=waits.append)
        result = gateway.generate(GenerationRequest(prompt="p"))
        assert result.texts == ("ok",)
        assert len(attempts) == 3
        assert waits == [0.1, 0.2]  # exponential backoff

    def test_exhausted_retries_raise_unavailable(self):
        class Down:
            backend_id = "down"

            def complete(self, *args):
                raise BackendUnavailableError("HTTP 500")

        gateway = Gateway(Down(), retry_limit=2, backoff_base=0.0, sleep=lambda s: None)
        with pytest.raises(BackendUnavailableError):
            gateway.generate(GenerationRequest(prompt="p"))

    def test_malformed_response_not_retried(self):
        attempts = []

        class Weird:
            backend_id = "weird"

            def complete(self, *args):
                attempts.append(1)
                raise ResponseMalformedError("bad body")

        gateway = Gateway(Weird(), retry_limit=3, sleep=lambda s: None)
        with pytest.raises(ResponseMalformedError):
            gateway.generate(GenerationRequest(prompt="p"))
        assert len(attempts) == 1


class _FakeResponse:
    def __init__(self, status_code=200, body=None):
        self.status_code = status_code
        self._body = body or {}

    def json(self):
        return self._body


class TestHttpBackend:
    def test_posts_wire_protocol_and_parses_texts(self):
        seen = {}

        def post(url, json, headers, timeout):
            seen.update(url=url, payload=json, headers=headers)
            return _FakeResponse(body={"texts": ["one", "two"]})

        backend = HttpBackend("http://llm.local/v1", api_key="k", post=post)
        texts = backend.complete("hi", 2, 32, 0.5, None)
        assert texts == ["one", "two"]
        assert seen["payload"] == {"prompt": "hi", "n": 2, "max_tokens": 32, "temperature": 0.5}
        assert seen["headers"]["Authorization"] == "Bearer k"

    def test_5xx_is_unavailable(self):
        backend = HttpBackend("http://x", post=lambda *a, **k: _FakeResponse(500))
        with pytest.raises(BackendUnavailableError):
            backend.complete("p", 1, 64, 0.0, None)

    def test_bad_body_is_malformed(self):
        backend = HttpBackend("http://x", post=lambda *a, **k: _FakeResponse(200, {"nope": 1}))
        with pytest.raises(ResponseMalformedError):
            backend.complete("p", 1, 64, 0.0, None)

    def test_similarity_scorer_normalizes(self):
        scorer = HttpSimilarityScorer(
            "http://sim", baseline=0.5, post=lambda *a, **k: _FakeResponse(200, {"score": 0.8})
        )
        assert scorer.score("a", "b") == pytest.approx(0.6)


class TestInFlightBound:
    def test_gateway_bounds_concurrency(self):
        entries = [{"expect_substring": "p", "responses": ["r"]} for _ in range(20)]
        backend = MockBackend(entries, strict_order=False, delay_s=0.01)
        gateway = Gateway(backend, max_in_flight=3)
        with ThreadPoolExecutor(max_workers=10) as pool:
            futures = [
                pool.submit(gateway.generate, GenerationRequest(prompt=f"p{i}")) for i in range(20)
            ]
            for f in futures:
                f.result()
        assert backend.max_in_flight_observed <= 3
        assert len(backend.calls) == 20

"""Gateway contract: scripted mock determinism and HTTP retry behaviour."""

import json

import numpy as np
import pytest

from pageqa.gateway import (
    GatewayConfig,
    GatewayError,
    GenRequest,
    HttpGateway,
    MockGateway,
    ReplyParseError,
    RetryPolicy,
    make_gateway,
    prompt_hash,
    validate_structured,
)


class TestMockGateway:
    def test_exact_key_lookup_deterministic(self):
        gw = MockGateway([
            {"role": "qa_assistant", "prompt_hash": prompt_hash("hi"),
             "reply": "hello there"},
        ])
        req = GenRequest(role="qa_assistant", prompt="hi")
        assert gw.generate(req) == "hello there"
        assert gw.generate(req) == "hello there"

    def test_star_fallback(self):
        gw = MockGateway([
            {"role": "question_gen", "prompt_hash": "*",
             "reply": "What year was it signed?"},
        ])
        for prompt in ("a", "b", "c"):
            req = GenRequest(role="question_gen", prompt=prompt)
            assert gw.generate(req) == "What year was it signed?"

    def test_exact_key_beats_fallback(self):
        gw = MockGateway([
            {"role": "qa_assistant", "prompt_hash": "*", "reply": "generic"},
            {"role": "qa_assistant", "prompt_hash": prompt_hash("specific"),
             "reply": "special"},
        ])
        assert gw.generate(GenRequest("qa_assistant", "specific")) == "special"
        assert gw.generate(GenRequest("qa_assistant", "other")) == "generic"

    def test_missing_reply_raises(self):
        gw = MockGateway([])
        with pytest.raises(GatewayError):
            gw.generate(GenRequest("qa_assistant", "anything"))

    def test_calls_are_recorded(self):
        gw = MockGateway([
            {"role": "qa_assistant", "prompt_hash": "*", "reply": "ok"},
        ])
        gw.generate(GenRequest("qa_assistant", "first"))
        gw.generate(GenRequest("qa_assistant", "second"))
        assert [c.prompt for c in gw.calls] == ["first", "second"]

    def test_structured_reply_validated(self):
        gw = MockGateway([
            {"role": "answer_gen", "prompt_hash": "*",
             "reply": {"answerable": True, "answer": "yes", "page": 4}},
        ])
        payload = gw.generate(GenRequest("answer_gen", "q"))
        assert payload == {"answerable": True, "answer": "yes", "page": 4}

    def test_malformed_structured_reply_raises(self):
        gw = MockGateway([
            {"role": "answer_gen", "prompt_hash": "*",
             "reply": "not even json"},
        ])
        with pytest.raises(ReplyParseError) as exc:
            gw.generate(GenRequest("answer_gen", "q"))
        assert exc.value.raw == "not even json"

    def test_from_script(self, tmp_path):
        script = tmp_path / "script.jsonl"
        script.write_text(json.dumps(
            {"role": "qa_assistant", "prompt_hash": "*", "reply": "scripted"}
        ) + "\n")
        gw = make_gateway(GatewayConfig(mock_mode=True, mock_script=str(script)))
        assert gw.generate(GenRequest("qa_assistant", "x")) == "scripted"

    def test_embed_unit_norm_order_and_determinism(self):
        gw = MockGateway([], embed_dim=32)
        texts = ["alpha", "beta", "alpha"]
        vecs1 = gw.embed(texts)
        vecs2 = gw.embed(texts)
        for v in vecs1:
            assert v.shape == (32,)
            assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)
        assert np.array_equal(vecs1[0], vecs1[2])
        assert not np.array_equal(vecs1[0], vecs1[1])
        for a, b in zip(vecs1, vecs2):
            assert np.array_equal(a, b)

    def test_embed_empty_rejected(self):
        with pytest.raises(ValueError):
            MockGateway([]).embed([])


class TestGenRequest:
    def test_unknown_role_rejected(self):
        with pytest.raises(ValueError):
            GenRequest(role="mystery", prompt="x")

    def test_structured_roles_forced_structured(self):
        assert GenRequest("answer_gen", "x").structured
        assert GenRequest("decomposer", "x").structured
        assert not GenRequest("qa_assistant", "x").structured


class TestValidateStructured:
    def test_answer_gen_unanswerable_minimal(self):
        payload = validate_structured(
            "answer_gen", {"answerable": False}, "{}")
        assert payload["answerable"] is False

    def test_answer_gen_missing_page(self):
        with pytest.raises(ReplyParseError, match="page"):
            validate_structured(
                "answer_gen", {"answerable": True, "answer": "x"}, "{}")

    def test_decomposer_turns(self):
        payload = validate_structured(
            "decomposer",
            {"turns": [{"question": "q1", "answer": "a1", "page": 2},
                       {"question": "q2", "answer": "a2"}]},
            "{}",
        )
        assert len(payload["turns"]) == 2

    def test_decomposer_malformed_turn(self):
        with pytest.raises(ReplyParseError, match="turn"):
            validate_structured("decomposer", {"turns": [{"question": 1}]}, "{}")


class _StubTransport:
    """Scripted (status, body) sequence; records every call, no network."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.requests = []

    def __call__(self, url, payload, headers, timeout):
        self.requests.append((url, payload, headers))
        if not self.responses:
            raise AssertionError("transport exhausted")
        resp = self.responses.pop(0)
        if isinstance(resp, Exception):
            raise resp
        return resp


class TestHttpGateway:
    def _gateway(self, transport, max_retries=3):
        config = GatewayConfig(endpoint="http://gateway.test",
                               retry=RetryPolicy(max_retries=max_retries,
                                                 base_backoff=0.25))
        sleeps = []
        gw = HttpGateway(config, transport=transport, sleep=sleeps.append)
        return gw, sleeps

    def test_success_first_try(self):
        transport = _StubTransport([(200, json.dumps({"text": "fine"}))])
        gw, sleeps = self._gateway(transport)
        assert gw.generate(GenRequest("qa_assistant", "q")) == "fine"
        assert sleeps == []
        url, payload, _ = transport.requests[0]
        assert url == "http://gateway.test/generate"
        assert payload["role"] == "qa_assistant"

    def test_retries_on_429_then_succeeds(self):
        transport = _StubTransport([
            (429, "slow down"),
            (429, "slow down"),
            (200, json.dumps({"text": "eventually"})),
        ])
        gw, sleeps = self._gateway(transport)
        assert gw.generate(GenRequest("qa_assistant", "q")) == "eventually"
        assert len(transport.requests) == 3
        # exponential, non-decreasing backoff
        assert sleeps == [0.25, 0.5]

    def test_exhausted_retries_raise_with_attempt_count(self):
        transport = _StubTransport([(503, "down")] * 4)
        gw, _ = self._gateway(transport, max_retries=3)
        with pytest.raises(GatewayError) as exc:
            gw.generate(GenRequest("qa_assistant", "q"))
        assert exc.value.attempts == 4

    def test_non_retryable_status_fails_fast(self):
        transport = _StubTransport([(400, "bad request")])
        gw, sleeps = self._gateway(transport)
        with pytest.raises(GatewayError) as exc:
            gw.generate(GenRequest("qa_assistant", "q"))
        assert exc.value.attempts == 1
        assert sleeps == []

    def test_transport_exception_retried(self):
        transport = _StubTransport([
            ConnectionError("refused"),
            (200, json.dumps({"text": "ok"})),
        ])
        gw, _ = self._gateway(transport)
        assert gw.generate(GenRequest("qa_assistant", "q")) == "ok"

    def test_structured_parse(self):
        reply = {"text": json.dumps({"answerable": True, "answer": "a",
                                     "page": 2})}
        transport = _StubTransport([(200, json.dumps(reply))])
        gw, _ = self._gateway(transport)
        payload = gw.generate(GenRequest("answer_gen", "q"))
        assert payload["page"] == 2

    def test_embed_renormalizes(self):
        body = json.dumps({"vectors": [[3.0, 4.0], [0.0, 2.0]]})
        transport = _StubTransport([(200, body)])
        gw, _ = self._gateway(transport)
        vecs = gw.embed(["a", "b"])
        assert vecs[0] == pytest.approx([0.6, 0.8])
        assert np.linalg.norm(vecs[1]) == pytest.approx(1.0)

    def test_mock_mode_config_rejected(self):
        with pytest.raises(ValueError):
            HttpGateway(GatewayConfig(mock_mode=True, mock_script="s.jsonl"))


class TestGatewayConfig:
    def test_mock_mode_requires_script(self):
        with pytest.raises(ValueError):
            GatewayConfig(mock_mode=True)

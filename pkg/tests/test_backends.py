import json

import httpx
import numpy as np
import pytest

from medco.backends import (BackendProfile, Backends, HashingEmbedder,
                            OpenAICompatBackend, ScriptedBackend, content_key)
from medco.errors import BackendError, MissingFixtureError

PROFILE = BackendProfile(name="student")


def test_profile_validation():
    with pytest.raises(ValueError):
        BackendProfile(name="x", temperature=-1)
    with pytest.raises(ValueError):
        BackendProfile(name="x", max_retries=6)


def test_content_key_depends_on_system_and_last_message():
    a = content_key("sys", [("user", "hello")])
    assert a == content_key("sys", [("user", "ignored"), ("user", "hello")])
    assert a != content_key("sys2", [("user", "hello")])
    assert a != content_key("sys", [("user", "bye")])


class TestScriptedLookup:
    def test_exact_key_wins(self):
        backend = ScriptedBackend()
        backend.register(("t", "student", 0), "exact")
        backend.register(content_key("sys", [("user", "q")]), "hashed")
        backend.register_sequence("t", "student", ["queued"])
        backend.default_script("student", lambda *a: "default")
        assert backend.chat(PROFILE, "sys", [("user", "q")], tag="t") == "exact"

    def test_hash_then_queue_then_default(self):
        backend = ScriptedBackend()
        backend.register(content_key("sys", [("user", "q")]), "hashed")
        backend.register_sequence("t", "student", ["queued"])
        backend.default_script("student", lambda *a: "default")
        assert backend.chat(PROFILE, "sys", [("user", "q")], tag="t") == "hashed"
        assert backend.chat(PROFILE, "sys", [("user", "other")], tag="t") == "queued"
        assert backend.chat(PROFILE, "sys", [("user", "other")], tag="t") == "default"

    def test_turn_counter_is_per_system(self):
        backend = ScriptedBackend()
        backend.register(("t", "student", 0), "a0")
        backend.register(("t", "student", 1), "a1")
        assert backend.chat(PROFILE, "sysA", [], tag="t") == "a0"
        # a different system prompt starts its own turn counter
        assert backend.chat(PROFILE, "sysB", [], tag="t") == "a0"
        assert backend.chat(PROFILE, "sysA", [], tag="t") == "a1"

    def test_missing_fixture_names_key(self):
        backend = ScriptedBackend()
        with pytest.raises(MissingFixtureError, match=r"\('t', 'student', 0\)"):
            backend.chat(PROFILE, "sys", [], tag="t")


class TestHashingEmbedder:
    def test_unit_norm_and_determinism(self):
        embedder = HashingEmbedder()
        a, b = embedder.embed(["some text here", "some text here"])
        assert np.array_equal(a, b)
        assert np.linalg.norm(a) == pytest.approx(1.0)

    def test_seed_changes_vectors(self):
        a = HashingEmbedder(seed=0).embed(["headache"])[0]
        b = HashingEmbedder(seed=1).embed(["headache"])[0]
        assert not np.array_equal(a, b)

    def test_empty_text_fallback(self):
        vec = HashingEmbedder().embed([""])[0]
        assert vec[0] == 1.0 and np.linalg.norm(vec) == pytest.approx(1.0)

    def test_cjk_tokens(self):
        embedder = HashingEmbedder()
        a = embedder.embed(["头痛"])[0]
        b = embedder.embed(["头晕"])[0]
        assert not np.array_equal(a, b)


def _chat_response(text="ok"):
    return {"choices": [{"message": {"content": text}}], "usage": {"total_tokens": 1}}


def make_backend(handler, sleeps):
    transport = httpx.MockTransport(handler)
    return OpenAICompatBackend(transport=transport, sleep=sleeps.append)


class TestWireClient:
    def setup_method(self):
        self.profile = BackendProfile(name="student", endpoint="http://api.test/v1",
                                      model_id="m", max_retries=3)

    def test_retries_transient_then_succeeds(self, monkeypatch):
        monkeypatch.setenv("MEDCO_API_KEY", "k")
        attempts = []

        def handler(request):
            attempts.append(1)
            if len(attempts) < 3:
                return httpx.Response(500, text="boom")
            return httpx.Response(200, json=_chat_response("fine"))

        sleeps = []
        backend = make_backend(handler, sleeps)
        reply = backend.chat(self.profile, "sys", [("user", "q")])
        assert reply == "fine"
        assert len(attempts) == 3
        assert len(sleeps) == 2  # backed off before each retry
        assert backend.exchanges[-1].reply == "fine"

    def test_exhausted_retries(self, monkeypatch):
        monkeypatch.setenv("MEDCO_API_KEY", "k")
        backend = make_backend(lambda r: httpx.Response(429, text="slow down"), [])
        with pytest.raises(BackendError, match="exhausted"):
            backend.chat(self.profile, "sys", [("user", "q")])

    def test_auth_error_is_not_retried(self, monkeypatch):
        monkeypatch.setenv("MEDCO_API_KEY", "bad")
        calls = []

        def handler(request):
            calls.append(1)
            return httpx.Response(401, text="no")

        backend = make_backend(handler, [])
        with pytest.raises(BackendError, match="authentication"):
            backend.chat(self.profile, "sys", [("user", "q")])
        assert len(calls) == 1

    def test_missing_api_key(self, monkeypatch):
        monkeypatch.delenv("MEDCO_API_KEY", raising=False)
        backend = make_backend(lambda r: httpx.Response(200), [])
        with pytest.raises(BackendError, match="MEDCO_API_KEY"):
            backend.chat(self.profile, "sys", [])

    def test_history_mapped_to_roles(self, monkeypatch):
        monkeypatch.setenv("MEDCO_API_KEY", "k")
        seen = {}

        def handler(request):
            seen.update(json.loads(request.content))
            return httpx.Response(200, json=_chat_response())

        backend = make_backend(handler, [])
        backend.chat(self.profile, "sys",
                     [("user", "q"), ("assistant", "a"), ("patient", "p")])
        roles = [m["role"] for m in seen["messages"]]
        assert roles == ["system", "user", "assistant", "user"]

    def test_embed_sorts_by_index(self, monkeypatch):
        monkeypatch.setenv("MEDCO_API_KEY", "k")

        def handler(request):
            return httpx.Response(200, json={"data": [
                {"index": 1, "embedding": [0.0, 2.0]},
                {"index": 0, "embedding": [3.0, 0.0]},
            ]})

        backend = make_backend(handler, [])
        vectors = backend.embed(self.profile, ["a", "b"])
        assert vectors[0][0] == pytest.approx(1.0)  # unit-normalized
        assert vectors[1][1] == pytest.approx(1.0)


def test_backends_routing_per_role():
    class Canned:
        def __init__(self, reply):
            self.reply = reply

        def chat(self, profile, system, history, tag=""):
            return self.reply

    profiles = {"student": PROFILE, "patient": BackendProfile(name="patient")}
    backends = Backends(profiles, Canned("base"), HashingEmbedder(),
                        providers={"patient": Canned("override")})
    assert backends.chat("student", "s", []) == "base"
    assert backends.chat("patient", "s", []) == "override"
    with pytest.raises(BackendError, match="no backend profile"):
        backends.chat("chair", "s", [])
    with pytest.raises(ValueError):
        backends.embed([])

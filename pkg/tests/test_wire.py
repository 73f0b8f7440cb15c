import json
import math
import random
import socket
import threading

import numpy as np
import pytest

from parablock.decoder import DecodeParams, decode, generate_candidates
from parablock.errors import ProtocolError, TransportError
from parablock.lm import train_ngram
from parablock.rerank import HashEmbedding, semantic_similarity
from parablock.tokens import BOS, EOS, SourceSequence, tokenize
from parablock.wire import (
    DEFAULT_TOP_K,
    PROTOCOL_VERSION,
    ConformanceReport,
    RemoteEmbeddingProvider,
    RemoteLM,
    WireConnection,
    check_conformance,
    connect_tcp,
    serve_connection,
    serve_tcp,
)

TRAIN = [
    "the cat sat on the mat",
    "the dog sat on the rug",
    "a cat saw the dog",
    "the dog saw a cat",
]


def backend():
    return train_ngram(TRAIN, order=2)


def pair_connections():
    a, b = socket.socketpair()
    ca = WireConnection(a.makefile("rb"), a.makefile("wb"))
    cb = WireConnection(b.makefile("rb"), b.makefile("wb"))
    return ca, cb


@pytest.fixture
def served():
    """A reference backend behind a real TCP server."""
    server = serve_tcp(backend(), emb=HashEmbedding(dim=16))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    host, port = server.server_address
    yield lambda: connect_tcp(host, port, timeout=5.0)
    server.shutdown()
    server.server_close()


class ScriptedEndpoint:
    """TCP listener answering from a handler; raw bytes pass through as is."""

    def __init__(self, handler):
        self.handler = handler
        self.sock = socket.socket()
        self.sock.bind(("127.0.0.1", 0))
        self.sock.listen(4)
        self.host, self.port = self.sock.getsockname()
        self.thread = threading.Thread(target=self._serve, daemon=True)
        self.thread.start()

    def connect(self):
        return connect_tcp(self.host, self.port, timeout=5.0)

    def _serve(self):
        while True:
            try:
                client, _ = self.sock.accept()
            except OSError:
                return
            with client, client.makefile("rb") as r, client.makefile("wb") as w:
                for line in r:
                    reply = self.handler(json.loads(line))
                    if reply is None:
                        break
                    if isinstance(reply, dict):
                        reply = json.dumps(reply).encode() + b"\n"
                    try:
                        w.write(reply)
                        w.flush()
                    except OSError:
                        break

    def close(self):
        self.sock.close()


def ack_record(vocab=("a", "b"), top_k=DEFAULT_TOP_K, version=PROTOCOL_VERSION):
    return {"type": "ack", "version": version, "top_k": top_k,
            "vocab": list(vocab)}


class TestWireConnection:
    def test_round_trip_with_unicode(self):
        a, b = pair_connections()
        a.send({"type": "next", "prefix": ["<s>", "naïve", "café"]})
        got = b.recv()
        assert got["prefix"] == ["<s>", "naïve", "café"]
        a.close()
        b.close()

    def test_recv_after_close_is_transport_error(self):
        a, b = pair_connections()
        a.close()
        with pytest.raises(TransportError):
            b.recv()

    def test_garbage_line_is_protocol_error(self):
        a, b = pair_connections()
        a._w.write(b"this is not json\n")
        a._w.flush()
        with pytest.raises(ProtocolError):
            b.recv()
        a.close()
        b.close()

    def test_non_object_record_rejected(self):
        a, b = pair_connections()
        a._w.write(b"[1, 2, 3]\n")
        a._w.flush()
        with pytest.raises(ProtocolError):
            b.recv()
        a.close()
        b.close()


class TestRemoteLM:
    def test_handshake_exposes_vocab_and_k(self, served):
        lm = RemoteLM(served)
        assert lm.top_k == DEFAULT_TOP_K
        assert lm.base_vocab.words() == backend().vocab.words()
        lm.close()

    def test_distribution_matches_local_backend(self, served):
        remote, local = RemoteLM(served), backend()
        source = tokenize("the cat")
        prefix = [source.tokens[0].__class__(BOS, 0)]
        got = remote.next_distribution(source, prefix)
        want = local.next_distribution(source, prefix)
        ranked = sorted(want.entries.items(), key=lambda kv: (-kv[1], kv[0]))
        assert list(got.entries.items()) == ranked[:DEFAULT_TOP_K]
        got.validate()
        remote.close()

    def test_greedy_decode_agrees_with_local(self, served):
        remote, local = RemoteLM(served), backend()
        source = tokenize("the cat sat")
        params = DecodeParams(mode="greedy", p=1.0, max_length=10)
        got = decode(remote, source, None, params)
        want = decode(local, source, None, params)
        assert got == want
        remote.close()

    def test_candidate_generation_matches_local(self, served):
        remote, local = RemoteLM(served), backend()
        source = tokenize("the cat sat on the mat")
        params = DecodeParams(num_dictionaries=3, max_length=10)
        got = generate_candidates(remote, source, params, random.Random(7))
        want = generate_candidates(local, source, params, random.Random(7))
        assert [(c.text, c.model_score) for c in got] == \
            [(c.text, c.model_score) for c in want]
        remote.close()

    def test_version_mismatch_rejected(self):
        ep = ScriptedEndpoint(lambda rec: ack_record(version=2))
        with pytest.raises(ProtocolError, match="version"):
            RemoteLM(ep.connect)
        ep.close()

    def test_error_record_surfaces_as_transport_error(self):
        def handler(rec):
            if rec["type"] == "hello":
                return ack_record()
            return {"type": "error", "id": rec["id"], "message": "gpu on fire"}

        ep = ScriptedEndpoint(handler)
        lm = RemoteLM(ep.connect, reconnect=False)
        with pytest.raises(TransportError, match="gpu on fire"):
            lm.next_distribution(tokenize("a"), [lm.base_vocab.bos()])
        ep.close()

    @pytest.mark.parametrize("payload,message", [
        ({"tokens": ["a", "b"], "logprobs": [-1.0]}, "length mismatch"),
        ({"tokens": ["a"], "logprobs": [float("nan")]}, "non-finite"),
        ({"tokens": ["a", "b"], "logprobs": [-2.0, -1.0]}, "nonincreasing"),
        ({"tokens": ["zzz"], "logprobs": [-1.0]}, "vocabulary"),
        ({"tokens": ["a", "a"], "logprobs": [-1.0, -1.0]}, "duplicate"),
    ])
    def test_malformed_dist_rejected(self, payload, message):
        def handler(rec):
            if rec["type"] == "hello":
                return ack_record()
            body = json.dumps({"type": "dist", "id": rec["id"], **payload})
            return body.replace('"NaN"', "NaN").encode() + b"\n"

        ep = ScriptedEndpoint(handler)
        lm = RemoteLM(ep.connect, reconnect=False)
        with pytest.raises(ProtocolError, match=message):
            lm.next_distribution(tokenize("a"), [lm.base_vocab.bos()])
        ep.close()

    def test_wrong_id_echo_rejected(self):
        def handler(rec):
            if rec["type"] == "hello":
                return ack_record()
            return {"type": "dist", "id": rec["id"] + 17,
                    "tokens": ["a"], "logprobs": [-1.0]}

        ep = ScriptedEndpoint(handler)
        lm = RemoteLM(ep.connect, reconnect=False)
        with pytest.raises(ProtocolError, match="id mismatch"):
            lm.next_distribution(tokenize("a"), [lm.base_vocab.bos()])
        ep.close()

    def test_mid_request_close_is_transport_error(self):
        def handler(rec):
            if rec["type"] == "hello":
                return ack_record()
            return None  # drop the connection instead of answering

        ep = ScriptedEndpoint(handler)
        lm = RemoteLM(ep.connect, reconnect=False)
        with pytest.raises(TransportError):
            lm.next_distribution(tokenize("a"), [lm.base_vocab.bos()])
        ep.close()

    def test_reconnect_retries_once_transparently(self):
        state = {"drops": 0}

        def handler(rec):
            if rec["type"] == "hello":
                return ack_record()
            if state["drops"] == 0:
                state["drops"] += 1
                return None
            return {"type": "dist", "id": rec["id"],
                    "tokens": ["a"], "logprobs": [-1.0]}

        ep = ScriptedEndpoint(handler)
        lm = RemoteLM(ep.connect)
        dist = lm.next_distribution(tokenize("a"), [lm.base_vocab.bos()])
        assert list(dist.logprobs) == [-1.0]
        assert state["drops"] == 1
        ep.close()

    def test_reconnect_rejects_changed_vocab(self):
        state = {"hellos": 0}

        def handler(rec):
            if rec["type"] == "hello":
                state["hellos"] += 1
                vocab = ("a", "b") if state["hellos"] == 1 else ("x", "y")
                return ack_record(vocab=vocab)
            return None

        ep = ScriptedEndpoint(handler)
        lm = RemoteLM(ep.connect)
        with pytest.raises(ProtocolError, match="vocabulary changed"):
            lm.next_distribution(tokenize("a"), [lm.base_vocab.bos()])
        ep.close()


class TestServeConnection:
    def serve_pair(self, emb=None):
        client, server_side = pair_connections()
        thread = threading.Thread(
            target=serve_connection, args=(backend(), server_side, emb),
            daemon=True)
        thread.start()
        return client

    def test_wrong_hello_version_gets_error_but_keeps_connection(self):
        client = self.serve_pair()
        client.send({"type": "hello", "version": 99})
        assert client.recv()["type"] == "error"
        client.send({"type": "hello", "version": PROTOCOL_VERSION})
        assert client.recv()["type"] == "ack"
        client.close()

    def test_malformed_json_gets_error_and_connection_survives(self):
        client = self.serve_pair()
        client._w.write(b"not json at all\n")
        client._w.flush()
        err = client.recv()
        assert err["type"] == "error"
        assert err["id"] == 0
        client.send({"type": "hello", "version": PROTOCOL_VERSION})
        assert client.recv()["type"] == "ack"
        client.close()

    def test_unknown_type_echoes_id_in_error(self):
        client = self.serve_pair()
        client.send({"type": "reboot", "id": 31})
        err = client.recv()
        assert err["type"] == "error"
        assert err["id"] == 31
        client.close()

    def test_bad_prefix_reported_not_fatal(self):
        client = self.serve_pair()
        client.send({"type": "next", "id": 1, "source": ["a"],
                     "prefix": ["a"]})  # missing BOS
        assert client.recv()["type"] == "error"
        client.send({"type": "next", "id": 2, "source": ["a"],
                     "prefix": [BOS]})
        assert client.recv()["type"] == "dist"
        client.close()

    def test_embed_without_provider_is_an_error(self):
        client = self.serve_pair(emb=None)
        client.send({"type": "embed", "id": 5, "tokens": ["cat"]})
        err = client.recv()
        assert err["type"] == "error"
        assert "unsupported" in err["message"]
        client.close()

    def test_embed_with_provider_returns_unit_vectors(self):
        client = self.serve_pair(emb=HashEmbedding(dim=8))
        client.send({"type": "embed", "id": 6, "tokens": ["cat", "dog"]})
        got = client.recv()
        assert got["type"] == "vecs"
        assert got["id"] == 6
        assert got["dim"] == 8
        assert len(got["vectors"]) == 2
        for vec in got["vectors"]:
            assert len(vec) == 8
            assert math.isclose(sum(x * x for x in vec), 1.0, abs_tol=1e-9)
        client.close()

    def test_dist_response_is_sorted_and_bounded(self):
        client = self.serve_pair()
        client.send({"type": "hello", "version": PROTOCOL_VERSION})
        k = client.recv()["top_k"]
        client.send({"type": "next", "id": 1,
                     "source": ["the", "cat"], "prefix": [BOS]})
        got = client.recv()
        lps = got["logprobs"]
        assert len(got["tokens"]) == len(lps) <= k
        assert all(a >= b for a, b in zip(lps, lps[1:]))
        assert EOS in backend().vocab.surfaces()  # sanity on sentinel name
        client.close()


class TestRemoteEmbeddings:
    def test_vectors_match_local_provider(self, served):
        remote = RemoteEmbeddingProvider(served)
        local = HashEmbedding(dim=16)
        for key in ("cat", "dog", "unseen-word"):
            np.testing.assert_allclose(remote.vector(key),
                                       local.vector(key), atol=1e-12)
        assert remote.dim == 16
        remote.close()

    def test_vectors_are_cached(self):
        calls = []

        def handler(rec):
            if rec["type"] == "hello":
                return ack_record()
            calls.append(rec["id"])
            return {"type": "vecs", "id": rec["id"], "dim": 2,
                    "vectors": [[3.0, 4.0]]}

        ep = ScriptedEndpoint(handler)
        emb = RemoteEmbeddingProvider(ep.connect)
        a = emb.vector("cat")
        b = emb.vector("cat")
        assert len(calls) == 1
        np.testing.assert_allclose(a, [0.6, 0.8], atol=1e-15)
        assert a is b
        ep.close()

    def test_similarity_agrees_with_local(self, served):
        remote = RemoteEmbeddingProvider(served)
        local = HashEmbedding(dim=16)
        cand, ref = ["the", "cat", "sat"], ["a", "cat", "slept"]
        got = semantic_similarity(cand, ref, emb=remote)
        want = semantic_similarity(cand, ref, emb=local)
        assert got == pytest.approx(want, abs=1e-9)
        remote.close()

    @pytest.mark.parametrize("payload,message", [
        ({"dim": 3, "vectors": [[1.0, 2.0]]}, "length mismatch"),
        ({"dim": 2, "vectors": [[1.0, float("inf")]]}, "non-finite"),
        ({"dim": 2, "vectors": [[0.0, 0.0]]}, "zero vector"),
    ])
    def test_malformed_vecs_rejected(self, payload, message):
        def handler(rec):
            if rec["type"] == "hello":
                return ack_record()
            body = json.dumps({"type": "vecs", "id": rec["id"], **payload})
            return body.replace('"Infinity"', "Infinity").encode() + b"\n"

        ep = ScriptedEndpoint(handler)
        emb = RemoteEmbeddingProvider(ep.connect)
        with pytest.raises(ProtocolError, match=message):
            emb.vector("cat")
        ep.close()


class TestConformance:
    def test_reference_backend_passes(self, served):
        report = check_conformance(served, expect_embeddings=True)
        assert report.passed, report.summary()
        assert "handshake" in report.checks
        assert "determinism" in report.checks
        assert "embeddings" in report.checks

    def test_nan_endpoint_fails_with_non_finite(self):
        def handler(rec):
            if rec["type"] == "hello":
                return ack_record()
            if rec["type"] == "next":
                return (b'{"type":"dist","id":%d,"tokens":["a"],'
                        b'"logprobs":[NaN]}\n' % rec["id"])
            return {"type": "error", "id": rec.get("id", 0), "message": "?"}

        ep = ScriptedEndpoint(handler)
        report = check_conformance(ep.connect)
        assert not report.passed
        assert any("non-finite" in f for f in report.failures)
        ep.close()

    def test_truncating_endpoint_fails_with_length_mismatch(self):
        def handler(rec):
            if rec["type"] == "hello":
                return ack_record()
            if rec["type"] == "next":
                return {"type": "dist", "id": rec["id"],
                        "tokens": ["a", "b"], "logprobs": [-1.0]}
            return {"type": "error", "id": rec.get("id", 0), "message": "?"}

        ep = ScriptedEndpoint(handler)
        report = check_conformance(ep.connect)
        assert not report.passed
        assert any("length mismatch" in f for f in report.failures)
        ep.close()

    def test_endpoint_ignoring_errors_fails_error_handling(self):
        def handler(rec):
            if rec["type"] == "hello":
                return ack_record()
            return {"type": "dist", "id": rec.get("id", 0),
                    "tokens": ["a"], "logprobs": [-1.0]}

        ep = ScriptedEndpoint(handler)
        report = check_conformance(ep.connect)
        assert any(f.startswith("error-handling") for f in report.failures)
        ep.close()

    def test_unreachable_endpoint_reports_connect_failure(self):
        report = check_conformance(
            lambda: connect_tcp("127.0.0.1", 1, timeout=0.2))
        assert not report.passed
        assert report.failures[0].startswith("connect")

    def test_report_summary_mentions_failures(self):
        report = ConformanceReport(("a", "b"), ("b: broke",))
        assert "FAIL" in report.summary()
        assert "b: broke" in report.summary()

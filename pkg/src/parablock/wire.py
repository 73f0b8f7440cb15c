"""Newline-JSON wire protocol: remote backends, serving, conformance.

One record per line, UTF-8. A client opens with a hello/ack handshake,
then sends next requests and receives sparse top-K distributions; an
embed record returns per-token vectors for reranking. Every request
carries an id that the response echoes.

``RemoteLM`` adapts an endpoint to the in-process backend contract, and
``serve_connection`` exposes any in-process backend over the same
protocol, so either side of the wire can be swapped independently.
"""

import itertools
import json
import math
import socket
import socketserver
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ProtocolError, TransportError
from .lm import SPARSE, NextTokenDistribution, _require_bos
from .tokens import BOS, SourceSequence, Vocab

PROTOCOL_VERSION = 1
DEFAULT_TOP_K = 64


class WireConnection:
    """Line-oriented JSON records over a binary reader/writer pair."""

    def __init__(self, reader, writer):
        self._r = reader
        self._w = writer

    def send(self, record: dict) -> None:
        data = json.dumps(record, ensure_ascii=False).encode("utf-8") + b"\n"
        try:
            self._w.write(data)
            self._w.flush()
        except (OSError, ValueError) as exc:
            raise TransportError(f"send failed: {exc}") from exc

    def recv(self) -> dict:
        try:
            line = self._r.readline()
        except (OSError, ValueError) as exc:
            raise TransportError(f"recv failed: {exc}") from exc
        if not line:
            raise TransportError("connection closed")
        try:
            record = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ProtocolError(f"malformed record: {exc}") from exc
        if not isinstance(record, dict):
            raise ProtocolError("record is not an object")
        return record

    def close(self) -> None:
        for fh in (self._w, self._r):
            try:
                fh.close()
            except OSError:
                pass


def connect_tcp(host: str, port: int, timeout: float = 10.0) -> WireConnection:
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise TransportError(f"cannot reach {host}:{port}: {exc}") from exc
    sock.settimeout(timeout)
    return WireConnection(sock.makefile("rb"), sock.makefile("wb"))


def handshake(conn: WireConnection) -> tuple[int, list[str]]:
    conn.send({"type": "hello", "version": PROTOCOL_VERSION})
    ack = conn.recv()
    if ack.get("type") == "error":
        raise TransportError(f"backend error: {ack.get('message')}")
    if ack.get("type") != "ack":
        raise ProtocolError(f"expected ack, got {ack.get('type')!r}")
    if ack.get("version") != PROTOCOL_VERSION:
        raise ProtocolError(f"version mismatch: {ack.get('version')!r}")
    top_k = ack.get("top_k")
    if not isinstance(top_k, int) or top_k < 1:
        raise ProtocolError(f"bad top_k {top_k!r}")
    vocab = ack.get("vocab")
    if not isinstance(vocab, list) or not all(isinstance(s, str) for s in vocab):
        raise ProtocolError("ack vocab must be a list of strings")
    return top_k, vocab


class RemoteLM:
    """Backend living on the far side of a wire connection.

    ``connect`` is a zero-argument factory so a dropped connection can be
    reopened; one automatic reconnect is attempted per request, and the
    endpoint must advertise the same vocabulary when it comes back
    (run-vocab ids would silently shift otherwise).
    """

    def __init__(self, connect, reconnect: bool = True):
        self._connect = connect
        self._reconnect = reconnect
        self._ids = itertools.count(1)
        self._conn = None
        self._open(first=True)

    def _open(self, first: bool = False) -> None:
        conn = self._connect()
        top_k, vocab = handshake(conn)
        if not first and list(self._wire_vocab) != vocab:
            conn.close()
            raise ProtocolError("vocabulary changed across reconnect")
        self._conn = conn
        self.top_k = top_k
        self._wire_vocab = tuple(vocab)
        self.base_vocab = Vocab(vocab)

    def close(self) -> None:
        if self._conn is not None:
            self._conn.close()
            self._conn = None

    def run_vocab(self, source: SourceSequence) -> Vocab:
        return self.base_vocab.extend(t.surface for t in source)

    def _roundtrip(self, record: dict) -> dict:
        try:
            self._conn.send(record)
            return self._conn.recv()
        except TransportError:
            if not self._reconnect:
                raise
            self.close()
            self._open()
            self._conn.send(record)
            return self._conn.recv()

    def next_distribution(self, source: SourceSequence,
                          prefix) -> NextTokenDistribution:
        _require_bos(prefix)
        request_id = next(self._ids)
        response = self._roundtrip({
            "type": "next",
            "id": request_id,
            "source": [t.surface for t in source],
            "prefix": [t.surface for t in prefix],
        })
        if response.get("type") == "error":
            raise TransportError(f"backend error: {response.get('message')}")
        if response.get("type") != "dist":
            raise ProtocolError(f"expected dist, got {response.get('type')!r}")
        if response.get("id") != request_id:
            raise ProtocolError(f"id mismatch: sent {request_id}, "
                                f"got {response.get('id')!r}")
        tokens = response.get("tokens")
        logprobs = response.get("logprobs")
        if not isinstance(tokens, list) or not isinstance(logprobs, list):
            raise ProtocolError("dist needs tokens and logprobs arrays")
        if len(tokens) != len(logprobs):
            raise ProtocolError(f"length mismatch: {len(tokens)} tokens, "
                                f"{len(logprobs)} logprobs")
        if len(tokens) > self.top_k:
            raise ProtocolError(f"{len(tokens)} entries exceed top_k "
                                f"{self.top_k}")
        vocab = self.run_vocab(source)
        entries: dict[int, float] = {}
        for surface, lp in zip(tokens, logprobs):
            if not isinstance(surface, str):
                raise ProtocolError(f"non-string token {surface!r}")
            if not isinstance(lp, (int, float)) or not math.isfinite(lp):
                raise ProtocolError(f"non-finite logprob for {surface!r}")
            if surface not in vocab:
                raise ProtocolError(f"token {surface!r} outside the "
                                    "advertised vocabulary")
            tid = vocab.id_of(surface)
            if tid in entries:
                raise ProtocolError(f"duplicate token {surface!r}")
            entries[tid] = float(lp)
        lps = list(entries.values())
        if any(a < b for a, b in zip(lps, lps[1:])):
            raise ProtocolError("logprobs must be nonincreasing")
        dist = NextTokenDistribution(entries, SPARSE, top_k=self.top_k)
        dist.validate()
        return dist


class RemoteEmbeddingProvider:
    """Token vectors over the same protocol channel, one embed per key.

    Received vectors are normalized to unit length so cosine similarity
    reduces to a dot product, matching the in-process provider.
    """

    def __init__(self, connect):
        self._connect = connect
        self._conn = connect()
        handshake(self._conn)
        self._ids = itertools.count(1)
        self._cache: dict[str, np.ndarray] = {}
        self.dim: int | None = None

    def close(self) -> None:
        self._conn.close()

    def vector(self, key: str) -> np.ndarray:
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        request_id = next(self._ids)
        self._conn.send({"type": "embed", "id": request_id, "tokens": [key]})
        response = self._conn.recv()
        if response.get("type") == "error":
            raise TransportError(f"backend error: {response.get('message')}")
        if response.get("type") != "vecs":
            raise ProtocolError(f"expected vecs, got {response.get('type')!r}")
        if response.get("id") != request_id:
            raise ProtocolError("id mismatch on embed")
        dim = response.get("dim")
        vectors = response.get("vectors")
        if not isinstance(dim, int) or dim < 1:
            raise ProtocolError(f"bad dim {dim!r}")
        if not isinstance(vectors, list) or len(vectors) != 1:
            raise ProtocolError("expected one vector per requested token")
        vec = np.asarray(vectors[0], dtype=np.float64)
        if vec.shape != (dim,):
            raise ProtocolError(f"length mismatch: vector has {vec.size} "
                                f"entries, dim says {dim}")
        if not np.all(np.isfinite(vec)):
            raise ProtocolError(f"non-finite vector for {key!r}")
        if self.dim is None:
            self.dim = dim
        elif dim != self.dim:
            raise ProtocolError(f"dim changed from {self.dim} to {dim}")
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise ProtocolError(f"zero vector for {key!r}")
        vec = vec / norm
        vec.setflags(write=False)
        self._cache[key] = vec
        return vec


def _sequence(base: Vocab, surfaces: list[str]) -> SourceSequence:
    vocab = base.extend(surfaces)
    return SourceSequence(tuple(vocab.token(s) for s in surfaces))


def serve_connection(lm, conn: WireConnection, emb=None,
                     top_k: int = DEFAULT_TOP_K) -> None:
    """Answer protocol records until the peer goes away.

    Malformed records get an error reply and the connection stays open;
    only transport failure (or EOF) ends the loop.
    """
    base = lm.run_vocab(SourceSequence())
    while True:
        try:
            record = conn.recv()
        except TransportError:
            return
        except ProtocolError as exc:
            try:
                conn.send({"type": "error", "id": 0, "message": str(exc)})
            except TransportError:
                return
            continue
        try:
            reply = _answer(lm, base, record, emb, top_k)
        except (ConfigError, ProtocolError) as exc:
            rid = record.get("id")
            reply = {"type": "error",
                     "id": rid if isinstance(rid, int) else 0,
                     "message": str(exc)}
        try:
            conn.send(reply)
        except TransportError:
            return


def _answer(lm, base: Vocab, record: dict, emb, top_k: int) -> dict:
    kind = record.get("type")
    if kind == "hello":
        if record.get("version") != PROTOCOL_VERSION:
            raise ProtocolError(f"unsupported version "
                                f"{record.get('version')!r}")
        return {"type": "ack", "version": PROTOCOL_VERSION,
                "top_k": top_k, "vocab": list(base.words())}
    if kind == "next":
        rid = record.get("id")
        surfaces = record.get("source")
        prefix_surfaces = record.get("prefix")
        if not isinstance(rid, int) or rid < 0:
            raise ProtocolError(f"bad id {rid!r}")
        for name, value in (("source", surfaces), ("prefix", prefix_surfaces)):
            if not isinstance(value, list) or \
                    not all(isinstance(s, str) for s in value):
                raise ProtocolError(f"{name} must be a list of strings")
        source = _sequence(base, surfaces)
        vocab = lm.run_vocab(source)
        prefix = [vocab.token(s) for s in prefix_surfaces]
        dist = lm.next_distribution(source, prefix)
        ordered = sorted(dist.entries.items(),
                         key=lambda kv: (-kv[1], kv[0]))[:top_k]
        return {"type": "dist", "id": rid,
                "tokens": [vocab.surface_of(tid) for tid, _ in ordered],
                "logprobs": [lp for _, lp in ordered]}
    if kind == "embed":
        rid = record.get("id")
        tokens = record.get("tokens")
        if not isinstance(rid, int) or rid < 0:
            raise ProtocolError(f"bad id {rid!r}")
        if emb is None:
            raise ProtocolError("embeddings unsupported by this endpoint")
        if not isinstance(tokens, list) or \
                not all(isinstance(s, str) for s in tokens):
            raise ProtocolError("tokens must be a list of strings")
        vectors = [emb.vector(t) for t in tokens]
        dim = emb.dim if emb.dim is not None else \
            (len(vectors[0]) if vectors else 0)
        return {"type": "vecs", "id": rid, "dim": dim,
                "vectors": [[float(x) for x in v] for v in vectors]}
    raise ProtocolError(f"unknown record type {kind!r}")


class _WireServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


def serve_tcp(lm, host: str = "127.0.0.1", port: int = 0, emb=None,
              top_k: int = DEFAULT_TOP_K) -> socketserver.TCPServer:
    """TCP server answering the protocol; caller runs serve_forever."""

    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            serve_connection(lm, WireConnection(self.rfile, self.wfile),
                             emb, top_k)

    return _WireServer((host, port), Handler)


@dataclass(frozen=True)
class ConformanceReport:
    checks: tuple[str, ...]
    failures: tuple[str, ...]

    @property
    def passed(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        lines = [f"conformance: {'PASS' if self.passed else 'FAIL'} "
                 f"({len(self.checks)} checks)"]
        lines += [f"  FAIL {f}" for f in self.failures]
        return "\n".join(lines)


def check_conformance(connect, expect_embeddings: bool = False,
                      assume_deterministic: bool = True) -> ConformanceReport:
    """Exercise an endpoint with the protocol test vectors.

    Failures land in the report rather than raising; a broken handshake
    skips the dependent checks.
    """
    checks: list[str] = []
    failures: list[str] = []

    def run(name, fn):
        checks.append(name)
        try:
            return fn()
        except (TransportError, ProtocolError, OSError) as exc:
            failures.append(f"{name}: {exc}")
            return None

    conn = run("connect", connect)
    if conn is None:
        return ConformanceReport(tuple(checks), tuple(failures))

    def do_handshake():
        top_k, vocab = handshake(conn)
        if not vocab:
            raise ProtocolError("empty vocabulary")
        return top_k, vocab

    opening = run("handshake", do_handshake)
    if opening is None:
        conn.close()
        return ConformanceReport(tuple(checks), tuple(failures))
    top_k, vocab = opening
    source = vocab[:2]

    def ask(rid):
        conn.send({"type": "next", "id": rid, "source": source,
                   "prefix": [BOS]})
        return conn.recv()

    def check_dist(rid):
        response = ask(rid)
        if response.get("type") != "dist":
            raise ProtocolError(f"expected dist, got {response.get('type')!r}")
        if response.get("id") != rid:
            raise ProtocolError("id not echoed")
        tokens, logprobs = response.get("tokens"), response.get("logprobs")
        if not isinstance(tokens, list) or not isinstance(logprobs, list) \
                or len(tokens) != len(logprobs):
            raise ProtocolError("length mismatch between tokens and logprobs")
        if not tokens:
            raise ProtocolError("empty distribution")
        if len(tokens) > top_k:
            raise ProtocolError(f"length mismatch: {len(tokens)} entries "
                                f"with top_k {top_k}")
        for lp in logprobs:
            if not isinstance(lp, (int, float)) or not math.isfinite(lp):
                raise ProtocolError(f"non-finite logprob {lp!r}")
        if any(a < b for a, b in zip(logprobs, logprobs[1:])):
            raise ProtocolError("logprobs not nonincreasing")
        return tokens, logprobs

    first = run("distribution", lambda: check_dist(1))
    if assume_deterministic and first is not None:
        def check_repeat():
            if check_dist(2) != first:
                raise ProtocolError("same request, different response")
        run("determinism", check_repeat)

    def check_error_handling():
        conn.send({"type": "bogus", "id": 9})
        response = conn.recv()
        if response.get("type") != "error":
            raise ProtocolError(f"unknown record answered with "
                                f"{response.get('type')!r}, not error")
        # the connection must survive the error
        check_dist(3)
    run("error-handling", check_error_handling)

    if expect_embeddings:
        def check_embed():
            conn.send({"type": "embed", "id": 4, "tokens": [vocab[0]]})
            response = conn.recv()
            if response.get("type") != "vecs":
                raise ProtocolError(f"expected vecs, got "
                                    f"{response.get('type')!r}")
            if response.get("id") != 4:
                raise ProtocolError("id not echoed")
            dim, vectors = response.get("dim"), response.get("vectors")
            if not isinstance(dim, int) or dim < 1:
                raise ProtocolError(f"bad dim {dim!r}")
            if not isinstance(vectors, list) or len(vectors) != 1 \
                    or len(vectors[0]) != dim:
                raise ProtocolError("length mismatch between dim and vectors")
            if not all(isinstance(x, (int, float)) and math.isfinite(x)
                       for x in vectors[0]):
                raise ProtocolError("non-finite vector entry")
        run("embeddings", check_embed)

    conn.close()
    return ConformanceReport(tuple(checks), tuple(failures))

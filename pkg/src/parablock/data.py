"""Corpus ingestion, IDF weights, and pseudo-pair generation.

Two kinds of training pairs come out of here. Adaptation pairs corrupt a
sentence by deleting tokens (no mask placeholders; the deleted tokens are
simply gone) and pair the corrupted text with the original. Self-
supervision pairs run the full paraphrase pipeline over a corpus and pair
each sentence with its top-ranked candidate. Both emitters are
deterministic under a fixed seed and write plain source<TAB>target lines.
"""

import logging
import math
import random
from dataclasses import dataclass
from typing import Iterable, Iterator

from . import rerank
from .decoder import DecodeParams, generate_candidates
from .errors import (
    ConfigError,
    DataError,
    NoParaphraseFound,
    ProtocolError,
    TransportError,
)
from .tokens import normalize_key, tokenize

log = logging.getLogger(__name__)

UNIFORM_DROP = "uniform-drop"
STOPWORD_DROP = "stopword-drop"


def ingest_corpus(path: str) -> Iterator[str]:
    """Yield trimmed nonempty lines, streaming.

    Decoding is per line so an encoding error names the line it came from.
    """
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise DataError(f"invalid UTF-8 ({exc.reason})",
                                line=lineno) from exc
            line = line.strip()
            if line:
                yield line


@dataclass(frozen=True)
class IdfTable:
    """Token key -> idf weight, with the corpus line count that built it.

    Unseen keys get the df=0 weight, the maximum the formula can produce
    for this corpus size.
    """

    weights: dict[str, float]
    doc_count: int

    def weight(self, key: str) -> float:
        w = self.weights.get(key)
        if w is None:
            return math.log(self.doc_count + 1.0) + 1.0
        return w

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"#docs\t{self.doc_count}\n")
            for key in sorted(self.weights):
                fh.write(f"{key}\t{self.weights[key]!r}\n")

    @classmethod
    def load(cls, path: str) -> "IdfTable":
        weights = {}
        doc_count = 0
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    key, value = line.split("\t")
                except ValueError as exc:
                    raise DataError("expected key<TAB>value",
                                    line=lineno) from exc
                if key == "#docs":
                    doc_count = int(value)
                    continue
                try:
                    weights[key] = float(value)
                except ValueError as exc:
                    raise DataError(f"bad idf weight {value!r}",
                                    line=lineno) from exc
        return cls(weights, doc_count)


def compute_idf(corpus: Iterable[str]) -> IdfTable:
    """idf(key) = log((N+1)/(df+1)) + 1 over normalized token keys."""
    df: dict[str, int] = {}
    n = 0
    for line in corpus:
        keys = {t.norm for t in tokenize(line)}
        if not keys:
            continue
        n += 1
        for key in keys:
            df[key] = df.get(key, 0) + 1
    if n == 0:
        raise ConfigError("cannot compute IDF over an empty corpus")
    weights = {k: math.log((n + 1.0) / (c + 1.0)) + 1.0 for k, c in df.items()}
    return IdfTable(weights, n)


@dataclass(frozen=True)
class CorruptionSpec:
    mode: str = UNIFORM_DROP
    rate: float = 0.3  # deletion probability; the uniform mode only
    stopwords: frozenset[str] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.mode not in (UNIFORM_DROP, STOPWORD_DROP):
            raise ConfigError(f"unknown corruption mode {self.mode!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise ConfigError(f"corruption rate must be in [0, 1], got {self.rate}")
        if self.mode == STOPWORD_DROP and not self.stopwords:
            raise ConfigError("stopword-drop needs a nonempty stopword list")


@dataclass(frozen=True)
class PseudoPair:
    source_text: str
    target_text: str
    origin: str  # "adaptation" | "self-supervision"


def corrupt(tokens: list[str], spec: CorruptionSpec,
            rng: random.Random) -> list[str]:
    """Delete tokens as configured; order is preserved, nothing is inserted.

    A draw that deletes everything is re-drawn once; a second empty draw
    is returned as is.
    """
    if spec.mode == STOPWORD_DROP:
        return [t for t in tokens if normalize_key(t) not in spec.stopwords]
    out = [t for t in tokens if rng.random() >= spec.rate]
    if not out and tokens:
        out = [t for t in tokens if rng.random() >= spec.rate]
    return out


def load_stopwords(path: str) -> frozenset[str]:
    words = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            word = normalize_key(line.strip())
            if word:
                words.add(word)
    return frozenset(words)


def load_synonyms(path: str) -> dict[str, str]:
    """word<TAB>synonym per line; later lines win on duplicates."""
    mapping = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not all(parts):
                raise DataError("expected word<TAB>synonym", line=lineno)
            mapping[normalize_key(parts[0])] = parts[1]
    return mapping


def replace_synonyms(tokens: list[str], mapping: dict[str, str],
                     rng: random.Random, rate: float = 0.3) -> list[str]:
    """Optional corruption hook: swap mapped tokens with probability rate."""
    out = []
    for t in tokens:
        swap = mapping.get(normalize_key(t))
        if swap is not None and rng.random() < rate:
            out.append(swap)
        else:
            out.append(t)
    return out


def _canonical(text: str) -> str:
    return tokenize(text).text()


def _write_pairs(out_path: str, records: Iterator[tuple[str, str]]) -> int:
    """Write source<TAB>target lines; on an I/O failure, truncate the file
    back to the last fully written record before re-raising."""
    written = 0
    committed = 0
    fh = open(out_path, "w", encoding="utf-8")
    try:
        for source_text, target_text in records:
            try:
                fh.write(f"{source_text}\t{target_text}\n")
                fh.flush()
            except OSError:
                fh.close()
                with open(out_path, "r+b") as raw:
                    raw.truncate(committed)
                raise
            committed = fh.tell()
            written += 1
    finally:
        if not fh.closed:
            fh.close()
    return written


def emit_adaptation_pairs(corpus: Iterable[str], spec: CorruptionSpec,
                          out_path: str) -> int:
    """corrupted<TAB>original per line; sentences whose corruption comes
    out empty are skipped (a pair needs both sides)."""
    rng = random.Random(spec.seed)

    def records():
        for sentence in corpus:
            surfaces = [t.surface for t in tokenize(sentence)]
            if not surfaces:
                continue
            corrupted = corrupt(surfaces, spec, rng)
            if not corrupted:
                continue
            yield " ".join(corrupted), " ".join(surfaces)

    return _write_pairs(out_path, records())


def emit_selfsup_pairs(lm, corpus: Iterable[str], params: DecodeParams,
                       out_path: str, seed: int = 0, idf=None,
                       emb=None) -> tuple[int, int]:
    """original<TAB>top-ranked-paraphrase per line.

    Returns (written, skipped); a sentence is skipped when every candidate
    was filtered out or its decode failed on the backend.
    """
    rng = random.Random(seed)

    def records():
        nonlocal skipped
        for sentence in corpus:
            src = tokenize(sentence)
            if len(src) == 0:
                continue
            try:
                pool = generate_candidates(lm, src, params, rng)
            except NoParaphraseFound:
                skipped += 1
                continue
            except (TransportError, ProtocolError) as exc:
                log.warning("skipping %r: backend failure: %s", sentence, exc)
                skipped += 1
                continue
            ranked = rerank.rank(pool, src, idf, emb)
            if not ranked[0].text:
                skipped += 1
                continue
            yield src.text(), ranked[0].text

    skipped = 0
    written = _write_pairs(out_path, records())
    return written, skipped


def read_pairs(path: str, origin: str = "adaptation") -> Iterator[PseudoPair]:
    """Round-trip reader for the pair file format."""
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise DataError(f"invalid UTF-8 ({exc.reason})",
                                line=lineno) from exc
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not all(parts):
                raise DataError("expected source<TAB>target", line=lineno)
            yield PseudoPair(parts[0], parts[1], origin)

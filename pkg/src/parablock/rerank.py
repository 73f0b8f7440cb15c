"""Candidate re-ranking: semantic similarity vs surface dissimilarity.

Similarity is greedy token matching under an embedding provider, IDF
weighted on both sides, combined recall/precision style into an F score.
Dissimilarity is 1 - self-BLEU/100. The rank score is their harmonic
mean, so a verbatim copy of the source ranks dead last no matter how
"similar" it is.

The default embedding provider hashes each token key to a deterministic
pseudo-random unit vector: identical tokens match exactly and distinct
tokens are near-orthogonal in 256 dimensions, which degrades the score
into IDF-weighted unigram matching. Real contextual embeddings plug in
through the same provider contract (locally or over the wire).
"""

import hashlib
from dataclasses import dataclass, field, replace
from typing import Protocol

import numpy as np

from . import metrics
from .errors import ScoringError
from .tokens import SourceSequence, normalize_key


@dataclass(frozen=True)
class Candidate:
    """One decoder output, scored by the reranker.

    The decoder fills the first block of fields (audit holds its per-step
    mask records); semantic_sim, self_bleu and rank_score stay None until
    rank() runs.
    """

    text: str
    tokens: tuple[str, ...]
    model_score: float
    dictionary_index: int = 0
    beam_rank: int = 0
    audit: tuple = field(repr=False, default=())
    semantic_sim: float | None = None
    self_bleu: float | None = None
    rank_score: float | None = None


class EmbeddingProvider(Protocol):
    def vector(self, key: str) -> np.ndarray: ...

    @property
    def dim(self) -> int: ...


class HashEmbedding:
    """Deterministic per-key unit vectors from a seeded hash."""

    def __init__(self, dim: int = 256, seed: int = 0):
        self._dim = dim
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    @property
    def dim(self) -> int:
        return self._dim

    def vector(self, key: str) -> np.ndarray:
        vec = self._cache.get(key)
        if vec is None:
            digest = hashlib.sha256(f"{self.seed}:{key}".encode()).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            vec = rng.standard_normal(self._dim)
            vec /= np.linalg.norm(vec)
            vec.setflags(write=False)
            self._cache[key] = vec
        return vec


class IdfWeights(Protocol):
    def weight(self, key: str) -> float: ...


def _weights(keys, idf) -> list[float]:
    if idf is None:
        return [1.0] * len(keys)
    return [idf.weight(k) for k in keys]


def _greedy_side(from_keys, to_keys, idf, emb) -> float:
    """IDF-weighted mean over from_keys of the best cosine against to_keys."""
    to_set = set(to_keys)
    to_vecs = None
    total = 0.0
    weight_sum = 0.0
    for key, w in zip(from_keys, _weights(from_keys, idf)):
        if key in to_set:
            best = 1.0  # identical keys match exactly, skip the arithmetic
        else:
            if to_vecs is None:
                to_vecs = np.stack([emb.vector(k) for k in to_keys])
            best = float(np.max(to_vecs @ emb.vector(key)))
        total += w * best
        weight_sum += w
    return total / weight_sum if weight_sum > 0 else 0.0


def semantic_similarity(cand_keys, ref_keys, idf=None,
                        emb: EmbeddingProvider | None = None) -> float:
    """Greedy-matching F score between two token key lists, in [0, 1]."""
    if not cand_keys or not ref_keys:
        raise ScoringError("semantic similarity needs nonempty token lists")
    if emb is None:
        emb = HashEmbedding()
    recall = _greedy_side(ref_keys, cand_keys, idf, emb)
    precision = _greedy_side(cand_keys, ref_keys, idf, emb)
    if recall <= 0.0 or precision <= 0.0:
        return 0.0
    f = 2.0 * precision * recall / (precision + recall)
    return min(1.0, max(0.0, f))


def surface_dissimilarity(cand_surfaces, source_surfaces) -> float:
    """1 - self-BLEU/100 against the source."""
    return 1.0 - metrics.self_bleu(list(cand_surfaces),
                                   list(source_surfaces)) / 100.0


def rank(pool, source: SourceSequence, idf=None,
         emb: EmbeddingProvider | None = None) -> list[Candidate]:
    """Score every candidate and order best first.

    rank_score is the harmonic mean of semantic similarity and surface
    dissimilarity; ties break by model score, then lexicographic text.
    """
    if emb is None:
        emb = HashEmbedding()
    source_norms = source.norms()
    source_surfaces = source.surfaces()
    scored = []
    for cand in pool:
        cand_norms = [normalize_key(k) for k in cand.tokens]
        if cand_norms and source_norms:
            sim = semantic_similarity(cand_norms, source_norms, idf, emb)
        else:
            sim = 0.0
        sb = metrics.self_bleu(list(cand.tokens), source_surfaces)
        score = metrics.bs_sb(sim, sb)
        scored.append(replace(cand, semantic_sim=sim, self_bleu=sb,
                              rank_score=score))
    scored.sort(key=lambda c: (-c.rank_score, -c.model_score, c.text))
    return scored

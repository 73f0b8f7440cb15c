"""Next-token model contract and two deterministic reference backends.

A backend answers ``next_distribution(source, prefix)`` with token
log-probabilities. Conditioning on (source, prefix) rather than prefix
alone lets seq2seq-style and decoder-only models share the contract; the
n-gram backend simply ignores the source except for extending its
emittable vocabulary with source-only words.

``NGramLM`` is an add-k smoothed count model, small enough that every
probability can be checked by hand. ``CopyEchoLM`` mixes a point mass on
the next unconsumed source token into a background model, reproducing the
parroting pathology of copy-biased paraphrasers: with the copy weight
near 1 an unconstrained greedy decode returns the source verbatim.
"""

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Protocol

from .errors import ConfigError
from .tokens import BOS, EOS, EOS_ID, SourceSequence, Token, Vocab, tokenize

DENSE = "dense"
SPARSE = "sparse"


@dataclass(frozen=True)
class NextTokenDistribution:
    """Token id -> logprob, in a fixed iteration order.

    Dense coverage spans the backend's full emittable vocabulary (zero
    probability tokens may be omitted; every kept logprob is finite) and
    sums to 1 within 1e-6. Sparse coverage lists at most ``top_k`` entries
    in nonincreasing logprob order.
    """

    entries: dict[int, float]
    coverage: str = DENSE
    top_k: int | None = None

    @property
    def token_ids(self) -> tuple[int, ...]:
        return tuple(self.entries.keys())

    @property
    def logprobs(self) -> tuple[float, ...]:
        return tuple(self.entries.values())

    def __len__(self) -> int:
        return len(self.entries)

    def validate(self) -> None:
        lps = self.logprobs
        if not all(math.isfinite(lp) for lp in lps):
            raise ConfigError("distribution contains non-finite logprobs")
        if self.coverage == DENSE:
            total = sum(math.exp(lp) for lp in lps)
            if abs(total - 1.0) > 1e-6:
                raise ConfigError(f"dense distribution sums to {total}")
        elif self.coverage == SPARSE:
            if self.top_k is None or len(lps) > self.top_k:
                raise ConfigError("sparse distribution exceeds its declared K")
            if any(a < b for a, b in zip(lps, lps[1:])):
                raise ConfigError("sparse logprobs must be nonincreasing")
        else:
            raise ConfigError(f"unknown coverage {self.coverage!r}")


class LanguageModel(Protocol):
    def next_distribution(self, source: SourceSequence,
                          prefix: list[Token]) -> NextTokenDistribution: ...

    def run_vocab(self, source: SourceSequence) -> Vocab: ...


def _require_bos(prefix) -> None:
    if not prefix or prefix[0].surface != BOS:
        raise ConfigError("prefix must begin with BOS")


@dataclass(frozen=True)
class NGramLM:
    """Add-k smoothed n-gram model over surface tokens.

    P(w | context) = (count(context.w) + k) / (count(context) + k*V) where
    V counts the emittable vocabulary: every trained word plus EOS, plus
    any source-only words for the decode at hand. Unseen contexts have
    count 0, so they fall back to the uniform k/(k*V) case on their own.
    """

    order: int
    k: float
    vocab: Vocab
    ngram_counts: dict = field(repr=False)
    context_counts: dict = field(repr=False)

    def run_vocab(self, source: SourceSequence) -> Vocab:
        return self.vocab.extend(t.surface for t in source)

    def _context(self, prefix) -> tuple:
        surfaces = [t.surface for t in prefix]
        ctx = surfaces[max(0, len(surfaces) - (self.order - 1)):]
        while len(ctx) < self.order - 1:
            ctx.insert(0, BOS)
        return tuple(ctx)

    def next_distribution(self, source: SourceSequence,
                          prefix) -> NextTokenDistribution:
        _require_bos(prefix)
        vocab = self.run_vocab(source)
        emittable = [EOS, *vocab.words()]
        v = len(emittable)
        ctx = self._context(prefix)
        ctx_count = self.context_counts.get(ctx, 0)
        denom = ctx_count + self.k * v
        entries = {}
        for surface in emittable:
            count = self.ngram_counts.get(ctx + (surface,), 0)
            entries[vocab.id_of(surface)] = math.log((count + self.k) / denom)
        return NextTokenDistribution(entries, DENSE)


def train_ngram(corpus, order: int = 2, k: float = 1.0) -> NGramLM:
    """Count n-grams over a stream of sentence strings.

    Each sentence is tokenized, padded with order-1 BOS tokens and
    terminated with EOS before counting.
    """
    if order < 1:
        raise ConfigError(f"ngram order must be >= 1, got {order}")
    if k <= 0:
        raise ConfigError(f"smoothing constant must be > 0, got {k}")
    ngram_counts: Counter = Counter()
    context_counts: Counter = Counter()
    types: dict[str, None] = {}
    sentences = 0
    for sentence in corpus:
        surfaces = [t.surface for t in tokenize(sentence)]
        if not surfaces:
            continue
        sentences += 1
        for s in surfaces:
            types.setdefault(s)
        padded = [BOS] * (order - 1) + surfaces + [EOS]
        for i in range(order - 1, len(padded)):
            ctx = tuple(padded[i - order + 1:i])
            ngram_counts[ctx + (padded[i],)] += 1
            context_counts[ctx] += 1
    if sentences == 0:
        raise ConfigError("training corpus is empty")
    return NGramLM(order, k, Vocab(types), dict(ngram_counts),
                   dict(context_counts))


@dataclass(frozen=True)
class CopyEchoLM:
    """Mixture of a copy pointer and a background n-gram model.

    The pointer walks the source left to right and advances exactly when
    the emitted token equals the pointed one; it is recovered from the
    prefix by replay, so the backend stays a pure function of
    (source, prefix). Once the source is exhausted the pointer targets
    EOS. P(t) = lam * [t = pointed] + (1 - lam) * P_background(t).
    """

    lam: float
    background: NGramLM

    def run_vocab(self, source: SourceSequence) -> Vocab:
        return self.background.run_vocab(source)

    def pointer_after(self, source: SourceSequence, prefix) -> int:
        p = 0
        for tok in prefix[1:]:
            if p < len(source) and tok.surface == source[p].surface:
                p += 1
        return p

    def next_distribution(self, source: SourceSequence,
                          prefix) -> NextTokenDistribution:
        _require_bos(prefix)
        background = self.background.next_distribution(source, prefix)
        if self.lam == 0.0:
            return background
        vocab = self.run_vocab(source)
        p = self.pointer_after(source, prefix)
        if p < len(source):
            # ids from the caller's tokenization need not agree with the
            # background's; map the pointed surface through the run vocab
            pointed_id = vocab.id_of(source[p].surface)
        else:
            pointed_id = EOS_ID
        if self.lam == 1.0:
            return NextTokenDistribution({pointed_id: 0.0}, DENSE)
        entries = {}
        for tid, lp in background.entries.items():
            prob = (1.0 - self.lam) * math.exp(lp)
            if tid == pointed_id:
                prob += self.lam
            entries[tid] = math.log(prob)
        return NextTokenDistribution(entries, DENSE)


def make_copy_echo(background: NGramLM, lam: float = 0.95) -> CopyEchoLM:
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"copy weight must be in [0, 1], got {lam}")
    return CopyEchoLM(lam, background)

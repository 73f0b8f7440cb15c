"""Constrained decoding over any next-token backend.

The decoding loop is ordinary (greedy, beam, or top-k/p sampling); the
constraint is a per-step mask. In dynamic mode the mask is derived only
from the token generated at the previous step: if that token is a source
word, the source's next word (with its inflections and case variants) gets
probability zero for this one step, and the remaining distribution is
renormalized. Static mode masks every open-class source word at every
step. Masks never touch EOS, so decoding always terminates.

Candidate generation runs the decoder once per sampled sub-dictionary and
keeps the best few beams of each, mirroring the generate-four-keep-two
protocol, then pools and deduplicates.
"""

import math
import random
from dataclasses import dataclass

from .blocking import (
    ActiveBlockDictionary,
    DEFAULT_CLOSED_CLASS,
    MorphologyProvider,
    build_dictionary,
    rule_inflections,
    sample_active,
    static_block_set,
    triggered_block_set,
)
from .errors import ConfigError, NoParaphraseFound, ProtocolError, TransportError
from .rerank import Candidate
from .tokens import EOS_ID, SourceSequence, Token, detokenize

MODES = ("greedy", "beam", "top_k", "top_p")
BLOCKING = ("dynamic", "static", "off")


@dataclass(frozen=True)
class DecodeParams:
    beam_width: int = 4
    keep_per_dictionary: int = 2
    num_dictionaries: int = 10
    p: float = 0.5
    max_length: int = 64
    mode: str = "beam"
    blocking: str = "dynamic"
    top_k: int = 40
    top_p: float = 0.9

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.blocking not in BLOCKING:
            raise ConfigError(f"unknown blocking {self.blocking!r}")
        if not 1 <= self.keep_per_dictionary <= self.beam_width:
            raise ConfigError(
                "need 1 <= keep_per_dictionary <= beam_width, got "
                f"{self.keep_per_dictionary} / {self.beam_width}")
        if self.max_length < 1:
            raise ConfigError(f"max_length must be >= 1, got {self.max_length}")
        if self.num_dictionaries < 1:
            raise ConfigError(
                f"num_dictionaries must be >= 1, got {self.num_dictionaries}")
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError(f"p must be in [0, 1], got {self.p}")
        if self.top_k < 1:
            raise ConfigError(f"top_k must be >= 1, got {self.top_k}")
        if not 0.0 < self.top_p <= 1.0:
            raise ConfigError(f"top_p must be in (0, 1], got {self.top_p}")


@dataclass(frozen=True)
class StepAudit:
    """What the mask looked like when a token was chosen."""
    trigger: str | None
    blocked: frozenset[str]


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple[Token, ...]
    cum_logprob: float = 0.0
    finished: bool = False
    audit: tuple[StepAudit, ...] = ()

    def content_tokens(self) -> tuple[Token, ...]:
        inner = self.tokens[1:]
        if self.finished:
            inner = inner[:-1]
        return inner

    def text(self) -> str:
        return detokenize(self.content_tokens())

    def generated_count(self) -> int:
        return len(self.tokens) - 1

    def id_seq(self) -> tuple[int, ...]:
        return tuple(t.id for t in self.tokens)


def length_normalized_score(hyp: Hypothesis) -> float:
    """cum_logprob averaged over generated tokens (EOS counts, BOS does not)."""
    return hyp.cum_logprob / max(1, hyp.generated_count())


def _final_order(hyp: Hypothesis):
    return (-length_normalized_score(hyp), hyp.id_seq())


class _Session:
    """Per-decode state: backend, source, mask context, randomness."""

    def __init__(self, lm, source: SourceSequence, active, params: DecodeParams,
                 rng=None, closed_class=DEFAULT_CLOSED_CLASS,
                 morph: MorphologyProvider = rule_inflections):
        self.lm = lm
        self.source = source
        self.active = active
        self.params = params
        self.vocab = lm.run_vocab(source)
        self.rng = rng
        if params.blocking == "static":
            self.static_blocked = frozenset(
                static_block_set(source, closed_class, morph))
        else:
            self.static_blocked = frozenset()
        if params.mode in ("top_k", "top_p") and rng is None:
            raise ConfigError(f"mode {params.mode} needs an rng")

    def start(self) -> Hypothesis:
        return Hypothesis((self.vocab.bos(),))

    def blocked_for(self, hyp: Hypothesis) -> tuple[str | None, frozenset[str]]:
        if self.params.blocking == "static":
            return None, self.static_blocked
        if self.params.blocking == "off" or self.active is None:
            return None, frozenset()
        last = hyp.tokens[-1]
        blocked = triggered_block_set(self.active, last)
        return (last.norm if blocked else None), frozenset(blocked)

    def step(self, hyp: Hypothesis) -> list[Hypothesis]:
        dist = self.lm.next_distribution(self.source, list(hyp.tokens))
        if not all(math.isfinite(lp) for lp in dist.logprobs):
            raise ProtocolError("backend produced non-finite logprobs")
        trigger, blocked = self.blocked_for(hyp)
        audit = hyp.audit + (StepAudit(trigger, blocked),)
        survivors = [
            (tid, lp) for tid, lp in dist.entries.items()
            if tid == EOS_ID or self.vocab.surface_of(tid) not in blocked
        ]
        if not survivors:
            # everything maskable was masked (a sparse top-K response, or a
            # point mass); emit EOS so decoding can end
            return [self._extend(hyp, EOS_ID, 0.0, audit)]
        log_z = math.log(math.fsum(math.exp(lp) for _, lp in survivors))
        rescored = [(tid, lp - log_z) for tid, lp in survivors]
        mode = self.params.mode
        if mode == "greedy":
            tid, lp = min(rescored, key=lambda e: (-e[1], e[0]))
            return [self._extend(hyp, tid, lp, audit)]
        if mode == "beam":
            return [self._extend(hyp, tid, lp, audit) for tid, lp in rescored]
        return [self._sample(hyp, rescored, audit)]

    def _sample(self, hyp, rescored, audit) -> Hypothesis:
        ordered = sorted(rescored, key=lambda e: (-e[1], e[0]))
        if self.params.mode == "top_k":
            pool = ordered[:self.params.top_k]
        else:
            pool, acc = [], 0.0
            for tid, lp in ordered:
                pool.append((tid, lp))
                acc += math.exp(lp)
                if acc >= self.params.top_p:
                    break
        z = math.fsum(math.exp(lp) for _, lp in pool)
        r = self.rng.random() * z
        acc = 0.0
        for tid, lp in pool:
            acc += math.exp(lp)
            if r < acc or (tid, lp) == pool[-1]:
                return self._extend(hyp, tid, lp, audit)
        raise AssertionError("unreachable")

    def _extend(self, hyp, tid, lp, audit) -> Hypothesis:
        token = self.vocab.token_for_id(tid)
        return Hypothesis(hyp.tokens + (token,), hyp.cum_logprob + lp,
                          tid == EOS_ID, audit)


def step(lm, source, hyp, active, params, rng=None):
    """Single extension of one hypothesis; see _Session.step."""
    return _Session(lm, source, active, params, rng).step(hyp)


def decode_hypotheses(lm, source: SourceSequence,
                      active: ActiveBlockDictionary | None,
                      params: DecodeParams, rng=None,
                      closed_class=DEFAULT_CLOSED_CLASS,
                      morph=rule_inflections) -> list[Hypothesis]:
    """Run one decode and return finished-or-capped beams, best first.

    Beam mode keeps beam_width hypotheses ranked by cumulative logprob
    while searching and orders the final list by length-normalized score
    (ties: lexicographically smaller token id sequence). Greedy and the
    sampling modes follow a single chain.
    """
    session = _Session(lm, source, active, params, rng, closed_class, morph)
    width = params.beam_width if params.mode == "beam" else 1
    done: list[Hypothesis] = []
    alive = [session.start()]
    while alive:
        expansions: list[Hypothesis] = []
        for hyp in alive:
            expansions.extend(session.step(hyp))
        pool = done + expansions
        pool.sort(key=lambda h: (-h.cum_logprob, h.id_seq()))
        pool = pool[:width]
        done = [h for h in pool
                if h.finished or h.generated_count() >= params.max_length]
        alive = [h for h in pool if h not in done]
    done.sort(key=_final_order)
    return done


def decode(lm, source, active, params, rng=None):
    """Beams as (text, cum_logprob) pairs, best first."""
    return [(h.text(), h.cum_logprob)
            for h in decode_hypotheses(lm, source, active, params, rng)]


def generate_candidates(lm, source: SourceSequence, params: DecodeParams,
                        rng: random.Random,
                        closed_class=DEFAULT_CLOSED_CLASS,
                        morph: MorphologyProvider = rule_inflections,
                        ) -> list[Candidate]:
    """The multi-dictionary pool: sample num_dictionaries active
    sub-dictionaries, decode under each, keep the top
    keep_per_dictionary beams, then dedup and drop source copies.

    A backend failure aborts only the dictionary it happened under. An
    empty pool after filtering raises NoParaphraseFound unless every
    single decode failed, in which case the last backend error surfaces.
    """
    dictionary = build_dictionary(source, closed_class, morph)
    if params.blocking == "dynamic":
        actives = [
            sample_active(dictionary, params.p, rng.randrange(2**32))
            for _ in range(params.num_dictionaries)
        ]
    else:
        # static and unblocked decodes do not depend on the sampled
        # dictionary, so one decode covers the whole pool
        actives = [None]
    source_text = detokenize(tuple(source))
    pool: list[Candidate] = []
    seen: set[str] = set()
    last_error: Exception | None = None
    failures = 0
    for d_index, active in enumerate(actives):
        decode_rng = random.Random(rng.randrange(2**32))
        try:
            beams = decode_hypotheses(lm, source, active, params, decode_rng,
                                      closed_class, morph)
        except (TransportError, ProtocolError) as exc:
            last_error = exc
            failures += 1
            continue
        for rank, hyp in enumerate(beams[:params.keep_per_dictionary]):
            text = hyp.text()
            if text == source_text or text in seen:
                continue
            seen.add(text)
            surfaces = tuple(t.surface for t in hyp.content_tokens())
            pool.append(Candidate(text, surfaces, hyp.cum_logprob,
                                  dictionary_index=d_index, beam_rank=rank,
                                  audit=hyp.audit))
    if not pool:
        if last_error is not None and failures == len(actives):
            raise last_error
        raise NoParaphraseFound(
            "every candidate was a copy of the source or a duplicate")
    return pool

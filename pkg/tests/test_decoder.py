import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parablock import blocking, decoder, lm
from parablock.blocking import ActiveBlockDictionary, full_active
from parablock.decoder import DecodeParams, Hypothesis
from parablock.errors import ConfigError, NoParaphraseFound, TransportError
from parablock.lm import DENSE, SPARSE, NextTokenDistribution
from parablock.tokens import EOS_ID, Token, Vocab, tokenize

import oracles

FRUIT = "I like apples and oranges ."
CORPUS = ["I like apples and oranges .", "I like oranges and apples ."]


def fruit_echo(lam=0.95):
    return lm.make_copy_echo(lm.train_ngram(CORPUS, order=2), lam)


class FixedLM:
    """Dense or sparse stub with one distribution for every prefix."""

    def __init__(self, vocab, probs, coverage=DENSE, top_k=None):
        self.vocab = vocab
        self.probs = probs
        self.coverage = coverage
        self.top_k = top_k

    def run_vocab(self, source):
        return self.vocab.extend(t.surface for t in source)

    def next_distribution(self, source, prefix):
        v = self.run_vocab(source)
        entries = {v.id_of(s): math.log(p) for s, p in self.probs.items()}
        return NextTokenDistribution(entries, self.coverage, self.top_k)


def test_params_validation():
    DecodeParams()
    with pytest.raises(ConfigError):
        DecodeParams(keep_per_dictionary=5, beam_width=4)
    with pytest.raises(ConfigError):
        DecodeParams(keep_per_dictionary=0)
    with pytest.raises(ConfigError):
        DecodeParams(max_length=0)
    with pytest.raises(ConfigError):
        DecodeParams(num_dictionaries=0)
    with pytest.raises(ConfigError):
        DecodeParams(p=1.2)
    with pytest.raises(ConfigError):
        DecodeParams(mode="magic")
    with pytest.raises(ConfigError):
        DecodeParams(blocking="sometimes")
    with pytest.raises(ConfigError):
        DecodeParams(mode="top_k", top_k=0)
    with pytest.raises(ConfigError):
        DecodeParams(mode="top_p", top_p=0.0)


def test_step_hand_renormalization():
    vocab = Vocab(["A", "B", "t"])
    backend = FixedLM(vocab, {"A": 0.6, "B": 0.3, "</s>": 0.1})
    active = ActiveBlockDictionary((("t", "a"),), {"a": frozenset({"A"})}, 1.0)
    hyp = Hypothesis((vocab.bos(), vocab.token("t")))
    params = DecodeParams(mode="beam", blocking="dynamic")
    out = decoder.step(backend, tokenize("t A"), hyp, active, params)
    by_surface = {h.tokens[-1].surface: math.exp(h.cum_logprob) for h in out}
    assert "A" not in by_surface
    assert by_surface["B"] == pytest.approx(0.75, abs=1e-12)
    assert by_surface["</s>"] == pytest.approx(0.25, abs=1e-12)


def test_step_mask_lasts_one_step():
    vocab = Vocab(["x", "y", "z"])
    backend = FixedLM(vocab, {"x": 0.3, "y": 0.3, "z": 0.3, "</s>": 0.1})
    src = tokenize("x y")
    active = full_active(blocking.build_dictionary(src,
                                                   closed_class=frozenset()))
    params = DecodeParams(mode="beam", blocking="dynamic")
    hyp = Hypothesis((vocab.bos(), vocab.token("x")))
    first = decoder.step(backend, src, hyp, active, params)
    assert "y" not in {h.tokens[-1].surface for h in first}
    follow = next(h for h in first if h.tokens[-1].surface == "z")
    second = decoder.step(backend, src, follow, active, params)
    # "y" was blocked for a single step only
    assert "y" in {h.tokens[-1].surface for h in second}


def test_step_audit_records_mask():
    src = tokenize("x y")
    vocab = Vocab(["x", "y"])
    backend = FixedLM(vocab, {"x": 0.5, "y": 0.4, "</s>": 0.1})
    active = full_active(blocking.build_dictionary(src,
                                                   closed_class=frozenset()))
    params = DecodeParams(mode="beam", blocking="dynamic")
    hyp = Hypothesis((vocab.bos(), vocab.token("x")))
    out = decoder.step(backend, src, hyp, active, params)
    audit = out[0].audit[-1]
    assert audit.trigger == "x"
    assert "y" in audit.blocked and "Y" in audit.blocked


def test_renormalized_step_probabilities_sum_to_one():
    echo = fruit_echo(0.7)
    src = tokenize(FRUIT)
    active = full_active(blocking.build_dictionary(src))
    params = DecodeParams(mode="beam", blocking="dynamic")
    vocab = echo.run_vocab(src)
    hyp = Hypothesis((vocab.bos(), vocab.token("like")))
    out = decoder.step(echo, src, hyp, active, params)
    total = math.fsum(math.exp(h.cum_logprob - hyp.cum_logprob) for h in out)
    assert total == pytest.approx(1.0, abs=1e-6)
    assert all(h.tokens[-1].surface != "apples" for h in out)


def test_sparse_exhaustion_falls_back_to_eos():
    vocab = Vocab(["x", "y"])
    backend = FixedLM(vocab, {"y": 0.9}, coverage=SPARSE, top_k=1)
    src = tokenize("x y")
    active = full_active(blocking.build_dictionary(src,
                                                   closed_class=frozenset()))
    params = DecodeParams(mode="greedy", blocking="dynamic")
    hyp = Hypothesis((vocab.bos(), vocab.token("x")))
    out = decoder.step(backend, src, hyp, active, params)
    assert len(out) == 1 and out[0].finished
    assert out[0].tokens[-1].id == EOS_ID
    assert out[0].cum_logprob == hyp.cum_logprob


def test_greedy_unblocked_copy_backend_parrots():
    echo = fruit_echo()
    src = tokenize(FRUIT)
    params = DecodeParams(mode="greedy", blocking="off", max_length=16)
    [(text, _)] = decoder.decode(echo, src, None, params)
    assert text == FRUIT


def test_full_blocking_diverges_from_source():
    echo = fruit_echo()
    src = tokenize(FRUIT)
    active = full_active(blocking.build_dictionary(src))
    for mode in ("greedy", "beam"):
        params = DecodeParams(mode=mode, blocking="dynamic", max_length=16)
        text, _ = decoder.decode(echo, src, active, params)[0]
        assert text != FRUIT


def test_empty_active_set_matches_blocking_off_exactly():
    echo = fruit_echo(0.8)
    src = tokenize(FRUIT)
    empty = blocking.sample_active(blocking.build_dictionary(src), 0.0, seed=7)
    for mode in ("greedy", "beam", "top_k", "top_p"):
        p_dyn = DecodeParams(mode=mode, blocking="dynamic", max_length=10)
        p_off = DecodeParams(mode=mode, blocking="off", max_length=10)
        dyn = decoder.decode_hypotheses(echo, src, empty, p_dyn,
                                        random.Random(5))
        off = decoder.decode_hypotheses(echo, src, None, p_off,
                                        random.Random(5))
        assert [h.id_seq() for h in dyn] == [h.id_seq() for h in off]
        assert [h.cum_logprob for h in dyn] == [h.cum_logprob for h in off]


def test_static_blocking_masks_at_every_step():
    echo = fruit_echo()
    src = tokenize(FRUIT)
    params = DecodeParams(mode="beam", blocking="static", max_length=10)
    static = blocking.static_block_set(src)
    for hyp in decoder.decode_hypotheses(echo, src, None, params):
        for tok in hyp.content_tokens():
            assert tok.surface not in static


def test_sampling_modes_need_rng_and_are_deterministic():
    echo = fruit_echo(0.5)
    src = tokenize(FRUIT)
    params = DecodeParams(mode="top_k", top_k=3, blocking="off", max_length=8)
    with pytest.raises(ConfigError):
        decoder.decode(echo, src, None, params)
    a = decoder.decode(echo, src, None, params, random.Random(11))
    b = decoder.decode(echo, src, None, params, random.Random(11))
    assert a == b
    params_p = DecodeParams(mode="top_p", top_p=0.8, blocking="off",
                            max_length=8)
    c = decoder.decode(echo, src, None, params_p, random.Random(11))
    assert decoder.decode(echo, src, None, params_p, random.Random(11)) == c


def test_max_length_caps_unfinished_hypotheses():
    vocab = Vocab(["x"])
    backend = FixedLM(vocab, {"x": 0.99, "</s>": 0.01})
    src = tokenize("x")
    params = DecodeParams(mode="greedy", blocking="off", max_length=3)
    [hyp] = decoder.decode_hypotheses(backend, src, None, params)
    assert not hyp.finished
    assert hyp.generated_count() == 3
    assert hyp.text() == "x x x"


def test_length_normalized_score_shapes():
    t = Token("w", 3)
    bos = Token("<s>", 0)
    single = Hypothesis((bos, t), cum_logprob=-1.5)
    assert decoder.length_normalized_score(single) == -1.5
    a = Hypothesis((bos,) + (t,) * 4, cum_logprob=-4.0)
    b = Hypothesis((bos,) + (t,) * 5, cum_logprob=-4.0)
    assert decoder.length_normalized_score(a) < decoder.length_normalized_score(b)
    # equal scores fall back to token ids
    c = Hypothesis((bos, Token("w", 3), Token("q", 4)), cum_logprob=-2.0)
    d = Hypothesis((bos, Token("w", 3), Token("r", 5)), cum_logprob=-2.0)
    ranked = sorted([d, c], key=decoder._final_order)
    assert ranked == [c, d]


def beam_matches_exhaustive(backend, src, max_length=3):
    active = full_active(blocking.build_dictionary(src,
                                                   closed_class=frozenset()))
    params = DecodeParams(beam_width=400, keep_per_dictionary=1,
                          mode="beam", blocking="dynamic",
                          max_length=max_length)
    beams = decoder.decode_hypotheses(backend, src, active, params)
    vocab = backend.run_vocab(src)

    def blocked_fn(prefix_tokens):
        forms = blocking.triggered_block_set(active, prefix_tokens[-1])
        return {vocab.id_of(s) for s in forms if s in vocab}

    results = oracles.enumerate_decodes(backend, src, blocked_fn,
                                        max_length, EOS_ID)
    want_ids, want_lp = oracles.best_decode(results)
    got = beams[0]
    assert got.id_seq() == want_ids
    steps = len(want_ids) - 1
    assert decoder.length_normalized_score(got) == pytest.approx(
        want_lp / max(1, steps), abs=1e-9)


def test_beam_equals_exhaustive_oracle_small():
    base = lm.train_ngram(["a b c", "b a c", "c a b"], order=2)
    for text in ("a b", "b c a", "a a b"):
        beam_matches_exhaustive(base, tokenize(text))
        beam_matches_exhaustive(lm.make_copy_echo(base, 0.6), tokenize(text))


def test_generate_candidates_pool_shape_and_determinism():
    echo = fruit_echo()
    src = tokenize(FRUIT)
    params = DecodeParams(max_length=12)
    pool = decoder.generate_candidates(echo, src, params, random.Random(3))
    assert 0 < len(pool) <= params.num_dictionaries * params.keep_per_dictionary
    texts = [c.text for c in pool]
    assert len(set(texts)) == len(texts)
    assert FRUIT not in texts
    again = decoder.generate_candidates(echo, src, params, random.Random(3))
    assert pool == again


def test_generate_candidates_p0_greedy_raises_no_paraphrase():
    echo = fruit_echo()
    src = tokenize(FRUIT)
    params = DecodeParams(mode="greedy", p=0.0, max_length=12)
    with pytest.raises(NoParaphraseFound):
        decoder.generate_candidates(echo, src, params, random.Random(0))


class FailingLM:
    """Raises for the first ``failures`` distribution calls."""

    def __init__(self, inner, failures):
        self.inner = inner
        self.remaining = failures

    def run_vocab(self, source):
        return self.inner.run_vocab(source)

    def next_distribution(self, source, prefix):
        if self.remaining > 0:
            self.remaining -= 1
            raise TransportError("connection dropped")
        return self.inner.next_distribution(source, prefix)


def test_backend_failure_skips_that_dictionary_only():
    echo = fruit_echo()
    src = tokenize(FRUIT)
    params = DecodeParams(max_length=12, num_dictionaries=4)
    flaky = FailingLM(echo, failures=2)
    pool = decoder.generate_candidates(flaky, src, params, random.Random(3))
    assert pool
    assert {c.dictionary_index for c in pool} <= {1, 2, 3}


def test_all_backends_failing_surfaces_the_error():
    echo = fruit_echo()
    src = tokenize(FRUIT)
    params = DecodeParams(max_length=12, num_dictionaries=3)
    dead = FailingLM(echo, failures=10**9)
    with pytest.raises(TransportError):
        decoder.generate_candidates(dead, src, params, random.Random(3))


source_texts = st.lists(
    st.sampled_from("alpha beta gamma delta run see the and".split()),
    min_size=2, max_size=6).map(" ".join)


@settings(max_examples=150, deadline=None)
@given(source_texts, st.integers(0, 2**31 - 1))
def test_blocking_soundness_fuzz(text, seed):
    src = tokenize(text)
    base = lm.train_ngram(["alpha beta gamma", "delta run see",
                           "the and alpha"], order=2)
    echo = lm.make_copy_echo(base, 0.9)
    active = full_active(blocking.build_dictionary(src))
    params = DecodeParams(mode="beam", beam_width=3, keep_per_dictionary=2,
                          blocking="dynamic", max_length=8)
    for hyp in decoder.decode_hypotheses(echo, src, active, params):
        emitted = hyp.tokens[1:]
        assert len(hyp.audit) == len(emitted)
        for tok, audit in zip(emitted, hyp.audit):
            assert tok.surface not in audit.blocked
        # pairwise restatement of the same property
        for left, right in zip(emitted, emitted[1:]):
            for trig, blocked_key in active.entries:
                if trig == left.norm:
                    assert right.surface not in active.expansion[blocked_key]

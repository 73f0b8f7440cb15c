"""Evaluation metrics over token lists.

BLEU here is the standard corpus BLEU (geometric mean of clipped n-gram
precisions up to 4, times brevity penalty, scaled to [0, 100]). Sentence
BLEU adds add-one smoothing to any n>=2 precision whose raw match count is
zero. Self-BLEU scores a candidate against its own source and measures
parroting; iBLEU = alpha * BLEU - (1 - alpha) * self-BLEU. ROUGE is
reported as F1 by default. ``similarity_dissimilarity_mean`` is the
harmonic mean of a semantic similarity and (1 - self-BLEU/100).
"""

import json
import math
from collections import Counter
from dataclasses import dataclass

from .errors import ConfigError, ScoringError

MAX_BLEU_ORDER = 4


def _ngram_counts(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _clipped_matches(cand_counts: Counter, ref_counts_list) -> int:
    matches = 0
    for gram, count in cand_counts.items():
        best = max((rc.get(gram, 0) for rc in ref_counts_list), default=0)
        matches += min(count, best)
    return matches


def _effective_ref_len(cand_len: int, ref_lens) -> int:
    # closest reference length; ties go to the shorter one
    return min(ref_lens, key=lambda r: (abs(r - cand_len), r))


def _brevity_penalty(cand_len: int, ref_len: int) -> float:
    if cand_len == 0:
        return 0.0
    if cand_len >= ref_len:
        return 1.0
    return math.exp(1.0 - ref_len / cand_len)


def _geometric_mean(precisions) -> float:
    if any(p == 0.0 for p in precisions):
        return 0.0
    return math.exp(sum(math.log(p) for p in precisions) / len(precisions))


def corpus_bleu(candidates, references, max_n: int = MAX_BLEU_ORDER) -> float:
    """Corpus BLEU in [0, 100]; no smoothing.

    ``candidates`` is a list of token lists, ``references`` a parallel list
    of reference groups (each a list of token lists).
    """
    if len(candidates) != len(references):
        raise ScoringError("candidates and references must be parallel")
    if not candidates:
        raise ScoringError("empty corpus")
    match_totals = [0] * max_n
    cand_totals = [0] * max_n
    cand_len_total = 0
    ref_len_total = 0
    for cand, refs in zip(candidates, references):
        cand_len_total += len(cand)
        ref_len_total += _effective_ref_len(len(cand), [len(r) for r in refs])
        for n in range(1, max_n + 1):
            cc = _ngram_counts(cand, n)
            rcs = [_ngram_counts(r, n) for r in refs]
            match_totals[n - 1] += _clipped_matches(cc, rcs)
            cand_totals[n - 1] += max(0, len(cand) - n + 1)
    # orders with no n-gram slots anywhere in the corpus are left out of the
    # geometric mean, so a one-token corpus can still score 100
    precisions = [m / t for m, t in zip(match_totals, cand_totals) if t > 0]
    if not precisions:
        return 0.0
    bp = _brevity_penalty(cand_len_total, ref_len_total)
    return 100.0 * bp * _geometric_mean(precisions)


def sentence_bleu(candidate, references, smoothing: bool = True,
                  max_n: int = MAX_BLEU_ORDER) -> float:
    """Sentence-level BLEU in [0, 100].

    With smoothing on, any n>=2 precision whose raw clipped count is zero
    becomes (0+1)/(denominator+1); the unigram precision is never smoothed,
    so candidates sharing no unigram with any reference score 0.
    """
    if not candidate or not references:
        return 0.0
    precisions = []
    for n in range(1, max_n + 1):
        cc = _ngram_counts(candidate, n)
        rcs = [_ngram_counts(r, n) for r in references]
        matches = _clipped_matches(cc, rcs)
        total = max(0, len(candidate) - n + 1)
        if matches == 0 and smoothing and n >= 2:
            precisions.append(1.0 / (total + 1))
        else:
            precisions.append(matches / total if total > 0 else 0.0)
    ref_len = _effective_ref_len(len(candidate), [len(r) for r in references])
    bp = _brevity_penalty(len(candidate), ref_len)
    return 100.0 * bp * _geometric_mean(precisions)


def self_bleu(candidate, source) -> float:
    """Sentence BLEU of a candidate against its own source; 100 means parroting."""
    return sentence_bleu(candidate, [source])


def ibleu(candidate, references, source, alpha: float = 0.9) -> float:
    """alpha * BLEU(candidate, references) - (1 - alpha) * self-BLEU(candidate, source)."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"ibleu alpha must be in [0, 1], got {alpha}")
    return (alpha * sentence_bleu(candidate, references)
            - (1.0 - alpha) * self_bleu(candidate, source))


def corpus_ibleu(candidates, references, sources, alpha: float = 0.9) -> float:
    """Mean of sentence-level iBLEU over a parallel corpus."""
    if not (len(candidates) == len(references) == len(sources)):
        raise ScoringError("candidates, references and sources must be parallel")
    if not candidates:
        raise ScoringError("empty corpus")
    values = [ibleu(c, r, s, alpha)
              for c, r, s in zip(candidates, references, sources)]
    return sum(values) / len(values)


def rouge_n(candidate, reference, n: int, recall_only: bool = False) -> float:
    """ROUGE-N F1 (or recall with ``recall_only``) in [0, 100]."""
    if n < 1:
        raise ConfigError(f"rouge order must be >= 1, got {n}")
    cc = _ngram_counts(candidate, n)
    rc = _ngram_counts(reference, n)
    overlap = sum(min(count, rc.get(gram, 0)) for gram, count in cc.items())
    ref_total = max(0, len(reference) - n + 1)
    cand_total = max(0, len(candidate) - n + 1)
    recall = overlap / ref_total if ref_total > 0 else 0.0
    if recall_only:
        return 100.0 * recall
    precision = overlap / cand_total if cand_total > 0 else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 100.0 * 2.0 * precision * recall / (precision + recall)


def _lcs_len(a, b) -> int:
    # one-row DP over the shorter side
    if len(b) > len(a):
        a, b = b, a
    row = [0] * (len(b) + 1)
    for x in a:
        prev_diag = 0
        for j, y in enumerate(b, start=1):
            prev_row = row[j]
            row[j] = prev_diag + 1 if x == y else max(row[j - 1], row[j])
            prev_diag = prev_row
    return row[len(b)]


def rouge_l(candidate, reference) -> float:
    """ROUGE-L F1 from longest common subsequence length, in [0, 100]."""
    if not candidate or not reference:
        return 0.0
    lcs = _lcs_len(candidate, reference)
    recall = lcs / len(reference)
    precision = lcs / len(candidate)
    if precision + recall == 0.0:
        return 0.0
    return 100.0 * 2.0 * precision * recall / (precision + recall)


def similarity_dissimilarity_mean(semantic_sim: float, self_bleu_score: float) -> float:
    """Harmonic mean of semantic similarity and (1 - self-BLEU/100).

    Zero when both terms are zero; zero whenever the candidate parrots the
    source (dissimilarity 0) no matter how high the similarity.
    """
    dissim = max(0.0, 1.0 - self_bleu_score / 100.0)
    if semantic_sim + dissim == 0.0:
        return 0.0
    return 2.0 * semantic_sim * dissim / (semantic_sim + dissim)


# Short name matching the report field.
bs_sb = similarity_dissimilarity_mean


def oracle_select(candidate_sets, references, metric, corpus_metric=None):
    """Pick, per example, the candidate with the best sentence-level score
    against the ground truth, then score the selections at corpus level.

    ``metric(candidate, references) -> float`` is the per-sentence scorer;
    ``corpus_metric(candidates, references) -> float`` defaults to corpus BLEU.
    Returns (selected candidates, corpus score).
    """
    if len(candidate_sets) != len(references):
        raise ScoringError("candidate sets and references must be parallel")
    selected = []
    for cands, refs in zip(candidate_sets, references):
        if not cands:
            raise ScoringError("empty candidate set")
        best = max(cands, key=lambda c: metric(c, refs))
        selected.append(best)
    scorer = corpus_metric if corpus_metric is not None else corpus_bleu
    return selected, scorer(selected, references)


@dataclass
class MetricReport:
    bleu: float
    ibleu: float
    rouge1: float
    rouge2: float
    rougeL: float
    self_bleu: float
    bs_sb: float

    def to_json(self) -> str:
        return json.dumps({
            "bleu": self.bleu,
            "ibleu": self.ibleu,
            "rouge1": self.rouge1,
            "rouge2": self.rouge2,
            "rougeL": self.rougeL,
            "self_bleu": self.self_bleu,
            "bs_sb": self.bs_sb,
        })

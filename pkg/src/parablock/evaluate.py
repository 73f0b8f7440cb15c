"""Evaluation harness over system-output files.

The input is a TSV with one example per line: source, pipe-separated
candidates, pipe-separated references. Scoring uses the first candidate
of every example; oracle mode instead picks, per example, the candidate
with the best sentence-level score against the references before the
corpus-level numbers are computed.

All metrics run on the canonical word tokenization of both sides, so
third-party system outputs with uncanonical spacing are comparable.
"""

from dataclasses import dataclass
from statistics import fmean

from . import metrics, rerank
from .errors import ConfigError, DataError, ScoringError
from .metrics import MetricReport
from .tokens import normalize_key, tokenize


@dataclass(frozen=True)
class EvalExample:
    source: str
    candidates: tuple[str, ...]
    references: tuple[str, ...]


def metric_tokens(text: str) -> list[str]:
    return [t.surface for t in tokenize(text)]


def _split_group(value: str, what: str, lineno: int) -> tuple[str, ...]:
    parts = tuple(p.strip() for p in value.split("|"))
    if not parts or any(not p for p in parts):
        raise DataError(f"empty {what} entry", line=lineno)
    return parts


def parse_eval_file(path: str) -> list[EvalExample]:
    examples = []
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
            columns = line.split("\t")
            if len(columns) != 3:
                raise DataError(f"expected 3 columns, got {len(columns)}",
                                line=lineno)
            source = columns[0].strip()
            if not source:
                raise DataError("empty source", line=lineno)
            examples.append(EvalExample(
                source,
                _split_group(columns[1], "candidate", lineno),
                _split_group(columns[2], "reference", lineno),
            ))
    return examples


def _similarity(cand_tokens, source_tokens, idf, emb) -> float:
    cand_keys = [normalize_key(t) for t in cand_tokens]
    source_keys = [normalize_key(t) for t in source_tokens]
    if not cand_keys or not source_keys:
        return 0.0
    return rerank.semantic_similarity(cand_keys, source_keys, idf, emb)


def build_report(examples, alpha: float = 0.9, oracle: bool = False,
                 idf=None, emb=None, recall_only: bool = False,
                 max_n: int = 4) -> MetricReport:
    """Score a parsed evaluation set into one MetricReport.

    iBLEU here is corpus-level: alpha * corpus BLEU minus (1 - alpha)
    times the mean self-BLEU, so the report's bleu and ibleu fields stay
    mutually consistent. ROUGE takes the best reference per example.
    """
    if not examples:
        raise ScoringError("no examples to score")
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must be in [0, 1], got {alpha}")
    if emb is None:
        emb = rerank.HashEmbedding()

    sources = [metric_tokens(ex.source) for ex in examples]
    refs = [[metric_tokens(r) for r in ex.references] for ex in examples]
    if oracle:
        sets = [[metric_tokens(c) for c in ex.candidates] for ex in examples]
        cands, bleu = metrics.oracle_select(
            sets, refs, metrics.sentence_bleu,
            corpus_metric=lambda c, r: metrics.corpus_bleu(c, r, max_n))
    else:
        cands = [metric_tokens(ex.candidates[0]) for ex in examples]
        bleu = metrics.corpus_bleu(cands, refs, max_n)

    self_vals = [metrics.self_bleu(c, s) for c, s in zip(cands, sources)]
    bs_vals = [
        metrics.bs_sb(_similarity(c, s, idf, emb), sb)
        for c, s, sb in zip(cands, sources, self_vals)
    ]
    rouge1 = [max(metrics.rouge_n(c, r, 1, recall_only) for r in rs)
              for c, rs in zip(cands, refs)]
    rouge2 = [max(metrics.rouge_n(c, r, 2, recall_only) for r in rs)
              for c, rs in zip(cands, refs)]
    rougeL = [max(metrics.rouge_l(c, r) for r in rs)
              for c, rs in zip(cands, refs)]

    mean_self = fmean(self_vals)
    return MetricReport(
        bleu=bleu,
        ibleu=alpha * bleu - (1.0 - alpha) * mean_self,
        rouge1=fmean(rouge1),
        rouge2=fmean(rouge2),
        rougeL=fmean(rougeL),
        self_bleu=mean_self,
        bs_sb=fmean(bs_vals),
    )

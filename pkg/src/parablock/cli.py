"""Command-line entry points: paraphrase, evaluate, corpus-prep, selfsup-gen.

Exit codes follow the BSD sysexits convention where one fits: 0 success,
2 when at least one sentence produced no paraphrase, 64 usage, 65 bad
input data, 66 unreadable or unwritable files, 69 backend failure.
"""

import argparse
import random
import sys

from . import data, rerank
from .blocking import closed_class_from_env, load_closed_class
from .data import CorruptionSpec, IdfTable, compute_idf, ingest_corpus
from .decoder import DecodeParams, generate_candidates
from .errors import (
    ConfigError,
    DataError,
    NoParaphraseFound,
    ProtocolError,
    ScoringError,
    TransportError,
)
from .evaluate import build_report, parse_eval_file
from .lm import make_copy_echo, train_ngram
from .tokens import tokenize
from .wire import RemoteLM, connect_tcp

EXIT_OK = 0
EXIT_NO_PARAPHRASE = 2
EXIT_USAGE = 64
EXIT_DATA = 65
EXIT_IO = 66
EXIT_BACKEND = 69


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def make_backend(selector: str):
    """ngram:corpus.txt | copyecho:lambda:corpus.txt | remote:host:port

    The reference backends train on the named text corpus at startup;
    remote backends connect and handshake immediately.
    """
    kind, _, rest = selector.partition(":")
    if kind == "ngram":
        if not rest:
            raise ConfigError("ngram backend needs a corpus path")
        return train_ngram(ingest_corpus(rest))
    if kind == "copyecho":
        lam_text, _, path = rest.partition(":")
        if not lam_text or not path:
            raise ConfigError("copyecho backend needs lambda:corpus-path")
        try:
            lam = float(lam_text)
        except ValueError as exc:
            raise ConfigError(f"bad copy weight {lam_text!r}") from exc
        return make_copy_echo(train_ngram(ingest_corpus(path)), lam)
    if kind == "remote":
        host, _, port_text = rest.rpartition(":")
        try:
            port = int(port_text)
        except ValueError as exc:
            raise ConfigError(f"bad remote endpoint {rest!r}") from exc
        if not host:
            raise ConfigError(f"bad remote endpoint {rest!r}")
        return RemoteLM(lambda: connect_tcp(host, port))
    raise ConfigError(f"unknown backend selector {selector!r}")


def resolve_seed(args) -> int:
    """Defaulted seeds are printed so any run can be reproduced."""
    if args.seed is not None:
        return args.seed
    seed = random.SystemRandom().randrange(2**32)
    print(f"seed {seed}", file=sys.stderr)
    return seed


# flag spellings differ from the DecodeParams mode names
_MODE_FOR_FLAG = {"greedy": "greedy", "beam": "beam", "topk": "top_k", "topp": "top_p"}


def decode_params(args) -> DecodeParams:
    return DecodeParams(
        beam_width=args.beam_width,
        keep_per_dictionary=args.keep,
        num_dictionaries=args.num_dicts,
        p=args.p,
        max_length=args.max_length,
        mode=_MODE_FOR_FLAG[args.decode_mode],
        blocking=args.blocking,
        top_k=args.top_k,
        top_p=args.top_p,
    )


def add_decode_flags(sub, mode_flag="--mode", backend_required=True):
    sub.add_argument("--backend", required=backend_required,
                     help="ngram:corpus | copyecho:lambda:corpus | remote:host:port")
    sub.add_argument("--p", type=float, default=0.5,
                     help="per-entry probability that a block entry is active")
    sub.add_argument("--beam-width", type=int, default=4)
    sub.add_argument("--keep", type=int, default=2,
                     help="candidates kept per sampled dictionary")
    sub.add_argument("--num-dicts", type=int, default=10)
    sub.add_argument("--max-length", type=int, default=64)
    sub.add_argument("--blocking", choices=["dynamic", "static", "off"],
                     default="dynamic")
    sub.add_argument(mode_flag, dest="decode_mode",
                     choices=["greedy", "beam", "topk", "topp"],
                     default="beam")
    sub.add_argument("--top-k", type=int, default=40)
    sub.add_argument("--top-p", type=float, default=0.9)
    sub.add_argument("--closed-class", default=None,
                     help="path to a closed-class word list, one per line")
    sub.add_argument("--idf", default=None,
                     help="IDF table for reranking, from corpus-prep")


def closed_class_for(args):
    if args.closed_class:
        return load_closed_class(args.closed_class)
    return closed_class_from_env()


def idf_for(args):
    if args.idf:
        return IdfTable.load(args.idf)
    return None


def _open_out(path):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", encoding="utf-8"), True


def cmd_paraphrase(args) -> int:
    lm = make_backend(args.backend)
    params = decode_params(args)
    closed = closed_class_for(args)
    idf = idf_for(args)
    seed = resolve_seed(args)
    rng = random.Random(seed)
    if args.input is None or args.input == "-":
        lines = [ln.strip() for ln in sys.stdin if ln.strip()]
    else:
        lines = list(ingest_corpus(args.input))
    out, owned = _open_out(args.out)
    missing = 0
    try:
        for line in lines:
            source = tokenize(line)
            if len(source) == 0:
                continue
            try:
                pool = generate_candidates(lm, source, params, rng,
                                           closed_class=closed)
            except NoParaphraseFound:
                missing += 1
                continue
            ranked = rerank.rank(pool, source, idf=idf)
            for position, cand in enumerate(ranked, start=1):
                out.write(f"{source.text()}\t{position}\t{cand.text}"
                          f"\t{cand.rank_score!r}\n")
    finally:
        if owned:
            out.close()
    return EXIT_NO_PARAPHRASE if missing else EXIT_OK


def cmd_evaluate(args) -> int:
    try:
        examples = parse_eval_file(args.input)
        report = build_report(examples, alpha=args.ibleu_alpha,
                              oracle=args.oracle, idf=idf_for(args),
                              recall_only=args.rouge_recall)
    except ScoringError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    out, owned = _open_out(args.out)
    try:
        out.write(report.to_json() + "\n")
    finally:
        if owned:
            out.close()
    return EXIT_OK


def cmd_corpus_prep(args) -> int:
    try:
        table = compute_idf(ingest_corpus(args.input))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    if args.out is None or args.out == "-":
        sys.stdout.write(f"#docs\t{table.doc_count}\n")
        for key in sorted(table.weights):
            sys.stdout.write(f"{key}\t{table.weights[key]!r}\n")
    else:
        table.save(args.out)
    return EXIT_OK


def cmd_selfsup_gen(args) -> int:
    seed = resolve_seed(args)
    corpus = ingest_corpus(args.input)
    if args.mode == "adaptation":
        stopwords = None
        if args.stopwords:
            stopwords = data.load_stopwords(args.stopwords)
        spec = CorruptionSpec(mode=args.corruption, rate=args.rate,
                              stopwords=stopwords, seed=seed)
        written = data.emit_adaptation_pairs(corpus, spec, args.out)
        print(f"written {written}")
        return EXIT_OK
    if not args.backend:
        raise ConfigError("selfsup mode needs --backend")
    lm = make_backend(args.backend)
    params = decode_params(args)
    written, skipped = data.emit_selfsup_pairs(
        lm, corpus, params, args.out, seed=seed, idf=idf_for(args))
    print(f"written {written}")
    print(f"skipped {skipped}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="parablock",
                     description="Paraphrase by blocked decoding over any "
                                 "next-token language model.")
    commands = parser.add_subparsers(dest="command", required=True)

    par = commands.add_parser(
        "paraphrase", help="generate ranked paraphrase candidates",
        description="Read sentences (file or stdin), print ranked "
                    "candidates as source<TAB>rank<TAB>candidate<TAB>score.")
    par.add_argument("input", nargs="?", default=None,
                     help="sentence file, one per line; default stdin")
    add_decode_flags(par)
    par.add_argument("--seed", type=int, default=None)
    par.add_argument("--out", default=None)
    par.set_defaults(func=cmd_paraphrase)

    ev = commands.add_parser(
        "evaluate", help="score system outputs into a metric report",
        description="Input TSV: source<TAB>cand1|cand2<TAB>ref1|ref2. "
                    "Prints one JSON object of corpus metrics.")
    ev.add_argument("input")
    ev.add_argument("--ibleu-alpha", type=float, default=0.9)
    ev.add_argument("--oracle", action="store_true",
                    help="per example, score the best candidate instead "
                         "of the first")
    ev.add_argument("--rouge-recall", action="store_true",
                    help="report ROUGE recall instead of F1")
    ev.add_argument("--idf", default=None)
    ev.add_argument("--out", default=None)
    ev.set_defaults(func=cmd_evaluate)

    prep = commands.add_parser(
        "corpus-prep", help="build an IDF table from a corpus")
    prep.add_argument("input")
    prep.add_argument("--out", default=None)
    prep.set_defaults(func=cmd_corpus_prep)

    gen = commands.add_parser(
        "selfsup-gen", help="emit pseudo-pair training files",
        description="adaptation mode corrupts each sentence and pairs it "
                    "with the original; selfsup mode pairs each sentence "
                    "with its top-ranked paraphrase.")
    gen.add_argument("input")
    gen.add_argument("--mode", choices=["adaptation", "selfsup"],
                     required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--rate", type=float, default=0.3)
    gen.add_argument("--corruption", choices=["uniform-drop", "stopword-drop"],
                     default="uniform-drop")
    gen.add_argument("--stopwords", default=None)
    add_decode_flags(gen, mode_flag="--decode-mode", backend_required=False)
    gen.add_argument("--seed", type=int, default=None)
    gen.set_defaults(func=cmd_selfsup_gen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TransportError, ProtocolError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

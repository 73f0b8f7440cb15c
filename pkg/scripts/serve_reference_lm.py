#!/usr/bin/env python3
"""Serve a reference n-gram backend over the newline-JSON wire protocol.

Handy for exercising remote:host:port backends and conformance checks
without a real model server:

    python3 scripts/serve_reference_lm.py corpus.txt --port 9277

The process prints the bound address and serves until interrupted.
"""

import argparse
import sys

from parablock.data import ingest_corpus
from parablock.lm import make_copy_echo, train_ngram
from parablock.rerank import HashEmbedding
from parablock.wire import DEFAULT_TOP_K, serve_tcp


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("corpus", help="training text, one sentence per line")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=0,
                        help="0 picks a free port")
    parser.add_argument("--order", type=int, default=2)
    parser.add_argument("--top-k", type=int, default=DEFAULT_TOP_K)
    parser.add_argument("--copyecho", type=float, default=None, metavar="LAMBDA",
                        help="wrap the n-gram model in a copy mixture")
    parser.add_argument("--no-embeddings", action="store_true",
                        help="reject embed requests instead of hashing")
    args = parser.parse_args()

    sentences = list(ingest_corpus(args.corpus))
    lm = train_ngram(sentences, order=args.order)
    if args.copyecho is not None:
        lm = make_copy_echo(lm, lam=args.copyecho)
    emb = None if args.no_embeddings else HashEmbedding()

    server = serve_tcp(lm, host=args.host, port=args.port,
                       emb=emb, top_k=args.top_k)
    host, port = server.server_address[:2]
    print(f"serving on {host}:{port}", file=sys.stderr)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        server.server_close()


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Regenerate the frozen metric fixtures under tests/fixtures/metrics/.

Expected values come from the reference implementations in tests/oracles.py,
never from the package itself. Run from the repository root:

    python3 scripts/gen_metric_fixtures.py
"""

import pathlib
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "tests"))

import metric_cases  # noqa: E402
import oracles  # noqa: E402

OUT = ROOT / "tests" / "fixtures" / "metrics"


def write(name, rows):
    OUT.mkdir(parents=True, exist_ok=True)
    path = OUT / f"{name}.tsv"
    with open(path, "w", encoding="utf-8") as fh:
        for case_id, value in rows:
            fh.write(f"{case_id}\t{value!r}\n")
    print(f"wrote {path.relative_to(ROOT)} ({len(rows)} cases)")


def main():
    write("sentence_bleu", [
        (cid, oracles.ref_sentence_bleu(c, r))
        for cid, c, r in metric_cases.sentence_pair_cases("sbleu")
    ])
    write("corpus_bleu", [
        (cid, oracles.ref_corpus_bleu(cs, rs))
        for cid, cs, rs in metric_cases.corpus_cases()
    ])
    write("self_bleu", [
        (cid, oracles.ref_self_bleu(c, s))
        for cid, c, s in metric_cases.self_cases()
    ])
    write("ibleu", [
        (cid, oracles.ref_ibleu(c, r, s, alpha))
        for cid, alpha, c, r, s in metric_cases.ibleu_cases()
    ])
    for n in (1, 2):
        write(f"rouge{n}", [
            (cid, oracles.ref_rouge_n(c, r[0], n))
            for cid, c, r in metric_cases.sentence_pair_cases(f"rouge{n}")
        ])
    write("rougeL", [
        (cid, oracles.ref_rouge_l(c, r[0]))
        for cid, c, r in metric_cases.sentence_pair_cases("rougeL")
    ])
    write("bs_sb", [
        (cid, oracles.ref_bs_sb(sim, sb))
        for cid, sim, sb in metric_cases.bs_sb_cases()
    ])


if __name__ == "__main__":
    main()

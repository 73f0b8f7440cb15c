import { ModelFile, POS_FEATS } from "../src/model.js";
import { learnPieces } from "../src/tokenizer.js";
import { mulberry32 } from "../src/rng.js";

/** Untrained model over a tiny vocabulary, deterministic by seed. */
export function randomModel(seed = 1, merges = 12): ModelFile {
  const words = ["the", "cat", "dog", "sat", "on", "mat", "."];
  const table = new Map(words.map((w) => [w, 5]));
  const pieces = learnPieces(table, merges);
  const dim = 8;
  const hidden = 12;
  const rand = mulberry32(seed);
  const mat = (rows: number, cols: number): number[][] =>
    Array.from({ length: rows }, () =>
      Array.from({ length: cols }, () => 2 * rand() - 1));
  return {
    version: 1,
    dim,
    hidden,
    pieces,
    words,
    emb: mat(pieces.length, dim),
    w1: mat(hidden, 4 * dim + POS_FEATS),
    b1: new Array(hidden).fill(0),
    w2: mat(pieces.length, hidden),
    b2: new Array(pieces.length).fill(0),
  };
}

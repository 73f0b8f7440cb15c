/**
 * A miniature conditional subword LM served over the wire.
 *
 * Next-piece model: input is the embeddings of the two previous pieces,
 * a mean source embedding, and a remaining-content vector (source piece
 * embeddings summed, minus everything already produced), through one
 * tanh layer to a softmax over the piece inventory. The remaining
 * vector is what makes the model a reproducer: it shrinks toward zero
 * as the prefix covers the source, and it stays meaningful when the
 * prefix is steered off the source, because produced pieces are simply
 * subtracted. Word-level scores chain the pieces of each candidate and
 * close with a word-boundary factor (the mass of all pieces that may
 * start a new word), so a short word never scores as the mere prefix
 * of a longer one.
 *
 * The peer speaks whole words; every piece-level detail stays here.
 */

import { fnv1a, mulberry32 } from "./rng.js";
import { BOS_ID, EOS, EOS_ID, UNK_ID, Wordpieces } from "./tokenizer.js";

export interface ModelFile {
  version: number;
  dim: number;
  hidden: number;
  pieces: string[];
  words: string[];
  emb: number[][];
  w1: number[][];
  b1: number[];
  w2: number[][];
  b2: number[];
}

// fixed sinusoid features telling the model how deep into the piece
// stream it is; no gradient flows here
export const POS_FEATS = 4;

export function positionFeatures(index: number): number[] {
  const tau = Math.min(1, index / 16);
  return [
    Math.sin(Math.PI * tau),
    Math.cos(Math.PI * tau),
    Math.sin(2 * Math.PI * tau),
    Math.cos(2 * Math.PI * tau),
  ];
}

export interface WireDist {
  tokens: string[];
  logprobs: number[];
}

function flatten(rows: number[][], cols: number, what: string): Float64Array {
  const out = new Float64Array(rows.length * cols);
  rows.forEach((row, i) => {
    if (row.length !== cols) {
      throw new Error(`${what} row ${i} has ${row.length} entries, want ${cols}`);
    }
    out.set(row, i * cols);
  });
  return out;
}

function logSumExp(values: number[]): number {
  let max = -Infinity;
  for (const v of values) if (v > max) max = v;
  if (max === -Infinity) return -Infinity;
  let sum = 0;
  for (const v of values) sum += Math.exp(v - max);
  return max + Math.log(sum);
}

export class TinyCondLM {
  readonly tokenizer: Wordpieces;
  readonly words: string[];
  readonly dim: number;
  readonly hidden: number;
  private readonly pieceCount: number;
  private readonly emb: Float64Array;
  private readonly w1: Float64Array;
  private readonly b1: Float64Array;
  private readonly w2: Float64Array;
  private readonly b2: Float64Array;
  private readonly boundaryIds: number[];

  constructor(file: ModelFile) {
    if (file.version !== 1) throw new Error(`unsupported model version ${file.version}`);
    this.tokenizer = new Wordpieces(file.pieces);
    this.words = file.words;
    this.dim = file.dim;
    this.hidden = file.hidden;
    this.pieceCount = file.pieces.length;
    this.emb = flatten(file.emb, file.dim, "emb");
    this.w1 = flatten(file.w1, 4 * file.dim + POS_FEATS, "w1");
    this.b1 = Float64Array.from(file.b1);
    this.w2 = flatten(file.w2, file.hidden, "w2");
    this.b2 = Float64Array.from(file.b2);
    if (file.emb.length !== this.pieceCount || file.w2.length !== this.pieceCount) {
      throw new Error("emb and w2 must cover the piece inventory");
    }
    if (file.b1.length !== file.hidden || file.b2.length !== this.pieceCount) {
      throw new Error("bias length mismatch");
    }
    this.boundaryIds = [];
    for (let id = 0; id < this.pieceCount; id++) {
      if (this.tokenizer.wordInitial(id)) this.boundaryIds.push(id);
    }
  }

  sourceVector(sourceWords: string[]): Float64Array {
    const vec = new Float64Array(this.dim);
    let n = 0;
    for (const word of sourceWords) {
      for (const id of this.tokenizer.encode(word)) {
        const off = id * this.dim;
        for (let d = 0; d < this.dim; d++) vec[d] += this.emb[off + d];
        n++;
      }
    }
    if (n > 0) for (let d = 0; d < this.dim; d++) vec[d] /= n;
    return vec;
  }

  /**
   * Summed source piece embeddings minus the pieces the prefix already
   * spent. Sentinels never count. Entries can go negative when the
   * prefix departs from the source; that is the signal, not an error.
   */
  remainingVector(sourceWords: string[], prefixWords: string[]): Float64Array {
    const vec = new Float64Array(this.dim);
    const add = (words: string[], sign: number): void => {
      for (const word of words) {
        for (const id of this.tokenizer.encode(word)) {
          if (id === BOS_ID || id === EOS_ID) continue;
          const off = id * this.dim;
          for (let d = 0; d < this.dim; d++) vec[d] += sign * this.emb[off + d];
        }
      }
    };
    add(sourceWords, 1);
    add(prefixWords, -1);
    return vec;
  }

  /** Log-probabilities over the piece inventory for one context. */
  pieceDist(prev2: number, prev1: number, srcVec: Float64Array,
            remVec: Float64Array, position: number): Float64Array {
    const { dim, hidden } = this;
    const width = 4 * dim + POS_FEATS;
    const x = new Float64Array(width);
    x.set(this.emb.subarray(prev2 * dim, (prev2 + 1) * dim), 0);
    x.set(this.emb.subarray(prev1 * dim, (prev1 + 1) * dim), dim);
    x.set(srcVec, 2 * dim);
    x.set(remVec, 3 * dim);
    x.set(positionFeatures(position), 4 * dim);

    const z = new Float64Array(hidden);
    for (let j = 0; j < hidden; j++) {
      let acc = this.b1[j];
      const off = j * width;
      for (let i = 0; i < width; i++) acc += this.w1[off + i] * x[i];
      z[j] = Math.tanh(acc);
    }

    const logits = new Float64Array(this.pieceCount);
    let max = -Infinity;
    for (let p = 0; p < this.pieceCount; p++) {
      let acc = this.b2[p];
      const off = p * hidden;
      for (let j = 0; j < hidden; j++) acc += this.w2[off + j] * z[j];
      logits[p] = acc;
      if (acc > max) max = acc;
    }
    let sum = 0;
    for (let p = 0; p < this.pieceCount; p++) sum += Math.exp(logits[p] - max);
    const logZ = max + Math.log(sum);
    for (let p = 0; p < this.pieceCount; p++) logits[p] -= logZ;
    return logits;
  }

  /**
   * Sparse next-word distribution given whole-word source and prefix.
   * Candidates are the advertised vocabulary, any extra source words
   * (the copy path), and sentence end; ties keep candidate order, which
   * matches the peer's id order.
   */
  nextWord(sourceWords: string[], prefixWords: string[], topK: number): WireDist {
    const srcVec = this.sourceVector(sourceWords);
    const rem0 = this.remainingVector(sourceWords, prefixWords);
    const stream: number[] = [];
    for (const word of prefixWords) stream.push(...this.tokenizer.encode(word));

    const prev2 = stream.length >= 2 ? stream[stream.length - 2] : BOS_ID;
    const prev1 = stream.length >= 1 ? stream[stream.length - 1] : BOS_ID;
    const pos0 = stream.length;
    // every candidate shares the first step; past it each chain carries
    // its own remaining vector, so there is nothing else worth caching
    const d0 = this.pieceDist(prev2, prev1, srcVec, rem0, pos0);

    const boundary = (a: number, b: number, rem: Float64Array, pos: number): number => {
      const d = this.pieceDist(a, b, srcVec, rem, pos);
      return logSumExp(this.boundaryIds.map((id) => d[id]));
    };

    const candidates: string[] = [EOS, ...this.words];
    const seen = new Set(candidates);
    for (const word of sourceWords) {
      if (!seen.has(word)) {
        seen.add(word);
        candidates.push(word);
      }
    }

    const scored: { surface: string; lp: number; order: number }[] = [];
    candidates.forEach((surface, order) => {
      if (surface === EOS) {
        scored.push({ surface, lp: d0[EOS_ID], order });
        return;
      }
      const pieces = this.tokenizer.encode(surface);
      const rem = Float64Array.from(rem0);
      let a = prev2;
      let b = prev1;
      let pos = pos0;
      let lp = 0;
      for (const id of pieces) {
        lp += (pos === pos0 ? d0 : this.pieceDist(a, b, srcVec, rem, pos))[id];
        const off = id * this.dim;
        for (let d = 0; d < this.dim; d++) rem[d] -= this.emb[off + d];
        a = b;
        b = id;
        pos++;
      }
      lp += boundary(a, b, rem, pos);
      scored.push({ surface, lp, order });
    });

    scored.sort((x, y) => (y.lp - x.lp) || (x.order - y.order));
    const top = scored.slice(0, topK);
    return { tokens: top.map((s) => s.surface), logprobs: top.map((s) => s.lp) };
  }

  /**
   * Fixed-dimension vector for an arbitrary surface key: mean piece
   * embedding when the key is coverable, a seeded hash vector otherwise.
   * Never zero; the peer normalizes and rejects zero-norm vectors.
   */
  embed(key: string): number[] {
    const ids = this.tokenizer.encode(key);
    if (!(ids.length === 1 && ids[0] === UNK_ID) && ids.length > 0) {
      const vec = new Float64Array(this.dim);
      for (const id of ids) {
        const off = id * this.dim;
        for (let d = 0; d < this.dim; d++) vec[d] += this.emb[off + d];
      }
      let norm = 0;
      for (let d = 0; d < this.dim; d++) {
        vec[d] /= ids.length;
        norm += vec[d] * vec[d];
      }
      if (norm > 1e-18) return Array.from(vec);
    }
    const rand = mulberry32(fnv1a(key));
    const out = new Array<number>(this.dim);
    let norm = 0;
    for (let d = 0; d < this.dim; d++) {
      out[d] = 2 * rand() - 1;
      norm += out[d] * out[d];
    }
    if (norm < 1e-18) out[0] = 1;
    return out;
  }
}

export function loadModelFile(json: string): ModelFile {
  const raw = JSON.parse(json) as ModelFile;
  if (typeof raw !== "object" || raw === null) throw new Error("model file is not an object");
  return raw;
}

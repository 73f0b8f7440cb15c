/**
 * Train the miniature conditional LM and write its weights file.
 *
 *   node dist/train.js --corpus data/corpus.txt --out models/tiny.json
 *
 * Next-piece cross-entropy over the corpus, conditioned on the mean
 * source embedding of the sentence being reproduced plus the
 * remaining-content sum (source pieces not yet produced). A fraction
 * of examples drops both conditioning vectors so the model also learns
 * the unconditional slot statistics it falls back on when decoding is
 * steered away from a copy. Everything is seeded; rerunning reproduces
 * the same file.
 */

import { readFileSync, mkdirSync, writeFileSync } from "node:fs";
import { dirname, resolve } from "node:path";
import { parseArgs } from "node:util";
import { fileURLToPath } from "node:url";

import { ModelFile, POS_FEATS, positionFeatures, TinyCondLM } from "./model.js";
import { BOS, BOS_ID, EOS, EOS_ID, learnPieces, Wordpieces } from "./tokenizer.js";
import { mulberry32 } from "./rng.js";

const HERE = dirname(fileURLToPath(import.meta.url));

interface Example {
  srcPieces: number[];
  prod: number[];
  prev2: number;
  prev1: number;
  position: number;
  target: number;
}

function readSentences(path: string): string[][] {
  const out: string[][] = [];
  for (const line of readFileSync(path, "utf-8").split("\n")) {
    const words = line.trim().split(/\s+/).filter((w) => w.length > 0);
    if (words.length > 0) out.push(words);
  }
  return out;
}

function matrix(rows: number, cols: number, scale: number, rand: () => number): number[][] {
  return Array.from({ length: rows }, () =>
    Array.from({ length: cols }, () => scale * (2 * rand() - 1)));
}

function main(): void {
  const args = parseArgs({
    options: {
      corpus: { type: "string", default: resolve(HERE, "..", "data", "corpus.txt") },
      out: { type: "string", default: resolve(HERE, "..", "models", "tiny.json") },
      merges: { type: "string", default: "140" },
      dim: { type: "string", default: "32" },
      hidden: { type: "string", default: "64" },
      epochs: { type: "string", default: "1600" },
      lr: { type: "string", default: "0.08" },
      decay: { type: "string", default: "0.997" },
      seed: { type: "string", default: "74120" },
    },
  }).values;

  const dim = Number(args.dim);
  const hidden = Number(args.hidden);
  const epochs = Number(args.epochs);
  const sentences = readSentences(args.corpus as string);

  const words: string[] = [];
  const wordCounts = new Map<string, number>();
  for (const sent of sentences) {
    for (const w of sent) {
      if (!wordCounts.has(w)) words.push(w);
      wordCounts.set(w, (wordCounts.get(w) ?? 0) + 1);
    }
  }
  const pieces = learnPieces(wordCounts, Number(args.merges));
  const tok = new Wordpieces(pieces);
  const P = pieces.length;
  const multi = words.filter((w) => tok.encode(w).length > 1);
  console.log(`${sentences.length} sentences, ${words.length} words, ` +
    `${P} pieces (${multi.length} words split: ${multi.join(" ")})`);

  const examples: Example[] = [];
  for (const sent of sentences) {
    const srcPieces = sent.flatMap((w) => tok.encode(w));
    const stream = [BOS_ID, ...srcPieces, EOS_ID];
    for (let t = 1; t < stream.length; t++) {
      examples.push({
        srcPieces,
        prod: stream.slice(1, t),
        prev2: t >= 2 ? stream[t - 2] : BOS_ID,
        prev1: stream[t - 1],
        position: t,
        target: stream[t],
      });
    }
  }

  const width = 4 * dim + POS_FEATS;
  const rand = mulberry32(Number(args.seed));
  const emb = matrix(P, dim, 0.5 / Math.sqrt(dim), rand);
  const w1 = matrix(hidden, width, 1 / Math.sqrt(width), rand);
  const b1 = new Array<number>(hidden).fill(0);
  const w2 = matrix(P, hidden, 1 / Math.sqrt(hidden), rand);
  const b2 = new Array<number>(P).fill(0);

  const srcDrop = 0.1;
  let lr = Number(args.lr);
  const decay = Number(args.decay);
  const order = examples.map((_, i) => i);
  for (let epoch = 0; epoch < epochs; epoch++) {
    // Fisher-Yates on the shared rng keeps the whole run one stream
    for (let i = order.length - 1; i > 0; i--) {
      const j = Math.floor(rand() * (i + 1));
      [order[i], order[j]] = [order[j], order[i]];
    }
    let loss = 0;
    for (const idx of order) {
      const ex = examples[idx];
      const dropped = rand() < srcDrop;

      const src = new Array<number>(dim).fill(0);
      const rem = new Array<number>(dim).fill(0);
      if (!dropped) {
        for (const id of ex.srcPieces) {
          for (let d = 0; d < dim; d++) {
            src[d] += emb[id][d];
            rem[d] += emb[id][d];
          }
        }
        for (let d = 0; d < dim; d++) src[d] /= ex.srcPieces.length;
        for (const id of ex.prod) {
          for (let d = 0; d < dim; d++) rem[d] -= emb[id][d];
        }
      }
      const x = [...emb[ex.prev2], ...emb[ex.prev1], ...src, ...rem, ...positionFeatures(ex.position)];

      const z = new Array<number>(hidden);
      for (let j = 0; j < hidden; j++) {
        let acc = b1[j];
        for (let i = 0; i < width; i++) acc += w1[j][i] * x[i];
        z[j] = Math.tanh(acc);
      }
      const logits = new Array<number>(P);
      let max = -Infinity;
      for (let p = 0; p < P; p++) {
        let acc = b2[p];
        for (let j = 0; j < hidden; j++) acc += w2[p][j] * z[j];
        logits[p] = acc;
        if (acc > max) max = acc;
      }
      let sum = 0;
      for (let p = 0; p < P; p++) sum += Math.exp(logits[p] - max);
      const logZ = max + Math.log(sum);
      loss -= logits[ex.target] - logZ;

      // delta on logits, then backprop through w2, tanh, w1, inputs
      const du = new Array<number>(P);
      for (let p = 0; p < P; p++) du[p] = Math.exp(logits[p] - logZ);
      du[ex.target] -= 1;

      const dz = new Array<number>(hidden).fill(0);
      for (let p = 0; p < P; p++) {
        const g = du[p];
        if (g === 0) continue;
        for (let j = 0; j < hidden; j++) dz[j] += w2[p][j] * g;
        for (let j = 0; j < hidden; j++) w2[p][j] -= lr * g * z[j];
        b2[p] -= lr * g;
      }
      const da = new Array<number>(hidden);
      for (let j = 0; j < hidden; j++) da[j] = dz[j] * (1 - z[j] * z[j]);

      // position features are fixed functions, so dx past 4*dim is unused
      const dx = new Array<number>(4 * dim).fill(0);
      for (let j = 0; j < hidden; j++) {
        const g = da[j];
        for (let i = 0; i < 4 * dim; i++) dx[i] += w1[j][i] * g;
        for (let i = 0; i < width; i++) w1[j][i] -= lr * g * x[i];
        b1[j] -= lr * g;
      }
      for (let d = 0; d < dim; d++) {
        emb[ex.prev2][d] -= lr * dx[d];
        emb[ex.prev1][d] -= lr * dx[dim + d];
      }
      if (!dropped) {
        const n = ex.srcPieces.length;
        for (const id of ex.srcPieces) {
          // source pieces feed both the mean and the remaining sum
          for (let d = 0; d < dim; d++) {
            emb[id][d] -= lr * (dx[2 * dim + d] / n + dx[3 * dim + d]);
          }
        }
        for (const id of ex.prod) {
          for (let d = 0; d < dim; d++) emb[id][d] += lr * dx[3 * dim + d];
        }
      }
    }
    lr *= decay;
    if ((epoch + 1) % 50 === 0) {
      console.log(`epoch ${epoch + 1}  loss/example ${(loss / examples.length).toFixed(4)}  lr ${lr.toFixed(4)}`);
    }
  }

  const file: ModelFile = {
    version: 1, dim, hidden, pieces, words,
    emb, w1, b1, w2, b2,
  };

  // the served scorer must reproduce the training sentences greedily,
  // otherwise the engine has nothing meaningful to block
  const model = new TinyCondLM(file);
  let exact = 0;
  for (const sent of sentences) {
    const decoded: string[] = [];
    const prefix = [BOS];
    for (let step = 0; step < 2 * sent.length + 2; step++) {
      const dist = model.nextWord(sent, prefix, 8);
      const top = dist.tokens[0];
      if (top === EOS) break;
      decoded.push(top);
      prefix.push(top);
    }
    if (decoded.join(" ") === sent.join(" ")) exact++;
  }
  console.log(`greedy copy check: ${exact}/${sentences.length} sentences reproduced`);

  mkdirSync(dirname(args.out as string), { recursive: true });
  writeFileSync(args.out as string, JSON.stringify(file));
  console.log(`wrote ${args.out}`);
}

main();

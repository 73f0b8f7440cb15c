/**
 * Record dispatch for the newline-JSON protocol, transport-agnostic.
 *
 * One request record in, one response record out. Malformed input gets
 * an error record (id echoed when one was parseable, 0 otherwise) and
 * the connection is expected to stay open; only transport failure ends
 * a session.
 */

import { encodeLine, safeParse } from "./jsonl.js";
import { TinyCondLM } from "./model.js";

export const PROTOCOL_VERSION = 1;
export const DEFAULT_TOP_K = 64;

type Rec = Record<string, unknown>;

class RequestError extends Error {
  readonly id: number;

  constructor(message: string, id: number) {
    super(message);
    this.id = id;
  }
}

function recordId(rec: Rec): number {
  const id = rec.id;
  return typeof id === "number" && Number.isInteger(id) && id >= 0 ? id : 0;
}

function requireId(rec: Rec): number {
  const id = rec.id;
  if (typeof id !== "number" || !Number.isInteger(id) || id < 0) {
    throw new RequestError(`bad id ${JSON.stringify(id)}`, 0);
  }
  return id;
}

function requireStrings(rec: Rec, field: string, id: number): string[] {
  const value = rec[field];
  if (!Array.isArray(value) || !value.every((s) => typeof s === "string")) {
    throw new RequestError(`${field} must be a list of strings`, id);
  }
  return value as string[];
}

export class BridgeEndpoint {
  private readonly model: TinyCondLM;
  private readonly topK: number;

  constructor(model: TinyCondLM, topK: number = DEFAULT_TOP_K) {
    if (topK < 1) throw new Error(`top_k must be >= 1, got ${topK}`);
    this.model = model;
    this.topK = topK;
  }

  answerRecord(rec: Rec): Rec {
    const kind = rec.type;
    if (kind === "hello") {
      if (rec.version !== PROTOCOL_VERSION) {
        throw new RequestError(`unsupported version ${JSON.stringify(rec.version)}`, recordId(rec));
      }
      return {
        type: "ack",
        version: PROTOCOL_VERSION,
        top_k: this.topK,
        vocab: this.model.words,
      };
    }
    if (kind === "next") {
      const id = requireId(rec);
      const source = requireStrings(rec, "source", id);
      const prefix = requireStrings(rec, "prefix", id);
      const dist = this.model.nextWord(source, prefix, this.topK);
      return { type: "dist", id, tokens: dist.tokens, logprobs: dist.logprobs };
    }
    if (kind === "embed") {
      const id = requireId(rec);
      const tokens = requireStrings(rec, "tokens", id);
      const vectors = tokens.map((t) => this.model.embed(t));
      return { type: "vecs", id, dim: this.model.dim, vectors };
    }
    throw new RequestError(`unknown record type ${JSON.stringify(kind)}`, recordId(rec));
  }

  /** One request line to one response line, errors included. */
  answerLine(line: string): string {
    const parsed = safeParse(line);
    if (!parsed.ok) {
      return encodeLine({ type: "error", id: 0, message: `malformed record: ${parsed.error.message}` });
    }
    if (typeof parsed.value !== "object" || parsed.value === null || Array.isArray(parsed.value)) {
      return encodeLine({ type: "error", id: 0, message: "record is not an object" });
    }
    try {
      return encodeLine(this.answerRecord(parsed.value as Rec));
    } catch (error) {
      if (error instanceof RequestError) {
        return encodeLine({ type: "error", id: error.id, message: error.message });
      }
      const message = error instanceof Error ? error.message : String(error);
      return encodeLine({ type: "error", id: 0, message: `internal: ${message}` });
    }
  }
}

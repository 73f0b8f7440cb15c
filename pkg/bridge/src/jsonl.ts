/** Newline-delimited JSON framing over a byte stream. */

export function encodeLine(value: unknown): string {
  return `${JSON.stringify(value)}\n`;
}

/**
 * Reassembles complete lines from arbitrary chunk boundaries. Lines are
 * returned without their terminator; a trailing carriage return is
 * stripped so CRLF peers work too.
 */
export class LineBuffer {
  private rest = "";

  push(chunk: Buffer | string): string[] {
    this.rest += chunk.toString();
    const lines: string[] = [];
    for (;;) {
      const idx = this.rest.indexOf("\n");
      if (idx < 0) break;
      let line = this.rest.slice(0, idx);
      this.rest = this.rest.slice(idx + 1);
      if (line.endsWith("\r")) line = line.slice(0, -1);
      lines.push(line);
    }
    return lines;
  }

  /** Unterminated tail still sitting in the buffer. */
  pending(): string {
    return this.rest;
  }
}

export function safeParse(line: string): { ok: true; value: unknown } | { ok: false; error: Error } {
  try {
    return { ok: true, value: JSON.parse(line) as unknown };
  } catch (error) {
    return { ok: false, error: error as Error };
  }
}

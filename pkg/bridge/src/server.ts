/**
 * Serve the model over TCP or stdio.
 *
 *   node dist/server.js --model models/tiny.json --port 0
 *   node dist/server.js --stdio
 *
 * TCP announces "serving on host:port" on stderr once bound (port 0
 * picks a free port). Requests are answered one at a time per
 * connection; concurrent connections share the model through the
 * single-threaded event loop, so access is serialized by construction.
 */

import { readFileSync } from "node:fs";
import net from "node:net";
import { dirname, resolve } from "node:path";
import { parseArgs } from "node:util";
import { fileURLToPath } from "node:url";

import { encodeLine, LineBuffer } from "./jsonl.js";
import { loadModelFile, TinyCondLM } from "./model.js";
import { BridgeEndpoint, DEFAULT_TOP_K } from "./protocol.js";

const HERE = dirname(fileURLToPath(import.meta.url));
const DEFAULT_MODEL = resolve(HERE, "..", "models", "tiny.json");

function fail(message: string): never {
  // error record then nonzero exit, same shape the protocol uses
  process.stdout.write(encodeLine({ type: "error", id: 0, message }));
  process.exit(1);
}

export function main(argv: string[]): void {
  let args;
  try {
    args = parseArgs({
      args: argv,
      options: {
        model: { type: "string", default: DEFAULT_MODEL },
        "top-k": { type: "string", default: String(DEFAULT_TOP_K) },
        port: { type: "string" },
        host: { type: "string", default: "127.0.0.1" },
        stdio: { type: "boolean", default: false },
      },
    }).values;
  } catch (error) {
    fail(error instanceof Error ? error.message : String(error));
  }

  const topK = Number(args["top-k"]);
  if (!Number.isInteger(topK) || topK < 1) fail(`bad --top-k ${args["top-k"]}`);
  if (args.stdio === (args.port !== undefined)) fail("pick exactly one of --port or --stdio");

  let model: TinyCondLM;
  try {
    model = new TinyCondLM(loadModelFile(readFileSync(args.model as string, "utf-8")));
  } catch (error) {
    fail(`model load failure: ${error instanceof Error ? error.message : String(error)}`);
  }
  const endpoint = new BridgeEndpoint(model, topK);

  if (args.stdio) {
    const buf = new LineBuffer();
    process.stdin.on("data", (chunk) => {
      for (const line of buf.push(chunk)) {
        process.stdout.write(endpoint.answerLine(line));
      }
    });
    process.stdin.on("end", () => process.exit(0));
    return;
  }

  const port = Number(args.port);
  if (!Number.isInteger(port) || port < 0 || port > 65535) fail(`bad --port ${args.port}`);
  const server = net.createServer((socket) => {
    const buf = new LineBuffer();
    socket.on("data", (chunk) => {
      for (const line of buf.push(chunk)) {
        socket.write(endpoint.answerLine(line));
      }
    });
    socket.on("error", () => socket.destroy());
  });
  server.listen(port, args.host as string, () => {
    const addr = server.address() as net.AddressInfo;
    process.stderr.write(`serving on ${addr.address}:${addr.port}\n`);
  });
}

if (process.argv[1] && resolve(process.argv[1]) === fileURLToPath(import.meta.url)) {
  main(process.argv.slice(2));
}

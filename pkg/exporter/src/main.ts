#!/usr/bin/env node
// Usage: ndv-embed-exporter --in texts.txt --out store.jsonl
//          [--model Xenova/sentence-t5-large | hash:<dim>]
//          [--batch 32] [--max-tokens N]

import { makeEncoder } from "./encoders.js";
import { exportEmbeddings } from "./exporter.js";

const DEFAULT_MODEL = "Xenova/sentence-t5-large";

function parseArgs(argv: string[]): Map<string, string> {
  const out = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i];
    const value = argv[i + 1];
    if (!flag.startsWith("--") || value === undefined) {
      throw new Error(`malformed arguments near ${flag}`);
    }
    out.set(flag.slice(2), value);
  }
  return out;
}

async function main(): Promise<number> {
  let args: Map<string, string>;
  try {
    args = parseArgs(process.argv.slice(2));
  } catch (err) {
    console.error(String(err));
    console.error(
      "usage: ndv-embed-exporter --in texts.txt --out store.jsonl " +
        "[--model TAG|hash:DIM] [--batch N] [--max-tokens N]",
    );
    return 2;
  }
  const inPath = args.get("in");
  const outPath = args.get("out");
  if (!inPath || !outPath) {
    console.error("--in and --out are required");
    return 2;
  }
  const model = args.get("model") ?? DEFAULT_MODEL;
  const batchSize = Number(args.get("batch") ?? "32");
  const maxTokensRaw = args.get("max-tokens");

  try {
    const result = await exportEmbeddings({
      inPath,
      outPath,
      encoder: makeEncoder(model),
      batchSize,
      maxTokens: maxTokensRaw === undefined ? undefined : Number(maxTokensRaw),
    });
    console.log(
      `wrote ${result.unique} embedding(s), dim ${result.dim}, ` +
        `${result.truncated} truncated, model ${model} -> ${outPath}`,
    );
    return 0;
  } catch (err) {
    console.error(`export failed: ${err instanceof Error ? err.message : err}`);
    return 1;
  }
}

main().then((code) => {
  process.exitCode = code;
});

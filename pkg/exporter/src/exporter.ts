import { readFile, rename, rm, writeFile } from "node:fs/promises";
import { randomUUID } from "node:crypto";

import { Encoder, tokenize } from "./encoders.js";
import { renderStore, StoreRecord, EMB_FORMAT } from "./format.js";

export interface ExportJob {
  inPath: string;
  outPath: string;
  encoder: Encoder;
  batchSize: number;
  maxTokens?: number;
}

export interface ExportResult {
  unique: number;
  truncated: number;
  dim: number;
}

/**
 * Read one serialized column text per line, embed each unique line, and
 * write an ndv-emb-v1 file. Keys are the input lines verbatim; texts
 * longer than maxTokens are truncated for encoding only, with the count
 * recorded in the header metadata. The output file appears atomically
 * (write to a temp name, then rename) so a failed run leaves nothing
 * behind.
 */
export async function exportEmbeddings(job: ExportJob): Promise<ExportResult> {
  const raw = await readFile(job.inPath, "utf-8");
  const lines = raw.split("\n").filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new Error(`no input texts in ${job.inPath}`);
  }
  const unique = [...new Set(lines)].sort();

  let truncated = 0;
  const encodeInputs = unique.map((text) => {
    if (job.maxTokens === undefined) return text;
    const tokens = tokenize(text);
    if (tokens.length <= job.maxTokens) return text;
    truncated += 1;
    return tokens.slice(0, job.maxTokens).join(" ");
  });

  const vectors: number[][] = [];
  for (let i = 0; i < encodeInputs.length; i += job.batchSize) {
    const batch = encodeInputs.slice(i, i + job.batchSize);
    vectors.push(...(await job.encoder.encode(batch)));
  }
  const dim = job.encoder.dim;
  const records: StoreRecord[] = unique.map((key, i) => ({
    key,
    dim,
    vec: vectors[i],
  }));

  const meta: Record<string, unknown> = {};
  if (job.maxTokens !== undefined) {
    meta.max_tokens = job.maxTokens;
    meta.truncated = truncated;
  }
  const content = renderStore(
    {
      format: EMB_FORMAT,
      dim,
      provider: job.encoder.tag,
      ...(Object.keys(meta).length ? { meta } : {}),
    },
    records,
  );

  const tmp = `${job.outPath}.tmp-${randomUUID()}`;
  try {
    await writeFile(tmp, content, "utf-8");
    await rename(tmp, job.outPath);
  } catch (err) {
    await rm(tmp, { force: true });
    throw err;
  }
  return { unique: unique.length, truncated, dim };
}

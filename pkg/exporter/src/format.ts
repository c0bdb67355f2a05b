// ndv-emb-v1: JSON-lines embedding store. First line is a header carrying
// the dimension and provider tag; each following line is one key/vector
// record. Keys are the serialized column texts, byte-exact.

export const EMB_FORMAT = "ndv-emb-v1";

export interface StoreHeader {
  format: string;
  dim: number;
  provider: string;
  meta?: Record<string, unknown>;
}

export interface StoreRecord {
  key: string;
  dim: number;
  vec: number[];
}

export function renderStore(
  header: StoreHeader,
  records: StoreRecord[],
): string {
  const lines = [JSON.stringify(header)];
  for (const rec of records) {
    if (rec.vec.length !== header.dim) {
      throw new Error(
        `vector for ${JSON.stringify(rec.key)} has dim ${rec.vec.length}, header says ${header.dim}`,
      );
    }
    lines.push(JSON.stringify(rec));
  }
  return lines.join("\n") + "\n";
}

export function parseStore(content: string): {
  header: StoreHeader;
  records: StoreRecord[];
} {
  const lines = content.split("\n").filter((l) => l.trim().length > 0);
  if (lines.length === 0) throw new Error("empty store file");
  const header = JSON.parse(lines[0]) as StoreHeader;
  if (header.format !== EMB_FORMAT) {
    throw new Error(`not an ${EMB_FORMAT} file (format=${header.format})`);
  }
  const records = lines.slice(1).map((l) => JSON.parse(l) as StoreRecord);
  for (const rec of records) {
    if (rec.dim !== header.dim || rec.vec.length !== header.dim) {
      throw new Error(`dimension mismatch for key ${JSON.stringify(rec.key)}`);
    }
  }
  return { header, records };
}

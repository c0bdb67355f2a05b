import { createHash } from "node:crypto";

export interface Encoder {
  readonly tag: string;
  readonly dim: number;
  encode(texts: string[]): Promise<number[][]>;
}

const TOKEN_RE = /[0-9a-zA-Z]+/g;

export function tokenize(text: string): string[] {
  return (text.match(TOKEN_RE) ?? []).map((t) => t.toLowerCase());
}

/**
 * Deterministic token-hash encoder: each token hashes to a pseudo-random
 * unit vector, a text embeds as the normalized mean over its token
 * occurrences. No model runtime, stable across runs and machines; texts
 * sharing tokens land closer in cosine than unrelated ones.
 */
export class HashEncoder implements Encoder {
  readonly tag: string;
  private cache = new Map<string, Float64Array>();

  constructor(readonly dim: number) {
    if (!Number.isInteger(dim) || dim < 2) {
      throw new Error(`hash encoder dim must be an integer >= 2, got ${dim}`);
    }
    this.tag = `hash-v1:${dim}`;
  }

  private tokenVector(token: string): Float64Array {
    const hit = this.cache.get(token);
    if (hit) return hit;
    // hash-derived uniforms -> Box-Muller normals -> unit vector
    const gauss: number[] = [];
    let counter = 0;
    while (gauss.length < this.dim) {
      const digest = createHash("sha256")
        .update(token)
        .update(":")
        .update(String(counter++))
        .digest();
      for (let off = 0; off + 16 <= digest.length && gauss.length < this.dim; off += 16) {
        const u1 = (Number(digest.readBigUInt64BE(off)) + 1) / 2 ** 64;
        const u2 = (Number(digest.readBigUInt64BE(off + 8)) + 1) / 2 ** 64;
        const r = Math.sqrt(-2 * Math.log(u1));
        gauss.push(r * Math.cos(2 * Math.PI * u2));
        if (gauss.length < this.dim) gauss.push(r * Math.sin(2 * Math.PI * u2));
      }
    }
    const vec = Float64Array.from(gauss);
    let norm = 0;
    for (const x of vec) norm += x * x;
    norm = Math.sqrt(norm);
    for (let i = 0; i < vec.length; i++) vec[i] /= norm;
    this.cache.set(token, vec);
    return vec;
  }

  encodeOne(tokens: string[]): number[] {
    const out = new Float64Array(this.dim);
    if (tokens.length === 0) {
      out[0] = 1.0;
      return Array.from(out);
    }
    for (const token of tokens) {
      const tv = this.tokenVector(token);
      for (let i = 0; i < this.dim; i++) out[i] += tv[i];
    }
    let norm = 0;
    for (const x of out) norm += x * x;
    norm = Math.sqrt(norm);
    if (norm < 1e-12) {
      out.fill(0);
      out[0] = 1.0;
      return Array.from(out);
    }
    for (let i = 0; i < this.dim; i++) out[i] /= norm;
    return Array.from(out);
  }

  async encode(texts: string[]): Promise<number[][]> {
    return texts.map((t) => this.encodeOne(tokenize(t)));
  }
}

/**
 * Frozen pre-trained sentence encoder via transformers.js (feature
 * extraction with mean pooling + normalization). Loaded lazily; model
 * weights must be available locally or downloadable.
 */
export class TransformerEncoder implements Encoder {
  readonly tag: string;
  dim = 0;
  private extractor: any = null;

  constructor(readonly model: string) {
    this.tag = model;
  }

  private async load(): Promise<any> {
    if (this.extractor) return this.extractor;
    let pipeline: any;
    // non-literal specifier: the runtime is optional and may be absent
    const moduleName = "@xenova/transformers";
    try {
      ({ pipeline } = await import(moduleName));
    } catch (err) {
      throw new Error(
        `encoder runtime unavailable (install ${moduleName}): ${err}`,
      );
    }
    this.extractor = await pipeline("feature-extraction", this.model);
    return this.extractor;
  }

  async encode(texts: string[]): Promise<number[][]> {
    const extractor = await this.load();
    const out: number[][] = [];
    for (const text of texts) {
      const result = await extractor(text, { pooling: "mean", normalize: true });
      const vec = Array.from(result.data as Float32Array).map(Number);
      if (this.dim === 0) this.dim = vec.length;
      if (vec.length !== this.dim) {
        throw new Error(
          `encoder returned dim ${vec.length}, expected ${this.dim}`,
        );
      }
      out.push(vec);
    }
    return out;
  }
}

/** `hash:<dim>` selects the built-in deterministic encoder; anything else
 * is treated as a transformers.js model tag. */
export function makeEncoder(model: string): Encoder {
  const hashMatch = /^hash:(\d+)$/.exec(model);
  if (hashMatch) return new HashEncoder(Number(hashMatch[1]));
  return new TransformerEncoder(model);
}

/**
 * Text encoder: character n-grams hashed into a fixed-dim vector.
 *
 * The encoder is identified by a base-model string like "hash-ngram3-512"
 * (n-gram size 3, 512 dimensions). The id is stored in the model artifact so
 * prediction always re-creates the exact featurizer that training used.
 */

export interface FeaturizerConfig {
  ngram: number;
  dim: number;
}

export const DEFAULT_BASE_MODEL = "hash-ngram3-512";

const BASE_MODEL_RE = /^hash-ngram(\d+)-(\d+)$/;

export function parseBaseModel(id: string): FeaturizerConfig {
  const match = BASE_MODEL_RE.exec(id);
  if (!match) {
    throw new Error(`unknown base model ${JSON.stringify(id)}; expected e.g. ${DEFAULT_BASE_MODEL}`);
  }
  const ngram = parseInt(match[1], 10);
  const dim = parseInt(match[2], 10);
  if (ngram < 1 || dim < 8) {
    throw new Error(`invalid base model parameters in ${JSON.stringify(id)}`);
  }
  return { ngram, dim };
}

/** FNV-1a 32-bit over a string slice. */
function fnv1a(text: string, start: number, end: number): number {
  let hash = 0x811c9dc5;
  for (let i = start; i < end; i++) {
    hash ^= text.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193);
  }
  return hash >>> 0;
}

export function featurize(text: string, cfg: FeaturizerConfig): Float64Array {
  const vec = new Float64Array(cfg.dim);
  const padded = ` ${text.toLowerCase()} `;
  const n = cfg.ngram;
  const source = padded.length >= n ? padded : padded.padEnd(n);
  for (let i = 0; i + n <= source.length; i++) {
    const hash = fnv1a(source, i, i + n);
    const index = hash % cfg.dim;
    const sign = (hash >>> 16) & 1 ? 1 : -1;
    vec[index] += sign;
  }
  return l2Normalize(vec);
}

export function l2Normalize(vec: Float64Array): Float64Array {
  let norm = 0;
  for (let i = 0; i < vec.length; i++) norm += vec[i] * vec[i];
  norm = Math.sqrt(norm);
  if (norm > 0) {
    for (let i = 0; i < vec.length; i++) vec[i] /= norm;
  }
  return vec;
}

export function dot(a: Float64Array | number[], b: Float64Array | number[]): number {
  let sum = 0;
  for (let i = 0; i < a.length; i++) sum += (a as number[])[i] * (b as number[])[i];
  return sum;
}

export function cosine(a: Float64Array, b: Float64Array): number {
  const na = Math.sqrt(dot(a, a));
  const nb = Math.sqrt(dot(b, b));
  if (na === 0 || nb === 0) return 0;
  return dot(a, b) / (na * nb);
}

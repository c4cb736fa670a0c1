/**
 * File IO against the topic-model export schemas.
 *
 * Training data is JSONL rows {doc_id, text, label}; labels.json is a JSON
 * array enumerating the classes. Prediction input is corpus JSONL with
 * {id|doc_id, text}.
 */

import * as fs from "fs";
import * as path from "path";
import { mulberry32, shuffleInPlace } from "./rng";

export interface Example {
  docId: string;
  text: string;
  label?: string;
}

export function readJsonlExamples(filePath: string, requireLabel: boolean): Example[] {
  const raw = fs.readFileSync(filePath, "utf-8");
  const rows: Example[] = [];
  raw.split("\n").forEach((line, idx) => {
    const trimmed = line.trim();
    if (!trimmed) return;
    let rec: Record<string, unknown>;
    try {
      rec = JSON.parse(trimmed);
    } catch (err) {
      throw new Error(`${filePath}:${idx + 1}: invalid JSON`);
    }
    const docId = (rec.doc_id ?? rec.id) as string | undefined;
    if (!docId) {
      throw new Error(`${filePath}:${idx + 1}: row is missing doc_id`);
    }
    const text = rec.text as string | undefined;
    if (typeof text !== "string" || text.length === 0) {
      throw new Error(`${filePath}:${idx + 1}: document ${JSON.stringify(docId)} is missing text`);
    }
    const label = rec.label as string | undefined;
    if (requireLabel && (typeof label !== "string" || label.length === 0)) {
      throw new Error(`${filePath}:${idx + 1}: document ${JSON.stringify(docId)} is missing label`);
    }
    rows.push({ docId, text, label });
  });
  return rows;
}

export function readLabels(filePath: string): string[] {
  const payload = JSON.parse(fs.readFileSync(filePath, "utf-8"));
  if (!Array.isArray(payload) || payload.some((x) => typeof x !== "string")) {
    throw new Error(`${filePath}: labels file must be a JSON array of strings`);
  }
  if (payload.length === 0) {
    throw new Error(`${filePath}: labels file is empty`);
  }
  return payload as string[];
}

/** Every training label must be a known class, with >= 2 classes and >= 1 example each. */
export function validateTraining(rows: Example[], labels: string[]): void {
  if (labels.length < 2) {
    throw new Error(`need at least 2 classes to train, got ${labels.length}`);
  }
  const known = new Set(labels);
  const counts = new Map<string, number>(labels.map((l) => [l, 0]));
  for (const row of rows) {
    if (!row.label || !known.has(row.label)) {
      throw new Error(
        `document ${JSON.stringify(row.docId)} has label ${JSON.stringify(row.label)} not present in labels.json`,
      );
    }
    counts.set(row.label, (counts.get(row.label) ?? 0) + 1);
  }
  const empty = labels.filter((l) => (counts.get(l) ?? 0) === 0);
  if (empty.length > 0) {
    throw new Error(`classes with zero examples: ${empty.join(", ")}`);
  }
}

export interface Split {
  train: Example[];
  heldout: Example[];
}

/** Seeded stratified split holding out ~`fraction` (at least one) per class. */
export function stratifiedHoldout(rows: Example[], fraction: number, seed: number): Split {
  const byLabel = new Map<string, Example[]>();
  rows.forEach((row) => {
    const bucket = byLabel.get(row.label as string) ?? [];
    bucket.push(row);
    byLabel.set(row.label as string, bucket);
  });
  const train: Example[] = [];
  const heldout: Example[] = [];
  // iterate classes in sorted order so the split depends only on data + seed
  for (const label of [...byLabel.keys()].sort()) {
    const bucket = [...(byLabel.get(label) as Example[])];
    if (bucket.length < 2) {
      train.push(...bucket); // cannot hold out the only example of a class
      continue;
    }
    const rand = mulberry32(seed ^ fnvString(label));
    shuffleInPlace(bucket, rand);
    const nHold = Math.max(1, Math.round(bucket.length * fraction));
    heldout.push(...bucket.slice(0, nHold));
    train.push(...bucket.slice(nHold));
  }
  train.sort((a, b) => a.docId.localeCompare(b.docId));
  heldout.sort((a, b) => a.docId.localeCompare(b.docId));
  return { train, heldout };
}

function fnvString(text: string): number {
  let hash = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193);
  }
  return hash >>> 0;
}

export function writeJsonl(filePath: string, rows: Record<string, unknown>[]): void {
  fs.mkdirSync(path.dirname(filePath), { recursive: true });
  const body = rows.map((r) => JSON.stringify(r)).join("\n");
  fs.writeFileSync(filePath, rows.length ? body + "\n" : "");
}

#!/usr/bin/env node
/**
 * distill CLI: train a classifier from exported topic assignments, predict
 * new docs. Zero runtime dependencies; flags are --name value pairs.
 */

import { METHODS, Method } from "./model";
import { predictFile } from "./predict";
import { JOB_DEFAULTS, train } from "./train";

const USAGE = `usage:
  distill train --data <distill.jsonl> --labels <labels.json> --out <model-dir>
                [--method few_shot_contrastive|vanilla_finetune]
                [--base-model ${JOB_DEFAULTS.baseModel}] [--epochs N]
                [--batch-size N] [--seed N]
  distill predict --model <model-dir> --in <corpus.jsonl> --out <preds.jsonl>
`;

function fail(message: string): never {
  console.error(message);
  process.exit(1);
}

function parseFlags(argv: string[], allowed: Set<string>): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--")) fail(`unexpected argument ${JSON.stringify(key)}\n${USAGE}`);
    const name = key.slice(2);
    if (!allowed.has(name)) fail(`unknown flag --${name}\n${USAGE}`);
    const value = argv[i + 1];
    if (value === undefined) fail(`flag --${name} needs a value`);
    flags.set(name, value);
  }
  return flags;
}

function requireFlag(flags: Map<string, string>, name: string): string {
  const value = flags.get(name);
  if (!value) fail(`missing required flag --${name}\n${USAGE}`);
  return value;
}

function intFlag(flags: Map<string, string>, name: string, fallback: number): number {
  const raw = flags.get(name);
  if (raw === undefined) return fallback;
  const value = parseInt(raw, 10);
  if (Number.isNaN(value)) fail(`flag --${name} must be an integer, got ${JSON.stringify(raw)}`);
  return value;
}

function main(): void {
  const [command, ...rest] = process.argv.slice(2);
  try {
    if (command === "train") {
      const flags = parseFlags(
        rest,
        new Set(["data", "labels", "out", "method", "base-model", "epochs", "batch-size", "seed"]),
      );
      const method = (flags.get("method") ?? "few_shot_contrastive") as Method;
      if (!METHODS.includes(method)) {
        fail(`--method must be one of ${METHODS.join(", ")}`);
      }
      const report = train({
        trainPath: requireFlag(flags, "data"),
        labelsPath: requireFlag(flags, "labels"),
        method,
        baseModel: flags.get("base-model") ?? JOB_DEFAULTS.baseModel,
        epochs: intFlag(flags, "epochs", JOB_DEFAULTS.epochs),
        batchSize: intFlag(flags, "batch-size", JOB_DEFAULTS.batchSize),
        seed: intFlag(flags, "seed", JOB_DEFAULTS.seed),
        outDir: requireFlag(flags, "out"),
        heldoutFraction: JOB_DEFAULTS.heldoutFraction,
      });
      console.log(JSON.stringify(report, null, 2));
    } else if (command === "predict") {
      const flags = parseFlags(rest, new Set(["model", "in", "out"]));
      const rows = predictFile(
        requireFlag(flags, "model"),
        requireFlag(flags, "in"),
        requireFlag(flags, "out"),
      );
      console.log(`${rows.length} predictions written to ${flags.get("out")}`);
    } else if (command === "--help" || command === "-h" || command === undefined) {
      console.log(USAGE);
      if (command === undefined) process.exit(1);
    } else {
      fail(`unknown command ${JSON.stringify(command)}\n${USAGE}`);
    }
  } catch (err) {
    fail(err instanceof Error ? err.message : String(err));
  }
}

main();

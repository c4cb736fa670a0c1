/** Training orchestration: load export files, split, fit, report. */

import { CONTRASTIVE_DEFAULTS, trainContrastive } from "./contrastive";
import {
  Example,
  readJsonlExamples,
  readLabels,
  stratifiedHoldout,
  validateTraining,
} from "./data";
import { DEFAULT_BASE_MODEL, featurize, parseBaseModel } from "./features";
import { Method, ModelArtifact, predictOne, saveModel } from "./model";
import { trainSoftmax } from "./softmax";

export interface DistillJob {
  trainPath: string;
  labelsPath: string;
  method: Method;
  baseModel: string;
  epochs: number;
  batchSize: number;
  seed: number;
  outDir: string;
  heldoutFraction: number;
}

export const JOB_DEFAULTS = {
  baseModel: DEFAULT_BASE_MODEL,
  epochs: 60,
  batchSize: 32,
  seed: 0,
  heldoutFraction: 0.1,
};

export interface TrainReport {
  method: Method;
  baseModel: string;
  seed: number;
  classes: string[];
  perClassCounts: Record<string, number>;
  nTrain: number;
  nHeldout: number;
  heldoutDocIds: string[];
  heldoutAccuracy: number | null;
}

export function train(job: DistillJob): TrainReport {
  const cfg = parseBaseModel(job.baseModel);
  const rows = readJsonlExamples(job.trainPath, true);
  const labels = readLabels(job.labelsPath);
  validateTraining(rows, labels);

  const { train: trainRows, heldout } = stratifiedHoldout(rows, job.heldoutFraction, job.seed);
  const classIndex = new Map(labels.map((l, i) => [l, i]));
  const xs = trainRows.map((r) => featurize(r.text, cfg));
  const ys = trainRows.map((r) => classIndex.get(r.label as string) as number);

  const artifact: ModelArtifact = {
    method: job.method,
    baseModel: job.baseModel,
    classes: labels,
  };
  if (job.method === "vanilla_finetune") {
    artifact.softmax = trainSoftmax(xs, ys, labels.length, {
      epochs: Math.max(job.epochs * 5, 200),
      learningRate: 1.0,
    });
  } else if (job.method === "few_shot_contrastive") {
    artifact.contrastive = trainContrastive(xs, ys, labels.length, {
      epochs: job.epochs,
      batchSize: job.batchSize,
      seed: job.seed,
      ...CONTRASTIVE_DEFAULTS,
    });
  } else {
    throw new Error(`unknown method ${JSON.stringify(job.method)}`);
  }

  const perClassCounts: Record<string, number> = {};
  for (const label of labels) perClassCounts[label] = 0;
  for (const row of rows) perClassCounts[row.label as string]++;

  let heldoutAccuracy: number | null = null;
  if (heldout.length > 0) {
    const correct = heldout.filter(
      (row) => predictOne(artifact, cfg, row.text).label === row.label,
    ).length;
    heldoutAccuracy = correct / heldout.length;
  }

  const report: TrainReport = {
    method: job.method,
    baseModel: job.baseModel,
    seed: job.seed,
    classes: labels,
    perClassCounts,
    nTrain: trainRows.length,
    nHeldout: heldout.length,
    heldoutDocIds: heldout.map((r: Example) => r.docId),
    heldoutAccuracy,
  };
  saveModel(job.outDir, artifact, report);
  return report;
}

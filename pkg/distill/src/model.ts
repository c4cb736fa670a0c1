/** Model artifact persistence and single-document prediction. */

import * as fs from "fs";
import * as path from "path";
import { ContrastiveModel, contrastiveScores } from "./contrastive";
import { FeaturizerConfig, featurize, parseBaseModel } from "./features";
import { SoftmaxModel, softmaxScores } from "./softmax";

export type Method = "few_shot_contrastive" | "vanilla_finetune";

export const METHODS: Method[] = ["few_shot_contrastive", "vanilla_finetune"];

export interface ModelArtifact {
  method: Method;
  baseModel: string;
  classes: string[];
  softmax?: SoftmaxModel;
  contrastive?: ContrastiveModel;
}

export interface Prediction {
  label: string;
  confidence: number;
}

export function saveModel(dir: string, artifact: ModelArtifact, report: unknown): void {
  fs.mkdirSync(dir, { recursive: true });
  fs.writeFileSync(path.join(dir, "model.json"), JSON.stringify(artifact));
  fs.writeFileSync(path.join(dir, "report.json"), JSON.stringify(report, null, 2) + "\n");
}

export function loadModel(dir: string): ModelArtifact {
  const modelPath = path.join(dir, "model.json");
  if (!fs.existsSync(modelPath)) {
    throw new Error(`not a model directory (no model.json): ${dir}`);
  }
  const artifact = JSON.parse(fs.readFileSync(modelPath, "utf-8")) as ModelArtifact;
  if (!METHODS.includes(artifact.method)) {
    throw new Error(`unknown artifact method ${JSON.stringify(artifact.method)}`);
  }
  if (!Array.isArray(artifact.classes) || artifact.classes.length === 0) {
    throw new Error("artifact has no classes");
  }
  parseBaseModel(artifact.baseModel); // validates the encoder id
  return artifact;
}

export function classScores(artifact: ModelArtifact, features: Float64Array): number[] {
  if (artifact.method === "vanilla_finetune") {
    if (!artifact.softmax) throw new Error("artifact is missing softmax parameters");
    return softmaxScores(artifact.softmax, features);
  }
  if (!artifact.contrastive) throw new Error("artifact is missing contrastive parameters");
  return contrastiveScores(artifact.contrastive, features);
}

export function predictOne(
  artifact: ModelArtifact,
  cfg: FeaturizerConfig,
  text: string,
): Prediction {
  const scores = classScores(artifact, featurize(text, cfg));
  let best = 0;
  for (let k = 1; k < scores.length; k++) {
    if (scores[k] > scores[best]) best = k;
  }
  return { label: artifact.classes[best], confidence: scores[best] };
}

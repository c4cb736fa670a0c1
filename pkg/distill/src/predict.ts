/** Batch prediction: corpus JSONL in, {doc_id, topic_name, confidence} out. */

import { readJsonlExamples, writeJsonl } from "./data";
import { parseBaseModel } from "./features";
import { loadModel, predictOne } from "./model";

export interface PredictionRow {
  doc_id: string;
  topic_name: string;
  confidence: number;
}

export function predictFile(modelDir: string, inPath: string, outPath: string): PredictionRow[] {
  const artifact = loadModel(modelDir);
  const cfg = parseBaseModel(artifact.baseModel);
  const rows = readJsonlExamples(inPath, false);
  const out: PredictionRow[] = rows.map((row) => {
    const { label, confidence } = predictOne(artifact, cfg, row.text);
    return {
      doc_id: row.docId,
      topic_name: label,
      confidence: Number(confidence.toFixed(6)),
    };
  });
  writeJsonl(outPath, out as unknown as Record<string, unknown>[]);
  return out;
}

export { DEFAULT_BASE_MODEL, featurize, parseBaseModel } from "./features";
export { readJsonlExamples, readLabels, stratifiedHoldout, validateTraining } from "./data";
export { METHODS, loadModel, predictOne } from "./model";
export type { Method, ModelArtifact } from "./model";
export { predictFile } from "./predict";
export { JOB_DEFAULTS, train } from "./train";
export type { DistillJob, TrainReport } from "./train";

/**
 * Vanilla fine-tune head: multinomial logistic regression on encoder features,
 * trained by full-batch gradient descent. Deterministic (zero init, fixed
 * iteration order).
 */

export interface SoftmaxModel {
  weights: number[][]; // [nClasses][dim]
  bias: number[];
}

export interface SoftmaxOptions {
  epochs: number;
  learningRate: number;
}

export function softmax(logits: number[]): number[] {
  const max = Math.max(...logits);
  const exps = logits.map((z) => Math.exp(z - max));
  const total = exps.reduce((a, b) => a + b, 0);
  return exps.map((e) => e / total);
}

export function trainSoftmax(
  xs: Float64Array[],
  ys: number[],
  nClasses: number,
  opts: SoftmaxOptions,
): SoftmaxModel {
  const dim = xs[0].length;
  const weights = Array.from({ length: nClasses }, () => new Array<number>(dim).fill(0));
  const bias = new Array<number>(nClasses).fill(0);
  const n = xs.length;

  for (let epoch = 0; epoch < opts.epochs; epoch++) {
    const gradW = Array.from({ length: nClasses }, () => new Array<number>(dim).fill(0));
    const gradB = new Array<number>(nClasses).fill(0);
    for (let i = 0; i < n; i++) {
      const probs = softmax(scoreLogits(weights, bias, xs[i]));
      for (let k = 0; k < nClasses; k++) {
        const delta = probs[k] - (ys[i] === k ? 1 : 0);
        gradB[k] += delta;
        const row = gradW[k];
        const x = xs[i];
        for (let j = 0; j < dim; j++) row[j] += delta * x[j];
      }
    }
    const step = opts.learningRate / n;
    for (let k = 0; k < nClasses; k++) {
      bias[k] -= step * gradB[k];
      const row = weights[k];
      const grad = gradW[k];
      for (let j = 0; j < dim; j++) row[j] -= step * grad[j];
    }
  }
  return { weights, bias };
}

export function scoreLogits(
  weights: number[][],
  bias: number[],
  x: Float64Array,
): number[] {
  return weights.map((row, k) => {
    let sum = bias[k];
    for (let j = 0; j < row.length; j++) sum += row[j] * x[j];
    return sum;
  });
}

export function softmaxScores(model: SoftmaxModel, x: Float64Array): number[] {
  return softmax(scoreLogits(model.weights, model.bias, x));
}

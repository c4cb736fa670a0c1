/**
 * Few-shot contrastive trainer.
 *
 * A linear projection of the encoder space is fit on same/different-class
 * pairs: same-class pairs are pulled together in cosine space, different-class
 * pairs pushed below a margin. The classification head is then nearest class
 * centroid (cosine) in the projected space. This is the data-scarce path:
 * with k examples per class there are O(k^2) pairs to learn from.
 */

import { gaussian, mulberry32, randInt } from "./rng";

export interface ContrastiveModel {
  projection: number[][]; // [projDim][dim]
  centroids: number[][]; // [nClasses][projDim], unit length
}

export interface ContrastiveOptions {
  epochs: number;
  batchSize: number;
  seed: number;
  projDim: number;
  learningRate: number;
  margin: number;
}

export const CONTRASTIVE_DEFAULTS = {
  projDim: 64,
  learningRate: 0.05,
  margin: 0.2,
};

function project(projection: number[][], x: Float64Array): Float64Array {
  const out = new Float64Array(projection.length);
  for (let r = 0; r < projection.length; r++) {
    const row = projection[r];
    let sum = 0;
    for (let j = 0; j < row.length; j++) sum += row[j] * x[j];
    out[r] = sum;
  }
  return out;
}

function norm(v: Float64Array): number {
  let sum = 0;
  for (let i = 0; i < v.length; i++) sum += v[i] * v[i];
  return Math.sqrt(sum);
}

export function trainContrastive(
  xs: Float64Array[],
  ys: number[],
  nClasses: number,
  opts: ContrastiveOptions,
): ContrastiveModel {
  const dim = xs[0].length;
  const rand = mulberry32(opts.seed);
  const gauss = gaussian(rand);
  const scale = 1 / Math.sqrt(dim);
  const projection = Array.from({ length: opts.projDim }, () =>
    Array.from({ length: dim }, () => gauss() * scale),
  );

  const byClass: number[][] = Array.from({ length: nClasses }, () => []);
  ys.forEach((y, i) => byClass[y].push(i));

  const samePair = (): [number, number] => {
    let cls = randInt(rand, nClasses);
    while (byClass[cls].length < 2) cls = randInt(rand, nClasses);
    const bucket = byClass[cls];
    const i = bucket[randInt(rand, bucket.length)];
    let j = bucket[randInt(rand, bucket.length)];
    while (j === i) j = bucket[randInt(rand, bucket.length)];
    return [i, j];
  };
  const diffPair = (): [number, number] => {
    const a = randInt(rand, nClasses);
    let b = randInt(rand, nClasses);
    while (b === a) b = randInt(rand, nClasses);
    return [byClass[a][randInt(rand, byClass[a].length)], byClass[b][randInt(rand, byClass[b].length)]];
  };

  for (let epoch = 0; epoch < opts.epochs; epoch++) {
    for (let step = 0; step < opts.batchSize; step++) {
      const same = step % 2 === 0;
      const [i, j] = same ? samePair() : diffPair();
      const a = xs[i];
      const b = xs[j];
      const u = project(projection, a);
      const v = project(projection, b);
      const nu = norm(u);
      const nv = norm(v);
      if (nu < 1e-12 || nv < 1e-12) continue;
      const c = dotArr(u, v) / (nu * nv);

      // dLoss/dcos: pull same-class toward 1, push different below the margin
      let dc: number;
      if (same) {
        dc = -1;
      } else if (c > opts.margin) {
        dc = 1;
      } else {
        continue;
      }

      // dcos/du = v/(|u||v|) - cos * u/|u|^2, symmetric in v
      const gu = new Float64Array(u.length);
      const gv = new Float64Array(v.length);
      for (let r = 0; r < u.length; r++) {
        gu[r] = dc * (v[r] / (nu * nv) - (c * u[r]) / (nu * nu));
        gv[r] = dc * (u[r] / (nu * nv) - (c * v[r]) / (nv * nv));
      }
      for (let r = 0; r < opts.projDim; r++) {
        const row = projection[r];
        const stepU = opts.learningRate * gu[r];
        const stepV = opts.learningRate * gv[r];
        for (let col = 0; col < dim; col++) {
          row[col] -= stepU * a[col] + stepV * b[col];
        }
      }
    }
  }

  const centroids = byClass.map((members) => {
    const acc = new Float64Array(opts.projDim);
    for (const i of members) {
      const p = project(projection, xs[i]);
      const pn = norm(p);
      if (pn < 1e-12) continue;
      for (let r = 0; r < acc.length; r++) acc[r] += p[r] / pn;
    }
    const an = norm(acc);
    return Array.from(acc, (value) => (an > 0 ? value / an : value));
  });

  return { projection, centroids };
}

function dotArr(a: Float64Array, b: Float64Array): number {
  let sum = 0;
  for (let i = 0; i < a.length; i++) sum += a[i] * b[i];
  return sum;
}

/** Class scores: softmax over scaled cosine similarity to each centroid. */
export function contrastiveScores(model: ContrastiveModel, x: Float64Array): number[] {
  const p = project(model.projection, x);
  const pn = norm(p);
  const sims = model.centroids.map((centroid) => {
    if (pn < 1e-12) return 0;
    let sum = 0;
    for (let r = 0; r < centroid.length; r++) sum += centroid[r] * p[r];
    return sum / pn;
  });
  const max = Math.max(...sims);
  const exps = sims.map((s) => Math.exp(5 * (s - max)));
  const total = exps.reduce((a, b) => a + b, 0);
  return exps.map((e) => e / total);
}

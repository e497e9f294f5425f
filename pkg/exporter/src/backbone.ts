/**
 * Small convolutional backbone with deterministic, seed-derived weights.
 *
 * Three 3x3 conv blocks (ReLU, 2x2 max pool after the first two) followed
 * by global average pooling. The shipped weight sets are fixed functions of
 * their seed, so every install carries identical "pretrained" parameters;
 * an optional fine-tuning pass adapts them to a labeled-source/unlabeled-
 * target pair with the same joint objective the consumer toolkit uses for
 * its extractor pre-training (cross-entropy + weighted prediction entropy
 * + class balance).
 */

import { mulberry32, uniform, type Rand } from "./prng.js";

export interface ConvLayer {
  inChannels: number;
  outChannels: number;
  kernel: Float64Array; // [ky][kx][in][out], 3x3
  bias: Float64Array;
}

export interface Backbone {
  id: string;
  inputSize: number;
  channels: [number, number, number];
  layers: ConvLayer[];
  fineTuned: boolean;
}

export interface BackboneSpec {
  inputSize: number;
  channels: [number, number, number];
  seed: number;
}

export const BACKBONES: Record<string, BackboneSpec> = {
  "tinyconv-64": { inputSize: 32, channels: [8, 16, 64], seed: 7701 },
  "tinyconv-128": { inputSize: 32, channels: [12, 24, 128], seed: 7702 },
};

export const TAPS = ["penultimate", "block2"] as const;
export type Tap = (typeof TAPS)[number];

export function tapWidth(backbone: Backbone, tap: Tap): number {
  return tap === "penultimate" ? backbone.channels[2] : backbone.channels[1];
}

const K = 3; // kernel size

function initLayer(inChannels: number, outChannels: number, rand: Rand): ConvLayer {
  const bound = 1 / Math.sqrt(inChannels * K * K);
  const kernel = new Float64Array(K * K * inChannels * outChannels);
  for (let i = 0; i < kernel.length; i += 1) kernel[i] = uniform(rand, bound);
  const bias = new Float64Array(outChannels);
  for (let i = 0; i < bias.length; i += 1) bias[i] = uniform(rand, bound);
  return { inChannels, outChannels, kernel, bias };
}

export function loadBackbone(id: string): Backbone {
  const spec = BACKBONES[id];
  if (!spec) {
    throw new Error(`unknown backbone ${JSON.stringify(id)}; known: ${Object.keys(BACKBONES).join(", ")}`);
  }
  const rand = mulberry32(spec.seed);
  const widths = [1, spec.channels[0], spec.channels[1], spec.channels[2]];
  const layers: ConvLayer[] = [];
  for (let i = 0; i < 3; i += 1) layers.push(initLayer(widths[i], widths[i + 1], rand));
  return { id, inputSize: spec.inputSize, channels: spec.channels, layers, fineTuned: false };
}

// --------------------------------------------------------------------------
// plain channel-last float maps

export interface FeatureMap {
  h: number;
  w: number;
  c: number;
  data: Float64Array; // index (y * w + x) * c + ch
}

function conv3x3(input: FeatureMap, layer: ConvLayer): FeatureMap {
  const { h, w } = input;
  const ci = layer.inChannels;
  const co = layer.outChannels;
  const out = new Float64Array(h * w * co);
  const { kernel, bias } = layer;
  for (let y = 0; y < h; y += 1) {
    for (let x = 0; x < w; x += 1) {
      const base = (y * w + x) * co;
      for (let oc = 0; oc < co; oc += 1) out[base + oc] = bias[oc];
      for (let ky = 0; ky < K; ky += 1) {
        const sy = y + ky - 1;
        if (sy < 0 || sy >= h) continue;
        for (let kx = 0; kx < K; kx += 1) {
          const sx = x + kx - 1;
          if (sx < 0 || sx >= w) continue;
          const inBase = (sy * w + sx) * ci;
          const kBase = ((ky * K + kx) * ci) * co;
          for (let ic = 0; ic < ci; ic += 1) {
            const v = input.data[inBase + ic];
            if (v === 0) continue;
            const kRow = kBase + ic * co;
            for (let oc = 0; oc < co; oc += 1) {
              out[base + oc] += v * kernel[kRow + oc];
            }
          }
        }
      }
    }
  }
  return { h, w, c: co, data: out };
}

function relu(map: FeatureMap): FeatureMap {
  const data = new Float64Array(map.data.length);
  for (let i = 0; i < data.length; i += 1) data[i] = Math.max(map.data[i], 0);
  return { ...map, data };
}

function maxPool2(map: FeatureMap): { out: FeatureMap; argmax: Int32Array } {
  const h = map.h >> 1;
  const w = map.w >> 1;
  const c = map.c;
  const out = new Float64Array(h * w * c);
  const argmax = new Int32Array(h * w * c);
  for (let y = 0; y < h; y += 1) {
    for (let x = 0; x < w; x += 1) {
      for (let ch = 0; ch < c; ch += 1) {
        let best = -Infinity;
        let bestIdx = -1;
        for (let dy = 0; dy < 2; dy += 1) {
          for (let dx = 0; dx < 2; dx += 1) {
            const idx = ((2 * y + dy) * map.w + (2 * x + dx)) * c + ch;
            if (map.data[idx] > best) {
              best = map.data[idx];
              bestIdx = idx;
            }
          }
        }
        out[(y * w + x) * c + ch] = best;
        argmax[(y * w + x) * c + ch] = bestIdx;
      }
    }
  }
  return { out: { h, w, c, data: out }, argmax };
}

function globalAveragePool(map: FeatureMap): Float64Array {
  const pooled = new Float64Array(map.c);
  const cells = map.h * map.w;
  for (let i = 0; i < map.data.length; i += 1) pooled[i % map.c] += map.data[i];
  for (let ch = 0; ch < map.c; ch += 1) pooled[ch] /= cells;
  return pooled;
}

interface ForwardCache {
  input: FeatureMap;
  pre1: FeatureMap;
  act1: FeatureMap;
  pool1: FeatureMap;
  arg1: Int32Array;
  pre2: FeatureMap;
  act2: FeatureMap;
  pool2: FeatureMap;
  arg2: Int32Array;
  pre3: FeatureMap;
  act3: FeatureMap;
}

function forwardPass(backbone: Backbone, pixels: Float64Array): ForwardCache {
  const size = backbone.inputSize;
  if (pixels.length !== size * size) {
    throw new Error(`input has ${pixels.length} pixels, backbone expects ${size * size}`);
  }
  const input: FeatureMap = { h: size, w: size, c: 1, data: pixels };
  const pre1 = conv3x3(input, backbone.layers[0]);
  const act1 = relu(pre1);
  const { out: pool1, argmax: arg1 } = maxPool2(act1);
  const pre2 = conv3x3(pool1, backbone.layers[1]);
  const act2 = relu(pre2);
  const { out: pool2, argmax: arg2 } = maxPool2(act2);
  const pre3 = conv3x3(pool2, backbone.layers[2]);
  const act3 = relu(pre3);
  return { input, pre1, act1, pool1, arg1, pre2, act2, pool2, arg2, pre3, act3 };
}

/** Feature vector for one preprocessed image at the given tap. */
export function extract(backbone: Backbone, pixels: Float64Array, tap: Tap): Float64Array {
  const cache = forwardPass(backbone, pixels);
  return globalAveragePool(tap === "penultimate" ? cache.act3 : cache.pool2);
}

// --------------------------------------------------------------------------
// fine-tuning (joint source cross-entropy + target entropy / balance)

export interface FineTuneOptions {
  epochs: number;
  batchSize: number;
  learningRate: number;
  entropyWeight: number; // weight of the target prediction-entropy term
  balanceWeight: number; // weight of the class-balance term
  seed: number;
}

export const DEFAULT_FINE_TUNE: FineTuneOptions = {
  epochs: 5,
  batchSize: 32,
  learningRate: 1e-3,
  entropyWeight: 0.1,
  balanceWeight: 0.1,
  seed: 0,
};

interface ConvGrads {
  kernel: Float64Array;
  bias: Float64Array;
}

function zerosLike(layer: ConvLayer): ConvGrads {
  return { kernel: new Float64Array(layer.kernel.length), bias: new Float64Array(layer.bias.length) };
}

function conv3x3Backward(
  input: FeatureMap,
  layer: ConvLayer,
  gradOut: FeatureMap,
  grads: ConvGrads,
): FeatureMap {
  const { h, w } = input;
  const ci = layer.inChannels;
  const co = layer.outChannels;
  const gradIn = new Float64Array(h * w * ci);
  for (let y = 0; y < h; y += 1) {
    for (let x = 0; x < w; x += 1) {
      const base = (y * w + x) * co;
      for (let oc = 0; oc < co; oc += 1) grads.bias[oc] += gradOut.data[base + oc];
      for (let ky = 0; ky < K; ky += 1) {
        const sy = y + ky - 1;
        if (sy < 0 || sy >= h) continue;
        for (let kx = 0; kx < K; kx += 1) {
          const sx = x + kx - 1;
          if (sx < 0 || sx >= w) continue;
          const inBase = (sy * w + sx) * ci;
          const kBase = ((ky * K + kx) * ci) * co;
          for (let ic = 0; ic < ci; ic += 1) {
            const v = input.data[inBase + ic];
            const kRow = kBase + ic * co;
            let acc = 0;
            for (let oc = 0; oc < co; oc += 1) {
              const g = gradOut.data[base + oc];
              grads.kernel[kRow + oc] += v * g;
              acc += layer.kernel[kRow + oc] * g;
            }
            gradIn[inBase + ic] += acc;
          }
        }
      }
    }
  }
  return { h, w, c: ci, data: gradIn };
}

function reluBackward(pre: FeatureMap, grad: FeatureMap): FeatureMap {
  const data = new Float64Array(grad.data.length);
  for (let i = 0; i < data.length; i += 1) data[i] = pre.data[i] > 0 ? grad.data[i] : 0;
  return { ...grad, data };
}

function maxPoolBackward(shapeLike: FeatureMap, argmax: Int32Array, grad: FeatureMap): FeatureMap {
  const data = new Float64Array(shapeLike.data.length);
  for (let i = 0; i < argmax.length; i += 1) data[argmax[i]] += grad.data[i];
  return { h: shapeLike.h, w: shapeLike.w, c: shapeLike.c, data };
}

/** Backprop a gradient w.r.t. the penultimate (pooled) features into the conv stack. */
function backwardPass(
  backbone: Backbone,
  cache: ForwardCache,
  gradPooled: Float64Array,
  grads: ConvGrads[],
): void {
  const act3 = cache.act3;
  const cells = act3.h * act3.w;
  const gradAct3 = new Float64Array(act3.data.length);
  for (let i = 0; i < gradAct3.length; i += 1) {
    gradAct3[i] = gradPooled[i % act3.c] / cells;
  }
  let grad: FeatureMap = { h: act3.h, w: act3.w, c: act3.c, data: gradAct3 };
  grad = reluBackward(cache.pre3, grad);
  grad = conv3x3Backward(cache.pool2, backbone.layers[2], grad, grads[2]);
  grad = maxPoolBackward(cache.act2, cache.arg2, grad);
  grad = reluBackward(cache.pre2, grad);
  grad = conv3x3Backward(cache.pool1, backbone.layers[1], grad, grads[1]);
  grad = maxPoolBackward(cache.act1, cache.arg1, grad);
  grad = reluBackward(cache.pre1, grad);
  conv3x3Backward(cache.input, backbone.layers[0], grad, grads[0]);
}

function softmax(logits: Float64Array): Float64Array {
  let max = -Infinity;
  for (const v of logits) max = Math.max(max, v);
  const out = new Float64Array(logits.length);
  let sum = 0;
  for (let i = 0; i < logits.length; i += 1) {
    out[i] = Math.exp(logits[i] - max);
    sum += out[i];
  }
  for (let i = 0; i < out.length; i += 1) out[i] /= sum;
  return out;
}

class Adam {
  private m: Float64Array[] = [];
  private v: Float64Array[] = [];
  private t = 0;

  constructor(private lr: number, private beta1 = 0.9, private beta2 = 0.999, private eps = 1e-8) {}

  step(params: Float64Array[], grads: Float64Array[]): void {
    if (this.m.length === 0) {
      this.m = params.map((p) => new Float64Array(p.length));
      this.v = params.map((p) => new Float64Array(p.length));
    }
    this.t += 1;
    const c1 = 1 - this.beta1 ** this.t;
    const c2 = 1 - this.beta2 ** this.t;
    for (let j = 0; j < params.length; j += 1) {
      const p = params[j];
      const g = grads[j];
      const m = this.m[j];
      const v = this.v[j];
      for (let i = 0; i < p.length; i += 1) {
        m[i] = this.beta1 * m[i] + (1 - this.beta1) * g[i];
        v[i] = this.beta2 * v[i] + (1 - this.beta2) * g[i] * g[i];
        p[i] -= (this.lr * (m[i] / c1)) / (Math.sqrt(v[i] / c2) + this.eps);
      }
    }
  }
}

export interface FineTuneReport {
  epochLosses: number[];
}

/**
 * Adapt the backbone in place on labeled source pixels plus unlabeled
 * target pixels. A linear head is trained jointly and discarded; exported
 * features come from the tuned conv stack.
 */
export function fineTune(
  backbone: Backbone,
  sourcePixels: Float64Array[],
  sourceLabels: number[],
  targetPixels: Float64Array[],
  classCount: number,
  options: FineTuneOptions = DEFAULT_FINE_TUNE,
): FineTuneReport {
  const width = backbone.channels[2];
  const rand = mulberry32(options.seed + 101);
  const headBound = 1 / Math.sqrt(width);
  const headW = new Float64Array(width * classCount);
  for (let i = 0; i < headW.length; i += 1) headW[i] = uniform(rand, headBound);
  const headB = new Float64Array(classCount);

  const params: Float64Array[] = [];
  for (const layer of backbone.layers) params.push(layer.kernel, layer.bias);
  params.push(headW, headB);
  const optimizer = new Adam(options.learningRate);
  const batchRand = mulberry32(options.seed + 202);
  const epochLosses: number[] = [];

  for (let epoch = 0; epoch < options.epochs; epoch += 1) {
    const steps = Math.max(1, Math.ceil(sourcePixels.length / options.batchSize));
    let lossSum = 0;
    for (let step = 0; step < steps; step += 1) {
      const srcIdx = drawBatch(batchRand, sourcePixels.length, options.batchSize);
      const tgtIdx = drawBatch(batchRand, targetPixels.length, options.batchSize);
      const grads = backbone.layers.map(zerosLike);
      const gradHeadW = new Float64Array(headW.length);
      const gradHeadB = new Float64Array(classCount);
      let loss = 0;

      // source cross-entropy
      for (const idx of srcIdx) {
        const cache = forwardPass(backbone, sourcePixels[idx]);
        const feats = globalAveragePool(cache.act3);
        const logits = headLogits(feats, headW, headB, classCount);
        const probs = softmax(logits);
        const label = sourceLabels[idx];
        loss += -Math.log(Math.max(probs[label], 1e-300)) / srcIdx.length;
        const gradLogits = new Float64Array(classCount);
        for (let kk = 0; kk < classCount; kk += 1) {
          gradLogits[kk] = (probs[kk] - (kk === label ? 1 : 0)) / srcIdx.length;
        }
        accumulateHead(feats, gradLogits, gradHeadW, gradHeadB, classCount);
        backwardPass(backbone, cache, headGradFeatures(gradLogits, headW, width, classCount), grads);
      }

      // target entropy + class balance
      const caches: ForwardCache[] = [];
      const featsList: Float64Array[] = [];
      const probsList: Float64Array[] = [];
      for (const idx of tgtIdx) {
        const cache = forwardPass(backbone, targetPixels[idx]);
        const feats = globalAveragePool(cache.act3);
        caches.push(cache);
        featsList.push(feats);
        probsList.push(softmax(headLogits(feats, headW, headB, classCount)));
      }
      const n = probsList.length;
      const mean = new Float64Array(classCount);
      for (const p of probsList) for (let kk = 0; kk < classCount; kk += 1) mean[kk] += p[kk] / n;
      let entropy = 0;
      for (const p of probsList) {
        for (const v of p) if (v > 0) entropy -= (v * Math.log(v)) / n;
      }
      let balance = 0;
      const u = 1 / classCount;
      const clamped = mean.map((v) => Math.min(Math.max(v, 1e-12), 1 - 1e-12));
      for (const v of clamped) balance -= u * Math.log(v) + (1 - u) * Math.log(1 - v);
      loss += options.entropyWeight * entropy + options.balanceWeight * balance;

      const balanceCoeff = clamped.map((v) => -u / v + (1 - u) / (1 - v));
      for (let bi = 0; bi < n; bi += 1) {
        const p = probsList[bi];
        const gradLogits = new Float64Array(classCount);
        // entropy term: -(p/n) (log p + H_row)
        let rowEntropy = 0;
        for (const v of p) if (v > 0) rowEntropy -= v * Math.log(v);
        for (let kk = 0; kk < classCount; kk += 1) {
          const logp = p[kk] > 0 ? Math.log(p[kk]) : 0;
          gradLogits[kk] +=
            options.entropyWeight * (-(p[kk] / n) * (logp + rowEntropy));
        }
        // balance term through the batch-mean prediction
        let dot = 0;
        for (let kk = 0; kk < classCount; kk += 1) dot += (balanceCoeff[kk] / n) * p[kk];
        for (let kk = 0; kk < classCount; kk += 1) {
          gradLogits[kk] += options.balanceWeight * p[kk] * (balanceCoeff[kk] / n - dot);
        }
        accumulateHead(featsList[bi], gradLogits, gradHeadW, gradHeadB, classCount);
        backwardPass(backbone, caches[bi], headGradFeatures(gradLogits, headW, width, classCount), grads);
      }

      if (!Number.isFinite(loss)) throw new Error(`non-finite fine-tune loss at epoch ${epoch}`);
      const gradList: Float64Array[] = [];
      for (const g of grads) gradList.push(g.kernel, g.bias);
      gradList.push(gradHeadW, gradHeadB);
      optimizer.step(params, gradList);
      lossSum += loss;
    }
    epochLosses.push(lossSum / Math.max(1, Math.ceil(sourcePixels.length / options.batchSize)));
  }
  backbone.fineTuned = true;
  return { epochLosses };
}

function headLogits(feats: Float64Array, headW: Float64Array, headB: Float64Array, classCount: number): Float64Array {
  const logits = new Float64Array(classCount);
  for (let kk = 0; kk < classCount; kk += 1) {
    let acc = headB[kk];
    for (let f = 0; f < feats.length; f += 1) acc += feats[f] * headW[f * classCount + kk];
    logits[kk] = acc;
  }
  return logits;
}

function accumulateHead(
  feats: Float64Array,
  gradLogits: Float64Array,
  gradHeadW: Float64Array,
  gradHeadB: Float64Array,
  classCount: number,
): void {
  for (let kk = 0; kk < classCount; kk += 1) {
    gradHeadB[kk] += gradLogits[kk];
    for (let f = 0; f < feats.length; f += 1) {
      gradHeadW[f * classCount + kk] += feats[f] * gradLogits[kk];
    }
  }
}

function headGradFeatures(
  gradLogits: Float64Array,
  headW: Float64Array,
  width: number,
  classCount: number,
): Float64Array {
  const grad = new Float64Array(width);
  for (let f = 0; f < width; f += 1) {
    let acc = 0;
    for (let kk = 0; kk < classCount; kk += 1) acc += headW[f * classCount + kk] * gradLogits[kk];
    grad[f] = acc;
  }
  return grad;
}

function drawBatch(rand: Rand, n: number, batch: number): number[] {
  const count = Math.min(batch, n);
  const out: number[] = [];
  for (let i = 0; i < count; i += 1) out.push(Math.floor(rand() * n));
  return out;
}

// --------------------------------------------------------------------------
// weight (de)serialisation for the fine-tuned cache file

export function backboneToJson(backbone: Backbone): string {
  return JSON.stringify({
    format: "saf-exporter-weights",
    version: 1,
    id: backbone.id,
    inputSize: backbone.inputSize,
    channels: backbone.channels,
    fineTuned: backbone.fineTuned,
    layers: backbone.layers.map((layer) => ({
      inChannels: layer.inChannels,
      outChannels: layer.outChannels,
      kernel: Array.from(layer.kernel),
      bias: Array.from(layer.bias),
    })),
  });
}

export function backboneFromJson(text: string): Backbone {
  const raw = JSON.parse(text);
  if (raw.format !== "saf-exporter-weights" || raw.version !== 1) {
    throw new Error("not a saf-exporter weights file");
  }
  return {
    id: raw.id,
    inputSize: raw.inputSize,
    channels: raw.channels,
    fineTuned: Boolean(raw.fineTuned),
    layers: raw.layers.map((layer: any) => ({
      inChannels: layer.inChannels,
      outChannels: layer.outChannels,
      kernel: Float64Array.from(layer.kernel),
      bias: Float64Array.from(layer.bias),
    })),
  };
}

/** FNV-1a digest of the weight bytes; cheap identity check for manifests. */
export function backboneDigest(backbone: Backbone): string {
  let h = 0xcbf29ce484222325n;
  const prime = 0x100000001b3n;
  const mask = (1n << 64n) - 1n;
  for (const layer of backbone.layers) {
    for (const arr of [layer.kernel, layer.bias]) {
      const bytes = new Uint8Array(arr.buffer.slice(0));
      for (const b of bytes) {
        h ^= BigInt(b);
        h = (h * prime) & mask;
      }
    }
  }
  return h.toString(16).padStart(16, "0");
}

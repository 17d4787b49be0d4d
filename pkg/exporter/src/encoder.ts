/**
 * Deterministic contextual bi-directional token encoder.
 *
 * Weights are generated once from the model name, so the encoder behaves
 * like a frozen pretrained model: the same text always produces the same
 * vectors, and each token's upper layers depend on its neighbours in both
 * directions. Per-token output is the concatenation of three 1024-wide
 * layers (a character-insensitive type embedding plus two bidirectional
 * recurrent mixing layers), 3072 values in total by default.
 */

import { SplitMix64, hashString, unitGaussianVector } from "./rng.js";

export const LAYER_WIDTH = 1024;
export const DIRECTION_WIDTH = LAYER_WIDTH / 2;
export const NUM_LAYERS = 3;

interface DirectionWeights {
  inputGain: Float64Array; // elementwise gain on the projected input
  stateGain: Float64Array; // elementwise gain on the previous state
  mixGain: Float64Array; // gain on the rotated previous state (cross-channel mixing)
  projectA: Float64Array; // signs combining the two input halves
  projectB: Float64Array;
}

interface LayerWeights {
  forward: DirectionWeights;
  backward: DirectionWeights;
}

export class ContextualEncoder {
  readonly modelName: string;
  readonly layerSelection: number[];
  private layers: LayerWeights[];
  private typeCache = new Map<string, Float64Array>();

  constructor(modelName = "bilm-3072-v1", layerSelection: number[] = [0, 1, 2]) {
    for (const layer of layerSelection) {
      if (layer < 0 || layer >= NUM_LAYERS) {
        throw new Error(`layer selection out of range: ${layer}`);
      }
    }
    this.modelName = modelName;
    this.layerSelection = layerSelection;
    this.layers = [this.makeLayer(1), this.makeLayer(2)];
  }

  get dim(): number {
    return this.layerSelection.length * LAYER_WIDTH;
  }

  private makeLayer(index: number): LayerWeights {
    const make = (tag: string): DirectionWeights => {
      const rng = new SplitMix64(hashString(`${tag}:${index}`, this.modelName));
      const vec = (scale: number) => {
        const v = new Float64Array(DIRECTION_WIDTH);
        for (let i = 0; i < v.length; i++) v[i] = scale * (rng.nextUniform() * 2 - 1);
        return v;
      };
      const signs = () => {
        const v = new Float64Array(DIRECTION_WIDTH);
        for (let i = 0; i < v.length; i++) v[i] = rng.nextUniform() < 0.5 ? -1 : 1;
        return v;
      };
      return {
        inputGain: vec(1.2),
        stateGain: vec(0.9),
        mixGain: vec(0.7),
        projectA: signs(),
        projectB: signs(),
      };
    };
    return { forward: make("fwd"), backward: make("bwd") };
  }

  private typeEmbedding(token: string): Float64Array {
    let cached = this.typeCache.get(token);
    if (!cached) {
      cached = unitGaussianVector(hashString(token, this.modelName), LAYER_WIDTH);
      this.typeCache.set(token, cached);
    }
    return cached;
  }

  /** One direction of one recurrent mixing layer over the sequence. */
  private runDirection(
    inputs: Float64Array[],
    w: DirectionWeights,
    reverse: boolean,
  ): Float64Array[] {
    const n = inputs.length;
    const out: Float64Array[] = new Array(n);
    let state = new Float64Array(DIRECTION_WIDTH);
    const invSqrt2 = Math.SQRT1_2;
    for (let step = 0; step < n; step++) {
      const t = reverse ? n - 1 - step : step;
      const x = inputs[t];
      const h = new Float64Array(DIRECTION_WIDTH);
      for (let i = 0; i < DIRECTION_WIDTH; i++) {
        const projected =
          (w.projectA[i] * x[i] + w.projectB[i] * x[i + DIRECTION_WIDTH]) * invSqrt2;
        const rotated = state[(i + 1) % DIRECTION_WIDTH];
        h[i] = Math.tanh(
          w.inputGain[i] * projected + w.stateGain[i] * state[i] + w.mixGain[i] * rotated,
        );
      }
      out[t] = h;
      state = h;
    }
    return out;
  }

  private runLayer(inputs: Float64Array[], layer: LayerWeights): Float64Array[] {
    const fwd = this.runDirection(inputs, layer.forward, false);
    const bwd = this.runDirection(inputs, layer.backward, true);
    return inputs.map((_, t) => {
      const merged = new Float64Array(LAYER_WIDTH);
      merged.set(fwd[t], 0);
      merged.set(bwd[t], DIRECTION_WIDTH);
      return merged;
    });
  }

  /** Encode a token sequence: (tokens.length x dim) row-major values. */
  encode(tokens: string[]): Float64Array {
    const layer0 = tokens.map((tok) => this.typeEmbedding(tok));
    const layerOutputs: Float64Array[][] = [layer0];
    let current = layer0;
    for (const layer of this.layers) {
      current = this.runLayer(current, layer);
      layerOutputs.push(current);
    }
    const out = new Float64Array(tokens.length * this.dim);
    for (let t = 0; t < tokens.length; t++) {
      let offset = t * this.dim;
      for (const layerIndex of this.layerSelection) {
        out.set(layerOutputs[layerIndex][t], offset);
        offset += LAYER_WIDTH;
      }
    }
    return out;
  }
}

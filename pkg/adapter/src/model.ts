/**
 * Classifier backends for the adapter: a plain-text linear model and a
 * plug-in hook for arbitrary user classifiers.
 *
 * Linear model file format: first line "K D", then K rows of D+1 floats
 * with the bias last. Ties in the argmax break toward the smallest class
 * index, matching the certification engine's convention.
 */

import * as fs from "fs";
import * as path from "path";

export interface Classifier {
  classes: number;
  inputDim: number;
  classify(batch: number[][]): number[];
}

export function parseLinearModel(text: string): Classifier {
  const lines = text.split("\n").filter((l) => l.trim().length > 0);
  if (lines.length === 0) {
    throw new Error("empty model file");
  }
  const header = lines[0].trim().split(/\s+/).map(Number);
  if (header.length !== 2 || header.some((v) => !Number.isInteger(v) || v < 1)) {
    throw new Error("model file must start with 'K D'");
  }
  const [classes, inputDim] = header;
  if (classes < 2) {
    throw new Error("model needs at least 2 classes");
  }
  if (lines.length < 1 + classes) {
    throw new Error(`model file declares ${classes} rows but has ${lines.length - 1}`);
  }
  const weights: number[][] = [];
  const bias: number[] = [];
  for (let c = 0; c < classes; c++) {
    const row = lines[1 + c].trim().split(/\s+/).map(Number);
    if (row.length !== inputDim + 1 || row.some((v) => !Number.isFinite(v))) {
      throw new Error(`model row ${c} must hold ${inputDim + 1} finite floats`);
    }
    weights.push(row.slice(0, inputDim));
    bias.push(row[inputDim]);
  }
  return {
    classes,
    inputDim,
    classify(batch: number[][]): number[] {
      return batch.map((x) => {
        let best = 0;
        let bestScore = -Infinity;
        for (let c = 0; c < classes; c++) {
          const w = weights[c];
          let score = bias[c];
          for (let j = 0; j < inputDim; j++) {
            score += w[j] * x[j];
          }
          if (score > bestScore) {
            best = c;
            bestScore = score;
          }
        }
        return best;
      });
    },
  };
}

export function loadLinearModel(modelPath: string): Classifier {
  return parseLinearModel(fs.readFileSync(modelPath, "utf8"));
}

/**
 * Wrap a user module as a classifier. The module must export `classes`,
 * `inputDim`, and `classify(batch)`; anything it throws per request becomes
 * a protocol error object rather than killing the adapter.
 */
export function pluginHook(userModule: {
  classes: number;
  inputDim: number;
  classify: (batch: number[][]) => number[];
}): Classifier {
  const { classes, inputDim } = userModule;
  if (!Number.isInteger(classes) || classes < 2) {
    throw new Error("plugin must export an integer `classes` >= 2");
  }
  if (!Number.isInteger(inputDim) || inputDim < 1) {
    throw new Error("plugin must export an integer `inputDim` >= 1");
  }
  if (typeof userModule.classify !== "function") {
    throw new Error("plugin must export a `classify(batch)` function");
  }
  return {
    classes,
    inputDim,
    classify: (batch) => userModule.classify(batch),
  };
}

export function loadPlugin(modulePath: string): Classifier {
  // eslint-disable-next-line @typescript-eslint/no-var-requires
  const mod = require(path.resolve(modulePath));
  return pluginHook(mod);
}

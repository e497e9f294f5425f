#!/usr/bin/env node
/**
 * saf-export: image folder trees -> SAF1 feature files.
 *
 * Commands:
 *   export     extract features from a dataset tree into a SAF1 file
 *   fine-tune  adapt a backbone to a labeled-source/unlabeled-target pair
 *              and cache the weights for later exports
 *   make-demo  write the seeded digits-style demo dataset
 *   validate   decode a SAF1 file and print its header
 */

import { readFileSync } from "node:fs";
import { parseArgs } from "node:util";
import {
  BACKBONES,
  DEFAULT_FINE_TUNE,
  TAPS,
  type Tap,
  backboneToJson,
  fineTune,
  loadBackbone,
} from "./backbone.js";
import { runExport } from "./export.js";
import { makeDemoDataset } from "./fixtures.js";
import { listDataset, loadImagePixels } from "./images.js";
import { atomicWrite, readFeatureFile } from "./saf.js";

function fail(message: string): never {
  console.error(`error: ${message}`);
  process.exit(2);
}

async function cmdExport(argv: string[]): Promise<number> {
  const { values } = parseArgs({
    args: argv,
    options: {
      dataset: { type: "string" },
      out: { type: "string" },
      backbone: { type: "string", default: "tinyconv-64" },
      tap: { type: "string", default: "penultimate" },
      "batch-size": { type: "string", default: "32" },
      "label-map": { type: "string" },
      weights: { type: "string" },
    },
  });
  if (!values.dataset || !values.out) fail("export requires --dataset and --out");
  if (!TAPS.includes(values.tap as Tap)) fail(`--tap must be one of ${TAPS.join(", ")}`);
  const report = await runExport({
    datasetRoot: values.dataset,
    backbone: values.backbone!,
    tap: values.tap as Tap,
    batchSize: Number(values["batch-size"]),
    outPath: values.out,
    labelMapPath: values["label-map"],
    weightsPath: values.weights,
  });
  console.log(
    `wrote ${report.rows} x ${report.cols} features to ${values.out} ` +
      `(${report.skipped.length} skipped, backbone ${report.backboneDigest.slice(0, 12)})`,
  );
  return 0;
}

async function cmdFineTune(argv: string[]): Promise<number> {
  const { values } = parseArgs({
    args: argv,
    options: {
      source: { type: "string" },
      target: { type: "string" },
      out: { type: "string" },
      backbone: { type: "string", default: "tinyconv-64" },
      epochs: { type: "string", default: String(DEFAULT_FINE_TUNE.epochs) },
      "batch-size": { type: "string", default: String(DEFAULT_FINE_TUNE.batchSize) },
      "learning-rate": { type: "string", default: String(DEFAULT_FINE_TUNE.learningRate) },
      seed: { type: "string", default: "0" },
    },
  });
  if (!values.source || !values.target || !values.out) {
    fail("fine-tune requires --source (labeled), --target, and --out");
  }
  const backbone = loadBackbone(values.backbone!);
  const sourceListing = listDataset(values.source);
  if (sourceListing.classNames.length === 0) fail("--source must contain class folders");
  const targetListing = listDataset(values.target);
  const sourcePixels: Float64Array[] = [];
  const sourceLabels: number[] = [];
  for (const entry of sourceListing.entries) {
    sourcePixels.push(await loadImagePixels(entry.absPath, backbone.inputSize));
    sourceLabels.push(entry.label ?? 0);
  }
  const targetPixels: Float64Array[] = [];
  for (const entry of targetListing.entries) {
    targetPixels.push(await loadImagePixels(entry.absPath, backbone.inputSize));
  }
  const classCount = Math.max(...sourceLabels) + 1;
  const report = fineTune(backbone, sourcePixels, sourceLabels, targetPixels, classCount, {
    ...DEFAULT_FINE_TUNE,
    epochs: Number(values.epochs),
    batchSize: Number(values["batch-size"]),
    learningRate: Number(values["learning-rate"]),
    seed: Number(values.seed),
  });
  atomicWrite(values.out, backboneToJson(backbone));
  console.log(
    `fine-tuned ${values.backbone} for ${values.epochs} epochs ` +
      `(loss ${report.epochLosses[0].toFixed(4)} -> ${report.epochLosses.at(-1)!.toFixed(4)}); ` +
      `weights cached at ${values.out}`,
  );
  return 0;
}

async function cmdMakeDemo(argv: string[]): Promise<number> {
  const { values } = parseArgs({
    args: argv,
    options: {
      "out-dir": { type: "string" },
      "per-class": { type: "string", default: "30" },
      seed: { type: "string", default: "0" },
    },
  });
  if (!values["out-dir"]) fail("make-demo requires --out-dir");
  await makeDemoDataset(values["out-dir"], {
    perClass: Number(values["per-class"]),
    seed: Number(values.seed),
  });
  console.log(`wrote demo digits dataset under ${values["out-dir"]}`);
  return 0;
}

function cmdValidate(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: { file: { type: "string" } },
  });
  if (!values.file) fail("validate requires --file");
  const file = readFeatureFile(values.file);
  console.log(
    JSON.stringify({
      rows: file.rows,
      cols: file.cols,
      has_labels: file.labels !== null,
      class_count: file.classCount,
    }),
  );
  return 0;
}

async function main(): Promise<number> {
  const [command, ...rest] = process.argv.slice(2);
  try {
    switch (command) {
      case "export":
        return await cmdExport(rest);
      case "fine-tune":
        return await cmdFineTune(rest);
      case "make-demo":
        return await cmdMakeDemo(rest);
      case "validate":
        return cmdValidate(rest);
      default:
        console.error(
          "usage: saf-export <export|fine-tune|make-demo|validate> [options]\n" +
            `backbones: ${Object.keys(BACKBONES).join(", ")}; taps: ${TAPS.join(", ")}`,
        );
        return 2;
    }
  } catch (error) {
    console.error(`error: ${error instanceof Error ? error.message : error}`);
    return 1;
  }
}

main().then((code) => {
  process.exitCode = code;
});

/**
 * Export job: image folder tree -> SAF1 feature file + JSON manifest.
 */

import { readFileSync } from "node:fs";
import { Backbone, Tap, backboneDigest, extract, loadBackbone, tapWidth } from "./backbone.js";
import { PREPROCESSING, datasetDigest, listDataset, loadImagePixels } from "./images.js";
import { atomicWrite, encodeFeatures } from "./saf.js";

export interface ExportJob {
  datasetRoot: string;
  backbone: string; // registry id
  tap?: Tap;
  batchSize?: number;
  outPath: string;
  labelMapPath?: string;
  weightsPath?: string; // fine-tuned weight cache; overrides the registry weights
}

export interface ExportReport {
  rows: number;
  cols: number;
  classCount: number;
  skipped: { index: number; relPath: string; reason: string }[];
  manifestPath: string;
  backboneDigest: string;
}

export interface ExportLogger {
  warn(message: string): void;
}

/** JSON with recursively sorted object keys (stable manifest bytes). */
function canonicalJson(value: unknown): string {
  const sortKeys = (node: unknown): unknown => {
    if (Array.isArray(node)) return node.map(sortKeys);
    if (node && typeof node === "object") {
      return Object.fromEntries(
        Object.entries(node as Record<string, unknown>)
          .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
          .map(([k, v]) => [k, sortKeys(v)]),
      );
    }
    return node;
  };
  return JSON.stringify(sortKeys(value), null, 2);
}

export async function runExport(
  job: ExportJob,
  logger: ExportLogger = console,
): Promise<ExportReport> {
  const tap: Tap = job.tap ?? "penultimate";
  const batchSize = job.batchSize ?? 32;
  if (batchSize < 1) throw new Error("batch size must be at least 1");

  let backbone: Backbone;
  if (job.weightsPath) {
    const { backboneFromJson } = await import("./backbone.js");
    backbone = backboneFromJson(readFileSync(job.weightsPath, "utf-8"));
    if (backbone.id !== job.backbone) {
      throw new Error(
        `weights file holds ${JSON.stringify(backbone.id)} but the job asks for ${JSON.stringify(job.backbone)}`,
      );
    }
  } else {
    backbone = loadBackbone(job.backbone);
  }
  const width = tapWidth(backbone, tap);

  const labelMap = job.labelMapPath
    ? (JSON.parse(readFileSync(job.labelMapPath, "utf-8")) as Record<string, number>)
    : undefined;
  const listing = listDataset(job.datasetRoot, labelMap);
  const labeled = listing.classNames.length > 0;
  const classCount = labeled
    ? Math.max(...listing.entries.map((e) => (e.label ?? 0))) + 1
    : 0;

  const rows: Float64Array[] = [];
  const labels: number[] = [];
  const skipped: ExportReport["skipped"] = [];

  for (let start = 0; start < listing.entries.length; start += batchSize) {
    const batch = listing.entries.slice(start, start + batchSize);
    for (let offset = 0; offset < batch.length; offset += 1) {
      const entry = batch[offset];
      const index = start + offset;
      let pixels: Float64Array;
      try {
        pixels = await loadImagePixels(entry.absPath, backbone.inputSize);
      } catch (error) {
        const reason = error instanceof Error ? error.message : String(error);
        logger.warn(`skipping unreadable image #${index} (${entry.relPath}): ${reason}`);
        skipped.push({ index, relPath: entry.relPath, reason });
        continue;
      }
      const features = extract(backbone, pixels, tap);
      if (features.length !== width) {
        throw new Error(
          `feature width ${features.length} does not match tap width ${width}; aborting`,
        );
      }
      rows.push(features);
      if (labeled) labels.push(entry.label ?? 0);
    }
  }
  if (rows.length === 0) throw new Error("every image failed to decode");

  const flat = new Float32Array(rows.length * width);
  for (let r = 0; r < rows.length; r += 1) flat.set(Float32Array.from(rows[r]), r * width);
  atomicWrite(
    job.outPath,
    encodeFeatures({
      rows: rows.length,
      cols: width,
      features: flat,
      labels: labeled ? Int32Array.from(labels) : null,
      classCount,
    }),
  );

  const manifestPath = `${job.outPath}.manifest.json`;
  const digest = backboneDigest(backbone);
  const manifest = {
    kind: "saf-export",
    backbone: backbone.id,
    backbone_digest: digest,
    fine_tuned: backbone.fineTuned,
    tap,
    feature_width: width,
    input_size: backbone.inputSize,
    preprocessing: {
      grayscale: PREPROCESSING.grayscale,
      resize_short_side_to: PREPROCESSING.resizeShortSideTo(backbone.inputSize),
      center_crop: PREPROCESSING.centerCrop(backbone.inputSize),
      normalize: PREPROCESSING.normalize,
    },
    dataset_root: job.datasetRoot,
    dataset_digest: datasetDigest(listing.entries),
    images: listing.entries.length,
    exported_rows: rows.length,
    skipped,
    class_names: listing.classNames,
    batch_size: batchSize,
  };
  atomicWrite(manifestPath, canonicalJson(manifest) + "\n");

  return {
    rows: rows.length,
    cols: width,
    classCount,
    skipped,
    manifestPath,
    backboneDigest: digest,
  };
}

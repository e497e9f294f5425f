/**
 * SAF1 feature-file writer/reader (little-endian):
 * magic "SAF1" | u32 version=1 | u64 rows | u64 cols | u8 hasLabels |
 * u32 classCount | rows*cols float32 row-major | rows int32 labels
 * (when flagged) | u64 XXH64(seed 0) of all preceding bytes.
 */

import { mkdtempSync, readFileSync, renameSync, rmSync, writeFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { xxh64 } from "./xxh64.js";

const MAGIC = new TextEncoder().encode("SAF1");
const VERSION = 1;

export interface FeatureFile {
  rows: number;
  cols: number;
  features: Float32Array; // row-major, rows*cols
  labels: Int32Array | null;
  classCount: number;
}

export function encodeFeatures(file: FeatureFile): Uint8Array {
  const { rows, cols, features, labels, classCount } = file;
  if (features.length !== rows * cols) {
    throw new Error(`feature buffer has ${features.length} values, expected ${rows * cols}`);
  }
  for (const v of features) {
    if (!Number.isFinite(v)) throw new Error("refusing to write non-finite features");
  }
  if (labels && labels.length !== rows) {
    throw new Error(`label buffer has ${labels.length} values, expected ${rows}`);
  }
  const headerLen = 4 + 4 + 8 + 8 + 1 + 4;
  const bodyLen = headerLen + rows * cols * 4 + (labels ? rows * 4 : 0);
  const out = new Uint8Array(bodyLen + 8);
  const view = new DataView(out.buffer);
  out.set(MAGIC, 0);
  view.setUint32(4, VERSION, true);
  view.setBigUint64(8, BigInt(rows), true);
  view.setBigUint64(16, BigInt(cols), true);
  view.setUint8(24, labels ? 1 : 0);
  view.setUint32(25, classCount, true);
  let offset = headerLen;
  for (let i = 0; i < features.length; i += 1, offset += 4) {
    view.setFloat32(offset, features[i], true);
  }
  if (labels) {
    for (let i = 0; i < labels.length; i += 1, offset += 4) {
      view.setInt32(offset, labels[i], true);
    }
  }
  view.setBigUint64(bodyLen, xxh64(out.subarray(0, bodyLen)), true);
  return out;
}

export function decodeFeatures(blob: Uint8Array): FeatureFile {
  if (blob.length < 16) throw new Error("file too short");
  const view = new DataView(blob.buffer, blob.byteOffset, blob.byteLength);
  for (let i = 0; i < 4; i += 1) {
    if (blob[i] !== MAGIC[i]) throw new Error("bad magic");
  }
  if (view.getUint32(4, true) !== VERSION) throw new Error("unsupported version");
  const rows = Number(view.getBigUint64(8, true));
  const cols = Number(view.getBigUint64(16, true));
  const hasLabels = view.getUint8(24) === 1;
  const classCount = view.getUint32(25, true);
  const headerLen = 29;
  const bodyLen = headerLen + rows * cols * 4 + (hasLabels ? rows * 4 : 0);
  if (blob.length !== bodyLen + 8) throw new Error("length mismatch (truncated or padded)");
  const stored = view.getBigUint64(bodyLen, true);
  const actual = xxh64(blob.subarray(0, bodyLen));
  if (stored !== actual) throw new Error("checksum mismatch");
  const features = new Float32Array(rows * cols);
  let offset = headerLen;
  for (let i = 0; i < features.length; i += 1, offset += 4) {
    features[i] = view.getFloat32(offset, true);
  }
  let labels: Int32Array | null = null;
  if (hasLabels) {
    labels = new Int32Array(rows);
    for (let i = 0; i < rows; i += 1, offset += 4) {
      labels[i] = view.getInt32(offset, true);
    }
  }
  return { rows, cols, features, labels, classCount };
}

/** Write bytes through a same-directory temp file and an atomic rename. */
export function atomicWrite(path: string, payload: Uint8Array | string): void {
  const dir = dirname(path);
  const tmpDir = mkdtempSync(join(dir, ".tmp-"));
  const tmp = join(tmpDir, "part");
  try {
    writeFileSync(tmp, payload);
    renameSync(tmp, path);
  } finally {
    rmSync(tmpDir, { recursive: true, force: true });
  }
}

export function writeFeatureFile(path: string, file: FeatureFile): void {
  atomicWrite(path, encodeFeatures(file));
}

export function readFeatureFile(path: string): FeatureFile {
  return decodeFeatures(new Uint8Array(readFileSync(path)));
}

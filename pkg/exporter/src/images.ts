/**
 * Dataset scanning and image preprocessing.
 *
 * Layout: class folders under the dataset root (folder name = class), or a
 * flat folder of images for unlabeled exports. Row order is always the
 * sorted relative path order, so re-exports are byte-identical.
 *
 * Preprocessing (recorded in the manifest): decode, grayscale, resize the
 * short side to inputSize + 4 (bilinear), center-crop inputSize, scale to
 * [0, 1], normalize to (x - 0.5) / 0.5.
 */

import { readFileSync, readdirSync, statSync } from "node:fs";
import { createHash } from "node:crypto";
import { join } from "node:path";
import { Jimp } from "jimp";

const IMAGE_EXTENSIONS = new Set([".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tiff"]);

export interface DatasetEntry {
  relPath: string;
  absPath: string;
  label: number | null;
  className: string | null;
}

export interface DatasetListing {
  entries: DatasetEntry[];
  classNames: string[]; // empty for unlabeled layouts
}

function isImage(name: string): boolean {
  const dot = name.lastIndexOf(".");
  return dot >= 0 && IMAGE_EXTENSIONS.has(name.slice(dot).toLowerCase());
}

/**
 * List a dataset root deterministically. `labelMap` (class folder name ->
 * index) overrides the default sorted-folder-name assignment.
 */
export function listDataset(root: string, labelMap?: Record<string, number>): DatasetListing {
  const names = readdirSync(root).sort();
  const classDirs = names.filter((name) => statSync(join(root, name)).isDirectory());
  if (classDirs.length === 0) {
    const files = names.filter(isImage);
    if (files.length === 0) throw new Error(`no images found under ${root}`);
    return {
      entries: files.map((name) => ({
        relPath: name,
        absPath: join(root, name),
        label: null,
        className: null,
      })),
      classNames: [],
    };
  }
  let assignment: Record<string, number>;
  if (labelMap) {
    for (const dir of classDirs) {
      if (!(dir in labelMap)) throw new Error(`label map has no entry for folder ${JSON.stringify(dir)}`);
    }
    assignment = labelMap;
  } else {
    assignment = Object.fromEntries(classDirs.map((dir, index) => [dir, index]));
  }
  const entries: DatasetEntry[] = [];
  for (const dir of classDirs) {
    const files = readdirSync(join(root, dir)).filter(isImage).sort();
    for (const name of files) {
      entries.push({
        relPath: `${dir}/${name}`,
        absPath: join(root, dir, name),
        label: assignment[dir],
        className: dir,
      });
    }
  }
  if (entries.length === 0) throw new Error(`no images found under ${root}`);
  entries.sort((a, b) => (a.relPath < b.relPath ? -1 : a.relPath > b.relPath ? 1 : 0));
  return { entries, classNames: classDirs };
}

export const PREPROCESSING = {
  grayscale: true,
  resizeShortSideTo: (inputSize: number) => inputSize + 4,
  centerCrop: (inputSize: number) => inputSize,
  normalize: "(x - 0.5) / 0.5",
};

/** Decode + preprocess one image into a normalized inputSize^2 vector. */
export async function loadImagePixels(path: string, inputSize: number): Promise<Float64Array> {
  const image = await Jimp.read(path);
  image.greyscale();
  const resizeTo = inputSize + 4;
  const scale = resizeTo / Math.min(image.width, image.height);
  image.resize({
    w: Math.max(resizeTo, Math.round(image.width * scale)),
    h: Math.max(resizeTo, Math.round(image.height * scale)),
  });
  const offX = Math.floor((image.width - inputSize) / 2);
  const offY = Math.floor((image.height - inputSize) / 2);
  const pixels = new Float64Array(inputSize * inputSize);
  const { data, width } = image.bitmap;
  for (let y = 0; y < inputSize; y += 1) {
    for (let x = 0; x < inputSize; x += 1) {
      const idx = ((y + offY) * width + (x + offX)) * 4;
      const gray = data[idx] / 255;
      pixels[y * inputSize + x] = (gray - 0.5) / 0.5;
    }
  }
  return pixels;
}

/** SHA-256 over the sorted relative paths and file contents. */
export function datasetDigest(entries: DatasetEntry[]): string {
  const hash = createHash("sha256");
  for (const entry of entries) {
    hash.update(entry.relPath);
    hash.update("\0");
    hash.update(readFileSync(entry.absPath));
  }
  return hash.digest("hex");
}

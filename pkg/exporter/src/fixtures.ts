/**
 * Seeded digits-style demo dataset: 10 glyph classes rendered into 32x32
 * grayscale PNGs, with a configurable domain shift (contrast/brightness
 * change plus a fixed spatial offset) between the source and target trees.
 * Used by the integration tests and the `make-demo` CLI command.
 */

import { mkdirSync } from "node:fs";
import { join } from "node:path";
import { Jimp } from "jimp";
import { mulberry32, type Rand } from "./prng.js";

const GLYPHS: string[][] = [
  [".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."],
  ["..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."],
  [".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"],
  [".###.", "#...#", "....#", "..##.", "....#", "#...#", ".###."],
  ["...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."],
  ["#####", "#....", "####.", "....#", "....#", "#...#", ".###."],
  [".###.", "#....", "####.", "#...#", "#...#", "#...#", ".###."],
  ["#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."],
  [".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."],
  [".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."],
];

export interface DomainStyle {
  ink: number; // glyph intensity in [0, 1]
  paper: number; // background intensity in [0, 1]
  offsetX: number; // fixed translation of the glyph, pixels
  offsetY: number;
  noise: number; // uniform pixel noise amplitude
  jitter: number; // per-image random placement jitter, pixels
}

export const SOURCE_STYLE: DomainStyle = {
  ink: 0.95,
  paper: 0.05,
  offsetX: 0,
  offsetY: 0,
  noise: 0.06,
  jitter: 2,
};

// Shifted acquisition conditions: dimmer ink on brighter paper plus a
// consistent placement offset.
export const TARGET_STYLE: DomainStyle = {
  ink: 0.75,
  paper: 0.2,
  offsetX: 3,
  offsetY: 2,
  noise: 0.06,
  jitter: 2,
};

const SIZE = 32;
const SCALE = 3; // glyph cell -> pixels (15 x 21 glyph box)

/** Render one digit as a SIZE x SIZE grayscale bitmap in [0, 1]. */
export function renderDigit(digit: number, style: DomainStyle, rand: Rand): Float64Array {
  const glyph = GLYPHS[digit];
  const pixels = new Float64Array(SIZE * SIZE).fill(style.paper);
  const glyphW = 5 * SCALE;
  const glyphH = 7 * SCALE;
  const jx = Math.round((rand() * 2 - 1) * style.jitter);
  const jy = Math.round((rand() * 2 - 1) * style.jitter);
  const originX = Math.floor((SIZE - glyphW) / 2) + style.offsetX + jx;
  const originY = Math.floor((SIZE - glyphH) / 2) + style.offsetY + jy;
  for (let gy = 0; gy < 7; gy += 1) {
    for (let gx = 0; gx < 5; gx += 1) {
      if (glyph[gy][gx] !== "#") continue;
      for (let dy = 0; dy < SCALE; dy += 1) {
        for (let dx = 0; dx < SCALE; dx += 1) {
          const x = originX + gx * SCALE + dx;
          const y = originY + gy * SCALE + dy;
          if (x >= 0 && x < SIZE && y >= 0 && y < SIZE) {
            pixels[y * SIZE + x] = style.ink;
          }
        }
      }
    }
  }
  for (let i = 0; i < pixels.length; i += 1) {
    const noisy = pixels[i] + (rand() * 2 - 1) * style.noise;
    pixels[i] = Math.min(1, Math.max(0, noisy));
  }
  return pixels;
}

export async function writeBitmapPng(path: string, pixels: Float64Array): Promise<void> {
  const image = new Jimp({ width: SIZE, height: SIZE, color: 0x000000ff });
  for (let y = 0; y < SIZE; y += 1) {
    for (let x = 0; x < SIZE; x += 1) {
      const v = Math.round(pixels[y * SIZE + x] * 255);
      const color = ((v << 24) | (v << 16) | (v << 8) | 0xff) >>> 0;
      image.setPixelColor(color, x, y);
    }
  }
  await image.write(path as `${string}.${string}`);
}

export interface DemoOptions {
  perClass: number;
  seed: number;
}

/** Write `<outDir>/source/<digit>/...` and `<outDir>/target/<digit>/...`. */
export async function makeDemoDataset(
  outDir: string,
  options: DemoOptions = { perClass: 30, seed: 0 },
): Promise<void> {
  const domains: [string, DomainStyle][] = [
    ["source", SOURCE_STYLE],
    ["target", TARGET_STYLE],
  ];
  for (const [domain, style] of domains) {
    const rand = mulberry32(options.seed * 1000 + (domain === "source" ? 1 : 2));
    for (let digit = 0; digit < 10; digit += 1) {
      const dir = join(outDir, domain, String(digit));
      mkdirSync(dir, { recursive: true });
      for (let i = 0; i < options.perClass; i += 1) {
        const pixels = renderDigit(digit, style, rand);
        await writeBitmapPng(join(dir, `img_${String(i).padStart(4, "0")}.png`), pixels);
      }
    }
  }
}

import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";
import { decodeFeatures, encodeFeatures, readFeatureFile, writeFeatureFile } from "../src/saf.js";

function sample() {
  return {
    rows: 3,
    cols: 4,
    features: Float32Array.from({ length: 12 }, (_, i) => i / 7),
    labels: Int32Array.from([0, 2, 1]),
    classCount: 3,
  };
}

describe("SAF1 encoding", () => {
  it("round-trips bitwise", () => {
    const blob = encodeFeatures(sample());
    const decoded = decodeFeatures(blob);
    expect(decoded.rows).toBe(3);
    expect(decoded.cols).toBe(4);
    expect(Array.from(decoded.features)).toEqual(Array.from(sample().features));
    expect(Array.from(decoded.labels!)).toEqual([0, 2, 1]);
    expect(decoded.classCount).toBe(3);
    expect(Array.from(encodeFeatures(decoded))).toEqual(Array.from(blob));
  });

  it("starts with the SAF1 magic and version 1", () => {
    const blob = encodeFeatures(sample());
    expect(Array.from(blob.subarray(0, 4))).toEqual([0x53, 0x41, 0x46, 0x31]);
    expect(new DataView(blob.buffer).getUint32(4, true)).toBe(1);
  });

  it("supports unlabeled files", () => {
    const file = { ...sample(), labels: null, classCount: 0 };
    const decoded = decodeFeatures(encodeFeatures(file));
    expect(decoded.labels).toBeNull();
  });

  it("rejects corruption", () => {
    const blob = encodeFeatures(sample());
    const badMagic = blob.slice();
    badMagic[0] = 0x58;
    expect(() => decodeFeatures(badMagic)).toThrow(/magic/);
    expect(() => decodeFeatures(blob.subarray(0, blob.length - 5))).toThrow(/length/);
    const flipped = blob.slice();
    flipped[31] ^= 0xff;
    expect(() => decodeFeatures(flipped)).toThrow(/checksum/);
  });

  it("rejects non-finite features", () => {
    const file = sample();
    file.features[0] = Number.NaN;
    expect(() => encodeFeatures(file)).toThrow(/non-finite/);
  });

  it("writes files atomically and reads them back", () => {
    const dir = mkdtempSync(join(tmpdir(), "saf-"));
    const path = join(dir, "x.saf");
    writeFeatureFile(path, sample());
    const loaded = readFeatureFile(path);
    expect(loaded.rows).toBe(3);
    // identical bytes on rewrite
    const first = readFileSync(path);
    writeFeatureFile(path, loaded);
    expect(readFileSync(path).equals(first)).toBe(true);
  });
});

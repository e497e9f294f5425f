export {
  BACKBONES,
  TAPS,
  backboneDigest,
  backboneFromJson,
  backboneToJson,
  extract,
  fineTune,
  loadBackbone,
  tapWidth,
} from "./backbone.js";
export type { Backbone, FineTuneOptions, Tap } from "./backbone.js";
export { runExport } from "./export.js";
export type { ExportJob, ExportReport } from "./export.js";
export { datasetDigest, listDataset, loadImagePixels } from "./images.js";
export { makeDemoDataset, renderDigit, SOURCE_STYLE, TARGET_STYLE } from "./fixtures.js";
export { decodeFeatures, encodeFeatures, readFeatureFile, writeFeatureFile } from "./saf.js";
export type { FeatureFile } from "./saf.js";
export { xxh64 } from "./xxh64.js";

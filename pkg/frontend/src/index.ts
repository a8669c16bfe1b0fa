export { BACKBONES, getBackbone, listBackbones, normalizePixels } from './backbones'
export type { BackboneSpec, Preprocessing } from './backbones'
export { encodeFsf, readFsf, writeFsf, FSF_MAGIC, FSF_VERSION } from './fsf'
export type { FsfRecord, FsfStore } from './fsf'
export { decodeImage, listClassDirs, rgbaToRgbFloat } from './images'
export { buildStandInTrunk, loadLocalModel, saveModelToDir } from './model'
export { extract } from './extractor'
export type { ExtractionJob, ExtractionSummary } from './extractor'

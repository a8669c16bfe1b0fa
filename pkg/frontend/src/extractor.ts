/**
 * Feature extraction: labelled image tree -> frozen trunk -> pooled
 * embeddings -> one FSF file.
 */

import * as tf from '@tensorflow/tfjs'
import { BackboneSpec, getBackbone, normalizePixels } from './backbones'
import { FsfRecord, writeFsf } from './fsf'
import { decodeImage, listClassDirs, rgbaToRgbFloat } from './images'
import { loadLocalModel } from './model'

export interface ExtractionJob {
  /** one subdirectory per class */
  imagesDir: string
  /** backbone identifier, see list-backbones */
  backbone: string
  /** output FSF path */
  outPath: string
  batchSize?: number
  /** directory with tfjs model artifacts for the chosen backbone */
  modelDir?: string
  /** tfjs backend hint, e.g. 'cpu' */
  deviceHint?: string
}

export interface ExtractionSummary {
  backbone: string
  dim: number
  classes: string[]
  records: number
  /** unreadable images that were skipped, with the reason */
  skipped: Array<{ path: string; reason: string }>
}

interface PreparedImage {
  classIndex: number
  imageId: number
  pixels: Float32Array // normalized, inputSize*inputSize*3
}

function prepare(filePath: string, spec: BackboneSpec): Float32Array {
  const raw = decodeImage(filePath)
  const rgb = rgbaToRgbFloat(raw)
  const resized = tf.tidy(() => {
    const t = tf.tensor3d(rgb, [raw.height, raw.width, 3])
    const out = tf.image.resizeBilinear(t, [spec.inputSize, spec.inputSize])
    return out.dataSync() as Float32Array
  })
  normalizePixels(resized, spec.preprocessing)
  return resized
}

async function embedBatch(
  model: tf.LayersModel | tf.GraphModel,
  batch: PreparedImage[],
  spec: BackboneSpec,
): Promise<Float32Array[]> {
  const n = batch.length
  const size = spec.inputSize
  const input = new Float32Array(n * size * size * 3)
  batch.forEach((img, i) => input.set(img.pixels, i * size * size * 3))
  const vectors = tf.tidy(() => {
    const x = tf.tensor4d(input, [n, size, size, 3])
    let out = model.predict(x) as tf.Tensor
    if (out.rank === 4) {
      out = tf.mean(out, [1, 2]) // global average pool a spatial trunk
    }
    if (out.rank !== 2) {
      throw new Error(`unexpected model output rank ${out.rank}`)
    }
    return out.arraySync() as number[][]
  })
  return vectors.map((row) => Float32Array.from(row))
}

export async function extract(job: ExtractionJob): Promise<ExtractionSummary> {
  const spec = getBackbone(job.backbone)
  if (job.deviceHint) await tf.setBackend(job.deviceHint)
  if (!job.modelDir) {
    throw new Error(
      `no --model-dir given for '${spec.id}'; place the tfjs artifacts of ` +
        `${spec.id} (model.json + weight shards) in a directory and pass it`,
    )
  }
  const { model, version } = await loadLocalModel(job.modelDir)
  const classDirs = listClassDirs(job.imagesDir)
  const batchSize = Math.max(1, job.batchSize ?? 16)

  const skipped: Array<{ path: string; reason: string }> = []
  const records: FsfRecord[] = []
  let dim = -1

  let batch: PreparedImage[] = []
  const flush = async () => {
    if (batch.length === 0) return
    const vectors = await embedBatch(model, batch, spec)
    for (let i = 0; i < batch.length; i++) {
      const features = vectors[i]
      if (dim === -1) {
        dim = features.length
        if (dim !== spec.dim) {
          throw new Error(
            `model in '${job.modelDir}' emits ${dim} features but ` +
              `${spec.id} is declared at ${spec.dim}; wrong model directory?`,
          )
        }
      }
      records.push({
        classIndex: batch[i].classIndex,
        imageId: batch[i].imageId,
        features,
      })
    }
    batch = []
  }

  for (let classIndex = 0; classIndex < classDirs.length; classIndex++) {
    const dir = classDirs[classIndex]
    let imageId = 0
    for (const file of dir.files) {
      let pixels: Float32Array
      try {
        pixels = prepare(file, spec)
      } catch (err) {
        const reason = err instanceof Error ? err.message : String(err)
        console.warn(`skipping unreadable image ${file}: ${reason}`)
        skipped.push({ path: file, reason })
        continue
      }
      batch.push({ classIndex, imageId, pixels })
      imageId += 1
      if (batch.length >= batchSize) await flush()
    }
    await flush() // record order stays sorted regardless of batch cuts
  }

  if (records.length === 0) throw new Error('no readable images found')
  writeFsf(
    {
      backboneName: `${spec.id}@${version}`,
      dim,
      classNames: classDirs.map((c) => c.name),
      records,
    },
    job.outPath,
  )
  return {
    backbone: spec.id,
    dim,
    classes: classDirs.map((c) => c.name),
    records: records.length,
    skipped,
  }
}

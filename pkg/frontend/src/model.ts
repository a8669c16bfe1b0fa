/**
 * Local tfjs model IO.
 *
 * The public model zoos are fetched over the network, which an extraction
 * box may not have; models are therefore loaded from a local directory
 * holding the standard tfjs artifacts (model.json + weight shards), the
 * format `tensorflowjs_converter` emits for both layers and graph models.
 */

import * as fs from 'fs'
import * as path from 'path'
import * as tf from '@tensorflow/tfjs'

export interface LoadedModel {
  model: tf.LayersModel | tf.GraphModel
  /** version string recorded in the FSF backbone name */
  version: string
}

function readArtifacts(dir: string): tf.io.ModelArtifacts {
  const manifestPath = path.join(dir, 'model.json')
  if (!fs.existsSync(manifestPath)) {
    throw new Error(`no model.json under '${dir}'`)
  }
  const manifest = JSON.parse(fs.readFileSync(manifestPath, 'utf-8'))
  const weightSpecs: tf.io.WeightsManifestEntry[] = []
  const shards: Buffer[] = []
  for (const group of manifest.weightsManifest ?? []) {
    weightSpecs.push(...group.weights)
    for (const shard of group.paths) {
      shards.push(fs.readFileSync(path.join(dir, shard)))
    }
  }
  const weightBlob = Buffer.concat(shards)
  return {
    modelTopology: manifest.modelTopology,
    format: manifest.format,
    generatedBy: manifest.generatedBy,
    convertedBy: manifest.convertedBy,
    weightSpecs,
    weightData: weightBlob.buffer.slice(
      weightBlob.byteOffset,
      weightBlob.byteOffset + weightBlob.byteLength,
    ),
  }
}

export async function loadLocalModel(dir: string): Promise<LoadedModel> {
  const artifacts = readArtifacts(dir)
  const handler = tf.io.fromMemory(artifacts)
  const model =
    artifacts.format === 'graph-model'
      ? await tf.loadGraphModel(handler)
      : await tf.loadLayersModel(handler)
  const versionFile = path.join(dir, 'zoo.json')
  let version = 'local'
  if (fs.existsSync(versionFile)) {
    const meta = JSON.parse(fs.readFileSync(versionFile, 'utf-8'))
    if (typeof meta.version === 'string') version = meta.version
  }
  return { model, version }
}

export async function saveModelToDir(model: tf.LayersModel, dir: string): Promise<void> {
  fs.mkdirSync(dir, { recursive: true })
  await model.save(
    tf.io.withSaveHandler(async (artifacts) => {
      const weightData = artifacts.weightData as ArrayBuffer
      fs.writeFileSync(path.join(dir, 'weights.bin'), Buffer.from(weightData))
      const manifest = {
        format: artifacts.format,
        generatedBy: artifacts.generatedBy,
        convertedBy: artifacts.convertedBy,
        modelTopology: artifacts.modelTopology,
        weightsManifest: [{ paths: ['weights.bin'], weights: artifacts.weightSpecs }],
      }
      fs.writeFileSync(path.join(dir, 'model.json'), JSON.stringify(manifest))
      return { modelArtifactsInfo: { dateSaved: new Date(), modelTopologyType: 'JSON' } }
    }),
  )
}

/** deterministic tiny PRNG for reproducible stand-in weights */
function mulberry32(seed: number): () => number {
  let a = seed >>> 0
  return () => {
    a = (a + 0x6d2b79f5) >>> 0
    let t = a
    t = Math.imul(t ^ (t >>> 15), t | 1)
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61)
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }
}

/**
 * A small stand-in trunk with the same contract as a real backbone
 * (image in, 1x1xD embedding out after pooling): average-pool to an 8x8
 * grid, a 1x1 conv to D channels, ReLU. Weights are seeded and fixed, so
 * extractions are reproducible. Used by the test-suite and for offline
 * pipeline dry-runs; it is not an ImageNet model.
 */
export function buildStandInTrunk(inputSize: number, dim: number, seed = 7): tf.LayersModel {
  const pool = Math.floor(inputSize / 8)
  const model = tf.sequential({
    layers: [
      tf.layers.averagePooling2d({
        inputShape: [inputSize, inputSize, 3],
        poolSize: pool,
        strides: pool,
      }),
      tf.layers.conv2d({ filters: dim, kernelSize: 1, activation: 'relu', useBias: true }),
      tf.layers.globalAveragePooling2d({}),
    ],
  })
  const rand = mulberry32(seed)
  const conv = model.layers[1]
  const [kernel, bias] = conv.getWeights()
  const kernelData = new Float32Array(kernel.size)
  for (let i = 0; i < kernelData.length; i++) kernelData[i] = (rand() - 0.5) * 0.2
  const biasData = new Float32Array(bias.size)
  for (let i = 0; i < biasData.length; i++) biasData[i] = rand() * 0.01
  conv.setWeights([
    tf.tensor(kernelData, kernel.shape as number[]),
    tf.tensor(biasData, bias.shape as number[]),
  ])
  return model
}

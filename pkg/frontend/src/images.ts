/**
 * Labelled image directory walking and decoding.
 *
 * The image root holds one subdirectory per class; class indices follow the
 * sorted directory order and image ids the sorted filename order within a
 * class, so two extractions of the same tree are joinable key-by-key.
 */

import * as fs from 'fs'
import * as path from 'path'
import * as jpeg from 'jpeg-js'
import { PNG } from 'pngjs'

export interface RawImage {
  width: number
  height: number
  /** interleaved RGBA, 8-bit */
  data: Uint8Array
}

export interface ClassDir {
  name: string
  files: string[]
}

const IMAGE_EXTENSIONS = new Set(['.jpg', '.jpeg', '.png'])

export function listClassDirs(root: string): ClassDir[] {
  if (!fs.existsSync(root) || !fs.statSync(root).isDirectory()) {
    throw new Error(`image root '${root}' is not a directory`)
  }
  const classes = fs
    .readdirSync(root)
    .filter((entry) => fs.statSync(path.join(root, entry)).isDirectory())
    .sort()
  if (classes.length === 0) throw new Error(`image root '${root}' has no class directories`)
  return classes.map((name) => {
    const files = fs
      .readdirSync(path.join(root, name))
      .filter((f) => IMAGE_EXTENSIONS.has(path.extname(f).toLowerCase()))
      .sort()
      .map((f) => path.join(root, name, f))
    if (files.length === 0) throw new Error(`class directory '${name}' holds no images`)
    return { name, files }
  })
}

export function decodeImage(filePath: string): RawImage {
  const ext = path.extname(filePath).toLowerCase()
  const buf = fs.readFileSync(filePath)
  if (ext === '.jpg' || ext === '.jpeg') {
    const out = jpeg.decode(buf, { formatAsRGBA: true, useTArray: true })
    return { width: out.width, height: out.height, data: out.data }
  }
  if (ext === '.png') {
    const out = PNG.sync.read(buf)
    return { width: out.width, height: out.height, data: out.data }
  }
  throw new Error(`unsupported image type '${ext}'`)
}

/**
 * RGBA bytes -> interleaved RGB float array (0..255), alpha dropped.
 */
export function rgbaToRgbFloat(img: RawImage): Float32Array {
  const n = img.width * img.height
  const rgb = new Float32Array(n * 3)
  for (let i = 0; i < n; i++) {
    rgb[3 * i] = img.data[4 * i]
    rgb[3 * i + 1] = img.data[4 * i + 1]
    rgb[3 * i + 2] = img.data[4 * i + 2]
  }
  return rgb
}

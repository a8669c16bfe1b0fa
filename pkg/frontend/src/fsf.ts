/**
 * FSF feature-file writer/reader (the classifier engine's input format).
 *
 * Layout, all integers little-endian:
 *   bytes 0-3  magic "FSF1"
 *   u32        version = 1
 *   u16        backbone name length + UTF-8 bytes
 *   u32        class count; per class: u16 length + UTF-8 bytes
 *   u32        feature dim D
 *   u32        record count; per record: u32 class_index, u32 image_id,
 *              D x f32 (IEEE-754 LE)
 */

import * as fs from 'fs'

export const FSF_MAGIC = 'FSF1'
export const FSF_VERSION = 1

export interface FsfRecord {
  classIndex: number
  imageId: number
  features: Float32Array
}

export interface FsfStore {
  backboneName: string
  dim: number
  classNames: string[]
  records: FsfRecord[]
}

function packStr(text: string): Buffer {
  const raw = Buffer.from(text, 'utf-8')
  if (raw.length > 0xffff) throw new Error(`name too long: ${text.slice(0, 32)}...`)
  const out = Buffer.alloc(2 + raw.length)
  out.writeUInt16LE(raw.length, 0)
  raw.copy(out, 2)
  return out
}

export function encodeFsf(store: FsfStore): Buffer {
  const { backboneName, dim, classNames, records } = store
  if (dim <= 0) throw new Error(`feature dim must be positive, got ${dim}`)
  if (classNames.length === 0) throw new Error('store has no classes')
  const seen = new Set<string>()
  for (const rec of records) {
    if (rec.classIndex < 0 || rec.classIndex >= classNames.length) {
      throw new Error(`class index ${rec.classIndex} out of range`)
    }
    if (rec.features.length !== dim) {
      throw new Error(
        `record (${rec.classIndex}, ${rec.imageId}): feature length ` +
          `${rec.features.length} != declared dim ${dim}`,
      )
    }
    for (const v of rec.features) {
      if (!Number.isFinite(v)) {
        throw new Error(`record (${rec.classIndex}, ${rec.imageId}) holds NaN/Inf`)
      }
    }
    const key = `${rec.classIndex}:${rec.imageId}`
    if (seen.has(key)) throw new Error(`duplicate record key (${key})`)
    seen.add(key)
  }

  const parts: Buffer[] = []
  parts.push(Buffer.from(FSF_MAGIC, 'ascii'))
  const version = Buffer.alloc(4)
  version.writeUInt32LE(FSF_VERSION, 0)
  parts.push(version)
  parts.push(packStr(backboneName))
  const nClasses = Buffer.alloc(4)
  nClasses.writeUInt32LE(classNames.length, 0)
  parts.push(nClasses)
  for (const name of classNames) parts.push(packStr(name))
  const head = Buffer.alloc(8)
  head.writeUInt32LE(dim, 0)
  head.writeUInt32LE(records.length, 4)
  parts.push(head)
  for (const rec of records) {
    const recHead = Buffer.alloc(8)
    recHead.writeUInt32LE(rec.classIndex, 0)
    recHead.writeUInt32LE(rec.imageId, 4)
    parts.push(recHead)
    // Float32Array is little-endian on every platform node runs on in
    // practice; write explicitly anyway so the format is unambiguous
    const payload = Buffer.alloc(4 * dim)
    for (let i = 0; i < dim; i++) payload.writeFloatLE(rec.features[i], 4 * i)
    parts.push(payload)
  }
  return Buffer.concat(parts)
}

export function writeFsf(store: FsfStore, path: string): void {
  fs.writeFileSync(path, encodeFsf(store))
}

export function readFsf(path: string): FsfStore {
  const buf = fs.readFileSync(path)
  let pos = 0
  const take = (n: number): Buffer => {
    if (pos + n > buf.length) {
      throw new Error(`truncated file: need ${n} bytes at offset ${pos}`)
    }
    const out = buf.subarray(pos, pos + n)
    pos += n
    return out
  }
  const u16 = () => take(2).readUInt16LE(0)
  const u32 = () => take(4).readUInt32LE(0)
  const str = () => take(u16()).toString('utf-8')

  if (take(4).toString('ascii') !== FSF_MAGIC) throw new Error('bad magic')
  const version = u32()
  if (version !== FSF_VERSION) throw new Error(`unsupported version ${version}`)
  const backboneName = str()
  const classNames: string[] = []
  const nClasses = u32()
  for (let i = 0; i < nClasses; i++) classNames.push(str())
  const dim = u32()
  const nRecords = u32()
  const records: FsfRecord[] = []
  for (let r = 0; r < nRecords; r++) {
    const classIndex = u32()
    const imageId = u32()
    const payload = take(4 * dim)
    const features = new Float32Array(dim)
    for (let i = 0; i < dim; i++) features[i] = payload.readFloatLE(4 * i)
    records.push({ classIndex, imageId, features })
  }
  if (pos !== buf.length) throw new Error('trailing bytes after last record')
  return { backboneName, dim, classNames, records }
}

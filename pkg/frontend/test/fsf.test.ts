import { execFileSync } from 'child_process'
import * as path from 'path'
import { describe, expect, it } from 'vitest'
import { encodeFsf, readFsf, writeFsf, FsfStore } from '../src/fsf'
import { tmpDir } from './helpers'

function minimalStore(): FsfStore {
  return {
    backboneName: 'bb',
    dim: 4,
    classNames: ['only'],
    records: [{ classIndex: 0, imageId: 0, features: Float32Array.from([1.5, -2, 0.25, 3]) }],
  }
}

describe('fsf writer', () => {
  it('emits the exact binary layout', () => {
    const buf = encodeFsf(minimalStore())
    expect(buf.subarray(0, 4).toString('ascii')).toBe('FSF1')
    expect(buf.readUInt32LE(4)).toBe(1) // version
    // magic + version + name + class table + dim + count + record header
    const header = 4 + 4 + (2 + 2) + 4 + (2 + 4) + 4 + 4 + (4 + 4)
    expect(buf.length).toBe(header + 16)
    expect(buf.readFloatLE(buf.length - 16)).toBeCloseTo(1.5, 6)
    expect(buf.readFloatLE(buf.length - 4)).toBeCloseTo(3, 6)
  })

  it('round-trips bit-exactly', () => {
    const dir = tmpDir('fsf-')
    const file = path.join(dir, 'x.fsf')
    const store: FsfStore = {
      backboneName: 'resnet50@local',
      dim: 3,
      classNames: ['a', 'b'],
      records: [
        { classIndex: 0, imageId: 0, features: Float32Array.from([0.1, 0.2, 0.3]) },
        { classIndex: 1, imageId: 5, features: Float32Array.from([-1, 2, 7.5]) },
      ],
    }
    writeFsf(store, file)
    const loaded = readFsf(file)
    expect(loaded.backboneName).toBe(store.backboneName)
    expect(loaded.classNames).toEqual(store.classNames)
    expect(loaded.dim).toBe(3)
    expect(Buffer.from(loaded.records[1].features.buffer)).toEqual(
      Buffer.from(store.records[1].features.buffer),
    )
  })

  it('rejects invariant violations', () => {
    const bad = minimalStore()
    bad.records[0].features = Float32Array.from([1, 2]) // wrong length
    expect(() => encodeFsf(bad)).toThrow(/feature length/)
    const nan = minimalStore()
    nan.records[0].features[1] = NaN
    expect(() => encodeFsf(nan)).toThrow(/NaN/)
    const dup = minimalStore()
    dup.records.push({ ...dup.records[0] })
    expect(() => encodeFsf(dup)).toThrow(/duplicate/)
  })

  it('is accepted by the classifier engine validate command', () => {
    const dir = tmpDir('fsf-')
    const file = path.join(dir, 'emitted.fsf')
    writeFsf(minimalStore(), file)
    const out = execFileSync('python3', ['-m', 'fewshot_stack', 'validate', file], {
      encoding: 'utf-8',
    })
    expect(out).toContain('dim=4')
    expect(out).toContain('records=1')
  })
})

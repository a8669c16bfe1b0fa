import * as fs from 'fs'
import * as os from 'os'
import * as path from 'path'
import { PNG } from 'pngjs'

export function tmpDir(prefix: string): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), prefix))
}

/** deterministic PRNG so fixture images are stable across runs */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0
  return () => {
    a = (a + 0x6d2b79f5) >>> 0
    let t = a
    t = Math.imul(t ^ (t >>> 15), t | 1)
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61)
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }
}

export function writePng(
  filePath: string,
  width: number,
  height: number,
  base: [number, number, number],
  seed: number,
  noise = 40,
): void {
  const png = new PNG({ width, height })
  const rand = mulberry32(seed)
  for (let i = 0; i < width * height; i++) {
    for (let c = 0; c < 3; c++) {
      const v = base[c] + (rand() - 0.5) * noise
      png.data[4 * i + c] = Math.max(0, Math.min(255, Math.round(v)))
    }
    png.data[4 * i + 3] = 255
  }
  fs.writeFileSync(filePath, PNG.sync.write(png))
}

const CLASS_COLORS: Array<[number, number, number]> = [
  [200, 40, 40],
  [40, 200, 40],
  [40, 40, 200],
  [200, 200, 40],
  [40, 200, 200],
]

/** build a labelled image tree: one directory per class, distinct colours */
export function makeImageTree(
  root: string,
  nClasses: number,
  perClass: number,
  size = 48,
): string {
  for (let ci = 0; ci < nClasses; ci++) {
    const dir = path.join(root, `class_${ci}`)
    fs.mkdirSync(dir, { recursive: true })
    for (let i = 0; i < perClass; i++) {
      writePng(
        path.join(dir, `img_${String(i).padStart(3, '0')}.png`),
        size,
        size,
        CLASS_COLORS[ci % CLASS_COLORS.length],
        1000 * ci + i,
      )
    }
  }
  return root
}

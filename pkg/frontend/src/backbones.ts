/**
 * The supported frozen backbones: identifiers, embedding dims, native input
 * sizes, frozen parameter counts of the convolutional trunks, and each
 * family's published input normalization.
 */

export type Preprocessing = 'caffe' | 'tf' | 'torch' | 'none'

export interface BackboneSpec {
  /** canonical identifier used on the CLI and in FSF backbone names */
  id: string
  /** pooled embedding length D (the model zoo's notop output channels) */
  dim: number
  /** native square input size the trunk was trained at */
  inputSize: number
  /** approximate frozen parameter count of the conv trunk */
  frozenParams: number
  /**
   * input normalization convention:
   *  - caffe: RGB->BGR, subtract ImageNet channel means
   *  - tf:    scale to [-1, 1]
   *  - torch: scale to [0, 1], normalize by ImageNet mean/std
   *  - none:  raw 0..255 (normalization layers live inside the model)
   */
  preprocessing: Preprocessing
}

export const BACKBONES: BackboneSpec[] = [
  { id: 'resnet50', dim: 2048, inputSize: 224, frozenParams: 23_587_712, preprocessing: 'caffe' },
  { id: 'resnet50v2', dim: 2048, inputSize: 224, frozenParams: 23_564_800, preprocessing: 'tf' },
  { id: 'densenet121', dim: 1024, inputSize: 224, frozenParams: 7_037_504, preprocessing: 'torch' },
  { id: 'densenet201', dim: 1920, inputSize: 224, frozenParams: 18_321_984, preprocessing: 'torch' },
  { id: 'inception-v3', dim: 2048, inputSize: 299, frozenParams: 21_802_784, preprocessing: 'tf' },
  { id: 'xception', dim: 2048, inputSize: 299, frozenParams: 20_861_480, preprocessing: 'tf' },
  { id: 'efficientnet-b5', dim: 2048, inputSize: 456, frozenParams: 28_513_527, preprocessing: 'none' },
  { id: 'efficientnet-v2s', dim: 1280, inputSize: 384, frozenParams: 20_331_360, preprocessing: 'none' },
]

export function getBackbone(id: string): BackboneSpec {
  const spec = BACKBONES.find((b) => b.id === id)
  if (!spec) {
    const known = BACKBONES.map((b) => b.id).join(', ')
    throw new Error(`unknown backbone '${id}' (supported: ${known})`)
  }
  return spec
}

/** rows for the list-backbones command */
export function listBackbones(): Array<{ id: string; dim: number; inputSize: number; frozenParams: number }> {
  return BACKBONES.map(({ id, dim, inputSize, frozenParams }) => ({ id, dim, inputSize, frozenParams }))
}

const CAFFE_BGR_MEANS = [103.939, 116.779, 123.68]
const TORCH_MEAN = [0.485, 0.456, 0.406]
const TORCH_STD = [0.229, 0.224, 0.225]

/**
 * Apply a backbone's normalization to an interleaved RGB float array
 * (values 0..255), in place.
 */
export function normalizePixels(rgb: Float32Array, mode: Preprocessing): void {
  if (mode === 'none') return
  for (let i = 0; i < rgb.length; i += 3) {
    const r = rgb[i]
    const g = rgb[i + 1]
    const b = rgb[i + 2]
    if (mode === 'caffe') {
      rgb[i] = b - CAFFE_BGR_MEANS[0]
      rgb[i + 1] = g - CAFFE_BGR_MEANS[1]
      rgb[i + 2] = r - CAFFE_BGR_MEANS[2]
    } else if (mode === 'tf') {
      rgb[i] = r / 127.5 - 1
      rgb[i + 1] = g / 127.5 - 1
      rgb[i + 2] = b / 127.5 - 1
    } else {
      rgb[i] = (r / 255 - TORCH_MEAN[0]) / TORCH_STD[0]
      rgb[i + 1] = (g / 255 - TORCH_MEAN[1]) / TORCH_STD[1]
      rgb[i + 2] = (b / 255 - TORCH_MEAN[2]) / TORCH_STD[2]
    }
  }
}

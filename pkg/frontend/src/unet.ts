/**
 * Encoder-decoder network for one-step damage-map prediction plus a scalar
 * stress head, and the plain convolutional stress regressor.
 *
 * Input: [n, n, 4] maps (elastic modulus, tensile strength, fracture
 * energy, current damage). The encoder opens at 16 feature maps and widens
 * through 32, 128, 256 to 512 while halving the spatial size five times
 * (333 -> 167 -> 84 -> 42 -> 21 -> 11). The decoder mirrors it with
 * transposed convolutions (cropped by one row/column where the encoder
 * size was odd) and skip concatenations. The stress head flattens the
 * bottleneck, appends the current (stress, strain) pair and applies dense
 * layers of 128 and 32 units.
 */

import * as tf from "@tensorflow/tfjs";

export interface UNetSpec {
  n: number;
  /** encoder widths; the last one is also applied at the extra bottleneck step */
  widths?: number[];
  stressHidden?: number[];
}

export interface CNNSpec {
  n: number;
  widths?: number[];
  hidden?: number[];
}

export const DEFAULT_WIDTHS = [16, 32, 128, 256, 512];

function convBnRelu(
  x: tf.SymbolicTensor,
  filters: number,
  strides: number,
  name: string
): tf.SymbolicTensor {
  let out = tf.layers
    .conv2d({
      filters,
      kernelSize: 3,
      strides,
      padding: "same",
      useBias: false,
      name: `${name}_conv`,
    })
    .apply(x) as tf.SymbolicTensor;
  out = tf.layers
    .batchNormalization({ name: `${name}_bn` })
    .apply(out) as tf.SymbolicTensor;
  return tf.layers
    .activation({ activation: "relu", name: `${name}_relu` })
    .apply(out) as tf.SymbolicTensor;
}

/** Spatial sizes visited by the stride-2 encoder, starting at n. */
export function encoderSizes(n: number, steps: number): number[] {
  const sizes = [n];
  for (let i = 0; i < steps; i++) {
    sizes.push(Math.ceil(sizes[sizes.length - 1] / 2));
  }
  return sizes;
}

export function buildUnet(spec: UNetSpec): tf.LayersModel {
  const widths = spec.widths ?? DEFAULT_WIDTHS;
  const stressHidden = spec.stressHidden ?? [128, 32];
  const n = spec.n;
  const nSteps = widths.length; // one opening conv + nSteps stride-2 blocks
  const sizes = encoderSizes(n, nSteps);
  if (n < 2 ** nSteps) {
    throw new Error(
      `grid size ${n} incompatible with ${nSteps} downsampling steps (needs >= ${2 ** nSteps})`
    );
  }

  const imageInput = tf.input({ shape: [n, n, 4], name: "maps" });
  const stressInput = tf.input({ shape: [2], name: "stress_strain" });

  // Encoder: full-resolution opening block, then stride-2 blocks. The skip
  // taken before each downsampling step feeds the matching decoder stage.
  let x = convBnRelu(imageInput, widths[0], 1, "enc0");
  const skips: tf.SymbolicTensor[] = [];
  for (let i = 0; i < nSteps; i++) {
    skips.push(x);
    const filters = widths[Math.min(i + 1, widths.length - 1)];
    x = convBnRelu(x, filters, 2, `enc${i + 1}`);
  }

  // Stress head off the flattened bottleneck.
  let s = tf.layers.flatten({ name: "bottleneck_flat" }).apply(x) as tf.SymbolicTensor;
  s = tf.layers
    .concatenate({ name: "stress_concat" })
    .apply([s, stressInput]) as tf.SymbolicTensor;
  for (let i = 0; i < stressHidden.length; i++) {
    s = tf.layers
      .dense({ units: stressHidden[i], activation: "relu", name: `stress_fc${i}` })
      .apply(s) as tf.SymbolicTensor;
  }
  const stressOut = tf.layers
    .dense({ units: 1, name: "stress_out" })
    .apply(s) as tf.SymbolicTensor;

  // Decoder: one refinement conv, then transpose-conv upsampling with skip
  // concatenation, cropping off the extra row/column at odd encoder sizes.
  x = convBnRelu(x, widths[widths.length - 1], 1, "dec_bottleneck");
  for (let i = nSteps - 1; i >= 0; i--) {
    const target = sizes[i];
    const filters = widths[Math.min(i, widths.length - 1)];
    x = tf.layers
      .conv2dTranspose({
        filters,
        kernelSize: 3,
        strides: 2,
        padding: "same",
        useBias: false,
        name: `up${i}_tconv`,
      })
      .apply(x) as tf.SymbolicTensor;
    const produced = sizes[i + 1] * 2;
    const crop = produced - target;
    if (crop > 0) {
      x = tf.layers
        .cropping2D({ cropping: [[0, crop], [0, crop]], name: `up${i}_crop` })
        .apply(x) as tf.SymbolicTensor;
    }
    x = tf.layers
      .concatenate({ name: `up${i}_skip` })
      .apply([x, skips[i]]) as tf.SymbolicTensor;
    x = convBnRelu(x, filters, 1, `dec${i}`);
  }
  const mapOut = tf.layers
    .conv2d({ filters: 1, kernelSize: 1, name: "damage_out" })
    .apply(x) as tf.SymbolicTensor;

  return tf.model({
    inputs: [imageInput, stressInput],
    outputs: [mapOut, stressOut],
    name: "damage_unet",
  });
}

export function buildCnn(spec: CNNSpec): tf.LayersModel {
  const widths = spec.widths ?? [16, 32, 64, 128, 256, 512];
  const hidden = spec.hidden ?? [128, 32];
  const n = spec.n;
  const input = tf.input({ shape: [n, n, 4], name: "maps" });
  let x = input as tf.SymbolicTensor;
  let size = n;
  for (let i = 0; i < widths.length; i++) {
    if (size < 2) break;
    x = convBnRelu(x, widths[i], 2, `cnn${i}`);
    size = Math.ceil(size / 2);
  }
  x = tf.layers.flatten({ name: "cnn_flat" }).apply(x) as tf.SymbolicTensor;
  for (let i = 0; i < hidden.length; i++) {
    x = tf.layers
      .dense({ units: hidden[i], activation: "relu", name: `cnn_fc${i}` })
      .apply(x) as tf.SymbolicTensor;
  }
  const out = tf.layers
    .dense({ units: 1, name: "cnn_out" })
    .apply(x) as tf.SymbolicTensor;
  return tf.model({ inputs: input, outputs: out, name: "stress_cnn" });
}

/** Bottleneck spatial size of the encoder chain for a given grid size. */
export function bottleneckSize(n: number, widths = DEFAULT_WIDTHS): number {
  const sizes = encoderSizes(n, widths.length);
  return sizes[sizes.length - 1];
}

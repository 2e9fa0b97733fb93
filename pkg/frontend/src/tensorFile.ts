/**
 * Reader/writer for the binary training-tensor format produced by the
 * simulation pipeline: 8 magic bytes "MFRC0001", four little-endian uint32
 * dims (frames, channels, n, n), then float32 values in frame-major,
 * channel-major, row-major order.
 */

import { readFileSync, writeFileSync } from "node:fs";

export const MAGIC = "MFRC0001";

export const CHANNELS = [
  "E",
  "sigma_uts",
  "Gc",
  "eps_x",
  "eps_y",
  "sig_x",
  "sig_y",
  "phi",
] as const;

export type ChannelName = (typeof CHANNELS)[number];

export interface TensorData {
  frames: number;
  channels: number;
  n: number;
  /** flat values, length frames * channels * n * n */
  data: Float32Array;
}

export function channelIndex(name: ChannelName): number {
  return CHANNELS.indexOf(name);
}

export function readTensor(path: string): TensorData {
  const buf = readFileSync(path);
  if (buf.length < 24) {
    throw new Error(`${path}: truncated header`);
  }
  if (buf.toString("latin1", 0, 8) !== MAGIC) {
    throw new Error(`${path}: bad magic`);
  }
  const frames = buf.readUInt32LE(8);
  const channels = buf.readUInt32LE(12);
  const n1 = buf.readUInt32LE(16);
  const n2 = buf.readUInt32LE(20);
  if (n1 !== n2) {
    throw new Error(`${path}: grid must be square, got ${n1} x ${n2}`);
  }
  const count = frames * channels * n1 * n2;
  if (buf.length !== 24 + 4 * count) {
    throw new Error(
      `${path}: truncated data (expected ${24 + 4 * count} bytes, got ${buf.length})`
    );
  }
  // Copy into an aligned Float32Array (Buffer offsets need not be aligned).
  const data = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    data[i] = buf.readFloatLE(24 + 4 * i);
  }
  return { frames, channels, n: n1, data };
}

export function writeTensor(path: string, tensor: TensorData): void {
  const { frames, channels, n, data } = tensor;
  const count = frames * channels * n * n;
  if (data.length !== count) {
    throw new Error(`data length ${data.length} does not match dims`);
  }
  const buf = Buffer.alloc(24 + 4 * count);
  buf.write(MAGIC, 0, "latin1");
  buf.writeUInt32LE(frames, 8);
  buf.writeUInt32LE(channels, 12);
  buf.writeUInt32LE(n, 16);
  buf.writeUInt32LE(n, 20);
  for (let i = 0; i < count; i++) {
    buf.writeFloatLE(data[i], 24 + 4 * i);
  }
  writeFileSync(path, buf);
}

/** One channel of one frame as a flat n*n view (copy). */
export function frameChannel(
  tensor: TensorData,
  frame: number,
  channel: number
): Float32Array {
  const { frames, channels, n } = tensor;
  if (frame < 0 || frame >= frames) {
    throw new Error(`frame ${frame} out of range [0, ${frames})`);
  }
  if (channel < 0 || channel >= channels) {
    throw new Error(`channel ${channel} out of range [0, ${channels})`);
  }
  const size = n * n;
  const offset = (frame * channels + channel) * size;
  return tensor.data.slice(offset, offset + size);
}

/** Mean of one channel at one frame (used as the nominal stress/strain). */
export function frameChannelMean(
  tensor: TensorData,
  frame: number,
  channel: number
): number {
  const values = frameChannel(tensor, frame, channel);
  let sum = 0;
  for (let i = 0; i < values.length; i++) sum += values[i];
  return sum / values.length;
}

/**
 * Binary ITZ mask derived from the piecewise-constant elastic-modulus
 * channel: interface cells carry the interface modulus verbatim.
 */
export function itzMaskFromTensor(
  tensor: TensorData,
  itzModulusMPa = 21900.0,
  tolerance = 1e-3
): Uint8Array {
  const e = frameChannel(tensor, 0, channelIndex("E"));
  const mask = new Uint8Array(e.length);
  for (let i = 0; i < e.length; i++) {
    mask[i] = Math.abs(e[i] - itzModulusMPa) <= tolerance ? 1 : 0;
  }
  return mask;
}

import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { describe, expect, it } from "vitest";

import {
  CHANNELS,
  channelIndex,
  frameChannel,
  frameChannelMean,
  itzMaskFromTensor,
  readTensor,
  writeTensor,
} from "../src/tensorFile.js";

const FIXTURES = join(__dirname, "fixtures");

describe("tensor file format", () => {
  it("reads a pipeline-produced tensor", () => {
    const tensor = readTensor(join(FIXTURES, "sample_0.bin"));
    expect(tensor.frames).toBe(10);
    expect(tensor.channels).toBe(8);
    expect(tensor.n).toBe(32);
    expect(tensor.data.length).toBe(10 * 8 * 32 * 32);
  });

  it("material channels are constant across frames", () => {
    const tensor = readTensor(join(FIXTURES, "sample_0.bin"));
    for (const name of ["E", "sigma_uts", "Gc"] as const) {
      const c = channelIndex(name);
      const first = frameChannel(tensor, 0, c);
      const last = frameChannel(tensor, tensor.frames - 1, c);
      expect(Array.from(last)).toEqual(Array.from(first));
    }
  });

  it("phi channel lies in [0, 1] and is non-decreasing per cell", () => {
    const tensor = readTensor(join(FIXTURES, "sample_0.bin"));
    const phi = channelIndex("phi");
    let prev = frameChannel(tensor, 0, phi);
    for (let k = 1; k < tensor.frames; k++) {
      const cur = frameChannel(tensor, k, phi);
      for (let c = 0; c < cur.length; c++) {
        expect(cur[c]).toBeGreaterThanOrEqual(-0);
        expect(cur[c]).toBeLessThanOrEqual(1);
        expect(cur[c]).toBeGreaterThanOrEqual(prev[c] - 1e-6);
      }
      prev = cur;
    }
  });

  it("round-trips byte-exactly through write + read", () => {
    const tensor = readTensor(join(FIXTURES, "sample_1.bin"));
    const dir = mkdtempSync(join(tmpdir(), "tensor-"));
    const path = join(dir, "copy.bin");
    writeTensor(path, tensor);
    const back = readTensor(path);
    expect(back.frames).toBe(tensor.frames);
    expect(Array.from(back.data)).toEqual(Array.from(tensor.data));
  });

  it("rejects a bad magic", () => {
    const dir = mkdtempSync(join(tmpdir(), "tensor-"));
    const path = join(dir, "bad.bin");
    const bad = Buffer.alloc(64);
    bad.write("NOTMAGIC");
    require("node:fs").writeFileSync(path, bad);
    expect(() => readTensor(path)).toThrow(/magic/);
  });

  it("derives the interface mask from the modulus channel", () => {
    const tensor = readTensor(join(FIXTURES, "sample_0.bin"));
    const mask = itzMaskFromTensor(tensor);
    const e = frameChannel(tensor, 0, channelIndex("E"));
    let inside = 0;
    for (let c = 0; c < mask.length; c++) {
      if (mask[c]) {
        inside += 1;
        expect(e[c]).toBeCloseTo(21900.0, 3);
      }
    }
    expect(inside).toBeGreaterThan(0);
    expect(inside).toBeLessThan(mask.length / 2);
  });

  it("channel means behave like nominal stress and strain", () => {
    const tensor = readTensor(join(FIXTURES, "sample_0.bin"));
    const sig = channelIndex("sig_x");
    const eps = channelIndex("eps_x");
    expect(frameChannelMean(tensor, 0, sig)).toBe(0);
    const sLast = frameChannelMean(tensor, tensor.frames - 1, sig);
    const eLast = frameChannelMean(tensor, tensor.frames - 1, eps);
    expect(sLast).toBeGreaterThan(0);
    expect(eLast).toBeGreaterThan(0);
    // early frames are elastic: the secant modulus is near the matrix value
    const s1 = frameChannelMean(tensor, 1, sig);
    const e1 = frameChannelMean(tensor, 1, eps);
    expect(s1 / e1).toBeGreaterThan(20000);
    expect(s1 / e1).toBeLessThan(40000);
  });

  it("names all eight channels", () => {
    expect(CHANNELS.length).toBe(8);
    expect(channelIndex("phi")).toBe(7);
  });
});

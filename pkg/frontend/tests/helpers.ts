/** Shared fixtures: a seeded PRNG, mask/raster builders, one-shot CLI runs. */

import { execFile } from "node:child_process";
import { promisify } from "node:util";

import { ArrayView, Dtype, arrayView } from "../src/arrayview.js";

const execFileAsync = promisify(execFile);

export function cliCommand(): string[] {
  const env = process.env["SGFSIS_CLI"];
  if (env !== undefined && env !== "") {
    return env.split(" ");
  }
  return ["sgfsis"];
}

/** Run the CLI once to completion with the given stdin, return stdout. */
export async function oneShotCli(
  args: string[],
  stdin = "",
): Promise<string> {
  const [cmd, ...base] = cliCommand();
  const child = execFileAsync(cmd!, [...base, ...args], {
    maxBuffer: 64 * 1024 * 1024,
  });
  child.child.stdin!.end(stdin);
  const { stdout } = await child;
  return stdout;
}

/** mulberry32: tiny deterministic PRNG, plenty for fixture generation. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export interface MaskScene {
  foreground: ArrayView;
  boundary: ArrayView;
  centroid: ArrayView;
}

/**
 * Random soft-mask scene: a few discs of strong foreground over weak
 * background noise, boundary rings at disc perimeters, centroid dots.
 */
export function maskScene(seed: number, size = 24): MaskScene {
  const rng = mulberry32(seed);
  const fg = new Float32Array(size * size);
  const bd = new Float32Array(size * size);
  const ct = new Float32Array(size * size);
  for (let i = 0; i < fg.length; i++) {
    fg[i] = rng() * 0.3;
    bd[i] = rng() * 0.3;
    ct[i] = rng() * 0.3;
  }
  const discs = 2 + Math.floor(rng() * 4);
  for (let d = 0; d < discs; d++) {
    const cy = 3 + Math.floor(rng() * (size - 6));
    const cx = 3 + Math.floor(rng() * (size - 6));
    const r = 2 + Math.floor(rng() * 3);
    for (let y = 0; y < size; y++) {
      for (let x = 0; x < size; x++) {
        const dist = Math.hypot(y - cy, x - cx);
        const i = y * size + x;
        if (dist <= r) {
          fg[i] = 0.7 + rng() * 0.3;
          if (dist >= r - 1) {
            bd[i] = 0.7 + rng() * 0.3;
          }
        }
        if (dist <= 0.5) {
          ct[i] = 0.8 + rng() * 0.2;
        }
      }
    }
  }
  return {
    foreground: arrayView([size, size], Dtype.F32, fg),
    boundary: arrayView([size, size], Dtype.F32, bd),
    centroid: arrayView([size, size], Dtype.F32, ct),
  };
}

/**
 * Random labeled instance raster (u32) plus a class table: a few
 * non-overlapping rectangles, ids 1..n, classes alternating 1/2.
 */
export function labelScene(
  seed: number,
  size = 24,
): { raster: ArrayView; classes: Record<number, { classId: number }> } {
  const rng = mulberry32(seed);
  const ids = new Uint32Array(size * size);
  const classes: Record<number, { classId: number }> = {};
  const count = 2 + Math.floor(rng() * 4);
  let next = 1;
  for (let k = 0; k < count; k++) {
    const h = 2 + Math.floor(rng() * 4);
    const w = 2 + Math.floor(rng() * 4);
    const y0 = Math.floor(rng() * (size - h));
    const x0 = Math.floor(rng() * (size - w));
    let free = true;
    for (let y = y0; y < y0 + h && free; y++) {
      for (let x = x0; x < x0 + w; x++) {
        if (ids[y * size + x] !== 0) {
          free = false;
          break;
        }
      }
    }
    if (!free) continue;
    for (let y = y0; y < y0 + h; y++) {
      for (let x = x0; x < x0 + w; x++) {
        ids[y * size + x] = next;
      }
    }
    classes[next] = { classId: 1 + (next % 2) };
    next += 1;
  }
  return { raster: arrayView([size, size], Dtype.U32, ids), classes };
}

/** Perturb a label raster: shift every id one pixel right, drop the last id. */
export function perturbLabels(
  scene: ReturnType<typeof labelScene>,
  size = 24,
): ReturnType<typeof labelScene> {
  const src = scene.raster.data as Uint32Array;
  const ids = new Uint32Array(size * size);
  let maxId = 0;
  for (const v of src) maxId = Math.max(maxId, v);
  for (let y = 0; y < size; y++) {
    for (let x = 1; x < size; x++) {
      const v = src[y * size + x - 1]!;
      if (v !== 0 && v !== maxId) {
        ids[y * size + x] = v;
      }
    }
  }
  const classes: Record<number, { classId: number }> = {};
  for (const v of ids) {
    if (v !== 0 && !(v in classes)) {
      classes[v] = scene.classes[v]!;
    }
  }
  return { raster: arrayView([size, size], Dtype.U32, ids), classes };
}

export function sameBits(a: ArrayView, b: ArrayView): boolean {
  if (a.dtype !== b.dtype || a.dims.length !== b.dims.length) return false;
  if (a.dims.some((d, i) => d !== b.dims[i])) return false;
  const ab = new Uint8Array(a.data.buffer, a.data.byteOffset, a.data.byteLength);
  const bb = new Uint8Array(b.data.buffer, b.data.byteOffset, b.data.byteLength);
  return ab.length === bb.length && ab.every((v, i) => v === bb[i]);
}

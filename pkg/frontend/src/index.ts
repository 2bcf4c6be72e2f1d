/**
 * Array-in/array-out bindings for the sgfsis segmentation pipeline.
 *
 * The binding layer talks to the pipeline exclusively through its
 * external interfaces: SGT1 tensor files and the command-line `batch` job
 * loop, run as one persistent child process. Buffers are validated and
 * copied at the boundary; nothing caller-owned is retained.
 */

import { promises as fs } from "node:fs";
import { mkdtempSync } from "node:fs";
import os from "node:os";
import path from "node:path";

import {
  ArrayView,
  Dtype,
  requireRaster,
  requireSameShape,
} from "./arrayview.js";
import * as sgt1 from "./sgt1.js";
import { PipelineRunner, RunnerOptions } from "./runner.js";

export { ArrayView, Dtype, arrayView, dtypeName } from "./arrayview.js";
export { PipelineRunner } from "./runner.js";
export * as sgt1 from "./sgt1.js";

/** Mirrors the primary library's version string. */
export const version = "0.1.0";

export interface InstanceClass {
  classId: number;
  className?: string;
}

/** Instance id -> class assignment, the sidecar of an instance raster. */
export type InstanceClassTable = Record<number, InstanceClass>;

export interface MetricsReport {
  f1_per_class: Record<string, number | null>;
  f1_novel: number | null;
  f1_base: number | null;
  aji: number;
  mpq: number | null;
  pq_per_class: Record<string, number>;
  dice: number;
}

export interface StructuralChannels {
  foreground: ArrayView;
  boundary: ArrayView;
  centroid: ArrayView;
  classMasks: ArrayView;
}

function classTableText(table: InstanceClassTable): string {
  const lines = Object.entries(table).map(([id, entry]) => {
    const name = entry.className ?? `C${entry.classId}`;
    return `${id},${entry.classId},${name}`;
  });
  return lines.length > 0 ? lines.join("\n") + "\n" : "";
}

export class SgfsisBindings {
  private readonly runner: PipelineRunner;
  private readonly workdir: string;
  private sequence = 0;

  constructor(options: RunnerOptions = {}) {
    this.runner = new PipelineRunner(options);
    this.workdir = mkdtempSync(path.join(os.tmpdir(), "sgfsis-bind-"));
  }

  private scratch(name: string): string {
    this.sequence += 1;
    return path.join(this.workdir, `${this.sequence}_${name}`);
  }

  private async withFiles<T>(
    files: Map<string, Buffer | string>,
    run: () => Promise<T>,
  ): Promise<T> {
    await Promise.all(
      [...files.entries()].map(([p, content]) => fs.writeFile(p, content)),
    );
    try {
      return await run();
    } finally {
      await Promise.all(
        [...files.keys()].map((p) => fs.rm(p, { force: true })),
      );
    }
  }

  /**
   * Marker-guided watershed: three equal-shaped 2-D f32 masks in, one
   * u32 instance-id raster out. Bit-for-bit identical to the pipeline
   * CLI on the same inputs.
   */
  async watershed(
    foreground: ArrayView,
    boundary: ArrayView,
    centroid: ArrayView,
    thresholds: readonly [number, number, number] = [0.5, 0.5, 0.5],
  ): Promise<ArrayView> {
    requireRaster(foreground, Dtype.F32, "foreground");
    requireRaster(boundary, Dtype.F32, "boundary");
    requireRaster(centroid, Dtype.F32, "centroid");
    requireSameShape(
      [foreground, boundary, centroid],
      ["foreground", "boundary", "centroid"],
    );
    const fgPath = this.scratch("fg.sgt");
    const bdPath = this.scratch("bd.sgt");
    const ctPath = this.scratch("ct.sgt");
    const outPath = this.scratch("instances.sgt");
    const files = new Map<string, Buffer | string>([
      [fgPath, sgt1.encode(foreground)],
      [bdPath, sgt1.encode(boundary)],
      [ctPath, sgt1.encode(centroid)],
    ]);
    return this.withFiles(files, async () => {
      const [tF, tB, tC] = thresholds;
      await this.runner.submit(
        `watershed ${fgPath} ${bdPath} ${ctPath} ${tF} ${tB} ${tC} ${outPath}`,
      );
      try {
        return sgt1.decode(await fs.readFile(outPath));
      } finally {
        await fs.rm(outPath, { force: true });
      }
    });
  }

  /**
   * Full metric suite between two labeled instance rasters (2-D u32 of
   * matching shape). Field names mirror the pipeline's report record.
   */
  async metrics(
    gt: ArrayView,
    gtClasses: InstanceClassTable,
    pred: ArrayView,
    predClasses: InstanceClassTable,
    baseClasses: readonly number[] = [],
  ): Promise<MetricsReport> {
    requireRaster(gt, Dtype.U32, "gt");
    requireRaster(pred, Dtype.U32, "pred");
    requireSameShape([gt, pred], ["gt", "pred"]);
    const gtPath = this.scratch("gt.sgt");
    const gtCsv = this.scratch("gt.csv");
    const predPath = this.scratch("pred.sgt");
    const predCsv = this.scratch("pred.csv");
    const files = new Map<string, Buffer | string>([
      [gtPath, sgt1.encode(gt)],
      [gtCsv, classTableText(gtClasses)],
      [predPath, sgt1.encode(pred)],
      [predCsv, classTableText(predClasses)],
    ]);
    return this.withFiles(files, async () => {
      const base = baseClasses.length > 0 ? ` ${baseClasses.join(",")}` : "";
      const reply = await this.runner.submit(
        `metrics ${gtPath} ${gtCsv} ${predPath} ${predCsv}${base}`,
      );
      return JSON.parse(reply) as MetricsReport;
    });
  }

  /**
   * Structural label conversion: a labeled instance raster becomes
   * foreground / boundary / centroid / per-class supervision channels.
   */
  async convertLabels(
    labels: ArrayView,
    classes: InstanceClassTable,
    boundaryRadius = 1,
    centroidRadius = 1,
  ): Promise<StructuralChannels> {
    requireRaster(labels, Dtype.U32, "labels");
    const lblPath = this.scratch("lbl.sgt");
    const csvPath = this.scratch("lbl.csv");
    const prefix = this.scratch("ch_");
    const files = new Map<string, Buffer | string>([
      [lblPath, sgt1.encode(labels)],
      [csvPath, classTableText(classes)],
    ]);
    return this.withFiles(files, async () => {
      await this.runner.submit(
        `convert ${lblPath} ${csvPath} ${boundaryRadius} ${centroidRadius} ${prefix}`,
      );
      const read = async (name: string) => {
        const p = `${prefix}${name}.sgt`;
        try {
          return sgt1.decode(await fs.readFile(p));
        } finally {
          await fs.rm(p, { force: true });
        }
      };
      return {
        foreground: await read("foreground"),
        boundary: await read("boundary"),
        centroid: await read("centroid"),
        classMasks: await read("class_masks"),
      };
    });
  }

  /** Stop the pipeline child and remove the scratch directory. */
  async close(): Promise<void> {
    await this.runner.close();
    await fs.rm(this.workdir, { recursive: true, force: true });
  }
}

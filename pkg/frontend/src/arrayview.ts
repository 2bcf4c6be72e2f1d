/**
 * Caller-facing array descriptor for the binding boundary.
 *
 * An ArrayView pairs explicit dims and a dtype code with a typed-array
 * buffer. Views are validated on construction and *copied* at the
 * boundary — the binding never retains a reference to caller memory after
 * a call returns.
 */

/** Dtype codes shared with the SGT1 tensor format. */
export enum Dtype {
  F32 = 0,
  U32 = 1,
  U8 = 2,
}

export type DtypeArray = Float32Array | Uint32Array | Uint8Array;

export interface ArrayView {
  readonly dims: readonly number[];
  readonly dtype: Dtype;
  readonly data: DtypeArray;
}

const ARRAY_KIND: Record<Dtype, Function> = {
  [Dtype.F32]: Float32Array,
  [Dtype.U32]: Uint32Array,
  [Dtype.U8]: Uint8Array,
};

export function dtypeName(code: Dtype): string {
  switch (code) {
    case Dtype.F32:
      return "f32 (code 0)";
    case Dtype.U32:
      return "u32 (code 1)";
    case Dtype.U8:
      return "u8 (code 2)";
  }
}

function elementCount(dims: readonly number[]): number {
  return dims.reduce((a, b) => a * b, 1);
}

/**
 * Validate dims/dtype/buffer agreement and return a defensive copy.
 * Throws TypeError with the diagnostic a native boundary would surface.
 */
export function arrayView(
  dims: readonly number[],
  dtype: Dtype,
  data: DtypeArray,
): ArrayView {
  if (dims.length < 1 || dims.length > 4) {
    throw new TypeError(`array rank must be 1-4, got ${dims.length}`);
  }
  for (const d of dims) {
    if (!Number.isInteger(d) || d <= 0) {
      throw new TypeError(`extents must be positive integers, got [${dims}]`);
    }
  }
  const kind = ARRAY_KIND[dtype];
  if (kind === undefined) {
    throw new TypeError(`unknown dtype code ${dtype}`);
  }
  if (!(data instanceof kind)) {
    throw new TypeError(
      `buffer does not match dtype ${dtypeName(dtype)}: got ${data.constructor.name}`,
    );
  }
  const expected = elementCount(dims);
  if (data.length !== expected) {
    throw new TypeError(
      `buffer holds ${data.length} elements, dims [${dims}] need ${expected}`,
    );
  }
  return { dims: [...dims], dtype, data: data.slice() as DtypeArray };
}

/** Require a 2-D view of the given dtype (the mask/raster contract). */
export function requireRaster(
  view: ArrayView,
  dtype: Dtype,
  name: string,
): void {
  if (view.dims.length !== 2) {
    throw new TypeError(`${name} must be 2-D, got rank ${view.dims.length}`);
  }
  if (view.dtype !== dtype) {
    throw new TypeError(
      `${name} must have dtype ${dtypeName(dtype)}, got ${dtypeName(view.dtype)}`,
    );
  }
}

/** Require several 2-D views to share one shape. */
export function requireSameShape(views: ArrayView[], names: string[]): void {
  const first = views[0];
  if (first === undefined) return;
  for (let i = 1; i < views.length; i++) {
    const v = views[i]!;
    if (v.dims[0] !== first.dims[0] || v.dims[1] !== first.dims[1]) {
      throw new TypeError(
        `${names[i]} shape [${v.dims}] differs from ${names[0]} shape [${first.dims}]`,
      );
    }
  }
}

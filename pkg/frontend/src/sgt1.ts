/**
 * SGT1 tensor file codec.
 *
 * Layout: magic "SGT1", u8 rank, rank x u32 little-endian extents, u8
 * dtype code (0 = f32, 1 = u32, 2 = u8), then the raw little-endian
 * values in C order.
 */

import { ArrayView, Dtype, DtypeArray, arrayView } from "./arrayview.js";

const MAGIC = Buffer.from("SGT1", "ascii");

const BYTES_PER_ELEMENT: Record<Dtype, number> = {
  [Dtype.F32]: 4,
  [Dtype.U32]: 4,
  [Dtype.U8]: 1,
};

export function encode(view: ArrayView): Buffer {
  const rank = view.dims.length;
  const header = Buffer.alloc(4 + 1 + 4 * rank + 1);
  MAGIC.copy(header, 0);
  header.writeUInt8(rank, 4);
  view.dims.forEach((d, i) => header.writeUInt32LE(d, 5 + 4 * i));
  header.writeUInt8(view.dtype, 5 + 4 * rank);
  // typed arrays are little-endian on every platform node supports
  const payload = Buffer.from(
    view.data.buffer,
    view.data.byteOffset,
    view.data.byteLength,
  );
  return Buffer.concat([header, payload]);
}

export function decode(buf: Buffer): ArrayView {
  if (buf.length < 6 || !buf.subarray(0, 4).equals(MAGIC)) {
    throw new TypeError("not an SGT1 buffer");
  }
  const rank = buf.readUInt8(4);
  if (rank < 1 || rank > 4) {
    throw new TypeError(`bad SGT1 rank ${rank}`);
  }
  const dims: number[] = [];
  for (let i = 0; i < rank; i++) {
    dims.push(buf.readUInt32LE(5 + 4 * i));
  }
  const dtype = buf.readUInt8(5 + 4 * rank) as Dtype;
  const itemSize = BYTES_PER_ELEMENT[dtype];
  if (itemSize === undefined) {
    throw new TypeError(`unknown SGT1 dtype code ${dtype}`);
  }
  const count = dims.reduce((a, b) => a * b, 1);
  const offset = 6 + 4 * rank;
  if (buf.length !== offset + count * itemSize) {
    throw new TypeError(
      `SGT1 payload size mismatch: expected ${offset + count * itemSize} bytes, got ${buf.length}`,
    );
  }
  // copy out of the file buffer so the view owns its memory
  const bytes = new Uint8Array(count * itemSize);
  bytes.set(buf.subarray(offset));
  let data: DtypeArray;
  switch (dtype) {
    case Dtype.F32:
      data = new Float32Array(bytes.buffer);
      break;
    case Dtype.U32:
      data = new Uint32Array(bytes.buffer);
      break;
    default:
      data = bytes;
  }
  return arrayView(dims, dtype, data);
}

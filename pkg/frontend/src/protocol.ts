// Wire protocol shared with the engine: JSON text frames, voxel grids as
// base64 run-length payloads of (label u8, count u32le) pairs with a
// zlib-compatible CRC-32 over the decoded x-fastest byte stream.

export interface GridPayload {
  resolution: number;
  pitch: number;
  origin: [number, number, number];
  encoding: string;
  payload_b64: string;
  crc32: number;
}

export interface MountEntry {
  part: string;
  component: number;
  host: string;
  depth_m: number | null;
  char_size_m: number;
  score: number;
  applicable: boolean;
}

export interface GenerationMessage {
  type: "generation";
  run_id: string;
  generation: number;
  best: { topology: string; values: number[] };
  breakdown: Record<string, number>;
  mounts: { multiplier: number; parts: MountEntry[] };
  topology_histogram: Record<string, number>;
  diversity: number;
  stagnation: number;
  sigma: number;
  pinned_axes: [number, number][];
  feasible: boolean;
  grid: GridPayload;
}

export type ServerMessage =
  | GenerationMessage
  | { type: "started"; run_id: string; flags: Record<string, boolean> }
  | { type: "finished"; run_id: string; generations_run: number;
      generations_to_feasible: number | null; stopped: boolean }
  | { type: "error"; reason: string };

export type ControlCommand =
  | { type: "start"; mission: Record<string, unknown>; seed: number;
      ga?: Record<string, number>; flags?: Record<string, boolean> }
  | { type: "pause" }
  | { type: "resume" }
  | { type: "pin_axis"; index: number; value: number }
  | { type: "unpin_axis"; index: number }
  | { type: "force_restart" }
  | { type: "stop" };

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

export function crc32(data: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < data.length; i++) {
    c = CRC_TABLE[(c ^ data[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

export function base64ToBytes(b64: string): Uint8Array {
  if (typeof atob === "function") {
    const bin = atob(b64);
    const out = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
    return out;
  }
  return new Uint8Array(Buffer.from(b64, "base64"));
}

export function rleDecode(packed: Uint8Array): Uint8Array {
  if (packed.length % 5 !== 0) {
    throw new Error("malformed run-length stream");
  }
  const view = new DataView(packed.buffer, packed.byteOffset, packed.byteLength);
  let total = 0;
  for (let off = 0; off < packed.length; off += 5) {
    total += view.getUint32(off + 1, true);
  }
  const out = new Uint8Array(total);
  let pos = 0;
  for (let off = 0; off < packed.length; off += 5) {
    const label = packed[off];
    const count = view.getUint32(off + 1, true);
    out.fill(label, pos, pos + count);
    pos += count;
  }
  return out;
}

export interface DecodedGrid {
  resolution: number;
  pitch: number;
  origin: [number, number, number];
  labels: Uint8Array; // x-fastest order: labels[x + r*y + r*r*z]
}

export function decodeGrid(payload: GridPayload): DecodedGrid {
  if (payload.encoding !== "rle") {
    throw new Error(`unsupported grid encoding ${payload.encoding}`);
  }
  const body = rleDecode(base64ToBytes(payload.payload_b64));
  if (crc32(body) !== payload.crc32 >>> 0) {
    throw new Error("grid payload checksum mismatch");
  }
  const r = payload.resolution;
  if (body.length !== r * r * r) {
    throw new Error(`grid body has ${body.length} voxels, expected ${r ** 3}`);
  }
  return { resolution: r, pitch: payload.pitch, origin: payload.origin, labels: body };
}

export function occupiedCount(grid: DecodedGrid): number {
  let n = 0;
  for (let i = 0; i < grid.labels.length; i++) {
    if (grid.labels[i] !== 0) n++;
  }
  return n;
}

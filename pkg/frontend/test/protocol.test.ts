import { readFileSync } from "node:fs";
import { join, dirname } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { crc32, decodeGrid, occupiedCount, rleDecode, type GridPayload } from "../src/protocol";

const here = dirname(fileURLToPath(import.meta.url));
const doc = JSON.parse(
  readFileSync(join(here, "..", "fixtures", "payloads.json"), "utf-8"),
) as {
  payloads: { payload: GridPayload; occupied: number }[];
  corrupted: { payload: GridPayload; reason: string }[];
};

describe("wire payload decoding", () => {
  it("decodes all 100 engine-generated payloads with checksum match", () => {
    expect(doc.payloads.length).toBe(100);
    for (const { payload, occupied } of doc.payloads) {
      const grid = decodeGrid(payload);
      expect(grid.labels.length).toBe(payload.resolution ** 3);
      expect(occupiedCount(grid)).toBe(occupied);
      expect(crc32(grid.labels)).toBe(payload.crc32 >>> 0);
    }
  });

  it("rejects corrupted payloads", () => {
    for (const { payload } of doc.corrupted) {
      expect(() => decodeGrid(payload)).toThrow();
    }
  });

  it("rejects unknown encodings", () => {
    const p = { ...doc.payloads[0].payload, encoding: "zip" };
    expect(() => decodeGrid(p)).toThrow(/encoding/);
  });

  it("rle decoder round-trips a synthetic stream", () => {
    // (label, count) pairs: 3x5, 1x0? no zero counts in practice; use 4x2
    const packed = new Uint8Array(10);
    const view = new DataView(packed.buffer);
    packed[0] = 3; view.setUint32(1, 5, true);
    packed[5] = 4; view.setUint32(6, 2, true);
    expect(Array.from(rleDecode(packed))).toEqual([3, 3, 3, 3, 3, 4, 4]);
  });

  it("rle decoder rejects ragged input", () => {
    expect(() => rleDecode(new Uint8Array(7))).toThrow(/malformed/);
  });

  it("crc32 matches the zlib vector", () => {
    const bytes = new TextEncoder().encode("123456789");
    expect(crc32(bytes)).toBe(0xcbf43926);
  });
});

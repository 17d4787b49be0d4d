/**
 * Binary embedding container consumed by the engine.
 *
 * Layout (all integers little-endian): 8-byte magic "EGCNEMB1", u32 dim,
 * u32 entry count, then per entry a u32-length-prefixed UTF-8 key
 * ("sampleid/docindex" or "sampleid/query"), u32 token count, and
 * token_count*dim float32 values.
 */

import { createWriteStream } from "node:fs";
import { rename, rm } from "node:fs/promises";
import { once } from "node:events";

export const MAGIC = Buffer.from("EGCNEMB1", "ascii");

export interface Entry {
  key: string;
  tokenCount: number;
  values: Float64Array; // tokenCount * dim, row-major
}

function u32(value: number): Buffer {
  const buf = Buffer.alloc(4);
  buf.writeUInt32LE(value >>> 0, 0);
  return buf;
}

export class EmbeddingWriter {
  private entries = 0;
  private chunks: Buffer[] = [];
  constructor(private dim: number) {}

  add(entry: Entry): void {
    if (entry.values.length !== entry.tokenCount * this.dim) {
      throw new Error(
        `entry '${entry.key}': ${entry.values.length} values for ` +
          `${entry.tokenCount} tokens of width ${this.dim}`,
      );
    }
    const key = Buffer.from(entry.key, "utf-8");
    const values = Buffer.alloc(entry.values.length * 4);
    for (let i = 0; i < entry.values.length; i++) {
      values.writeFloatLE(entry.values[i], i * 4);
    }
    this.chunks.push(u32(key.length), key, u32(entry.tokenCount), values);
    this.entries += 1;
  }

  /** Write atomically: temp file in place, then rename. */
  async save(path: string): Promise<void> {
    const temp = `${path}.tmp-${process.pid}`;
    const stream = createWriteStream(temp);
    try {
      stream.write(MAGIC);
      stream.write(u32(this.dim));
      stream.write(u32(this.entries));
      for (const chunk of this.chunks) {
        if (!stream.write(chunk)) {
          await once(stream, "drain");
        }
      }
      stream.end();
      await once(stream, "finish");
      await rename(temp, path);
    } catch (err) {
      stream.destroy();
      await rm(temp, { force: true });
      throw err;
    }
  }
}

/** Minimal reader used by the exporter's own tests. */
export function parseEmbeddingFile(buf: Buffer): {
  dim: number;
  entries: Map<string, { tokenCount: number; values: Float32Array }>;
} {
  if (!buf.subarray(0, 8).equals(MAGIC)) {
    throw new Error("bad magic");
  }
  const dim = buf.readUInt32LE(8);
  const count = buf.readUInt32LE(12);
  let offset = 16;
  const entries = new Map<string, { tokenCount: number; values: Float32Array }>();
  for (let i = 0; i < count; i++) {
    const keyLen = buf.readUInt32LE(offset);
    offset += 4;
    const key = buf.subarray(offset, offset + keyLen).toString("utf-8");
    offset += keyLen;
    const tokenCount = buf.readUInt32LE(offset);
    offset += 4;
    const values = new Float32Array(tokenCount * dim);
    for (let j = 0; j < values.length; j++) {
      values[j] = buf.readFloatLE(offset);
      offset += 4;
    }
    entries.set(key, { tokenCount, values });
  }
  return { dim, entries };
}

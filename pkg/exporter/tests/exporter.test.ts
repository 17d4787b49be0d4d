import { describe, expect, it } from "vitest";
import { mkdtempSync, readFileSync, readdirSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";
import { spawnSync } from "node:child_process";

import { tokenize } from "../src/tokenizer.js";
import { ContextualEncoder, LAYER_WIDTH } from "../src/encoder.js";
import { parseEmbeddingFile } from "../src/format.js";
import { runExport } from "../src/export.js";

const ROOT = resolve(__dirname, "..", "..");
const TOKENIZER_CASES = join(ROOT, "fixtures", "tokenizer_cases.json");
const MINI_DATASET = join(ROOT, "tests", "fixtures", "mini_dataset.json");

function tempDir(): string {
  return mkdtempSync(join(tmpdir(), "egcn-export-"));
}

describe("tokenizer parity", () => {
  it("matches every golden case", () => {
    const { cases } = JSON.parse(readFileSync(TOKENIZER_CASES, "utf-8"));
    expect(cases.length).toBeGreaterThanOrEqual(15);
    for (const { text, tokens } of cases) {
      expect(tokenize(text), JSON.stringify(text)).toEqual(tokens);
    }
  });

  it("agrees with the engine tokenizer process for tricky strings", () => {
    const texts = [
      "A (strange), very strange 'sentence'!",
      "  spaced out\ttabs  ",
      "U.S. co-op 3.14 ... end.",
      "MASK_3's #tag @user 50%https://x",
    ];
    const script =
      "import json,sys\nfrom egcn.data import tokenize\n" +
      "print(json.dumps([tokenize(t) for t in json.loads(sys.argv[1])]))";
    const proc = spawnSync("python3", ["-c", script, JSON.stringify(texts)], {
      cwd: ROOT,
      encoding: "utf-8",
    });
    expect(proc.status, proc.stderr).toBe(0);
    const engineTokens = JSON.parse(proc.stdout.trim());
    texts.forEach((text, i) => {
      expect(tokenize(text), JSON.stringify(text)).toEqual(engineTokens[i]);
    });
  });
});

describe("contextual encoder", () => {
  it("produces 3072-wide vectors from three 1024-wide layers", () => {
    const enc = new ContextualEncoder();
    expect(enc.dim).toBe(3 * LAYER_WIDTH);
    const out = enc.encode(["alpha", "beta"]);
    expect(out.length).toBe(2 * 3072);
  });

  it("is deterministic for the same model name", () => {
    const a = new ContextualEncoder("model-a").encode(["x", "y", "z"]);
    const b = new ContextualEncoder("model-a").encode(["x", "y", "z"]);
    expect(a).toEqual(b);
    const c = new ContextualEncoder("model-b").encode(["x", "y", "z"]);
    expect(a).not.toEqual(c);
  });

  it("keeps the type layer fixed but contextualizes upper layers", () => {
    const enc = new ContextualEncoder();
    const left = enc.encode(["common", "alpha"]);
    const right = enc.encode(["common", "omega"]);
    const typeLayerSame = left.slice(0, LAYER_WIDTH);
    const typeLayerOther = right.slice(0, LAYER_WIDTH);
    expect(typeLayerSame).toEqual(typeLayerOther);
    const upperA = left.slice(LAYER_WIDTH, 2 * LAYER_WIDTH);
    const upperB = right.slice(LAYER_WIDTH, 2 * LAYER_WIDTH);
    let diff = 0;
    for (let i = 0; i < upperA.length; i++) diff += Math.abs(upperA[i] - upperB[i]);
    expect(diff).toBeGreaterThan(1e-3);
  });

  it("honours layer selection", () => {
    const enc = new ContextualEncoder("m", [0]);
    expect(enc.dim).toBe(LAYER_WIDTH);
    expect(() => new ContextualEncoder("m", [7])).toThrow();
  });
});

describe("export job", () => {
  it("writes a loadable container with aligned token counts", async () => {
    const out = join(tempDir(), "mini.bin");
    const summary = await runExport({
      datasetPath: MINI_DATASET,
      modelName: "bilm-3072-v1",
      outPath: out,
    });
    expect(summary.dim).toBe(3072);
    expect(summary.samples).toBe(20);

    const parsed = parseEmbeddingFile(readFileSync(out));
    expect(parsed.dim).toBe(3072);
    const dataset = JSON.parse(readFileSync(MINI_DATASET, "utf-8"));
    let entries = 0;
    for (const sample of dataset) {
      sample.supports.forEach((doc: string, i: number) => {
        const entry = parsed.entries.get(`${sample.id}/${i}`);
        expect(entry, `${sample.id}/${i}`).toBeDefined();
        expect(entry!.tokenCount).toBe(tokenize(doc).length);
        entries += 1;
      });
      const q = parsed.entries.get(`${sample.id}/query`);
      expect(q).toBeDefined();
      expect(q!.tokenCount).toBe(tokenize(sample.query).length);
      entries += 1;
    }
    expect(parsed.entries.size).toBe(entries);
    // no stray temp file left behind
    const dir = readdirSync(join(out, ".."));
    expect(dir.filter((f) => f.includes(".tmp-"))).toEqual([]);
  });

  it("re-export is bit-identical (cosine exactly 1)", async () => {
    const dir = tempDir();
    const a = join(dir, "a.bin");
    const b = join(dir, "b.bin");
    await runExport({ datasetPath: MINI_DATASET, modelName: "m", outPath: a });
    await runExport({ datasetPath: MINI_DATASET, modelName: "m", outPath: b });
    expect(readFileSync(a).equals(readFileSync(b))).toBe(true);
  });

  it("loads in the engine with zero coverage errors", async () => {
    const out = join(tempDir(), "mini.bin");
    await runExport({ datasetPath: MINI_DATASET, modelName: "bilm-3072-v1", outPath: out });
    const script = [
      "import json, sys",
      "from egcn.encode import load_embeddings",
      "from egcn.data import parse_dataset, tokenize",
      "from egcn.model import prepare_samples",
      "store = load_embeddings(sys.argv[1])",
      "samples = parse_dataset(sys.argv[2]).samples",
      "missing = 0",
      "for s in samples:",
      "    for d, doc in enumerate(s.documents):",
      "        if store.vectors(s.id, d).shape != (len(doc), store.dim): missing += 1",
      "    if store.vectors(s.id).shape[0] != len(tokenize(s.query.raw)): missing += 1",
      "preps, skipped = prepare_samples(samples, store)",
      "print(json.dumps({'dim': store.dim, 'missing': missing, 'prepared': len(preps)}))",
    ].join("\n");
    const proc = spawnSync("python3", ["-c", script, out, MINI_DATASET], {
      cwd: ROOT,
      encoding: "utf-8",
    });
    expect(proc.status, proc.stderr).toBe(0);
    const result = JSON.parse(proc.stdout.trim());
    expect(result.dim).toBe(3072);
    expect(result.missing).toBe(0);
    expect(result.prepared).toBe(20);
  });
});

#!/usr/bin/env node
/** CLI: egcn-export export --dataset data.json --model bilm-3072-v1 --out emb.bin */

import { runExport } from "./export.js";

function parseArgs(argv: string[]): Map<string, string> {
  const out = new Map<string, string>();
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (!arg.startsWith("--")) continue;
    const value = argv[i + 1];
    if (value === undefined || value.startsWith("--")) {
      throw new Error(`flag ${arg} needs a value`);
    }
    out.set(arg.slice(2), value);
    i++;
  }
  return out;
}

async function main(): Promise<number> {
  const [command, ...rest] = process.argv.slice(2);
  if (command !== "export") {
    console.error("usage: egcn-export export --dataset FILE --model NAME --out FILE " +
      "[--layers 0,1,2] [--batch N]");
    return 1;
  }
  let flags: Map<string, string>;
  try {
    flags = parseArgs(rest);
  } catch (err) {
    console.error(String(err));
    return 1;
  }
  const dataset = flags.get("dataset");
  const out = flags.get("out");
  if (!dataset || !out) {
    console.error("--dataset and --out are required");
    return 1;
  }
  const layers = flags.get("layers");
  try {
    const summary = await runExport({
      datasetPath: dataset,
      modelName: flags.get("model") ?? "bilm-3072-v1",
      outPath: out,
      layerSelection: layers ? layers.split(",").map(Number) : undefined,
      batchSize: flags.has("batch") ? Number(flags.get("batch")) : undefined,
      onProgress: (done, total) =>
        console.error(JSON.stringify({ encoded: done, total })),
    });
    console.log(JSON.stringify(summary));
    return 0;
  } catch (err) {
    console.error(String(err));
    return 2;
  }
}

main().then((code) => {
  process.exitCode = code;
});

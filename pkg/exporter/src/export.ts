/**
 * Export job: run the frozen contextual encoder over every document and
 * query of a dataset and write the engine's binary embedding container.
 */

import { ContextualEncoder } from "./encoder.js";
import { loadDataset } from "./dataset.js";
import { EmbeddingWriter } from "./format.js";
import { tokenize } from "./tokenizer.js";

export interface ExportJob {
  datasetPath: string;
  modelName: string;
  outPath: string;
  layerSelection?: number[];
  batchSize?: number; // documents encoded between progress callbacks
  onProgress?: (done: number, total: number) => void;
}

export interface ExportSummary {
  samples: number;
  entries: number;
  tokens: number;
  dim: number;
}

export async function runExport(job: ExportJob): Promise<ExportSummary> {
  const samples = await loadDataset(job.datasetPath);
  const encoder = new ContextualEncoder(job.modelName, job.layerSelection ?? [0, 1, 2]);
  const writer = new EmbeddingWriter(encoder.dim);
  const batch = Math.max(1, job.batchSize ?? 32);

  let entries = 0;
  let tokens = 0;
  let sinceProgress = 0;
  const totalDocs = samples.reduce((acc, s) => acc + s.supports.length + 1, 0);

  const push = (key: string, text: string) => {
    const toks = tokenize(text);
    writer.add({ key, tokenCount: toks.length, values: encoder.encode(toks) });
    entries += 1;
    tokens += toks.length;
    sinceProgress += 1;
    if (job.onProgress && sinceProgress >= batch) {
      job.onProgress(entries, totalDocs);
      sinceProgress = 0;
    }
  };

  for (const sample of samples) {
    sample.supports.forEach((doc, docIndex) => push(`${sample.id}/${docIndex}`, doc));
    push(`${sample.id}/query`, sample.query);
  }
  if (job.onProgress) job.onProgress(entries, totalDocs);
  await writer.save(job.outPath);
  return { samples: samples.length, entries, tokens, dim: encoder.dim };
}

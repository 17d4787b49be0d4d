/** Reading the engine's dataset format: a JSON array of samples. */

import { readFile } from "node:fs/promises";

export interface DatasetSample {
  id: string;
  query: string;
  supports: string[];
  candidates: string[];
  answer?: string;
}

export async function loadDataset(path: string): Promise<DatasetSample[]> {
  const raw = JSON.parse(await readFile(path, "utf-8"));
  if (!Array.isArray(raw)) {
    throw new Error(`${path}: top level must be a JSON array`);
  }
  const samples: DatasetSample[] = [];
  raw.forEach((obj, index) => {
    for (const field of ["id", "query", "supports", "candidates"]) {
      if (!(field in obj)) {
        throw new Error(`${path}: sample #${index} is missing '${field}'`);
      }
    }
    samples.push({
      id: String(obj.id),
      query: String(obj.query),
      supports: obj.supports.map(String),
      candidates: obj.candidates.map(String),
      answer: obj.answer === undefined ? undefined : String(obj.answer),
    });
  });
  return samples;
}

"""Loading a dataset, computing summary statistics, masking entities.

Run:  python3 demos/02_datasets_and_masking.py
"""

from pathlib import Path

from egcn.data import dataset_stats, mask_dataset, parse_dataset, unmask_sample

MINI = Path(__file__).parent.parent / "tests" / "fixtures" / "mini_dataset.json"

report = parse_dataset(str(MINI))
print(f"parsed {len(report.samples)} samples, rejected {len(report.rejected)}")

sample = report.samples[0]
print(f"\nfirst sample: {sample.id}")
print(f"  relation = {sample.query.relation!r}, subject = {sample.query.subject!r}")
print(f"  candidates = {sample.candidates}")
print(f"  doc 0 tokens = {sample.documents[0]}")

print("\n== statistics ==")
print(dataset_stats(report.samples).to_csv(), end="")

print("\n== masking: consistent per-sample placeholders ==")
masked, tables = mask_dataset(report.samples, seed=42)
m = masked[0]
print(f"masked query:    {m.query.raw}")
print(f"masked support:  {m.raw_supports[0]}")
print(f"mask table:      {tables[sample.id]}")

restored = unmask_sample(m, tables[sample.id])
print(f"round trip restores the original exactly: {restored.to_obj() == sample.to_obj()}")

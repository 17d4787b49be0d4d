"""Dataset loading, validation, masking and summary statistics.

Samples are question-answering instances: a query string whose first
whitespace-separated token is the relation and whose remainder is the
subject entity, a list of supporting documents, a candidate answer set,
and optionally the gold answer. Documents are stored both as raw
strings (for masking and round-tripping) and as token lists.
"""

from __future__ import annotations

import json
import logging
import re
import statistics
import string
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

_PUNCT = set(string.punctuation)
_STRIP_PUNCT = str.maketrans("", "", string.punctuation)


def tokenize(text: str) -> list[str]:
    """Split on Unicode whitespace, then peel leading/trailing ASCII punctuation.

    The default (and only shipped) tokenizer; exact-match recall depends on it,
    so graph construction and any external embedding producer must agree on it.
    """
    tokens: list[str] = []
    for chunk in text.split():
        head: list[str] = []
        tail: list[str] = []
        while len(chunk) > 1 and chunk[0] in _PUNCT:
            head.append(chunk[0])
            chunk = chunk[1:]
        while len(chunk) > 1 and chunk[-1] in _PUNCT:
            tail.append(chunk[-1])
            chunk = chunk[:-1]
        tokens.extend(head)
        tokens.append(chunk)
        tokens.extend(reversed(tail))
    return tokens


def normalize_token(token: str) -> str:
    """Case-insensitive, ASCII-punctuation-stripped comparison form."""
    return token.lower().translate(_STRIP_PUNCT)


def normalize_tokens(tokens: list[str]) -> tuple[str, ...]:
    """Normalized comparison form of a token sequence; empty tokens drop out."""
    out = tuple(t for t in (normalize_token(tok) for tok in tokens) if t)
    return out


class DatasetError(ValueError):
    """The dataset file itself is unusable (not just individual samples)."""


@dataclass(frozen=True)
class Query:
    relation: str
    subject: str
    raw: str

    @classmethod
    def from_raw(cls, raw: str) -> "Query":
        parts = raw.split(maxsplit=1)
        if not parts:
            raise ValueError("empty query string")
        relation = parts[0]
        subject = parts[1] if len(parts) > 1 else ""
        return cls(relation=relation, subject=subject, raw=raw)


@dataclass
class Sample:
    id: str
    query: Query
    raw_supports: list[str]
    candidates: list[str]
    answer: str | None = None
    documents: list[list[str]] = field(default_factory=list)

    def __post_init__(self):
        if not self.documents:
            self.documents = [tokenize(doc) for doc in self.raw_supports]

    def to_obj(self) -> dict:
        obj = {
            "id": self.id,
            "query": self.query.raw,
            "supports": list(self.raw_supports),
            "candidates": list(self.candidates),
        }
        if self.answer is not None:
            obj["answer"] = self.answer
        return obj


@dataclass
class ParseReport:
    samples: list[Sample]
    rejected: list[tuple[str, str]]  # (sample id or index, reason)


def _validate(obj: dict, pos: int) -> Sample:
    for fname in ("id", "query", "supports", "candidates"):
        if fname not in obj:
            raise ValueError(f"missing field '{fname}'")
    sid = obj["id"]
    if not isinstance(obj["supports"], list) or not obj["supports"]:
        raise ValueError("supports must be a non-empty array")
    candidates = obj["candidates"]
    if not isinstance(candidates, list) or len(candidates) < 2:
        raise ValueError("candidates must list at least two entries")
    normalized = [normalize_tokens(tokenize(c)) for c in candidates]
    if len(set(normalized)) != len(normalized):
        raise ValueError("candidates are not unique after normalization")
    answer = obj.get("answer")
    if answer is not None and answer not in candidates:
        raise ValueError("answer not among candidates")
    return Sample(
        id=str(sid),
        query=Query.from_raw(obj["query"]),
        raw_supports=[str(s) for s in obj["supports"]],
        candidates=[str(c) for c in candidates],
        answer=answer,
    )


def parse_dataset(path: str) -> ParseReport:
    """Parse a JSON-array dataset file; invalid samples are skipped with a reason."""
    with open(path, encoding="utf-8") as fh:
        try:
            records = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(records, list):
        raise DatasetError(f"{path}: top level must be a JSON array")
    samples: list[Sample] = []
    rejected: list[tuple[str, str]] = []
    for pos, obj in enumerate(records):
        try:
            samples.append(_validate(obj, pos))
        except (ValueError, TypeError) as exc:
            ident = obj.get("id", f"#{pos}") if isinstance(obj, dict) else f"#{pos}"
            log.warning("skipping sample %s: %s", ident, exc)
            rejected.append((str(ident), str(exc)))
    return ParseReport(samples=samples, rejected=rejected)


def write_dataset(samples: list[Sample], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([s.to_obj() for s in samples], fh, ensure_ascii=False, indent=1)


_WORD_BOUNDARY = r"(?<!\w){}(?!\w)"


def _boundary_pattern(text: str) -> re.Pattern:
    return re.compile(_WORD_BOUNDARY.format(re.escape(text)))


def mask_sample(sample: Sample, rng: np.random.Generator) -> tuple[Sample, dict[str, str]]:
    """Replace each candidate (and the query subject) by a consistent placeholder.

    Placeholders are MASK_k with k drawn at random per sample; a k whose
    placeholder already occurs anywhere in the sample text is skipped.
    Replacement is word-boundary aware and longest-entity-first, so the
    emitted table inverts the transformation exactly.
    """
    entities = list(dict.fromkeys(sample.candidates))
    if sample.query.subject and sample.query.subject not in entities:
        entities.append(sample.query.subject)
    haystack = "\n".join(sample.raw_supports + sample.candidates + [sample.query.raw])
    pool = list(rng.permutation(np.arange(1, max(1000, 10 * len(entities)))))
    table: dict[str, str] = {}
    for entity in entities:
        while True:
            k = int(pool.pop(0))
            placeholder = f"MASK_{k}"
            if placeholder not in haystack:
                break
        table[entity] = placeholder

    def replace_all(text: str) -> str:
        for entity in sorted(table, key=len, reverse=True):
            text = _boundary_pattern(entity).sub(table[entity], text)
        return text

    masked = Sample(
        id=sample.id,
        query=Query.from_raw(replace_all(sample.query.raw)),
        raw_supports=[replace_all(doc) for doc in sample.raw_supports],
        candidates=[replace_all(c) for c in sample.candidates],
        answer=replace_all(sample.answer) if sample.answer is not None else None,
    )
    return masked, table


def unmask_sample(sample: Sample, table: dict[str, str]) -> Sample:
    inverse = {placeholder: entity for entity, placeholder in table.items()}

    def restore(text: str) -> str:
        for placeholder, entity in inverse.items():
            text = _boundary_pattern(placeholder).sub(lambda _m, e=entity: e, text)
        return text

    return Sample(
        id=sample.id,
        query=Query.from_raw(restore(sample.query.raw)),
        raw_supports=[restore(doc) for doc in sample.raw_supports],
        candidates=[restore(c) for c in sample.candidates],
        answer=restore(sample.answer) if sample.answer is not None else None,
    )


def mask_dataset(samples: list[Sample], seed: int) -> tuple[list[Sample], dict[str, dict[str, str]]]:
    """Mask every sample; returns masked samples and a per-sample mask table."""
    rng = np.random.default_rng(seed)
    masked: list[Sample] = []
    tables: dict[str, dict[str, str]] = {}
    for sample in samples:
        m, table = mask_sample(sample, rng)
        masked.append(m)
        tables[sample.id] = table
    return masked, tables


@dataclass(frozen=True)
class FieldStats:
    min: float
    max: float
    mean: float
    median: float


@dataclass(frozen=True)
class DatasetStats:
    candidates: FieldStats
    documents: FieldStats
    tokens_per_doc: FieldStats
    sample_count: int

    def to_csv(self) -> str:
        lines = ["field,min,max,mean,median"]
        for name in ("candidates", "documents", "tokens_per_doc"):
            fs: FieldStats = getattr(self, name)
            lines.append(f"{name},{fs.min:g},{fs.max:g},{fs.mean:.6g},{fs.median:g}")
        return "\n".join(lines) + "\n"


def _field_stats(values: list[int]) -> FieldStats:
    return FieldStats(
        min=min(values),
        max=max(values),
        mean=statistics.fmean(values),
        median=statistics.median(values),
    )


def dataset_stats(samples: list[Sample]) -> DatasetStats:
    if not samples:
        raise DatasetError("cannot compute statistics of an empty dataset")
    return DatasetStats(
        candidates=_field_stats([len(s.candidates) for s in samples]),
        documents=_field_stats([len(s.documents) for s in samples]),
        tokens_per_doc=_field_stats([len(d) for s in samples for d in s.documents]),
        sample_count=len(samples),
    )


@dataclass(frozen=True)
class SplitReport:
    train_size: int
    dev_size: int
    overlap: list[str]

    @property
    def disjoint(self) -> bool:
        return not self.overlap


def split_check(train: list[Sample], dev: list[Sample]) -> SplitReport:
    """Report split sizes and any sample ids shared between them."""
    train_ids = {s.id for s in train}
    overlap = sorted(train_ids.intersection(s.id for s in dev))
    if overlap:
        log.warning("%d sample ids appear in both splits", len(overlap))
    return SplitReport(train_size=len(train), dev_size=len(dev), overlap=overlap)

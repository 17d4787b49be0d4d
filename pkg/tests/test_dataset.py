import json
import string
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from egcn.data import (
    DatasetError,
    Query,
    Sample,
    dataset_stats,
    mask_dataset,
    mask_sample,
    normalize_tokens,
    parse_dataset,
    split_check,
    tokenize,
    unmask_sample,
    write_dataset,
)

FIXTURES = Path(__file__).parent / "fixtures"
SHARED_FIXTURES = Path(__file__).parent.parent / "fixtures"


def oracle_tokenize(text):
    """Index-based re-statement of the tokenizer rule, kept separate on purpose."""
    punct = set(string.punctuation)
    out = []
    for chunk in text.split():
        i, j = 0, len(chunk)
        while j - i > 1 and chunk[i] in punct:
            i += 1
        while j - i > 1 and chunk[j - 1] in punct:
            j -= 1
        out.extend(chunk[:i])
        out.append(chunk[i:j])
        out.extend(chunk[j:])
    return out


def test_tokenizer_golden_cases():
    cases = json.loads((SHARED_FIXTURES / "tokenizer_cases.json").read_text())["cases"]
    assert len(cases) >= 15
    for case in cases:
        assert tokenize(case["text"]) == case["tokens"], case["text"]


@settings(max_examples=200)
@given(st.text(max_size=40))
def test_tokenizer_matches_independent_restatement(text):
    assert tokenize(text) == oracle_tokenize(text)


def test_query_split_at_first_space():
    q = Query.from_raw("inception derrty entertainment")
    assert q.relation == "inception"
    assert q.subject == "derrty entertainment"
    assert q.raw == "inception derrty entertainment"


def test_query_reconstructs():
    q = Query.from_raw("capital_of Sweden")
    assert q.relation + " " + q.subject == q.raw


def test_parse_empty_array(tmp_path):
    p = tmp_path / "empty.json"
    p.write_text("[]")
    report = parse_dataset(str(p))
    assert report.samples == [] and report.rejected == []


def test_parse_mini_dataset_fields():
    report = parse_dataset(str(FIXTURES / "mini_dataset.json"))
    assert len(report.samples) == 20
    assert not report.rejected
    first = report.samples[0]
    assert first.id == "mini_0000"
    assert first.query.relation == "capital_of"
    assert first.query.subject == "Sweden"
    assert first.candidates == ["Stockholm", "Oslo", "Helsinki"]
    assert first.answer == "Stockholm"
    assert first.documents[0] == ["Stockholm", "is", "the", "capital", "of", "Sweden", "."]
    # order preserved from file
    assert [s.id for s in report.samples] == [f"mini_{i:04d}" for i in range(20)]


def test_parse_rejections():
    report = parse_dataset(str(FIXTURES / "bad_dataset.json"))
    assert [s.id for s in report.samples] == ["good_0"]
    reasons = dict(report.rejected)
    assert "missing field" in reasons["bad_missing_query"]
    assert "answer" in reasons["bad_answer"]
    assert "two" in reasons["bad_single_candidate"]
    assert "unique" in reasons["bad_dup_candidates"]
    assert "supports" in reasons["bad_no_supports"]


def test_parse_serialize_parse_identity(tmp_path):
    report = parse_dataset(str(FIXTURES / "mini_dataset.json"))
    out = tmp_path / "roundtrip.json"
    write_dataset(report.samples, str(out))
    again = parse_dataset(str(out))
    assert [s.to_obj() for s in again.samples] == [s.to_obj() for s in report.samples]


def _sample(**kw):
    base = dict(
        id="s0",
        query=Query.from_raw("capital_of Sweden"),
        raw_supports=["Stockholm is the capital of Sweden .", "Oslo lies elsewhere ."],
        candidates=["Stockholm", "Oslo"],
        answer="Stockholm",
    )
    base.update(kw)
    return Sample(**base)


def test_mask_consistent_across_documents():
    s = _sample(
        raw_supports=["Sweden is north .", "He moved to Sweden early ."],
        candidates=["Sweden", "Norway"],
        answer="Sweden",
        query=Query.from_raw("neighbour_of Denmark"),
    )
    masked, table = mask_sample(s, np.random.default_rng(0))
    placeholder = table["Sweden"]
    assert placeholder.startswith("MASK_")
    assert masked.raw_supports[0].split()[0] == placeholder
    assert placeholder in masked.raw_supports[1].split()
    assert masked.answer == placeholder


def test_mask_absent_candidate_leaves_supports():
    s = _sample(candidates=["Stockholm", "Atlantis"], answer="Stockholm")
    masked, table = mask_sample(s, np.random.default_rng(1))
    assert "Atlantis" in table
    assert table["Atlantis"] in masked.candidates
    assert all("Atlantis" not in doc for doc in masked.raw_supports)


def test_mask_unmask_round_trip_mini_dataset():
    report = parse_dataset(str(FIXTURES / "mini_dataset.json"))
    masked, tables = mask_dataset(report.samples, seed=7)
    for original, m in zip(report.samples, masked):
        restored = unmask_sample(m, tables[original.id])
        assert restored.to_obj() == original.to_obj()


def test_mask_bijective_per_sample():
    report = parse_dataset(str(FIXTURES / "mini_dataset.json"))
    _, tables = mask_dataset(report.samples, seed=3)
    for table in tables.values():
        assert len(set(table.values())) == len(table)


def test_mask_avoids_existing_placeholder_vocabulary():
    s = _sample(
        raw_supports=["MASK_1 MASK_2 MASK_3 already here , Stockholm too ."],
        candidates=["Stockholm", "Oslo"],
    )
    # whichever indices the rng draws, the emitted placeholders must be fresh
    masked, table = mask_sample(s, np.random.default_rng(5))
    assert not {"MASK_1", "MASK_2", "MASK_3"}.intersection(table.values())
    restored = unmask_sample(masked, table)
    assert restored.to_obj() == s.to_obj()


def test_mask_deterministic_given_seed():
    report = parse_dataset(str(FIXTURES / "mini_dataset.json"))
    a, ta = mask_dataset(report.samples, seed=11)
    b, tb = mask_dataset(report.samples, seed=11)
    assert ta == tb
    assert [s.to_obj() for s in a] == [s.to_obj() for s in b]


def test_mask_word_boundaries():
    s = _sample(
        raw_supports=["York and New York and Yorkshire ."],
        candidates=["New York", "York"],
        answer="New York",
        query=Query.from_raw("located_in Central Park"),
    )
    masked, table = mask_sample(s, np.random.default_rng(2))
    text = masked.raw_supports[0]
    assert "Yorkshire" in text  # substring never touched
    assert table["New York"] in text and table["York"] in text
    assert unmask_sample(masked, table).to_obj() == s.to_obj()


def test_stats_single_sample():
    s = _sample(candidates=["a", "b", "c", "d", "e"], answer="a",
                raw_supports=["a b c", "d e f"])
    st_ = dataset_stats([s])
    assert (st_.candidates.min, st_.candidates.max) == (5, 5)
    assert st_.candidates.mean == 5 and st_.candidates.median == 5


def test_stats_mini_dataset_hand_counted():
    report = parse_dataset(str(FIXTURES / "mini_dataset.json"))
    st_ = dataset_stats(report.samples)
    assert st_.sample_count == 20
    # hand tally: 8 samples with 2 candidates, 10 with 3, 2 with 4
    assert (st_.candidates.min, st_.candidates.max) == (2, 4)
    assert st_.candidates.mean == pytest.approx(2.7)
    assert st_.candidates.median == 3
    # hand tally: 10 samples with 2 documents, 8 with 3, 2 with 4
    assert (st_.documents.min, st_.documents.max) == (2, 4)
    assert st_.documents.mean == pytest.approx(2.6)
    assert st_.documents.median == 2.5
    # token counts cross-checked against the independent tokenizer restatement
    lengths = [len(oracle_tokenize(doc)) for s in report.samples for doc in s.raw_supports]
    assert st_.tokens_per_doc.min == min(lengths)
    assert st_.tokens_per_doc.max == max(lengths)
    assert st_.tokens_per_doc.mean == pytest.approx(sum(lengths) / len(lengths))


def test_stats_empty_dataset_errors():
    with pytest.raises(DatasetError):
        dataset_stats([])


def test_stats_concatenation_law():
    report = parse_dataset(str(FIXTURES / "mini_dataset.json"))
    part_a, part_b = report.samples[:7], report.samples[7:]
    sa, sb, s_all = dataset_stats(part_a), dataset_stats(part_b), dataset_stats(report.samples)
    assert s_all.candidates.min == min(sa.candidates.min, sb.candidates.min)
    assert s_all.candidates.max == max(sa.candidates.max, sb.candidates.max)
    weighted = (sa.candidates.mean * len(part_a) + sb.candidates.mean * len(part_b)) / 20
    assert s_all.candidates.mean == pytest.approx(weighted)


def test_stats_csv_shape():
    report = parse_dataset(str(FIXTURES / "mini_dataset.json"))
    csv = dataset_stats(report.samples).to_csv()
    lines = csv.strip().split("\n")
    assert lines[0] == "field,min,max,mean,median"
    assert len(lines) == 4


def test_split_check_disjoint_and_overlap():
    report = parse_dataset(str(FIXTURES / "mini_dataset.json"))
    train, dev = report.samples[:15], report.samples[15:]
    ok = split_check(train, dev)
    assert ok.train_size == 15 and ok.dev_size == 5 and ok.disjoint
    bad = split_check(report.samples, report.samples)
    assert not bad.disjoint
    assert len(bad.overlap) == 20


def test_normalization_is_case_and_punct_insensitive():
    assert normalize_tokens(["U.S", "."]) == normalize_tokens(["US"])
    assert normalize_tokens(["New", "York"]) == normalize_tokens(["new", "york"])
    assert normalize_tokens(["(", "Sweden", ")"]) == ("sweden",)

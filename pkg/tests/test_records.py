import json
import math

import pytest
from hypothesis import given, strategies as st

from medco import synthetic
from medco.errors import CorpusError, RecordValidationError
from medco.records import (BasicInfo, MedicalRecord, Truth, load_corpus,
                           save_corpus, split_dataset, validate_corpus,
                           validate_record)


def make_record(pid="p1", dept="Neurology", complaint="headache",
                diseases=("migraine",)):
    return MedicalRecord(
        patient_id=pid, department=dept,
        basic_info=BasicInfo(chief_complaint=complaint),
        truth=Truth(diseases=list(diseases)),
    )


def test_round_trip_dict():
    record = synthetic.make_corpus(1, with_attachments=True)[0]
    assert MedicalRecord.from_dict(record.to_dict()) == record


def test_validate_record_reports_every_violation():
    record = make_record(pid=" ", dept="", complaint="", diseases=())
    violations = validate_record(record)
    assert len(violations) == 4
    assert any("patient_id" in v for v in violations)
    assert any("chief_complaint" in v for v in violations)


def test_validate_record_attachment_kind():
    record = synthetic.make_corpus(1, with_attachments=True)[0]
    record.examination.attachments[0].declared_kind = "sketch"
    assert any("declared_kind" in v for v in validate_record(record))


def test_validate_corpus_duplicate_ids():
    violations = validate_corpus([make_record(), make_record()])
    assert any("duplicate" in v for v in violations)


def test_save_and_load_corpus_round_trip(tmp_path):
    records = synthetic.make_corpus(5)
    save_corpus(records, tmp_path)
    loaded = load_corpus(tmp_path)
    assert loaded == records


def test_load_corpus_single_file(tmp_path):
    records = synthetic.make_corpus(3)
    path = tmp_path / "corpus.json"
    path.write_text(json.dumps([r.to_dict() for r in records]),
                    encoding="utf-8")
    assert load_corpus(path) == records


def test_load_corpus_malformed_json(tmp_path):
    (tmp_path / "cases").mkdir()
    (tmp_path / "cases" / "bad.json").write_text("{not json", encoding="utf-8")
    with pytest.raises(CorpusError):
        load_corpus(tmp_path)


def test_load_corpus_validation_failure(tmp_path):
    path = tmp_path / "corpus.json"
    doc = make_record().to_dict()
    doc["truth"]["diseases"] = []
    path.write_text(json.dumps([doc]), encoding="utf-8")
    with pytest.raises(RecordValidationError):
        load_corpus(path)
    assert len(load_corpus(path, validate=False)) == 1


def test_split_missing_path():
    with pytest.raises(CorpusError):
        load_corpus("/nonexistent/corpus")


def test_split_fraction_one_is_all_train(corpus16):
    result = split_dataset(corpus16, seed=7, train_fraction=1.0)
    assert sorted(result.train) == sorted(r.patient_id for r in corpus16)
    assert result.test == []


def test_split_deterministic(corpus16):
    a = split_dataset(corpus16, seed=3, train_fraction=0.5)
    b = split_dataset(corpus16, seed=3, train_fraction=0.5)
    assert a == b
    c = split_dataset(corpus16, seed=4, train_fraction=0.5)
    assert a != c  # different seed shuffles differently


def test_split_rejects_bad_fraction(corpus16):
    with pytest.raises(ValueError):
        split_dataset(corpus16, seed=0, train_fraction=1.5)


@given(
    sizes=st.lists(st.integers(min_value=1, max_value=40), min_size=1,
                   max_size=4),
    fraction=st.floats(min_value=0.0, max_value=1.0),
    seed=st.integers(min_value=0, max_value=10**6),
)
def test_split_floor_per_department(sizes, fraction, seed):
    records = []
    for d, n in enumerate(sizes):
        for i in range(n):
            records.append(make_record(pid=f"d{d}p{i}", dept=f"dept{d}"))
    result = split_dataset(records, seed=seed, train_fraction=fraction)
    expected = sum(math.floor(fraction * n) for n in sizes)
    assert len(result.train) == expected
    assert len(result.train) + len(result.test) == len(records)
    assert set(result.train).isdisjoint(result.test)


def test_split_506_reproduces_259_247():
    corpus, fractions = synthetic.make_split_corpus_506()
    assert len(corpus) == 506
    result = split_dataset(corpus, seed=0, train_fraction=fractions)
    assert (len(result.train), len(result.test)) == (259, 247)

"""Medical-record corpus: schema, validation, loading, and the dataset split.

A corpus on disk is either a directory with ``cases/<patient_id>.json``
(one document per case, attachments under ``images/<patient_id>/``) or a
single JSON file holding a list of case documents.  Field names follow
``docs/record_schema.md``; content may be Chinese or English.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional, Union

from .errors import CorpusError, RecordValidationError

ATTACHMENT_KINDS = ("radiological", "report_photo", "other", "unknown")


@dataclass
class ImageAttachment:
    uri: str
    declared_kind: str = "unknown"
    cached_interpretation: Optional[str] = None

    def set_interpretation(self, text: str) -> None:
        """Cache the interpretation; immutable once set for this uri."""
        if self.cached_interpretation is not None and self.cached_interpretation != text:
            raise ValueError(f"interpretation for {self.uri} is already cached")
        self.cached_interpretation = text


@dataclass
class BasicInfo:
    chief_complaint: str = ""
    present_illness: str = ""
    past_history: str = ""
    personal_history: str = ""
    personality: str = ""


@dataclass
class Examination:
    physical_exam: str = ""
    auxiliary_exams: str = ""
    attachments: list[ImageAttachment] = field(default_factory=list)


@dataclass
class Truth:
    diseases: list[str] = field(default_factory=list)
    rationale: str = ""
    treatment_plan: str = ""


@dataclass
class MedicalRecord:
    patient_id: str
    department: str
    basic_info: BasicInfo = field(default_factory=BasicInfo)
    examination: Examination = field(default_factory=Examination)
    truth: Truth = field(default_factory=Truth)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "MedicalRecord":
        try:
            basic = BasicInfo(**doc.get("basic_info", {}))
            exam_doc = dict(doc.get("examination", {}))
            attachments = [ImageAttachment(**a) for a in exam_doc.pop("attachments", [])]
            exam = Examination(attachments=attachments, **exam_doc)
            truth = Truth(**doc.get("truth", {}))
            return cls(
                patient_id=doc.get("patient_id", ""),
                department=doc.get("department", ""),
                basic_info=basic,
                examination=exam,
                truth=truth,
            )
        except TypeError as exc:
            raise CorpusError(f"malformed record document: {exc}") from exc


@dataclass
class DatasetSplit:
    train: list[str]
    test: list[str]


def validate_record(record: MedicalRecord) -> list[str]:
    """Return every invariant violation (empty list means ok)."""
    violations = []
    if not record.patient_id.strip():
        violations.append("patient_id empty")
    if not record.department.strip():
        violations.append("department empty")
    if not record.basic_info.chief_complaint.strip():
        violations.append("basic_info.chief_complaint empty")
    if not record.truth.diseases:
        violations.append("truth.diseases empty")
    for i, attachment in enumerate(record.examination.attachments):
        if not attachment.uri.strip():
            violations.append(f"examination.attachments[{i}].uri empty")
        if attachment.declared_kind not in ATTACHMENT_KINDS:
            violations.append(
                f"examination.attachments[{i}].declared_kind "
                f"{attachment.declared_kind!r} not one of {ATTACHMENT_KINDS}"
            )
    return violations


def validate_corpus(records: list[MedicalRecord]) -> list[str]:
    """Corpus-level checks: per-record invariants plus patient_id uniqueness."""
    violations = []
    seen: dict[str, int] = {}
    for idx, record in enumerate(records):
        for v in validate_record(record):
            violations.append(f"record {idx} ({record.patient_id!r}): {v}")
        if record.patient_id in seen:
            violations.append(
                f"record {idx}: duplicate patient_id {record.patient_id!r} "
                f"(first seen at record {seen[record.patient_id]})"
            )
        else:
            seen[record.patient_id] = idx
    return violations


def _load_documents(path: Path) -> list[dict]:
    if not path.exists():
        raise CorpusError(f"corpus path does not exist: {path}")
    if path.is_dir():
        case_dir = path / "cases" if (path / "cases").is_dir() else path
        docs = []
        for case_file in sorted(case_dir.glob("*.json")):
            try:
                docs.append(json.loads(case_file.read_text(encoding="utf-8")))
            except json.JSONDecodeError as exc:
                raise CorpusError(f"malformed case file {case_file.name}: {exc}") from exc
        return docs
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusError(f"malformed corpus file {path}: {exc}") from exc
    if data == []:
        return []
    if not isinstance(data, list):
        raise CorpusError(f"corpus file {path} must contain a JSON list")
    return data


def load_corpus(path: Union[str, Path], validate: bool = True) -> list[MedicalRecord]:
    """Load and validate a corpus; order follows the file order (stable)."""
    docs = _load_documents(Path(path))
    records = []
    for idx, doc in enumerate(docs):
        try:
            records.append(MedicalRecord.from_dict(doc))
        except CorpusError as exc:
            raise CorpusError(f"record {idx}: {exc}") from exc
    if validate:
        violations = validate_corpus(records)
        if violations:
            raise RecordValidationError(violations)
    return records


def save_corpus(records: list[MedicalRecord], path: Union[str, Path]) -> None:
    """Write a corpus directory (``cases/<patient_id>.json``)."""
    base = Path(path)
    case_dir = base / "cases"
    case_dir.mkdir(parents=True, exist_ok=True)
    for record in records:
        out = case_dir / f"{record.patient_id}.json"
        out.write_text(
            json.dumps(record.to_dict(), ensure_ascii=False, indent=2),
            encoding="utf-8",
        )


def split_dataset(
    records: list[MedicalRecord],
    seed: int,
    train_fraction: Union[float, dict],
) -> DatasetSplit:
    """Seeded department-level split.

    ``train_fraction`` is either one ratio for every department or a
    ``{department: ratio}`` map.  Within each department the cases are
    shuffled with a seed derived from (seed, department), and the first
    ``floor(fraction * n)`` go to train.  Deterministic for a fixed seed.
    """
    if not records:
        raise CorpusError("cannot split an empty corpus")

    def fraction_for(dept: str) -> float:
        f = train_fraction[dept] if isinstance(train_fraction, dict) else train_fraction
        if not 0.0 <= f <= 1.0:
            raise ValueError(f"train_fraction for {dept!r} must be in [0, 1], got {f}")
        return f

    by_dept: dict[str, list[str]] = {}
    for record in records:
        by_dept.setdefault(record.department, []).append(record.patient_id)

    train: list[str] = []
    test: list[str] = []
    for dept in sorted(by_dept):
        ids = list(by_dept[dept])
        rng = random.Random(f"{seed}:{dept}")
        rng.shuffle(ids)
        n_train = math.floor(fraction_for(dept) * len(ids))
        train.extend(ids[:n_train])
        test.extend(ids[n_train:])
    return DatasetSplit(train=train, test=test)

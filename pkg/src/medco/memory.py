"""The three-store learning memory with embedding retrieval.

Case-store: patient_id -> the expert's five-section suggestion text.
Disease-store: disease name -> knowledge card.
Symptom-store: ground-truth symptom text -> {diseases, patient_id}.

Retrieval is an exact inner-product scan over unit vectors; the
retrieval-range knob gates the candidate symptom keys by the insertion
order of their cases (the first ``ceil(range * N_cases)`` learned cases).
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import MemoryFormatError

SNAPSHOT_VERSION = 1


@dataclass
class KnowledgeCard:
    definition: list[str] = field(default_factory=list)
    pathogenesis: list[str] = field(default_factory=list)
    main_symptoms: list[str] = field(default_factory=list)
    auxiliary_exam_methods: list[str] = field(default_factory=list)
    treatment_plans: list[str] = field(default_factory=list)

    FIELDS = ("definition", "pathogenesis", "main_symptoms",
              "auxiliary_exam_methods", "treatment_plans")

    def to_dict(self) -> dict:
        return {name: list(getattr(self, name)) for name in self.FIELDS}

    @classmethod
    def from_dict(cls, doc: dict) -> "KnowledgeCard":
        return cls(**{name: list(doc.get(name, [])) for name in cls.FIELDS})


@dataclass
class CaseEntry:
    key: str  # patient_id
    value: str  # five-section suggestion text
    insertion_index: int


@dataclass
class DiseaseEntry:
    key: str
    value: KnowledgeCard
    insertion_index: int


@dataclass
class SymptomEntry:
    key: str
    diseases: list[str]
    patient_id: str
    insertion_index: int


@dataclass
class RecallItem:
    disease: str
    card: KnowledgeCard
    patient_id: str
    suggestions: str
    score: float


class MemoryStores:
    """Key-value learning memory; writes are atomic per case."""

    def __init__(self, embedder):
        self.embedder = embedder
        self.cases: dict[str, CaseEntry] = {}
        self.diseases: dict[str, DiseaseEntry] = {}
        self.symptoms: dict[str, SymptomEntry] = {}
        self.vectors: dict[str, np.ndarray] = {}
        self.dimension: Optional[int] = None
        self._lock = threading.Lock()

    # -- write path ---------------------------------------------------------

    def store_feedback(self, patient_id: str, truth_symptoms: Sequence[str],
                       truth_diseases: Sequence[str], suggestions: str,
                       knowledge: dict[str, KnowledgeCard]) -> None:
        """Upsert one learned case across all three stores, atomically."""
        if set(knowledge) != set(truth_diseases):
            raise ValueError(
                f"knowledge keys {sorted(knowledge)} do not match "
                f"truth diseases {sorted(set(truth_diseases))}"
            )
        new_keys = [f"symptom:{s}" for s in truth_symptoms
                    if f"symptom:{s}" not in self.vectors]
        new_keys += [f"disease:{d}" for d in truth_diseases
                     if f"disease:{d}" not in self.vectors]
        # Embed outside the lock; a failure here leaves the stores untouched.
        embedded = {}
        if new_keys:
            texts = [k.split(":", 1)[1] for k in new_keys]
            for key, vec in zip(new_keys, self.embedder.embed(texts)):
                embedded[key] = np.asarray(vec, dtype=np.float64)

        with self._lock:
            if patient_id in self.cases:
                case_index = self.cases[patient_id].insertion_index
            else:
                case_index = len(self.cases)
            self.cases[patient_id] = CaseEntry(patient_id, suggestions, case_index)
            for disease in truth_diseases:
                index = (self.diseases[disease].insertion_index
                         if disease in self.diseases else len(self.diseases))
                self.diseases[disease] = DiseaseEntry(disease, knowledge[disease], index)
            for symptom in truth_symptoms:
                index = (self.symptoms[symptom].insertion_index
                         if symptom in self.symptoms else len(self.symptoms))
                self.symptoms[symptom] = SymptomEntry(
                    symptom, list(truth_diseases), patient_id, index
                )
            for key, vec in embedded.items():
                if self.dimension is None:
                    self.dimension = vec.shape[0]
                elif vec.shape[0] != self.dimension:
                    raise ValueError("embedding dimension changed mid-store")
                self.vectors[key] = vec

    # -- read path ----------------------------------------------------------

    def candidate_cases(self, retrieval_range: float) -> set[str]:
        """Patient ids visible under the given retrieval range."""
        if not 0.0 <= retrieval_range <= 1.0:
            raise ValueError("retrieval range must be in [0, 1]")
        cutoff = math.ceil(retrieval_range * len(self.cases))
        return {pid for pid, entry in self.cases.items()
                if entry.insertion_index < cutoff}

    def recall_by_symptoms(self, symptom_summary: str, k: int = 3,
                           retrieval_range: float = 1.0) -> list[RecallItem]:
        """Top-k diseases for a symptom summary, gated by retrieval range."""
        if k < 1:
            raise ValueError("k must be positive")
        allowed = self.candidate_cases(retrieval_range)
        candidates = [e for e in self.symptoms.values() if e.patient_id in allowed]
        if not candidates:
            return []

        query = np.asarray(self.embedder.embed([symptom_summary])[0], dtype=np.float64)
        scored = []
        for entry in candidates:
            vec = self.vectors[f"symptom:{entry.key}"]
            score = float(np.dot(query, vec))
            scored.append((score, entry))
        scored.sort(key=lambda t: (-t[0], t[1].insertion_index, t[1].key))

        items: list[RecallItem] = []
        seen_diseases: set[str] = set()
        for score, entry in scored:
            for disease in entry.diseases:
                if disease in seen_diseases:
                    continue
                disease_entry = self.diseases.get(disease)
                if disease_entry is None:
                    continue
                case_entry = self.cases.get(entry.patient_id)
                items.append(RecallItem(
                    disease=disease,
                    card=disease_entry.value,
                    patient_id=entry.patient_id,
                    suggestions=case_entry.value if case_entry else "",
                    score=score,
                ))
                seen_diseases.add(disease)
                if len(items) >= k:
                    return items
        return items

    # -- persistence --------------------------------------------------------

    def persist(self, path: Union[str, Path]) -> None:
        snapshot = {
            "version": SNAPSHOT_VERSION,
            "dimension": self.dimension,
            "cases": [
                {"key": e.key, "value": e.value, "insertion_index": e.insertion_index}
                for e in self.cases.values()
            ],
            "diseases": [
                {"key": e.key, "value": e.value.to_dict(),
                 "insertion_index": e.insertion_index}
                for e in self.diseases.values()
            ],
            "symptoms": [
                {"key": e.key, "diseases": e.diseases, "patient_id": e.patient_id,
                 "insertion_index": e.insertion_index}
                for e in self.symptoms.values()
            ],
            "vectors": {key: vec.tolist() for key, vec in self.vectors.items()},
        }
        Path(path).write_text(
            json.dumps(snapshot, ensure_ascii=False), encoding="utf-8"
        )

    def restore(self, path: Union[str, Path]) -> None:
        """Load a snapshot; on any format error the memory is left untouched."""
        raw = Path(path).read_text(encoding="utf-8")
        if not raw.strip():
            self.cases, self.diseases, self.symptoms = {}, {}, {}
            self.vectors, self.dimension = {}, None
            return
        try:
            snapshot = json.loads(raw)
            if snapshot.get("version") != SNAPSHOT_VERSION:
                raise MemoryFormatError(
                    f"unsupported snapshot version {snapshot.get('version')!r}"
                )
            cases = {
                d["key"]: CaseEntry(d["key"], d["value"], d["insertion_index"])
                for d in snapshot["cases"]
            }
            diseases = {
                d["key"]: DiseaseEntry(
                    d["key"], KnowledgeCard.from_dict(d["value"]), d["insertion_index"]
                )
                for d in snapshot["diseases"]
            }
            symptoms = {
                d["key"]: SymptomEntry(
                    d["key"], list(d["diseases"]), d["patient_id"], d["insertion_index"]
                )
                for d in snapshot["symptoms"]
            }
            vectors = {
                key: np.asarray(values, dtype=np.float64)
                for key, values in snapshot["vectors"].items()
            }
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise MemoryFormatError(f"corrupted memory snapshot: {exc}") from exc
        self.cases, self.diseases, self.symptoms = cases, diseases, symptoms
        self.vectors = vectors
        self.dimension = snapshot.get("dimension")

    def __eq__(self, other) -> bool:
        if not isinstance(other, MemoryStores):
            return NotImplemented
        return (
            self.cases == other.cases
            and self.diseases == other.diseases
            and self.symptoms == other.symptoms
            and set(self.vectors) == set(other.vectors)
            and all(np.array_equal(self.vectors[k], other.vectors[k])
                    for k in self.vectors)
        )

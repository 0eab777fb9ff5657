"""Evaluation metrics: judged five-section scores, embedding-matched set
scoring against ICD-10 terminology, and hierarchical code accuracy.

The ICD index is an exact inner-product scan over unit title vectors;
corpora are small enough that no approximate structure is warranted.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import agents
from .agents import RoleSpec
from .dialogue import DiagnosticReport, render_report
from .errors import ReportParseError
from .records import MedicalRecord

ICD_CODE_RE = re.compile(r"^[A-Z]\d{2}(\.\d{1,3})?$")

HDE_SECTIONS = ("symptom", "examination", "results", "rationales", "treatment")

_HDE_HEADERS = {
    "symptom": ("symptom", "symptoms", "症状"),
    "examination": ("medical examination", "examination", "医学检查"),
    "results": ("diagnostic results", "诊断结果"),
    "rationales": ("diagnostic rationales", "rationale", "rationales", "诊断依据"),
    "treatment": ("treatment plan", "治疗方案"),
}


def icd_levels(code: str) -> tuple[str, str, str]:
    """(chapter letter, 3-character category, full code) projections."""
    if not ICD_CODE_RE.match(code):
        raise ValueError(f"malformed ICD-10 code {code!r}")
    return code[0], code[:3], code


@dataclass
class IcdTerm:
    code: str
    title: str


class IcdIndex:
    """Exact top-k inner-product search over ICD term titles."""

    def __init__(self, terms: list[IcdTerm], embedder):
        seen = set()
        for term in terms:
            if not ICD_CODE_RE.match(term.code):
                raise ValueError(f"malformed ICD-10 code {term.code!r}")
            if not term.title.strip():
                raise ValueError(f"empty title for code {term.code}")
            if term.code in seen:
                raise ValueError(f"duplicate ICD-10 code {term.code}")
            seen.add(term.code)
        self.terms = list(terms)
        self.embedder = embedder
        vectors = embedder.embed([t.title for t in terms]) if terms else []
        self._matrix = (np.vstack(vectors) if vectors
                        else np.zeros((0, 1), dtype=np.float64))

    def __len__(self) -> int:
        return len(self.terms)

    def top_k(self, query: str, k: int) -> list[tuple[str, float]]:
        """[(code, score)] sorted by score desc, code asc on ties."""
        if not self.terms:
            return []
        vec = np.asarray(self.embedder.embed([query])[0], dtype=np.float64)
        scores = self._matrix @ vec
        order = sorted(range(len(self.terms)),
                       key=lambda i: (-scores[i], self.terms[i].code))
        return [(self.terms[i].code, float(scores[i])) for i in order[:k]]


def load_icd_terminology(path: Union[str, Path]) -> list[IcdTerm]:
    """Delimited text with columns code,title (header optional)."""
    terms = []
    with open(path, encoding="utf-8", newline="") as handle:
        for line_no, row in enumerate(csv.reader(handle), start=1):
            if not row or (line_no == 1 and row[0].strip().lower() == "code"):
                continue
            if len(row) < 2:
                raise ValueError(f"malformed terminology row {line_no}: {row}")
            terms.append(IcdTerm(code=row[0].strip(), title=row[1].strip()))
    return terms


def build_icd_index(path: Union[str, Path], embedder) -> IcdIndex:
    return IcdIndex(load_icd_terminology(path), embedder)


# --------------------------------------------------------------------------
# Entity extraction
# --------------------------------------------------------------------------

def extract_disease_entities(report: DiagnosticReport, backends=None,
                             tag: str = "") -> list[str]:
    """Disease entities from the diagnostic results.

    Deterministic mode splits on enumerators and common delimiters;
    passing ``backends`` routes through the judge profile with a fixed
    extraction instruction instead.
    """
    if backends is not None:
        instruction = (
            "Extract the distinct disease entities from the diagnostic results "
            "below. Output one disease name per line and nothing else.\n"
            + "\n".join(report.diagnostic_results)
        )
        reply = backends.chat("judge", "You are a medical entity extractor.",
                              [("user", instruction)], tag=tag)
        entities = [line.strip() for line in reply.splitlines() if line.strip()]
    else:
        entities = []
        for item in report.diagnostic_results:
            parts = re.split(r"[（(]\s*\d+\s*[)）]|[;；,，、\n]", item)
            entities.extend(p.strip(" \t.。") for p in parts)
    seen = set()
    out = []
    for entity in entities:
        if entity and entity not in seen:
            seen.add(entity)
            out.append(entity)
    return out


# --------------------------------------------------------------------------
# SEMA
# --------------------------------------------------------------------------

@dataclass
class SemaResult:
    entity_count: int
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def sema_case(pred_entities: Sequence[str], truth_entities: Sequence[str],
              index: IcdIndex, k: int = 10) -> SemaResult:
    """Set-level matching through top-k ICD code sets.

    A predicted entity matches an unmatched truth entity iff their top-k
    code sets intersect.  One-to-one assignments are chosen greedily in
    input order and then repaired with augmenting paths, so the match
    count equals the maximum bipartite matching cardinality.
    """
    pred_sets = [frozenset(c for c, _ in index.top_k(e, k)) for e in pred_entities]
    truth_sets = [frozenset(c for c, _ in index.top_k(e, k)) for e in truth_entities]
    owner: dict[int, int] = {}  # truth index -> pred index

    def try_assign(i: int, visited: set[int]) -> bool:
        for j, truth in enumerate(truth_sets):
            if j in visited or not (pred_sets[i] & truth):
                continue
            visited.add(j)
            if j not in owner or try_assign(owner[j], visited):
                owner[j] = i
                return True
        return False

    tp = sum(try_assign(i, set()) for i in range(len(pred_sets)))
    fp = len(pred_sets) - tp
    fn = len(truth_sets) - tp
    precision = 100.0 * tp / (tp + fp) if tp + fp else 0.0
    recall = 100.0 * tp / (tp + fn) if tp + fn else 0.0
    return SemaResult(
        entity_count=len(pred_entities), tp=tp, fp=fp, fn=fn,
        precision=precision, recall=recall, f1=_f1(precision, recall),
    )


# --------------------------------------------------------------------------
# CASCADE
# --------------------------------------------------------------------------

@dataclass
class CascadeResult:
    coarse_hit_frac: float
    medium_hit_frac: float
    fine_hit_frac: float
    empty_truth: bool = False


def cascade_case(pred_entities: Sequence[str], truth_entities: Sequence[str],
                 index: IcdIndex) -> CascadeResult:
    """Hierarchical accuracy via top-1 ICD codes, macro over truth entities."""
    if not truth_entities:
        return CascadeResult(0.0, 0.0, 0.0, empty_truth=True)
    pred_codes = [index.top_k(e, 1)[0][0] for e in pred_entities if len(index)]
    pred_levels = [icd_levels(c) for c in pred_codes]
    hits = [0, 0, 0]
    for entity in truth_entities:
        truth_code = index.top_k(entity, 1)[0][0] if len(index) else None
        if truth_code is None:
            continue
        truth_lv = icd_levels(truth_code)
        for level in range(3):
            if any(p[level] == truth_lv[level] for p in pred_levels):
                hits[level] += 1
    n = len(truth_entities)
    return CascadeResult(hits[0] / n, hits[1] / n, hits[2] / n)


# --------------------------------------------------------------------------
# HDE
# --------------------------------------------------------------------------

@dataclass
class HdeScore:
    symptom: int
    examination: int
    results: int
    rationales: int
    treatment: int
    avg: float = field(init=False)

    def __post_init__(self):
        values = self.values()
        for name, value in zip(HDE_SECTIONS, values):
            if not 1 <= value <= 4:
                raise ValueError(f"{name} score {value} outside 1..4")
        self.avg = sum(values) / 5.0

    def values(self) -> list[int]:
        return [self.symptom, self.examination, self.results,
                self.rationales, self.treatment]


def parse_hde_reply(text: str) -> HdeScore:
    blocks: dict[str, int] = {}
    for match in re.finditer(r"#\s*([^#\n]+?)\s*#+\s*[:：]?\s*(\d+)", text):
        blocks[match.group(1).strip().lower()] = int(match.group(2))
    kwargs = {}
    for name, aliases in _HDE_HEADERS.items():
        value = next((blocks[a] for a in aliases if a in blocks), None)
        if value is None:
            raise ReportParseError(f"missing judge score for {name!r}", raw_text=text)
        if not 1 <= value <= 4:
            raise ReportParseError(f"judge score for {name!r} out of range: {value}",
                                   raw_text=text)
        kwargs[name] = value
    return HdeScore(**kwargs)


def judge_hde(report: DiagnosticReport, record: MedicalRecord, backends,
              language: str = "en", tag: str = "") -> HdeScore:
    """Expert-judge scores for the five report sections, parsed and averaged."""
    if not record.truth.diseases:
        raise ValueError("record has no ground-truth diagnosis")
    spec = RoleSpec(role="expert",
                    prompt_template=agents.load_prompt("judge", language),
                    language=language, backend_profile="judge")
    system = agents.render_system_prompt(spec, record)
    history = [("user", render_report(report, language))]
    raw = backends.chat("judge", system, history, tag=tag)
    try:
        return parse_hde_reply(raw)
    except ReportParseError:
        nudge = ("请严格按照要求的五行 #...# 整数格式重新输出。" if language == "zh"
                 else "Please answer again with exactly five lines of the form "
                      "#Section# <integer 1-4>.")
        raw2 = backends.chat("judge", system,
                             history + [("assistant", raw), ("user", nudge)], tag=tag)
        return parse_hde_reply(raw2)


# --------------------------------------------------------------------------
# Aggregation
# --------------------------------------------------------------------------

@dataclass
class HdeAggregate:
    section_means: list[float]
    avg: float
    std: float


@dataclass
class SemaAggregate:
    mean_entity_count: float
    precision: float
    recall: float
    f1: float


@dataclass
class CascadeAggregate:
    coarse_pct: float
    medium_pct: float
    fine_pct: float


def aggregate_hde(scores_or_means: Sequence) -> HdeAggregate:
    """Per-section means across cases; avg and std over the five means.

    Accepts HdeScore instances or pre-averaged 5-tuples of section means.
    """
    if not scores_or_means:
        raise ValueError("no cases to aggregate")
    rows = [
        s.values() if isinstance(s, HdeScore) else list(s)
        for s in scores_or_means
    ]
    means = [sum(r[i] for r in rows) / len(rows) for i in range(5)]
    avg = sum(means) / 5.0
    std = math.sqrt(sum((m - avg) ** 2 for m in means) / 5.0)
    return HdeAggregate(section_means=means, avg=avg, std=std)


def aggregate_sema(results: Sequence[SemaResult]) -> SemaAggregate:
    """Corpus means of #, P, R; corpus F1 is the harmonic mean of P and R."""
    if not results:
        raise ValueError("no cases to aggregate")
    n = len(results)
    precision = sum(r.precision for r in results) / n
    recall = sum(r.recall for r in results) / n
    return SemaAggregate(
        mean_entity_count=sum(r.entity_count for r in results) / n,
        precision=precision,
        recall=recall,
        f1=_f1(precision, recall),
    )


def corpus_f1(precision: float, recall: float) -> float:
    """Harmonic mean of already-aggregated precision and recall."""
    return _f1(precision, recall)


def aggregate_cascade(results: Sequence[CascadeResult]) -> CascadeAggregate:
    if not results:
        raise ValueError("no cases to aggregate")
    n = len(results)
    return CascadeAggregate(
        coarse_pct=100.0 * sum(r.coarse_hit_frac for r in results) / n,
        medium_pct=100.0 * sum(r.medium_hit_frac for r in results) / n,
        fine_pct=100.0 * sum(r.fine_hit_frac for r in results) / n,
    )

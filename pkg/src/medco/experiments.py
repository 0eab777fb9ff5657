"""Batch runners: the learning phase over a training split, practicing runs
with judged and code-level scoring, retrieval-range curves, and a multimodal
subset run.  All outputs under a run directory are byte-stable given the same
inputs and clock.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

from .dialogue import run_learning_case, run_practicing_case, write_transcript
from .memory import MemoryStores
from .metrics import (CascadeAggregate, HdeAggregate, IcdIndex, SemaAggregate,
                      aggregate_cascade, aggregate_hde, aggregate_sema,
                      cascade_case, extract_disease_entities, judge_hde,
                      sema_case)
from .records import MedicalRecord

_STRATEGY_LABELS = {
    "knowledge": "w/ knowledge",
    "suggestion": "w/ suggestions",
    "discussion": "w/ discussion",
}

HDE_COLUMNS = ("Symptom", "Medical Examination", "Diagnostic Results",
               "Diagnostic Rationales", "Treatment Plan")


def config_hash(config: dict) -> str:
    """Stable short hash of a run configuration."""
    canonical = json.dumps(config, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def strategy_label(strategy: str, retrieval_range: float) -> str:
    base = _STRATEGY_LABELS[strategy]
    if retrieval_range >= 1.0:
        return base
    if retrieval_range == 0:
        return "w/o memory"
    return f"{base}, know {int(round(retrieval_range * 100))}%"


def _safe_name(session_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", session_id)


def prepare_run_dir(run_dir: Union[str, Path]) -> Path:
    run_dir = Path(run_dir)
    for sub in ("transcripts", "memory", "results"):
        (run_dir / sub).mkdir(parents=True, exist_ok=True)
    return run_dir


def _sink(run_dir: Path, clock) -> Callable:
    def write(session):
        path = run_dir / "transcripts" / f"{_safe_name(session.session_id)}.jsonl"
        write_transcript(session, path, clock)
    return write


# --------------------------------------------------------------------------
# Learning phase
# --------------------------------------------------------------------------

def run_learning_phase(records: Sequence[MedicalRecord], memory: MemoryStores,
                       backends, tools, run_dir: Union[str, Path],
                       language: str = "en", turn_cap: int = 20,
                       strict: bool = False,
                       clock: Optional[Callable[[], float]] = None) -> dict:
    """Learn every record in order, checkpointing after each case.

    Interrupted runs resume from the progress file and memory snapshot;
    a resumed run ends in the same memory state as an uninterrupted one.
    With ``strict=False`` failing cases are recorded in the failure ledger
    and skipped; with ``strict=True`` the first failure propagates.
    """
    run_dir = prepare_run_dir(run_dir)
    progress_path = run_dir / "progress.json"
    snapshot_path = run_dir / "memory" / "snapshot.json"

    if progress_path.exists():
        progress = json.loads(progress_path.read_text(encoding="utf-8"))
        if progress["done"] and snapshot_path.exists():
            memory.restore(snapshot_path)
    else:
        progress = {"done": [], "failed": {}}

    sink = _sink(run_dir, clock)
    for record in records:
        pid = record.patient_id
        if pid in progress["done"]:
            continue
        try:
            run_learning_case(record, memory, backends, tools, language,
                              turn_cap, transcript_sink=sink)
        except Exception as exc:
            progress["failed"][pid] = f"{type(exc).__name__}: {exc}"
            progress_path.write_text(json.dumps(progress, ensure_ascii=False,
                                                indent=2), encoding="utf-8")
            if strict:
                raise
            continue
        memory.persist(snapshot_path)
        progress["done"].append(pid)
        progress_path.write_text(json.dumps(progress, ensure_ascii=False, indent=2),
                                 encoding="utf-8")
    return {"done": list(progress["done"]), "failed": dict(progress["failed"]),
            "snapshot": str(snapshot_path)}


# --------------------------------------------------------------------------
# Practicing phase
# --------------------------------------------------------------------------

@dataclass
class ResultRow:
    label: str
    n_cases: int
    hde: HdeAggregate
    sema: SemaAggregate
    cascade: CascadeAggregate
    config: str


def run_practicing_phase(records: Sequence[MedicalRecord], memory: MemoryStores,
                         strategy: str, retrieval_range: float, backends, tools,
                         icd_index: IcdIndex, run_dir: Union[str, Path],
                         language: str = "en", turn_cap: int = 20, k: int = 3,
                         label: Optional[str] = None,
                         clock: Optional[Callable[[], float]] = None,
                         strict: bool = False) -> ResultRow:
    """Practice every record, judge the final reports, aggregate the metrics."""
    run_dir = prepare_run_dir(run_dir)
    sink = _sink(run_dir, clock)
    label = label or strategy_label(strategy, retrieval_range)
    config = config_hash({
        "strategy": strategy, "retrieval_range": retrieval_range,
        "language": language, "turn_cap": turn_cap, "k": k,
        "cases": [r.patient_id for r in records],
    })

    hde_scores, sema_results, cascade_results, per_case = [], [], [], []
    failures = {}
    for record in records:
        tag = f"practice:{strategy}:{record.patient_id}"
        try:
            report = run_practicing_case(
                record, memory, strategy, retrieval_range, backends, tools,
                language, turn_cap, k, transcript_sink=sink)
            hde = judge_hde(report, record, backends, language,
                            tag=f"judge:{tag}")
            pred = extract_disease_entities(report)
        except Exception as exc:
            failures[record.patient_id] = f"{type(exc).__name__}: {exc}"
            if strict:
                raise
            continue
        truth = record.truth.diseases
        sema = sema_case(pred, truth, icd_index)
        cascade = cascade_case(pred, truth, icd_index)
        hde_scores.append(hde)
        sema_results.append(sema)
        cascade_results.append(cascade)
        per_case.append({
            "patient_id": record.patient_id,
            "report": report.to_dict(),
            "hde": hde.values(),
            "pred_entities": pred,
            "sema": {"tp": sema.tp, "fp": sema.fp, "fn": sema.fn,
                     "precision": sema.precision, "recall": sema.recall},
            "cascade": [cascade.coarse_hit_frac, cascade.medium_hit_frac,
                        cascade.fine_hit_frac],
        })

    if not hde_scores:
        raise RuntimeError(f"no case completed for {label!r}: {failures}")
    row = ResultRow(
        label=label, n_cases=len(hde_scores),
        hde=aggregate_hde(hde_scores),
        sema=aggregate_sema(sema_results),
        cascade=aggregate_cascade(cascade_results),
        config=config,
    )
    detail = {"label": label, "config": config, "failures": failures,
              "cases": per_case}
    out = run_dir / "results" / f"{_safe_name(label)}.json"
    out.write_text(json.dumps(detail, ensure_ascii=False, indent=2),
                   encoding="utf-8")
    return row


def run_range_curve(records: Sequence[MedicalRecord], memory: MemoryStores,
                    strategy: str, ranges: Sequence[float], backends, tools,
                    icd_index: IcdIndex, run_dir: Union[str, Path],
                    **kwargs) -> list[ResultRow]:
    """One practicing run per retrieval range, shared run directory."""
    rows = []
    run_dir = Path(run_dir)
    for rng in ranges:
        rows.append(run_practicing_phase(
            records, memory, strategy, rng, backends, tools, icd_index,
            run_dir / f"range_{int(round(rng * 100)):03d}", **kwargs))
    return rows


def run_multimodal_subset(records: Sequence[MedicalRecord], memory: MemoryStores,
                          backends, tools, icd_index: IcdIndex,
                          run_dir: Union[str, Path], language: str = "en",
                          turn_cap: int = 20,
                          clock: Optional[Callable[[], float]] = None,
                          strict: bool = False) -> ResultRow:
    """Plain-student run over image-bearing cases with vision tools active."""
    subset = [r for r in records if r.examination.attachments]
    if not subset:
        raise ValueError("no record in the subset carries image attachments")
    for record in subset:
        try:
            tools.interpret_attachments(record, tag=f"mm:{record.patient_id}")
        except Exception:
            if strict:
                raise  # lenient mode falls back to the textual exam data
    return run_practicing_phase(
        subset, memory, "knowledge", 0.0, backends, tools, icd_index, run_dir,
        language=language, turn_cap=turn_cap, clock=clock, strict=strict,
        label="Student + Multi-modality")


# --------------------------------------------------------------------------
# Result tables
# --------------------------------------------------------------------------

def emit_results(rows: Sequence[ResultRow], out_dir: Union[str, Path]) -> tuple[Path, Path]:
    """Write the judged-score and code-metric tables as stable TSV files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    hde_lines = ["\t".join(("label", *HDE_COLUMNS, "Avg (std)", "n", "config"))]
    for row in rows:
        cells = [row.label]
        cells += [f"{m:.3f}" for m in row.hde.section_means]
        cells.append(f"{row.hde.avg:.3f} ({row.hde.std:.3f})")
        cells += [str(row.n_cases), row.config]
        hde_lines.append("\t".join(cells))
    hde_path = out_dir / "hde.tsv"
    hde_path.write_text("\n".join(hde_lines) + "\n", encoding="utf-8")

    icd_lines = ["\t".join(("label", "#", "R", "P", "F1",
                            "Coarse", "Medium", "Fine", "n", "config"))]
    for row in rows:
        cells = [
            row.label,
            f"{row.sema.mean_entity_count:.2f}",
            f"{row.sema.recall:.2f}",
            f"{row.sema.precision:.2f}",
            f"{row.sema.f1:.2f}",
            f"{row.cascade.coarse_pct:.2f}",
            f"{row.cascade.medium_pct:.2f}",
            f"{row.cascade.fine_pct:.2f}",
            str(row.n_cases),
            row.config,
        ]
        icd_lines.append("\t".join(cells))
    icd_path = out_dir / "icd.tsv"
    icd_path.write_text("\n".join(icd_lines) + "\n", encoding="utf-8")
    return hde_path, icd_path

"""Synthetic mini-corpus and deterministic scripted role policies.

Ships a small disease pool with ICD-10 codes, a corpus generator, and
default scripts for every role so the whole learn/practice/eval pipeline
runs offline, deterministically, and fast.  Used by the test suite and by
the CLI's ``--scripted`` demo mode.
"""

from __future__ import annotations

import csv
import hashlib
import re
from pathlib import Path
from typing import Optional, Sequence, Union

from .backends import BackendProfile, Backends, HashingEmbedder, ScriptedBackend
from .dialogue import parse_structured_report, render_report, render_suggestions
from .records import BasicInfo, Examination, ImageAttachment, MedicalRecord, Truth

# (name, icd_code, main symptom, auxiliary exam, exam finding, treatment)
DISEASE_POOL = [
    ("hypertension", "I10", "pounding morning headache and dizziness",
     "blood pressure measurement", "blood pressure 168/102 mmHg",
     "antihypertensive medication and salt restriction"),
    ("cerebral infarction", "I63.900",
     "sudden slurred speech and weakness of the left limbs",
     "cranial CT", "hypodense lesion in the right basal ganglia",
     "thrombolysis followed by rehabilitation"),
    ("hyperlipidemia", "E78.500", "persistent fatigue and blurred vision",
     "blood lipid panel", "LDL cholesterol 5.8 mmol/L",
     "statin therapy and dietary fat control"),
    ("type 2 diabetes", "E11.900", "constant thirst and frequent urination",
     "fasting glucose test", "fasting glucose 11.2 mmol/L",
     "metformin and a structured diet plan"),
    ("migraine", "G43.909", "throbbing one-sided headache with nausea",
     "neurological examination", "no focal neurological deficit",
     "triptan at onset and trigger avoidance"),
    ("pneumonia", "J18.900", "productive cough with spiking fever",
     "chest X-ray", "patchy consolidation in the right lower lobe",
     "a full course of antibiotics"),
    ("angina pectoris", "I20.000", "squeezing chest tightness on exertion",
     "electrocardiogram", "ST-segment depression during exercise",
     "nitrates and graded exercise"),
    ("chronic gastritis", "K29.700", "burning stomach pain after meals",
     "gastroscopy", "diffuse antral mucosal erythema",
     "proton pump inhibitor for six weeks"),
]

_PID_RE = re.compile(r"case\d{4}")


def make_corpus(n_cases: int, departments: Sequence[str] = ("Neurology",),
                start: int = 1, with_attachments: bool = False,
                image_dir: Optional[Path] = None) -> list[MedicalRecord]:
    """Deterministic synthetic records cycling through the disease pool."""
    records = []
    for i in range(n_cases):
        pid = f"case{start + i:04d}"
        primary = DISEASE_POOL[i % len(DISEASE_POOL)]
        diseases = [primary[0]]
        if i % 3 == 0:  # every third case is multi-morbid
            secondary = DISEASE_POOL[(i + 3) % len(DISEASE_POOL)]
            diseases.append(secondary[0])
        attachments = []
        if with_attachments:
            uri = str(Path(image_dir or ".") / f"{pid}_scan.png")
            attachments.append(ImageAttachment(
                uri=uri,
                declared_kind="radiological",
                cached_interpretation=(
                    f"Type: CT. Technical details: adequate quality. "
                    f"Findings: {primary[4]}. Conclusion: consistent with {primary[0]}."
                ),
            ))
        records.append(MedicalRecord(
            patient_id=pid,
            department=departments[i % len(departments)],
            basic_info=BasicInfo(
                chief_complaint=f"{primary[2]} for three days (patient {pid})",
                present_illness=(f"Symptoms began gradually and now include "
                                 f"{primary[2]}; no relief with rest."),
                past_history="No major prior illness.",
                personal_history="Non-smoker, office worker.",
                personality="Calm, cooperative, answers briefly.",
            ),
            examination=Examination(
                physical_exam="Alert, vitals stable apart from the findings below.",
                auxiliary_exams=f"{primary[3]}: {primary[4]}",
                attachments=attachments,
            ),
            truth=Truth(
                diseases=diseases,
                rationale=(f"{primary[2]} together with {primary[3]} showing "
                           f"{primary[4]} supports the diagnosis."),
                treatment_plan=primary[5],
            ),
        ))
    return records


def make_split_corpus_506() -> tuple[list[MedicalRecord], dict[str, float]]:
    """506 cases over three departments plus per-department train fractions
    that yield the 259/247 split."""
    corpus = (
        make_corpus(200, departments=("Surgery",), start=1)
        + make_corpus(200, departments=("Internal Medicine",), start=201)
        + make_corpus(106, departments=("Obstetrics and Gynecology",), start=401)
    )
    fractions = {
        "Surgery": 0.5,                      # 100 train
        "Internal Medicine": 0.5,            # 100 train
        "Obstetrics and Gynecology": 0.557,  # floor(0.557 * 106) = 59 train
    }
    return corpus, fractions


def write_icd_terminology(path: Union[str, Path], extra_rows: int = 0) -> Path:
    """Terminology file covering the disease pool plus optional fillers."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["code", "title"])
        for name, code, *_ in DISEASE_POOL:
            writer.writerow([code, name])
        for i in range(extra_rows):
            writer.writerow([f"Z{i % 100:02d}.{i % 1000:03d}", f"filler condition {i}"])
    return path


# --------------------------------------------------------------------------
# Scripted role policies
# --------------------------------------------------------------------------

def _pool_entry(disease: str):
    for entry in DISEASE_POOL:
        if entry[0] == disease:
            return entry
    return (disease, "", "nonspecific malaise", "general panel",
            "no specific finding", "supportive care")


def _last_user(history) -> str:
    for speaker, text in reversed(list(history)):
        if speaker == "user":
            return text
    return ""


def _scores_from(text: str) -> list[int]:
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return [1 + digest[i] % 4 for i in range(5)]


class ScriptedRoles:
    """Deterministic policies for every role over a fixed corpus."""

    def __init__(self, records: Sequence[MedicalRecord], language: str = "en"):
        self.by_id = {r.patient_id: r for r in records}
        self.language = language

    def _record(self, tag: str) -> MedicalRecord:
        match = _PID_RE.search(tag)
        if not match or match.group(0) not in self.by_id:
            raise KeyError(f"cannot resolve a corpus record from tag {tag!r}")
        return self.by_id[match.group(0)]

    def _report_text(self, record: MedicalRecord) -> str:
        primary = _pool_entry(record.truth.diseases[0])
        return (
            f"#Symptom# (1) {record.basic_info.chief_complaint} "
            f"(2) {primary[2]}\n"
            f"#Examinations# (1) {record.examination.auxiliary_exams}\n"
            f"#Diagnostic Results# (1) {'; '.join(record.truth.diseases)}\n"
            f"#Rationale# (1) {record.truth.rationale}\n"
            f"#Treatment Plan# (1) {record.truth.treatment_plan}"
        )

    # -- per-role policies --------------------------------------------------

    def patient(self, tag, system, history, turn):
        record = self._record(tag)
        last = _last_user(history)
        if not history:
            return f"<To the doctor> {record.basic_info.chief_complaint}"
        if last.startswith(("Examiner:", "检查员：")):
            result = last.split(":", 1)[-1].split("：", 1)[-1].strip()
            return f"<To the doctor> The examiner reports: {result}"
        if "Diagnosis:" in last:
            return "<To the doctor> Thank you, doctor. <end>"
        if "examination" in last.lower() or "检查" in last:
            exam = record.examination.auxiliary_exams.split(":", 1)[0]
            return (f"<To the examiner> Hello, I need to have {exam} examination, "
                    f"can you tell me the results of these tests?")
        return f"<To the doctor> {record.basic_info.present_illness}"

    def student(self, tag, system, history, turn):
        record = self._record(tag)
        if "#Inquire Patient#" in system or "#询问病人#" in system:
            return ("#Inquire Patient#(1) Did the symptoms start suddenly or "
                    "gradually? (2) Does anything make them better or worse?")
        if "#Inquire Radiologist#" in system or "#询问检查员#" in system:
            exam = record.examination.auxiliary_exams.split(":", 1)[0]
            return (f"#Inquire Radiologist#(1) What did the {exam} show? "
                    f"(2) Were any further imaging studies performed?")
        if "#Diagnostic Results#" in system or "#诊断结果#" in system:
            return self._report_text(record)  # summarize instruction
        # interactive or further-inquiry conversation
        if turn == 0:
            return "Could you tell me more about how this started?"
        if turn == 1:
            exam = record.examination.auxiliary_exams.split(":", 1)[0]
            return f"Please undergo a {exam} examination."
        primary = _pool_entry(record.truth.diseases[0])
        return (f"Diagnosis: {'; '.join(record.truth.diseases)}. "
                f"Rationale: {record.truth.rationale} "
                f"Treatment plan: {primary[5]}.")

    def radiologist(self, tag, system, history, turn):
        record = self._record(tag)
        exam, _, result = record.examination.auxiliary_exams.partition(":")
        return f"#Examination Items# - {exam.strip()}: {result.strip()}"

    def expert(self, tag, system, history, turn):
        record = self._record(tag)
        if "Suggestions<" in system or "建议<" in system:
            primary = _pool_entry(record.truth.diseases[0])
            suggestions = {
                "symptoms": (f"Ask earlier and more precisely about "
                             f"{primary[2]}."),
                "examinations": (f"Request {primary[3]} before narrowing the "
                                 f"differential."),
                "diagnostic_results": (f"Weigh {', '.join(record.truth.diseases)} "
                                       f"against close mimics."),
                "rationales": "Tie each finding explicitly to the diagnosis.",
                "treatment_plan": f"Consider {primary[5]} as first-line management.",
            }
            return render_suggestions(suggestions, self.language)
        # knowledge-card request; the disease name arrives in the user message
        last = _last_user(history)
        disease = last.split(":", 1)[-1].split("：", 1)[-1].strip()
        entry = _pool_entry(disease)
        return (
            f"#Disease Definition# (1) {entry[0]} is a chronic condition of note.\n"
            f"#Pathogenesis# (1) multifactorial, lifestyle and genetic components.\n"
            f"#Main Symptoms# (1) {entry[2]}\n"
            f"#Common Auxiliary Examination Methods# (1) {entry[3]}\n"
            f"#Main Treatment Plans# (1) {entry[5]}"
        )

    def chair(self, tag, system, history, turn):
        last = _last_user(history)
        blocks = re.split(r"##(?:Doctor [AB]|医生[AB])##", last)
        reports = [parse_structured_report(b) for b in blocks if b.strip()]
        merged = reports[0]
        for other in reports[1:]:
            for name in merged.SECTIONS:
                for item in getattr(other, name):
                    if item not in getattr(merged, name):
                        getattr(merged, name).append(item)
        return render_report(merged, self.language)

    def judge(self, tag, system, history, turn):
        scores = _scores_from(_last_user(history))
        headers = (("#症状#", "#医学检查#", "#诊断结果#", "#诊断依据#", "#治疗方案#")
                   if self.language == "zh"
                   else ("#Symptom#", "#Medical Examination#", "#Diagnostic Results#",
                         "#Diagnostic Rationales#", "#Treatment Plan#"))
        return "\n".join(f"{h} {s}" for h, s in zip(headers, scores))

    def vision_select(self, tag, system, history, turn):
        payload = _last_user(history).lower()
        if "report" in payload:
            return "ReportVQA"
        if any(word in payload for word in ("scan", "ct", "xray", "x-ray", "mri")):
            return "Radiology"
        return "#None#"

    def vision_radiology(self, tag, system, history, turn):
        return ("Type: CT. Technical details: adequate quality, axial acquisition. "
                "Findings: focal abnormality as described. "
                "Conclusion: correlate clinically.")

    def vision_vqa(self, tag, system, history, turn):
        return ("Report type: imaging report photo. Content: findings transcribed "
                "from the printed report. Conclusion: as stated on the report.")


ROLE_NAMES = ("patient", "student", "radiologist", "expert", "chair", "judge",
              "vision_select", "vision_radiology", "vision_vqa")


def scripted_backends(records: Sequence[MedicalRecord], language: str = "en",
                      embedder=None) -> Backends:
    """A fully wired Backends over the deterministic role policies."""
    roles = ScriptedRoles(records, language)
    scripted = ScriptedBackend()
    for role in ROLE_NAMES:
        scripted.default_script(role, getattr(roles, role))
    profiles = {role: BackendProfile(name=role) for role in ROLE_NAMES}
    return Backends(profiles, scripted, embedder or HashingEmbedder())

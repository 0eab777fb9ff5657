"""Role specifications, prompt rendering, and the conversation micro-protocol.

Prompt templates live on disk under ``medco/prompts`` as one file per
(prompt name, language) with ``{slot_name}`` placeholders.  The protocol
layer is purely textual: addressing markers at the start of a message and
a termination token anywhere in it.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass, field
from importlib import resources

from .errors import PromptError
from .records import MedicalRecord

ROLES = ("patient", "student", "radiologist", "expert", "chair")
LANGUAGES = ("en", "zh")

# Required slots per role: the record-derived inputs a role cannot run without.
REQUIRED_SLOTS = {
    "patient": ("personality", "basic_info"),
    "student": (),
    "radiologist": ("physical_exam", "auxiliary_exams"),
    "expert": ("ground_truth",),
    "chair": (),
}

TERMINATION_TOKENS = {"en": "<end>", "zh": "<结束>"}

ADDRESS_MARKERS = {
    "en": {"<To the doctor>": "doctor", "<To the examiner>": "examiner"},
    "zh": {"<对医生讲>": "doctor", "<对检查员讲>": "examiner"},
}


@dataclass(frozen=True)
class RoleSpec:
    role: str
    prompt_template: str
    language: str = "en"
    backend_profile: str = ""

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.language not in LANGUAGES:
            raise ValueError(f"unknown language {self.language!r}")


@dataclass
class Message:
    turn: int
    speaker: str
    addressee: str  # doctor | examiner | broadcast
    content: str
    terminal: bool = False

    def to_dict(self) -> dict:
        return {
            "turn": self.turn,
            "speaker": self.speaker,
            "addressee": self.addressee,
            "content": self.content,
            "terminal": self.terminal,
        }


def load_prompt(name: str, language: str) -> str:
    """Read one template from the on-disk catalog."""
    if language not in LANGUAGES:
        raise PromptError(f"unknown language {language!r}")
    try:
        return (
            resources.files("medco.prompts")
            .joinpath(f"{name}.{language}.txt")
            .read_text(encoding="utf-8")
        )
    except FileNotFoundError as exc:
        raise PromptError(f"no prompt {name!r} for language {language!r}") from exc


def template_slots(template: str) -> set[str]:
    """Names of the ``{slot}`` placeholders in a template."""
    return {
        name
        for _, name, _, _ in string.Formatter().parse(template)
        if name is not None and name != ""
    }


def _format_basic_info(record: MedicalRecord, language: str) -> str:
    b = record.basic_info
    if language == "zh":
        parts = [
            f"主诉：{b.chief_complaint}",
            f"现病史：{b.present_illness}",
            f"既往史：{b.past_history}",
            f"个人史：{b.personal_history}",
        ]
    else:
        parts = [
            f"Chief complaint: {b.chief_complaint}",
            f"Present illness: {b.present_illness}",
            f"Past history: {b.past_history}",
            f"Personal history: {b.personal_history}",
        ]
    return "\n".join(parts)


def _format_ground_truth(record: MedicalRecord, language: str) -> str:
    t = record.truth
    if language == "zh":
        parts = [
            _format_basic_info(record, language),
            f"查体：{record.examination.physical_exam}",
            f"辅助检查：{record.examination.auxiliary_exams}",
            f"诊断结果：{'、'.join(t.diseases)}",
            f"诊断依据：{t.rationale}",
            f"治疗方案：{t.treatment_plan}",
        ]
    else:
        parts = [
            _format_basic_info(record, language),
            f"Physical examination: {record.examination.physical_exam}",
            f"Auxiliary examinations: {record.examination.auxiliary_exams}",
            f"Diagnostic results: {', '.join(t.diseases)}",
            f"Diagnostic basis: {t.rationale}",
            f"Treatment plan: {t.treatment_plan}",
        ]
    return "\n".join(parts)


def record_slots(record: MedicalRecord, language: str) -> dict[str, str]:
    """The standard slot values derivable from a record."""
    return {
        "patient_id": record.patient_id,
        "department": record.department,
        "personality": record.basic_info.personality,
        "chief_complaint": record.basic_info.chief_complaint,
        "present_illness": record.basic_info.present_illness,
        "past_history": record.basic_info.past_history,
        "personal_history": record.basic_info.personal_history,
        "basic_info": _format_basic_info(record, language),
        "physical_exam": record.examination.physical_exam,
        "auxiliary_exams": record.examination.auxiliary_exams,
        "ground_truth": _format_ground_truth(record, language),
    }


def render_system_prompt(
    spec: RoleSpec,
    record: MedicalRecord | None = None,
    extras: dict[str, str] | None = None,
) -> str:
    """Substitute slots verbatim; reject missing or unknown slots."""
    needed = template_slots(spec.prompt_template)
    available = record_slots(record, spec.language) if record is not None else {}
    extras = dict(extras or {})
    unknown = set(extras) - needed - set(available)
    if unknown:
        raise PromptError(f"unknown extra slots: {sorted(unknown)}")
    available.update(extras)
    missing = [s for s in REQUIRED_SLOTS[spec.role] if s in needed and s not in available]
    missing += [s for s in sorted(needed) if s not in available and s not in missing]
    if missing:
        raise PromptError(f"missing slots for role {spec.role!r}: {missing}")
    return spec.prompt_template.format(**{k: available[k] for k in needed})


def parse_addressee(content: str, language: str, lenient: bool = False) -> str:
    """Leading-marker detection; marker-free text is a broadcast."""
    text = content.strip()
    if lenient:
        text = text.lstrip(" \t\r\n.,:;!?，。：；！？-—“”\"'()（）")
    for marker, addressee in ADDRESS_MARKERS[language].items():
        if text.startswith(marker):
            return addressee
    return "broadcast"


def strip_marker(content: str, language: str) -> str:
    """Remove a leading addressing marker, if any."""
    text = content.strip()
    for marker in ADDRESS_MARKERS[language]:
        if text.startswith(marker):
            return text[len(marker):].strip()
    return text


def detect_terminal(content: str, language: str) -> bool:
    """True iff the termination token appears anywhere (whitespace-insensitive)."""
    token = TERMINATION_TOKENS[language]
    squeezed = re.sub(r"\s+", "", content)
    return token in squeezed

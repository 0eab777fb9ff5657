"""Scenario state machines: interactive diagnosis, assessment, recall-driven
further inquiry, and the peer-discussion merge.

All structured model output flows through one tolerant parser family
(five-section reports, suggestion bundles, knowledge cards, question
lists); every parse failure gets exactly one reformat retry with an
explicit nudge before surfacing the raw text.
"""

from __future__ import annotations

import json
import re
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from . import agents
from .agents import Message, RoleSpec, detect_terminal, parse_addressee, strip_marker
from .errors import ReportParseError, SessionStateError
from .memory import KnowledgeCard, MemoryStores, RecallItem
from .records import MedicalRecord

SCENARIOS = ("learning", "practicing", "interactive")
PHASES = ("initial_diagnosis", "summarizing", "assessing", "recalling",
          "further_inquiry", "discussing", "done", "aborted")

_TRANSITIONS = {
    "initial_diagnosis": {"summarizing", "aborted"},
    "summarizing": {"assessing", "recalling", "done", "aborted"},
    "assessing": {"done", "aborted"},
    "recalling": {"further_inquiry", "done", "aborted"},
    "further_inquiry": {"summarizing", "discussing", "done", "aborted"},
    "discussing": {"done", "aborted"},
    "done": set(),
    "aborted": set(),
}

DEFAULT_TURN_CAP = 20

# Section-header aliases, English and Chinese, canonicalized to field names.
_REPORT_HEADERS = {
    "symptoms": ("symptom", "symptoms", "症状"),
    "examinations": ("examinations", "examination", "auxiliary examinations", "辅助检查"),
    "diagnostic_results": ("diagnostic results", "diagnosis", "诊断结果"),
    "rationales": ("rationale", "rationales", "diagnostic rationales", "诊断依据"),
    "treatment_plan": ("treatment plan", "treatment plans", "治疗方案"),
}

_SUGGESTION_HEADERS = {
    "symptoms": ("symptoms", "symptom", "症状"),
    "examinations": ("medical examination items", "examinations", "医学检查项目"),
    "diagnostic_results": ("diagnostic results", "诊断结果"),
    "rationales": ("rationale", "rationales", "诊断依据"),
    "treatment_plan": ("treatment plan", "治疗方案"),
}

_CARD_HEADERS = {
    "definition": ("disease definition", "疾病定义"),
    "pathogenesis": ("pathogenesis", "发病机制"),
    "main_symptoms": ("main symptoms", "primary symptoms", "主要症状"),
    "auxiliary_exam_methods": ("common auxiliary examination methods",
                               "auxiliary examination methods", "常用的辅助检查方法"),
    "treatment_plans": ("main treatment plans", "treatment plans", "主要治疗方案"),
}

_INQUIRE_HEADERS = {
    "patient": ("inquire patient", "询问病人"),
    "radiologist": ("inquire radiologist", "询问检查员"),
}


@dataclass
class DiagnosticReport:
    symptoms: list[str] = field(default_factory=list)
    examinations: list[str] = field(default_factory=list)
    diagnostic_results: list[str] = field(default_factory=list)
    rationales: list[str] = field(default_factory=list)
    treatment_plan: list[str] = field(default_factory=list)
    flagged_partial: bool = False

    SECTIONS = ("symptoms", "examinations", "diagnostic_results",
                "rationales", "treatment_plan")

    def is_final(self) -> bool:
        return bool(self.diagnostic_results) and not self.flagged_partial

    def to_dict(self) -> dict:
        doc = {name: list(getattr(self, name)) for name in self.SECTIONS}
        doc["flagged_partial"] = self.flagged_partial
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "DiagnosticReport":
        return cls(
            **{name: list(doc.get(name, [])) for name in cls.SECTIONS},
            flagged_partial=bool(doc.get("flagged_partial", False)),
        )


@dataclass
class FeedbackBundle:
    suggestions: dict[str, str]  # keyed by DiagnosticReport.SECTIONS
    knowledge: dict[str, KnowledgeCard]


@dataclass
class SessionState:
    session_id: str
    scenario: str
    record_ref: str
    language: str = "en"
    phase: str = "initial_diagnosis"
    transcript: list[Message] = field(default_factory=list)
    turn_cap: int = DEFAULT_TURN_CAP

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.turn_cap < 1:
            raise ValueError("turn_cap must be positive")

    def append(self, speaker: str, addressee: str, content: str) -> Message:
        message = Message(
            turn=len(self.transcript),
            speaker=speaker,
            addressee=addressee,
            content=content,
            terminal=detect_terminal(content, self.language),
        )
        self.transcript.append(message)
        return message

    def advance(self, phase: str) -> None:
        if phase not in PHASES:
            raise SessionStateError(f"unknown phase {phase!r}")
        if phase not in _TRANSITIONS[self.phase]:
            raise SessionStateError(f"illegal transition {self.phase} -> {phase}")
        if phase == "done" and self.scenario == "learning" and self.phase == "summarizing":
            raise SessionStateError("learning sessions must pass through assessing")
        if phase == "recalling" and self.scenario == "learning":
            raise SessionStateError("recalling is not part of the learning scenario")
        self.phase = phase


def new_session(scenario: str, record: MedicalRecord, language: str = "en",
                turn_cap: int = DEFAULT_TURN_CAP, session_id: str = "") -> SessionState:
    return SessionState(
        session_id=session_id or f"{scenario}:{record.patient_id}:{uuid.uuid4().hex[:8]}",
        scenario=scenario,
        record_ref=record.patient_id,
        language=language,
        turn_cap=turn_cap,
    )


# --------------------------------------------------------------------------
# Structured-output parsing
# --------------------------------------------------------------------------

def _split_sections(text: str, double_hash: bool = False) -> dict[str, str]:
    """Map lowercased header -> body for ``#Header#`` (or ``#Header##``) blocks."""
    pattern = r"#\s*([^#\n]+?)\s*##" if double_hash else r"#\s*([^#\n]+?)\s*#(?!#)"
    sections: dict[str, str] = {}
    matches = list(re.finditer(pattern, text))
    for i, match in enumerate(matches):
        start = match.end()
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        sections[match.group(1).strip().lower()] = text[start:end].strip()
    return sections


def _split_items(body: str) -> list[str]:
    """Split a section body on ``(n)`` enumerators; fall back to one item."""
    parts = re.split(r"[（(]\s*\d+\s*[)）]", body)
    items = [p.strip(" \t\r\n;；,，.。-") for p in parts]
    items = [i for i in items if i]
    if not items:
        stripped = body.strip()
        return [stripped] if stripped else []
    return items


def _pick(sections: dict[str, str], aliases: tuple[str, ...]) -> Optional[str]:
    for alias in aliases:
        if alias in sections:
            return sections[alias]
    return None


def parse_structured_report(text: str) -> DiagnosticReport:
    """Parse a five-section report; header order is irrelevant.

    The diagnostic-results header is mandatory; any other missing section
    parses as empty.
    """
    sections = _split_sections(text)
    if _pick(sections, _REPORT_HEADERS["diagnostic_results"]) is None:
        raise ReportParseError("no diagnostic-results header found", raw_text=text)
    kwargs = {}
    for name, aliases in _REPORT_HEADERS.items():
        body = _pick(sections, aliases)
        kwargs[name] = _split_items(body) if body is not None else []
    return DiagnosticReport(**kwargs)


def render_report(report: DiagnosticReport, language: str = "en") -> str:
    """Inverse of parse_structured_report on well-formed reports."""
    headers = (
        ("#症状#", "#辅助检查#", "#诊断结果#", "#诊断依据#", "#治疗方案#")
        if language == "zh"
        else ("#Symptom#", "#Examinations#", "#Diagnostic Results#",
              "#Rationale#", "#Treatment Plan#")
    )
    lines = []
    for header, name in zip(headers, DiagnosticReport.SECTIONS):
        items = getattr(report, name)
        body = " ".join(f"({i + 1}) {item}" for i, item in enumerate(items))
        lines.append(f"{header} {body}".rstrip())
    return "\n".join(lines)


def parse_suggestions(text: str) -> dict[str, str]:
    """Parse the five ``#Header## Suggestions<...>`` feedback sections."""
    sections = _split_sections(text, double_hash=True)
    out = {}
    for name, aliases in _SUGGESTION_HEADERS.items():
        body = _pick(sections, aliases)
        if body is None:
            raise ReportParseError(f"missing suggestion section {name!r}", raw_text=text)
        body = re.sub(r"^\s*(Suggestions?|建议)\s*", "", body, flags=re.IGNORECASE)
        body = body.strip()
        if body.startswith("<") and body.endswith(">"):
            body = body[1:-1].strip()
        out[name] = body
    return out


def render_suggestions(suggestions: dict[str, str], language: str = "en") -> str:
    headers = (
        ("#症状##", "#医学检查项目##", "#诊断结果##", "#诊断依据##", "#治疗方案##")
        if language == "zh"
        else ("#Symptoms##", "#Medical Examination Items##", "#Diagnostic Results##",
              "#Rationale##", "#Treatment Plan##")
    )
    marker = "建议" if language == "zh" else "Suggestions"
    return "\n".join(
        f"{header} {marker}<{suggestions[name]}>"
        for header, name in zip(headers, DiagnosticReport.SECTIONS)
    )


def parse_knowledge_card(text: str) -> KnowledgeCard:
    sections = _split_sections(text)
    kwargs = {}
    for name, aliases in _CARD_HEADERS.items():
        body = _pick(sections, aliases)
        if body is None:
            raise ReportParseError(f"missing knowledge field {name!r}", raw_text=text)
        kwargs[name] = _split_items(body)
    return KnowledgeCard(**kwargs)


def parse_inquiry_questions(text: str, target: str) -> list[str]:
    sections = _split_sections(text)
    body = _pick(sections, _INQUIRE_HEADERS[target])
    if body is None:
        raise ReportParseError(f"no inquire-{target} block found", raw_text=text)
    items = _split_items(body)
    if not items:
        raise ReportParseError(f"empty inquire-{target} block", raw_text=text)
    return items


def _chat_parsed(backends, role: str, system: str, history: list, parser: Callable,
                 tag: str, nudge: str):
    """One chat call plus a single reformat retry on parse failure."""
    raw = backends.chat(role, system, history, tag=tag)
    try:
        return parser(raw)
    except ReportParseError:
        retry_history = list(history) + [("assistant", raw), ("user", nudge)]
        raw2 = backends.chat(role, system, retry_history, tag=tag)
        return parser(raw2)  # second failure propagates with the raw text


# --------------------------------------------------------------------------
# Conversations
# --------------------------------------------------------------------------

class _Conversation:
    """Turn bookkeeping for one student-patient-radiologist dialogue."""

    def __init__(self, session: SessionState, record: MedicalRecord, backends,
                 tools, student_system: str):
        self.session = session
        self.record = record
        self.backends = backends
        self.tools = tools
        self.language = session.language
        self.student_system = student_system
        spec = RoleSpec(
            role="patient",
            prompt_template=agents.load_prompt("patient", self.language),
            language=self.language,
            backend_profile="patient",
        )
        self.patient_system = agents.render_system_prompt(spec, record)
        self.patient_history: list[tuple[str, str]] = []
        self.student_history: list[tuple[str, str]] = []

    def _patient_turn(self) -> Message:
        reply = self.backends.chat("patient", self.patient_system,
                                   self.patient_history, tag=self.session.session_id)
        self.patient_history.append(("assistant", reply))
        addressee = parse_addressee(reply, self.language)
        if addressee == "broadcast":
            addressee = "doctor"  # unmarked patient speech defaults to the doctor
        message = self.session.append("patient", addressee, reply)
        if addressee == "doctor":
            self.student_history.append(("user", strip_marker(reply, self.language)))
        return message

    def _student_turn(self, content: Optional[str] = None) -> Message:
        if content is None:
            content = self.backends.chat("student", self.student_system,
                                         self.student_history,
                                         tag=self.session.session_id)
        self.student_history.append(("assistant", content))
        self.patient_history.append(("user", content))
        return self.session.append("student", "broadcast", content)

    def _radiologist_turn(self, request: str) -> Message:
        reply = self.tools.answer_examination_request(
            request, self.record, tag=self.session.session_id
        )
        message = self.session.append("radiologist", "broadcast", reply)
        prefix = "检查员：" if self.language == "zh" else "Examiner: "
        self.patient_history.append(("user", prefix + reply))
        return message

    def run(self, opener: Optional[str] = None, patient_opens: bool = True) -> bool:
        """Run the dialogue until the termination token or the turn cap.

        Returns True when the patient terminated the dialogue, False when
        the student turn cap cut it off.
        """
        if patient_opens:
            message = self._patient_turn()
            if message.terminal:
                return True
        student_turns = 0
        first = opener
        while student_turns < self.session.turn_cap:
            self._student_turn(first)
            first = None
            student_turns += 1
            message = self._patient_turn()
            if message.addressee == "examiner":
                request = strip_marker(message.content, self.language)
                self._radiologist_turn(request)
                message = self._patient_turn()  # relay back to the doctor
            if message.terminal:
                return True
        return False


def summarize_report(transcript: list[Message], backends, language: str = "en",
                     tag: str = "") -> DiagnosticReport:
    """Ask the student role for the five-section summary of a dialogue."""
    if not any(m.speaker == "student" for m in transcript):
        raise ValueError("transcript contains no student utterance")
    system = agents.load_prompt("expert_summarize", language)
    convo = "\n".join(f"[{m.speaker}] {m.content}" for m in transcript)
    nudge = ("请严格按照要求的 #...# 五段格式重新输出。" if language == "zh"
             else "Please reformat your answer using exactly the five #...# section "
                  "headers requested.")
    return _chat_parsed(backends, "student", system, [("user", convo)],
                        parse_structured_report, tag, nudge)


def run_initial_diagnosis(session: SessionState, record: MedicalRecord, backends,
                          tools) -> tuple[list[Message], DiagnosticReport]:
    """Interactive diagnosis followed by the five-section summary."""
    if session.phase != "initial_diagnosis":
        raise SessionStateError(f"session is in phase {session.phase}, "
                                "expected initial_diagnosis")
    student_system = agents.load_prompt("student_diagnosis", session.language)
    convo = _Conversation(session, record, backends, tools, student_system)
    try:
        terminated = convo.run()
    except Exception:
        session.advance("aborted")
        raise
    report = summarize_report(session.transcript, backends, session.language,
                              tag=session.session_id)
    report.flagged_partial = not terminated
    session.advance("summarizing")
    return session.transcript, report


def assess_report(report: DiagnosticReport, record: MedicalRecord, backends,
                  language: str = "en", tag: str = "") -> dict[str, str]:
    """Expert feedback: five suggestion sections keyed like the report."""
    if not record.truth.diseases:
        raise ValueError("record has no ground-truth diagnosis")
    if not report.diagnostic_results:
        raise ValueError("student report has no diagnostic results")
    spec = RoleSpec(
        role="expert",
        prompt_template=agents.load_prompt("expert_assess", language),
        language=language,
        backend_profile="expert",
    )
    system = agents.render_system_prompt(spec, record)
    nudge = ("请严格按照 #...## 建议<...> 的五段格式重新输出。" if language == "zh"
             else "Please reformat using exactly the five #...## Suggestions<...> "
                  "sections requested.")
    return _chat_parsed(backends, "expert", system,
                        [("user", render_report(report, language))],
                        parse_suggestions, tag, nudge)


def summarize_knowledge(disease_name: str, backends, language: str = "en",
                        tag: str = "") -> KnowledgeCard:
    if not disease_name.strip():
        raise ValueError("disease name is empty")
    system = agents.load_prompt("expert_knowledge", language)
    user = (f"#疾病名称：{disease_name}" if language == "zh"
            else f"#Disease's name: {disease_name}")
    nudge = ("请严格按照要求的五个 #...# 字段重新输出。" if language == "zh"
             else "Please reformat using exactly the five #...# fields requested.")
    return _chat_parsed(backends, "expert", system, [("user", user)],
                        parse_knowledge_card, tag, nudge)


def run_learning_case(record: MedicalRecord, memory: MemoryStores, backends, tools,
                      language: str = "en", turn_cap: int = DEFAULT_TURN_CAP,
                      session_id: str = "",
                      transcript_sink: Optional[Callable] = None) -> FeedbackBundle:
    """Learning scenario: diagnose, get assessed, store the feedback."""
    session = new_session("learning", record, language, turn_cap,
                          session_id=session_id or f"learn:{record.patient_id}")
    transcript, report = run_initial_diagnosis(session, record, backends, tools)
    session.advance("assessing")
    suggestions = assess_report(report, record, backends, language,
                                tag=session.session_id)
    knowledge = {
        disease: summarize_knowledge(disease, backends, language,
                                     tag=session.session_id)
        for disease in record.truth.diseases
    }
    # All-or-nothing: memory writes happen only after every sub-step succeeded.
    memory.store_feedback(
        patient_id=record.patient_id,
        truth_symptoms=[record.basic_info.chief_complaint],
        truth_diseases=record.truth.diseases,
        suggestions=render_suggestions(suggestions, language),
        knowledge=knowledge,
    )
    session.advance("done")
    if transcript_sink is not None:
        transcript_sink(session)
    return FeedbackBundle(suggestions=suggestions, knowledge=knowledge)


def generate_differential_questions(report: DiagnosticReport,
                                    retrieved: list[tuple[str, KnowledgeCard]],
                                    target: str, backends, record: MedicalRecord,
                                    language: str = "en", tag: str = "") -> list[str]:
    """Questions contrasting the retrieved diseases, for patient or radiologist."""
    if not retrieved:
        raise ValueError("retrieved disease list is empty")
    if target not in ("patient", "radiologist"):
        raise ValueError(f"unknown inquiry target {target!r}")
    name = ("student_inquire_patient" if target == "patient"
            else "student_inquire_radiologist")
    extras = {
        "general_info": agents.record_slots(record, language)["basic_info"],
        "symptoms": "; ".join(report.symptoms),
    }
    if target == "radiologist":
        extras["examinations"] = "; ".join(report.examinations)
    spec = RoleSpec(role="student", prompt_template=agents.load_prompt(name, language),
                    language=language, backend_profile="student")
    system = agents.render_system_prompt(spec, record, extras)
    if language == "zh":
        field_header = "#主要症状#" if target == "patient" else "#常用的辅助检查方法#"
        blocks = [
            f"##相关疾病:{disease}## {field_header} "
            + "；".join(card.main_symptoms if target == "patient"
                        else card.auxiliary_exam_methods)
            for disease, card in retrieved
        ]
    else:
        field_header = ("#Main Symptoms#" if target == "patient"
                        else "#Common Auxiliary Examination Methods#")
        blocks = [
            f"##Related Disease:{disease}## {field_header} "
            + "; ".join(card.main_symptoms if target == "patient"
                        else card.auxiliary_exam_methods)
            for disease, card in retrieved
        ]
    nudge = ("请严格以要求的 #询问...# 格式重新输出。" if language == "zh"
             else "Please reformat starting with the requested #Inquire ...# header.")
    return _chat_parsed(backends, "student", system, [("user", "\n".join(blocks))],
                        lambda text: parse_inquiry_questions(text, target), tag, nudge)


def _recall_context(items: list[RecallItem], strategy: str, language: str) -> str:
    if strategy == "knowledge":
        if language == "zh":
            return "\n".join(
                f"##相关疾病:{i.disease}## #主要症状# {'；'.join(i.card.main_symptoms)} "
                f"#常用的辅助检查方法# {'；'.join(i.card.auxiliary_exam_methods)}"
                for i in items
            )
        return "\n".join(
            f"##Related Disease:{i.disease}## #Main Symptoms# "
            f"{'; '.join(i.card.main_symptoms)} #Common Auxiliary Examination Methods# "
            f"{'; '.join(i.card.auxiliary_exam_methods)}"
            for i in items
        )
    seen: set[str] = set()
    blocks = []
    for item in items:
        if item.patient_id in seen or not item.suggestions:
            continue
        seen.add(item.patient_id)
        header = (f"##病例{item.patient_id}的建议##" if language == "zh"
                  else f"##Suggestions from case {item.patient_id}##")
        blocks.append(f"{header}\n{item.suggestions}")
    return "\n".join(blocks)


def run_practicing_case(record: MedicalRecord, memory: MemoryStores, strategy: str,
                        retrieval_range: float, backends, tools,
                        language: str = "en", turn_cap: int = DEFAULT_TURN_CAP,
                        k: int = 3, session_id: str = "",
                        transcript_sink: Optional[Callable] = None) -> DiagnosticReport:
    """Practicing scenario: diagnose, recall, differential inquiry, final report."""
    if strategy not in ("knowledge", "suggestion", "discussion"):
        raise ValueError(f"unknown strategy {strategy!r}")
    base_id = session_id or f"practice:{strategy}:{record.patient_id}"

    if strategy == "discussion":
        # Consumes exactly the two single-strategy outputs; no third recall path.
        report_a = run_practicing_case(record, memory, "knowledge", retrieval_range,
                                       backends, tools, language, turn_cap, k,
                                       session_id=f"{base_id}:A",
                                       transcript_sink=transcript_sink)
        report_b = run_practicing_case(record, memory, "suggestion", retrieval_range,
                                       backends, tools, language, turn_cap, k,
                                       session_id=f"{base_id}:B",
                                       transcript_sink=transcript_sink)
        return peer_discussion(report_a, report_b, backends, language, tag=base_id)

    session = new_session("practicing", record, language, turn_cap, session_id=base_id)
    transcript, initial_report = run_initial_diagnosis(session, record, backends, tools)

    if retrieval_range == 0:
        session.advance("done")
        if transcript_sink is not None:
            transcript_sink(session)
        return initial_report

    session.advance("recalling")
    query = "; ".join(initial_report.symptoms)
    items = memory.recall_by_symptoms(query, k=k, retrieval_range=retrieval_range)
    if not items:
        session.advance("done")
        if transcript_sink is not None:
            transcript_sink(session)
        return initial_report

    retrieved = [(i.disease, i.card) for i in items]
    questions = generate_differential_questions(
        initial_report, retrieved, "patient", backends, record, language,
        tag=session.session_id)
    exam_questions = generate_differential_questions(
        initial_report, retrieved, "radiologist", backends, record, language,
        tag=session.session_id)

    session.advance("further_inquiry")
    if language == "zh":
        findings = (f"#症状# {'；'.join(initial_report.symptoms)}\n"
                    f"#辅助检查# {'；'.join(initial_report.examinations)}")
    else:
        findings = (f"#Symptoms# {'; '.join(initial_report.symptoms)}\n"
                    f"#Examinations# {'; '.join(initial_report.examinations)}")
    extras = {
        "initial_findings": findings,
        "retrieved_diseases": ("、" if language == "zh" else ", ").join(
            i.disease for i in items),
    }
    spec = RoleSpec(role="student",
                    prompt_template=agents.load_prompt("student_further_inquiry",
                                                       language),
                    language=language, backend_profile="student")
    student_system = agents.render_system_prompt(spec, record, extras)
    convo = _Conversation(session, record, backends, tools, student_system)
    context = _recall_context(items, strategy, language)
    if context:
        convo.student_history.append(("user", context))
    opener = " ".join(f"({i + 1}) {q}" for i, q in enumerate(questions + exam_questions))
    try:
        terminated = convo.run(opener=opener, patient_opens=True)
    except Exception:
        session.advance("aborted")
        raise
    final_report = summarize_report(session.transcript, backends, language,
                                    tag=session.session_id)
    final_report.flagged_partial = not terminated
    session.advance("summarizing")
    session.advance("done")
    if transcript_sink is not None:
        transcript_sink(session)
    return final_report


def peer_discussion(report_a: DiagnosticReport, report_b: DiagnosticReport,
                    backends, language: str = "en", tag: str = "") -> DiagnosticReport:
    """Chair-led merge of two final reports into one five-section report."""
    for name, report in (("A", report_a), ("B", report_b)):
        if not report.diagnostic_results:
            raise ValueError(f"report {name} is not final (no diagnostic results)")
    system = agents.load_prompt("chair_discussion", language)
    if language == "zh":
        user = (f"##医生A## {render_report(report_a, language)}\n"
                f"##医生B## {render_report(report_b, language)}")
    else:
        user = (f"##Doctor A## {render_report(report_a, language)}\n"
                f"##Doctor B## {render_report(report_b, language)}")
    nudge = ("请严格按照要求的 #...# 五段格式重新输出。" if language == "zh"
             else "Please reformat using exactly the five #...# section headers "
                  "requested.")
    return _chat_parsed(backends, "chair", system, [("user", user)],
                        parse_structured_report, tag, nudge)


# --------------------------------------------------------------------------
# Transcript persistence
# --------------------------------------------------------------------------

def transcript_lines(session: SessionState, clock: Callable[[], float] = None) -> list[str]:
    """Line-delimited log, one message per line."""
    now = clock() if clock is not None else 0.0
    return [
        json.dumps({
            "session_id": session.session_id,
            "timestamp": now,
            **message.to_dict(),
        }, ensure_ascii=False)
        for message in session.transcript
    ]


def write_transcript(session: SessionState, path, clock: Callable[[], float] = None,
                     metadata: Optional[dict] = None) -> None:
    path = Path(path)
    path.write_text("\n".join(transcript_lines(session, clock)) + "\n",
                    encoding="utf-8")
    meta = {
        "session_id": session.session_id,
        "scenario": session.scenario,
        "record_ref": session.record_ref,
        "language": session.language,
        "turn_cap": session.turn_cap,
        "phase": session.phase,
        **(metadata or {}),
    }
    path.with_suffix(path.suffix + ".meta.json").write_text(
        json.dumps(meta, ensure_ascii=False, indent=2), encoding="utf-8"
    )


def replay_transcript(lines: list[str], scenario: str = "interactive",
                      language: str = "en") -> SessionState:
    """Rebuild a session's message state from its log lines."""
    messages = [json.loads(line) for line in lines if line.strip()]
    if not messages:
        raise ValueError("empty transcript")
    session = SessionState(
        session_id=messages[0]["session_id"],
        scenario=scenario,
        record_ref="",
        language=language,
    )
    for doc in messages:
        expected = len(session.transcript)
        if doc["turn"] != expected:
            raise ValueError(f"non-contiguous turn {doc['turn']} (expected {expected})")
        session.transcript.append(Message(
            turn=doc["turn"], speaker=doc["speaker"], addressee=doc["addressee"],
            content=doc["content"], terminal=doc["terminal"],
        ))
    return session

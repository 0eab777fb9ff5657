"""Radiologist tool dispatch: image classification, report generation or
transcription, and examination-request answering in the fixed examiner format.

Image interpretations are cached per attachment uri, so at most one vision
call is ever made per attachment; the cache can be persisted next to the
corpus and reloaded.
"""

from __future__ import annotations

import base64
import json
import re
import threading
from pathlib import Path
from typing import Optional

from . import agents
from .agents import RoleSpec
from .errors import ToolError
from .records import ImageAttachment, MedicalRecord

NO_ABNORMALITY = {"en": "No abnormalities detected", "zh": "无异常"}

_STOPWORDS = {
    "a", "an", "and", "are", "can", "could", "do", "for", "have", "hello", "i",
    "is", "me", "my", "need", "of", "or", "please", "results", "tell", "test",
    "tests", "the", "these", "this", "to", "you", "want", "would", "like",
    "examination", "examinations", "exam", "check", "checks",
    "我", "你", "您", "的", "了", "做", "要", "需", "查", "检", "好", "请",
    "告", "诉", "这", "些", "结", "果", "能", "否", "和", "吗",
}


def _content_tokens(text: str, embedder_like=None) -> set[str]:
    tokens = set()
    for word in re.findall(r"[a-zA-Z0-9]+", text.lower()):
        tokens.add(word)
    for ch in text:
        if not ch.isascii() and not ch.isspace():
            tokens.add(ch)
    return tokens - _STOPWORDS


class RadiologistTools:
    """Vision-tool routing plus examiner-format answers for one corpus run."""

    def __init__(self, backends, language: str = "en",
                 cache_path: Optional[Path] = None):
        self.backends = backends
        self.language = language
        self.cache_path = Path(cache_path) if cache_path else None
        self._cache: dict[str, str] = {}
        self._lock = threading.Lock()
        self.vision_calls = 0
        if self.cache_path and self.cache_path.exists():
            self._cache = json.loads(self.cache_path.read_text(encoding="utf-8"))

    # -- image handling -----------------------------------------------------

    def _image_payload(self, attachment: ImageAttachment) -> str:
        path = Path(attachment.uri)
        try:
            data = path.read_bytes()
        except OSError as exc:
            raise ToolError(f"unreadable image {attachment.uri}: {exc}") from exc
        encoded = base64.b64encode(data).decode("ascii")
        return f"##The path of image: {attachment.uri}, base64: {encoded}"

    def classify_image(self, attachment: ImageAttachment, tag: str = "") -> str:
        """radiological | report_photo | none; declared kinds short-circuit."""
        if attachment.declared_kind == "radiological":
            return "radiological"
        if attachment.declared_kind == "report_photo":
            return "report_photo"
        if attachment.declared_kind == "other":
            return "none"
        system = agents.load_prompt("tool_select", self.language)
        reply = self.backends.chat("vision_select", system,
                                   [("user", self._image_payload(attachment))],
                                   tag=tag)
        kind = self._map_selection(reply)
        if kind is None:
            retry = reply + "\nAnswer with exactly one of: Radiology / ReportVQA / #None#"
            reply = self.backends.chat("vision_select", system,
                                       [("user", self._image_payload(attachment)),
                                        ("assistant", reply), ("user", retry)],
                                       tag=tag)
            kind = self._map_selection(reply)
            if kind is None:
                raise ToolError(f"unmappable tool-selection reply: {reply!r}")
        return kind

    @staticmethod
    def _map_selection(reply: str) -> Optional[str]:
        text = reply.lower()
        if "#none#" in text or "#无#" in reply:
            return "none"
        if "reportvqa" in text.replace(" ", "") or "report" in text or "报告" in reply:
            return "report_photo"
        if ("radiolog" in text or "x-ray" in text or "ct" in text or "mri" in text
                or "影像" in reply):
            return "radiological"
        return None

    def _interpret(self, attachment: ImageAttachment, role: str, prompt_name: str,
                   tag: str) -> str:
        if attachment.cached_interpretation is not None:
            return attachment.cached_interpretation
        with self._lock:
            if attachment.uri in self._cache:
                attachment.set_interpretation(self._cache[attachment.uri])
                return self._cache[attachment.uri]
        system = agents.load_prompt(prompt_name, self.language)
        self.vision_calls += 1
        reply = self.backends.chat(role, system,
                                   [("user", self._image_payload(attachment))],
                                   tag=tag)
        with self._lock:
            self._cache[attachment.uri] = reply
            attachment.set_interpretation(reply)
            if self.cache_path:
                self.cache_path.write_text(
                    json.dumps(self._cache, ensure_ascii=False, indent=2),
                    encoding="utf-8",
                )
        return reply

    def radiology_report(self, attachment: ImageAttachment, tag: str = "") -> str:
        """Imaging report for a radiological image; cached per uri."""
        if self.classify_image(attachment, tag=tag) != "radiological":
            raise ToolError(f"{attachment.uri} is not a radiological image")
        report = self._interpret(attachment, "vision_radiology", "tool_radiology", tag)
        cues = ("type", "technical", "finding", "conclusion",
                "检查类型", "技术细节", "发现", "结论")
        if sum(cue in report.lower() for cue in cues) < 2:
            report = f"[format warning: expected report sections missing]\n{report}"
        return report

    def report_vqa(self, attachment: ImageAttachment, tag: str = "") -> str:
        """Textual description of a report photo; cached per uri."""
        if self.classify_image(attachment, tag=tag) != "report_photo":
            raise ToolError(f"{attachment.uri} is not a report photo")
        return self._interpret(attachment, "vision_vqa", "tool_report_vqa", tag)

    def interpret_attachments(self, record: MedicalRecord, tag: str = "") -> list[str]:
        """Run the appropriate tool per attachment (exclusive dispatch)."""
        texts = []
        for attachment in record.examination.attachments:
            kind = self.classify_image(attachment, tag=tag)
            if kind == "radiological":
                texts.append(self.radiology_report(attachment, tag=tag))
            elif kind == "report_photo":
                texts.append(self.report_vqa(attachment, tag=tag))
        return texts

    # -- examination requests -------------------------------------------------

    def answer_examination_request(self, request: str, record: MedicalRecord,
                                   tag: str = "") -> str:
        """Answer in the fixed examiner format, backed by the record's exams.

        Requests matching nothing in the record are answered deterministically
        with the no-abnormality line, without a backend call.
        """
        if not (record.examination.physical_exam or record.examination.auxiliary_exams
                or record.examination.attachments):
            raise ValueError("record has no examination data")
        interpretations = self.interpret_attachments(record, tag=tag)
        known = " ".join(
            [record.examination.physical_exam, record.examination.auxiliary_exams]
            + interpretations
        )
        requested = _content_tokens(request)
        if requested and not (requested & _content_tokens(known)):
            item = request.strip().rstrip("?？.。!！")
            header = "#检查项目#" if self.language == "zh" else "#Examination Items#"
            return f"{header} - {item}: {NO_ABNORMALITY[self.language]}"
        spec = RoleSpec(
            role="radiologist",
            prompt_template=agents.load_prompt("radiologist_exam", self.language),
            language=self.language,
            backend_profile="radiologist",
        )
        system = agents.render_system_prompt(
            spec, record, extras={"imaging_reports": "\n".join(interpretations)}
        )
        return self.backends.chat("radiologist", system, [("user", request)], tag=tag)

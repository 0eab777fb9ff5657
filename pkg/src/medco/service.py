"""HTTP session service: a /v1 API over the dialogue engine.

The browser client plays the doctor; the service drives the patient and
radiologist roles and exposes the transcript both as plain JSON and as a
server-sent event stream with turn-number ids, so reconnecting clients can
resume without duplicates.  Every appended message is also written to a
per-session transcript log, from which open sessions are rebuilt after a
restart.
"""

from __future__ import annotations

import asyncio
import json
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import StreamingResponse
from pydantic import BaseModel

from . import agents, dialogue
from .agents import strip_marker
from .dialogue import (DEFAULT_TURN_CAP, SessionState, _Conversation,
                       assess_report, new_session, replay_transcript,
                       summarize_knowledge, summarize_report)
from .errors import SessionStateError
from .memory import MemoryStores
from .metrics import judge_hde

OPEN_PHASES = ("initial_diagnosis", "summarizing", "assessing")


class CreateSession(BaseModel):
    patient_id: str
    scenario: str = "interactive"
    language: str = "en"
    turn_cap: int = DEFAULT_TURN_CAP


class UserMessage(BaseModel):
    content: str


class RecallQuery(BaseModel):
    query: Optional[str] = None
    k: int = 3
    retrieval_range: float = 1.0


class _LiveSession:
    """One open session: state machine plus conversation bookkeeping."""

    def __init__(self, session: SessionState, record, backends, tools):
        self.session = session
        student_system = agents.load_prompt("student_diagnosis", session.language)
        self.convo = _Conversation(session, record, backends, tools, student_system)
        self.record = record
        self.closed = False
        self.assessment: Optional[dict] = None


class SessionService:
    """All mutable service state; the FastAPI app is a thin shell over it."""

    def __init__(self, records, backends, tools, memory: MemoryStores,
                 language: str = "en", state_dir: Optional[Path] = None):
        self.records = {r.patient_id: r for r in records}
        self.backends = backends
        self.tools = tools
        self.memory = memory
        self.language = language
        self.state_dir = Path(state_dir) if state_dir else None
        self.sessions: dict[str, _LiveSession] = {}
        if self.state_dir:
            self.state_dir.mkdir(parents=True, exist_ok=True)
            self._recover()

    # -- persistence / recovery ---------------------------------------------

    def _log_path(self, session_id: str) -> Optional[Path]:
        if not self.state_dir:
            return None
        safe = session_id.replace(":", "_").replace("/", "_")
        return self.state_dir / f"{safe}.jsonl"

    def _append_log(self, live: _LiveSession, messages) -> None:
        path = self._log_path(live.session.session_id)
        if not path:
            return
        with open(path, "a", encoding="utf-8") as handle:
            for message in messages:
                doc = {"session_id": live.session.session_id,
                       "scenario": live.session.scenario,
                       "record_ref": live.session.record_ref,
                       "language": live.session.language,
                       **message.to_dict()}
                handle.write(json.dumps(doc, ensure_ascii=False) + "\n")

    def _recover(self) -> None:
        for path in sorted(self.state_dir.glob("*.jsonl")):
            lines = path.read_text(encoding="utf-8").splitlines()
            if not lines:
                continue
            head = json.loads(lines[0])
            record = self.records.get(head.get("record_ref", ""))
            if record is None:
                continue
            replayed = replay_transcript(lines, scenario=head.get("scenario",
                                                                  "interactive"),
                                         language=head.get("language", "en"))
            replayed.record_ref = record.patient_id
            if any(m.terminal for m in replayed.transcript):
                replayed.advance("summarizing")
            live = _LiveSession(replayed, record, self.backends, self.tools)
            # rebuild the per-role chat histories from the transcript
            for message in replayed.transcript:
                if message.speaker == "student":
                    live.convo.student_history.append(("assistant", message.content))
                    live.convo.patient_history.append(("user", message.content))
                elif message.speaker == "patient":
                    live.convo.patient_history.append(("assistant", message.content))
                    if message.addressee == "doctor":
                        live.convo.student_history.append(
                            ("user", strip_marker(message.content,
                                                  replayed.language)))
                elif message.speaker == "radiologist":
                    prefix = "检查员：" if replayed.language == "zh" else "Examiner: "
                    live.convo.patient_history.append(("user",
                                                       prefix + message.content))
            self.sessions[replayed.session_id] = live

    # -- session operations ---------------------------------------------------

    def create(self, req: CreateSession) -> _LiveSession:
        record = self.records.get(req.patient_id)
        if record is None:
            raise HTTPException(404, f"unknown patient_id {req.patient_id!r}")
        session = new_session(req.scenario, record, req.language, req.turn_cap)
        live = _LiveSession(session, record, self.backends, self.tools)
        self.sessions[session.session_id] = live
        # opening presentation from the patient
        message = live.convo._patient_turn()
        self._append_log(live, [message])
        return live

    def get(self, session_id: str) -> _LiveSession:
        live = self.sessions.get(session_id)
        if live is None:
            raise HTTPException(404, f"unknown session {session_id!r}")
        return live

    def post_message(self, session_id: str, content: str) -> list:
        live = self.get(session_id)
        if live.closed or live.session.phase not in OPEN_PHASES:
            raise HTTPException(409, "session is closed")
        if live.session.phase != "initial_diagnosis":
            raise HTTPException(409, "dialogue already ended; assess or close")
        before = len(live.session.transcript)
        live.convo._student_turn(content)
        message = live.convo._patient_turn()
        if message.addressee == "examiner":
            request = strip_marker(message.content, live.session.language)
            live.convo._radiologist_turn(request)
            message = live.convo._patient_turn()
        new_messages = live.session.transcript[before:]
        if any(m.terminal for m in new_messages):
            live.session.advance("summarizing")
        self._append_log(live, new_messages)
        return new_messages

    def recall(self, session_id: str, query: RecallQuery) -> list[dict]:
        live = self.get(session_id)
        text = query.query
        if not text:
            doctor_bound = [m.content for m in live.session.transcript
                            if m.speaker == "patient"]
            text = " ".join(strip_marker(c, live.session.language)
                            for c in doctor_bound)
        if not text.strip():
            raise HTTPException(422, "nothing to recall from yet")
        try:
            items = self.memory.recall_by_symptoms(
                text, k=query.k, retrieval_range=query.retrieval_range)
        except ValueError as exc:
            raise HTTPException(422, str(exc))
        return [{
            "disease": item.disease,
            "card": item.card.to_dict(),
            "patient_id": item.patient_id,
            "suggestions": item.suggestions,
            "score": item.score,
        } for item in items]

    def assess(self, session_id: str) -> dict:
        live = self.get(session_id)
        if live.closed:
            raise HTTPException(409, "session is closed")
        if live.assessment is not None:
            return live.assessment
        session = live.session
        if not any(m.speaker == "student" for m in session.transcript):
            raise HTTPException(422, "no doctor message to assess yet")
        try:
            report = summarize_report(session.transcript, self.backends,
                                      session.language, tag=session.session_id)
            if session.phase == "initial_diagnosis":
                session.advance("summarizing")
            session.advance("assessing")
            suggestions = assess_report(report, live.record, self.backends,
                                        session.language, tag=session.session_id)
            score = judge_hde(report, live.record, self.backends,
                              session.language, tag=session.session_id)
            if session.scenario == "learning":
                knowledge = {
                    disease: summarize_knowledge(disease, self.backends,
                                                 session.language,
                                                 tag=session.session_id)
                    for disease in live.record.truth.diseases
                }
                self.memory.store_feedback(
                    patient_id=live.record.patient_id,
                    truth_symptoms=[live.record.basic_info.chief_complaint],
                    truth_diseases=live.record.truth.diseases,
                    suggestions=dialogue.render_suggestions(suggestions,
                                                            session.language),
                    knowledge=knowledge,
                )
            session.advance("done")
        except SessionStateError as exc:
            raise HTTPException(409, str(exc))
        live.closed = True
        live.assessment = {
            "report": report.to_dict(),
            "suggestions": suggestions,
            "scores": dict(zip(("symptom", "examination", "results",
                                "rationales", "treatment"), score.values())),
            "avg": score.avg,
            "phase": session.phase,
        }
        return live.assessment


def create_app(records, backends, tools, memory: MemoryStores,
               language: str = "en", state_dir: Optional[Path] = None) -> FastAPI:
    service = SessionService(records, backends, tools, memory, language, state_dir)
    app = FastAPI(title="medco session service", version="1.0")
    app.state.service = service

    def _session_doc(live: _LiveSession) -> dict:
        session = live.session
        return {
            "session_id": session.session_id,
            "scenario": session.scenario,
            "patient_id": session.record_ref,
            "language": session.language,
            "phase": session.phase,
            "closed": live.closed,
            "turns": len(session.transcript),
        }

    @app.get("/v1/cases")
    def list_cases():
        return [{
            "patient_id": r.patient_id,
            "department": r.department,
            "chief_complaint": r.basic_info.chief_complaint,
        } for r in service.records.values()]

    @app.get("/v1/sessions")
    def list_sessions():
        return [_session_doc(live) for live in service.sessions.values()]

    @app.post("/v1/sessions", status_code=201)
    def create_session(req: CreateSession):
        live = service.create(req)
        doc = _session_doc(live)
        doc["messages"] = [m.to_dict() for m in live.session.transcript]
        return doc

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str):
        return _session_doc(service.get(session_id))

    @app.post("/v1/sessions/{session_id}/message")
    def post_message(session_id: str, message: UserMessage):
        new_messages = service.post_message(session_id, message.content)
        live = service.get(session_id)
        return {
            "messages": [m.to_dict() for m in new_messages],
            "terminal": any(m.terminal for m in new_messages),
            "phase": live.session.phase,
        }

    @app.get("/v1/sessions/{session_id}/transcript")
    def get_transcript(session_id: str):
        live = service.get(session_id)
        return {"session_id": session_id,
                "messages": [m.to_dict() for m in live.session.transcript]}

    @app.post("/v1/sessions/{session_id}/recall")
    def post_recall(session_id: str, query: RecallQuery):
        return {"items": service.recall(session_id, query)}

    @app.post("/v1/sessions/{session_id}/assess")
    def post_assess(session_id: str):
        return service.assess(session_id)

    @app.get("/v1/sessions/{session_id}/events")
    async def get_events(session_id: str, request: Request, after: int = -1,
                         follow: bool = False, timeout: float = 10.0):
        live = service.get(session_id)
        last_event_id = request.headers.get("last-event-id")
        if last_event_id is not None:
            after = max(after, int(last_event_id))

        async def stream():
            cursor = after + 1
            waited = 0.0
            while True:
                transcript = live.session.transcript
                while cursor < len(transcript):
                    message = transcript[cursor]
                    payload = json.dumps(message.to_dict(), ensure_ascii=False)
                    yield f"id: {message.turn}\nevent: message\ndata: {payload}\n\n"
                    cursor += 1
                    waited = 0.0
                if not follow or live.closed or waited >= timeout:
                    break
                await asyncio.sleep(0.05)
                waited += 0.05
            status = json.dumps({"phase": live.session.phase,
                                 "closed": live.closed})
            yield f"event: phase\ndata: {status}\n\n"

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app

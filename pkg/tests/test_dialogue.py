import string

import pytest
from hypothesis import given, strategies as st

from medco import synthetic
from medco.dialogue import (DiagnosticReport, SessionState, new_session,
                            parse_inquiry_questions, parse_knowledge_card,
                            parse_structured_report, parse_suggestions,
                            peer_discussion, render_report,
                            render_suggestions, replay_transcript,
                            run_initial_diagnosis, run_learning_case,
                            run_practicing_case, summarize_report,
                            transcript_lines)
from medco.errors import ReportParseError, SessionStateError
from medco.memory import MemoryStores
from medco.tools import RadiologistTools

# item text that survives a render -> parse round trip: no '#', no '(n)'
# enumerators, no leading/trailing separators
item_text = st.text(alphabet=string.ascii_letters + " ", min_size=1,
                    max_size=40).map(str.strip).filter(bool)


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------

def test_parse_report_headers_any_order():
    text = ("#Treatment Plan# (1) rest\n#Diagnostic Results# (1) flu (2) cold\n"
            "#Symptom# (1) fever")
    report = parse_structured_report(text)
    assert report.diagnostic_results == ["flu", "cold"]
    assert report.treatment_plan == ["rest"]
    assert report.examinations == []


def test_parse_report_requires_diagnosis_header():
    with pytest.raises(ReportParseError) as err:
        parse_structured_report("#Symptom# (1) fever")
    assert err.value.raw_text.startswith("#Symptom#")


def test_parse_report_chinese_headers():
    text = "#症状# (1) 发热\n#诊断结果# (1) 流感"
    report = parse_structured_report(text)
    assert report.symptoms == ["发热"]
    assert report.diagnostic_results == ["流感"]


@given(items=st.lists(item_text, min_size=1, max_size=4),
       results=st.lists(item_text, min_size=1, max_size=3))
def test_report_render_parse_round_trip(items, results):
    report = DiagnosticReport(symptoms=items, diagnostic_results=results)
    for language in ("en", "zh"):
        parsed = parse_structured_report(render_report(report, language))
        assert parsed.symptoms == items
        assert parsed.diagnostic_results == results


@given(values=st.lists(item_text, min_size=5, max_size=5))
def test_suggestions_round_trip(values):
    suggestions = dict(zip(DiagnosticReport.SECTIONS, values))
    for language in ("en", "zh"):
        assert parse_suggestions(render_suggestions(suggestions, language)) == suggestions


def test_parse_suggestions_missing_section():
    with pytest.raises(ReportParseError, match="missing suggestion section"):
        parse_suggestions("#Symptoms## Suggestions<ask more>")


def test_parse_knowledge_card():
    text = ("#Disease Definition# (1) a condition\n#Pathogenesis# (1) unclear\n"
            "#Main Symptoms# (1) pain (2) heat\n"
            "#Common Auxiliary Examination Methods# (1) CT\n"
            "#Main Treatment Plans# (1) rest")
    card = parse_knowledge_card(text)
    assert card.main_symptoms == ["pain", "heat"]
    assert card.auxiliary_exam_methods == ["CT"]


def test_parse_inquiry_questions():
    text = "#Inquire Patient#(1) when did it start? (2) any fever?"
    assert len(parse_inquiry_questions(text, "patient")) == 2
    with pytest.raises(ReportParseError):
        parse_inquiry_questions(text, "radiologist")


# --------------------------------------------------------------------------
# state machine
# --------------------------------------------------------------------------

def test_illegal_transition_rejected(corpus4):
    session = new_session("practicing", corpus4[0])
    with pytest.raises(SessionStateError, match="illegal transition"):
        session.advance("discussing")
    session.advance("summarizing")
    session.advance("recalling")
    session.advance("further_inquiry")
    session.advance("discussing")
    session.advance("done")
    with pytest.raises(SessionStateError):
        session.advance("summarizing")


def test_learning_must_pass_through_assessing(corpus4):
    session = new_session("learning", corpus4[0])
    session.advance("summarizing")
    with pytest.raises(SessionStateError, match="assessing"):
        session.advance("done")
    with pytest.raises(SessionStateError, match="recalling"):
        session.advance("recalling")


def test_unknown_scenario_and_turn_cap(corpus4):
    with pytest.raises(ValueError):
        new_session("cramming", corpus4[0])
    with pytest.raises(ValueError):
        new_session("learning", corpus4[0], turn_cap=0)


# --------------------------------------------------------------------------
# golden transcript and routing invariant
# --------------------------------------------------------------------------

GOLDEN_FLOW = [
    ("patient", "doctor", False),
    ("student", "broadcast", False),
    ("patient", "doctor", False),
    ("student", "broadcast", False),
    ("patient", "examiner", False),
    ("radiologist", "broadcast", False),
    ("patient", "doctor", False),
    ("student", "broadcast", False),
    ("patient", "doctor", True),
]


def assert_routing_invariant(transcript):
    for i, message in enumerate(transcript):
        if message.speaker == "patient" and message.addressee == "examiner":
            assert transcript[i + 1].speaker == "radiologist"
            assert transcript[i + 2].speaker == "patient"
            assert transcript[i + 2].addressee == "doctor"


def run_one_learning(corpus4, backends4, tools4, memory4):
    sessions = []
    bundle = run_learning_case(corpus4[0], memory4, backends4, tools4,
                               transcript_sink=sessions.append)
    return sessions[0], bundle


def test_golden_learning_transcript(corpus4, backends4, tools4, memory4):
    session, bundle = run_one_learning(corpus4, backends4, tools4, memory4)
    flow = [(m.speaker, m.addressee, m.terminal) for m in session.transcript]
    assert flow == GOLDEN_FLOW
    assert session.phase == "done"
    assert_routing_invariant(session.transcript)
    # the exam result reached the student through the patient relay
    relay = session.transcript[6].content
    assert "168/102" in relay
    assert set(bundle.suggestions) == set(DiagnosticReport.SECTIONS)
    assert set(bundle.knowledge) == set(corpus4[0].truth.diseases)


def test_learning_fills_memory(corpus4, backends4, tools4, memory4):
    run_one_learning(corpus4, backends4, tools4, memory4)
    assert list(memory4.cases) == ["case0001"]
    complaint = corpus4[0].basic_info.chief_complaint
    assert complaint in memory4.symptoms
    assert memory4.symptoms[complaint].diseases == corpus4[0].truth.diseases


def test_turn_cap_flags_partial(corpus4, backends4, tools4):
    session = new_session("practicing", corpus4[0], turn_cap=1)
    transcript, report = run_initial_diagnosis(session, corpus4[0], backends4,
                                               tools4)
    assert report.flagged_partial and not report.is_final()
    assert session.phase == "summarizing"


def test_summarize_requires_student_message(backends4):
    with pytest.raises(ValueError):
        summarize_report([], backends4)


def test_practicing_full_range(corpus16):
    backends = synthetic.scripted_backends(corpus16)
    tools = RadiologistTools(backends)
    memory = MemoryStores(backends.embedder)
    for record in corpus16[:4]:
        run_learning_case(record, memory, backends, tools)
    sessions = []
    report = run_practicing_case(corpus16[0], memory, "suggestion", 1.0,
                                 backends, tools,
                                 transcript_sink=sessions.append)
    assert report.is_final()
    assert "hypertension" in report.diagnostic_results[0]
    # further-inquiry happened: the session went through two dialogues
    assert len(sessions) == 1
    assert_routing_invariant(sessions[0].transcript)


def test_practicing_range_zero_skips_recall(corpus4, backends4, tools4, memory4):
    report = run_practicing_case(corpus4[1], memory4, "knowledge", 0.0,
                                 backends4, tools4)
    assert report.is_final()


def test_practicing_empty_recall_returns_initial(corpus4, backends4, tools4,
                                                 memory4):
    # memory is empty, so recall yields nothing even at full range
    report = run_practicing_case(corpus4[1], memory4, "knowledge", 1.0,
                                 backends4, tools4)
    assert report.is_final()


def test_discussion_merges_reports(corpus4, backends4, tools4, memory4):
    run_one_learning(corpus4, backends4, tools4, memory4)
    report = run_practicing_case(corpus4[0], memory4, "discussion", 1.0,
                                 backends4, tools4)
    assert report.is_final()


def test_unknown_strategy(corpus4, backends4, tools4, memory4):
    with pytest.raises(ValueError):
        run_practicing_case(corpus4[0], memory4, "osmosis", 1.0, backends4,
                            tools4)


def test_peer_discussion_rejects_partial(backends4):
    final = DiagnosticReport(diagnostic_results=["flu"])
    empty = DiagnosticReport()
    with pytest.raises(ValueError, match="report B"):
        peer_discussion(final, empty, backends4)


# --------------------------------------------------------------------------
# transcript persistence
# --------------------------------------------------------------------------

def test_transcript_replay_round_trip(corpus4, backends4, tools4, memory4):
    session, _ = run_one_learning(corpus4, backends4, tools4, memory4)
    lines = transcript_lines(session, clock=lambda: 5.0)
    replayed = replay_transcript(lines, scenario="learning")
    assert [m.to_dict() for m in replayed.transcript] == \
        [m.to_dict() for m in session.transcript]


def test_replay_rejects_gap(corpus4, backends4, tools4, memory4):
    session, _ = run_one_learning(corpus4, backends4, tools4, memory4)
    lines = transcript_lines(session)
    del lines[3]
    with pytest.raises(ValueError, match="non-contiguous"):
        replay_transcript(lines)

import pytest
from hypothesis import given, strategies as st

from medco import agents, synthetic
from medco.agents import (ADDRESS_MARKERS, TERMINATION_TOKENS, RoleSpec,
                          detect_terminal, load_prompt, parse_addressee,
                          render_system_prompt, strip_marker, template_slots)
from medco.errors import PromptError

PROMPT_NAMES = (
    "patient", "student_diagnosis", "student_further_inquiry",
    "student_inquire_patient", "student_inquire_radiologist",
    "chair_discussion", "radiologist_exam", "tool_select", "tool_radiology",
    "tool_report_vqa", "expert_summarize", "expert_assess",
    "expert_knowledge", "judge",
)

# text that cannot contain a marker or termination token even after
# whitespace squeezing
plain_text = st.text(
    alphabet=st.characters(blacklist_characters="<>#"), min_size=1, max_size=80
)


def test_prompt_catalog_complete():
    for name in PROMPT_NAMES:
        for language in ("en", "zh"):
            text = load_prompt(name, language)
            assert text.strip()


def test_load_prompt_unknown():
    with pytest.raises(PromptError):
        load_prompt("no_such_prompt", "en")
    with pytest.raises(PromptError):
        load_prompt("patient", "fr")


def test_role_prompt_slots_are_satisfiable():
    # every slot in a role prompt must be a standard record slot or a
    # documented extra
    extras = {"imaging_reports", "initial_findings", "retrieved_diseases",
              "general_info", "symptoms", "examinations"}
    record = synthetic.make_corpus(1)[0]
    known = set(agents.record_slots(record, "en")) | extras
    for name in PROMPT_NAMES:
        for language in ("en", "zh"):
            missing = template_slots(load_prompt(name, language)) - known
            assert not missing, f"{name}.{language}: {missing}"


def test_render_system_prompt_patient():
    record = synthetic.make_corpus(1)[0]
    spec = RoleSpec("patient", load_prompt("patient", "en"),
                    language="en")
    system = render_system_prompt(spec, record)
    assert record.basic_info.chief_complaint in system
    assert record.basic_info.personality in system


def test_render_rejects_unknown_extras():
    record = synthetic.make_corpus(1)[0]
    spec = RoleSpec("patient", load_prompt("patient", "en"))
    with pytest.raises(PromptError, match="unknown extra"):
        render_system_prompt(spec, record, extras={"bogus": "x"})


def test_render_names_missing_slots():
    spec = RoleSpec("expert", "{ground_truth}")
    with pytest.raises(PromptError, match="ground_truth"):
        render_system_prompt(spec, record=None)


@pytest.mark.parametrize("language", ["en", "zh"])
@given(body=plain_text)
def test_marker_round_trip(language, body):
    for marker, addressee in ADDRESS_MARKERS[language].items():
        content = f"{marker} {body}"
        assert parse_addressee(content, language) == addressee
        assert strip_marker(content, language) == body.strip()


@given(body=plain_text)
def test_marker_free_text_is_broadcast(body):
    assert parse_addressee(body, "en") == "broadcast"
    assert strip_marker(body, "en") == body.strip()


def test_lenient_marker_detection():
    content = '... "<To the examiner> need a CT'
    assert parse_addressee(content, "en") == "broadcast"
    assert parse_addressee(content, "en", lenient=True) == "examiner"


def test_marker_must_lead():
    content = "I will ask <To the examiner> later"
    assert parse_addressee(content, "en") == "broadcast"


@pytest.mark.parametrize("language", ["en", "zh"])
@given(prefix=plain_text, suffix=plain_text,
       pad=st.sampled_from(["", " ", "\n", "\t "]))
def test_terminal_detection_whitespace_insensitive(language, prefix, suffix, pad):
    token = TERMINATION_TOKENS[language]
    spaced = pad.join(token)  # whitespace inside the token itself
    assert detect_terminal(f"{prefix} {spaced} {suffix}", language)
    assert not detect_terminal(prefix + suffix, language)


def test_terminal_absent():
    assert not detect_terminal("thank you doctor", "en")
    assert not detect_terminal("<end", "en")

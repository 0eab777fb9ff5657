import json

import pytest

from medco import synthetic
from medco.errors import ToolError
from medco.records import ImageAttachment
from medco.tools import NO_ABNORMALITY, RadiologistTools


@pytest.fixture
def mm_corpus(tmp_path):
    records = synthetic.make_corpus(2, with_attachments=True,
                                    image_dir=tmp_path)
    for record in records:
        for attachment in record.examination.attachments:
            with open(attachment.uri, "wb") as handle:
                handle.write(b"\x89PNG fake image bytes")
    return records


def test_declared_kind_short_circuits(backends4, tools4):
    assert tools4.classify_image(ImageAttachment("x.png", "radiological")) == \
        "radiological"
    assert tools4.classify_image(ImageAttachment("x.png", "report_photo")) == \
        "report_photo"
    assert tools4.classify_image(ImageAttachment("x.png", "other")) == "none"
    # none of those consumed a backend call
    assert backends4._provider.calls == 0


def test_classify_unknown_kind_uses_vision(mm_corpus, tmp_path):
    backends = synthetic.scripted_backends(mm_corpus)
    tools = RadiologistTools(backends)
    attachment = ImageAttachment(mm_corpus[0].examination.attachments[0].uri,
                                 declared_kind="unknown")
    assert tools.classify_image(attachment, tag="t") == "radiological"


def test_classify_retry_then_error(mm_corpus):
    backends = synthetic.scripted_backends(mm_corpus)
    uri = mm_corpus[0].examination.attachments[0].uri
    backends._provider.register_sequence("t", "vision_select",
                                         ["gibberish", "more gibberish"])
    tools = RadiologistTools(backends)
    with pytest.raises(ToolError, match="unmappable"):
        tools.classify_image(ImageAttachment(uri, "unknown"), tag="t")


def test_cached_interpretation_avoids_vision_calls(mm_corpus):
    backends = synthetic.scripted_backends(mm_corpus)
    tools = RadiologistTools(backends)
    attachment = mm_corpus[0].examination.attachments[0]
    report = tools.radiology_report(attachment, tag="t")
    assert "Findings" in report
    assert tools.vision_calls == 0  # preset interpretation, no call


def test_interpretation_cached_once_per_uri(mm_corpus, tmp_path):
    backends = synthetic.scripted_backends(mm_corpus)
    cache_path = tmp_path / "cache.json"
    tools = RadiologistTools(backends, cache_path=cache_path)
    uri = mm_corpus[0].examination.attachments[0].uri
    first = tools.radiology_report(ImageAttachment(uri, "radiological"), tag="t")
    again = tools.radiology_report(ImageAttachment(uri, "radiological"), tag="t")
    assert first == again
    assert tools.vision_calls == 1
    assert json.loads(cache_path.read_text(encoding="utf-8"))[uri] == first

    # a fresh instance reloads the cache and never calls the backend
    reloaded = RadiologistTools(backends, cache_path=cache_path)
    assert reloaded.radiology_report(ImageAttachment(uri, "radiological"),
                                     tag="t") == first
    assert reloaded.vision_calls == 0


def test_set_interpretation_is_immutable(mm_corpus):
    attachment = mm_corpus[0].examination.attachments[0]
    with pytest.raises(ValueError, match="already cached"):
        attachment.set_interpretation("something else")
    attachment.set_interpretation(attachment.cached_interpretation)  # no-op ok


def test_report_tools_reject_wrong_kind(tools4):
    with pytest.raises(ToolError):
        tools4.radiology_report(ImageAttachment("x.png", "report_photo"))
    with pytest.raises(ToolError):
        tools4.report_vqa(ImageAttachment("x.png", "radiological"))


def test_report_format_warning(mm_corpus):
    backends = synthetic.scripted_backends(mm_corpus)
    tools = RadiologistTools(backends)
    uri = mm_corpus[0].examination.attachments[0].uri
    backends._provider.register_sequence("t", "vision_radiology",
                                         ["just some blob of text"])
    report = tools.radiology_report(ImageAttachment(uri, "radiological"), tag="t")
    assert report.startswith("[format warning")


def test_exam_request_matching_item(corpus4, backends4, tools4):
    reply = tools4.answer_examination_request(
        "I need a blood pressure measurement", corpus4[0], tag="t:case0001")
    assert reply.startswith("#Examination Items#")
    assert "168/102" in reply


def test_exam_request_unknown_item_is_no_abnormality(corpus4, backends4, tools4):
    before = backends4._provider.calls
    reply = tools4.answer_examination_request(
        "I need a lumbar puncture", corpus4[0], tag="t")
    assert reply == ("#Examination Items# - I need a lumbar puncture: "
                     + NO_ABNORMALITY["en"])
    assert backends4._provider.calls == before  # fully deterministic


def test_exam_request_requires_exam_data(tools4):
    record = synthetic.make_corpus(1)[0]
    record.examination.physical_exam = ""
    record.examination.auxiliary_exams = ""
    record.examination.attachments = []
    with pytest.raises(ValueError, match="no examination data"):
        tools4.answer_examination_request("anything", record)


def test_unreadable_image(backends4, tools4):
    with pytest.raises(ToolError, match="unreadable"):
        tools4.classify_image(ImageAttachment("/no/such/file.png", "unknown"))

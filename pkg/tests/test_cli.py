import json

from click.testing import CliRunner

from medco import synthetic
from medco.cli import main
from medco.records import load_corpus, save_corpus


def run(args):
    return CliRunner().invoke(main, args, catch_exceptions=False)


def test_ingest_round_trip(tmp_path):
    src = tmp_path / "src.json"
    records = synthetic.make_corpus(3)
    src.write_text(json.dumps([r.to_dict() for r in records]), encoding="utf-8")
    result = run(["ingest", str(src), str(tmp_path / "dest")])
    assert result.exit_code == 0, result.output
    assert "ingested 3 records" in result.output
    assert load_corpus(tmp_path / "dest") == records


def test_ingest_invalid_corpus_machine_readable_error(tmp_path):
    src = tmp_path / "src.json"
    doc = synthetic.make_corpus(1)[0].to_dict()
    doc["truth"]["diseases"] = []
    src.write_text(json.dumps([doc]), encoding="utf-8")
    result = run(["ingest", str(src), str(tmp_path / "dest")])
    assert result.exit_code == 1
    line = next(l for l in result.output.splitlines() if l.startswith("error: "))
    parsed = json.loads(line[len("error: "):])
    assert parsed["error"] and parsed["message"]


def test_split_command(tmp_path):
    corpus, _ = synthetic.make_split_corpus_506()
    save_corpus(corpus, tmp_path / "c")
    result = run(["split", str(tmp_path / "c"), "--train-fraction", "0.5"])
    assert result.exit_code == 0
    counts = json.loads(result.output)
    assert counts["train"] + counts["test"] == 506


def test_learn_then_practice(tmp_path):
    learn_dir = tmp_path / "learn"
    result = run(["learn", "--run-dir", str(learn_dir)])
    assert result.exit_code == 0, result.output
    summary = json.loads(result.output)
    assert len(summary["done"]) == 16

    icd = synthetic.write_icd_terminology(tmp_path / "icd.csv")
    result = run(["practice", "--run-dir", str(tmp_path / "prac"),
                  "--memory", str(learn_dir / "memory" / "snapshot.json"),
                  "--icd", str(icd), "--strategy", "knowledge"])
    assert result.exit_code == 0, result.output
    assert result.output.startswith("w/ knowledge:")
    assert (tmp_path / "prac" / "results" / "hde.tsv").exists()


def test_practice_rejects_out_of_range(tmp_path):
    result = run(["practice", "--run-dir", str(tmp_path / "x"),
                  "--memory", "m.json", "--icd", "i.csv", "--range", "1.5"])
    assert result.exit_code == 2
    assert "outside [0, 1]" in result.output


def test_curve_rejects_out_of_range(tmp_path):
    result = run(["curve", "--run-dir", str(tmp_path / "x"),
                  "--memory", "m.json", "--icd", "i.csv",
                  "--ranges", "0,2"])
    assert result.exit_code == 2


def test_missing_memory_snapshot_fails_cleanly(tmp_path):
    icd = synthetic.write_icd_terminology(tmp_path / "icd.csv")
    result = run(["practice", "--run-dir", str(tmp_path / "x"),
                  "--memory", str(tmp_path / "missing.json"),
                  "--icd", str(icd)])
    assert result.exit_code == 1
    assert "error: " in result.output

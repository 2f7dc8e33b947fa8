import json

import pytest

from conftest import doc, rel, toy_schema
from mare.cli import main
from mare.corpus import read_corpus, save_schema, write_corpus
from mare.synth import SynthConfig, generate, synth_schema

MEMO = doc(["Unfall", "auf", "der", "A1", "bei", "Köln", ",", "30", "Minuten"],
           rel("Accident", ("Trigger", 0, 1), ("Location", 3, 4), ("Delay", 7, 9)),
           doc_id="memo")
MEMO_CONFIG = {
    "train": {"learning_rate": 0.02, "epochs": 60},
    "span": {"embedding_dim": 16, "max_span_width": 3, "head_lr": 0.02, "embedding_lr": 0.02,
             "epochs": 150},
}


@pytest.fixture
def files(tmp_path):
    save_schema(toy_schema(), tmp_path / "schema.json")
    write_corpus([MEMO], tmp_path / "memo.jsonl")
    (tmp_path / "memo.config.json").write_text(json.dumps(MEMO_CONFIG))
    return tmp_path


def run(*argv):
    return main([str(a) for a in argv])


def read_jsonl(path):
    return [json.loads(line) for line in open(path, encoding="utf-8")]


def test_synth_deterministic(tmp_path):
    for name in ("a", "b"):
        assert run("synth", "--count", 40, "--seed", 3, "--out", tmp_path / f"{name}.jsonl",
                   "--schema", tmp_path / f"{name}.schema.json") == 0
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    assert (tmp_path / "a.schema.json").read_bytes() == (tmp_path / "b.schema.json").read_bytes()
    assert len(read_corpus(tmp_path / "a.jsonl")) == 40


def test_synth_config_file(tmp_path):
    (tmp_path / "s.json").write_text(json.dumps({"synth": {"document_count": 5, "seed": 1}}))
    assert run("synth", "--config", tmp_path / "s.json", "--out", tmp_path / "c.jsonl") == 0
    assert len(read_corpus(tmp_path / "c.jsonl")) == 5


def test_synth_rejects_bad_probability(tmp_path, capsys):
    assert run("synth", "--shared-span-probability", 2, "--out", tmp_path / "x.jsonl") == 2
    assert "shared_span_probability" in capsys.readouterr().err


@pytest.mark.parametrize("approach", ["seq", "span"])
def test_memorized_document_round_trip(files, approach, capsys):
    model = files / f"{approach}.json"
    assert run("train", "--approach", approach, "--corpus", files / "memo.jsonl", "--schema",
               files / "schema.json", "--model", model, "--config",
               files / "memo.config.json") == 0
    assert "final training loss" in capsys.readouterr().err
    assert run("predict", "--model", model, "--corpus", files / "memo.jsonl", "--schema",
               files / "schema.json", "--out", files / "pred.jsonl") == 0
    (record,) = read_jsonl(files / "pred.jsonl")
    assert record["docId"] == "memo"
    (relation,) = record["relations"]
    assert relation["label"] == "Accident"
    assert [(a["start"], a["end"], a["role"]) for a in relation["attributes"]] == [
        (0, 1, "Trigger"), (3, 4, "Location"), (7, 9, "Delay")]
    assert run("eval", "--corpus", files / "memo.jsonl", "--predictions", files / "pred.jsonl",
               "--schema", files / "schema.json", "--out", files / "report.json",
               "--no-figures") == 0
    scores = json.loads((files / "report.json").read_text())["scores"]
    assert list(scores) == ["AR", "Cl", "MRE", "CRE", "BRE"]
    assert all(block["f1"] == 1.0 for block in scores.values())


@pytest.mark.parametrize("approach", ["seq", "span"])
def test_train_byte_identical(tmp_path, approach):
    cfg = SynthConfig(document_count=20, seed=2)
    write_corpus(generate(cfg), tmp_path / "train.jsonl")
    save_schema(synth_schema(cfg), tmp_path / "schema.json")
    for name in ("a", "b"):
        assert run("train", "--approach", approach, "--corpus", tmp_path / "train.jsonl",
                   "--schema", tmp_path / "schema.json", "--model", tmp_path / f"{name}.json",
                   "--epochs", 2, "--seed", 7) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_missing_schema_path(files, capsys):
    missing = files / "nope" / "schema.json"
    code = run("train", "--corpus", files / "memo.jsonl", "--schema", missing, "--model",
               files / "m.json")
    assert code == 2
    assert str(missing) in capsys.readouterr().err


def test_corpus_schema_mismatch_detected_before_training(files, capsys):
    bad = doc(3, rel("Accident", ("Weather", 0, 1), ("Location", 2, 3)))
    write_corpus([bad], files / "bad.jsonl")
    code = run("train", "--corpus", files / "bad.jsonl", "--schema", files / "schema.json",
               "--model", files / "m.json")
    assert code == 2
    assert "unknown-role" in capsys.readouterr().err
    assert not (files / "m.json").exists()


def test_unknown_config_key(files, capsys):
    (files / "bad.config.json").write_text(json.dumps({"train": {"learning_rte": 1}}))
    code = run("train", "--corpus", files / "memo.jsonl", "--schema", files / "schema.json",
               "--model", files / "m.json", "--config", files / "bad.config.json")
    assert code == 2
    assert "learning_rte" in capsys.readouterr().err


def _trained(files, approach="seq"):
    model = files / f"{approach}.json"
    assert run("train", "--approach", approach, "--corpus", files / "memo.jsonl", "--schema",
               files / "schema.json", "--model", model, "--epochs", 1) == 0
    return model


def test_predict_empty_file(files):
    model = _trained(files)
    (files / "empty.jsonl").write_text("")
    assert run("predict", "--model", model, "--corpus", files / "empty.jsonl", "--schema",
               files / "schema.json", "--out", files / "pred.jsonl") == 0
    assert (files / "pred.jsonl").read_text() == ""


def test_predict_span_threshold_one(files):
    model = _trained(files, "span")
    docs = [MEMO, doc(4, doc_id="other")]
    write_corpus(docs, files / "two.jsonl")
    assert run("predict", "--model", model, "--corpus", files / "two.jsonl", "--schema",
               files / "schema.json", "--out", files / "pred.jsonl", "--threshold", 1.0,
               "--spans-out", files / "spans.jsonl") == 0
    records = read_jsonl(files / "pred.jsonl")
    assert [r["docId"] for r in records] == ["memo", "other"]
    assert all(r["relations"] == [] for r in records)
    assert all(r["spans"] == [] for r in read_jsonl(files / "spans.jsonl"))


def test_predict_refuses_other_schema(files, capsys):
    model = _trained(files)
    cfg = SynthConfig()
    save_schema(synth_schema(cfg), files / "other.json")
    code = run("predict", "--model", model, "--corpus", files / "memo.jsonl", "--schema",
               files / "other.json", "--out", files / "pred.jsonl")
    err = capsys.readouterr().err
    assert code == 2
    assert toy_schema().fingerprint() in err
    assert synth_schema(cfg).fingerprint() in err


def _write_predictions(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records))


def _pred(doc_id, *relations):
    return {"docId": doc_id, "relations": [
        {"label": r.label, "mandatoryComplete": True, "attributes": [
            {"start": a.span.start, "end": a.span.end, "role": a.role, "completed": False}
            for a in r.attributes]} for r in relations]}


def test_eval_hand_fixture(files, capsys):
    a1 = rel("Accident", ("Trigger", 0, 1), ("Location", 2, 3))
    a2 = rel("Accident", ("Trigger", 10, 11), ("Location", 12, 13))
    gold = [doc(14, a1, a2, doc_id="x"), doc(14, a1, a2, doc_id="y")]
    write_corpus(gold, files / "gold.jsonl")
    _write_predictions(files / "pred.jsonl", [_pred("x", a1), _pred("y", a2)])
    assert run("eval", "--corpus", files / "gold.jsonl", "--predictions", files / "pred.jsonl",
               "--schema", files / "schema.json", "--out", files / "r.json",
               "--strategy", "mre,ar") == 0
    report = json.loads((files / "r.json").read_text())
    assert list(report["scores"]) == ["AR", "MRE"]
    mre = report["scores"]["MRE"]
    assert (mre["precision"], mre["recall"]) == (1.0, 0.5)
    for suffix in (".tsv", ".txt", ".png"):
        assert (files / f"r{suffix}").exists()
    assert "MRE" in capsys.readouterr().err


def test_eval_exclude_triggers(files):
    gold = [doc(6, rel("Accident", ("Trigger", 0, 1), ("Location", 2, 3)),
                rel("TrafficJam", ("Trigger", 4, 5)), doc_id="x")]
    write_corpus(gold, files / "gold.jsonl")
    _write_predictions(files / "pred.jsonl", [_pred("x")])
    common = ["eval", "--corpus", files / "gold.jsonl", "--predictions", files / "pred.jsonl",
              "--schema", files / "schema.json", "--strategy", "cl", "--no-figures"]
    assert run(*common, "--out", files / "a.json") == 0
    assert run(*common, "--out", files / "b.json", "--exclude-triggers") == 0
    plain = json.loads((files / "a.json").read_text())
    stripped = json.loads((files / "b.json").read_text())
    assert plain["scores"]["Cl"]["goldCount"] == 2
    assert stripped["scores"]["Cl"]["goldCount"] == 1
    assert stripped["config"]["excludeTriggers"] is True


def test_eval_warns_on_missing_documents(files, caplog):
    write_corpus([MEMO], files / "gold.jsonl")
    _write_predictions(files / "pred.jsonl", [_pred("elsewhere")])
    assert run("eval", "--corpus", files / "gold.jsonl", "--predictions", files / "pred.jsonl",
               "--schema", files / "schema.json", "--out", files / "r.json",
               "--no-figures") == 0
    warnings = [r.getMessage() for r in caplog.records if r.levelname == "WARNING"]
    assert any("memo" in w for w in warnings)
    assert any("elsewhere" in w for w in warnings)


def test_stats(files):
    cfg = SynthConfig(document_count=30, seed=1)
    write_corpus(generate(cfg), files / "train.jsonl")
    write_corpus(generate(SynthConfig(document_count=10, seed=2)), files / "test.jsonl")
    save_schema(synth_schema(cfg), files / "synth.schema.json")
    assert run("stats", "--corpus", f"train={files / 'train.jsonl'}", "--corpus",
               f"test={files / 'test.jsonl'}", "--schema", files / "synth.schema.json",
               "--out", files / "stats.json") == 0
    report = json.loads((files / "stats.json").read_text())
    assert report["splits"]["train"]["documentCount"] == 30
    assert report["splits"]["test"]["documentCount"] == 10
    assert report["total"]["documentCount"] == 40
    for suffix in (".tsv", ".attributes.png", ".explicitness.png"):
        assert (files / f"stats{suffix}").exists()


def test_stats_empty_corpus(files):
    (files / "empty.jsonl").write_text("")
    assert run("stats", "--corpus", files / "empty.jsonl", "--schema", files / "schema.json",
               "--out", files / "stats.json") == 0
    report = json.loads((files / "stats.json").read_text())
    assert report["splits"]["empty"]["documentCount"] == 0
    assert report["total"]["relationCount"] == 0


def test_convert(tmp_path):
    record = {
        "id": "sd1", "text": "Stau auf A1",
        "tokens": [{"span": {"start": 0, "end": 4}}, {"span": {"start": 5, "end": 8}},
                   {"span": {"start": 9, "end": 11}}],
        "conceptMentions": [{"span": {"start": 9, "end": 11}, "type": "location"}],
        "relationMentions": [{"name": "TrafficJam", "args": [
            {"role": "trigger", "conceptMention": {"span": {"start": 0, "end": 4}}},
            {"role": "location", "conceptMention": {"span": {"start": 9, "end": 11}}}]}],
    }
    (tmp_path / "in.jsonl").write_text(json.dumps(record) + "\n")
    assert run("convert", "--input", tmp_path / "in.jsonl", "--out", tmp_path / "out.jsonl",
               "--schema-out", tmp_path / "schema.json") == 0
    (d,) = read_corpus(tmp_path / "out.jsonl")
    assert d.tokens == ("Stau", "auf", "A1")
    assert [(a.span.start, a.span.end, a.role) for a in d.relations[0].attributes] == [
        (0, 1, "trigger"), (2, 3, "location")]


def test_missing_subcommand():
    with pytest.raises(SystemExit):
        main([])

"""The tapas_export console entry point."""
import json

import pytest

import tapas_export.exporter as exporter_module
from tapas_export.cli import main
from tapas_export.encoders import ModelLoadError
from tapas_export.tgem import read_tgem
from stub_encoder import StubEncoder


@pytest.fixture
def stubbed_models(monkeypatch):
    built = []

    def factory(name, pooling, batch_size):
        built.append((name, pooling, batch_size))
        return StubEncoder(name=name)

    monkeypatch.setattr(exporter_module, "PretrainedTableEncoder", factory)
    return built


def test_export_command_writes_the_file(write_corpus, stubbed_models, tmp_path, capsys):
    corpus = write_corpus([(0, "The Age is 34."), (1, "The Age is 51.")])
    out = tmp_path / "emb.tgem"
    code = main(["--in", str(corpus), "--model", "tapex-base", "--pool", "mean",
                 "--out", str(out), "--batch", "8"])
    assert code == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["rows"] == 2 and summary["dim"] == 768
    assert stubbed_models == [("tapex-base", "mean", 8)]
    assert read_tgem(out)[0] == 768


def test_defaults_are_tapas_base_with_cls_pooling(write_corpus, stubbed_models,
                                                  tmp_path, capsys):
    corpus = write_corpus([(0, "row")])
    code = main(["--in", str(corpus), "--out", str(tmp_path / "e.tgem")])
    assert code == 0
    capsys.readouterr()
    assert stubbed_models == [("tapas-base", "cls", 16)]


def test_missing_required_flags_exit_with_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--out", "x.tgem"])
    assert exc.value.code == 2
    capsys.readouterr()


def test_unknown_model_choice_exits_with_usage_error(write_corpus, tmp_path, capsys):
    corpus = write_corpus([(0, "row")])
    with pytest.raises(SystemExit) as exc:
        main(["--in", str(corpus), "--model", "bert-base", "--out", str(tmp_path / "e.tgem")])
    assert exc.value.code == 2
    capsys.readouterr()


def test_malformed_corpus_exits_one_with_json_error(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{broken\n", encoding="utf-8")
    code = main(["--in", str(bad), "--out", str(tmp_path / "e.tgem")])
    assert code == 1
    err = capsys.readouterr().err
    assert err.count("\n") == 1
    assert "bad corpus line 1" in json.loads(err)["error"]


def test_model_load_failure_exits_one_with_json_error(write_corpus, monkeypatch,
                                                      tmp_path, capsys):
    def exploding(name, pooling, batch_size):
        raise ModelLoadError(f"could not load {name}: offline")

    monkeypatch.setattr(exporter_module, "PretrainedTableEncoder", exploding)
    corpus = write_corpus([(0, "row")])
    code = main(["--in", str(corpus), "--out", str(tmp_path / "e.tgem")])
    assert code == 1
    assert "could not load tapas-base" in json.loads(capsys.readouterr().err)["error"]

"""Sidecar export, validated by loading through the toolkit's file backend."""

import json

import pytest

from instructmine.scoring import load_embeddings, load_scores

from scorer_service.cli import main
from scorer_service.config import DEFAULT_MODELS
from scorer_service.export import ExportError, export_sidecars, read_pairs
from scorer_service.models import build_models

from pairdata import sample_pairs


def write_store(path, pairs):
    with path.open("w", encoding="utf-8") as fh:
        for p in pairs:
            record = {
                "id": p["id"],
                "instruction": p["instruction"],
                "response": p["response"],
                "source": "custom",
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


@pytest.fixture(scope="module")
def models():
    return build_models(DEFAULT_MODELS)


class TestExport:
    def test_cardinality_and_round_trip(self, models, tmp_path):
        store = tmp_path / "store.jsonl"
        write_store(store, sample_pairs(120))
        n = export_sidecars(models, store, tmp_path / "s.jsonl", tmp_path / "e.jsonl")
        assert n == 120

        scores = load_scores(tmp_path / "s.jsonl")
        embeddings = load_embeddings(tmp_path / "e.jsonl")
        assert len(scores) == len(embeddings) == 120
        assert all(e.vector.shape == (256,) for e in embeddings.values())

    def test_empty_corpus_empty_sidecars(self, models, tmp_path):
        store = tmp_path / "empty.jsonl"
        store.write_text("")
        n = export_sidecars(models, store, tmp_path / "s.jsonl", tmp_path / "e.jsonl")
        assert n == 0
        assert (tmp_path / "s.jsonl").read_bytes() == b""
        assert load_scores(tmp_path / "s.jsonl") == {}

    def test_input_field_joins_instruction(self, models, tmp_path):
        store = tmp_path / "store.jsonl"
        store.write_text(
            json.dumps({"id": "a", "instruction": "Q?", "input": "ctx", "response": "A."})
            + "\n"
        )
        pairs = read_pairs(store)
        assert pairs[0]["instruction"] == "Q?\n\nctx"

    def test_byte_deterministic(self, models, tmp_path):
        store = tmp_path / "store.jsonl"
        write_store(store, sample_pairs(15))
        export_sidecars(models, store, tmp_path / "s1.jsonl", tmp_path / "e1.jsonl")
        export_sidecars(models, store, tmp_path / "s2.jsonl", tmp_path / "e2.jsonl")
        assert (tmp_path / "s1.jsonl").read_bytes() == (tmp_path / "s2.jsonl").read_bytes()
        assert (tmp_path / "e1.jsonl").read_bytes() == (tmp_path / "e2.jsonl").read_bytes()

    def test_unreadable_corpus_fatal(self, models, tmp_path):
        with pytest.raises(ExportError, match="cannot read"):
            export_sidecars(models, tmp_path / "absent.jsonl", tmp_path / "s", tmp_path / "e")

    def test_malformed_record_fatal(self, models, tmp_path):
        store = tmp_path / "bad.jsonl"
        store.write_text('{"id": "x", "instruction": "no response"}\n')
        with pytest.raises(ExportError, match="bad.jsonl:1"):
            export_sidecars(models, store, tmp_path / "s", tmp_path / "e")


class TestCli:
    def test_export_command(self, tmp_path, capsys):
        store = tmp_path / "store.jsonl"
        write_store(store, sample_pairs(9))
        code = main(
            [
                "export",
                "--corpus", str(store),
                "--scores-out", str(tmp_path / "s.jsonl"),
                "--embeddings-out", str(tmp_path / "e.jsonl"),
            ]
        )
        assert code == 0
        assert "exported 9 samples" in capsys.readouterr().out
        assert len(load_scores(tmp_path / "s.jsonl")) == 9

    def test_export_missing_corpus_exit_2(self, tmp_path):
        code = main(
            [
                "export",
                "--corpus", str(tmp_path / "absent.jsonl"),
                "--scores-out", str(tmp_path / "s"),
                "--embeddings-out", str(tmp_path / "e"),
            ]
        )
        assert code == 2

    def test_bad_config_exit_1(self, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"models": {"lm": "nope"}}))
        code = main(
            [
                "export",
                "--config", str(config),
                "--corpus", str(tmp_path / "x"),
                "--scores-out", str(tmp_path / "s"),
                "--embeddings-out", str(tmp_path / "e"),
            ]
        )
        assert code == 1

    def test_config_file_round_trip(self, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"max_batch": 8, "device": "cpu"}))
        store = tmp_path / "store.jsonl"
        write_store(store, sample_pairs(3))
        code = main(
            [
                "export",
                "--config", str(config),
                "--corpus", str(store),
                "--scores-out", str(tmp_path / "s.jsonl"),
                "--embeddings-out", str(tmp_path / "e.jsonl"),
            ]
        )
        assert code == 0

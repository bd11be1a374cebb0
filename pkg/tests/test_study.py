"""The end-to-end fusion study."""

import json

import pytest

from instructmine.errors import DataError
from instructmine.sampling import study_manifest
from instructmine.study import load_losses, run_study, write_study_report

from synthdata import build_corpus, build_embeddings, build_scores


@pytest.fixture(scope="module")
def study_inputs():
    corpora = {
        "alpha": build_corpus(250, seed=70, name="alpha"),
        "beta": build_corpus(250, seed=71, name="beta"),
    }
    scores, embeddings = {}, {}
    for i, corpus in enumerate(corpora.values()):
        scores.update(build_scores(corpus, seed=72 + i))
        embeddings.update(build_embeddings(corpus, seed=74 + i, dim=10))
    manifest = study_manifest(
        {"alpha": "alpha.jsonl", "beta": "beta.jsonl"},
        fusions=16, size=60, seed=7,
    )
    losses = {spec.label: 1.05 + 0.004 * i for i, spec in enumerate(manifest.specs)}
    return manifest, losses, scores, embeddings, corpora


class TestRunStudy:
    def test_shapes(self, study_inputs):
        manifest, losses, scores, embeddings, corpora = study_inputs
        result = run_study(manifest, losses, scores, embeddings, corpora=corpora)
        assert len(result.observations) == 16
        assert result.full_fit.n == 16
        assert {r.variable for r in result.ks_results} >= {"loss", "rew", "knn6"}
        labels = [obs.label for obs in result.observations]
        assert labels == [spec.label for spec in manifest.specs]

    def test_report_rerun_byte_identical(self, study_inputs, tmp_path):
        manifest, losses, scores, embeddings, corpora = study_inputs
        first = run_study(manifest, losses, scores, embeddings, corpora=corpora)
        second = run_study(manifest, losses, scores, embeddings, corpora=corpora)
        path_a, path_b = tmp_path / "a.json", tmp_path / "b.json"
        write_study_report(first, path_a)
        write_study_report(second, path_b)
        assert path_a.read_bytes() == path_b.read_bytes()

    def test_report_is_valid_json_with_sections(self, study_inputs, tmp_path):
        manifest, losses, scores, embeddings, corpora = study_inputs
        result = run_study(manifest, losses, scores, embeddings, corpora=corpora)
        path = tmp_path / "report.json"
        write_study_report(result, path)
        report = json.loads(path.read_text())
        assert report["n_datasets"] == 16
        assert set(report) >= {"alpha", "descriptives", "ks", "ols", "stepwise"}
        assert "intercept" in report["ols"]["terms"]

    def test_missing_losses_listed(self, study_inputs):
        manifest, losses, scores, embeddings, corpora = study_inputs
        truncated = dict(list(losses.items())[:-2])
        with pytest.raises(DataError, match="fusion-01[45]"):
            run_study(manifest, truncated, scores, embeddings, corpora=corpora)

    def test_too_few_datasets_for_regression(self, study_inputs):
        _, _, scores, embeddings, corpora = study_inputs
        tiny = study_manifest(
            {"alpha": "alpha.jsonl", "beta": "beta.jsonl"},
            fusions=3, size=60, seed=8,
        )
        losses = {spec.label: 1.1 + 0.01 * i for i, spec in enumerate(tiny.specs)}
        with pytest.raises(DataError, match="n=3"):
            run_study(tiny, losses, scores, embeddings, corpora=corpora)

    def test_observation_indicators_match_direct_fuse(self, study_inputs):
        from instructmine.indicators import aggregate
        from instructmine.sampling import fuse

        manifest, losses, scores, embeddings, corpora = study_inputs
        result = run_study(manifest, losses, scores, embeddings, corpora=corpora)
        spec = manifest.specs[3]
        fused = fuse(spec, corpora)
        vector, _ = aggregate(fused, scores, embeddings, seed=spec.seed)
        assert result.observations[3].indicators == vector


class TestLoadLosses:
    def test_reads_map(self, tmp_path):
        path = tmp_path / "losses.json"
        path.write_text(json.dumps({"fusion-000": 1.08, "fusion-001": 1.15}))
        assert load_losses(path) == {"fusion-000": 1.08, "fusion-001": 1.15}

    def test_rejects_non_object(self, tmp_path):
        path = tmp_path / "losses.json"
        path.write_text("[1.0, 2.0]")
        with pytest.raises(DataError, match="object"):
            load_losses(path)

    def test_rejects_non_numeric(self, tmp_path):
        path = tmp_path / "losses.json"
        path.write_text(json.dumps({"fusion-000": "high"}))
        with pytest.raises(DataError, match="numbers"):
            load_losses(path)

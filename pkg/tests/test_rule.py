"""The quality rule, ranking, and selection."""

import math

import numpy as np
import pytest

from instructmine.corpus import Corpus, InstructionSample
from instructmine.errors import DataError, UsageError
from instructmine.indicators import IndicatorVector, aggregate
from instructmine.rule import (
    BUILTIN_RULES,
    QualityRule,
    load_rule,
    per_sample_values,
    rank_samples,
    resolve_rule,
    rule_from_fit,
    save_rule,
    select,
)
from instructmine.scoring import SampleEmbedding, SampleScores
from instructmine.stats import design_matrix, ols

from synthdata import build_corpus, build_embeddings, build_scores, make_observations

MEANS = {"rew": 0.776, "len": 1313.762, "knn6": 1.009}


def vector(**overrides):
    base = dict(len=100.0, rew=0.0, ppl=4.0, mtld=60.0, knn6=1.0,
                nat=0.5, coh=0.5, und=0.5)
    base.update(overrides)
    return IndicatorVector(**base)


class TestQualityRule:
    def test_builtin_coefficients(self):
        rule = BUILTIN_RULES["eq4"]
        assert rule.intercept == 1.0694
        assert rule.terms == {"rew": -0.1498, "len": 8.257e-5, "knn6": -0.9350}

    def test_prediction_at_dataset_means(self):
        rule = BUILTIN_RULES["eq4"]
        log_loss = rule.predict_log_loss(MEANS)
        assert log_loss == pytest.approx(0.1182, abs=5e-4)
        assert rule.predict_loss(MEANS) == pytest.approx(1.126, abs=0.002)

    def test_all_zero_values_give_intercept(self):
        rule = BUILTIN_RULES["eq4"]
        zeros = {"rew": 0.0, "len": 0.0, "knn6": 0.0}
        assert rule.predict_log_loss(zeros) == rule.intercept

    def test_accepts_indicator_vector(self):
        rule = BUILTIN_RULES["eq4"]
        v = vector(rew=0.776, len=1313.762, knn6=1.009)
        assert rule.predict_log_loss(v) == rule.predict_log_loss(MEANS)

    def test_missing_term_value_fatal(self):
        rule = BUILTIN_RULES["eq4"]
        with pytest.raises(DataError, match="knn6"):
            rule.predict_log_loss({"rew": 0.0, "len": 0.0})

    def test_non_indicator_term_rejected(self):
        with pytest.raises(DataError, match="non-indicator"):
            QualityRule(intercept=0.0, terms={"sentiment": 1.0}, provenance="x")

    def test_exp_consistency(self):
        rule = QualityRule(intercept=0.0, terms={"rew": 1.0}, provenance="t")
        for r in (-0.5, 0.0, 0.3, 2.0):
            log_value = rule.predict_log_loss({"rew": r})
            assert rule.predict_loss({"rew": r}) == pytest.approx(
                math.exp(log_value), rel=1e-9)

    def test_prediction_is_affine(self):
        rule = BUILTIN_RULES["eq4"]
        a = rule.predict_log_loss({"rew": 1.0, "len": 0.0, "knn6": 0.0})
        b = rule.predict_log_loss({"rew": 0.0, "len": 0.0, "knn6": 0.0})
        assert a - b == pytest.approx(-0.1498, abs=1e-12)


class TestPersistence:
    def test_save_load_round_trip(self, tmp_path):
        rule = QualityRule(intercept=0.25, terms={"rew": -0.1, "mtld": 0.01},
                           provenance="fitted")
        path = tmp_path / "rule.json"
        save_rule(rule, path)
        loaded = load_rule(path)
        assert loaded.intercept == rule.intercept
        assert dict(loaded.terms) == dict(rule.terms)

    def test_resolve_builtin(self):
        assert resolve_rule("builtin:eq4") is BUILTIN_RULES["eq4"]

    def test_resolve_unknown_builtin(self):
        with pytest.raises(UsageError, match="eq9"):
            resolve_rule("builtin:eq9")

    def test_resolve_path(self, tmp_path):
        path = tmp_path / "r.json"
        save_rule(QualityRule(intercept=1.0, terms={}, provenance="x"), path)
        assert resolve_rule(str(path)).intercept == 1.0

    def test_bad_file(self, tmp_path):
        path = tmp_path / "r.json"
        path.write_text("{\"intercept\": \"not a number\", \"terms\": {}}")
        with pytest.raises(DataError):
            load_rule(path)

    def test_rule_from_fit(self):
        obs = make_observations(n=78, seed=30, noise=0.01)
        y, X, names = design_matrix(obs, variables=("rew", "len", "knn6"))
        fit = ols(y, X, names)
        rule = rule_from_fit(fit)
        assert set(rule.terms) == {"rew", "len", "knn6"}
        assert rule.intercept == pytest.approx(1.0694, abs=0.05)


class TestPerSampleValues:
    def test_len_and_scores(self):
        corpus = build_corpus(10, seed=31)
        scores = build_scores(corpus, seed=32)
        embeddings = build_embeddings(corpus, seed=33, dim=8)
        values = per_sample_values(corpus, scores, embeddings, needed=("len", "rew"))
        sid = corpus.ids()[4]
        assert values[sid]["len"] == len(corpus.by_id()[sid].response)
        assert values[sid]["rew"] == scores[sid].rew

    def test_knn_against_whole_pool(self):
        corpus = build_corpus(20, seed=34)
        scores = build_scores(corpus, seed=35)
        embeddings = build_embeddings(corpus, seed=36, dim=8)
        values = per_sample_values(corpus, scores, embeddings, needed=("knn6",))
        _, per_sample = aggregate(corpus, scores, embeddings)
        for i, sid in enumerate(corpus.ids()):
            assert values[sid]["knn6"] == pytest.approx(per_sample["knn6"][i], abs=1e-12)

    def test_unknown_name(self):
        corpus = build_corpus(8, seed=37)
        with pytest.raises(UsageError):
            per_sample_values(corpus, {}, {}, needed=("quality",))


def pool_with_reward_gradient(n=40, seed=38):
    """A pool whose only varying indicator is the reward."""
    corpus = build_corpus(n, seed=seed)
    fixed_response = "steady answer text here"
    samples = [
        InstructionSample(id=s.id, instruction=s.instruction,
                          response=fixed_response, source=s.source)
        for s in corpus
    ]
    corpus = Corpus(corpus.name, samples)
    rng = np.random.default_rng(seed + 1)
    scores = {}
    rewards = np.linspace(-1.0, 1.5, n)
    for sid, rew in zip(corpus.ids(), rewards):
        scores[sid] = SampleScores(id=sid, ppl=4.0, rew=float(rew),
                                   nat=0.5, coh=0.5, und=0.5)
    embeddings = {
        sid: SampleEmbedding(id=sid, vector=rng.normal(size=8))
        for sid in corpus.ids()
    }
    return corpus, scores, embeddings, rewards


class TestRankSamples:
    def test_higher_reward_ranks_first(self):
        corpus, scores, embeddings, rewards = pool_with_reward_gradient()
        rule = QualityRule(intercept=0.0, terms={"rew": -0.1498}, provenance="t")
        ranked = rank_samples(rule, corpus, scores, embeddings)
        ranked_rewards = [scores[sid].rew for sid, _ in ranked]
        assert ranked_rewards == sorted(ranked_rewards, reverse=True)

    def test_ties_break_on_id(self):
        corpus, scores, embeddings, _ = pool_with_reward_gradient(n=12)
        flat = {sid: SampleScores(id=sid, ppl=4.0, rew=0.5, nat=0.5, coh=0.5, und=0.5)
                for sid in corpus.ids()}
        rule = QualityRule(intercept=0.0, terms={"rew": -1.0}, provenance="t")
        ranked = rank_samples(rule, corpus, flat, embeddings)
        assert [sid for sid, _ in ranked] == sorted(corpus.ids())

    def test_ranking_invariant_to_monotone_rescale(self):
        corpus, scores, embeddings, _ = pool_with_reward_gradient()
        a = QualityRule(intercept=0.0, terms={"rew": -0.1}, provenance="t")
        b = QualityRule(intercept=5.0, terms={"rew": -0.4}, provenance="t")
        order_a = [sid for sid, _ in rank_samples(a, corpus, scores, embeddings)]
        order_b = [sid for sid, _ in rank_samples(b, corpus, scores, embeddings)]
        assert order_a == order_b

    def test_values_are_predictions(self):
        corpus, scores, embeddings, _ = pool_with_reward_gradient(n=15)
        rule = QualityRule(intercept=0.2, terms={"rew": -0.3}, provenance="t")
        for sid, value in rank_samples(rule, corpus, scores, embeddings):
            assert value == pytest.approx(0.2 - 0.3 * scores[sid].rew, abs=1e-12)

    def test_small_pool_rejected(self):
        corpus, scores, embeddings, _ = pool_with_reward_gradient(n=6, seed=40)
        rule = QualityRule(intercept=0.0, terms={"rew": -1.0}, provenance="t")
        with pytest.raises(DataError, match="too small"):
            rank_samples(rule, corpus, scores, embeddings)


class TestSelect:
    def build_pool(self, n=400, seed=41):
        corpus = build_corpus(n, seed=seed)
        scores = build_scores(corpus, seed=seed + 1)
        embeddings = build_embeddings(corpus, seed=seed + 2, dim=12)
        return corpus, scores, embeddings

    def test_top_n(self):
        corpus, scores, embeddings = self.build_pool()
        rule = BUILTIN_RULES["eq4"]
        report = select(rule, corpus, scores, embeddings, n=50)
        assert len(report.corpus) == 50
        assert report.exp_rule_value == pytest.approx(
            math.exp(report.rule_value), rel=1e-12)

    def test_top_n_equals_pool(self):
        corpus, scores, embeddings = self.build_pool(n=30, seed=44)
        report = select(BUILTIN_RULES["eq4"], corpus, scores, embeddings, n=30)
        assert sorted(report.corpus.ids()) == sorted(corpus.ids())

    def test_selected_rewards_beat_pool_average(self):
        corpus, scores, embeddings = self.build_pool()
        rule = QualityRule(intercept=0.0, terms={"rew": -1.0}, provenance="t")
        report = select(rule, corpus, scores, embeddings, n=40)
        pool_mean = np.mean([scores[sid].rew for sid in corpus.ids()])
        assert report.indicators.rew > pool_mean

    def test_tiers_disjoint_and_monotone(self):
        corpus, scores, embeddings = self.build_pool()
        rule = QualityRule(intercept=0.0, terms={"rew": -1.0}, provenance="t")
        reports = select(rule, corpus, scores, embeddings, tiers=4)
        assert len(reports) == 4
        seen = set()
        rule_values = []
        for r in reports:
            ids = set(r.corpus.ids())
            assert len(ids) == 100
            assert not (ids & seen)
            seen |= ids
            rule_values.append(r.rule_value)
        # best band first: the rule value measured on each band rises
        assert rule_values == sorted(rule_values)

    def test_tier_size_bounds(self):
        corpus, scores, embeddings = self.build_pool(n=50, seed=47)
        rule = BUILTIN_RULES["eq4"]
        with pytest.raises(DataError, match="pool has 50"):
            select(rule, corpus, scores, embeddings, tiers=3, tier_size=20)

    def test_n_larger_than_pool(self):
        corpus, scores, embeddings = self.build_pool(n=20, seed=48)
        with pytest.raises(DataError, match="pool of 20"):
            select(BUILTIN_RULES["eq4"], corpus, scores, embeddings, n=21)

    def test_exactly_one_mode(self):
        corpus, scores, embeddings = self.build_pool(n=20, seed=49)
        rule = BUILTIN_RULES["eq4"]
        with pytest.raises(UsageError, match="exactly one"):
            select(rule, corpus, scores, embeddings)
        with pytest.raises(UsageError, match="exactly one"):
            select(rule, corpus, scores, embeddings, n=5, tiers=2)


class TestSelectionQuality:
    """Rule-guided selection beats random selection on its own criterion."""

    def test_top_slice_predicts_lower_loss_than_random(self, realistic_store):
        corpus, scores, embeddings = realistic_store
        rule = BUILTIN_RULES["eq4"]
        top = select(rule, corpus, scores, embeddings, n=400)

        rng = np.random.default_rng(50)
        ids = corpus.ids()
        random_ids = sorted(rng.choice(len(ids), size=400, replace=False))
        random_subset = Corpus("random-400", [corpus[int(i)] for i in random_ids])
        random_report = select(rule, random_subset, scores, embeddings,
                               n=len(random_subset))

        assert top.rule_value < random_report.rule_value
        assert top.indicators.rew >= random_report.indicators.rew

import numpy as np
import pytest

from pexplain import probes, synthetic
from pexplain.attribution import (full_mask, singleton_occlusions,
                                  toy_oracle)
from pexplain.evaluation import (AopcReport, ScoreConfig, aopc, aopc_drops,
                                 bench, bench_csv, ablate, fit_loglog_slope,
                                 grid_search_betas, ranking, topk_count,
                                 toy_instance, word_scores)


class TestScoreConfig:
    def test_validates_ranges(self):
        with pytest.raises(ValueError):
            ScoreConfig(beta1=1.5)
        with pytest.raises(ValueError):
            ScoreConfig(strategy="mask")
        with pytest.raises(ValueError):
            ScoreConfig(k_percents=(0.0,))


class TestTopK:
    def test_ceiling_rule(self):
        assert topk_count(10.0, 10) == 1
        assert topk_count(10.0, 15) == 2
        assert topk_count(100.0, 7) == 7

    def test_minimum_one_when_positive(self):
        assert topk_count(1.0, 3) == 1
        assert topk_count(0.0, 3) == 0


class TestWordScores:
    def test_zero_betas_equal_occlusion(self):
        occ = np.array([0.3, -0.1, 0.2])
        cfg = ScoreConfig(beta1=0.0, beta2=0.0)
        assert np.allclose(word_scores(occ, np.ones(3), np.ones(3), cfg), occ)

    def test_token_at_prototype_and_origin(self):
        occ = np.array([0.25])
        for b1, b2 in ((0.0, 0.0), (0.5, 0.3), (1.0, 1.0)):
            cfg = ScoreConfig(beta1=b1, beta2=b2)
            s = word_scores(occ, np.zeros(1), np.zeros(1), cfg)
            assert s[0] == pytest.approx(0.25)

    def test_scaling_identity(self):
        # scaling all distances by c equals scaling the betas by c
        rng = np.random.default_rng(0)
        occ = rng.normal(0, 0.2, 6)
        dse = rng.uniform(0, 2, 6)
        dsy = rng.uniform(0, 2, 6)
        c = 0.4
        a = word_scores(occ, c * dse, c * dsy, ScoreConfig(0.5, 0.5))
        b = word_scores(occ, dse, dsy, ScoreConfig(0.5 * c, 0.5 * c))
        assert np.allclose(a, b, atol=1e-15)

    def test_ablation_modes(self):
        occ = np.array([0.3, 0.1])
        dse = np.array([1.0, 2.0])
        dsy = np.array([0.5, 0.25])
        cfg = ScoreConfig(beta1=0.2, beta2=0.4)
        assert np.allclose(word_scores(occ, dse, dsy, cfg, "no_prob"),
                           -0.2 * dse - 0.4 * dsy)
        assert np.allclose(word_scores(occ, dse, dsy, cfg, "no_semantic"),
                           occ - 0.4 * dsy)
        assert np.allclose(word_scores(occ, dse, dsy, cfg, "no_syntax"),
                           occ - 0.2 * dse)


class TestRanking:
    def test_descending_with_index_ties(self):
        scores = np.array([0.5, 0.9, 0.5, -0.1])
        assert ranking(scores).tolist() == [1, 0, 2, 3]


class TestAopc:
    def test_top_token_removed_at_small_k(self):
        oracle = toy_oracle([0.4, -0.3])
        drops = aopc_drops(oracle, np.array([1.0, 0.0]),
                           ScoreConfig(k_percents=(10.0,)))
        assert drops[10.0] == pytest.approx(
            oracle.query(3) - oracle.query(0b10))

    def test_single_heavy_token(self):
        w = np.array([2.0, 0.0, 0.0, 0.0, 0.0])
        oracle = toy_oracle(w)
        occ = singleton_occlusions(oracle)
        cfg = ScoreConfig(k_percents=(10.0, 20.0))
        drops = aopc_drops(oracle, occ, cfg)
        expect = oracle.query(full_mask(5)) - oracle.query(full_mask(5) & ~1)
        assert drops[10.0] == pytest.approx(expect, abs=1e-12)

    def test_full_removal_under_del_equals_prob_minus_empty(self):
        oracle = toy_oracle([0.7, -0.4, 0.2])
        cfg = ScoreConfig(k_percents=(100.0,))
        drops = aopc_drops(oracle, np.array([0.3, 0.2, 0.1]), cfg)
        assert drops[100.0] == oracle.query(7) - oracle.query(0)

    def test_translation_free(self):
        oracle = toy_oracle([0.4, -0.2, 0.5, 0.1])
        scores = np.array([0.4, 0.1, 0.9, -0.5])
        cfg = ScoreConfig(k_percents=(25.0, 50.0))
        a = aopc_drops(oracle, scores, cfg)
        b = aopc_drops(oracle, scores + 17.0, cfg)
        assert a == b

    def test_report_aggregation(self):
        items = []
        for seed in range(4):
            oracle, _, _ = toy_instance(8, seed=seed)
            occ = singleton_occlusions(oracle)
            items.append((f"e{seed}", oracle, occ))
        cfg = ScoreConfig(k_percents=(10.0, 20.0))
        report = aopc(items, cfg)
        assert set(report.per_k) == {10.0, 20.0}
        assert report.average == pytest.approx(
            np.mean(list(report.per_k.values())))
        assert report.t_mean > 0
        assert [e.example_id for e in report.per_example] == \
            sorted(e.example_id for e in report.per_example)

    def test_score_ranking_beats_random_mostly(self):
        data = synthetic.sentiment_toyset(60, seed=11)
        cfg = ScoreConfig(k_percents=(10.0, 20.0))
        rng = np.random.default_rng(0)
        wins = 0
        for d in data:
            occ = singleton_occlusions(d.oracle)
            good = np.mean(list(aopc_drops(d.oracle, occ, cfg).values()))
            rand = np.mean(list(aopc_drops(
                d.oracle, rng.normal(0, 1, d.n), cfg).values()))
            wins += good > rand
        assert wins / len(data) >= 0.9


@pytest.fixture(scope="module")
def pipeline():
    data = synthetic.sentiment_toyset(40, seed=3)
    seqs = np.stack([d.seq_embedding for d in data])
    labels = [d.label for d in data]
    sem, _ = probes.fit_semantic(
        seqs, labels, 2, probes.TrainConfig(epochs=3, seed=0, d_out=16))
    parsed = [probes.ParsedExample(d.tokens, d.embeddings,
                                   d.seq_embedding, d.heads, d.label)
              for d in data]
    syn, _ = probes.fit_syntax(
        parsed, probes.TrainConfig(epochs=5, seed=0, d_out=16))
    examples = [(d.example_id, d.embeddings,
                 int(d.oracle.predicted_prob >= 0.5), d.oracle)
                for d in data]
    return examples, sem, syn


class TestAblate:
    def test_no_semantic_with_zero_beta1_matches_full(self, pipeline):
        examples, sem, syn = pipeline
        cfg = ScoreConfig(beta1=0.0, beta2=0.2, k_percents=(20.0,))
        full = ablate("full", examples, sem, syn, cfg)
        nosem = ablate("no_semantic", examples, sem, syn, cfg)
        assert full.per_k == nosem.per_k

    def test_all_modes_produce_reports(self, pipeline):
        examples, sem, syn = pipeline
        cfg = ScoreConfig(beta1=0.1, beta2=0.1, k_percents=(10.0, 20.0))
        for mode in ("full", "no_prob", "no_semantic", "no_syntax"):
            report = ablate(mode, examples, sem, syn, cfg)
            assert isinstance(report, AopcReport)
            assert np.isfinite(report.average)

    def test_unknown_mode(self, pipeline):
        examples, sem, syn = pipeline
        with pytest.raises(ValueError):
            ablate("no_everything", examples, sem, syn, ScoreConfig())


class TestGridSearch:
    def test_selects_best_over_grid(self):
        rng = np.random.default_rng(5)
        ingredients = []
        for i in range(12):
            oracle, _, _ = toy_instance(9, seed=i)
            occ = singleton_occlusions(oracle)
            ingredients.append((f"e{i}", oracle, occ,
                                rng.uniform(0, 2, 9), rng.uniform(0, 2, 9)))
        base = ScoreConfig(k_percents=(10.0, 20.0))
        b1, b2, report = grid_search_betas(ingredients, base)
        assert b1 in (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
        assert b2 in (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
        # the returned report is attained by the returned betas
        cfg = ScoreConfig(beta1=b1, beta2=b2, k_percents=(10.0, 20.0))
        items = [(e, o, word_scores(occ, dse, dsy, cfg))
                 for e, o, occ, dse, dsy in ingredients]
        assert aopc(items, cfg).average == pytest.approx(report.average)


class TestBench:
    def test_toy_instance_deterministic(self):
        o1, p1, d1 = toy_instance(16, seed=9)
        o2, p2, d2 = toy_instance(16, seed=9)
        assert np.array_equal(o1.weights, o2.weights)
        assert np.array_equal(p1, p2)
        assert o1.interactions == o2.interactions

    def test_slope_fit(self):
        ns = [32, 64, 128, 256]
        ys = [7.0 * n ** 3 for n in ns]
        assert fit_loglog_slope(ns, ys) == pytest.approx(3.0, abs=1e-9)

    def test_small_bench_report(self):
        report = bench("pe", [16, 32], repetitions=2, seed=0)
        assert report.method == "pe"
        assert len(report.rows) == 4
        assert all(r.seconds > 0 for r in report.rows)
        csv = bench_csv(report)
        assert csv.splitlines()[0] == "method,n,rep,seconds,op_count"
        assert len(csv.splitlines()) == 5

    def test_counts_identical_across_runs(self):
        a = bench("greedy", [16], repetitions=2, seed=1)
        b = bench("greedy", [16], repetitions=2, seed=1)
        assert [r.op_count for r in a.rows] == [r.op_count for r in b.rows]

    def test_size_guard(self):
        with pytest.raises(ValueError):
            bench("pe", [4], repetitions=1)
        with pytest.raises(ValueError):
            bench("quick", [16])

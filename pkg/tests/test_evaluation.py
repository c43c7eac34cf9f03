import numpy as np
import pytest

from gcr.evaluation import (
    RankingQuery,
    assign_bucket,
    bucket_label,
    candidate_scores,
    evaluate_kg,
    evaluate_rec,
    group_by_degree,
    hit_at_k,
    kg_validation_hook,
    mrr,
    ndcg_at_k,
    query_seed,
    rank_from_scores,
    rank_of_truth,
    rec_validation_hook,
)
from gcr.graph import DatasetSplit, Triple, filtered_candidates, sample_neighbors
from gcr.logic import build_clause
from gcr.model import score_clause
from gcr.training import TrainConfig, init_params

from helpers import toy_graph


def kg_setup(seed=0):
    graph = toy_graph([(0, 0, 1), (1, 0, 2), (2, 0, 3), (0, 1, 3)], 4, n_relations=2)
    split = DatasetSplit(train=list(graph.triples), valid=[Triple(1, 0, 3)],
                         test=[Triple(0, 0, 2), Triple(3, 0, 1)])
    cfg = TrainConfig(dim=8, layers=2, dropout=0.0, n_cap=3, seed=seed)
    params = init_params(graph, cfg, np.random.default_rng(seed))
    return graph, split, cfg, params


def rec_setup(seed=0):
    # users 0-2, items 3-6
    train = [(0, 0, 3), (0, 0, 4), (1, 0, 3), (1, 0, 5), (2, 0, 4), (2, 0, 5), (2, 0, 6)]
    graph = toy_graph(train, 7, directed=False, item_range=(3, 7))
    split = DatasetSplit(train=list(graph.triples),
                         valid=[Triple(0, 0, 5)],
                         test=[Triple(0, 0, 6), Triple(1, 0, 6), Triple(2, 0, 3)])
    cfg = TrainConfig(dim=8, layers=2, dropout=0.0, n_cap=3, seed=seed)
    params = init_params(graph, cfg, np.random.default_rng(seed))
    return graph, split, cfg, params


class TestMetricPrimitives:
    def test_mrr_single(self):
        assert mrr([1]) == 1.0

    def test_mrr_frozen_value(self):
        assert mrr([1, 2, 4]) == pytest.approx(0.5833333, abs=1e-6)

    def test_mrr_in_unit_interval(self, rng):
        ranks = [int(r) for r in rng.integers(1, 100, size=50)]
        assert 0.0 < mrr(ranks) <= 1.0

    def test_hit_frozen_value(self):
        assert hit_at_k([1, 2, 4], 3) == pytest.approx(0.6666667, abs=1e-6)

    def test_hit_k_covers_all(self):
        assert hit_at_k([1, 2, 4], 4) == 1.0

    def test_hit_k1_none(self):
        assert hit_at_k([2, 3], 1) == 0.0

    def test_hit_monotone_in_k(self, rng):
        ranks = [int(r) for r in rng.integers(1, 20, size=30)]
        values = [hit_at_k(ranks, k) for k in (1, 3, 5, 10)]
        assert values == sorted(values)

    def test_ndcg_ideal(self):
        assert ndcg_at_k(1, 5) == 1.0

    def test_ndcg_frozen_value(self):
        assert ndcg_at_k(2, 5) == pytest.approx(0.6309298, abs=1e-6)

    def test_ndcg_outside_cutoff(self):
        assert ndcg_at_k(6, 5) == 0.0

    def test_order_independence(self, rng):
        ranks = [int(r) for r in rng.integers(1, 30, size=20)]
        shuffled = list(ranks)
        rng.shuffle(shuffled)
        assert mrr(ranks) == pytest.approx(mrr(shuffled))
        assert hit_at_k(ranks, 5) == pytest.approx(hit_at_k(shuffled, 5))


class TestRankFromScores:
    def test_strictly_best_is_rank_one(self):
        assert rank_from_scores([0.9, 0.1, 0.5], truth_index=0) == 1

    def test_all_equal_mean_tie(self):
        assert rank_from_scores([0.5] * 5, truth_index=2) == 3

    def test_two_better(self):
        assert rank_from_scores([0.2, 0.9, 0.8], truth_index=0) == 3

    def test_distinct_scores_count_better(self, rng):
        scores = list(rng.permutation(np.linspace(-1, 1, 11)))
        for i, s in enumerate(scores):
            expected = 1 + sum(1 for x in scores if x > s)
            assert rank_from_scores(scores, i) == expected


class TestRankOfTruth:
    def test_matches_naive_clause_scoring(self):
        # independent oracle: rebuild each candidate clause from scratch and
        # rank by counting, bypassing the shared-prefix fold
        graph, split, cfg, params = kg_setup()
        for target in split.test:
            for slot in ("head", "tail"):
                cands = filtered_candidates(graph, split.all_known, target, slot)
                seed = query_seed(cfg.seed, target, slot)
                query = RankingQuery(target, slot, cands, seed)

                nbr_rng = np.random.default_rng(query_seed(cfg.seed, target, slot))
                neighbors = sample_neighbors(graph, target, cfg.n_cap, nbr_rng)
                naive = []
                for e in cands:
                    cand = Triple(e, target.relation, target.tail) if slot == "head" \
                        else Triple(target.head, target.relation, e)
                    clause = build_clause(cand, neighbors)
                    naive.append(score_clause(params, clause).item())
                truth = target.head if slot == "head" else target.tail
                expected = rank_from_scores(naive, cands.index(truth))
                assert rank_of_truth(params, graph, query, cfg.n_cap) == expected

    def test_no_candidates_rejected(self):
        graph, split, cfg, params = kg_setup()
        query = RankingQuery(split.test[0], "tail", [], 0)
        with pytest.raises(ValueError):
            rank_of_truth(params, graph, query, cfg.n_cap)


class TestEvaluateKg:
    def test_query_count(self):
        graph, split, cfg, params = kg_setup()
        table = evaluate_kg(params, graph, split, cfg)
        assert table.n_queries == 2 * len(split.test)

    def test_hit_monotone(self):
        graph, split, cfg, params = kg_setup()
        table = evaluate_kg(params, graph, split, cfg)
        assert table.hits[1] <= table.hits[3] <= table.hits[5] <= table.hits[10]

    def test_matches_hand_ranking(self):
        graph, split, cfg, params = kg_setup()
        ranks = []
        for target in split.test:
            for slot in ("head", "tail"):
                cands = filtered_candidates(graph, split.all_known, target, slot)
                query = RankingQuery(target, slot, cands, query_seed(cfg.seed, target, slot))
                scores = candidate_scores(params, graph, query, cfg.n_cap)
                truth = target.head if slot == "head" else target.tail
                ranks.append(rank_from_scores(scores, cands.index(truth)))
        table = evaluate_kg(params, graph, split, cfg)
        assert table.mrr == pytest.approx(mrr(ranks), abs=1e-9)
        for k in (1, 3, 5, 10):
            assert table.hits[k] == pytest.approx(hit_at_k(ranks, k), abs=1e-9)

    def test_does_not_mutate_params(self):
        graph, split, cfg, params = kg_setup()
        before = params.state_dict()
        evaluate_kg(params, graph, split, cfg)
        after = params.state_dict()
        for name in before:
            assert np.array_equal(before[name], after[name])

    def test_deterministic(self):
        graph, split, cfg, params = kg_setup()
        a = evaluate_kg(params, graph, split, cfg).to_json()
        b = evaluate_kg(params, graph, split, cfg).to_json()
        assert a == b


class TestEvaluateRec:
    def test_deterministic_table(self):
        graph, split, cfg, params = rec_setup()
        a = evaluate_rec(params, graph, split, cfg, n_negatives=2).to_json()
        b = evaluate_rec(params, graph, split, cfg, n_negatives=2).to_json()
        assert a == b

    def test_zero_negatives_degenerate(self):
        graph, split, cfg, params = rec_setup()
        table = evaluate_rec(params, graph, split, cfg, n_negatives=0)
        assert table.mrr == 1.0
        assert all(v == 1.0 for v in table.hits.values())
        assert all(v == 1.0 for v in table.ndcg.values())
        assert table.flags

    def test_saturated_user_skipped(self):
        # user 2 already interacts with every item, so no negatives exist
        train = [(0, 0, 3), (0, 0, 4), (2, 0, 3), (2, 0, 4), (2, 0, 5), (2, 0, 6)]
        graph = toy_graph(train, 7, directed=False, item_range=(3, 7))
        split = DatasetSplit(train=list(graph.triples), valid=[],
                             test=[Triple(0, 0, 5), Triple(2, 0, 6)])
        cfg = TrainConfig(dim=8, layers=2, dropout=0.0, n_cap=3, seed=0)
        params = init_params(graph, cfg, np.random.default_rng(0))
        table = evaluate_rec(params, graph, split, cfg, n_negatives=5)
        assert table.skipped == 1
        assert table.n_queries == 1

    def test_requires_bipartite(self):
        graph, split, cfg, params = kg_setup()
        with pytest.raises(ValueError):
            evaluate_rec(params, graph, split, cfg)

    def test_per_user_then_across_users(self):
        # user 0 contributes two queries, user 1 one; spare items 7-8 keep
        # every query rankable
        train = [(0, 0, 3), (0, 0, 4), (1, 0, 3), (1, 0, 5), (2, 0, 4)]
        graph = toy_graph(train, 9, directed=False, item_range=(3, 9))
        split = DatasetSplit(train=list(graph.triples), valid=[],
                             test=[Triple(0, 0, 5), Triple(0, 0, 6), Triple(1, 0, 6)])
        cfg = TrainConfig(dim=8, layers=2, dropout=0.0, n_cap=3, seed=0)
        params = init_params(graph, cfg, np.random.default_rng(0))
        table = evaluate_rec(params, graph, split, cfg, n_negatives=2)
        assert table.n_queries == 3
        assert table.skipped == 0


class TestGroupByDegree:
    def test_bucket_assignment(self):
        edges = (1, 5, 10, 30)
        assert assign_bucket(7, edges) == 1
        assert assign_bucket(1, edges) == 0
        assert assign_bucket(30, edges) == 3
        assert bucket_label(edges, 1) == "[5,10)"
        assert bucket_label(edges, 3) == "[30,inf)"

    def test_populations_sum_to_users(self):
        graph, split, cfg, params = rec_setup()
        table = group_by_degree(params, graph, split, cfg, n_negatives=2)
        total_users = len({t.head for t in split.test})
        assert sum(table.group_counts.values()) == total_users

    def test_empty_bucket_reported_none(self):
        graph, split, cfg, params = rec_setup()
        table = group_by_degree(params, graph, split, cfg, n_negatives=2)
        assert table.group_counts["[30,inf)"] == 0
        assert table.groups["[30,inf)"] is None

    def test_default_buckets(self):
        graph, split, cfg, params = rec_setup()
        table = group_by_degree(params, graph, split, cfg, n_negatives=2)
        assert list(table.groups) == ["[1,5)", "[5,10)", "[10,30)", "[30,inf)"]


class TestValidationHooks:
    def test_kg_hook_returns_valid_mrr(self):
        graph, split, cfg, params = kg_setup()
        hook = kg_validation_hook(graph, split, cfg)
        value = hook(params)
        assert 0.0 < value <= 1.0

    def test_rec_hook_returns_ndcg10(self):
        graph, split, cfg, params = rec_setup()
        hook = rec_validation_hook(graph, split, cfg, n_negatives=2)
        value = hook(params)
        assert 0.0 <= value <= 1.0


def test_metrics_table_text_render():
    graph, split, cfg, params = rec_setup()
    table = group_by_degree(params, graph, split, cfg, n_negatives=2)
    text = table.to_text()
    assert "mrr" in text and "hit@10" in text and "[1,5)" in text

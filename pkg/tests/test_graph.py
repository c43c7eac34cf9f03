import numpy as np
import pytest

from gcr.errors import ParseError, SaturationError
from gcr.graph import (
    DatasetSplit,
    Triple,
    canonical_orient,
    filtered_candidates,
    load_ratings_csv,
    load_tsv,
    sample_negative,
    sample_neighbors,
)

from helpers import toy_graph, write_kg


class TestLoadTsv:
    def test_small_counts(self, tmp_path):
        d = write_kg(tmp_path, [("a", "likes", "b"), ("b", "likes", "a"), ("a", "likes", "b")])
        graph, split, report = load_tsv(d)
        assert report.n_entities == 2
        assert report.n_relations == 1
        assert len(graph.triples) <= 3
        assert report.n_train == 3

    def test_malformed_line_numbered(self, tmp_path):
        (tmp_path / "train.txt").write_text("a\tb\n", encoding="utf-8")
        (tmp_path / "valid.txt").write_text("", encoding="utf-8")
        (tmp_path / "test.txt").write_text("", encoding="utf-8")
        with pytest.raises(ParseError) as exc:
            load_tsv(str(tmp_path))
        assert exc.value.line == 1

    def test_missing_file(self, tmp_path):
        (tmp_path / "train.txt").write_text("a\tr\tb\n", encoding="utf-8")
        with pytest.raises(FileNotFoundError):
            load_tsv(str(tmp_path))

    def test_unseen_entities_flagged(self, tmp_path):
        d = write_kg(tmp_path, [("a", "r", "b")], valid=[("a", "r", "c")],
                     test=[("d", "r2", "b")])
        graph, split, report = load_tsv(d)
        assert report.unseen_entities == 2
        assert report.unseen_relations == 1
        assert graph.n_entities == 4
        # unseen ids exist but contribute no train adjacency
        cid = graph.entity_names.index("c")
        assert graph.adjacency[cid] == []

    def test_first_seen_order_deterministic(self, tmp_path):
        d = write_kg(tmp_path, [("z", "r", "a"), ("a", "r", "m")])
        g1, _, _ = load_tsv(d)
        g2, _, _ = load_tsv(d)
        assert g1.entity_names == g2.entity_names == ["z", "a", "m"]
        assert g1.triples == g2.triples

    def test_all_known_is_union(self, tmp_path):
        d = write_kg(tmp_path, [("a", "r", "b")], valid=[("a", "r", "c")], test=[("c", "r", "b")])
        _, split, _ = load_tsv(d)
        assert split.all_known == set(split.train) | set(split.valid) | set(split.test)


class TestLoadRatingsCsv:
    def test_leave_last_out(self, tmp_path):
        p = tmp_path / "ratings.csv"
        p.write_text("u1,i1,5,1\nu1,i2,4,2\nu1,i3,3,3\n", encoding="utf-8")
        graph, split, report = load_ratings_csv(str(p))
        names = graph.entity_names
        assert [names[t.tail] for t in split.test] == ["i3"]
        assert [names[t.tail] for t in split.valid] == ["i2"]
        assert [names[t.tail] for t in split.train] == ["i1"]

    def test_two_interactions_all_train(self, tmp_path):
        p = tmp_path / "ratings.csv"
        p.write_text("u1,i1,5,1\nu1,i2,4,2\n", encoding="utf-8")
        _, split, _ = load_ratings_csv(str(p))
        assert len(split.train) == 2
        assert not split.valid and not split.test

    def test_header_autodetected(self, tmp_path):
        p = tmp_path / "ratings.csv"
        p.write_text("user,item,rating,timestamp\nu1,i1,5,10\n", encoding="utf-8")
        _, _, report = load_ratings_csv(str(p))
        assert report.n_interactions == 1

    def test_malformed_row(self, tmp_path):
        p = tmp_path / "ratings.csv"
        p.write_text("u1,i1,5\n", encoding="utf-8")
        with pytest.raises(ParseError):
            load_ratings_csv(str(p))

    def test_empty_file(self, tmp_path):
        p = tmp_path / "ratings.csv"
        p.write_text("", encoding="utf-8")
        with pytest.raises(ParseError):
            load_ratings_csv(str(p))

    def test_disjoint_id_ranges(self, tmp_path):
        p = tmp_path / "ratings.csv"
        p.write_text("u1,i1,5,1\nu2,i1,4,2\nu2,i2,4,3\n", encoding="utf-8")
        graph, _, report = load_ratings_csv(str(p))
        assert report.n_users == 2 and report.n_items == 2
        assert graph.item_range == (2, 4)
        for t in graph.triples:
            assert t.head < 2 <= t.tail

    def test_duplicate_pair_collapsed(self, tmp_path):
        p = tmp_path / "ratings.csv"
        p.write_text("u1,i1,5,1\nu1,i1,4,9\nu1,i2,4,2\nu1,i3,3,3\n", encoding="utf-8")
        graph, split, report = load_ratings_csv(str(p))
        assert report.n_interactions == 4
        # the duplicated i1 keeps its latest timestamp, so it lands in test
        assert [graph.entity_names[t.tail] for t in split.test] == ["i1"]
        assert set(split.train) & set(split.test) == set()


class TestCanonicalOrient:
    def test_swaps_when_needed(self):
        assert canonical_orient(Triple(7, 0, 3), directed=False) == Triple(3, 0, 7)

    def test_already_canonical(self):
        assert canonical_orient(Triple(3, 0, 7), directed=False) == Triple(3, 0, 7)

    def test_directed_unchanged(self):
        assert canonical_orient(Triple(7, 0, 3), directed=True) == Triple(7, 0, 3)

    def test_idempotent_and_swap_invariant(self, rng):
        for _ in range(50):
            h, t = int(rng.integers(0, 20)), int(rng.integers(0, 20))
            a = canonical_orient(Triple(h, 1, t), directed=False)
            assert canonical_orient(a, directed=False) == a
            assert canonical_orient(Triple(t, 1, h), directed=False) == a


class TestSampleNeighbors:
    def test_underfull_returns_all(self, rng):
        g = toy_graph([(0, 0, 1), (0, 0, 2), (0, 0, 3)], 5)
        target = Triple(0, 0, 4)
        got = sample_neighbors(g, target, n_cap=5, rng=rng)
        assert sorted(got) == sorted(g.triples)

    def test_target_excluded(self, rng):
        g = toy_graph([(0, 0, 1), (0, 0, 2)], 3)
        target = Triple(0, 0, 1)
        for _ in range(20):
            assert target not in sample_neighbors(g, target, 5, rng)

    def test_size_cap_and_endpoint_sharing(self, rng):
        triples = [(0, 0, i) for i in range(1, 8)] + [(9, 0, i) for i in range(1, 8)]
        g = toy_graph(triples, 10)
        target = Triple(0, 0, 9)
        for _ in range(20):
            got = sample_neighbors(g, target, 3, rng)
            assert len(got) <= 6
            for t in got:
                assert {t.head, t.tail} & {0, 9}

    def test_uniform_inclusion(self):
        g = toy_graph([(0, 0, i) for i in range(1, 11)], 12)
        target = Triple(0, 0, 11)
        rng = np.random.default_rng(0)
        counts = {t: 0 for t in g.triples}
        n_draws = 10_000
        for _ in range(n_draws):
            for t in sample_neighbors(g, target, 5, rng):
                counts[t] += 1
        for t, c in counts.items():
            assert abs(c / n_draws - 0.5) < 0.03

    def test_cross_side_dedup(self, rng):
        g = toy_graph([(0, 0, 1)], 2, directed=False)
        target = Triple(0, 0, 1)
        # lone edge is the target itself: nothing to sample
        assert sample_neighbors(g, target, 5, rng) == []
        g2 = toy_graph([(0, 0, 1), (0, 1, 1)], 2, directed=False, n_relations=2)
        got = sample_neighbors(g2, Triple(0, 0, 1), 5, rng)
        assert got == [Triple(0, 1, 1)]


class TestSampleNegative:
    def test_never_known(self, rng):
        triples = [(0, 0, 1), (1, 0, 2), (2, 0, 3)]
        g = toy_graph(triples, 6)
        split = DatasetSplit(train=g.triples, valid=[], test=[])
        for _ in range(100):
            neg = sample_negative(g, split.all_known, Triple(0, 0, 1), "tail", rng)
            assert neg not in split.all_known

    def test_tail_mode_keeps_head_and_relation(self, rng):
        g = toy_graph([(0, 0, 1)], 5)
        split = DatasetSplit(train=g.triples, valid=[], test=[])
        neg = sample_negative(g, split.all_known, Triple(0, 0, 1), "tail", rng)
        assert neg.head == 0 and neg.relation == 0 and neg.tail != 1

    def test_saturation(self, rng):
        g = toy_graph([(0, 0, 1)], 2)
        split = DatasetSplit(train=g.triples, valid=[], test=[])
        with pytest.raises(SaturationError):
            sample_negative(g, split.all_known, Triple(0, 0, 1), "tail", rng)

    def test_bipartite_tail_samples_items_only(self, rng):
        g = toy_graph([(0, 0, 2), (1, 0, 3)], 5, directed=False, item_range=(2, 5))
        split = DatasetSplit(train=g.triples, valid=[], test=[])
        for _ in range(50):
            neg = sample_negative(g, split.all_known, Triple(0, 0, 2), "tail", rng)
            assert 2 <= neg.tail < 5


class TestFilteredCandidates:
    def test_truth_exactly_once(self):
        g = toy_graph([(0, 0, 1), (0, 0, 2)], 4)
        known = frozenset(g.triples)
        cands = filtered_candidates(g, known, Triple(0, 0, 1), "tail")
        assert cands.count(1) == 1

    def test_no_known_substitution(self):
        g = toy_graph([(0, 0, 1), (0, 0, 2)], 4)
        known = frozenset(g.triples)
        cands = filtered_candidates(g, known, Triple(0, 0, 1), "tail")
        for e in cands:
            if e != 1:
                assert Triple(0, 0, e) not in known

    def test_toy_count(self):
        # 4 entities, exactly one non-true substitution is known
        g = toy_graph([(0, 0, 1), (0, 0, 2)], 4)
        known = frozenset(g.triples)
        cands = filtered_candidates(g, known, Triple(0, 0, 1), "tail")
        assert len(cands) == 3

    def test_head_slot(self):
        g = toy_graph([(0, 0, 2), (1, 0, 2)], 4)
        known = frozenset(g.triples)
        cands = filtered_candidates(g, known, Triple(0, 0, 2), "head")
        assert 0 in cands and 1 not in cands

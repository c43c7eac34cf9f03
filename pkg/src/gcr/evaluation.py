"""Filtered ranking evaluation: MRR/Hit@K for link prediction, NDCG@K/Hit@K
for recommendation, and the per-user-degree breakdown.

Every query draws its neighborhood with a seed derived from (global seed,
query triple, slot), so metrics are reproducible run to run. Candidate
scoring shares the folded neighbor prefix across candidates, which is exact
because eval-mode clause order puts the target term last.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import rowwise_cosine, stack, tile_rows
from .graph import (
    DatasetSplit,
    Graph,
    Triple,
    canonical_orient,
    filtered_candidates,
    sample_neighbors,
)
from .model import (
    ModelParams,
    encode_predicates,
    encode_relation_batch,
    not_module,
    or_fold,
    or_module,
)
from .training import TrainConfig

HIT_KS = (1, 3, 5, 10)
NDCG_KS = (5, 10)


@dataclass
class RankingQuery:
    target: Triple
    slot: str  # which endpoint the candidates replace
    candidates: list[int]
    seed: "int | np.random.SeedSequence"


@dataclass
class MetricsTable:
    mrr: float
    hits: dict[int, float]
    ndcg: dict[int, float]
    n_queries: int
    skipped: int = 0
    flags: list[str] = field(default_factory=list)
    group_counts: dict[str, int] | None = None
    groups: dict[str, "MetricsTable | None"] | None = None

    def to_dict(self) -> dict:
        out = {
            "mrr": self.mrr,
            "hits": {f"hit@{k}": v for k, v in self.hits.items()},
            "ndcg": {f"ndcg@{k}": v for k, v in self.ndcg.items()},
            "n_queries": self.n_queries,
            "skipped": self.skipped,
            "flags": self.flags,
        }
        if self.groups is not None:
            out["group_counts"] = self.group_counts
            out["groups"] = {name: (g.to_dict() if g is not None else None)
                             for name, g in self.groups.items()}
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_text(self) -> str:
        rows = [("metric", "value")]
        rows.append(("mrr", f"{self.mrr:.6f}"))
        for k in sorted(self.hits):
            rows.append((f"hit@{k}", f"{self.hits[k]:.6f}"))
        for k in sorted(self.ndcg):
            rows.append((f"ndcg@{k}", f"{self.ndcg[k]:.6f}"))
        rows.append(("queries", str(self.n_queries)))
        if self.skipped:
            rows.append(("skipped", str(self.skipped)))
        width = max(len(r[0]) for r in rows)
        lines = [f"{name.ljust(width)}  {value}" for name, value in rows]
        if self.groups is not None:
            for name, sub in self.groups.items():
                count = self.group_counts.get(name, 0) if self.group_counts else 0
                lines.append(f"-- group {name} (users: {count})")
                if sub is not None:
                    lines.extend("   " + l for l in sub.to_text().splitlines())
        return "\n".join(lines)


# -- metric primitives -------------------------------------------------------

def mrr(ranks: list[int]) -> float:
    return float(np.mean([1.0 / r for r in ranks]))


def hit_at_k(ranks: list[int], k: int) -> float:
    return float(np.mean([1.0 if r <= k else 0.0 for r in ranks]))


def ndcg_at_k(rank: int, k: int) -> float:
    """Single-relevant-item NDCG: 1/log2(rank+1) inside the cutoff, else 0."""
    return 1.0 / math.log2(rank + 1) if rank <= k else 0.0


def rank_from_scores(scores: list[float], truth_index: int) -> int:
    """1 + #strictly-better, with ties resolved to the ceil of the tie
    group's mean rank."""
    s_true = scores[truth_index]
    better = sum(1 for s in scores if s > s_true)
    ties = sum(1 for s in scores if s == s_true)
    return math.ceil(better + (ties + 1) / 2.0)


# -- clause scoring per query -------------------------------------------------

def query_seed(global_seed: int, target: Triple, slot: str,
               purpose: int = 0) -> np.random.SeedSequence:
    slot_code = 0 if slot == "head" else 1
    return np.random.SeedSequence((global_seed, target.head, target.relation,
                                   target.tail, slot_code, purpose))


def candidate_scores(params: ModelParams, graph: Graph, query: RankingQuery,
                     n_cap: int) -> list[float]:
    """Eval-mode clause score for every candidate substitution.

    Neighbors are sampled once from the uncorrupted target's endpoints and
    shared by all candidates, mirroring the fixed-neighborhood training
    rule. Because eval-mode fold order puts the target term last, the
    folded neighbor prefix is computed once and each candidate costs one
    batched OR row plus a cosine.
    """
    rng = np.random.default_rng(query.seed)
    neighbors = sample_neighbors(graph, query.target, n_cap, rng)
    prefix = None
    if neighbors:
        negated_rows = not_module(params, stack(encode_predicates(params, neighbors)))
        prefix = or_fold(params, [negated_rows.row(i) for i in range(len(neighbors))])

    cand_triples = []
    for e in query.candidates:
        cand = Triple(e, query.target.relation, query.target.tail) if query.slot == "head" \
            else Triple(query.target.head, query.target.relation, e)
        cand_triples.append(canonical_orient(cand, params.directed))
    for t in cand_triples:
        if not (0 <= t.head < params.n_entities and 0 <= t.tail < params.n_entities):
            raise IndexError(f"entity id out of range in {t}")
    cand_rows = encode_relation_batch(params, query.target.relation, cand_triples)
    if prefix is not None:
        expr_rows = or_module(params, tile_rows(prefix, len(cand_triples)), cand_rows)
    else:
        expr_rows = cand_rows
    anchor_rows = tile_rows(params.anchor, len(cand_triples))
    return [float(s) for s in rowwise_cosine(expr_rows, anchor_rows).data]


def rank_of_truth(params: ModelParams, graph: Graph, query: RankingQuery,
                  n_cap: int) -> int:
    if not query.candidates:
        raise ValueError("query has no candidates")
    truth = query.target.head if query.slot == "head" else query.target.tail
    truth_index = query.candidates.index(truth)
    scores = candidate_scores(params, graph, query, n_cap)
    return rank_from_scores(scores, truth_index)


def _table_from_ranks(ranks: list[int], skipped: int = 0,
                      flags: list[str] | None = None) -> MetricsTable:
    if not ranks:
        return MetricsTable(mrr=0.0, hits={k: 0.0 for k in HIT_KS},
                            ndcg={k: 0.0 for k in NDCG_KS}, n_queries=0,
                            skipped=skipped, flags=flags or [])
    return MetricsTable(
        mrr=mrr(ranks),
        hits={k: hit_at_k(ranks, k) for k in HIT_KS},
        ndcg={k: float(np.mean([ndcg_at_k(r, k) for r in ranks])) for k in NDCG_KS},
        n_queries=len(ranks),
        skipped=skipped,
        flags=flags or [],
    )


# -- task-level evaluation ----------------------------------------------------

def evaluate_kg(params: ModelParams, graph: Graph, split: DatasetSplit,
                cfg: TrainConfig, triples: list[Triple] | None = None) -> MetricsTable:
    """Filtered head- and tail-replacement ranking over the test triples."""
    triples = split.test if triples is None else triples
    ranks = []
    for t in triples:
        for slot in ("head", "tail"):
            cands = filtered_candidates(graph, split.all_known, t, slot)
            query = RankingQuery(target=t, slot=slot, candidates=cands,
                                 seed=query_seed(cfg.seed, t, slot))
            ranks.append(rank_of_truth(params, graph, query, cfg.n_cap))
    return _table_from_ranks(ranks)


def _rec_negative_items(graph: Graph, known: frozenset[Triple], user: int,
                        relation: int, n_negatives: int,
                        rng: np.random.Generator) -> list[int]:
    lo, hi = graph.item_range
    eligible = [i for i in range(lo, hi)
                if Triple(user, relation, i) not in known]
    if not eligible:
        return []
    if len(eligible) <= n_negatives:
        return eligible
    idx = rng.choice(len(eligible), size=n_negatives, replace=False)
    return [eligible[i] for i in idx]


def evaluate_rec(params: ModelParams, graph: Graph, split: DatasetSplit,
                 cfg: TrainConfig, n_negatives: int = 100,
                 triples: list[Triple] | None = None) -> MetricsTable:
    """Rank each held-out item against sampled never-interacted items.

    Per-query metrics are averaged within each user first, then across
    users. Queries with no available negatives are skipped and counted.
    """
    if graph.item_range is None:
        raise ValueError("evaluate_rec needs a bipartite graph")
    triples = split.test if triples is None else triples
    per_user: dict[int, list[int]] = {}
    skipped = 0
    flags = []
    if n_negatives == 0:
        flags.append("degenerate: 0 negatives, every metric is 1.0 by construction")
    for t in triples:
        user, item = t.head, t.tail
        rng = np.random.default_rng(query_seed(cfg.seed, t, "tail", purpose=1))
        negatives = _rec_negative_items(graph, split.all_known, user, t.relation,
                                        n_negatives, rng)
        if n_negatives > 0 and not negatives:
            skipped += 1
            continue
        candidates = [item] + negatives
        query = RankingQuery(target=t, slot="tail", candidates=candidates,
                             seed=query_seed(cfg.seed, t, "tail"))
        rank = rank_of_truth(params, graph, query, cfg.n_cap)
        per_user.setdefault(user, []).append(rank)

    if not per_user:
        return _table_from_ranks([], skipped=skipped, flags=flags)
    user_tables = [_table_from_ranks(ranks) for ranks in per_user.values()]
    return MetricsTable(
        mrr=float(np.mean([u.mrr for u in user_tables])),
        hits={k: float(np.mean([u.hits[k] for u in user_tables])) for k in HIT_KS},
        ndcg={k: float(np.mean([u.ndcg[k] for u in user_tables])) for k in NDCG_KS},
        n_queries=sum(u.n_queries for u in user_tables),
        skipped=skipped,
        flags=flags,
    )


DEFAULT_DEGREE_BUCKETS = (1, 5, 10, 30)


def bucket_label(edges: tuple, index: int) -> str:
    lo = edges[index]
    hi = edges[index + 1] if index + 1 < len(edges) else None
    return f"[{lo},{hi})" if hi is not None else f"[{lo},inf)"


def assign_bucket(degree: int, edges: tuple) -> int:
    for i in range(len(edges) - 1, -1, -1):
        if degree >= edges[i]:
            return i
    return 0


def group_by_degree(params: ModelParams, graph: Graph, split: DatasetSplit,
                    cfg: TrainConfig, n_negatives: int = 100,
                    bucket_edges: tuple = DEFAULT_DEGREE_BUCKETS) -> MetricsTable:
    """Recommendation metrics split by the user's train-interaction count."""
    buckets: dict[int, list[Triple]] = {i: [] for i in range(len(bucket_edges))}
    bucket_users: dict[int, set[int]] = {i: set() for i in range(len(bucket_edges))}
    for t in split.test:
        b = assign_bucket(graph.degree(t.head), bucket_edges)
        buckets[b].append(t)
        bucket_users[b].add(t.head)

    overall = evaluate_rec(params, graph, split, cfg, n_negatives=n_negatives)
    overall.group_counts = {}
    overall.groups = {}
    for i in range(len(bucket_edges)):
        label = bucket_label(bucket_edges, i)
        overall.group_counts[label] = len(bucket_users[i])
        if buckets[i]:
            overall.groups[label] = evaluate_rec(
                params, graph, split, cfg, n_negatives=n_negatives, triples=buckets[i])
        else:
            overall.groups[label] = None
    return overall


# -- validation hooks for the trainer ----------------------------------------

def kg_validation_hook(graph: Graph, split: DatasetSplit, cfg: TrainConfig):
    def hook(params: ModelParams) -> float:
        return evaluate_kg(params, graph, split, cfg, triples=split.valid).mrr
    return hook


def rec_validation_hook(graph: Graph, split: DatasetSplit, cfg: TrainConfig,
                        n_negatives: int = 100):
    def hook(params: ModelParams) -> float:
        table = evaluate_rec(params, graph, split, cfg, n_negatives=n_negatives,
                             triples=split.valid)
        return table.ndcg[10]
    return hook

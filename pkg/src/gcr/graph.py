"""Multi-relational and bipartite graph loading, indexing, and sampling.

Graphs are immutable after load. Every sampling operation takes an explicit
numpy Generator, so deterministic reruns and thread-local sampling are the
caller's choice.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ParseError, SaturationError


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


def canonical_orient(t: Triple, directed: bool) -> Triple:
    """Undirected edges are stored with the smaller entity id as head."""
    if directed or t.head <= t.tail:
        return t
    return Triple(t.tail, t.relation, t.head)


@dataclass
class Graph:
    n_entities: int
    n_relations: int
    triples: list[Triple]
    adjacency: list[list[Triple]]
    directed: bool
    entity_names: list[str]
    relation_names: list[str]
    # [lo, hi) entity-id range holding items, set for bipartite graphs
    item_range: tuple[int, int] | None = None
    _triple_set: frozenset[Triple] = field(default=None, repr=False)

    def __post_init__(self):
        if self._triple_set is None:
            self._triple_set = frozenset(self.triples)

    def has_triple(self, t: Triple) -> bool:
        return canonical_orient(t, self.directed) in self._triple_set

    def incident(self, entity: int) -> list[Triple]:
        return self.adjacency[entity]

    def degree(self, entity: int) -> int:
        return len(self.adjacency[entity])


@dataclass
class DatasetSplit:
    train: list[Triple]
    valid: list[Triple]
    test: list[Triple]
    all_known: frozenset[Triple] = None

    def __post_init__(self):
        if self.all_known is None:
            self.all_known = frozenset(self.train) | frozenset(self.valid) | frozenset(self.test)


@dataclass
class LoadReport:
    n_entities: int
    n_relations: int
    n_train: int
    n_valid: int
    n_test: int
    unseen_entities: int = 0   # entities first seen outside the train split
    unseen_relations: int = 0
    n_users: int | None = None
    n_items: int | None = None
    n_interactions: int | None = None


def _build_adjacency(n_entities: int, triples: list[Triple]) -> list[list[Triple]]:
    adj: list[list[Triple]] = [[] for _ in range(n_entities)]
    for t in triples:
        adj[t.head].append(t)
        if t.tail != t.head:
            adj[t.tail].append(t)
    return adj


def _parse_tsv_file(path: str, entity_ids: dict, relation_ids: dict) -> list[Triple]:
    triples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(f"expected 3 tab-separated fields, got {len(parts)}",
                                 path=path, line=lineno)
            h, r, t = parts
            hid = entity_ids.setdefault(h, len(entity_ids))
            rid = relation_ids.setdefault(r, len(relation_ids))
            tid = entity_ids.setdefault(t, len(entity_ids))
            triples.append(Triple(hid, rid, tid))
    return triples


def load_tsv(directory: str) -> tuple[Graph, DatasetSplit, LoadReport]:
    """Load train.txt/valid.txt/test.txt triple files from a directory.

    Entity and relation names are interned to dense integer ids in
    first-seen order over train, then valid, then test. The returned graph
    is indexed over the train triples only; valid/test entities unseen in
    train keep fresh ids and are counted in the report.
    """
    paths = {split: os.path.join(directory, f"{split}.txt")
             for split in ("train", "valid", "test")}
    for split, path in paths.items():
        if not os.path.isfile(path):
            raise FileNotFoundError(f"missing {split} file: {path}")

    entity_ids: dict[str, int] = {}
    relation_ids: dict[str, int] = {}
    train = _parse_tsv_file(paths["train"], entity_ids, relation_ids)
    n_train_entities, n_train_relations = len(entity_ids), len(relation_ids)
    valid = _parse_tsv_file(paths["valid"], entity_ids, relation_ids)
    test = _parse_tsv_file(paths["test"], entity_ids, relation_ids)

    train_unique = sorted(set(train))
    graph = Graph(
        n_entities=len(entity_ids),
        n_relations=len(relation_ids),
        triples=train_unique,
        adjacency=_build_adjacency(len(entity_ids), train_unique),
        directed=True,
        entity_names=list(entity_ids),
        relation_names=list(relation_ids),
    )
    split = DatasetSplit(train=train, valid=valid, test=test)
    report = LoadReport(
        n_entities=graph.n_entities,
        n_relations=graph.n_relations,
        n_train=len(train),
        n_valid=len(valid),
        n_test=len(test),
        unseen_entities=len(entity_ids) - n_train_entities,
        unseen_relations=len(relation_ids) - n_train_relations,
    )
    return graph, split, report


def _looks_like_header(fields: list[str]) -> bool:
    if len(fields) < 4:
        return True
    try:
        float(fields[2])
        float(fields[3])
        return False
    except ValueError:
        return True


def load_ratings_csv(path: str, min_interactions: int = 3) -> tuple[Graph, DatasetSplit, LoadReport]:
    """Load "user,item,rating,timestamp" rows as an undirected bipartite graph.

    Every row counts as a positive interaction. Users and items occupy
    disjoint id ranges (users first). The split is per-user leave-last-out
    by timestamp: latest interaction to test, second latest to validation,
    the rest to train; users with fewer than `min_interactions` keep
    everything in train.
    """
    rows = []  # (user, item, timestamp, row_index)
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first.strip():
            raise ParseError("empty ratings file", path=path, line=1)
        start = 1
        if _looks_like_header(first.rstrip("\n").split(",")):
            start = 2
        else:
            fh.seek(0)
        for lineno, line in enumerate(fh, start=start):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ParseError(f"expected 4 comma-separated fields, got {len(parts)}",
                                 path=path, line=lineno)
            user, item, rating, ts = parts
            try:
                float(rating)
                ts_val = float(ts)
            except ValueError as exc:
                raise ParseError(f"bad numeric field: {exc}", path=path, line=lineno) from None
            rows.append((user, item, ts_val, lineno))
    if not rows:
        raise ParseError("no interaction rows", path=path, line=1)

    user_ids: dict[str, int] = {}
    item_keys: dict[str, int] = {}
    for user, item, _, _ in rows:
        user_ids.setdefault(user, len(user_ids))
        item_keys.setdefault(item, len(item_keys))
    n_users, n_items = len(user_ids), len(item_keys)
    item_ids = {name: n_users + idx for name, idx in item_keys.items()}

    # newest duplicate of a (user, item) pair wins, keeping splits disjoint
    latest: dict[tuple[int, int], tuple[float, int]] = {}
    for user, item, ts, idx in rows:
        key = (user_ids[user], item_ids[item])
        if key not in latest or (ts, idx) > latest[key]:
            latest[key] = (ts, idx)

    by_user: dict[int, list[tuple[float, int, int]]] = {}
    for (u, i), (ts, idx) in latest.items():
        by_user.setdefault(u, []).append((ts, idx, i))

    train, valid, test = [], [], []
    for u, items in by_user.items():
        items.sort()
        if len(items) < min_interactions:
            train.extend(Triple(u, 0, i) for _, _, i in items)
        else:
            train.extend(Triple(u, 0, i) for _, _, i in items[:-2])
            valid.append(Triple(u, 0, items[-2][2]))
            test.append(Triple(u, 0, items[-1][2]))

    n_entities = n_users + n_items
    train_unique = sorted(set(train))
    graph = Graph(
        n_entities=n_entities,
        n_relations=1,
        triples=train_unique,
        adjacency=_build_adjacency(n_entities, train_unique),
        directed=False,
        entity_names=list(user_ids) + list(item_keys),
        relation_names=["interacts"],
        item_range=(n_users, n_entities),
    )
    split = DatasetSplit(train=train, valid=valid, test=test)
    report = LoadReport(
        n_entities=n_entities,
        n_relations=1,
        n_train=len(train),
        n_valid=len(valid),
        n_test=len(test),
        n_users=n_users,
        n_items=n_items,
        n_interactions=len(rows),
    )
    return graph, split, report


def sample_neighbors(graph: Graph, target: Triple, n_cap: int,
                     rng: np.random.Generator) -> list[Triple]:
    """Uniform without-replacement sample of incident train triples.

    Up to n_cap from the head's adjacency and up to n_cap from the tail's;
    the target itself is excluded and cross-side duplicates are dropped.
    """
    out: list[Triple] = []
    seen = {target}
    endpoints = (target.head,) if target.head == target.tail else (target.head, target.tail)
    for endpoint in endpoints:
        incident = [t for t in graph.adjacency[endpoint] if t != target]
        if len(incident) > n_cap:
            idx = rng.choice(len(incident), size=n_cap, replace=False)
            chosen = [incident[i] for i in sorted(idx)]
        else:
            chosen = incident
        for t in chosen:
            if t not in seen:
                seen.add(t)
                out.append(t)
    return out


_MAX_NEGATIVE_ATTEMPTS = 100


def _slot_entity_range(graph: Graph, slot: str) -> tuple[int, int]:
    if graph.item_range is not None:
        # bipartite: canonical triples keep the user in the head slot
        return graph.item_range if slot == "tail" else (0, graph.item_range[0])
    return (0, graph.n_entities)


def sample_negative(graph: Graph, known: frozenset[Triple], target: Triple,
                    slot: str, rng: np.random.Generator) -> Triple:
    """Corrupt one slot of `target` with a uniform entity unknown to the graph.

    Resamples until the corrupted triple is outside `known`, bounded by
    100 attempts; raises SaturationError when the graph is too dense.
    """
    if slot not in ("head", "tail"):
        raise ValueError(f"slot must be 'head' or 'tail', got {slot!r}")
    lo, hi = _slot_entity_range(graph, slot)
    kept = target.tail if slot == "head" else target.head
    for _ in range(_MAX_NEGATIVE_ATTEMPTS):
        e = int(rng.integers(lo, hi))
        if e == kept:
            continue
        cand = Triple(e, target.relation, target.tail) if slot == "head" \
            else Triple(target.head, target.relation, e)
        cand = canonical_orient(cand, graph.directed)
        if cand != canonical_orient(target, graph.directed) and cand not in known:
            return cand
    raise SaturationError(
        f"no negative found for {target} after {_MAX_NEGATIVE_ATTEMPTS} attempts")


def filtered_candidates(graph: Graph, known: frozenset[Triple], target: Triple,
                        slot: str) -> list[int]:
    """Entities whose substitution into `slot` yields an unknown triple,
    plus the true entity itself (the filtered evaluation candidate set)."""
    if slot not in ("head", "tail"):
        raise ValueError(f"slot must be 'head' or 'tail', got {slot!r}")
    truth = target.head if slot == "head" else target.tail
    out = []
    for e in range(graph.n_entities):
        if e == truth:
            out.append(e)
            continue
        cand = Triple(e, target.relation, target.tail) if slot == "head" \
            else Triple(target.head, target.relation, e)
        if canonical_orient(cand, graph.directed) not in known:
            out.append(e)
    return out

"""The reasoning network: predicate encoders, NOT/OR modules, clause scoring.

Each relation owns a small MLP that maps the concatenated endpoint
embeddings of an edge into a shared reasoning space. A clause is scored by
negating its neighbor terms with the NOT module, folding all terms through
the binary OR module, and measuring cosine similarity against a fixed
anchor vector that stands for logical truth. Logical-law regularizers keep
the learned modules close to boolean behavior.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Tensor,
    affine,
    concat,
    concat_cols,
    cosine_similarity,
    dropout,
    init_normal,
    l2_normalize,
    normalize_rows,
    rowwise_cosine,
    stack,
)
from .errors import ShapeMismatchError
from .graph import Triple, canonical_orient
from .logic import Clause


class Mlp:
    """Affine layers with ReLU and dropout between them (none after the last).

    Weights use fan-in-scaled normal init; a flat 0.01-std weight init over a
    3-layer stack attenuates the input signal below the bias floor and the
    network degenerates to a constant function. Biases keep the small 0.01
    init, which also rules out exactly-zero outputs under dead ReLUs.
    """

    def __init__(self, dims: list[int], rng: np.random.Generator):
        if len(dims) < 2:
            raise ValueError("Mlp needs at least one affine layer")
        self.weights = [init_normal((dims[i + 1], dims[i]),
                                    std=float(np.sqrt(2.0 / dims[i])), rng=rng)
                        for i in range(len(dims) - 1)]
        self.biases = [init_normal((dims[i + 1],), std=0.01, rng=rng)
                       for i in range(len(dims) - 1)]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def forward(self, x: Tensor, training: bool = False, drop_rate: float = 0.0,
                rng: np.random.Generator | None = None,
                shared_row_dropout: bool = False) -> Tensor:
        last = self.n_layers - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            x = affine(W, x, b)
            if i != last:
                x = x.relu()
                if training and drop_rate > 0.0:
                    x = dropout(x, drop_rate, rng, training=True,
                                shared_rows=shared_row_dropout)
        return x

    def tensors(self, prefix: str) -> list[tuple[str, Tensor]]:
        out = []
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            out.append((f"{prefix}.W{i}", W))
            out.append((f"{prefix}.b{i}", b))
        return out


def _mlp_dims(d_in: int, d_out: int, hidden: int, layers: int) -> list[int]:
    if layers < 1:
        raise ValueError("layers must be >= 1")
    if layers == 1:
        return [d_in, d_out]
    return [d_in] + [hidden] * (layers - 1) + [d_out]


class ModelParams:
    """All learnable state plus the fixed anchor vector.

    The anchor is initialized once (unit-normalized) and is never handed to
    the optimizer; everything else registers exactly once via trainable().
    """

    def __init__(self, n_entities: int, n_relations: int, dim: int, layers: int,
                 dropout_rate: float, directed: bool, rng: np.random.Generator,
                 hidden: int | None = None, normalize_encodings: bool = True):
        self.n_entities = n_entities
        self.n_relations = n_relations
        self.dim = dim
        self.layers = layers
        self.hidden = 2 * dim if hidden is None else hidden
        self.dropout_rate = dropout_rate
        self.directed = directed
        self.normalize_encodings = normalize_encodings

        self.entity_emb = init_normal((n_entities, dim), rng=rng)
        self.rel_encoders = [Mlp(_mlp_dims(2 * dim, dim, self.hidden, layers), rng)
                             for _ in range(n_relations)]
        self.not_mlp = Mlp(_mlp_dims(dim, dim, self.hidden, layers), rng)
        self.or_mlp = Mlp(_mlp_dims(2 * dim, dim, self.hidden, layers), rng)
        anchor = init_normal((dim,), rng=rng, requires_grad=False)
        self.anchor = Tensor(l2_normalize(anchor).data.copy())

    def trainable(self) -> list[tuple[str, Tensor]]:
        out = [("entity_emb", self.entity_emb)]
        for r, enc in enumerate(self.rel_encoders):
            out.extend(enc.tensors(f"rel{r}"))
        out.extend(self.not_mlp.tensors("not"))
        out.extend(self.or_mlp.tensors("or"))
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: t.data.copy() for name, t in self.trainable()}
        state["anchor"] = self.anchor.data.copy()
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for name, t in self.trainable():
            src = state[name]
            if tuple(src.shape) != t.shape:
                raise ShapeMismatchError(f"{name}: checkpoint {src.shape} vs model {t.shape}")
            t.data[...] = src.astype(t.data.dtype)
        if tuple(state["anchor"].shape) != self.anchor.shape:
            raise ShapeMismatchError("anchor shape mismatch")
        self.anchor.data[...] = state["anchor"].astype(self.anchor.data.dtype)


def _check_mode(mode: str) -> bool:
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    return mode == "train"


def encode_predicate(params: ModelParams, t: Triple, mode: str = "eval",
                     rng: np.random.Generator | None = None) -> Tensor:
    """Run relation t.relation's encoder over the endpoint embeddings.

    Undirected models canonicalize the triple first, so (h, r, t) and
    (t, r, h) share one representation.
    """
    training = _check_mode(mode)
    t = canonical_orient(t, params.directed)
    _validate_ids(params, t)
    x = concat(params.entity_emb.row(t.head), params.entity_emb.row(t.tail))
    out = params.rel_encoders[t.relation].forward(
        x, training=training, drop_rate=params.dropout_rate, rng=rng)
    if params.normalize_encodings:
        out = l2_normalize(out)
    return out


def _validate_ids(params: ModelParams, t: Triple) -> None:
    if not (0 <= t.head < params.n_entities and 0 <= t.tail < params.n_entities):
        raise IndexError(f"entity id out of range in {t}")
    if not 0 <= t.relation < params.n_relations:
        raise IndexError(f"relation id {t.relation} out of range")


def encode_relation_batch(params: ModelParams, relation: int, triples: list[Triple],
                          mode: str = "eval",
                          rng: np.random.Generator | None = None) -> Tensor:
    """Encode same-relation, already-oriented triples as rows of one (m, d)
    tensor with a single batched MLP pass."""
    training = _check_mode(mode)
    heads = params.entity_emb.rows([t.head for t in triples])
    tails = params.entity_emb.rows([t.tail for t in triples])
    out = params.rel_encoders[relation].forward(
        concat_cols(heads, tails), training=training,
        drop_rate=params.dropout_rate, rng=rng)
    if params.normalize_encodings:
        out = normalize_rows(out)
    return out


def encode_predicates(params: ModelParams, triples: list[Triple], mode: str = "eval",
                      rng: np.random.Generator | None = None) -> list[Tensor]:
    """Encode a mixed-relation triple list, batching per relation.

    Equivalent to mapping encode_predicate over the list (up to float
    reassociation in the batched matrix products).
    """
    oriented = [canonical_orient(t, params.directed) for t in triples]
    for t in oriented:
        _validate_ids(params, t)
    by_rel: dict[int, list[int]] = {}
    for i, t in enumerate(oriented):
        by_rel.setdefault(t.relation, []).append(i)
    out: list[Tensor | None] = [None] * len(oriented)
    for rel, idxs in by_rel.items():
        batch = encode_relation_batch(params, rel, [oriented[i] for i in idxs],
                                      mode=mode, rng=rng)
        for j, i in enumerate(idxs):
            out[i] = batch.row(j)
    return out


def not_module(params: ModelParams, e: Tensor, mode: str = "eval",
               rng: np.random.Generator | None = None) -> Tensor:
    training = _check_mode(mode)
    if e.shape[-1] != params.dim:
        raise ShapeMismatchError(f"not_module input {e.shape}, expected dim {params.dim}")
    return params.not_mlp.forward(e, training=training,
                                  drop_rate=params.dropout_rate, rng=rng)


def or_module(params: ModelParams, a: Tensor, b: Tensor, mode: str = "eval",
              rng: np.random.Generator | None = None) -> Tensor:
    training = _check_mode(mode)
    if a.shape[-1] != params.dim or b.shape[-1] != params.dim:
        raise ShapeMismatchError(f"or_module inputs {a.shape}, {b.shape}")
    joined = concat(a, b) if a.data.ndim == 1 else concat_cols(a, b)
    return params.or_mlp.forward(joined, training=training,
                                 drop_rate=params.dropout_rate, rng=rng)


def or_fold(params: ModelParams, terms: list[Tensor], order: list[int] | None = None,
            mode: str = "eval", rng: np.random.Generator | None = None,
            collector: list[Tensor] | None = None) -> Tensor:
    """Left-fold the binary OR module across `terms` in the given order.

    A single term is returned unchanged. Intermediate accumulators are
    appended to `collector` when one is supplied.
    """
    if not terms:
        raise ValueError("or_fold needs at least one term")
    if order is None:
        order = list(range(len(terms)))
    acc = terms[order[0]]
    for i in order[1:]:
        acc = or_module(params, acc, terms[i], mode=mode, rng=rng)
        if collector is not None:
            collector.append(acc)
    return acc


def score_terms(params: ModelParams, terms: list[Tensor], mode: str = "eval",
                rng: np.random.Generator | None = None,
                collector: list[Tensor] | None = None) -> Tensor:
    """Fold expression terms and compare against the anchor.

    Train mode folds in a uniformly random order per call; eval mode keeps
    the given order for determinism.
    """
    training = _check_mode(mode)
    order = None
    if training:
        if rng is None:
            raise ValueError("train-mode scoring needs an rng for term shuffling")
        order = list(rng.permutation(len(terms)))
    folded = or_fold(params, terms, order=order, mode=mode, rng=rng, collector=collector)
    return cosine_similarity(folded, params.anchor)


def paired_scores(params: ModelParams, shared_terms: list[Tensor], pos_target: Tensor,
                  neg_target: Tensor, order: list[int], mode: str = "train",
                  rng: np.random.Generator | None = None,
                  collector: list[Tensor] | None = None) -> tuple[Tensor, Tensor]:
    """Score a clause and its corrupted twin through one folded pass.

    Both expressions share every term except the target, fold in the same
    `order` (index len(shared_terms) denotes the target slot), and see the
    same dropout masks, so the score margin isolates the swapped target.
    """
    training = _check_mode(mode)
    target_slot = len(shared_terms)

    def pair(i: int) -> Tensor:
        if i == target_slot:
            return stack([pos_target, neg_target])
        return stack([shared_terms[i], shared_terms[i]])

    acc = pair(order[0])
    for i in order[1:]:
        joined = concat_cols(acc, pair(i))
        acc = params.or_mlp.forward(joined, training=training,
                                    drop_rate=params.dropout_rate, rng=rng,
                                    shared_row_dropout=True)
        if collector is not None:
            collector.extend([acc.row(0), acc.row(1)])
    s_pos = cosine_similarity(acc.row(0), params.anchor)
    s_neg = cosine_similarity(acc.row(1), params.anchor)
    return s_pos, s_neg


def score_clause(params: ModelParams, clause: Clause, mode: str = "eval",
                 rng: np.random.Generator | None = None,
                 collector: list[Tensor] | None = None) -> Tensor:
    """Score one clause in [-1, 1]: cosine between its folded embedding and
    the anchor. Eval mode is deterministic (neighbors in clause order, target
    last); train mode shuffles the term order."""
    _check_mode(mode)
    terms = []
    for atom in clause.neighbors:
        e = encode_predicate(params, atom.triple, mode=mode, rng=rng)
        if collector is not None:
            collector.append(e)
        negated = not_module(params, e, mode=mode, rng=rng)
        if collector is not None:
            collector.append(negated)
        terms.append(negated)
    target_emb = encode_predicate(params, clause.target.triple, mode=mode, rng=rng)
    if collector is not None:
        collector.append(target_emb)
    terms.append(target_emb)
    # the final expression vector reaches the collector as the last fold
    # accumulator (or as the lone target embedding for a bare clause)
    return score_terms(params, terms, mode=mode, rng=rng, collector=collector)


REGULARIZER_LAWS = ("negation", "double_negation", "idempotence",
                    "annihilator", "identity", "complementation")


@dataclass
class RegularizerReport:
    terms: dict[str, Tensor]
    total: Tensor

    def values(self) -> dict[str, float]:
        return {name: t.item() for name, t in self.terms.items()}


def regularizer_terms(not_fn, or_fn, anchor: Tensor, vectors: list[Tensor]) -> RegularizerReport:
    """The six logical-law penalties averaged over a vector batch.

    not_fn/or_fn operate row-wise on rank-2 tensors; anchor is the fixed
    truth vector. Each law term lies in [0, 2]; an exact boolean algebra
    would zero them all.
    """
    if not vectors:
        zero = Tensor(0.0)
        return RegularizerReport(terms={name: zero for name in REGULARIZER_LAWS}, total=zero)
    W = stack(vectors)
    m = W.shape[0]
    anchor_rows = Tensor(np.tile(anchor.data, (m, 1)))
    not_w = not_fn(W)
    false_vec = not_fn(anchor_rows)

    terms = {
        "negation": 1.0 + rowwise_cosine(not_w, W).mean(),
        "double_negation": 1.0 - rowwise_cosine(not_fn(not_w), W).mean(),
        "idempotence": 1.0 - rowwise_cosine(or_fn(W, W), W).mean(),
        "annihilator": 1.0 - rowwise_cosine(or_fn(W, anchor_rows), anchor_rows).mean(),
        "identity": 1.0 - rowwise_cosine(or_fn(W, false_vec), W).mean(),
        "complementation": 1.0 - rowwise_cosine(or_fn(W, not_w), anchor_rows).mean(),
    }
    total = None
    for t in terms.values():
        total = t if total is None else total + t
    return RegularizerReport(terms=terms, total=total)


def logic_regularizer(params: ModelParams, vectors: list[Tensor], mode: str = "eval",
                      rng: np.random.Generator | None = None) -> RegularizerReport:
    """Apply the law penalties with this model's NOT/OR modules."""
    training = _check_mode(mode)

    def not_fn(X):
        return params.not_mlp.forward(X, training=training,
                                      drop_rate=params.dropout_rate, rng=rng)

    def or_fn(A, B):
        return params.or_mlp.forward(concat_cols(A, B), training=training,
                                     drop_rate=params.dropout_rate, rng=rng)

    return regularizer_terms(not_fn, or_fn, params.anchor, vectors)

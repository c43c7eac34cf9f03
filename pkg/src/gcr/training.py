"""Pairwise training loop: corrupt, score, regularize, optimize.

Each step samples one neighborhood for a known edge, scores the positive
clause and a corrupted-target clause over that same neighborhood, and
minimizes -ln sigmoid(alpha * (s_pos - s_neg)) plus the logical-law and L2
penalties. The loop is pure SGD over shuffled train triples with optional
micro-batching, early stopping, and halve-on-plateau learning-rate decay.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass

import numpy as np

from .autodiff import Adam, Tensor, log_sigmoid, stack, sum_squares
from .errors import NumericsError
from .graph import DatasetSplit, Graph, Triple, sample_negative, sample_neighbors
from .logic import Clause, build_clause
from .model import (
    ModelParams,
    encode_predicates,
    logic_regularizer,
    not_module,
    paired_scores,
)


@dataclass
class TrainConfig:
    dim: int = 64
    layers: int = 3
    dropout: float = 0.2
    alpha: float = 10.0
    lambda_logic: float = 1e-5
    lambda_l2: float = 1e-5
    lr: float = 0.001
    n_cap: int = 5
    epochs: int = 100
    patience: int = 5
    batch_size: int = 1
    seed: int = 0
    precision: str = "f32"
    normalize_encodings: bool = True

    def __post_init__(self):
        if self.dim < 1 or self.layers < 1 or self.n_cap < 1 or self.batch_size < 1:
            raise ValueError("dim, layers, n_cap and batch_size must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")


@dataclass
class EpochReport:
    epoch: int
    mean_total: float
    mean_gcr: float
    mean_logic: float
    mean_l2: float
    validation_metric: float | None
    lr: float
    wall_time: float

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self))


def pairwise_loss(s_pos, s_neg, alpha: float) -> Tensor:
    """-ln sigmoid(alpha * (s_pos - s_neg)); zero-margin pairs cost ln 2."""
    s_pos, s_neg = Tensor._wrap(s_pos), Tensor._wrap(s_neg)
    return -log_sigmoid((s_pos - s_neg) * alpha)


def l2_penalty(params: ModelParams) -> Tensor:
    """Squared 2-norm over every trainable tensor."""
    return sum_squares([t for _, t in params.trainable()])


def total_loss(gcr, logic, l2, lambda_logic: float, lambda_l2: float) -> Tensor:
    gcr, logic, l2 = Tensor._wrap(gcr), Tensor._wrap(logic), Tensor._wrap(l2)
    return gcr + logic * lambda_logic + l2 * lambda_l2


@dataclass
class StepStats:
    total: float
    gcr: float
    logic: float
    l2: float
    pos_clause: Clause
    neg_clause: Clause


def init_params(graph: Graph, cfg: TrainConfig, rng: np.random.Generator) -> ModelParams:
    return ModelParams(
        n_entities=graph.n_entities, n_relations=graph.n_relations, dim=cfg.dim,
        layers=cfg.layers, dropout_rate=cfg.dropout, directed=graph.directed,
        rng=rng, normalize_encodings=cfg.normalize_encodings)


def _corruption_slot(graph: Graph, target_index: int) -> str:
    if graph.item_range is not None:
        return "tail"  # canonical bipartite triples keep the item in the tail
    return "tail" if target_index % 2 == 0 else "head"


def _step_losses(params: ModelParams, graph: Graph, split: DatasetSplit,
                 target: Triple, target_index: int, cfg: TrainConfig,
                 rng: np.random.Generator,
                 collector: list[Tensor] | None) -> tuple[Tensor, Clause, Clause]:
    """Build the ranking-loss graph for one target; batch vectors for the
    logical regularizer are appended to `collector` when one is given."""
    neighbors = sample_neighbors(graph, target, cfg.n_cap, rng)
    slot = _corruption_slot(graph, target_index)
    negative = sample_negative(graph, split.all_known, target, slot, rng)
    pos_clause = build_clause(target, neighbors)
    neg_clause = build_clause(negative, neighbors)

    nbr_triples = [a.triple for a in pos_clause.neighbors]
    embs = encode_predicates(params, nbr_triples + [target, negative],
                             mode="train", rng=rng)
    nbr_embs, pos_emb, neg_emb = embs[:-2], embs[-2], embs[-1]

    negated_terms = []
    if nbr_embs:
        negated_rows = not_module(params, stack(nbr_embs), mode="train", rng=rng)
        negated_terms = [negated_rows.row(i) for i in range(len(nbr_embs))]
    if collector is not None:
        collector.extend(nbr_embs)
        collector.extend(negated_terms)
        collector.extend([pos_emb, neg_emb])

    # one shuffled order for both clauses: the corrupted expression differs
    # from the positive one only in the swapped-in target term
    order = list(rng.permutation(len(negated_terms) + 1))
    s_pos, s_neg = paired_scores(params, negated_terms, pos_emb, neg_emb,
                                 order=order, mode="train", rng=rng,
                                 collector=collector)
    return pairwise_loss(s_pos, s_neg, cfg.alpha), pos_clause, neg_clause


def train_step(params: ModelParams, optimizer: Adam, graph: Graph, split: DatasetSplit,
               target: Triple, target_index: int, cfg: TrainConfig,
               rng: np.random.Generator) -> StepStats:
    """One SGD step on one target triple; backpropagates and applies Adam."""
    collector = [] if cfg.lambda_logic != 0.0 else None
    gcr, pos_clause, neg_clause = _step_losses(
        params, graph, split, target, target_index, cfg, rng, collector)
    logic = logic_regularizer(params, collector, mode="train", rng=rng).total \
        if collector is not None else Tensor(0.0)
    l2 = l2_penalty(params) if cfg.lambda_l2 != 0.0 else Tensor(0.0)
    loss = total_loss(gcr, logic, l2, cfg.lambda_logic, cfg.lambda_l2)
    if not np.isfinite(loss.data):
        raise NumericsError(f"non-finite loss at target {target}")
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return StepStats(total=loss.item(), gcr=gcr.item(), logic=logic.item(),
                     l2=l2.item(), pos_clause=pos_clause, neg_clause=neg_clause)


@dataclass
class TrainResult:
    reports: list[EpochReport]
    best_state: dict[str, np.ndarray]
    best_metric: float | None
    stopped_early: bool


def train(params: ModelParams, graph: Graph, split: DatasetSplit, cfg: TrainConfig,
          validation_hook=None, log_stream=None) -> TrainResult:
    """Run up to cfg.epochs epochs of shuffled SGD with early stopping.

    validation_hook(params) -> float is called after every epoch; the best
    checkpoint is kept and restored into `params` before returning. Without
    a hook, all epochs run and the final state is the result. The learning
    rate halves after every 2 consecutive evaluations without improvement;
    training stops after cfg.patience consecutive non-improvements.
    """
    rng = np.random.default_rng(cfg.seed)
    optimizer = Adam([t for _, t in params.trainable()], lr=cfg.lr)
    anchor_before = params.anchor.data.copy()

    reports: list[EpochReport] = []
    best_state = params.state_dict()
    best_metric: float | None = None
    no_improve = 0
    stopped_early = False
    target_counter = 0

    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter()
        order = rng.permutation(len(split.train))
        sums = np.zeros(4, dtype=np.float64)
        n_steps = 0
        batch: list[Tensor] = []
        collected: list[Tensor] = [] if cfg.lambda_logic != 0.0 else None

        def flush():
            nonlocal n_steps, collected
            if not batch:
                return
            gcr = batch[0]
            for g in batch[1:]:
                gcr = gcr + g
            gcr = gcr * (1.0 / len(batch))
            logic = logic_regularizer(params, collected, mode="train", rng=rng).total \
                if collected is not None else Tensor(0.0)
            l2 = l2_penalty(params) if cfg.lambda_l2 != 0.0 else Tensor(0.0)
            loss = total_loss(gcr, logic, l2, cfg.lambda_logic, cfg.lambda_l2)
            if not np.isfinite(loss.data):
                raise NumericsError(f"non-finite loss in epoch {epoch}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            sums[:] += [loss.item(), gcr.item(), logic.item(), l2.item()]
            n_steps += 1
            batch.clear()
            if collected is not None:
                collected = []

        for idx in order:
            target = split.train[int(idx)]
            gcr, _, _ = _step_losses(
                params, graph, split, target, target_counter, cfg, rng, collected)
            target_counter += 1
            batch.append(gcr)
            if len(batch) >= cfg.batch_size:
                flush()
        flush()

        metric = validation_hook(params) if validation_hook is not None else None
        mean = sums / max(n_steps, 1)
        report = EpochReport(
            epoch=epoch, mean_total=float(mean[0]), mean_gcr=float(mean[1]),
            mean_logic=float(mean[2]), mean_l2=float(mean[3]),
            validation_metric=metric, lr=optimizer.lr,
            wall_time=time.perf_counter() - start)
        reports.append(report)
        if log_stream is not None:
            log_stream.write(report.to_json() + "\n")
            log_stream.flush()

        if metric is not None:
            if best_metric is None or metric > best_metric:
                best_metric = metric
                best_state = params.state_dict()
                no_improve = 0
            else:
                no_improve += 1
                if no_improve % 2 == 0:
                    optimizer.lr *= 0.5
                if no_improve >= cfg.patience:
                    stopped_early = True
                    break
        else:
            best_state = params.state_dict()

    if not np.array_equal(params.anchor.data, anchor_before):
        raise NumericsError("anchor vector changed during training")
    params.load_state_dict(best_state)
    return TrainResult(reports=reports, best_state=best_state,
                       best_metric=best_metric, stopped_early=stopped_early)

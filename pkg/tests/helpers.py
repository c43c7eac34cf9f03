"""Shared test oracles and fixtures: finite differences, toy graphs."""

import numpy as np

from gcr.autodiff import Tensor
from gcr.graph import Graph, Triple, canonical_orient


def finite_difference(loss_fn, param: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central-difference estimate of d loss_fn() / d param.

    loss_fn rebuilds the forward pass from scratch on every call so the
    perturbed data is actually used; it must return a float.
    """
    grad = np.zeros_like(param.data, dtype=np.float64)
    flat = param.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = loss_fn()
        flat[i] = orig - h
        down = loss_fn()
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def max_grad_error(analytic: np.ndarray, estimate: np.ndarray) -> float:
    """Largest elementwise error, relative for large entries, absolute near zero."""
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(estimate)))
    return float(np.max(np.abs(analytic - estimate) / denom)) if analytic.size else 0.0


def toy_graph(triples, n_entities, directed=True, n_relations=1, item_range=None):
    """Build an in-memory Graph from (head, relation, tail) tuples."""
    triples = [canonical_orient(Triple(*t), directed) for t in triples]
    adjacency = [[] for _ in range(n_entities)]
    for t in triples:
        adjacency[t.head].append(t)
        if t.tail != t.head:
            adjacency[t.tail].append(t)
    return Graph(n_entities=n_entities, n_relations=n_relations, triples=sorted(set(triples)),
                 adjacency=adjacency, directed=directed,
                 entity_names=[f"e{i}" for i in range(n_entities)],
                 relation_names=[f"r{i}" for i in range(n_relations)],
                 item_range=item_range)


def write_kg(tmp_path, train, valid=(), test=()):
    """Write train/valid/test TSV triple files into tmp_path."""
    for name, rows in (("train", train), ("valid", valid), ("test", test)):
        (tmp_path / f"{name}.txt").write_text(
            "".join(f"{h}\t{r}\t{t}\n" for h, r, t in rows), encoding="utf-8")
    return str(tmp_path)

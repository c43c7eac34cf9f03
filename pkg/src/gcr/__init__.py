"""Neural-symbolic link prediction over multi-relational and bipartite graphs."""

from .autodiff import Adam, Tensor, set_precision
from .evaluation import MetricsTable, evaluate_kg, evaluate_rec, group_by_degree
from .graph import DatasetSplit, Graph, Triple, load_ratings_csv, load_tsv
from .logic import Clause, build_clause, check_equivalence
from .model import ModelParams, logic_regularizer, score_clause
from .training import TrainConfig, TrainResult, init_params, train

__version__ = "0.1.0"

__all__ = [
    "Adam", "Tensor", "set_precision",
    "MetricsTable", "evaluate_kg", "evaluate_rec", "group_by_degree",
    "DatasetSplit", "Graph", "Triple", "load_ratings_csv", "load_tsv",
    "Clause", "build_clause", "check_equivalence",
    "ModelParams", "logic_regularizer", "score_clause",
    "TrainConfig", "TrainResult", "init_params", "train",
]

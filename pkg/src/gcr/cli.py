"""Command-line entry points: train, eval, check-logic, gen-synth.

Tunables resolve with CLI flags taking precedence over the optional
key=value config file, which takes precedence over built-in defaults. Set
GCR_LOG_LEVEL to error/warn/info/debug to control logging.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

import numpy as np

from . import autodiff
from .checkpoint import load_checkpoint, params_from_checkpoint, save_checkpoint
from .errors import CheckpointError, GcrError
from .evaluation import (
    evaluate_kg,
    evaluate_rec,
    group_by_degree,
    kg_validation_hook,
    rec_validation_hook,
)
from .graph import load_ratings_csv, load_tsv
from .logic import check_equivalence
from .synthetic import SyntheticSpec, gen_synthetic
from .training import TrainConfig, init_params, train

log = logging.getLogger("gcr")

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING,
               "info": logging.INFO, "debug": logging.DEBUG}

# config-file / flag name -> TrainConfig field and type
_TUNABLES = {
    "dim": ("dim", int),
    "layers": ("layers", int),
    "dropout": ("dropout", float),
    "alpha": ("alpha", float),
    "lambda_logic": ("lambda_logic", float),
    "lambda_l2": ("lambda_l2", float),
    "lr": ("lr", float),
    "neighbors": ("n_cap", int),
    "epochs": ("epochs", int),
    "patience": ("patience", int),
    "batch_size": ("batch_size", int),
    "seed": ("seed", int),
    "precision": ("precision", str),
}


def _setup_logging() -> None:
    level_name = os.environ.get("GCR_LOG_LEVEL", "warn").lower()
    level = _LOG_LEVELS.get(level_name, logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _read_config_file(path: str) -> dict:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise GcrError(f"{path}:{lineno}: expected key=value")
            key, _, raw = line.partition("=")
            key = key.strip()
            if key not in _TUNABLES:
                raise GcrError(f"{path}:{lineno}: unknown config key {key!r}")
            field, cast = _TUNABLES[key]
            try:
                values[field] = cast(raw.strip())
            except ValueError:
                raise GcrError(f"{path}:{lineno}: bad value for {key}: {raw.strip()!r}") from None
    return values


def _add_tunable_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file (flags override it)")
    p.add_argument("--dim", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--lambda-logic", type=float, dest="lambda_logic")
    p.add_argument("--lambda-l2", type=float, dest="lambda_l2")
    p.add_argument("--lr", type=float)
    p.add_argument("--neighbors", type=int, help="per-endpoint neighbor sample cap")
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--seed", type=int)
    p.add_argument("--precision", choices=["f32", "f64"])


def _resolve_config(args: argparse.Namespace, task: str) -> TrainConfig:
    values: dict = {}
    if args.config:
        values.update(_read_config_file(args.config))
    for name, (field, _) in _TUNABLES.items():
        flag_value = getattr(args, field, None)
        if flag_value is not None:
            values[field] = flag_value
    # recommendation runs default to 2-layer modules and a gentler logic weight
    if "layers" not in values:
        values["layers"] = 2 if task == "rec" else 3
    if "lambda_logic" not in values and task == "rec":
        values["lambda_logic"] = 1e-6
    return TrainConfig(**values)


def _load_dataset(task: str, data_path: str):
    if task == "kg":
        return load_tsv(data_path)
    return load_ratings_csv(data_path)


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args, args.task)
    autodiff.set_precision(cfg.precision)
    graph, split, report = _load_dataset(args.task, args.data)
    log.info("loaded %s: %d entities, %d relations, %d train / %d valid / %d test",
             args.data, report.n_entities, report.n_relations,
             report.n_train, report.n_valid, report.n_test)
    if report.unseen_entities or report.unseen_relations:
        log.warning("%d entities and %d relations first appear outside train",
                    report.unseen_entities, report.unseen_relations)

    params = init_params(graph, cfg, np.random.default_rng(cfg.seed))
    if args.task == "kg":
        hook = kg_validation_hook(graph, split, cfg) if split.valid else None
    else:
        hook = rec_validation_hook(graph, split, cfg, n_negatives=args.negatives) \
            if split.valid else None
    result = train(params, graph, split, cfg, validation_hook=hook,
                   log_stream=sys.stdout)
    save_checkpoint(args.checkpoint, params, cfg, graph)
    log.info("wrote checkpoint %s (best validation metric: %s)",
             args.checkpoint, result.best_metric)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    params = params_from_checkpoint(ckpt)
    cfg = ckpt.config
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    autodiff.set_precision(cfg.precision)
    graph, split, _ = _load_dataset(args.task, args.data)
    if graph.n_relations != params.n_relations or graph.n_entities != params.n_entities:
        raise CheckpointError(
            f"checkpoint built for {params.n_entities} entities / "
            f"{params.n_relations} relations, dataset has {graph.n_entities} / "
            f"{graph.n_relations}")

    if args.task == "kg":
        table = evaluate_kg(params, graph, split, cfg)
    elif args.groups:
        table = group_by_degree(params, graph, split, cfg, n_negatives=args.negatives)
    else:
        table = evaluate_rec(params, graph, split, cfg, n_negatives=args.negatives)
    print(table.to_json())
    print(table.to_text())
    return 0


def cmd_check_logic(args: argparse.Namespace) -> int:
    all_ok = True
    for n in range(1, args.n_max + 1):
        report = check_equivalence(n)
        status = "PASS" if report.ok else "FAIL"
        all_ok &= report.ok
        print(f"n={n}: {status} ({report.n_assignments} assignments, "
              f"{len(report.counterexamples)} counterexamples)")
    return 0 if all_ok else 1


def cmd_gen_synth(args: argparse.Namespace) -> int:
    spec = SyntheticSpec(n_entities=args.entities, n_base_relations=args.relations,
                         rule_arity=args.rule_arity, edge_prob=args.edge_prob,
                         seed=args.seed if args.seed is not None else 0)
    report = gen_synthetic(spec, args.out)
    print(f"wrote {args.out}: {report.n_base_edges} base edges, "
          f"{report.n_planted} planted target edges "
          f"({report.n_train} train / {report.n_valid} valid / {report.n_test} test lines)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gcr",
                                     description="neural-symbolic link prediction")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model and write a checkpoint")
    p_train.add_argument("--data", required=True, help="dataset directory (kg) or csv (rec)")
    p_train.add_argument("--task", required=True, choices=["kg", "rec"])
    p_train.add_argument("--checkpoint", default="model.ckpt", help="output path")
    p_train.add_argument("--negatives", type=int, default=100,
                         help="negatives per validation query (rec)")
    _add_tunable_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--task", required=True, choices=["kg", "rec"])
    p_eval.add_argument("--groups", action="store_true",
                        help="add the per-user-degree breakdown (rec)")
    p_eval.add_argument("--negatives", type=int, default=100)
    p_eval.add_argument("--seed", type=int, help="override the checkpoint seed")
    p_eval.set_defaults(func=cmd_eval)

    p_logic = sub.add_parser("check-logic",
                             help="brute-force the clause equivalence oracle")
    p_logic.add_argument("n_max", type=int, help="largest neighbor count to check")
    p_logic.set_defaults(func=cmd_check_logic)

    p_gen = sub.add_parser("gen-synth", help="generate a planted-rule dataset")
    p_gen.add_argument("--out", required=True, help="output directory")
    p_gen.add_argument("--entities", type=int, default=50)
    p_gen.add_argument("--relations", type=int, default=3)
    p_gen.add_argument("--edge-prob", type=float, default=0.08, dest="edge_prob")
    p_gen.add_argument("--rule-arity", type=int, default=2, dest="rule_arity")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.set_defaults(func=cmd_gen_synth)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "check-logic" and args.n_max < 1:
        parser.error("n_max must be at least 1")
    try:
        return args.func(args)
    except (GcrError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Bit-exact model persistence.

File layout: one JSON header line (format version, config, model geometry,
array manifest, vocabularies), then the raw little-endian float32 arrays
concatenated in manifest order. Loading validates the version, every
declared shape, and the exact payload length.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from .errors import CheckpointError
from .graph import Graph
from .model import ModelParams
from .training import TrainConfig

FORMAT_VERSION = 1
_ARRAY_DTYPE = "<f4"


@dataclass
class Checkpoint:
    config: TrainConfig
    arrays: dict[str, np.ndarray]
    entity_names: list[str]
    relation_names: list[str]
    directed: bool
    item_range: tuple[int, int] | None
    model_meta: dict


def save_checkpoint(path: str, params: ModelParams, cfg: TrainConfig,
                    graph: Graph) -> None:
    state = params.state_dict()
    manifest = [{"name": name, "shape": list(arr.shape)} for name, arr in state.items()]
    header = {
        "format_version": FORMAT_VERSION,
        "config": dataclasses.asdict(cfg),
        "model": {
            "dim": params.dim,
            "layers": params.layers,
            "hidden": params.hidden,
            "dropout": params.dropout_rate,
            "normalize_encodings": params.normalize_encodings,
            "directed": params.directed,
            "n_entities": params.n_entities,
            "n_relations": params.n_relations,
        },
        "arrays": manifest,
        "entities": graph.entity_names,
        "relations": graph.relation_names,
        "item_range": list(graph.item_range) if graph.item_range else None,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        for entry in manifest:
            fh.write(np.ascontiguousarray(state[entry["name"]], dtype=_ARRAY_DTYPE).tobytes())


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"unreadable checkpoint header: {exc}") from None
        if header.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(
                f"unsupported format version {header.get('format_version')!r}")
        payload = fh.read()

    arrays = {}
    offset = 0
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) * 4
        chunk = payload[offset:offset + size]
        if len(chunk) != size:
            raise CheckpointError(
                f"truncated checkpoint: array {entry['name']} needs {size} bytes, "
                f"found {len(chunk)}")
        arrays[entry["name"]] = np.frombuffer(chunk, dtype=_ARRAY_DTYPE).reshape(shape).copy()
        offset += size
    if offset != len(payload):
        raise CheckpointError(f"{len(payload) - offset} trailing bytes after declared arrays")

    return Checkpoint(
        config=TrainConfig(**header["config"]),
        arrays=arrays,
        entity_names=header["entities"],
        relation_names=header["relations"],
        directed=header["model"]["directed"],
        item_range=tuple(header["item_range"]) if header["item_range"] else None,
        model_meta=header["model"],
    )


def params_from_checkpoint(ckpt: Checkpoint) -> ModelParams:
    """Rebuild a ModelParams and load every stored array into it."""
    meta = ckpt.model_meta
    params = ModelParams(
        n_entities=meta["n_entities"], n_relations=meta["n_relations"],
        dim=meta["dim"], layers=meta["layers"], dropout_rate=meta["dropout"],
        directed=meta["directed"], rng=np.random.default_rng(0),
        hidden=meta["hidden"], normalize_encodings=meta["normalize_encodings"])
    expected = {name for name, _ in params.trainable()} | {"anchor"}
    stored = set(ckpt.arrays)
    if expected != stored:
        raise CheckpointError(
            f"array manifest mismatch: missing {sorted(expected - stored)}, "
            f"unexpected {sorted(stored - expected)}")
    params.load_state_dict(ckpt.arrays)
    return params

"""Versioned JSON serialisation of fitted models."""
from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .model import GbdtConfig, GbdtModel, Tree

FORMAT = "retailcast-gbdt"
VERSION = 1


def _tree_to_list(t: Tree) -> list:
    return [
        [int(t.feature[i]), float(t.threshold[i]), int(t.split_bin[i]), bool(t.default_left[i]),
         int(t.left[i]), int(t.right[i]), float(t.value[i]), float(t.gain[i])]
        for i in range(t.feature.size)
    ]


def _tree_from_list(nodes: list) -> Tree:
    cols = list(zip(*nodes))
    return Tree(
        feature=np.array(cols[0], dtype=np.int64),
        threshold=np.array(cols[1], dtype=float),
        split_bin=np.array(cols[2], dtype=np.int64),
        default_left=np.array(cols[3], dtype=bool),
        left=np.array(cols[4], dtype=np.int64),
        right=np.array(cols[5], dtype=np.int64),
        value=np.array(cols[6], dtype=float),
        gain=np.array(cols[7], dtype=float),
    )


def dumps(model: GbdtModel) -> str:
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "base_score": model.base_score,
        "learning_rate": model.learning_rate,
        "feature_names": model.feature_names,
        "bin_edges": [e.tolist() for e in model.bin_edges],
        "importance_gain": model.importance_gain.tolist(),
        "importance_split": model.importance_split.tolist(),
        "config": asdict(model.config),
        "trees": [_tree_to_list(t) for t in model.trees],
    }
    return json.dumps(doc, indent=1)


def loads(text: str) -> GbdtModel:
    doc = json.loads(text)
    if doc.get("format") != FORMAT:
        raise ValueError(f"not a {FORMAT} document")
    if doc.get("version") != VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')!r} (expected {VERSION})")
    return GbdtModel(
        base_score=float(doc["base_score"]),
        learning_rate=float(doc["learning_rate"]),
        trees=[_tree_from_list(t) for t in doc["trees"]],
        bin_edges=[np.array(e, dtype=float) for e in doc["bin_edges"]],
        feature_names=list(doc["feature_names"]),
        importance_gain=np.array(doc["importance_gain"], dtype=float),
        importance_split=np.array(doc["importance_split"], dtype=float),
        config=GbdtConfig(**doc["config"]),
    )


def save_model(model: GbdtModel, path) -> None:
    Path(path).write_text(dumps(model))


def load_model(path) -> GbdtModel:
    return loads(Path(path).read_text())

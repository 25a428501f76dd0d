"""YAML configuration shared by ``rankfuse serve`` and ``rankfuse experiment``.

Relative paths are resolved against the directory holding the config file.
See the README for the full key list.
"""

from __future__ import annotations

import copy
from pathlib import Path

import yaml

from .exceptions import DataError

DEFAULTS = {
    "indexes": {"text": None, "dense": None},
    "weights": None,
    "fusion": {"method": "wrrf", "k": 0.0, "default_alpha": 0.5, "depth": 1000},
    "serve": {"host": "127.0.0.1", "port": 8080, "top_n": 10},
    "experiment": {
        "queries": None,
        "query_manifest": None,
        "query_vectors": None,
        "qrels": None,
        "top_n": 1000,
        "metrics": ["ndcg@10", "recall@1", "recall@10"],
        "significance": {"m": None, "level": 0.05},
        "output_dir": "results",
        "systems": [],
    },
}

_PATH_KEYS = {
    ("indexes", "text"),
    ("indexes", "dense"),
    ("weights",),
    ("experiment", "queries"),
    ("experiment", "query_manifest"),
    ("experiment", "query_vectors"),
    ("experiment", "qrels"),
    ("experiment", "output_dir"),
}


def _merge(base: dict, override: dict, trail=()) -> dict:
    for key, value in override.items():
        if key not in base:
            raise DataError(f"unknown config key {'.'.join(trail + (key,))!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            _merge(base[key], value, trail + (key,))
        else:
            base[key] = value
    return base


def load_config(path=None, overrides: dict | None = None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    root = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise DataError(f"malformed YAML: {exc}", str(path)) from None
        if not isinstance(data, dict):
            raise DataError("config must be a mapping", str(path))
        _merge(cfg, data)
        root = path.parent
    if overrides:
        _merge(cfg, overrides)
    for keys in _PATH_KEYS:
        node = cfg
        for key in keys[:-1]:
            node = node[key]
        if node[keys[-1]] is not None:
            node[keys[-1]] = str((root / node[keys[-1]]).resolve())
    return cfg

"""Flat ``key: value`` run configuration (YAML mapping of scalars)."""

from __future__ import annotations

from pathlib import Path
from typing import Any

import yaml


def load_config(path: str | Path | None) -> dict[str, Any]:
    if path is None:
        return {}
    with open(path) as fh:
        cfg = yaml.safe_load(fh) or {}
    if not isinstance(cfg, dict):
        raise ValueError("config must be a flat key: value mapping")
    for k, v in cfg.items():
        if isinstance(v, dict):
            raise ValueError(f"config key {k!r}: nested tables are not supported")
    return cfg

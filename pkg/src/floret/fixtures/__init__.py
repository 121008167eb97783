"""Bundled example models and datasets.

``calves``, ``hwe``, ``vaccine``, ``regimen`` and ``two_step`` each ship a
model file ``<name>.json`` and a count vector ``<name>.data.json``.
"""

from __future__ import annotations

import json
from pathlib import Path

from floret.tree import SequentialTree, load_model

NAMES = ("hwe", "calves", "vaccine", "regimen", "two_step")

_DIR = Path(__file__).parent


def model_path(name: str) -> Path:
    return _DIR / f"{name}.json"


def data_path(name: str) -> Path:
    return _DIR / f"{name}.data.json"


def model(name: str) -> SequentialTree:
    return load_model(model_path(name))


def counts(name: str) -> list[int]:
    return json.loads(data_path(name).read_text())

"""Bundled models and the manifest of published reference values."""
from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from .core import Pts
from .lang import load


def model_path(name: str) -> Path:
    return Path(str(resources.files("pmask") / "models" / name))


def model_names() -> list[str]:
    return sorted(p.name for p in resources.files("pmask").joinpath("models").iterdir()
                  if p.name.endswith(".pm"))


def corpus_manifest() -> dict:
    """Rows of (model pair, constants, milestone, expected value, provenance)."""
    text = resources.files("pmask").joinpath("manifest.json").read_text(encoding="utf-8")
    return json.loads(text)


def load_row(row: dict) -> tuple[Pts, Pts]:
    nom = load(model_path(row["nominal"]), row["nominal_constants"])
    imp = load(model_path(row["impl"]), row["impl_constants"])
    return nom, imp

"""Access to packaged default configs and fixtures."""

from importlib import resources
from pathlib import Path

import yaml


def data_path(name: str) -> Path:
    """Path to a file shipped under spinequad/data."""
    return Path(resources.files("spinequad").joinpath("data", name))


def load_yaml(path) -> dict:
    with open(path, "r") as f:
        out = yaml.safe_load(f)
    if not isinstance(out, dict):
        raise ValueError(f"{path}: expected a mapping at top level")
    return out

"""Access to the data files shipped with the package.

The EDMKIT_DATA_DIR environment variable overrides the bundled location:
when set, files are looked up there first, so vendored data can be swapped
for refreshed extracts without reinstalling.
"""

from __future__ import annotations

import importlib.resources
import os
from pathlib import Path

from .timeseries import Dataset, load_csv

__all__ = ["bundled_path", "load_bundled"]

DEFAULT_DATASET = "leo_debris_1960_2022.csv"


def bundled_path(name: str) -> Path:
    """Resolve a data file name against EDMKIT_DATA_DIR, then package data."""
    override = os.environ.get("EDMKIT_DATA_DIR")
    if override:
        candidate = Path(override) / name
        if candidate.exists():
            return candidate
    packaged = importlib.resources.files("edmkit") / "data" / name
    return Path(str(packaged))


def load_bundled(name: str = DEFAULT_DATASET) -> Dataset:
    """Load a bundled yearly dataset by file name."""
    return load_csv(bundled_path(name))

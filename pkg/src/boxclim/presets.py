"""Named emulator presets (calibrated to the PI or PD pulse benchmarks)."""

from __future__ import annotations

from pathlib import Path

import yaml

from .carbon import Emulator, emulator_from_document
from .data import data_path
from .errors import ConfigError

_FILES = {"3SR": "3sr", "4PR": "4pr", "4PR-X": "4prx"}
EMULATOR_NAMES = tuple(_FILES)


def load_emulator(name: str, background: str = "PI") -> Emulator:
    """Load ``3SR``, ``4PR`` or ``4PR-X`` for a background, or a YAML document by path."""
    if name in _FILES:
        bg = background.upper()
        if bg not in ("PI", "PD"):
            raise ConfigError(f"unknown background {background!r}", "background")
        path = data_path("calibrations", f"{bg.lower()}_{_FILES[name]}.yaml")
    else:
        path = Path(name)
        if not path.exists():
            raise ConfigError(f"no preset or calibration file named {name!r}", "emulator")
    with open(path) as fh:
        return emulator_from_document(yaml.safe_load(fh))

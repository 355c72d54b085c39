"""Bundled datasets and the lookup rule that lets users override them.

Files are looked up first under ``$BOXCLIM_DATA_DIR`` (if set) and then in the
package's own data directory, so user-supplied benchmark curves, pattern
fields or polygons with the same relative path take precedence.
"""

from __future__ import annotations

import os
from pathlib import Path

DATA_ENV = "BOXCLIM_DATA_DIR"
BUNDLED = Path(__file__).resolve().parent


def data_path(*parts: str, must_exist: bool = True) -> Path:
    rel = Path(*parts)
    override = os.environ.get(DATA_ENV)
    if override:
        cand = Path(override) / rel
        if cand.exists():
            return cand
    cand = BUNDLED / rel
    if must_exist and not cand.exists():
        from ..errors import DataError

        raise DataError(f"data file not found: {rel} (searched ${DATA_ENV} and bundled data)")
    return cand


def has_data(*parts: str) -> bool:
    try:
        data_path(*parts)
        return True
    except Exception:
        return False

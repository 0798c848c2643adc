"""Constants frozen from the reference calibration run (``scripts/calibrate.py``)."""

from __future__ import annotations

import sys
from importlib import resources

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DATA = "calibration.toml"


def load_calibration() -> dict:
    text = resources.files("nearcrit").joinpath("data", DATA).read_text()
    return tomllib.loads(text)


def alpha4_table(cal: dict) -> dict:
    """``{R: alpha4(1, R)}`` in lattice units from the reference run."""
    return {float(k): float(v) for k, v in cal["alpha4"]["values"].items()}

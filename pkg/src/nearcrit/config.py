"""Experiment configuration (TOML), overrides and validation."""

from __future__ import annotations

import copy
import sys
from dataclasses import dataclass

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .lattice import Lattice, LatticeSpec, RectRegion, build_lattice
from .sampling import ProbabilityField

EXPERIMENTS = ("sample", "crossing-prob", "arms", "alpha4", "charlen", "gap", "pivotal", "distinguish",
               "conditions", "oracle")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass
class ExperimentConfig:
    raw: dict
    experiment: str
    seed: int
    lattice_spec: LatticeSpec
    params: dict
    fields_raw: dict

    def field(self, name: str) -> ProbabilityField:
        if name == "critical" and name not in self.fields_raw:
            return ProbabilityField.critical()
        if name not in self.fields_raw:
            raise ConfigError(f"fields.{name}: not defined")
        return parse_field(self.fields_raw[name], f"fields.{name}")

    def lattice(self) -> Lattice:
        return build_lattice(self.lattice_spec)

    def param(self, key, default=None, required=False):
        if key in self.params:
            return self.params[key]
        if required:
            raise ConfigError(f"params.{key}: missing")
        return default


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(raw: dict, overrides) -> dict:
    raw = copy.deepcopy(raw)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, val = item.split("=", 1)
        parts = key.strip().split(".")
        node = raw
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key}: {p} is not a section")
        node[parts[-1]] = _parse_value(val.strip())
    return raw


def rect_from(value, where) -> RectRegion:
    try:
        x0, y0, x1, y1 = (float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected [x0, y0, x1, y1]") from None
    if not (x1 > x0 and y1 > y0):
        raise ConfigError(f"{where}: rectangle needs positive width and height")
    return RectRegion.from_corners(x0, y0, x1, y1)


def parse_field(d: dict, where: str) -> ProbabilityField:
    if "p" in d:
        try:
            return ProbabilityField.uniform_p(float(d["p"]))
        except ValueError as e:
            raise ConfigError(f"{where}.p: {e}") from None
    regions = []
    for i, r in enumerate(d.get("regions", [])):
        if "rect" not in r or "value" not in r:
            raise ConfigError(f"{where}.regions[{i}]: needs rect and value")
        regions.append((rect_from(r["rect"], f"{where}.regions[{i}].rect"), float(r["value"])))
    try:
        return ProbabilityField(
            p_crit=float(d.get("p_crit", 0.5)),
            speed=float(d.get("speed", 0.0)),
            default=float(d.get("default", 0.0)),
            regions=tuple(regions),
            n0=float(d.get("n0", float("inf"))),
        )
    except ValueError as e:
        raise ConfigError(f"{where}: {e}") from None


def parse_lattice(d: dict) -> LatticeSpec:
    if "kind" not in d:
        raise ConfigError("lattice.kind: missing")
    mesh = float(d.get("mesh", 1.0))
    try:
        if "window" in d:
            return LatticeSpec(d["kind"], mesh, tuple(float(v) for v in d["window"]))
        if "half_width" in d:
            return LatticeSpec.centered(d["kind"], mesh, float(d["half_width"]),
                                        float(d["half_height"]) if "half_height" in d else None)
    except ValueError as e:
        raise ConfigError(f"lattice: {e}") from None
    raise ConfigError("lattice.window: missing (or give lattice.half_width)")


def load_config(path, overrides=()) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config: file not found: {path}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"config: {e}") from None
    return validate(apply_overrides(raw, overrides))


def validate(raw: dict) -> ExperimentConfig:
    if "seed" not in raw:
        raise ConfigError("seed: missing (seeds are mandatory)")
    seed = raw["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed: must be a nonnegative integer")
    exp = raw.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment: expected one of {EXPERIMENTS}, got {exp!r}")
    spec = parse_lattice(raw.get("lattice", {}))
    params = dict(raw.get("params", {}))
    for key, val in params.items():
        if key.startswith("replicates") or key.endswith("_replicates"):
            if not isinstance(val, int) or val < 1:
                raise ConfigError(f"params.{key}: replicates must be an integer >= 1")
    fields_raw = dict(raw.get("fields", {}))
    cfg = ExperimentConfig(raw, exp, seed, spec, params, fields_raw)
    w = RectRegion.from_corners(*spec.window)
    tol = 1e-9 * spec.mesh
    for name, f in fields_raw.items():
        fld = parse_field(f, f"fields.{name}")
        for k, (rect, _) in enumerate(fld.regions):
            b, wb = rect.bounds, w.bounds
            if b[0] < wb[0] - tol or b[1] < wb[1] - tol or b[2] > wb[2] + tol or b[3] > wb[3] + tol:
                raise ConfigError(f"fields.{name}.regions[{k}].rect: outside the lattice window")
    return cfg

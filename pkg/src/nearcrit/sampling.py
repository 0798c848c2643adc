"""Product-measure sampling, the monotone coupling and hybrid configurations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lattice import Lattice
from .rng import uniforms


@dataclass(frozen=True)
class ProbabilityField:
    """Per-tile blue probability ``clamp(p_crit + iota(t) * speed, 0, 1)``.

    ``iota`` is ``default`` except inside the listed rectangles; later
    regions override earlier ones. An explicit per-tile array can be given via
    :meth:`from_array` (used for hybrid laws and tests).
    """

    p_crit: float = 0.5
    speed: float = 0.0
    default: float = 0.0
    regions: tuple = ()  # ((RectRegion, value), ...)
    n0: float = float("inf")
    iota_array: np.ndarray | None = field(default=None, compare=False, repr=False)
    p_array: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not 0 < self.p_crit < 1:
            raise ValueError("p_crit must lie in (0, 1)")
        if self.speed < 0:
            raise ValueError("speed must be nonnegative")
        vals = [self.default] + [v for _, v in self.regions]
        if self.iota_array is not None:
            vals.extend([float(np.max(self.iota_array)), float(np.min(self.iota_array))])
        if any(abs(v) > self.n0 * (1 + 1e-12) for v in vals):
            raise ValueError(f"|iota| exceeds N0={self.n0}")

    @classmethod
    def critical(cls, p_crit=0.5):
        return cls(p_crit=p_crit)

    @classmethod
    def uniform_p(cls, p):
        """Constant-probability field (``iota = 1``, speed = p - 1/2 shifted)."""
        if not 0 <= p <= 1:
            raise ValueError("p must lie in [0, 1]")
        return cls(p_crit=0.5, speed=abs(p - 0.5), default=1.0 if p >= 0.5 else -1.0)

    @classmethod
    def from_array(cls, iota, p_crit=0.5, speed=1.0, n0=float("inf")):
        iota = np.asarray(iota, dtype=float)
        return cls(p_crit=p_crit, speed=speed, n0=n0, iota_array=iota)

    @classmethod
    def explicit(cls, p):
        """Per-tile probabilities given directly (hybrid laws, oracle fixtures)."""
        p = np.asarray(p, dtype=float)
        if np.any((p < 0) | (p > 1)):
            raise ValueError("probabilities must lie in [0, 1]")
        return cls(p_array=p)

    def iota(self, lat: Lattice) -> np.ndarray:
        if self.iota_array is not None:
            if self.iota_array.shape != (lat.tile_count,):
                raise ValueError("iota array does not match the lattice")
            return self.iota_array.copy()
        out = np.full(lat.tile_count, float(self.default))
        for rect, value in self.regions:
            out[rect.contains(lat.positions, lat.tol)] = value
        return out

    def probabilities(self, lat: Lattice) -> np.ndarray:
        if self.p_array is not None:
            if self.p_array.shape != (lat.tile_count,):
                raise ValueError("probability array does not match the lattice")
            return self.p_array.copy()
        return np.clip(self.p_crit + self.iota(lat) * self.speed, 0.0, 1.0)

    def window_ok(self):
        """Strict 0 < p_crit -/+ N0*speed < 1 (no clamping anywhere in the window)."""
        lo = self.p_crit - self.n0 * self.speed
        hi = self.p_crit + self.n0 * self.speed
        return 0 < lo < hi < 1


@dataclass(frozen=True, eq=False)
class Configuration:
    """Immutable blue/yellow colouring, bit-packed (1 = blue)."""

    bits: np.ndarray
    tile_count: int
    lattice: Lattice = field(repr=False)
    provenance: tuple = ()

    @classmethod
    def from_blue(cls, lat: Lattice, blue, provenance=()):
        blue = np.asarray(blue, dtype=bool)
        if blue.shape != (lat.tile_count,):
            raise ValueError("colour vector does not match the lattice")
        bits = np.packbits(blue)
        bits.setflags(write=False)
        return cls(bits, lat.tile_count, lat, tuple(provenance))

    @property
    def blue(self) -> np.ndarray:
        return np.unpackbits(self.bits, count=self.tile_count).astype(bool)

    def colors(self) -> np.ndarray:
        """uint8 colour per tile (``BLUE`` = 1, ``YELLOW`` = 0)."""
        return np.unpackbits(self.bits, count=self.tile_count)

    def with_colors(self, tiles, blue: bool) -> "Configuration":
        b = self.blue
        b[np.asarray(tiles, dtype=np.int64)] = blue
        return Configuration.from_blue(self.lattice, b, self.provenance)

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return self.tile_count == other.tile_count and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash((self.tile_count, self.bits.tobytes()))

    def to_rle(self) -> str:
        """Run-length encoding like ``"B3Y2B1"``."""
        b = self.blue
        if b.size == 0:
            return ""
        edges = np.flatnonzero(np.diff(b.astype(np.int8))) + 1
        starts = np.concatenate([[0], edges])
        ends = np.concatenate([edges, [b.size]])
        return "".join(f"{'B' if b[s] else 'Y'}{e - s}" for s, e in zip(starts, ends))

    @classmethod
    def from_rle(cls, lat: Lattice, text: str) -> "Configuration":
        import re

        runs = re.findall(r"([BY])(\d+)", text)
        blue = np.concatenate([np.full(int(n), c == "B") for c, n in runs]) if runs else np.zeros(0, bool)
        return cls.from_blue(lat, blue)


def sample_configuration(lat: Lattice, fld: ProbabilityField, seed: int, stream: int, replicate: int = 0):
    p = fld.probabilities(lat)
    u = uniforms(seed, stream, replicate, np.arange(lat.tile_count))
    return Configuration.from_blue(lat, u < p, (seed, stream, replicate))


@dataclass(frozen=True, eq=False)
class CouplingSample:
    """Monotone pair ``omega_i(t) = [u(t) < p_i(t)]`` from one set of uniforms."""

    omega1: Configuration
    omega2: Configuration
    seed: int
    stream: int
    replicate: int

    def uniforms(self):
        lat = self.omega1.lattice
        return uniforms(self.seed, self.stream, self.replicate, np.arange(lat.tile_count))


def sample_coupled_pair(lat: Lattice, field_mu: ProbabilityField, field_lambda: ProbabilityField,
                        seed: int, stream: int, replicate: int = 0, lat_lambda: Lattice | None = None):
    if lat_lambda is not None and lat_lambda is not lat:
        raise ValueError("coupled fields must live on the same lattice")
    u = uniforms(seed, stream, replicate, np.arange(lat.tile_count))
    prov = (seed, stream, replicate)
    w1 = Configuration.from_blue(lat, u < field_mu.probabilities(lat), prov)
    w2 = Configuration.from_blue(lat, u < field_lambda.probabilities(lat), prov)
    return CouplingSample(w1, w2, seed, stream, replicate)


@dataclass(frozen=True)
class SwitchSchedule:
    """Ordered, duplicate-free tiles ``t_1..t_K`` switched one by one."""

    tiles: tuple

    def __post_init__(self):
        t = tuple(int(v) for v in self.tiles)
        if len(set(t)) != len(t):
            raise ValueError("switch schedule contains duplicate tiles")
        object.__setattr__(self, "tiles", t)

    def __len__(self):
        return len(self.tiles)


def hybrid_configuration(c: CouplingSample, sched: SwitchSchedule, k: int) -> Configuration:
    """Colour ``t_1..t_k`` by ``omega2`` and every other tile by ``omega1``."""
    if not 0 <= k <= len(sched):
        raise ValueError(f"hybrid index {k} outside [0, {len(sched)}]")
    b = c.omega1.blue
    if k:
        idx = np.asarray(sched.tiles[:k], dtype=np.int64)
        b[idx] = c.omega2.blue[idx]
    return Configuration.from_blue(c.omega1.lattice, b, c.omega1.provenance + (("hybrid", k),))


def switch_probability(field_mu: ProbabilityField, field_lambda: ProbabilityField, lat: Lattice, t) -> float:
    """Exact probability that tile ``t`` is yellow under ``mu`` and blue under ``lambda``."""
    pm = field_mu.probabilities(lat)[t]
    pl = field_lambda.probabilities(lat)[t]
    if np.any(pl < pm):
        raise ValueError("non-monotone pair")
    return pl - pm

"""Finite percolation lattices at mesh ``eta``.

Two geometries are supported:

* ``triangular-site``: random tiles are the hexagonal cells of the sites of a
  triangular lattice. Site spacing is ``eta * sqrt(3) / 2`` so that each cell
  (circumdiameter ``2 * spacing / sqrt(3)``) has diameter exactly ``eta``.
* ``square-bond``: random tiles are the bonds of the square lattice with
  vertex spacing ``eta``. Blue bonds connect through shared vertices, yellow
  bonds through shared faces (dual connectivity).

Every tile has a reference point (site centre or bond midpoint) and, per
colour, six geometric neighbour slots. Slots pointing outside the window keep
their position but carry id ``-1``; region queries use those virtual
positions to decide which side of a region a tile touches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

LatticeKind = Literal["triangular-site", "square-bond"]
KINDS = ("triangular-site", "square-bond")

YELLOW = 0
BLUE = 1

_SQRT3_2 = math.sqrt(3.0) / 2.0


def _tol(mesh):
    return 1e-9 * mesh


@dataclass(frozen=True)
class RectRegion:
    """Axis-aligned rectangle given by centre, width and height."""

    center: tuple[float, float]
    width: float
    height: float

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError("rectangle needs positive width and height")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @classmethod
    def square(cls, center, side):
        return cls(center, side, side)

    @classmethod
    def from_corners(cls, x0, y0, x1, y1):
        return cls(((x0 + x1) / 2, (y0 + y1) / 2), x1 - x0, y1 - y0)

    @property
    def bounds(self):
        cx, cy = self.center
        return (cx - self.width / 2, cy - self.height / 2, cx + self.width / 2, cy + self.height / 2)

    def contains(self, pts, tol=0.0):
        x0, y0, x1, y1 = self.bounds
        pts = np.asarray(pts, dtype=float)
        return (
            (pts[..., 0] >= x0 - tol)
            & (pts[..., 0] <= x1 + tol)
            & (pts[..., 1] >= y0 - tol)
            & (pts[..., 1] <= y1 + tol)
        )

    def intersects(self, other: "RectRegion") -> bool:
        a = self.bounds
        b = other.bounds
        return a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3]


@dataclass(frozen=True)
class AnnulusRegion:
    """Closed annulus ``r <= |x - center| <= R``."""

    center: tuple[float, float]
    r: float
    R: float

    def __post_init__(self):
        if not (0 < self.r < self.R):
            raise ValueError(f"annulus needs 0 < r < R, got r={self.r}, R={self.R}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))


@dataclass(frozen=True)
class LatticeSpec:
    kind: LatticeKind
    mesh: float
    window: tuple[float, float, float, float]  # x0, y0, x1, y1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown lattice kind {self.kind!r}; expected one of {KINDS}")
        if not self.mesh > 0:
            raise ValueError("mesh must be positive")
        x0, y0, x1, y1 = (float(v) for v in self.window)
        if not (x1 > x0 and y1 > y0):
            raise ValueError("window needs positive width and height")
        object.__setattr__(self, "window", (x0, y0, x1, y1))

    @classmethod
    def centered(cls, kind, mesh, half_width, half_height=None):
        """Window ``[-hw, hw] x [-hh, hh]`` shifted so a natural centre sits at the origin."""
        hh = half_width if half_height is None else half_height
        if kind == "triangular-site":
            a = mesh * _SQRT3_2
            # rows j even have a site at x0 + i*a; pick x0,y0 on the grid so (0,0) is a site
            nx = math.floor(half_width / a)
            ny = 2 * math.floor(hh / (2 * a * _SQRT3_2))
            return cls(kind, mesh, (-nx * a, -ny * a * _SQRT3_2, half_width, hh))
        nx = math.floor(half_width / mesh)
        ny = math.floor(hh / mesh)
        return cls(kind, mesh, (-nx * mesh, -ny * mesh, half_width, hh))


@dataclass(eq=False)
class Lattice:
    """Immutable tile geometry; build with :func:`build_lattice`."""

    spec: LatticeSpec
    spacing: float
    positions: np.ndarray  # (N, 2) reference points
    nbr: np.ndarray  # (2, N, 6) neighbour tile ids per colour, -1 if outside the window
    nbr_pos: np.ndarray  # (2, N, 6, 2) geometric neighbour reference points
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def kind(self) -> str:
        return self.spec.kind

    @property
    def mesh(self) -> float:
        return self.spec.mesh

    @property
    def window(self):
        return self.spec.window

    @property
    def tile_count(self) -> int:
        return self.positions.shape[0]

    @property
    def tile_diameter(self) -> float:
        return self.spec.mesh

    @property
    def tol(self) -> float:
        return _tol(self.spec.mesh)

    def snap_point(self, z):
        """Nearest symmetric centre: a site (triangular) or a vertex (square-bond)."""
        z = np.asarray(z, dtype=float)
        x0, y0 = self.spec.window[:2]
        if self.kind == "square-bond":
            h = self.mesh
            return (x0 + round((z[0] - x0) / h) * h, y0 + round((z[1] - y0) / h) * h)
        d = np.hypot(self.positions[:, 0] - z[0], self.positions[:, 1] - z[1])
        return tuple(float(v) for v in self.positions[int(np.argmin(d))])

    def contains_rect(self, rect: RectRegion) -> bool:
        x0, y0, x1, y1 = rect.bounds
        w = self.spec.window
        t = self.tol
        return x0 >= w[0] - t and y0 >= w[1] - t and x1 <= w[2] + t and y1 <= w[3] + t

    def contains_disk(self, z, R) -> bool:
        return self.contains_rect(RectRegion(tuple(z), 2 * R, 2 * R))


def _build_triangular(spec: LatticeSpec) -> Lattice:
    x0, y0, x1, y1 = spec.window
    a = spec.mesh * _SQRT3_2
    dy = a * _SQRT3_2
    t = _tol(spec.mesh)
    nrows = math.floor((y1 - y0) / dy + 1e-9) + 1
    counts = []
    for j in range(nrows):
        off = 0.5 * a * (j & 1)
        span = x1 - x0 - off
        counts.append(math.floor(span / a + 1e-9) + 1 if span >= -t else 0)
    counts = np.array(counts, dtype=np.int64)
    starts = np.concatenate([[0], np.cumsum(counts)])
    n = int(starts[-1])
    if n == 0:
        raise ValueError("degenerate window")
    jj = np.repeat(np.arange(nrows), counts)
    ii = np.arange(n) - starts[jj]

    def pos(i, j):
        return np.stack([x0 + (i + 0.5 * (j & 1)) * a, y0 + j * dy], axis=-1)

    def ident(i, j):
        ok = (j >= 0) & (j < nrows)
        jc = np.clip(j, 0, nrows - 1)
        ok &= (i >= 0) & (i < counts[jc])
        return np.where(ok, starts[jc] + i, -1)

    odd = jj & 1
    # neighbour offsets (di, dj); rows above/below shift by the row parity
    offs = [
        (ii + 1, jj),
        (ii - 1 + odd, jj + 1),
        (ii + odd, jj + 1),
        (ii - 1, jj),
        (ii - 1 + odd, jj - 1),
        (ii + odd, jj - 1),
    ]
    # reorder so slots 1,2 go counter-clockwise: (i+1,j) at 0deg, upper-right 60, upper-left 120, ...
    offs = [offs[0], offs[2], offs[1], offs[3], offs[4], offs[5]]
    nb = np.stack([ident(i, j) for i, j in offs], axis=1)
    npos = np.stack([pos(i, j) for i, j in offs], axis=1)
    nbr = np.stack([nb, nb])
    nbr_pos = np.stack([npos, npos])
    return Lattice(spec, a, pos(ii, jj), nbr, nbr_pos)


def _build_square_bond(spec: LatticeSpec) -> Lattice:
    x0, y0, x1, y1 = spec.window
    h = spec.mesh
    nx = math.floor((x1 - x0) / h + 1e-9)
    ny = math.floor((y1 - y0) / h + 1e-9)
    n_h = nx * (ny + 1)
    n_v = (nx + 1) * ny
    if n_h + n_v == 0:
        raise ValueError("degenerate window")

    # horizontal bonds H(i, j), 0 <= i < nx, 0 <= j <= ny, then vertical V(i, j), 0 <= i <= nx, 0 <= j < ny
    def hid(i, j):
        ok = (i >= 0) & (i < nx) & (j >= 0) & (j <= ny)
        return np.where(ok, j * nx + i, -1)

    def vid(i, j):
        ok = (i >= 0) & (i <= nx) & (j >= 0) & (j < ny)
        return np.where(ok, n_h + j * (nx + 1) + i, -1)

    def hpos(i, j):
        return np.stack([x0 + (i + 0.5) * h, y0 + j * h + 0 * i], axis=-1)

    def vpos(i, j):
        return np.stack([x0 + i * h + 0 * j, y0 + (j + 0.5) * h], axis=-1)

    hj, hi = np.divmod(np.arange(n_h), nx) if nx > 0 else (np.zeros(0, int), np.zeros(0, int))
    vj, vi = np.divmod(np.arange(n_v), nx + 1) if ny > 0 else (np.zeros(0, int), np.zeros(0, int))

    # (is_horizontal, i, j) per slot
    blue_h = [(True, hi - 1, hj), (False, hi, hj), (False, hi, hj - 1),
              (True, hi + 1, hj), (False, hi + 1, hj), (False, hi + 1, hj - 1)]
    blue_v = [(False, vi, vj - 1), (True, vi, vj), (True, vi - 1, vj),
              (False, vi, vj + 1), (True, vi, vj + 1), (True, vi - 1, vj + 1)]
    yel_h = [(True, hi, hj + 1), (False, hi, hj), (False, hi + 1, hj),
             (True, hi, hj - 1), (False, hi, hj - 1), (False, hi + 1, hj - 1)]
    yel_v = [(False, vi + 1, vj), (True, vi, vj), (True, vi, vj + 1),
             (False, vi - 1, vj), (True, vi - 1, vj), (True, vi - 1, vj + 1)]

    def slots(spec_list):
        ids = np.stack([hid(i, j) if hz else vid(i, j) for hz, i, j in spec_list], axis=1)
        ps = np.stack([hpos(i, j) if hz else vpos(i, j) for hz, i, j in spec_list], axis=1)
        return ids, ps

    out_ids, out_pos = [], []
    for hs, vs in ((yel_h, yel_v), (blue_h, blue_v)):
        ih, ph = slots(hs)
        iv, pv = slots(vs)
        out_ids.append(np.concatenate([ih.reshape(-1, 6), iv.reshape(-1, 6)]))
        out_pos.append(np.concatenate([ph.reshape(-1, 6, 2), pv.reshape(-1, 6, 2)]))
    positions = np.concatenate([hpos(hi, hj).reshape(-1, 2), vpos(vi, vj).reshape(-1, 2)])
    return Lattice(spec, h, positions, np.stack(out_ids).astype(np.int64), np.stack(out_pos))


def build_lattice(spec: LatticeSpec) -> Lattice:
    if spec.kind == "triangular-site":
        lat = _build_triangular(spec)
    else:
        lat = _build_square_bond(spec)
    lat.nbr = np.ascontiguousarray(lat.nbr, dtype=np.int64)
    lat.positions = np.ascontiguousarray(lat.positions, dtype=np.float64)
    lat.nbr_pos = np.ascontiguousarray(lat.nbr_pos, dtype=np.float64)
    for arr in (lat.positions, lat.nbr, lat.nbr_pos):
        arr.setflags(write=False)
    return lat


def _dist(lat: Lattice, z):
    return np.hypot(lat.positions[:, 0] - z[0], lat.positions[:, 1] - z[1])


def tiles_in_disk(lat: Lattice, z, rho: float) -> np.ndarray:
    """TileIds (ascending) whose reference point is within ``rho`` of ``z``."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    return np.flatnonzero(_dist(lat, z) <= rho + lat.tol)


def tiles_in_rect(lat: Lattice, rect: RectRegion) -> np.ndarray:
    return np.flatnonzero(rect.contains(lat.positions, lat.tol))


def tiles_in_annulus(lat: Lattice, a: AnnulusRegion) -> np.ndarray:
    """Sorted TileIds with reference point in the closed annulus."""
    if not lat.contains_disk(a.center, a.R):
        raise ValueError("region outside lattice")
    d = _dist(lat, a.center)
    return np.flatnonzero((d >= a.r - lat.tol) & (d <= a.R + lat.tol))

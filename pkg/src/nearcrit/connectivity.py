"""Crossing and arm events on configurations.

A tile belongs to a region iff its reference point does. A region tile
*touches* a side when one of its geometric neighbours (under the adjacency of
the tile's colour) lies outside the region on that side; these exterior
neighbours form the boundary band. For rectangles an exterior neighbour
above or below the rectangle counts for the top/bottom side even when it is
also left or right of it, which keeps the four boundary arcs disjoint so that
a blue left-right crossing and a yellow top-bottom crossing exclude each other.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import kernels as K
from .lattice import AnnulusRegion, Lattice, RectRegion, tiles_in_disk
from .sampling import Configuration

Color = Literal["blue", "yellow"]
Direction = Literal["horizontal", "vertical"]

_COLOR = {"blue": 1, "yellow": 0}


@dataclass(frozen=True)
class CrossingQuery:
    rect: RectRegion
    color: Color = "blue"
    direction: Direction = "horizontal"

    def __post_init__(self):
        if self.color not in _COLOR:
            raise ValueError(f"unknown colour {self.color!r}")
        if self.direction not in ("horizontal", "vertical"):
            raise ValueError(f"unknown direction {self.direction!r}")

    @property
    def sides(self):
        return (K.LEFT, K.RIGHT) if self.direction == "horizontal" else (K.BOTTOM, K.TOP)


@dataclass(frozen=True)
class ArmQuery:
    annulus: AnnulusRegion
    pattern: str = "four-alternating"  # or "one-arm-blue", "one-arm-yellow", "five"


@dataclass(eq=False)
class RegionGraph:
    """Tiles of one region in local numbering, with per-colour adjacency and side flags."""

    tiles: np.ndarray  # (M,) global TileIds
    nbr: np.ndarray  # (2, M, 6) local neighbour index or -1
    flags: np.ndarray  # (2, M) side bitmask per colour

    @property
    def size(self):
        return self.tiles.shape[0]

    def local(self, tile):
        hit = np.flatnonzero(self.tiles == tile)
        if hit.size == 0:
            raise ValueError(f"tile {tile} is not in the region")
        return int(hit[0])


def _local_nbr(lat: Lattice, tiles):
    g2l = np.full(lat.tile_count, -1, dtype=np.int64)
    g2l[tiles] = np.arange(tiles.size)
    raw = lat.nbr[:, tiles, :]
    return np.where(raw >= 0, g2l[np.maximum(raw, 0)], -1).astype(np.int64)


def rect_graph(lat: Lattice, rect: RectRegion) -> RegionGraph:
    key = ("rect", rect.center, rect.width, rect.height)
    hit = lat._cache.get(key)
    if hit is not None:
        return hit
    if not lat.contains_rect(rect):
        raise ValueError("region outside lattice")
    tol = lat.tol
    tiles = np.flatnonzero(rect.contains(lat.positions, tol))
    if tiles.size == 0:
        raise ValueError("empty query")
    nbr = _local_nbr(lat, tiles)
    x0, y0, x1, y1 = rect.bounds
    pos = lat.nbr_pos[:, tiles, :, :]
    ext = nbr < 0
    x = pos[..., 0]
    y = pos[..., 1]
    top = ext & (y > y1 + tol)
    bot = ext & (y < y0 - tol)
    side = ext & ~top & ~bot
    left = side & (x < x0 - tol)
    right = side & (x > x1 + tol)
    flags = (
        K.LEFT * left.any(-1) + K.RIGHT * right.any(-1) + K.BOTTOM * bot.any(-1) + K.TOP * top.any(-1)
    ).astype(np.int64)
    g = RegionGraph(tiles.astype(np.int64), np.ascontiguousarray(nbr), np.ascontiguousarray(flags))
    lat._cache[key] = g
    return g


@dataclass(eq=False)
class AnnulusSweep:
    """Annulus tiles sorted by distance, ready for the outward sweep kernel.

    ``radii`` are the evaluation checkpoints (requested outer radii plus
    intermediate ones used for early termination); ``report[j]`` is the
    output column of checkpoint ``j`` or -1.
    """

    center: tuple
    r: float
    outer_radii: tuple
    tiles: np.ndarray
    dist: np.ndarray
    nbr: np.ndarray
    inner: np.ndarray
    maxnbr: np.ndarray
    inner_order: np.ndarray
    counts: np.ndarray
    outer_ptr: np.ndarray
    outer_idx: np.ndarray
    radii: np.ndarray
    report: np.ndarray
    tol: float

    def run(self, p, seed, stream, rep0, nrep, events):
        out = np.zeros((nrep, len(self.outer_radii)), dtype=np.int64)
        K.sweep_kernel(self.tiles, self.nbr, self.inner, self.maxnbr, self.inner_order, self.counts,
                       self.outer_ptr, self.outer_idx, self.radii, self.report, p, int(seed), int(stream),
                       int(rep0), int(nrep), int(events), self.tol, out)
        return out

    def evaluate(self, colors_local, events=15):
        """Event bitmasks for one explicit colouring (local order)."""
        out = np.zeros((1, len(self.outer_radii)), dtype=np.int64)
        K.sweep_colors(np.ascontiguousarray(colors_local, dtype=np.uint8), self.tiles, self.nbr,
                              self.inner, self.maxnbr, self.inner_order, self.counts, self.outer_ptr,
                              self.outer_idx, self.radii, self.report, int(events), self.tol, out[0])
        return out[0]


def annulus_sweep(lat: Lattice, center, r: float, outer_radii, step: float | None = None) -> AnnulusSweep:
    """Precompute the sweep for annuli ``(r, R)`` with ``R`` in ``outer_radii``."""
    outer_radii = tuple(sorted(float(R) for R in outer_radii))
    if not outer_radii or outer_radii[0] <= r or r <= 0:
        raise ValueError("annulus needs 0 < r < R")
    center = (float(center[0]), float(center[1]))
    key = ("sweep", center, float(r), outer_radii, step)
    hit = lat._cache.get(key)
    if hit is not None:
        return hit
    rmax = outer_radii[-1]
    if not lat.contains_disk(center, rmax):
        raise ValueError("region outside lattice")
    tol = lat.tol
    d_all = np.hypot(lat.positions[:, 0] - center[0], lat.positions[:, 1] - center[1])
    sel = np.flatnonzero((d_all >= r - tol) & (d_all <= rmax + tol))
    if sel.size == 0:
        raise ValueError("empty query")
    order = np.argsort(d_all[sel], kind="stable")
    tiles = sel[order].astype(np.int64)
    dist = d_all[tiles]
    nbr = _local_nbr(lat, tiles)
    npos = lat.nbr_pos[:, tiles, :, :]
    nd = np.hypot(npos[..., 0] - center[0], npos[..., 1] - center[1])
    inner = np.ascontiguousarray((nd < r - tol).any(-1))
    if not inner.any():
        raise ValueError("empty query: no annulus tile borders the inner disk")
    maxnbr = np.ascontiguousarray(nd.max(-1))
    cand = np.flatnonzero(inner.any(0))
    ang = np.arctan2(lat.positions[tiles[cand], 1] - center[1], lat.positions[tiles[cand], 0] - center[0])
    inner_order = cand[np.lexsort((tiles[cand], ang))].astype(np.int64)

    step = lat.spacing if step is None else step
    extra = np.arange(r + step, rmax, step)
    radii = np.unique(np.concatenate([extra, outer_radii]))
    report = np.full(radii.size, -1, dtype=np.int64)
    for k, R in enumerate(outer_radii):
        report[int(np.argmin(np.abs(radii - R)))] = k
    counts = np.searchsorted(dist, radii + tol, side="right").astype(np.int64)
    mx = maxnbr.max(0)
    lists = []
    for j, R in enumerate(radii):
        members = np.flatnonzero((dist <= R + tol) & (mx > R + tol))
        lists.append(members)
    outer_ptr = np.concatenate([[0], np.cumsum([len(x) for x in lists])]).astype(np.int64)
    outer_idx = np.concatenate(lists).astype(np.int64) if lists else np.zeros(0, np.int64)
    sw = AnnulusSweep(center, float(r), outer_radii, tiles, dist, nbr, inner, maxnbr, inner_order, counts,
                      outer_ptr, outer_idx, radii.astype(np.float64), report, tol)
    lat._cache[key] = sw
    return sw


# ------------------------------------------------------------------ queries


def _colors_for(cfg: Configuration, tiles):
    return np.ascontiguousarray(cfg.colors()[tiles], dtype=np.uint8)


def has_crossing(cfg: Configuration, q: CrossingQuery) -> bool:
    g = rect_graph(cfg.lattice, q.rect)
    out = np.zeros(4, dtype=np.bool_)
    K.rect_eval(_colors_for(cfg, g.tiles), g.nbr, g.flags, out)
    idx = {("blue", "horizontal"): 0, ("blue", "vertical"): 1,
           ("yellow", "horizontal"): 2, ("yellow", "vertical"): 3}[(q.color, q.direction)]
    return bool(out[idx])


def _annulus_events(cfg: Configuration, a: AnnulusRegion, events: int) -> int:
    sw = annulus_sweep(cfg.lattice, a.center, a.r, (a.R,))
    if sw.counts[-1] == 0:
        raise ValueError("empty query")
    return int(sw.evaluate(_colors_for(cfg, sw.tiles), events)[0])


def has_one_arm(cfg: Configuration, a: AnnulusRegion, color: Color = "blue") -> bool:
    ev = K.EV_ONE_BLUE if color == "blue" else K.EV_ONE_YELLOW
    return bool(_annulus_events(cfg, a, ev) & ev)


def has_four_arm_alternating(cfg: Configuration, a: AnnulusRegion) -> bool:
    return bool(_annulus_events(cfg, a, K.EV_FOUR) & K.EV_FOUR)


def has_five_arm(cfg: Configuration, a: AnnulusRegion) -> bool:
    """Four alternating arms plus one further blue arm, all tile-disjoint."""
    return bool(_annulus_events(cfg, a, K.EV_FIVE) & K.EV_FIVE)


def central_tile_check(lat: Lattice, t: int, Q: RectRegion):
    z = np.asarray(Q.center)
    if np.hypot(*(lat.positions[t] - z)) > Q.width / 4 + lat.tol or not Q.contains(lat.positions[t], lat.tol):
        raise ValueError("tile not central")


def four_sides_flags(cfg: Configuration, t: int, Q: RectRegion):
    """(blue arms from t to left and right, yellow arms from t to bottom and top, blue crossing avoiding t)."""
    lat = cfg.lattice
    central_tile_check(lat, t, Q)
    g = rect_graph(lat, Q)
    lt = g.local(t)
    m = g.size
    parent = np.empty(m, np.int64)
    size = np.empty(m, np.int64)
    mark = np.zeros(m, np.int64)
    rootflags = np.zeros(m, np.int64)
    b, y, w = K.four_sides(_colors_for(cfg, g.tiles), g.nbr, g.flags, m, lt, parent, size, mark, 1, rootflags)
    return bool(b), bool(y), bool(w)


def has_four_arm_to_sides(cfg: Configuration, t: int, Q: RectRegion) -> bool:
    """Four alternating arms from tile ``t`` to the left, bottom, right and top sides of ``Q``.

    The colour of ``t`` itself is irrelevant: blue arms are traced with ``t``
    forced blue and yellow arms with ``t`` forced yellow.
    """
    b, y, _ = four_sides_flags(cfg, t, Q)
    return b and y


def is_pivotal(cfg: Configuration, t: int, Q: RectRegion) -> bool:
    """Direct recomputation: crossing with ``t`` blue and none with ``t`` yellow."""
    q = CrossingQuery(Q)
    return has_crossing(cfg.with_colors([t], True), q) and not has_crossing(cfg.with_colors([t], False), q)


def central_tiles(lat: Lattice, Q: RectRegion) -> np.ndarray:
    """Tiles of ``Q`` within ``side/4`` of its centre, ascending TileId."""
    t = tiles_in_disk(lat, Q.center, Q.width / 4)
    return t[Q.contains(lat.positions[t], lat.tol)]

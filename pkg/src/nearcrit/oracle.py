"""Exact event probabilities on tiny instances by exhaustive enumeration.

Only the tiles an event depends on are enumerated (at most ``MAX_TILES``),
and the indicator of every colouring is computed with the same compiled
connectivity code used by the Monte Carlo estimators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import kernels as K
from .connectivity import CrossingQuery, annulus_sweep, central_tile_check, rect_graph
from .lattice import AnnulusRegion, Lattice, RectRegion
from .sampling import ProbabilityField

MAX_TILES = 24
_CHUNK = 1 << 15


# ------------------------------------------------------------------ events


class Event:
    def tiles(self, lat: Lattice) -> np.ndarray:
        raise NotImplementedError

    def indicator(self, lat: Lattice, states: np.ndarray) -> np.ndarray:
        """Boolean per row of ``states`` (columns ordered like ``self.tiles(lat)``)."""
        raise NotImplementedError


@dataclass(frozen=True)
class Crossing(Event):
    query: CrossingQuery

    def tiles(self, lat):
        return rect_graph(lat, self.query.rect).tiles

    def indicator(self, lat, states):
        g = rect_graph(lat, self.query.rect)
        a, b = self.query.sides
        out = np.zeros(states.shape[0], np.bool_)
        K.rect_batch_eval(states, g.nbr, g.flags, 1 if self.query.color == "blue" else 0, a, b, out)
        return out


_ARM_BITS = {"one-arm-blue": K.EV_ONE_BLUE, "one-arm-yellow": K.EV_ONE_YELLOW,
             "four-alternating": K.EV_FOUR, "five": K.EV_FIVE}


@dataclass(frozen=True)
class Arm(Event):
    annulus: AnnulusRegion
    pattern: str = "four-alternating"

    def __post_init__(self):
        if self.pattern not in _ARM_BITS:
            raise ValueError(f"unknown arm pattern {self.pattern!r}")

    def _sweep(self, lat):
        a = self.annulus
        return annulus_sweep(lat, a.center, a.r, (a.R,))

    def tiles(self, lat):
        sw = self._sweep(lat)
        return np.sort(sw.tiles[: sw.counts[-1]])

    def indicator(self, lat, states):
        sw = self._sweep(lat)
        m = int(sw.counts[-1])
        # states columns follow ascending TileId; the sweep wants distance order
        order = np.searchsorted(np.sort(sw.tiles[:m]), sw.tiles[:m])
        local = np.ascontiguousarray(states[:, order])
        if local.shape[1] < sw.tiles.size:
            pad = np.zeros((local.shape[0], sw.tiles.size - m), np.uint8)
            local = np.ascontiguousarray(np.hstack([local, pad]))
        bit = _ARM_BITS[self.pattern]
        out = np.zeros((states.shape[0], 1), np.int64)
        K.sweep_batch(local, sw.tiles, sw.nbr, sw.inner, sw.maxnbr, sw.inner_order, sw.counts, sw.outer_ptr,
                      sw.outer_idx, sw.radii, sw.report, bit, sw.tol, out)
        return (out[:, 0] & bit) != 0


@dataclass(frozen=True)
class FourSides(Event):
    """Four alternating arms from ``tile`` to the sides of ``rect``.

    ``central=False`` lifts the restriction to central tiles (full switch schedules).
    """

    tile: int
    rect: RectRegion
    central: bool = True

    def tiles(self, lat):
        if self.central:
            central_tile_check(lat, self.tile, self.rect)
        return rect_graph(lat, self.rect).tiles

    def indicator(self, lat, states):
        g = rect_graph(lat, self.rect)
        out = np.zeros(states.shape[0], np.bool_)
        K.four_sides_batch(states, g.nbr, g.flags, g.local(self.tile), out)
        return out


@dataclass(frozen=True)
class TileBlue(Event):
    tile: int

    def tiles(self, lat):
        return np.array([self.tile], dtype=np.int64)

    def indicator(self, lat, states):
        return states[:, 0] == 1


@dataclass(frozen=True)
class AllOf(Event):
    events: tuple

    def tiles(self, lat):
        return np.unique(np.concatenate([e.tiles(lat) for e in self.events]))

    def indicator(self, lat, states):
        u = self.tiles(lat)
        out = np.ones(states.shape[0], np.bool_)
        for e in self.events:
            cols = np.searchsorted(u, e.tiles(lat))
            out &= e.indicator(lat, np.ascontiguousarray(states[:, cols]))
        return out


@dataclass(frozen=True)
class Not(Event):
    event: Event

    def tiles(self, lat):
        return self.event.tiles(lat)

    def indicator(self, lat, states):
        return ~self.event.indicator(lat, states)


@dataclass(frozen=True)
class OracleQuery:
    lattice: Lattice
    field: ProbabilityField
    event: Event


# ------------------------------------------------------------- enumeration


def _states(lo, hi, m):
    idx = np.arange(lo, hi, dtype=np.int64)
    return np.ascontiguousarray(((idx[:, None] >> np.arange(m)) & 1).astype(np.uint8))


def event_table(lat: Lattice, event: Event):
    """(tiles, indicator over all ``2**m`` colourings; bit ``i`` of the index is ``tiles[i]``)."""
    tiles = np.asarray(event.tiles(lat), dtype=np.int64)
    m = tiles.size
    if m > MAX_TILES:
        raise ValueError(f"too many tiles: event depends on {m} > {MAX_TILES}")
    n = 1 << m
    ind = np.empty(n, np.bool_)
    for lo in range(0, n, _CHUNK):
        hi = min(n, lo + _CHUNK)
        ind[lo:hi] = event.indicator(lat, _states(lo, hi, m))
    return tiles, ind


def _weights(p):
    w = np.ones(1)
    for q in p:
        w = np.concatenate([w * (1.0 - q), w * q])
    return w


def exact_probability(q: OracleQuery, exact: bool = False):
    """Probability of ``q.event`` under the product law of ``q.field``.

    With ``exact=True`` the result is a :class:`fractions.Fraction` built from
    the binary values of the tile probabilities.
    """
    tiles, ind = event_table(q.lattice, q.event)
    p = q.field.probabilities(q.lattice)[tiles]
    if exact:
        return _exact_sum(ind, p)
    return math.fsum(_weights(p)[ind])


def _exact_sum(ind, p):
    vals, group = np.unique(p, return_inverse=True)
    m = p.size
    idx = np.flatnonzero(ind)
    bits = (idx[:, None] >> np.arange(m)) & 1
    if m:
        counts = np.stack([bits[:, group == g].sum(1) for g in range(vals.size)], axis=1)
    else:
        counts = np.zeros((idx.size, 0), int)
    sizes = np.bincount(group, minlength=vals.size)
    keys, mult = np.unique(counts, axis=0, return_counts=True) if idx.size else (np.zeros((0, vals.size), int), [])
    fr = [Fraction(float(v)) for v in vals]
    total = Fraction(0)
    for key, c in zip(keys, mult):
        term = Fraction(int(c))
        for g, k in enumerate(key):
            term *= fr[g] ** int(k) * (1 - fr[g]) ** int(sizes[g] - k)
        total += term
    return total


@dataclass(frozen=True)
class ExactGap:
    gap: float  # P^lambda[E] - P^mu[E]
    forward: float  # coupled P[E fails for omega1, holds for omega2]
    reverse: float  # coupled P[E holds for omega1, fails for omega2]


def _subset_transform(a, p_low, d):
    """``out[s2] = sum_{s1 subset s2} a[s1] prod_{s1} p_low prod_{s2 minus s1} d``."""
    a = a.astype(float).copy()
    for t in range(p_low.size):
        v = a.reshape(-1, 2, 1 << t)
        v[:, 1, :] = v[:, 1, :] * p_low[t] + v[:, 0, :] * d[t]
    return a


def exact_gap(lat: Lattice, field_mu: ProbabilityField, field_lambda: ProbabilityField, event: Event) -> ExactGap:
    """Exact gap both as a difference of marginals and through the monotone coupling.

    The coupled probabilities integrate the shared per-tile uniform over the
    pieces ``[0, p_lo)``, ``[p_lo, p_hi)``, ``[p_hi, 1)``.
    """
    tiles, ind = event_table(lat, event)
    pm = field_mu.probabilities(lat)[tiles]
    pl = field_lambda.probabilities(lat)[tiles]
    gap = math.fsum(_weights(pl)[ind]) - math.fsum(_weights(pm)[ind])
    if np.any(pl < pm):
        raise ValueError("non-monotone pair")
    d = pl - pm
    # prod over tiles outside s2 of (1 - p_hi)
    outside = np.ones(1)
    for q in pl:
        outside = np.concatenate([outside * (1.0 - q), outside])
    fwd = math.fsum(_subset_transform(~ind, pm, d)[ind] * outside[ind])
    rev = math.fsum(_subset_transform(ind, pm, d)[~ind] * outside[~ind])
    if abs(gap - (fwd - rev)) > 1e-9:
        raise AssertionError(f"coupling identity failed: {gap} vs {fwd - rev}")
    return ExactGap(gap, fwd, rev)


def exact_pivotal_sum(lat: Lattice, field_mu: ProbabilityField, field_lambda: ProbabilityField,
                      Q: RectRegion, schedule) -> float:
    """Exact sum over ``k`` of P[A4'(t_k)] under the hybrid law times the switch probability."""
    pm = field_mu.probabilities(lat)
    pl = field_lambda.probabilities(lat)
    total = []
    for k, t in enumerate(schedule):
        hyb = pm.copy()
        hyb[list(schedule[:k])] = pl[list(schedule[:k])]
        fld = ProbabilityField.explicit(hyb)
        pa = exact_probability(OracleQuery(lat, fld, FourSides(int(t), Q, central=False)))
        total.append(pa * (pl[t] - pm[t]))
    return math.fsum(total)

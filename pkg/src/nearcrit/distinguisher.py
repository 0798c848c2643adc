"""Grid-of-squares test separating two nearcritical product laws.

Each square of side ``1/n`` contributes the indicator of its horizontal blue
crossing; ``Z_n`` sums these indicators centred at their means under the null
law ``mu``. Disjoint squares (separated by at least one tile spacing) share no
tiles, so the indicators are independent under any product law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels as K
from .connectivity import central_tiles, rect_graph
from .lattice import Lattice, RectRegion
from .parallel import concat_replicates, sum_replicates
from .sampling import Configuration

B_INDICATOR = 1.0


@dataclass(frozen=True)
class SquareGrid:
    domain: RectRegion
    n: int
    a: float
    side: float
    buffer: float
    squares: tuple

    @property
    def K(self):
        return len(self.squares)


def default_a(D: RectRegion) -> float:
    return D.width * D.height / 2


def build_square_grid(D: RectRegion, n: int, a: float | None = None, buffer: float = 0.0) -> SquareGrid:
    """Row-major packing of ``ceil(a n^2)`` squares of side ``1/n`` from the lower-left of ``D``."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    a = default_a(D) if a is None else float(a)
    if not a > 0:
        raise ValueError("a must be positive")
    side = 1.0 / n
    pitch = side + buffer
    eps = 1e-12 * max(D.width, D.height)
    cols = int(math.floor((D.width + buffer + eps) / pitch))
    rows = int(math.floor((D.height + buffer + eps) / pitch))
    cap = cols * rows
    k = math.ceil(a * n * n - 1e-9)
    if k > cap:
        raise ValueError(f"grid infeasible: at most {cap} squares fit; max feasible a = {cap / n**2:g}")
    x0, y0, _, _ = D.bounds
    sq = []
    for i in range(k):
        rr, cc = divmod(i, cols)
        cx = x0 + cc * pitch + side / 2
        cy = y0 + rr * pitch + side / 2
        sq.append(RectRegion((cx, cy), side, side))
    return SquareGrid(D, int(n), a, side, float(buffer), tuple(sq))


@dataclass(eq=False)
class GridGraph:
    """Concatenated region graphs of all grid squares (for the multi-region kernels)."""

    tiles: np.ndarray
    nbr: np.ndarray
    flags: np.ndarray
    ptr: np.ndarray


def grid_graph(lat: Lattice, grid: SquareGrid) -> GridGraph:
    gs = [rect_graph(lat, q) for q in grid.squares]
    tiles = np.concatenate([g.tiles for g in gs])
    if np.unique(tiles).size != tiles.size:
        raise ValueError("grid squares share tiles; increase the buffer")
    ptr = np.concatenate([[0], np.cumsum([g.size for g in gs])]).astype(np.int64)
    nbr = np.ascontiguousarray(np.concatenate([g.nbr for g in gs], axis=1))
    flags = np.ascontiguousarray(np.concatenate([g.flags for g in gs], axis=1))
    return GridGraph(tiles, nbr, flags, ptr)


# ------------------------------------------------------------------- gaps


def _check_monotone(pm, pl):
    if np.any(pl < pm):
        raise ValueError("non-monotone pair")


@dataclass(frozen=True)
class GapReport:
    square: RectRegion
    direct: float
    direct_se: float
    coupled: float
    coupled_se: float
    reverse_events: int  # {omega1 crosses, omega2 does not}; zero by monotonicity
    coupling_violations: int  # samples with a tile blue under omega1 and yellow under omega2
    replicates: int
    pivotal: float = math.nan
    pivotal_se: float = math.nan
    lower_bound: float = math.nan


def estimate_crossing_gap(lat, field_mu, field_lambda, Q, replicates, seed, stream=0) -> GapReport:
    """Gap of the horizontal blue crossing of ``Q``, estimated directly and through the coupling."""
    g = rect_graph(lat, Q)
    pm = np.ascontiguousarray(field_mu.probabilities(lat)[g.tiles])
    pl = np.ascontiguousarray(field_lambda.probabilities(lat)[g.tiles])
    _check_monotone(pm, pl)

    def indep(p, st):
        def block(a, n):
            out = np.zeros((n, 4), np.bool_)
            K.rect_counts(g.tiles, g.nbr, g.flags, p, seed, st, a, n, out)
            return out[:, 0].sum(keepdims=True).astype(np.int64)
        return int(sum_replicates(block, replicates)[0])

    kl = indep(pl, 3 * stream)
    km = indep(pm, 3 * stream + 1)
    n = replicates
    direct = (kl - km) / n
    dse = math.sqrt((kl / n) * (1 - kl / n) / n + (km / n) * (1 - km / n) / n)

    def coupled(a, m):
        out = np.zeros((m, 3), np.int64)
        K.rect_coupled_counts(g.tiles, g.nbr, g.flags, pm, pl, seed, 3 * stream + 2, a, m, 1, K.LEFT, K.RIGHT, out)
        c1 = out[:, 0] != 0
        c2 = out[:, 1] != 0
        return np.array([(c2 & ~c1).sum(), (c1 & ~c2).sum(), (out[:, 2] > 0).sum()], np.int64)

    fwd, rev, bad = (int(v) for v in sum_replicates(coupled, replicates))
    est = fwd / n
    return GapReport(Q, direct, dse, est, math.sqrt(est * (1 - est) / n), rev, bad, n)


@dataclass(frozen=True)
class PivotalEstimate:
    value: float
    std_error: float
    replicates: int
    schedule: tuple
    hybrid_gap: float  # frequency of {omega1 no crossing, hybrid_K crossing}
    hybrid_gap_se: float
    max_transitions: int
    transition_mismatches: int  # samples where #transitions != #(A4' and Sw) or != gap indicator


def estimate_pivotal_decomposition(lat, field_mu, field_lambda, Q, replicates, seed, stream=0,
                                   schedule=None) -> PivotalEstimate:
    """Sum over the schedule of ``P[A4'(t_k)]`` under the hybrid law times the switch probability.

    ``schedule`` defaults to the central tiles of ``Q`` (within ``side/4`` of
    the centre) in ascending TileId; pass ``"all"`` for every tile of ``Q``.
    """
    g = rect_graph(lat, Q)
    if schedule is None:
        sched_t = central_tiles(lat, Q)
    elif isinstance(schedule, str) and schedule == "all":
        sched_t = g.tiles
    else:
        sched_t = np.asarray(schedule, dtype=np.int64)
    sched = np.array([g.local(int(t)) for t in sched_t], np.int64)
    if np.unique(sched).size != sched.size:
        raise ValueError("switch schedule contains duplicate tiles")
    pm = np.ascontiguousarray(field_mu.probabilities(lat)[g.tiles])
    pl = np.ascontiguousarray(field_lambda.probabilities(lat)[g.tiles])
    _check_monotone(pm, pl)
    # outside the schedule both coordinates use omega1's law
    pl_h = pm.copy()
    pl_h[sched] = pl[sched]
    w = np.ascontiguousarray(pl_h[sched] - pm[sched])

    def block(a, n):
        hits = np.zeros(sched.size, np.int64)
        per = np.zeros((n, 4), np.int64)
        contrib = np.zeros(n)
        K.pivotal_counts(g.tiles, g.nbr, g.flags, sched, pm, pl_h, seed, stream, a, n, hits, per, w, contrib)
        return np.column_stack([per.astype(float), contrib])

    rows = concat_replicates(block, replicates)
    first, last, trans, hits = (rows[:, i] for i in range(4))
    contrib = rows[:, 4]
    expected = (last > 0) & (first == 0)
    mism = int(np.sum((trans != hits) | (trans != expected.astype(float))))
    n = replicates
    val = float(contrib.mean())
    se = float(contrib.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    hg = float(expected.mean())
    return PivotalEstimate(val, se, n, tuple(int(t) for t in sched_t), hg, math.sqrt(hg * (1 - hg) / n),
                           int(trans.max()) if n else 0, mism)


@dataclass(frozen=True)
class GapCurveRow:
    delta: float
    gap: GapReport
    alpha4_delta: float
    alpha4_R0: float
    rhs: float
    holds: bool


def gap_lower_bound_curve(lat, field_mu, field_lambda, sigma, deltas, alpha4, constants, replicates, seed,
                          stream=0, center=(0.0, 0.0), R0=1.0):
    """Tabulate the gap of side-``delta`` squares against ``sigma c1 c3 c4 delta^2 a4(eta,delta)/a4(eta,R0)``.

    ``alpha4`` maps a radius (in the lattice's units) to the critical
    estimate of ``alpha4(eta, radius)``. Returns ``(rows, gap/delta strictly
    increasing as delta decreases)``.
    """
    c1, c3, c4 = constants
    z = lat.snap_point(center)
    rows = []
    a0 = alpha4(R0)
    for i, d in enumerate(sorted(deltas, reverse=True)):
        Q = RectRegion(z, d, d)
        rep = estimate_crossing_gap(lat, field_mu, field_lambda, Q, replicates, seed, stream + i)
        ad = alpha4(d)
        rhs = sigma * c1 * c3 * c4 * d * d * ad / a0
        rows.append(GapCurveRow(d, rep, ad, a0, rhs, rep.coupled + 4 * rep.coupled_se >= rhs))
    ratios = [r.gap.coupled / r.delta for r in rows]
    increasing = all(b > a for a, b in zip(ratios, ratios[1:]))
    return rows, increasing


# ------------------------------------------------------------ statistic Z_n


def crossing_indicators(cfg: Configuration, grid: SquareGrid) -> np.ndarray:
    col = cfg.colors()
    out = np.zeros(grid.K, np.bool_)
    tmp = np.zeros(4, np.bool_)
    for k, q in enumerate(grid.squares):
        g = rect_graph(cfg.lattice, q)
        K.rect_eval(np.ascontiguousarray(col[g.tiles]), g.nbr, g.flags, tmp)
        out[k] = tmp[0]
    return out


def compute_z_statistic(cfg: Configuration, grid: SquareGrid, means) -> float:
    """``sum_k (1[crossing of Q_k] - means[k])``."""
    means = np.asarray(means, dtype=float)
    if means.shape != (grid.K,):
        raise ValueError(f"means table has {means.size} entries for {grid.K} squares")
    if np.any((means < 0) | (means > 1)):
        raise ValueError("means must lie in [0, 1]")
    return math.fsum(crossing_indicators(cfg, grid).astype(float) - means)


@dataclass
class DistinguisherReport:
    label: str  # law the test configurations were drawn from
    n: int
    K_n: int
    a: float
    b: float
    delta_n: float
    means: np.ndarray = field(repr=False)
    z_values: np.ndarray = field(repr=False)
    threshold: float = 0.0
    chebyshev_bound: float = 0.0
    rejection_rate: float = 0.0
    misclassification: float = 0.0
    decisions: np.ndarray = field(default=None, repr=False)

    @property
    def mean_z(self):
        return float(np.mean(self.z_values))

    @property
    def var_z(self):
        return float(np.var(self.z_values, ddof=1)) if self.z_values.size > 1 else 0.0

    def summary(self):
        return {"label": self.label, "n": self.n, "K_n": self.K_n, "a": self.a, "b": self.b,
                "delta_n": self.delta_n, "threshold": self.threshold, "chebyshev_bound": self.chebyshev_bound,
                "rejection_rate": self.rejection_rate, "misclassification": self.misclassification,
                "mean_z": self.mean_z, "var_z": self.var_z, "tests": int(self.z_values.size)}


@dataclass
class DistinguisherRun:
    grid: SquareGrid
    means: np.ndarray
    gaps: np.ndarray
    delta_hat: float
    delta_used: float
    under_mu: DistinguisherReport
    under_lambda: DistinguisherReport
    seed: int


def _grid_indicators(gg, p, seed, stream, nrep):
    def block(a, n):
        out = np.zeros((n, gg.ptr.size - 1), np.bool_)
        K.multi_rect_counts(gg.tiles, gg.nbr, gg.flags, gg.ptr, p, seed, stream, a, n, out)
        return out
    return concat_replicates(block, nrep)


def run_distinguisher(lat, field_mu, field_lambda, D, n, a=None, replicates_means=2000, replicates_test=1000,
                      seed=0, stream=0, gap_replicates=None, delta_n=None, buffer=None) -> DistinguisherRun:
    """Three phases: null means, plug-in ``Delta_n = n min_k gap_k``, then the threshold test.

    ``delta_n`` overrides the plug-in value (needed when the two laws coincide
    and no gap is detectable, e.g. to measure the test's behaviour under
    identical laws).
    """
    grid = build_square_grid(D, n, a, lat.spacing if buffer is None else buffer)
    gg = grid_graph(lat, grid)
    pm = np.ascontiguousarray(field_mu.probabilities(lat)[gg.tiles])
    pl = np.ascontiguousarray(field_lambda.probabilities(lat)[gg.tiles])
    _check_monotone(pm, pl)
    base = 4 * stream

    means = _grid_indicators(gg, pm, seed, base, replicates_means).mean(0)

    gr = gap_replicates or replicates_means

    def gblock(s, m):
        o1 = np.zeros((m, grid.K), np.bool_)
        o2 = np.zeros((m, grid.K), np.bool_)
        K.multi_rect_coupled(gg.tiles, gg.nbr, gg.flags, gg.ptr, pm, pl, seed, base + 1, s, m, o1, o2)
        return (o2 & ~o1).sum(0).astype(np.int64)

    gaps = sum_replicates(gblock, gr) / gr
    delta_hat = float(n * gaps.min())
    if delta_n is None:
        if delta_hat <= 0:
            raise ValueError("no detectable gap at this scale")
        delta_used = delta_hat
    else:
        delta_used = float(delta_n)
        if not delta_used > 0:
            raise ValueError("delta_n must be positive")

    a_eff = grid.a
    thr = (a_eff / 2) * n * delta_used
    cheb = 4 * (a_eff + 1) * B_INDICATOR**2 / (a_eff**2 * delta_used**2)
    reports = []
    for label, p, st in (("mu", pm, base + 2), ("lambda", pl, base + 3)):
        ind = _grid_indicators(gg, p, seed, st, replicates_test)
        z = np.array([math.fsum(row) for row in (ind.astype(float) - means)])
        dec = z >= thr
        rate = float(dec.mean())
        mis = rate if label == "mu" else 1 - rate
        reports.append(DistinguisherReport(label, n, grid.K, a_eff, B_INDICATOR, delta_used, means, z, thr, cheb,
                                           rate, mis, dec))
    return DistinguisherRun(grid, means, gaps, delta_hat, delta_used, reports[0], reports[1], seed)

"""Arm probabilities, speed factor, characteristic length and scaling checks.

Distances are in units of the mesh (``mesh = 1``) unless a lattice with a
different mesh is passed in. ``alpha4(m, n)`` is the critical probability of
four alternating arms between radii ``m`` and ``n``; ``alpha4(n, n) = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels as K
from .connectivity import annulus_sweep, central_tiles, rect_graph
from .lattice import Lattice, LatticeSpec, RectRegion, build_lattice
from .parallel import sum_replicates
from .sampling import ProbabilityField

P_C = 0.5
INFINITE = math.inf
Z4 = 4.0


def _binom_se(k, n):
    p = k / n
    return math.sqrt(max(p * (1 - p), 0.0) / n)


@dataclass(frozen=True)
class EstimatorResult:
    estimate: float
    std_error: float
    replicates: int
    successes: int
    seed: int
    stream: int
    query: str = ""
    flags: tuple = ()

    @classmethod
    def from_counts(cls, k, n, seed, stream, query=""):
        flags = ("underpowered",) if k == 0 else ()
        return cls(k / n, _binom_se(k, n), int(n), int(k), int(seed), int(stream), query, flags)

    @property
    def underpowered(self):
        return "underpowered" in self.flags

    def row(self):
        return {"query": self.query, "estimate": self.estimate, "std_error": self.std_error,
                "replicates": self.replicates, "seed": self.seed}


# --------------------------------------------------------------- arm events

_EVENT_NAMES = {K.EV_ONE_BLUE: "one-arm-blue", K.EV_ONE_YELLOW: "one-arm-yellow",
                K.EV_FOUR: "four-arm", K.EV_FIVE: "five-arm"}


def arm_counts(lat: Lattice, r, radii, replicates, seed, stream=0, events=K.EV_FOUR,
               fld: ProbabilityField | None = None, center=None, rep0=0):
    """Success counts ``out[b, j]`` of event bit ``b`` in annulus ``(r, radii[j])``."""
    center = lat.snap_point((0.0, 0.0)) if center is None else tuple(center)
    radii = tuple(float(R) for R in radii)
    if list(radii) != sorted(set(radii)):
        raise ValueError("radii must be strictly increasing")
    sw = annulus_sweep(lat, center, r, radii)
    if sw.counts[-1] == 0:
        raise ValueError("empty query")
    fld = ProbabilityField.critical() if fld is None else fld
    p = np.ascontiguousarray(fld.probabilities(lat)[sw.tiles])

    def block(a, n):
        out = sw.run(p, seed, stream, a, n, events)
        return np.stack([((out >> b) & 1).sum(0) for b in range(4)]).astype(np.int64)

    return sum_replicates(block, replicates, rep0)


def arm_estimates(lat, r, radii, replicates, seed, stream=0, events=K.EV_FOUR, fld=None, center=None):
    """Dict ``event name -> [EstimatorResult per radius]``."""
    c = arm_counts(lat, r, radii, replicates, seed, stream, events, fld, center)
    res = {}
    for b in range(4):
        bit = 1 << b
        if events & bit:
            res[_EVENT_NAMES[bit]] = [
                EstimatorResult.from_counts(int(c[b, j]), replicates, seed, stream,
                                            f"{_EVENT_NAMES[bit]}(r={r:g},R={R:g})")
                for j, R in enumerate(radii)
            ]
    return res


def estimate_alpha4(lat: Lattice, r, R, replicates, seed, stream=0, fld=None, center=None) -> EstimatorResult:
    """Monte Carlo frequency of four alternating arms in the annulus ``(r, R)``."""
    if r >= R:
        return EstimatorResult(1.0, 0.0, int(replicates), int(replicates), seed, stream, f"four-arm(r={r:g},R={R:g})")
    return arm_estimates(lat, r, (R,), replicates, seed, stream, K.EV_FOUR, fld, center)["four-arm"][0]


@dataclass(frozen=True)
class ArmExponentFit:
    radii: tuple
    estimates: tuple
    std_errors: tuple
    slope: float
    slope_se: float
    intercept: float
    event: str = "four-arm"


def fit_loglog(x, est, se):
    """Weighted least squares of ``log est`` on ``log x`` (delta-method weights)."""
    x = np.log(np.asarray(x, float))
    est = np.asarray(est, float)
    se = np.asarray(se, float)
    if np.any(est <= 0):
        raise ValueError("underpowered: zero estimate in log-log fit")
    y = np.log(est)
    s = np.maximum(se / est, 1e-12)
    w = 1 / s**2
    X = np.stack([np.ones_like(x), x], axis=1)
    cov = np.linalg.inv(X.T @ (X * w[:, None]))
    beta = cov @ (X.T @ (w * y))
    return float(beta[1]), float(math.sqrt(cov[1, 1])), float(beta[0])


def fit_arm_exponent(lat, r, radii, replicates, seed, stream=0, event=K.EV_FOUR, results=None) -> ArmExponentFit:
    name = _EVENT_NAMES[event]
    if results is None:
        results = arm_estimates(lat, r, radii, replicates, seed, stream, event | K.EV_FOUR)[name]
    est = [e.estimate for e in results]
    se = [e.std_error for e in results]
    slope, slope_se, icpt = fit_loglog(radii, est, se)
    return ArmExponentFit(tuple(radii), tuple(est), tuple(se), slope, slope_se, icpt, name)


def speed_factor(eta, alpha4_estimate) -> float:
    """``eta**2 / alpha4``."""
    if not alpha4_estimate > 0:
        raise ValueError("alpha4 estimate must be positive")
    return eta**2 / alpha4_estimate


def window_condition(p_crit, n0, speed):
    """Strict ``0 < p_crit - n0*speed < p_crit + n0*speed < 1``."""
    return 0 < p_crit - n0 * speed < p_crit + n0 * speed < 1


# --------------------------------------------------------- crossing squares

_LAT_CACHE: dict = {}


def box_lattice(kind, n, height=None, mesh=1.0):
    """Lattice covering ``[0, n] x [0, height]`` (cached) and that rectangle."""
    h = n if height is None else height
    key = (kind, float(n), float(h), float(mesh))
    lat = _LAT_CACHE.get(key)
    if lat is None:
        lat = build_lattice(LatticeSpec(kind, mesh, (0.0, 0.0, float(n), float(h))))
        _LAT_CACHE[key] = lat
    return lat, RectRegion.from_corners(0.0, 0.0, float(n), float(h))


def crossing_counts(lat, rect, fld, replicates, seed, stream=0, rep0=0):
    """Counts of (blue-H, blue-V, yellow-H, yellow-V) crossings of ``rect``."""
    g = rect_graph(lat, rect)
    p = np.ascontiguousarray(fld.probabilities(lat)[g.tiles])

    def block(a, n):
        out = np.zeros((n, 4), np.bool_)
        K.rect_counts(g.tiles, g.nbr, g.flags, p, seed, stream, a, n, out)
        return out.sum(0).astype(np.int64)

    return sum_replicates(block, replicates, rep0)


def crossing_probability(lat, rect, fld, replicates, seed, stream=0, color="blue", direction="horizontal"):
    c = crossing_counts(lat, rect, fld, replicates, seed, stream)
    idx = (0 if color == "blue" else 2) + (0 if direction == "horizontal" else 1)
    return EstimatorResult.from_counts(int(c[idx]), replicates, seed, stream,
                                       f"crossing({color},{direction},{rect.width:g}x{rect.height:g})")


@dataclass
class CharLenResult:
    p: float
    epsilon: float
    L: float  # int value or INFINITE
    table: dict = field(default_factory=dict)  # n -> (estimate, std_error, replicates)
    flags: tuple = ()

    @property
    def unresolved(self):
        return "unresolved" in self.flags


def _charlen_stream(stream, n):
    return (int(stream) << 24) | int(n)


def characteristic_length(lat_kind, p, epsilon, n_max, replicates, seed, stream=0, max_replicates=None,
                          z=3.0) -> CharLenResult:
    """``L_eps(p)``: first ``n`` where the ``n x n`` blue crossing probability leaves ``[eps, 1-eps]``.

    Doubling scan followed by bisection. When the confidence interval of a
    scale straddles the threshold, replicates are doubled (new counters, so
    earlier draws are reused) up to ``max_replicates``; scales still ambiguous
    at the cap are decided by the point estimate, and the result is flagged
    ``unresolved`` when ``L`` or ``L - 1`` was such a scale.
    """
    if not 0 < epsilon < 0.5:
        raise ValueError("epsilon must lie in (0, 1/2)")
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    res = CharLenResult(float(p), float(epsilon), INFINITE)
    if p == P_C:
        return res
    cap = max_replicates or 8 * replicates
    below = p < P_C
    thr = epsilon if below else 1 - epsilon
    fld = ProbabilityField.uniform_p(p)
    flags = set()
    decided = {}
    ambiguous = set()

    def triggered(n):
        if n in decided:
            return decided[n]
        lat, rect = box_lattice(lat_kind, n)
        st = _charlen_stream(stream, n)
        reps = replicates
        k = int(crossing_counts(lat, rect, fld, reps, seed, st)[0])
        while True:
            est = k / reps
            se = _binom_se(k, reps)
            if abs(est - thr) > z * max(se, 1e-12) or reps >= cap:
                break
            k += int(crossing_counts(lat, rect, fld, reps, seed, st, rep0=reps)[0])
            reps *= 2
        if abs(est - thr) <= z * se:
            ambiguous.add(n)
        res.table[int(n)] = (est, se, reps)
        decided[n] = est <= thr if below else est >= thr
        return decided[n]

    n, prev = 1, 0
    while True:
        n = min(n, n_max)
        if triggered(n):
            break
        if n == n_max:
            res.flags = tuple(sorted(flags | {"n_max"}))
            return res
        prev, n = n, 2 * n
    lo, hi = prev, n
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if triggered(mid):
            hi = mid
        else:
            lo = mid
    res.L = hi
    if hi in ambiguous or lo in ambiguous:
        flags.add("unresolved")
    res.flags = tuple(sorted(flags))
    return res


def p_for_middle(n, alpha4_n, value=1.0, side=-1):
    """``p`` with ``|p - p_c| n^2 alpha4(n) = value`` on the given side of ``p_c``."""
    return P_C + side * value / (n * n * alpha4_n)


@dataclass(frozen=True)
class SandwichReport:
    p: float
    n: int
    middle: float
    antecedent: bool
    L: float
    ratio: float
    consequent: bool | None
    status: str  # vacuous | holds | fails | unresolved


def check_charlen_sandwich(lat_kind, p, n, alpha4_n, bounds, epsilon=0.2, n_max=1024, replicates=2000,
                           seed=0, stream=0, charlen: CharLenResult | None = None) -> SandwichReport:
    """Plug-in check of ``C1 <= |p-p_c| n^2 alpha4(n) <= C2  =>  C3 <= n / L_eps(p) <= C4``."""
    C1, C2, C3, C4 = bounds
    middle = abs(p - P_C) * n * n * alpha4_n
    ante = C1 <= middle <= C2
    if not ante:
        return SandwichReport(p, n, middle, False, math.nan, math.nan, None, "vacuous")
    cl = charlen or characteristic_length(lat_kind, p, epsilon, n_max, replicates, seed, stream)
    ratio = n / cl.L
    cons = C3 <= ratio <= C4
    status = "unresolved" if cl.unresolved else ("holds" if cons else "fails")
    return SandwichReport(p, n, middle, True, cl.L, ratio, cons, status)


# ------------------------------------------------------ multiscale checks


def _ratio_se(vals, ses):
    r = 0.0
    for v, s in zip(vals, ses):
        r += (s / v) ** 2 if v > 0 else math.inf
    return math.sqrt(r)


@dataclass(frozen=True)
class QuasiMultReport:
    m: float
    n: float
    a1m: EstimatorResult
    amn: EstimatorResult
    a1n: EstimatorResult
    ratio: float
    ratio_se: float
    containment_ok: bool
    flags: tuple = ()


def check_quasi_multiplicativity(lat, m, n, replicates, seed, stream=0, r0=1.0, inner=None) -> QuasiMultReport:
    """``alpha4(r0,m) alpha4(m,n) / alpha4(r0,n)`` with delta-method error.

    ``inner`` may supply precomputed ``(alpha4(r0,m), alpha4(r0,n))``.
    """
    if not m < n:
        raise ValueError("need m < n")
    if inner is None:
        a = arm_estimates(lat, r0, (m, n), replicates, seed, stream)["four-arm"]
        a1m, a1n = a
    else:
        a1m, a1n = inner
    amn = estimate_alpha4(lat, m, n, replicates, seed, stream + 1)
    flags = tuple(f"underpowered:{e.query}" for e in (a1m, amn, a1n) if e.underpowered)
    if flags:
        return QuasiMultReport(m, n, a1m, amn, a1n, math.nan, math.nan, False, flags)
    ratio = a1m.estimate * amn.estimate / a1n.estimate
    rse = ratio * _ratio_se([a1m.estimate, amn.estimate, a1n.estimate],
                            [a1m.std_error, amn.std_error, a1n.std_error])
    cont = (a1n.estimate <= a1m.estimate + Z4 * math.hypot(a1n.std_error, a1m.std_error)
            and a1n.estimate <= amn.estimate + Z4 * math.hypot(a1n.std_error, amn.std_error))
    return QuasiMultReport(m, n, a1m, amn, a1n, ratio, rse, cont)


@dataclass(frozen=True)
class PowerBoundReport:
    pairs: tuple
    estimates: tuple
    exponent: float  # fitted 2 - beta
    exponent_se: float
    C6: float
    below_two: bool


def check_power_bound(lat, pairs, replicates, seed, stream=0) -> PowerBoundReport:
    """Fit ``alpha4(m,n) ~ C6 (m/n)^(2-beta)``; the exponent must stay below 2."""
    ests = []
    for i, (m, n) in enumerate(pairs):
        ests.append(estimate_alpha4(lat, m, n, replicates, seed, stream + i))
    x = [m / n for m, n in pairs]
    pos = [j for j, e in enumerate(ests) if x[j] < 1]
    if len(set(x[j] for j in pos)) >= 2:
        e, ese, _ = fit_loglog([x[j] for j in pos], [ests[j].estimate for j in pos],
                               [ests[j].std_error for j in pos])
    else:
        e, ese = math.nan, math.nan
    c6 = min(ests[j].estimate / x[j] ** e for j in pos) if pos and not math.isnan(e) else math.nan
    return PowerBoundReport(tuple(pairs), tuple(ests), e, ese, c6, bool(e + Z4 * ese < 2) if ese == ese else False)


@dataclass(frozen=True)
class RSWReport:
    r: float
    rows: tuple  # (label, color, EstimatorResult)
    lo: float
    hi: float
    c_hat: float

    def within(self, lo, hi):
        return all(lo <= e.estimate <= hi for _, _, e in self.rows)


def check_rsw_annulus(lat, r, fields: dict, replicates, seed, stream=0, center=None) -> RSWReport:
    """One-arm probabilities in ``A(z, r, 2r)`` for each field and both colours."""
    rows = []
    for i, (label, fld) in enumerate(fields.items()):
        est = arm_estimates(lat, r, (2 * r,), replicates, seed, stream + i,
                            K.EV_ONE_BLUE | K.EV_ONE_YELLOW, fld, center)
        rows.append((label, "blue", est["one-arm-blue"][0]))
        rows.append((label, "yellow", est["one-arm-yellow"][0]))
    vals = [e.estimate for _, _, e in rows]
    lo, hi = min(vals), max(vals)
    return RSWReport(float(r), tuple(rows), lo, hi, min(lo, 1 - hi))


def one_arm_envelope(lat, r, radii, c_hat, replicates, seed, stream=0, color="blue"):
    """Rows ``(R, estimate, se, (1-c)^floor(log2(R/r)), holds)``."""
    bit = K.EV_ONE_BLUE if color == "blue" else K.EV_ONE_YELLOW
    est = arm_estimates(lat, r, radii, replicates, seed, stream, bit)[_EVENT_NAMES[bit]]
    rows = []
    for R, e in zip(radii, est):
        env = (1 - c_hat) ** math.floor(math.log2(R / r) + 1e-12)
        rows.append((R, e.estimate, e.std_error, env, e.estimate <= env + Z4 * e.std_error))
    return rows


@dataclass(frozen=True)
class FiveArmReport:
    radii: tuple
    alpha5: tuple
    alpha4: tuple
    alpha1: tuple
    product_ok: tuple
    slope: float
    slope_se: float
    c_tilde: float


def check_five_arm_bound(lat, r, radii, replicates, seed, stream=0, one_arm_replicates=None) -> FiveArmReport:
    """Five arms (four alternating plus an extra blue one) against ``alpha4 * alpha1``."""
    ar = arm_estimates(lat, r, radii, replicates, seed, stream, K.EV_FOUR | K.EV_FIVE)
    a1 = arm_estimates(lat, r, radii, one_arm_replicates or replicates, seed, stream + 1,
                       K.EV_ONE_BLUE)["one-arm-blue"]
    a4, a5 = ar["four-arm"], ar["five-arm"]
    ok = []
    for e5, e4, e1 in zip(a5, a4, a1):
        prod = e4.estimate * e1.estimate
        pse = prod * _ratio_se([e4.estimate, e1.estimate], [e4.std_error, e1.std_error]) if prod > 0 else 0.0
        ok.append(e5.estimate <= prod + Z4 * math.hypot(e5.std_error, pse))
    try:
        s, sse, _ = fit_loglog(radii, [e.estimate for e in a5], [e.std_error for e in a5])
    except ValueError:
        s, sse = math.nan, math.nan
    ct = min(e.estimate * (R / lat.mesh) ** 2 for R, e in zip(radii, a5))
    return FiveArmReport(tuple(radii), tuple(a5), tuple(a4), tuple(a1), tuple(ok), s, sse, ct)


@dataclass(frozen=True)
class LengthGrowthRow:
    p: float
    L0: float
    epsilon: float
    L: float
    found: bool


def check_length_growth(lat_kind, epsilon0, K_factor, p_grid, n_max, replicates, seed, stream=0,
                        eps_min=1e-3):
    """For each ``p < p_c`` find an ``eps <= eps0`` (halving) with ``L_eps(p) >= K L_eps0(p)``."""
    if not 0 < epsilon0 < 0.5:
        raise ValueError("epsilon0 must lie in (0, 1/2)")
    rows = []
    for i, p in enumerate(p_grid):
        if p >= P_C:
            raise ValueError("p grid must lie below p_c")
        base = characteristic_length(lat_kind, p, epsilon0, n_max, replicates, seed, stream + i)
        eps = epsilon0
        cur = base
        while cur.L < K_factor * base.L and eps / 2 >= eps_min:
            eps /= 2
            cur = characteristic_length(lat_kind, p, eps, n_max, replicates, seed, stream + i)
        rows.append(LengthGrowthRow(p, base.L, eps, cur.L, cur.L >= K_factor * base.L))
    return rows


def rectangle_nesting_check(lat_kind, p, L, K_factor, n, replicates, seed, stream=0):
    """Per-sample containment: a left-right crossing of ``[0,KL] x [0,L]`` implies one of ``[0,n]^2``.

    Returns ``(long crossings, square crossings, violations)``.
    """
    if not L < n < K_factor * L:
        raise ValueError("need L < n < K L")
    W = K_factor * L
    lat = build_lattice(LatticeSpec(lat_kind, 1.0, (0.0, 0.0, float(max(W, n)), float(n))))
    gl = rect_graph(lat, RectRegion.from_corners(0, 0, W, L))
    gs = rect_graph(lat, RectRegion.from_corners(0, 0, n, n))
    tiles = np.concatenate([gl.tiles, gs.tiles])
    nbr = np.ascontiguousarray(np.concatenate([gl.nbr, gs.nbr], axis=1))
    flags = np.ascontiguousarray(np.concatenate([gl.flags, gs.flags], axis=1))
    ptr = np.array([0, gl.size, gl.size + gs.size], np.int64)
    pv = np.full(tiles.size, float(p))

    def block(a, m):
        out = np.zeros((m, 2), np.bool_)
        K.multi_rect_counts(tiles, nbr, flags, ptr, pv, seed, stream, a, m, out)
        return np.array([out[:, 0].sum(), out[:, 1].sum(), (out[:, 0] & ~out[:, 1]).sum()], np.int64)

    return tuple(int(v) for v in sum_replicates(block, replicates))


# ------------------------------------------------------ condition surrogates


def arm_decay_check(fit: ArmExponentFit):
    """``(R/r) alpha4(r,R)`` along the fitted radii and whether it decreases strictly."""
    vals = [R * a for R, a in zip(fit.radii, fit.estimates)]
    return vals, all(b < a for a, b in zip(vals, vals[1:]))


def field_arm_ratios(lat, fields: dict, centers, r, R, replicates, seed, stream=0):
    """Ratios ``P_field[A4(z,r,R)] / P_0[A4(z0,r,R)]``; returns (rows, min, max)."""
    z0 = lat.snap_point((0.0, 0.0))
    ref = estimate_alpha4(lat, r, R, replicates, seed, stream, center=z0)
    rows = []
    s = stream + 1
    for label, fld in fields.items():
        for z in centers:
            zz = lat.snap_point(z)
            e = estimate_alpha4(lat, r, R, replicates, seed, s, fld=fld, center=zz)
            s += 1
            rows.append((label, zz, e, e.estimate / ref.estimate if ref.estimate > 0 else math.nan))
    ratios = [x[3] for x in rows]
    return rows, min(ratios), max(ratios)


def four_sides_frequencies(lat, Q, tiles, fld, replicates, seed, stream=0):
    """Frequencies of ``A4'(t, dQ)`` for each tile in ``tiles`` under ``fld``."""
    g = rect_graph(lat, Q)
    sched = np.array([g.local(int(t)) for t in tiles], np.int64)
    p = np.ascontiguousarray(fld.probabilities(lat)[g.tiles])

    def block(a, n):
        hits = np.zeros(sched.size, np.int64)
        per = np.zeros((n, 4), np.int64)
        K.pivotal_counts(g.tiles, g.nbr, g.flags, sched, p, p, seed, stream, a, n, hits, per,
                         np.zeros(sched.size), np.zeros(n))
        return hits

    return sum_replicates(block, replicates) / replicates


def pivotal_arm_ratios(lat, Q, replicates, seed, stream=0, r=1.0, max_tiles=None):
    """Min over central tiles of ``P[A4'(t, dQ)] / P[A4(z, r, side)]`` at criticality."""
    tiles = central_tiles(lat, Q)
    if max_tiles is not None and tiles.size > max_tiles:
        tiles = tiles[np.linspace(0, tiles.size - 1, max_tiles).astype(int)]
    fld = ProbabilityField.critical()
    f = four_sides_frequencies(lat, Q, tiles, fld, replicates, seed, stream)
    a4 = estimate_alpha4(lat, r, Q.width, replicates, seed, stream + 1, center=lat.snap_point(Q.center))
    ratios = f / a4.estimate if a4.estimate > 0 else np.full(f.shape, math.nan)
    return tiles, f, a4, float(np.min(ratios))


def tile_constant(lat_kind, deltas, mesh=1.0):
    """``min |tiles_in_disk(z, delta/4)| / (delta/eta)^2`` over ``delta >= 4 eta``."""
    from .lattice import tiles_in_disk

    vals = []
    for d in deltas:
        if d < 4 * mesh:
            continue
        half = d
        lat = build_lattice(LatticeSpec.centered(lat_kind, mesh, half))
        zs = [lat.snap_point((0, 0)), (0.37 * mesh, 0.21 * mesh), (0.5 * mesh, 0.5 * mesh)]
        vals.append(min(len(tiles_in_disk(lat, z, d / 4)) for z in zs) / (d / mesh) ** 2)
    return min(vals)

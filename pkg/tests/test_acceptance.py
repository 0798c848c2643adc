"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines live; the
terminal summary repeats them. Seeds here are independent of the reference
calibration run.
"""

from __future__ import annotations

import math
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from nearcrit import kernels as K
from nearcrit import oracle as O
from nearcrit.calibration import alpha4_table, load_calibration
from nearcrit.cli import main as cli_main
from nearcrit.connectivity import CrossingQuery
from nearcrit.distinguisher import (estimate_crossing_gap, estimate_pivotal_decomposition, gap_lower_bound_curve,
                                    run_distinguisher)
from nearcrit.lattice import AnnulusRegion, LatticeSpec, RectRegion, build_lattice
from nearcrit.sampling import ProbabilityField
from nearcrit.scaling import (arm_estimates, characteristic_length, fit_loglog, p_for_middle)

RESULTS: list[str] = []
SEED = 777
ROOT = Path(__file__).resolve().parents[1]
RADII = (8.0, 16.0, 32.0, 64.0, 128.0)


def report(n, ok, detail):
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line, flush=True)
    return ok


def _binom_se(p, n):
    return math.sqrt(max(p * (1 - p), 0.0) / n)


@pytest.fixture(scope="module")
def cal():
    return load_calibration()


@pytest.fixture(scope="module")
def big_tri():
    return build_lattice(LatticeSpec.centered("triangular-site", 1.0, 130.0))


@pytest.fixture(scope="module")
def arm_run(big_tri):
    """Critical four- and five-arm frequencies at 10^6 replicates per scale (one shared sweep)."""
    t = time.time()
    z = big_tri.snap_point((0.0, 0.0))
    radii = (4.0,) + RADII
    est = arm_estimates(big_tri, 1.0, radii, 1_000_000, SEED, 1, K.EV_FOUR | K.EV_FIVE, center=z)
    return {"four": dict(zip(radii, est["four-arm"])), "five": dict(zip(radii, est["five-arm"])),
            "seconds": time.time() - t}


# ---------------------------------------------------------------- 1


def _fixtures():
    sq12 = build_lattice(LatticeSpec("square-bond", 1.0, (0, 0, 2, 2)))
    sq4 = build_lattice(LatticeSpec("square-bond", 1.0, (0, 0, 1, 1)))
    hex15 = build_lattice(LatticeSpec.centered("triangular-site", 1.0, 1.5))
    Q12 = RectRegion.from_corners(0, 0, 2, 2)
    Q4 = RectRegion.from_corners(0, 0, 1, 1)
    W15 = RectRegion.from_corners(*hex15.window)
    ring = AnnulusRegion((0.0, 0.0), 0.5, hex15.spacing)
    u = ProbabilityField.uniform_p
    return [
        ("crossing sq12 blue-H p=.5", sq12, "crossing", (Q12, "blue", "horizontal"), u(0.5)),
        ("crossing sq4 blue-H p=.5", sq4, "crossing", (Q4, "blue", "horizontal"), u(0.5)),
        ("crossing sq12 yellow-V p=.3", sq12, "crossing", (Q12, "yellow", "vertical"), u(0.3)),
        ("crossing hex15 blue-H p=.5", hex15, "crossing", (W15, "blue", "horizontal"), u(0.5)),
        ("one-arm blue hex15 p=.5", hex15, "arm", (ring, "one-arm-blue"), u(0.5)),
        ("one-arm yellow hex15 p=.6", hex15, "arm", (ring, "one-arm-yellow"), u(0.6)),
        ("four-arm hex15 p=.5", hex15, "arm", (ring, "four-alternating"), u(0.5)),
        ("four-arm hex15 p=.4", hex15, "arm", (ring, "four-alternating"), u(0.4)),
        ("five-arm hex15 p=.5", hex15, "arm", (ring, "five"), u(0.5)),
        ("A4' sq12 tile 7 p=.5", sq12, "sides", (7, Q12), u(0.5)),
        ("A4' sq12 tile 2 p=.4", sq12, "sides", (2, Q12), u(0.4)),
        ("A4' hex15 tile 7 p=.5", hex15, "sides", (7, W15), u(0.5)),
        ("gap sq12 .4/.6", sq12, "gap", (Q12,), (u(0.4), u(0.6))),
        ("gap hex15 .45/.6", hex15, "gap", (W15,), (u(0.45), u(0.6))),
    ]


_ARM_BITS = {"one-arm-blue": K.EV_ONE_BLUE, "one-arm-yellow": K.EV_ONE_YELLOW, "four-alternating": K.EV_FOUR,
             "five": K.EV_FIVE}
_XIDX = {("blue", "horizontal"): 0, ("blue", "vertical"): 1, ("yellow", "horizontal"): 2,
         ("yellow", "vertical"): 3}


def test_criterion_01_oracle_equivalence():
    from nearcrit.scaling import arm_counts, crossing_counts, four_sides_frequencies

    t0 = time.time()
    n = 100_000
    bad = []
    fx = _fixtures()
    for i, (name, lat, kind, args, fld) in enumerate(fx):
        assert lat.tile_count <= 16
        st = 1000 + i
        if kind == "crossing":
            Q, col, d = args
            exact = O.exact_probability(O.OracleQuery(lat, fld, O.Crossing(CrossingQuery(Q, col, d))))
            est = crossing_counts(lat, Q, fld, n, SEED, st)[_XIDX[(col, d)]] / n
        elif kind == "arm":
            a, pat = args
            exact = O.exact_probability(O.OracleQuery(lat, fld, O.Arm(a, pat)))
            bit = _ARM_BITS[pat]
            c = arm_counts(lat, a.r, (a.R,), n, SEED, st, bit, fld, a.center)
            est = c[bit.bit_length() - 1, 0] / n
        elif kind == "sides":
            t, Q = args
            exact = O.exact_probability(O.OracleQuery(lat, fld, O.FourSides(t, Q)))
            est = float(four_sides_frequencies(lat, Q, [t], fld, n, SEED, st)[0])
        else:
            (Q,), (mu, lam) = args, fld
            exact = O.exact_gap(lat, mu, lam, O.Crossing(CrossingQuery(Q))).gap
            est = estimate_crossing_gap(lat, mu, lam, Q, n, SEED, st).coupled
        z = abs(est - exact) / max(_binom_se(exact, n), 1e-300)
        print(f"  {name:30s} exact={exact:.6f} mc={est:.6f} z={z:.2f}")
        if z > 4:
            bad.append(name)
    dt = time.time() - t0
    ok = len(fx) >= 10 and not bad and dt < 300
    assert report(1, ok, f"{len(fx)} fixtures, max 16 tiles, 1e5 replicates each, {dt:.0f}s, outside 4 SE: {bad}")


# ---------------------------------------------------------------- 2


def test_criterion_02_coupling_invariants():
    lat = build_lattice(LatticeSpec.centered("triangular-site", 1.0, 10.0))
    z = lat.snap_point((0.0, 0.0))
    mu = ProbabilityField(speed=0.05, default=-1.0, n0=2.0)
    lam = ProbabilityField(speed=0.05, default=0.0, regions=((RectRegion.from_corners(-3, -3, 6, 6), 2.0),), n0=2.0)
    n = 1_000_000
    g = estimate_crossing_gap(lat, mu, lam, RectRegion(z, 12, 12), n, SEED, 2)
    pe = estimate_pivotal_decomposition(lat, mu, lam, RectRegion(z, 4, 4), n, SEED, 3, schedule="all")
    ok = g.coupling_violations == 0 and g.reverse_events == 0 and pe.transition_mismatches == 0 \
        and pe.max_transitions <= 1
    assert report(2, ok, f"1e6 coupled samples: blue-containment violations={g.coupling_violations}, "
                         f"(w1 crosses, w2 not)={g.reverse_events}; hybrid run over {len(pe.schedule)} tiles: "
                         f"max transitions={pe.max_transitions}, samples where #transitions != gap indicator "
                         f"or != #(A4' and switch)={pe.transition_mismatches}")


# ---------------------------------------------------------------- 3


def test_criterion_03_four_arm_exponent(arm_run):
    e = [arm_run["four"][R] for R in RADII]
    s, se, _ = fit_loglog(RADII, [x.estimate for x in e], [x.std_error for x in e])
    prod = [R * x.estimate for R, x in zip(RADII, e)]
    dec = all(b < a for a, b in zip(prod, prod[1:]))
    fast = arm_run["seconds"] < 1800
    ok = abs(s + 1.25) <= 0.15 and dec and fast
    assert report(3, ok, f"slope {s:.4f} +/- {se:.4f} (target -1.25 +/- 0.15); n*alpha4(1,n) = "
                         f"{[round(v, 4) for v in prod]} decreasing={dec}; sweep {arm_run['seconds']:.0f}s "
                         f"(four+five arms, 1e6 replicates)")


# ---------------------------------------------------------------- 4


def test_criterion_04_five_arm_bound(arm_run, big_tri):
    z = big_tri.snap_point((0.0, 0.0))
    a1 = dict(zip(RADII, arm_estimates(big_tri, 1.0, RADII, 20_000, SEED, 4, K.EV_ONE_BLUE,
                                       center=z)["one-arm-blue"]))
    rows, ok_prod = [], True
    for R in RADII:
        e5, e4, e1 = arm_run["five"][R], arm_run["four"][R], a1[R]
        prod = e4.estimate * e1.estimate
        pse = prod * math.hypot(e4.std_error / e4.estimate, e1.std_error / e1.estimate)
        holds = e5.estimate <= prod + 4 * math.hypot(e5.std_error, pse)
        ok_prod &= holds
        rows.append(f"R={R:g}: {e5.estimate:.3g}<={prod:.3g}")
    e5 = [arm_run["five"][R] for R in RADII]
    s, se, _ = fit_loglog(RADII, [x.estimate for x in e5], [x.std_error for x in e5])
    ok = ok_prod and abs(s + 2.0) <= 0.3
    assert report(4, ok, f"alpha5 <= alpha4*alpha1 (4 SE): {ok_prod} [{'; '.join(rows)}]; "
                         f"five-arm slope {s:.4f} +/- {se:.4f} (target -2.0 +/- 0.3)")


# ---------------------------------------------------------------- 5


def test_criterion_05_rsw_band(cal):
    s_eta = cal["speed"]["s_eta"]
    n0 = 0.1 / s_eta
    vals = []
    for kind in ("triangular-site", "square-bond"):
        lat = build_lattice(LatticeSpec.centered(kind, 1.0, 18.0))
        z = lat.snap_point((0.0, 0.0))
        for iota in (-n0, 0.0, n0):
            fld = ProbabilityField(p_crit=0.5, speed=s_eta, default=iota, n0=n0)
            for r in (2.0, 4.0, 8.0):
                est = arm_estimates(lat, r, (2 * r,), 10_000, SEED, 5, K.EV_ONE_BLUE | K.EV_ONE_YELLOW, fld, z)
                for col in ("blue", "yellow"):
                    e = est[f"one-arm-{col}"][0]
                    vals.append((kind, round(iota * s_eta, 3), r, col, e.estimate))
    lo = min(v[-1] for v in vals)
    hi = max(v[-1] for v in vals)
    ok = lo >= 0.05 and hi <= 0.95
    out = [v for v in vals if not 0.05 <= v[-1] <= 0.95]
    assert report(5, ok, f"P[A1(z,r,2r)] over 2 lattices x 3 fields (N0*s_eta=0.1) x r in {{2,4,8}} x 2 colours: "
                         f"range [{lo:.4f}, {hi:.4f}] vs band [0.05, 0.95]; {len(out)}/{len(vals)} outside")


# ---------------------------------------------------------------- 6


def test_criterion_06_quasi_multiplicativity(arm_run, big_tri):
    z = big_tri.snap_point((0.0, 0.0))
    a = arm_run["four"]
    rows, ok = [], True
    for m in (4.0, 8.0):
        mid = dict(zip((32.0, 64.0), arm_estimates(big_tri, m, (32.0, 64.0), 200_000, SEED, 60 + int(m),
                                                     K.EV_FOUR, center=z)["four-arm"]))
        for n in (32.0, 64.0):
            r = a[m].estimate * mid[n].estimate / a[n].estimate
            rse = r * math.sqrt(sum((e.std_error / e.estimate) ** 2 for e in (a[m], mid[n], a[n])))
            holds = r + 4 * rse >= 1 and r - 4 * rse <= 20
            ok &= holds
            rows.append(f"(m={m:g},n={n:g}) {r:.3f}+/-{rse:.3f}")
    assert report(6, ok, f"alpha4(1,m)alpha4(m,n)/alpha4(1,n) in [1,20] within 4 SE: {'; '.join(rows)}")


# ---------------------------------------------------------------- 7


def test_criterion_07_charlen_sandwich(cal):
    a4 = alpha4_table(cal)
    C3, C4 = cal["charlen"]["C3"], cal["charlen"]["C4"]
    lo, hi = 0.7 * C3, 1.3 * C4
    rows, ok = [], True
    for i, n in enumerate(cal["charlen"]["n"]):
        for j, side in enumerate((-1, 1)):
            p = p_for_middle(n, a4[float(n)], 1.0, side)
            cl = characteristic_length("triangular-site", p, 0.2, 1024, 2000, SEED, 70 + 2 * i + j,
                                       max_replicates=2000)
            ratio = n / cl.L
            holds = lo <= ratio <= hi
            ok &= holds
            rows.append(f"n={n} p={p:.5f} L={cl.L:g} n/L={ratio:.3f}{' ' + ','.join(cl.flags) if cl.flags else ''}")
    assert report(7, ok, f"n/L_0.2(p) in frozen [C3,C4]=[{C3:.3f},{C4:.3f}] widened by 30% to [{lo:.3f},{hi:.3f}]: "
                         f"{'; '.join(rows)}")


# ---------------------------------------------------------------- 8


def test_criterion_08_gap_lower_bound(cal):
    t = time.time()
    eta = 1 / 128
    a4 = alpha4_table(cal)
    g = cal["gap"]
    sigma, c1, c3, c4 = g["sigma"], g["c1"], g["c3"], g["c4"]
    s_eta = cal["speed"]["s_eta"]
    lat = build_lattice(LatticeSpec.centered("triangular-site", eta, 0.14))
    mu = ProbabilityField.critical()
    lam = ProbabilityField.uniform_p(0.5 + sigma * s_eta)
    rows, inc = gap_lower_bound_curve(lat, mu, lam, sigma, (0.25, 0.125, 0.0625), lambda d: a4[round(d / eta)],
                                      (c1, c3, c4), 100_000, SEED, 8, center=(0.0, 0.0), R0=1.0)
    dt = time.time() - t
    ok = all(r.holds for r in rows) and inc and dt < 3600
    desc = "; ".join(f"delta={r.delta:g}: gap={r.gap.coupled:.4f}+/-{r.gap.coupled_se:.4f} rhs={r.rhs:.4f} "
                     f"gap/delta={r.gap.coupled / r.delta:.4f}" for r in rows)
    assert report(8, ok, f"sigma={sigma:g}, c1={c1:.3f} c3={c3:.3f} c4={c4:.3f}: {desc}; gap/delta strictly "
                         f"increasing as delta shrinks={inc}; {dt:.0f}s")


# ---------------------------------------------------------------- 9


def test_criterion_09_pivotal_identity():
    rows, ok = [], True
    sq12 = build_lattice(LatticeSpec("square-bond", 1.0, (0, 0, 2, 2)))
    Q12 = RectRegion.from_corners(0, 0, 2, 2)
    tri = build_lattice(LatticeSpec.centered("triangular-site", 1.0, 6.0))
    Qt = RectRegion(tri.snap_point((0.0, 0.0)), 8, 8)
    u = ProbabilityField.uniform_p
    for k, (lat, Q, mu, lam) in enumerate([(sq12, Q12, u(0.4), u(0.6)), (tri, Qt, u(0.45), u(0.55))]):
        pe = estimate_pivotal_decomposition(lat, mu, lam, Q, 100_000, SEED, 90 + k, schedule="all")
        g = estimate_crossing_gap(lat, mu, lam, Q, 100_000, SEED, 95 + k)
        comb = math.hypot(pe.std_error, g.coupled_se)
        holds = abs(pe.value - g.coupled) <= 4 * comb
        ok &= holds
        rows.append(f"{len(pe.schedule)} tiles: sum={pe.value:.4f} gap={g.coupled:.4f} (4 SE={4 * comb:.4f})")
    pm = np.full(sq12.tile_count, 0.5)
    pl = pm.copy()
    pl[7] = 0.75
    mu, lam = ProbabilityField.explicit(pm), ProbabilityField.explicit(pl)
    exact_sum = O.exact_pivotal_sum(sq12, mu, lam, Q12, (7,))
    exact = O.exact_gap(sq12, mu, lam, O.Crossing(CrossingQuery(Q12))).gap
    a4 = O.exact_probability(O.OracleQuery(sq12, mu, O.FourSides(7, Q12)), exact=True)
    target = float(a4 * Fraction(1, 4))
    eq = abs(exact_sum - target) <= 1e-15 and abs(exact - target) <= 1e-15
    ok &= eq
    assert report(9, ok, f"{'; '.join(rows)}; single pivotal tile: sum={exact_sum!r} gap={exact!r} "
                         f"P[A4']*(pl-pm)={a4 * Fraction(1, 4)} = {target!r}; equal to 1e-15: {eq}")


# ---------------------------------------------------------------- 10


def test_criterion_10_distinguisher():
    lat = build_lattice(LatticeSpec("triangular-site", 1 / 128, (0, 0, 1, 1)))
    D = RectRegion.from_corners(0, 0, 1, 1)
    mu, lam = ProbabilityField.uniform_p(0.35), ProbabilityField.uniform_p(0.65)
    run = run_distinguisher(lat, mu, lam, D, 16, 0.5, 2000, 1000, SEED, 10)
    a = run.grid.a
    bound = 4 * (a + 1) / (a * a * run.delta_hat**2) + 0.05
    m_mu, m_lam = run.under_mu.misclassification, run.under_lambda.misclassification
    sep_ok = run.delta_hat >= 5 and m_mu <= bound and m_lam <= bound
    same = run_distinguisher(lat, mu, mu, D, 16, 0.5, 2000, 1000, SEED, 11, delta_n=run.delta_hat)
    diff = abs(same.under_mu.rejection_rate - same.under_lambda.rejection_rate)
    ok = sep_ok and diff < 0.05
    assert report(10, ok, f"n=16 a=0.5 K_n={run.grid.K}: Delta_hat={run.delta_hat:.3f}; misclassification "
                          f"mu={m_mu:.3f} lambda={m_lam:.3f} <= bound {bound:.4f}; mu=lambda rejection rates "
                          f"{same.under_mu.rejection_rate:.3f} vs {same.under_lambda.rejection_rate:.3f} "
                          f"(|diff|={diff:.3f} < 0.05)")


# ---------------------------------------------------------------- 11

SMALL = {
    "sample": [],
    "crossing": ["params.replicates=500"],
    "arms": ["params.replicates=300"],
    "alpha4": ["params.replicates=500", "lattice.half_width=34.0", "params.radii=[8.0, 16.0, 32.0]",
               "params.R0=32.0"],
    "charlen": ["params.replicates=300", "params.p=[0.4]"],
    "gap": ["params.replicates=2000"],
    "pivotal": ["params.replicates=300"],
    "distinguish": ["params.replicates_means=300", "params.replicates_test=200", "params.n=8"],
    "conditions": ["params.replicates=300"],
    "oracle": [],
}


def test_criterion_11_reproducibility(tmp_path):
    bad = []
    for name, ov in SMALL.items():
        cfg = str(ROOT / "configs" / f"{name}.toml")
        args = [x for o in ov for x in ("--override", o)]
        outs = []
        for w in (1, 4):
            d = tmp_path / f"{name}-{w}"
            assert cli_main(["--config", cfg, "--out", str(d), "--workers", str(w)] + args) == 0
            outs.append({f: (d / f).read_bytes() for f in ("results.csv", "report.json", "manifest.txt")})
        again = tmp_path / f"{name}-again"
        assert cli_main(["--config", cfg, "--out", str(again), "--workers", "2"] + args) == 0
        outs.append({f: (again / f).read_bytes() for f in ("results.csv", "report.json", "manifest.txt")})
        if not outs[0] == outs[1] == outs[2]:
            bad.append(name)
    ok = not bad
    assert report(11, ok, f"{len(SMALL)} experiments x 3 runs (workers 1, 4, 2): byte-identical CSV/JSON/manifest; "
                          f"mismatches: {bad}")

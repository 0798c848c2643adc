"""Reference calibration run; writes ``src/nearcrit/data/calibration.toml``.

Run once: ``python scripts/calibrate.py [--workers N]``. The acceptance suite
re-measures against the frozen values with independent seeds.
"""

from __future__ import annotations

import argparse
import time
from pathlib import Path

from nearcrit import parallel
from nearcrit.lattice import LatticeSpec, RectRegion, build_lattice
from nearcrit.sampling import ProbabilityField
from nearcrit.scaling import (arm_estimates, characteristic_length, field_arm_ratios, pivotal_arm_ratios,
                              p_for_middle, speed_factor, tile_constant)

SEED = 20261014
KIND = "triangular-site"
RADII = (4.0, 8.0, 16.0, 32.0, 64.0, 128.0)
R0 = 128.0
SIGMA = 4.0
SIDES = (8.0, 16.0, 32.0)  # delta / eta for delta in {1/16, 1/8, 1/4} at eta = 1/128
CHARLEN_N = (32, 64)


def log(*a):
    print(f"[{time.strftime('%H:%M:%S')}]", *a, flush=True)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--alpha4-replicates", type=int, default=1_000_000)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "src/nearcrit/data/calibration.toml"))
    args = ap.parse_args()
    parallel.set_workers(args.workers)

    lat = build_lattice(LatticeSpec.centered(KIND, 1.0, R0 + 2))
    z0 = lat.snap_point((0.0, 0.0))
    a4 = arm_estimates(lat, 1.0, RADII, args.alpha4_replicates, SEED, 0, center=z0)["four-arm"]
    alpha4 = {R: e for R, e in zip(RADII, a4)}
    log("alpha4", {R: e.estimate for R, e in alpha4.items()})
    s_eta = speed_factor(1.0 / R0, alpha4[R0].estimate)
    log("s_eta", s_eta)

    ratios = []
    charlen_rows = []
    for i, n in enumerate(CHARLEN_N):
        for j, side in enumerate((-1, 1)):
            p = p_for_middle(n, alpha4[float(n)].estimate, 1.0, side)
            cl = characteristic_length(KIND, p, 0.2, 1024, 2000, SEED, 10 + 2 * i + j, max_replicates=2000)
            ratios.append(n / cl.L)
            charlen_rows.append((n, side, p, cl.L, n / cl.L, ",".join(cl.flags)))
            log("charlen", n, side, p, cl.L, cl.flags)

    c4 = tile_constant(KIND, SIDES)
    log("c4", c4)

    c3_vals = []
    for i, d in enumerate(SIDES):
        slat = build_lattice(LatticeSpec.centered(KIND, 1.0, d + 2))
        Q = RectRegion(slat.snap_point((0.0, 0.0)), d, d)
        _, _, _, c3 = pivotal_arm_ratios(slat, Q, 20000, SEED, 100 + 2 * i, max_tiles=16)
        c3_vals.append(c3)
        log("c3", d, c3)

    lam = ProbabilityField.uniform_p(0.5 + SIGMA * s_eta)
    c1_vals = []
    for i, d in enumerate(SIDES):
        _, lo, _ = field_arm_ratios(lat, {"lambda": lam}, [(0.0, 0.0)], 1.0, d, 200000, SEED, 200 + 10 * i)
        c1_vals.append(lo)
        log("c1", d, lo)

    lines = [
        "# Reference calibration run (scripts/calibrate.py); regenerate rather than edit.",
        f"seed = {SEED}",
        f'lattice = "{KIND}"',
        "",
        "[alpha4]",
        "r = 1.0",
        f"replicates = {args.alpha4_replicates}",
        "values = { " + ", ".join(f'"{R:g}" = {e.estimate!r}' for R, e in alpha4.items()) + " }",
        "std_errors = { " + ", ".join(f'"{R:g}" = {e.std_error!r}' for R, e in alpha4.items()) + " }",
        "",
        "[speed]",
        f"R0 = {R0!r}",
        f"s_eta = {s_eta!r}",
        "",
        "[charlen]",
        "epsilon = 0.2",
        f"n = {list(CHARLEN_N)}",
        f"ratios = {ratios!r}",
        f"C3 = {min(ratios)!r}",
        f"C4 = {max(ratios)!r}",
        "# n, side, p, L, n/L, flags",
    ]
    lines += [f"# {row}" for row in charlen_rows]
    lines += [
        "",
        "[gap]",
        f"sigma = {SIGMA!r}",
        f"sides = {list(SIDES)!r}",
        f"c1 = {min(c1_vals)!r}",
        f"c1_by_side = {c1_vals!r}",
        f"c3 = {min(c3_vals)!r}",
        f"c3_by_side = {c3_vals!r}",
        f"c4 = {c4!r}",
        "",
    ]
    Path(args.out).write_text("\n".join(lines))
    log("wrote", args.out)


if __name__ == "__main__":
    main()

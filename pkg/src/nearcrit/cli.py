"""Experiment runner: ``nearcrit --config exp.toml [--workers N] [--out DIR] [--override k=v]``.

Exit codes: 0 success (possibly with warnings), 1 validation error, 2 runtime error.
Every run writes ``manifest.txt``, ``results.csv``, ``report.json`` and
``summary.txt`` into the output directory. Outputs never depend on the worker
count or the wall clock.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, parallel
from . import kernels as K
from .config import ConfigError, ExperimentConfig, load_config, rect_from
from .connectivity import CrossingQuery
from .lattice import AnnulusRegion
from .sampling import sample_configuration

# ------------------------------------------------------------------ output


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def _fmt(v):
    v = _clean(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True)
    return str(v)


def write_csv(path, rows):
    buf = io.StringIO()
    if rows:
        cols = list(rows[0].keys())
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in cols])
    Path(path).write_text(buf.getvalue())


def write_json(path, obj):
    Path(path).write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def write_manifest(path, entries: dict):
    lines = [f"{k}={_fmt(entries[k])}" for k in sorted(entries)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line and not line.startswith("#"):
            k, v = line.split("=", 1)
            out[k] = v
    return out


# ------------------------------------------------------------- experiments


def _center(cfg, lat):
    return lat.snap_point(tuple(cfg.param("center", (0.0, 0.0))))


def exp_sample(cfg: ExperimentConfig):
    lat = cfg.lattice()
    fname = cfg.param("field", "critical")
    c = sample_configuration(lat, cfg.field(fname), cfg.seed, int(cfg.param("stream", 0)))
    blue = c.blue
    rows = [{"tile_count": lat.tile_count, "blue": int(blue.sum()), "blue_fraction": float(blue.mean())}]
    return rows, {"field": fname, "rle": c.to_rle(), **rows[0]}, {}, []


def exp_crossing(cfg):
    from .scaling import crossing_probability

    lat = cfg.lattice()
    fld = cfg.field(cfg.param("field", "critical"))
    rows = []
    for i, r in enumerate(cfg.param("rects", required=True)):
        rect = rect_from(r, f"params.rects[{i}]")
        if not lat.contains_rect(rect):
            raise ConfigError(f"params.rects[{i}]: region outside lattice")
        e = crossing_probability(lat, rect, fld, cfg.param("replicates", 1000), cfg.seed, i,
                                 cfg.param("color", "blue"), cfg.param("direction", "horizontal"))
        rows.append(e.row())
    return rows, {"rows": rows}, {}, []


def exp_arms(cfg):
    from .scaling import arm_estimates

    lat = cfg.lattice()
    fld = cfg.field(cfg.param("field", "critical"))
    names = cfg.param("events", ["four-arm"])
    bits = {"one-arm-blue": K.EV_ONE_BLUE, "one-arm-yellow": K.EV_ONE_YELLOW, "four-arm": K.EV_FOUR,
            "five-arm": K.EV_FIVE}
    ev = 0
    for n in names:
        if n not in bits:
            raise ConfigError(f"params.events: unknown event {n!r}")
        ev |= bits[n]
    r = float(cfg.param("r", 1.0))
    radii = [float(x) for x in cfg.param("radii", required=True)]
    est = arm_estimates(lat, r, radii, cfg.param("replicates", 1000), cfg.seed, int(cfg.param("stream", 0)),
                        ev, fld, _center(cfg, lat))
    rows = [e.row() for n in names for e in est[n]]
    warn = [f"underpowered: {e.query}" for n in names for e in est[n] if e.underpowered]
    return rows, {"rows": rows}, {}, warn


def exp_alpha4(cfg):
    from .scaling import arm_estimates, arm_decay_check, fit_arm_exponent, speed_factor, window_condition

    lat = cfg.lattice()
    r = float(cfg.param("r", 1.0))
    radii = [float(x) for x in cfg.param("radii", required=True)]
    reps = cfg.param("replicates", 10000)
    est = arm_estimates(lat, r, radii, reps, cfg.seed, int(cfg.param("stream", 0)), K.EV_FOUR,
                        None, _center(cfg, lat))["four-arm"]
    rows = [e.row() for e in est]
    man, warn, rep = {}, [], {"rows": rows}
    for R, e in zip(radii, est):
        man[f"alpha4.r{r:g}.R{R:g}"] = e.estimate
    if any(e.underpowered for e in est):
        warn.append("underpowered: zero four-arm successes at some radius")
    else:
        fit = fit_arm_exponent(lat, r, radii, reps, cfg.seed, results=est)
        vals, dec = arm_decay_check(fit)
        man["alpha4.slope"] = fit.slope
        man["alpha4.slope_se"] = fit.slope_se
        rep.update(slope=fit.slope, slope_se=fit.slope_se, radius_times_alpha4=vals, decreasing=dec)
        R0 = float(cfg.param("R0", radii[-1]))
        if R0 in radii:
            a0 = est[radii.index(R0)].estimate
            s = speed_factor(lat.mesh / R0, a0)
            n0 = float(cfg.param("n0", 1.0))
            man["speed_factor"] = s
            man["speed_factor.R0"] = R0
            man["window_check.n0"] = n0
            man["window_check.ok"] = window_condition(0.5, n0, s)
            rep.update(speed_factor=s, window_ok=window_condition(0.5, n0, s))
    return rows, rep, man, warn


def exp_charlen(cfg):
    from .scaling import characteristic_length

    kind = cfg.lattice_spec.kind
    rows, warn, tables = [], [], {}
    for i, p in enumerate(cfg.param("p", required=True)):
        res = characteristic_length(kind, float(p), float(cfg.param("epsilon", 0.2)), int(cfg.param("n_max", 256)),
                                    cfg.param("replicates", 2000), cfg.seed, i,
                                    cfg.param("max_replicates", None))
        rows.append({"p": res.p, "epsilon": res.epsilon, "L": res.L, "flags": ";".join(res.flags)})
        tables[repr(float(p))] = {str(n): list(v) for n, v in sorted(res.table.items())}
        warn += [f"{f}: p={p}" for f in res.flags]
    return rows, {"rows": rows, "tables": tables}, {}, warn


def _pair(cfg):
    return cfg.field(cfg.param("mu", "mu")), cfg.field(cfg.param("lambda", "lambda"))


def exp_gap(cfg):
    from .distinguisher import estimate_crossing_gap

    lat = cfg.lattice()
    mu, lam = _pair(cfg)
    rows = []
    for i, r in enumerate(cfg.param("rects", required=True)):
        Q = rect_from(r, f"params.rects[{i}]")
        g = estimate_crossing_gap(lat, mu, lam, Q, cfg.param("replicates", 10000), cfg.seed, i)
        rows.append({"square": list(Q.bounds), "direct": g.direct, "direct_se": g.direct_se, "coupled": g.coupled,
                     "coupled_se": g.coupled_se, "reverse_events": g.reverse_events,
                     "coupling_violations": g.coupling_violations, "replicates": g.replicates, "seed": cfg.seed})
    return rows, {"rows": rows}, {}, []


def exp_pivotal(cfg):
    from .distinguisher import estimate_pivotal_decomposition

    lat = cfg.lattice()
    mu, lam = _pair(cfg)
    Q = rect_from(cfg.param("rect", required=True), "params.rect")
    sched = cfg.param("schedule", None)
    pe = estimate_pivotal_decomposition(lat, mu, lam, Q, cfg.param("replicates", 10000), cfg.seed,
                                        int(cfg.param("stream", 0)), sched)
    row = {"value": pe.value, "std_error": pe.std_error, "hybrid_gap": pe.hybrid_gap,
           "hybrid_gap_se": pe.hybrid_gap_se, "schedule_size": len(pe.schedule),
           "max_transitions": pe.max_transitions, "transition_mismatches": pe.transition_mismatches,
           "replicates": pe.replicates, "seed": cfg.seed}
    return [row], row, {}, []


def exp_distinguish(cfg):
    from .distinguisher import run_distinguisher

    lat = cfg.lattice()
    mu, lam = _pair(cfg)
    D = rect_from(cfg.param("domain", required=True), "params.domain")
    run = run_distinguisher(lat, mu, lam, D, int(cfg.param("n", required=True)), cfg.param("a", None),
                            cfg.param("replicates_means", 2000), cfg.param("replicates_test", 1000), cfg.seed,
                            int(cfg.param("stream", 0)), cfg.param("gap_replicates", None),
                            cfg.param("delta_n", None))
    rows = [{"k": k, "x": q.center[0], "y": q.center[1], "side": q.width, "mean_mu": run.means[k],
             "gap": run.gaps[k]} for k, q in enumerate(run.grid.squares)]
    rep = {"delta_hat": run.delta_hat, "delta_used": run.delta_used, "under_mu": run.under_mu.summary(),
           "under_lambda": run.under_lambda.summary(),
           "mean_shift_bound": run.grid.a * run.grid.n * run.delta_used}
    man = {"distinguish.delta_hat": run.delta_hat, "distinguish.delta_used": run.delta_used,
           "distinguish.threshold": run.under_mu.threshold, "distinguish.chebyshev_bound": run.under_mu.chebyshev_bound,
           "distinguish.K_n": run.grid.K, "distinguish.a": run.grid.a}
    return rows, rep, man, []


def exp_conditions(cfg):
    from .scaling import check_power_bound, check_quasi_multiplicativity, check_rsw_annulus

    lat = cfg.lattice()
    reps = cfg.param("replicates", 2000)
    rows, man, warn = [], {}, []
    fields = {name: cfg.field(name) for name in cfg.param("fields", ["critical"])}
    r = float(cfg.param("rsw_r", 4.0))
    rsw = check_rsw_annulus(lat, r, fields, reps, cfg.seed, 0, _center(cfg, lat))
    for label, color, e in rsw.rows:
        rows.append({"check": "rsw", "key": f"{label}:{color}", "value": e.estimate, "std_error": e.std_error})
    man["rsw.c_hat"] = rsw.c_hat
    for i, (m, n) in enumerate(cfg.param("qm_pairs", [])):
        q = check_quasi_multiplicativity(lat, float(m), float(n), reps, cfg.seed, 100 + 2 * i)
        rows.append({"check": "quasi_multiplicativity", "key": f"{m}:{n}", "value": q.ratio,
                     "std_error": q.ratio_se})
        warn += list(q.flags)
    pairs = cfg.param("power_pairs", [])
    if pairs:
        pb = check_power_bound(lat, [(float(m), float(n)) for m, n in pairs], reps, cfg.seed, 200)
        rows.append({"check": "power_bound", "key": "exponent", "value": pb.exponent, "std_error": pb.exponent_se})
        man["power.exponent"] = pb.exponent
        man["power.C6"] = pb.C6
    return rows, {"rows": rows}, man, warn


def _oracle_event(p: dict, lat):
    from . import oracle as O

    kind = p.get("event", "crossing")
    if kind == "crossing":
        rect = rect_from(p["rect"], "params.rect")
        return O.Crossing(CrossingQuery(rect, p.get("color", "blue"), p.get("direction", "horizontal")))
    if kind in ("one-arm-blue", "one-arm-yellow", "four-alternating", "five"):
        return O.Arm(AnnulusRegion(lat.snap_point(tuple(p.get("center", (0.0, 0.0)))), float(p["r"]),
                                   float(p["R"])), kind)
    if kind == "four-sides":
        return O.FourSides(int(p["tile"]), rect_from(p["rect"], "params.rect"))
    if kind == "tile-blue":
        return O.TileBlue(int(p["tile"]))
    raise ConfigError(f"params.event: unknown oracle event {kind!r}")


def exp_oracle(cfg):
    from . import oracle as O

    lat = cfg.lattice()
    if "rect" not in cfg.params and cfg.param("event", "crossing") == "crossing":
        cfg.params["rect"] = list(cfg.lattice_spec.window)
    ev = _oracle_event(cfg.params, lat)
    if len(ev.tiles(lat)) > O.MAX_TILES:
        raise ConfigError(f"too many tiles: event depends on {len(ev.tiles(lat))} > {O.MAX_TILES}")
    fld = cfg.field(cfg.param("field", "critical"))
    val = O.exact_probability(O.OracleQuery(lat, fld, ev))
    row = {"event": cfg.param("event", "crossing"), "probability": val, "tiles": len(ev.tiles(lat))}
    if cfg.param("exact", False):
        fr = O.exact_probability(O.OracleQuery(lat, fld, ev), exact=True)
        row["exact"] = f"{fr.numerator}/{fr.denominator}"
    return [row], row, {}, []


EXPERIMENTS = {
    "sample": exp_sample,
    "crossing-prob": exp_crossing,
    "arms": exp_arms,
    "alpha4": exp_alpha4,
    "charlen": exp_charlen,
    "gap": exp_gap,
    "pivotal": exp_pivotal,
    "distinguish": exp_distinguish,
    "conditions": exp_conditions,
    "oracle": exp_oracle,
}


def _base_manifest(cfg: ExperimentConfig):
    canon = json.dumps(_clean(cfg.raw), sort_keys=True).encode()
    s = cfg.lattice_spec
    man = {"version": __version__, "experiment": cfg.experiment, "seed": cfg.seed,
           "config_sha256": hashlib.sha256(canon).hexdigest(), "lattice.kind": s.kind, "lattice.mesh": s.mesh,
           "lattice.window": list(s.window)}
    for name, f in sorted(cfg.fields_raw.items()):
        for k, v in sorted(f.items()):
            man[f"fields.{name}.{k}"] = v
    return man


def run(cfg: ExperimentConfig, out_dir) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows, report, extra, warnings = EXPERIMENTS[cfg.experiment](cfg)
    man = _base_manifest(cfg)
    man.update(extra)
    write_manifest(out / "manifest.txt", man)
    write_csv(out / "results.csv", rows)
    write_json(out / "report.json", {"manifest": man, "report": report, "warnings": warnings})
    lines = [f"experiment {cfg.experiment} (seed {cfg.seed})", f"rows: {len(rows)}"]
    lines += [f"warning: {w}" for w in warnings]
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    return warnings


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="nearcrit", description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True, help="experiment config (TOML)")
    ap.add_argument("--workers", type=int, default=1, help="worker threads (results do not depend on it)")
    ap.add_argument("--out", default=None, help="output directory (default: output.dir or ./out)")
    ap.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config entry, e.g. params.replicates=100")
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.config, args.override)
    except ConfigError as e:
        print(f"validation error: {e}", file=sys.stderr)
        return 1
    parallel.set_workers(args.workers)
    out = args.out or cfg.raw.get("output", {}).get("dir", "out")
    try:
        run(cfg, out)
    except ValueError as e:
        print(f"validation error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    sys.stdout.write(Path(out, "summary.txt").read_text())
    return 0


if __name__ == "__main__":
    sys.exit(main())

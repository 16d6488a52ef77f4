"""Command-line front end: ``roughstab <command> --config FILE --seed N --out DIR``.

Every run writes CSV tables plus ``report.json`` holding the resolved
configuration and its hash; ``--config report.json`` replays a run.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import math
import os
import sys
import warnings

import numpy as np

from . import io as rpio
from .attractor import (
    StabilityParams,
    all_margins,
    criterion_check,
    equilibrium_drift,
    forward_experiment,
    gamma_estimate,
    pullback_experiment,
    semigroup_constants,
)
from .config import (
    build_diffusion,
    build_problem,
    config_hash,
    load_raw,
    noise_spec,
    require_seeds,
    resolve,
)
from .errors import ConfigError, RoughStabError
from .gubinelli import sewing_constant
from .rde import RdeProblem, apriori_bounds, solve
from .rough_core import sample_fbm, sample_fbm_rough
from .variation import (
    gamma_or_inf,
    greedy_times,
    holder_norm,
    p_variation,
    q_variation_second_level,
    rough_pvar_norm,
)

log = logging.getLogger("roughstab")

COMMANDS = ("sample", "lift", "norms", "greedy", "solve", "criterion", "pullback", "forward", "drift", "validate")


def _num(v):
    """CSV cell: ``repr`` for floats so reruns are byte-identical."""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


class Run:
    """Output sink for one command: CSV tables, extra files and the JSON report."""

    def __init__(self, out, force):
        self.out = out
        if os.path.isdir(out) and os.listdir(out) and not force:
            raise ConfigError(f"output directory {out} is not empty; pass --force to overwrite")
        os.makedirs(out, exist_ok=True)
        self.files = []

    def path(self, name):
        self.files.append(name)
        return os.path.join(self.out, name)

    def table(self, name, header, rows):
        with open(self.path(name), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_num(v) for v in row])


def _stability(cfg, prob, seed):
    C_A, lam_A = semigroup_constants(prob.A, cfg["run.semigroup_margin"])
    p = cfg["noise.p"]
    if cfg["run.gamma"] is not None:
        G, se = cfg["run.gamma"], 0.0
    else:
        G, se = gamma_estimate(cfg["noise.hurst"], p, cfg["run.gamma_samples"], seed,
                               cfg["noise.lift_level"], cfg["problem.m"], cfg["run.gamma_steps"])
    return StabilityParams.from_problem(prob, C_A, lam_A, p, G, se)


# ---------------------------------------------------------------- commands

def cmd_sample(cfg, run):
    res = {}
    for seed in require_seeds(cfg):
        spec = noise_spec(cfg, seed)
        x = sample_fbm(spec)
        rows = [[t] + list(v) for t, v in zip(spec.grid.points, x)]
        run.table(f"sample_seed{seed}.csv", ["t"] + [f"x{i + 1}" for i in range(x.shape[1])], rows)
        res[str(seed)] = {"points": len(rows)}
    return res


def cmd_lift(cfg, run):
    res = {}
    for seed in require_seeds(cfg):
        rp = sample_fbm_rough(noise_spec(cfg, seed))
        name = f"lift_seed{seed}.txt"
        with open(run.path(name), "w") as fh:
            fh.write(rpio.dumps_text(rp, cfg["run.encoding"]))
        res[str(seed)] = {"file": name, "points": len(rp)}
    return res


def cmd_norms(cfg, run):
    p = cfg["noise.p"]
    rows, res = [], {}
    for seed in require_seeds(cfg):
        rp = sample_fbm_rough(noise_spec(cfg, seed))
        reps = {
            "p-var": p_variation(rp.first_level, p, rp.grid),
            "q-var second level": q_variation_second_level(rp, p / 2.0),
        }
        rough = rough_pvar_norm(rp, p)
        alpha = 1.0 / p
        hold = holder_norm(rp.first_level, alpha, rp.grid)
        for kind, r in reps.items():
            rows.append([seed, kind, r.value])
        rows.append([seed, "rough p-var", rough])
        rows.append([seed, f"holder alpha={alpha!r}", hold])
        res[str(seed)] = {k: r.to_dict() for k, r in reps.items()}
        res[str(seed)]["rough p-var"] = rough
        res[str(seed)]["holder"] = {"alpha": alpha, "value": hold}
    run.table("norms.csv", ["seed", "kind", "value"], rows)
    return res


def cmd_greedy(cfg, run):
    p = cfg["noise.p"]
    prob = build_problem(cfg)
    gam = cfg["run.gamma"]
    if gam is None:
        gam = gamma_or_inf(sewing_constant(p), prob.C_g)
    rows, res = [], {}
    for seed in require_seeds(cfg):
        rp = sample_fbm_rough(noise_spec(cfg, seed))
        part = greedy_times(rp, gam, p)
        rows.append([seed, part.count, part.count_bound, part.total_norm])
        res[str(seed)] = part.to_dict()
    run.table("greedy.csv", ["seed", "count", "count_bound", "rough_norm"], rows)
    return res


def cmd_solve(cfg, run):
    prob = build_problem(cfg)
    p = cfg["noise.p"]
    res = {}
    for seed in require_seeds(cfg):
        rp = sample_fbm_rough(noise_spec(cfg, seed))
        sol = solve(prob, rp, cfg["run.y0"], guard=cfg["tol.divergence"], scheme=cfg["run.scheme"])
        rows = [[t] + list(v) for t, v in zip(sol.times, sol.values)]
        run.table(f"solution_seed{seed}.csv", ["t"] + [f"y{i + 1}" for i in range(prob.d)], rows)
        side = sol.sidecar(p)
        if 2 < p < 3 and cfg["run.scheme"] == "euler":
            side["apriori"] = apriori_bounds(prob, rp, cfg["run.y0"], y0_b=cfg["run.y0b"], p=p, sol=sol).to_dict()
        with open(run.path(f"solution_seed{seed}.json"), "w") as fh:
            json.dump(_jsonable(side), fh, indent=2, sort_keys=True)
        res[str(seed)] = {"terminal": sol.values[-1].tolist(), "sup_norm": sol.sup_norm()}
    return res


def cmd_criterion(cfg, run):
    prob = build_problem(cfg)
    seed = require_seeds(cfg)[0]
    params = _stability(cfg, prob, seed)
    margins = all_margins(params)
    rows = [[k, m, m > 0] for k, m in margins.items()]
    run.table("criterion.csv", ["kind", "margin", "satisfied"], rows)
    ok, margin = criterion_check(params, cfg["run.criterion"])
    return {"params": params.to_dict(), "margins": margins, "selected": cfg["run.criterion"],
            "satisfied": ok, "margin": margin}


def _pullback_noise(cfg, seed, horizon):
    return sample_fbm_rough(noise_spec(cfg, seed, -float(horizon), 0.0))


def cmd_pullback(cfg, run):
    prob = build_problem(cfg)
    seeds = require_seeds(cfg)
    hs = cfg["run.horizons"]
    K = cfg["run.absorbing"]
    params = _stability(cfg, prob, seeds[0])
    rows, summ, res = [], [], {}
    for seed in seeds:
        span = max(max(hs), K)
        rp = _pullback_noise(cfg, seed, math.ceil(span))
        rep = pullback_experiment(prob, rp, hs, cfg["run.ball_radius"], cfg["run.ensemble"], seed, params,
                                  absorbing_horizon=K or None, scheme="exponential",
                                  singleton_rtol=cfg["tol.singleton"])
        for h, dm, nd, lr in rep.table():
            rows.append([seed, h, dm, nd, lr])
        b_hat = rep.absorbing["b_hat"] if rep.absorbing else math.nan
        summ.append([seed, rep.rate, rep.rate_r2, rep.singleton, rep.terminal_max_norm, b_hat])
        res[str(seed)] = rep.to_dict()
    run.table("pullback.csv", ["seed", "horizon", "diameter", "diverged", "log_norm_rate"], rows)
    run.table("pullback_summary.csv", ["seed", "rate", "rate_r2", "singleton", "terminal_max_norm", "b_hat"], summ)
    return {"params": params.to_dict(), "margins": all_margins(params), "runs": res}


def cmd_forward(cfg, run):
    prob = build_problem(cfg)
    seeds = require_seeds(cfg)
    params = _stability(cfg, prob, seeds[0])
    n = cfg["run.n_forward"]
    rows, res = [], {}
    for seed in seeds:
        rp = sample_fbm_rough(noise_spec(cfg, seed, 0.0, float(n)))
        rep = forward_experiment(prob, rp, n, cfg["run.y0"], cfg["run.y0b"], params, scheme=cfg["run.scheme"])
        for k in rep.times:
            rows.append([seed, k, rep.distance[k], rep.lhs[k], rep.rhs[k]])
        res[str(seed)] = {"bound_holds": rep.bound_holds, "log_rate": rep.log_rate}
    run.table("forward.csv", ["seed", "n", "distance", "lhs", "rhs"], rows)
    return {"params": params.to_dict(), "runs": res}


def cmd_drift(cfg, run):
    base = build_problem(cfg)
    seeds = require_seeds(cfg)
    horizon = max(cfg["run.horizons"])
    cgs = [0.0] + [c for c in cfg["run.cg_sweep"] if c != 0.0]

    def problem_for(c):
        return RdeProblem(base.A, base.f, build_diffusion(cfg, c))

    rows, res = [], {}
    for seed in seeds:
        rp = _pullback_noise(cfg, seed, math.ceil(horizon))
        table = equilibrium_drift(problem_for, cgs, rp, horizon, cfg["run.ball_radius"], cfg["run.ensemble"],
                                  seed, scheme=cfg["run.scheme"], singleton_rtol=cfg["tol.singleton"])
        for r in table:
            rows.append([seed, r["C_g"], r["distance"], r["diameter"], r["contracted"]])
        dist = [r["distance"] for r in table[1:]]
        res[str(seed)] = {"rows": table,
                          "monotone": all(a > b for a, b in zip(dist, dist[1:]))}
    run.table("drift.csv", ["seed", "C_g", "distance", "diameter", "contracted"], rows)
    return res


def cmd_validate(cfg, run):
    notes = []
    p = cfg["noise.p"]
    H = cfg["noise.hurst"]
    if not 2 < p < 3:
        notes.append(f"p={p} is outside (2, 3)")
    if not 1.0 / 3.0 < H <= 0.5:
        notes.append(f"H={H} is outside the rough regime (1/3, 1/2]; runnable as a smoke test")
    prob = build_problem(cfg)
    if not prob.is_hurwitz():
        notes.append(f"A is not Hurwitz (spectral abscissa {prob.spectral_abscissa():.4g})")
    C_p = sewing_constant(p) if 2 < p < 3 else math.nan
    gam = gamma_or_inf(C_p, prob.C_g) if 2 < p < 3 else math.nan
    if prob.C_g == 0:
        notes.append("C_g = 0: greedy threshold is infinite (noise-free problem)")
    derived = {"C_p": C_p, "gamma": "inf" if math.isinf(gam) else gam, "L": prob.L,
               "A_norm": prob.A_norm, "C_f": prob.C_f, "C_g": prob.C_g}
    if prob.is_hurwitz():
        C_A, lam_A = semigroup_constants(prob.A, cfg["run.semigroup_margin"])
        derived.update(C_A=C_A, lambda_A=lam_A, L_f=C_A * prob.C_f)
    run.table("derived.csv", ["name", "value"], [[k, v] for k, v in derived.items()])
    for n in notes:
        log.warning(n)
    return {"derived": derived, "notes": notes}


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


def build_parser():
    ap = argparse.ArgumentParser(prog="roughstab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="key=value config, JSON config or report.json to replay")
        sp.add_argument("--seed", action="append", type=int, default=[], help="seed (repeatable)")
        sp.add_argument("--out", required=True, help="output directory (created)")
        sp.add_argument("--force", action="store_true", help="allow writing into a non-empty directory")
        sp.add_argument("--no-timestamp", action="store_true", help="omit the timestamp from report.json")
        sp.add_argument("--tol", action="append", default=[], metavar="KEY=VAL", help="override a tol.* value")
    return ap


def run(argv=None):
    args = build_parser().parse_args(argv)
    raw = load_raw(args.config) if args.config else {}
    cfg = resolve(raw, args.seed, args.tol)
    if args.command != "validate":
        require_seeds(cfg)
    out = Run(args.out, args.force)
    log.info("%s: config hash %s", args.command, config_hash(cfg)[:12])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        results = HANDLERS[args.command](cfg, out)
    msgs = sorted({str(w.message) for w in caught})
    for m in msgs:
        log.warning(m)
    report = {"command": args.command, "config": cfg, "config_hash": config_hash(cfg),
              "results": results, "warnings": msgs, "files": sorted(out.files)}
    if not args.no_timestamp:
        report["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    with open(os.path.join(args.out, "report.json"), "w") as fh:
        json.dump(_jsonable(report), fh, indent=2, sort_keys=True)
    log.info("%s: wrote %d files to %s", args.command, len(out.files) + 1, args.out)
    return 0


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        return run(argv)
    except (RoughStabError, OSError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())

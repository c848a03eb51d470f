"""``cen-meta`` command line: analyze, sweep, simulate, optimize, match-range.

Thresholds are given in dB.  Numbers are written with 9 significant digits,
CSV files have a header row and JSON reports carry the config hash.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import analytic, meta
from .model import (
    ConfigError,
    Fixed,
    Flexible,
    NetworkConfig,
    config_from_dict,
    config_hash,
    config_to_dict,
    load_config,
)
from .montecarlo import (
    ESTIMATORS,
    MonteCarloConfig,
    empirical_summaries,
    run_campaign_grid,
    write_samples_csv,
)
from .optimizer import OptimizationProblem, coordinate_descent

SWEEP_VARS = ("tau_db", "r_i", "L", "xi", "eta")
SWEEP_OUTPUTS = ("stp", "variance", "meta_at_x0", "meta_curve", "m1", "m2", "epsilon",
                 "theta_bar")
SCHEME_MODES = ("config", "fixed", "flexible", "both-matched")
EXIT_CONFIG = 2
EXIT_BUDGET = 3


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    return str(v)


def _round9(obj):
    """Recursively round floats to 9 significant digits for JSON output."""
    if isinstance(obj, dict):
        return {k: _round9(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round9(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_round9(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return None
        return float(f"{v:.9g}")
    return obj


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _emit_json(doc: dict, out) -> None:
    _emit(json.dumps(_round9(doc), indent=2, sort_keys=False) + "\n", out)


def _load(args) -> tuple[NetworkConfig, dict]:
    if args.config:
        return load_config(args.config)
    return config_from_dict({})


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------


def analyze_report(cfg: NetworkConfig, tau_db: float, x0: float) -> dict:
    tau = db_to_linear(tau_db)
    stats = analytic.load_stats(cfg)
    stp = analytic.stp_file(tau, cfg)
    ms = meta.moments(tau, cfg)
    hit = cfg.hit_mass
    fbar = float(meta.beta_meta(ms, x0))
    return {
        "config": config_to_dict(cfg),
        "config_hash": config_hash(cfg),
        "tau_db": tau_db,
        "tau": tau,
        "x0": x0,
        "theta_bar": stats.theta_bar,
        "epsilon": stats.epsilon,
        "theta_i_pmf": list(stats.theta_i_pmf),
        "hit_mass": hit,
        "stp_file": stp,
        "stp_total": hit * stp,
        "m1": ms.m1,
        "m2": ms.m2,
        "kappa": ms.kappa,
        "degenerate": ms.degenerate,
        "variance_file": ms.variance,
        "variance_total": hit * ms.variance,
        "meta_file_x0": fbar,
        "meta_total_x0": hit * fbar,
    }


def cmd_analyze(args) -> int:
    cfg, _ = _load(args)
    _emit_json(analyze_report(cfg, args.tau_db, args.x0), args.out)
    return 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def _grid_values(args) -> list:
    if args.values:
        vals = [float(v) for v in args.values.split(",") if v.strip()]
    else:
        if args.start is None or args.stop is None or args.step is None:
            raise ConfigError("grid", "give --values or all of --start/--stop/--step")
        if args.step <= 0:
            raise ConfigError("step", "must be > 0")
        n = int(math.floor((args.stop - args.start) / args.step + 1e-9))
        vals = [args.start + k * args.step for k in range(n + 1)]
    if not vals:
        raise ConfigError("grid", "sweep grid is empty")
    return vals


def sweep_header(var: str, outputs, mode: str) -> list:
    cols = [var, "scheme"] + (["r_i"] if var != "r_i" else [])
    if mode == "both-matched":
        cols.append("r_c")
    if var == "eta":
        cols += ["L", "xi"]
    return cols + [o for o in SWEEP_OUTPUTS if o in outputs] + ["error"]


def _schemes_for(cfg: NetworkConfig, mode: str, r_i):
    """``(label, config, matched R_c or None)`` per scheme for one grid point."""
    if mode == "config":
        c = cfg if r_i is None else cfg.with_r_i(r_i)
        return [(c.scheme.name, c, None)]
    if mode == "fixed":
        r = cfg.scheme.r_i if (r_i is None and isinstance(cfg.scheme, Fixed)) else r_i
        if r is None:
            r = analytic.match_fixed_range(cfg.scheme.mu, cfg.lambda_bs, cfg.xi)
        return [("fixed", cfg.replace(scheme=Fixed(r)), None)]
    if mode == "flexible":
        m = cfg.scheme.r_i if (r_i is None and isinstance(cfg.scheme, Flexible)) else r_i
        if m is None:
            m = analytic.match_flexible_coefficient(cfg.scheme.r_c, cfg.lambda_bs, cfg.xi)
        return [("flexible", cfg.replace(scheme=Flexible(m)), None)]
    # both-matched: the grid value (or the config) gives mu, R_c is solved per point
    if r_i is not None:
        mu = r_i
    elif isinstance(cfg.scheme, Flexible):
        mu = cfg.scheme.mu
    else:
        mu = analytic.match_flexible_coefficient(cfg.scheme.r_c, cfg.lambda_bs, cfg.xi)
    rc = analytic.match_fixed_range(mu, cfg.lambda_bs, cfg.xi)
    return [("fixed", cfg.replace(scheme=Fixed(rc)), rc),
            ("flexible", cfg.replace(scheme=Flexible(mu)), rc)]


def _outputs_row(c: NetworkConfig, tau: float, x0: float, outputs) -> dict:
    row = {}
    hit = c.hit_mass
    ms = None
    if {"variance", "meta_at_x0", "meta_curve", "m1", "m2"} & set(outputs):
        ms = meta.moments(tau, c)
    if "stp" in outputs:
        row["stp"] = hit * analytic.stp_file(tau, c)
    if "variance" in outputs:
        row["variance"] = hit * ms.variance
    if "meta_at_x0" in outputs:
        row["meta_at_x0"] = hit * float(meta.beta_meta(ms, x0))
    if "meta_curve" in outputs:
        curve = meta.beta_meta(ms, np.linspace(0, 1, 201)) * hit
        row["meta_curve"] = ";".join(fmt(v) for v in curve)
    if "m1" in outputs:
        row["m1"] = ms.m1
    if "m2" in outputs:
        row["m2"] = ms.m2
    if {"epsilon", "theta_bar"} & set(outputs):
        st = analytic.load_stats(c)
        row["epsilon"] = st.epsilon
        row["theta_bar"] = st.theta_bar
    return row


def _sweep_point(cfg, var, value, args, outputs, mode):
    rows = []
    tau_db = args.tau_db
    base = cfg
    r_i = None
    if var == "tau_db":
        tau_db = value
    elif var == "r_i":
        r_i = value
    elif var == "L":
        base = cfg.replace(L=int(round(value)))
    elif var == "xi":
        base = cfg.replace(xi=value)
    tau = db_to_linear(tau_db)
    for label, c, rc in _schemes_for(base, mode, r_i):
        row = {"r_i": c.scheme.r_i, var: value, "scheme": label, "error": ""}
        if mode == "both-matched":
            row["r_c"] = rc
        if var == "eta":
            prob = OptimizationProblem(objective="weighted", tau=tau, x0=args.x0, eta=value,
                                       **_problem_kwargs(args.problem_section))
            res = coordinate_descent(prob, c)
            c = c.with_r_i(res.r_i_star).replace(L=res.l_star, xi=res.xi_star)
            row.update(r_i=res.r_i_star, L=res.l_star, xi=res.xi_star, eta=value)
        row.update(_outputs_row(c, tau, args.x0, outputs))
        rows.append(row)
    return rows


def run_sweep(cfg: NetworkConfig, args) -> str:
    var = args.var
    outputs = [o.strip() for o in args.outputs.split(",") if o.strip()]
    bad = [o for o in outputs if o not in SWEEP_OUTPUTS]
    if bad:
        raise ConfigError("outputs", f"unknown output(s) {bad}; choose from {SWEEP_OUTPUTS}")
    mode = args.scheme
    header = sweep_header(var, outputs, mode)
    values = _grid_values(args)

    def point(v):
        try:
            return _sweep_point(cfg, var, v, args, outputs, mode)
        except (ArithmeticError, ValueError, RuntimeError) as exc:
            labels = ["fixed", "flexible"] if mode == "both-matched" else [
                mode if mode in ("fixed", "flexible") else cfg.scheme.name]
            return [{var: v, "scheme": s, "error": f"{type(exc).__name__}: {exc}"}
                    for s in labels]

    if args.threads > 1:
        with ThreadPoolExecutor(args.threads) as pool:
            blocks = list(pool.map(point, values))
    else:
        blocks = [point(v) for v in values]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for block in blocks:
        for row in block:
            w.writerow([fmt(row[h]) if h in row and row[h] is not None else "" for h in header])
    return buf.getvalue()


def cmd_sweep(args) -> int:
    cfg, sections = _load(args)
    args.problem_section = sections.get("optimize", {})
    _emit(run_sweep(cfg, args), args.out)
    return 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _mc_config(args, section: dict) -> MonteCarloConfig:
    known = set(MonteCarloConfig.__dataclass_fields__)
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"montecarlo.{sorted(unknown)[0]}", "unknown field")
    kw = dict(section)
    if args.n_topologies is not None:
        kw["n_topologies"] = args.n_topologies
    if args.n_fading is not None:
        kw["n_fading"] = args.n_fading
    if args.seed is not None:
        kw["seed"] = args.seed
    kw["threads"] = args.threads
    try:
        return MonteCarloConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError("montecarlo", str(exc)) from None


def cmd_simulate(args) -> int:
    cfg, sections = _load(args)
    mc = _mc_config(args, sections.get("montecarlo", {}))
    tau = db_to_linear(args.tau_db)
    res = run_campaign_grid(cfg, mc, [tau], estimator=args.estimator)
    samples = res.sample_set(0)
    grid = np.linspace(0, 1, 201)
    emp = empirical_summaries(samples, grid)
    ms = meta.moments(tau, cfg)
    stp = analytic.stp_file(tau, cfg)
    beta = np.asarray(meta.beta_meta(ms, grid))
    emp_x0 = float(np.mean(samples.samples > args.x0))
    summary = {
        "config": config_to_dict(cfg),
        "config_hash": config_hash(cfg),
        "seed": mc.seed,
        "tau_db": args.tau_db,
        "x0": args.x0,
        "estimator": args.estimator,
        "montecarlo": asdict(mc),
        "resamples": res.resamples,
        "resample_rate": res.resample_rate,
        "warning": ("resample rate above 1%" if res.resample_rate > 0.01 else None),
        "hit_mass": cfg.hit_mass,
        "empirical": {"stp": emp.stp, "variance": emp.variance, "meta_x0": emp_x0,
                      "mean_interior_in_requests": res.mean_interior_requests,
                      "theta_histogram": list(res.theta_histogram(cfg.L))},
        "analytic": {"stp": stp, "m1": ms.m1, "variance": ms.variance,
                     "meta_x0": float(meta.beta_meta(ms, args.x0)),
                     "theta_bar": analytic.mean_in_requests(cfg),
                     "theta_i_pmf": list(analytic.load_stats(cfg).theta_i_pmf)},
        "gaps": {"stp": abs(emp.stp - stp), "variance": abs(emp.variance - ms.variance),
                 "meta_sup": float(np.max(np.abs(emp.ccdf - beta)))},
    }
    out = Path(args.out) if args.out else Path("cstp_samples.csv")
    write_samples_csv(samples, out)
    out.with_suffix(".json").write_text(json.dumps(_round9(summary), indent=2) + "\n")
    sys.stdout.write(f"wrote {out} and {out.with_suffix('.json')}\n")
    return 0


# ---------------------------------------------------------------------------
# optimize
# ---------------------------------------------------------------------------

_PROBLEM_KEYS = ("objective", "x0", "eta", "r_i_bounds", "l_bounds", "xi_bounds", "eps_ri",
                 "eps_l", "eps_xi", "max_rounds", "initial")


def _problem_kwargs(section: dict) -> dict:
    extra = set(section) - set(_PROBLEM_KEYS) - {"tau_db"}
    if extra:
        raise ConfigError(f"optimize.{sorted(extra)[0]}", "unknown field")
    kw = {k: section[k] for k in _PROBLEM_KEYS if k in section}
    for k in ("r_i_bounds", "l_bounds", "xi_bounds", "initial"):
        if k in kw and kw[k] is not None:
            kw[k] = tuple(kw[k])
    kw.pop("objective", None)
    kw.pop("x0", None)
    kw.pop("eta", None)
    return kw


def cmd_optimize(args) -> int:
    cfg, sections = _load(args)
    sec = dict(sections.get("optimize", {}))
    kw = _problem_kwargs(sec)
    tau_db = args.tau_db if args.tau_db_given else sec.get("tau_db", args.tau_db)
    if args.max_rounds is not None:
        kw["max_rounds"] = args.max_rounds
    try:
        prob = OptimizationProblem(
            objective=args.objective or sec.get("objective", "stp"),
            tau=db_to_linear(tau_db),
            x0=args.x0 if args.x0_given else sec.get("x0", args.x0),
            eta=args.eta if args.eta is not None else sec.get("eta", 0.5),
            threads=args.threads, **kw)
        prob.resolved(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError("optimize", str(exc)) from None
    res = coordinate_descent(prob, cfg)
    doc = {
        "config": config_to_dict(cfg),
        "config_hash": config_hash(cfg),
        "tau_db": tau_db,
        "objective": prob.objective,
        "x0": prob.x0,
        "eta": prob.eta,
        "result": {
            "r_i_star": res.r_i_star, "l_star": res.l_star, "xi_star": res.xi_star,
            "objective_value": res.objective_value, "rounds": res.rounds,
            "converged": res.converged, "budget_exhausted": res.budget_exhausted,
            "capped": res.capped, "evaluations": res.evaluations,
        },
        "trajectory": [dict(t, point=list(t["point"])) for t in res.trajectory],
    }
    _emit_json(doc, args.out)
    return EXIT_BUDGET if res.budget_exhausted else 0


# ---------------------------------------------------------------------------
# match-range
# ---------------------------------------------------------------------------


def cmd_match_range(args) -> int:
    cfg, _ = _load(args)
    if (args.mu is None) == (args.r_c is None):
        raise ConfigError("match-range", "give exactly one of --mu or --r-c")
    if args.mu is not None:
        if args.mu < 0:
            raise ConfigError("mu", "must be >= 0")
        rc = analytic.match_fixed_range(args.mu, cfg.lambda_bs, cfg.xi)
        mu = args.mu
    else:
        if args.r_c < 0:
            raise ConfigError("r_c", "must be >= 0")
        rc = args.r_c
        mu = analytic.match_flexible_coefficient(rc, cfg.lambda_bs, cfg.xi)
    doc = {
        "config_hash": config_hash(cfg),
        "lambda_bs": cfg.lambda_bs,
        "xi": cfg.xi,
        "mu": mu,
        "r_c": rc,
        "theta_bar": analytic.mean_in_requests(cfg.replace(scheme=Fixed(rc))),
    }
    _emit_json(doc, args.out)
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


class _Given(argparse.Action):
    """Store the value and remember that the flag was given explicitly."""

    def __call__(self, parser, namespace, values, option_string=None):
        setattr(namespace, self.dest, values)
        setattr(namespace, self.dest + "_given", True)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (NetworkConfig field names)")
    common.add_argument("--tau-db", type=float, default=5.0, action=_Given,
                        help="SIR threshold in dB (default 5)")
    common.add_argument("--x0", type=float, default=0.9, action=_Given,
                        help="reliability threshold for the meta distribution (default 0.9)")
    common.add_argument("--threads", type=int, default=1, help="worker threads")
    common.add_argument("--seed", type=int, default=None, help="Monte Carlo seed")
    common.add_argument("--out", help="output path (default stdout)")
    common.set_defaults(tau_db_given=False, x0_given=False)

    p = argparse.ArgumentParser(
        prog="cen-meta",
        description="STP, CSTP variance and SIR meta distribution of cache-enabled "
                    "networks with interference nulling.")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("analyze", parents=[common], help="analytic report for one config")

    s = sub.add_parser("sweep", parents=[common], help="CSV table over a parameter grid")
    s.add_argument("--var", choices=SWEEP_VARS, required=True, help="swept variable")
    s.add_argument("--start", type=float)
    s.add_argument("--stop", type=float)
    s.add_argument("--step", type=float)
    s.add_argument("--values", help="explicit comma-separated grid")
    s.add_argument("--outputs", default="stp,variance,meta_at_x0",
                   help=f"comma-separated subset of {','.join(SWEEP_OUTPUTS)}")
    s.add_argument("--scheme", choices=SCHEME_MODES, default="config")

    m = sub.add_parser("simulate", parents=[common], help="Monte Carlo CSTP samples")
    m.add_argument("--n-topologies", type=int)
    m.add_argument("--n-fading", type=int)
    m.add_argument("--estimator", choices=ESTIMATORS, default="fading")

    o = sub.add_parser("optimize", parents=[common], help="coordinate descent over (R_I, L, xi)")
    o.add_argument("--objective", choices=("stp", "inverse_variance", "meta", "weighted"))
    o.add_argument("--eta", type=float)
    o.add_argument("--max-rounds", type=int)

    r = sub.add_parser("match-range", parents=[common], help="equal-load R_c <-> mu")
    r.add_argument("--mu", type=float)
    r.add_argument("--r-c", type=float)
    return p


_COMMANDS = {
    "analyze": cmd_analyze,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "optimize": cmd_optimize,
    "match-range": cmd_match_range,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface: plan -> solve -> simulate -> experiment -> sensitivity.

Exit codes: 0 ok, 1 usage or I/O error, 2 model-assumption failure,
3 numerical failure. Every command writes a manifest next to its outputs;
re-running with the recorded arguments reproduces the outputs bitwise
(the manifest itself records the wall clock and is excluded from that
guarantee).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import __version__
from .bellman import BellmanError, ValueFunction, solve_bellman
from .diffusion import EwfError, derive_ewf
from .model import ConfigError, EconParams, load_model_file
from .policies import DispatchPolicy, PricingPolicy
from .sim import SimFailure, run_cell, run_replication
from .static_plan import PlanError, check_crp, nominal_plan, optimal_static_rates, workload_consistency

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MODEL = 2
EXIT_NUMERIC = 3

DISPATCH_KINDS = ("dp1", "dp2", "static", "closest")
PRICING_KINDS = ("static", "dynamic")


def _default_threads() -> int:
    env = os.environ.get("HEAVYHAIL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heavyhail",
                                description="Heavy-traffic planning, Bellman solve, and benchmark simulation")
    p.add_argument("command", choices=["plan", "solve", "simulate", "experiment", "sensitivity"])
    p.add_argument("--config", required=True, help="path to the JSON config")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="base seed (overrides config)")
    p.add_argument("--threads", type=int, default=None,
                   help="parallel replications (default: cores, or HEAVYHAIL_THREADS)")
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--horizon", type=float, default=None, help="hours")
    p.add_argument("--warmup", type=float, default=None, help="hours")
    p.add_argument("--pricing", choices=PRICING_KINDS, action="append", default=None)
    p.add_argument("--dispatch", choices=DISPATCH_KINDS, action="append", default=None)
    p.add_argument("--sweep", default=None, help="sensitivity sweep, e.g. h=5,10,15,20 or c=10,20,40")
    return p


def _write_manifest(outdir, command, args, resolved, started):
    path = os.path.join(outdir, f"{command}_manifest.json")
    doc = {
        "tool": "heavyhail",
        "version": __version__,
        "command": command,
        "config": os.path.abspath(args.config),
        "resolved": resolved,
        "output_dir": os.path.abspath(outdir),
        "wall_clock_s": round(time.time() - started, 3),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _fmt_vec(v, nd=4):
    return "(" + ", ".join(f"{x:.{nd}f}" for x in v) + ")"


def _prepare(args):
    model, econ, settings = load_model_file(args.config)
    if args.seed is not None:
        settings = replace(settings, seed=args.seed)
    if args.reps is not None:
        settings = replace(settings, replications=args.reps)
    if args.horizon is not None:
        settings = replace(settings, horizon_hours=args.horizon)
    if args.warmup is not None:
        settings = replace(settings, warmup_hours=args.warmup)
    if not settings.horizon_hours > settings.warmup_hours:
        raise ConfigError("sim: horizon must exceed warmup")
    lam, p = optimal_static_rates(econ)
    plan = nominal_plan(model, lam, p)
    return model, econ, settings, plan


def _solve_vf(model, econ, plan) -> tuple[ValueFunction, "EwfParams"]:
    params = derive_ewf(model, econ, plan)
    return solve_bellman(params), params


def _plan_payload(model, econ, plan, params=None):
    payload = {
        "lambda_star": plan.lambda_star.tolist(),
        "p_star": plan.p_star.tolist(),
        "eta": plan.eta,
        "eta_hat": plan.eta_hat,
        "nu": plan.nu.tolist(),
        "x_star": plan.x_star.tolist(),
        "basic": [j + 1 for j in plan.basic],
        "pools": [[i + 1 for i in pool] for pool in plan.pools],
        "server_pools": [[i + 1 for i in pool] for pool in plan.server_pools],
        "M": plan.M.tolist(),
        "workload_identity_max_abs": workload_consistency(plan, model),
    }
    if params is not None:
        payload["ewf"] = {
            "gamma": params.gamma.tolist(),
            "Sigma": params.Sigma.tolist(),
            "a": params.a, "sigma2": params.sigma2, "eta": params.eta,
            "h": params.h, "r": params.r,
            "alpha": params.alpha.tolist(), "alpha_hat": params.alpha_hat,
            "i_star": params.i_star + 1, "k_star": params.k_star + 1,
        }
    return payload


def cmd_plan(args) -> int:
    model, econ, settings, plan = _prepare(args)
    crp_ok, diag = check_crp(plan)
    params = derive_ewf(model, econ, plan) if crp_ok else None

    print(f"lambda* = {_fmt_vec(plan.lambda_star)}")
    print(f"p*      = {_fmt_vec(plan.p_star, 2)}")
    print(f"eta = {plan.eta:.4f}   eta_hat = {plan.eta_hat:.4f}")
    print(f"x*      = {_fmt_vec(plan.x_star, 3)}")
    print(f"basic   = {{{', '.join(str(j + 1) for j in plan.basic)}}}")
    print("pools   = " + "; ".join("{" + ", ".join(str(i + 1) for i in pool) + "}"
                                   for pool in plan.pools))
    for row in plan.M:
        print("M row   = " + _fmt_vec(row, 0))
    if params is not None:
        print(f"a = {params.a:.4f}  sigma2 = {params.sigma2:.4f}  h = {params.h:.1f}  "
              f"r = {params.r:.4f}  alpha_hat = {params.alpha_hat:.4f}  "
              f"i* = {params.i_star + 1}  k* = {params.k_star + 1}")
    print(diag)

    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "plan.json"), "w", encoding="utf-8") as fh:
        json.dump(_plan_payload(model, econ, plan, params), fh, indent=2)
        fh.write("\n")
    if not crp_ok:
        return EXIT_MODEL
    return EXIT_OK


def cmd_solve(args) -> int:
    model, econ, settings, plan = _prepare(args)
    crp_ok, diag = check_crp(plan)
    if not crp_ok:
        print(diag, file=sys.stderr)
        return EXIT_MODEL
    vf, params = _solve_vf(model, econ, plan)
    os.makedirs(args.out, exist_ok=True)
    _write_csv(os.path.join(args.out, "value_function.csv"), ["y", "v"],
               ((f"{y:.10g}", f"{v:.12g}") for y, v in zip(vf.grid, vf.v)))
    print(f"beta* = {vf.beta_star:.6f}")
    print(f"h/eta = {vf.limit:.6f}   v(0) = {vf.v[0]:.6f}   v(y_max) = {vf.v[-1]:.6f}")
    print(f"bisection iterations = {vf.iterations}   grid points = {vf.grid.size}")
    return EXIT_OK


def _policies_for(settings, model, econ, plan, pricing_kinds, dispatch_kinds):
    vf = None
    if "dynamic" in pricing_kinds:
        vf, _ = _solve_vf(model, econ, plan)
    pricing = [PricingPolicy(kind=k, plan=plan, econ=econ, n=model.n,
                             vf=vf if k == "dynamic" else None)
               for k in pricing_kinds]
    dispatch = [DispatchPolicy(kind=k, safety_stock=settings.safety_stock)
                for k in dispatch_kinds]
    return pricing, dispatch


def cmd_simulate(args, threads) -> int:
    model, econ, settings, plan = _prepare(args)
    pricing_kind = (args.pricing or [settings.pricing])[0]
    dispatch_kind = (args.dispatch or [settings.dispatch])[0]
    pricing, dispatch = _policies_for(settings, model, econ, plan,
                                      [pricing_kind], [dispatch_kind])
    cell = run_cell(model, econ, plan, pricing[0], dispatch[0],
                    settings.horizon_hours, settings.warmup_hours,
                    settings.replications, settings.seed, threads)
    os.makedirs(args.out, exist_ok=True)
    I = model.num_regions
    header = ["rep", "seed", "avg_cost", "avg_cost_with_idleness", "revenue",
              "holding", "traveling_fraction", "mean_workload"] \
        + [f"idle_{i + 1}" for i in range(I)] + [f"served_{i + 1}" for i in range(I)]
    rows = []
    for k, rep in enumerate(cell.reports):
        rows.append([k, rep.seed, f"{rep.avg_cost:.6f}",
                     f"{rep.avg_cost_with_idleness:.6f}", f"{rep.revenue:.6f}",
                     f"{rep.holding:.6f}", f"{rep.traveling_fraction:.6f}",
                     f"{rep.mean_workload:.6f}"]
                    + [f"{x:.6f}" for x in rep.idle_fraction]
                    + [int(x) for x in rep.served])
    _write_csv(os.path.join(args.out, "replications.csv"), header, rows)
    print(f"{pricing_kind} pricing + {dispatch_kind} dispatch: "
          f"avg cost {cell.mean_cost:.2f} +/- {cell.ci_half_width:.2f} "
          f"({settings.replications} reps)")
    return EXIT_OK


def cmd_experiment(args, threads) -> int:
    model, econ, settings, plan = _prepare(args)
    pricing_kinds = args.pricing or list(PRICING_KINDS)
    dispatch_kinds = args.dispatch or list(DISPATCH_KINDS)
    pricing, dispatch = _policies_for(settings, model, econ, plan,
                                      pricing_kinds, dispatch_kinds)
    rows = []
    print(f"{'pricing':<10}{'dispatch':<10}{'mean cost':>14}{'95% hw':>12}")
    for pp in pricing:
        for dp in dispatch:
            cell = run_cell(model, econ, plan, pp, dp, settings.horizon_hours,
                            settings.warmup_hours, settings.replications,
                            settings.seed, threads)
            rows.append([cell.pricing, cell.dispatch,
                         f"{cell.mean_cost:.6f}", f"{cell.ci_half_width:.6f}"])
            print(f"{cell.pricing:<10}{cell.dispatch:<10}"
                  f"{cell.mean_cost:>14.2f}{cell.ci_half_width:>12.2f}")
    os.makedirs(args.out, exist_ok=True)
    _write_csv(os.path.join(args.out, "table1.csv"),
               ["pricing", "dispatch", "mean_cost", "ci_half_width"], rows)
    return EXIT_OK


def _parse_sweep(spec: str):
    if not spec or "=" not in spec:
        raise ConfigError("sweep must look like h=5,10,15 or c=10,20")
    name, _, raw = spec.partition("=")
    name = name.strip()
    if name not in ("h", "c"):
        raise ConfigError(f"sweep parameter must be 'h' or 'c', got {name!r}")
    values = [float(x) for x in raw.split(",") if x.strip()]
    if not values:
        raise ConfigError("sweep needs at least one value")
    return name, values


def cmd_sensitivity(args, threads) -> int:
    if args.sweep is None:
        raise ConfigError("sensitivity requires --sweep")
    name, values = _parse_sweep(args.sweep)
    model, econ, settings, plan = _prepare(args)
    pricing_kinds = args.pricing or list(PRICING_KINDS)
    dispatch_kinds = args.dispatch or ["dp1", "dp2"]
    rows = []
    for value in values:
        if name == "h":
            swept = EconParams(demand_a=econ.demand_a, demand_b=econ.demand_b,
                               h0=econ.h0, h=np.full(model.num_regions, value),
                               c=econ.c)
            if not np.all(swept.h > swept.h0):
                raise ConfigError(f"sweep value {value} violates h_i > h0 = {econ.h0}")
        else:
            swept = EconParams(demand_a=econ.demand_a, demand_b=econ.demand_b,
                               h0=econ.h0, h=econ.h,
                               c=np.full(model.num_regions, value))
        pricing, dispatch = _policies_for(settings, model, swept, plan,
                                          pricing_kinds, dispatch_kinds)
        for pp in pricing:
            for dp in dispatch:
                cell = run_cell(model, swept, plan, pp, dp, settings.horizon_hours,
                                settings.warmup_hours, settings.replications,
                                settings.seed, threads)
                rows.append([name, value, cell.pricing, cell.dispatch,
                             f"{cell.mean_cost:.6f}", f"{cell.ci_half_width:.6f}"])
                print(f"{name}={value:<8g}{cell.pricing:<10}{cell.dispatch:<10}"
                      f"{cell.mean_cost:>14.2f} +/- {cell.ci_half_width:.2f}")
    os.makedirs(args.out, exist_ok=True)
    _write_csv(os.path.join(args.out, "sensitivity.csv"),
               ["param", "value", "pricing", "dispatch", "mean_cost", "ci_half_width"],
               rows)
    return EXIT_OK


def main(argv=None) -> int:
    started = time.time()
    parser = build_parser()
    args = parser.parse_args(argv)
    threads = args.threads if args.threads is not None else _default_threads()
    try:
        if args.command == "plan":
            rc = cmd_plan(args)
        elif args.command == "solve":
            rc = cmd_solve(args)
        elif args.command == "simulate":
            rc = cmd_simulate(args, threads)
        elif args.command == "experiment":
            rc = cmd_experiment(args, threads)
        else:
            rc = cmd_sensitivity(args, threads)
    except (PlanError, EwfError) as exc:
        print(f"model assumption failure: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (BellmanError, SimFailure) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    resolved = {
        "seed": args.seed, "reps": args.reps, "horizon": args.horizon,
        "warmup": args.warmup, "pricing": args.pricing, "dispatch": args.dispatch,
        "sweep": args.sweep, "threads": threads,
    }
    try:
        os.makedirs(args.out, exist_ok=True)
        _write_manifest(args.out, args.command, args, resolved, started)
    except OSError as exc:
        print(f"error writing manifest: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return rc


if __name__ == "__main__":
    sys.exit(main())

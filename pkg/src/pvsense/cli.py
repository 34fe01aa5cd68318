"""Batch command-line front-end.

Subcommands: ``loadflow``, ``validate-dist``, ``stats``, ``hc``.  Every run
writes a manifest (resolved configuration, seed, feeder checksum, version)
next to its outputs; identical seeds reproduce outputs byte for byte.

Exit codes: 0 success, 1 numerical failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .distributions import (chi_square_params, future_voltage_distribution,
                            magnitude_distribution, violation_probability)
from .feeder import (PHASES, PHASE_INDEX, REFERENCE_PU, FeederError,
                     bundled_feeder_text, load_feeder)
from .hosting import HCConfig, hc_loadflow, hc_stpvsa
from .moments import MomentError, PowerChangeModel, multi_actor_moments
from .montecarlo import (Histogram, ScenarioConfig,
                         empirical_voltage_distribution, js_distance)
from .powerflow import PowerFlowError, solve
from .sensitivity import default_candidates, path_statistics

USAGE_ERROR = 2
NUMERICAL_ERROR = 1


def _load_net(spec: str):
    if os.path.exists(spec):
        with open(spec, encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = bundled_feeder_text(spec)
    return load_feeder(text), hashlib.sha256(text.encode()).hexdigest()


def _write_manifest(args, checksum: str, seconds: float, extra=None):
    conf = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    manifest = {
        "command": args.command,
        "config": conf,
        "seed": getattr(args, "seed", None),
        "feeder_sha256": checksum,
        "version": __version__,
        "wall_seconds": seconds,
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(args.out_dir, "manifest.json")
    os.makedirs(args.out_dir, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, default=str)
        fh.write("\n")


def _emit(args, rows, header, json_meta):
    """Print rows as CSV or JSON according to --format."""
    if args.format == "csv":
        print(",".join(header))
        for row in rows:
            print(",".join(str(x) for x in row))
    else:
        payload = {"meta": json_meta,
                   "rows": [dict(zip(header, row)) for row in rows]}
        print(json.dumps(payload, indent=2))


def cmd_loadflow(args) -> int:
    net, checksum = _load_net(args.feeder)
    t0 = time.perf_counter()
    sol = solve(net, tol=args.tol, max_iter=args.max_iter)
    rows = []
    for i, nid in enumerate(net.nodes):
        for p, pix in PHASE_INDEX.items():
            if not net.phase_mask[i, pix]:
                continue
            v = sol.v[i, pix] / net.v_base
            rows.append((nid, p, f"{abs(v):.9f}",
                         f"{math.degrees(np.angle(v)):.6f}"))
    meta = {"iterations": sol.iterations, "residual_pu": sol.residual_pu,
            "residual_kva": sol.residual_kva, "tol": args.tol}
    _emit(args, rows, ("node", "phase", "magnitude_pu", "angle_deg"), meta)
    _write_manifest(args, checksum, time.perf_counter() - t0, {"result": meta})
    return 0


def _pcm_from_args(net, args) -> PowerChangeModel:
    return PowerChangeModel.from_phase_params(
        net.s_base,
        sigma_p2_kw2=[args.sigma_p2 if p in args.actor_phases else 0.0
                      for p in PHASES],
        sigma_q2_kvar2=[args.sigma_q2 if p in args.actor_phases else 0.0
                        for p in PHASES],
        rho_p=args.rho_p, rho_q=args.rho_q, rho_pq=args.rho_pq)


def cmd_validate_dist(args) -> int:
    net, checksum = _load_net(args.feeder)
    t0 = time.perf_counter()
    pcm = _pcm_from_args(net, args)
    fixed = None
    if args.fixed_actors:
        rng = np.random.Generator(np.random.PCG64(args.seed))
        cand = default_candidates(net)
        fixed = tuple(np.asarray(cand)[
            rng.permutation(len(cand))[:args.actors]])
    cfg = ScenarioConfig(
        observation_node=args.obs_node, phase=args.phase,
        n_actors=args.actors, pcm=pcm, n_samples=args.n, seed=args.seed,
        actors=fixed, bins=args.bins)
    emp = empirical_voltage_distribution(net, cfg, threads=args.threads)
    hist = emp.dv_histogram()

    stats = path_statistics(net, args.obs_node, args.phase,
                            default_candidates(net))
    mom = multi_actor_moments(stats, pcm, args.actors)
    dist = magnitude_distribution(mom)
    js = js_distance(hist, dist)

    os.makedirs(args.out_dir, exist_ok=True)
    xs = np.linspace(hist.edges[0], hist.edges[-1], 512)
    with open(os.path.join(args.out_dir, "analytical_pdf.csv"), "w",
              encoding="utf-8") as fh:
        fh.write("x,pdf\n")
        for x, y in zip(xs, np.asarray(dist.pdf(xs))):
            fh.write(f"{x:.9e},{y:.9e}\n")
    dens = hist.density()
    with open(os.path.join(args.out_dir, "empirical_hist.csv"), "w",
              encoding="utf-8") as fh:
        fh.write("bin_lo,bin_hi,density\n")
        for lo, hi, d in zip(hist.edges[:-1], hist.edges[1:], dens):
            fh.write(f"{lo:.9e},{hi:.9e},{d:.9e}\n")

    summary = {
        "js_distance": js,
        "n": args.n,
        "seed": args.seed,
        "n_failed": emp.n_failed,
        "distribution": type(dist).__name__,
        "params": {
            "observation_node": args.obs_node, "phase": args.phase,
            "actors": args.actors, "sigma_p2_kw2": args.sigma_p2,
            "sigma_q2_kvar2": args.sigma_q2, "rho_p": args.rho_p,
            "rho_q": args.rho_q, "rho_pq": args.rho_pq,
            "fixed_actors": list(fixed) if fixed else None,
        },
    }
    with open(os.path.join(args.out_dir, "summary.json"), "w",
              encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    print(json.dumps(summary, indent=2))
    _write_manifest(args, checksum, time.perf_counter() - t0)
    return 0


def cmd_stats(args) -> int:
    net, checksum = _load_net(args.feeder)
    t0 = time.perf_counter()
    pcm = _pcm_from_args(net, args)
    if args.mu_p or args.mu_q:
        pcm = pcm.with_mean(-args.mu_p / 3.0 if args.balanced_mean else -args.mu_p,
                            -args.mu_q, net.s_base)
    stats = path_statistics(net, args.obs_node, args.phase,
                            default_candidates(net))
    mom = multi_actor_moments(stats, pcm, args.actors)
    lam, w, v = chi_square_params(mom)
    s2 = mom.var_r + mom.var_i
    theta = 2 * (mom.var_r ** 2 + mom.var_i ** 2 + 2 * mom.c ** 2) / max(s2, 1e-30)
    m_nak = s2 / theta if theta > 0 else float("nan")
    out = {
        "node": args.obs_node, "phase": args.phase, "n_actors": args.actors,
        "mu_r": mom.mu_r, "mu_i": mom.mu_i,
        "var_r": mom.var_r, "var_i": mom.var_i, "c": mom.c,
        "lambda": lam, "w": w, "v": v,
        "k": math.sqrt(w), "sigma": math.sqrt(lam),
        "m": m_nak, "omega": math.sqrt(m_nak * theta) if theta > 0 else 0.0,
        "rho_rx": stats.rho_rx,
    }
    print(json.dumps(out, indent=2))
    _write_manifest(args, checksum, time.perf_counter() - t0)
    return 0


def cmd_hc(args) -> int:
    net, checksum = _load_net(args.feeder)
    t0 = time.perf_counter()
    try:
        v_min, v_max = (float(x) for x in args.limits.split(","))
    except ValueError:
        print(f"bad --limits {args.limits!r}, expected LO,HI", file=sys.stderr)
        return USAGE_ERROR
    cfg = HCConfig(v_min=v_min, v_max=v_max, scenarios=args.scenarios,
                   seed=args.seed, max_pv_size_kw=args.max_pv_size,
                   pv_table_path=args.pv_table,
                   count_threshold=args.count_threshold,
                   prob_threshold=args.prob_threshold)
    if args.method == "stpvsa":
        result = hc_stpvsa(net, cfg)
    else:
        result = hc_loadflow(net, cfg, threads=args.threads)
    os.makedirs(args.out_dir, exist_ok=True)
    with open(os.path.join(args.out_dir, "hc_levels.csv"), "w",
              encoding="utf-8") as fh:
        fh.write("level,n_units,unit_kw,violations,worst_node\n")
        for r in result.records:
            fh.write(f"{r.level},{r.n_units},{r.unit_kw:.6f},"
                     f"{r.violations:.6f},{r.worst_node}\n")
    print(json.dumps(result.to_dict(), indent=2))
    print(f"{result.method} hosting capacity {result.hc_percent:.0f}% "
          f"in {result.seconds:.2f} s", file=sys.stderr)
    _write_manifest(args, checksum, time.perf_counter() - t0,
                    {"result_seconds": result.seconds,
                     "hc_percent": result.hc_percent})
    return 0


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--feeder", default="ieee37",
                   help="bundled feeder name (ieee37, ieee123) or a file path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out-dir", default=".")


def _add_pcm_flags(p: argparse.ArgumentParser):
    p.add_argument("--obs-node", default="709",
                   help="observation node (default 709)")
    p.add_argument("--phase", choices=tuple("abc"), default="a")
    p.add_argument("--actors", type=int, default=9)
    p.add_argument("--actor-phases", default="a",
                   help="phases carrying random power change (e.g. 'a' or 'abc')")
    p.add_argument("--sigma-p2", type=float, default=5.0,
                   help="variance of real power change, kW^2")
    p.add_argument("--sigma-q2", type=float, default=0.5,
                   help="variance of reactive power change, kvar^2")
    p.add_argument("--rho-p", type=float, default=0.2)
    p.add_argument("--rho-q", type=float, default=0.2)
    p.add_argument("--rho-pq", type=float, default=-0.5)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pvsense",
        description="Probabilistic voltage sensitivity and PV hosting "
                    "capacity for unbalanced radial feeders")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("loadflow", help="solve the base case, print phasors")
    _add_common(p)
    p.add_argument("--tol", type=float, default=1e-6,
                   help="power mismatch tolerance, pu")
    p.add_argument("--max-iter", type=int, default=100)
    p.set_defaults(func=cmd_loadflow)

    p = sub.add_parser("validate-dist",
                       help="empirical vs analytical |dV| distribution")
    _add_common(p)
    _add_pcm_flags(p)
    p.add_argument("--n", type=int, default=100_000, help="sample count")
    p.add_argument("--bins", type=int, default=200)
    p.add_argument("--fixed-actors", action="store_true",
                   help="draw one actor placement and hold it fixed")
    p.set_defaults(func=cmd_validate_dist)

    p = sub.add_parser("stats",
                       help="moments and distribution parameters for a node")
    _add_common(p)
    _add_pcm_flags(p)
    p.add_argument("--mu-p", type=float, default=0.0,
                   help="mean injection per actor, kW (generation-positive)")
    p.add_argument("--mu-q", type=float, default=0.0)
    p.add_argument("--balanced-mean", action="store_true", default=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("hc", help="hosting capacity")
    _add_common(p)
    p.add_argument("--method", choices=("loadflow", "stpvsa"),
                   default="stpvsa")
    p.add_argument("--scenarios", type=int, default=1000)
    p.add_argument("--limits", default="0.95,1.05")
    p.add_argument("--max-pv-size", type=float, default=None)
    p.add_argument("--pv-table", default=None)
    p.add_argument("--count-threshold", type=int, default=1)
    p.add_argument("--prob-threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_hc)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "n", 1) < 1:
        print("--n must be >= 1", file=sys.stderr)
        return USAGE_ERROR
    if getattr(args, "scenarios", 1) < 1:
        print("--scenarios must be >= 1", file=sys.stderr)
        return USAGE_ERROR
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except FeederError as exc:
        print(f"feeder error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (PowerFlowError, MomentError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR


if __name__ == "__main__":
    sys.exit(main())

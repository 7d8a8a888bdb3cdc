"""Command line entry point: ``hslg <subcommand> [flags]``.

Exit codes: 0 success, 1 failed verdict or rejected table, 2 usage error,
3 unreadable config, 4 missing or mismatched V table.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import gibbs, softwalks
from .config import ConfigError, ExperimentConfig, default_output_root
from .distributions import ParameterError, PolymerParams, trigamma
from .persist import RunDir, RunExists, dumps, read_column
from .rng import RngStream
from .stats import EmpiricalDistribution, Verdict, ks_two_sample, ks_vs_cdf

EXIT_FAIL, EXIT_USAGE, EXIT_CONFIG, EXIT_VTABLE = 1, 2, 3, 4


class MissingVTable(RuntimeError):
    pass


def _ints(text: str) -> list:
    return [int(float(x)) for x in text.split(",") if x.strip()]


def _floats(text: str) -> list:
    return [float(x) for x in text.split(",") if x.strip()]


# defaults per subcommand; every key is stored in the materialized config
DEFAULTS = {
    "polymer-increments": {"N": 100, "r": 3, "reps": 1000},
    "evolve-stationary": {"N": 100, "r": 3, "reps": 2000, "vtable": None},
    "estimate-v": {"z": [0.0], "n": 64, "reps": 1000},
    "build-vtable": {"grid_min": -8.0, "grid_max": 12.0, "grid_step": 0.25, "schedule": [64, 128, 256, 512],
                     "reps": 1_000_000, "left_rule": "linear"},
    "limit-chain": {"r": 3, "reps": 10_000, "sampler": "sequential", "vtable": None},
    "gibbs-sample": {"kind": "IRW", "T": 4, "a": 0.0, "b": 0.0, "c": None, "burn": None, "thin": None,
                     "draws": 2000, "chains": 4},
    "irw-vs-wprw": {"T": 8, "a": 0.0, "b": 0.0, "draws": 50_000, "chains": 8, "wprw_reps": 2_500_000},
    "meander-check": {"n": 400, "reps": 1_000_000},
    "ni-scaling": {"ns": [100, 400, 1600], "a1": 1.0, "a2": 0.0, "reps": 200_000},
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hslg", description="Half-space log-gamma polymer experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, vtable=False):
        sp.add_argument("--config", help="YAML experiment config (overrides the size flags)")
        sp.add_argument("--theta", type=float, default=1.0)
        sp.add_argument("--alpha", type=float, default=1.0)
        sp.add_argument("--seed", type=int, default=2024)
        sp.add_argument("--out", help="run directory (default: $HSLG_OUTPUT_DIR/<experiment>-<digest>)")
        sp.add_argument("--force", action="store_true", help="redo a complete run")
        sp.add_argument("--no-render", action="store_true", help="skip PNG rendering")
        if vtable:
            sp.add_argument("--vtable", help="V table JSON from build-vtable")
        return sp

    sp = common(sub.add_parser("polymer-increments", help="free-energy increments along the anti-diagonal"))
    sp.add_argument("--N", type=int)
    sp.add_argument("--r", type=int)
    sp.add_argument("--reps", type=int)

    sp = common(sub.add_parser("evolve-stationary", help="evolve limit-chain initial data"), vtable=True)
    sp.add_argument("--N", type=int)
    sp.add_argument("--r", type=int)
    sp.add_argument("--reps", type=int)

    sp = common(sub.add_parser("estimate-v", help="ratio estimate of V(z)"))
    sp.add_argument("--z", type=_floats)
    sp.add_argument("--n", type=int)
    sp.add_argument("--reps", type=int)

    sp = common(sub.add_parser("build-vtable", help="tabulate V on a grid with the doubling check"))
    sp.add_argument("--grid-min", type=float)
    sp.add_argument("--grid-max", type=float)
    sp.add_argument("--grid-step", type=float)
    sp.add_argument("--schedule", type=_ints)
    sp.add_argument("--reps", type=int)
    sp.add_argument("--left-rule", choices=["linear", "clamp"])

    sp = common(sub.add_parser("limit-chain", help="prefixes of the limiting two-layer chain"), vtable=True)
    sp.add_argument("--r", type=int)
    sp.add_argument("--reps", type=int)
    sp.add_argument("--sampler", choices=["sequential", "lg"])

    sp = common(sub.add_parser("gibbs-sample", help="heat-bath samples on a two-row domain"))
    sp.add_argument("--kind", choices=["IRW", "Phi"])
    sp.add_argument("--T", type=int)
    sp.add_argument("--a", type=float)
    sp.add_argument("--b", type=float)
    sp.add_argument("--c", type=_floats, help="bottom row values (Phi)")
    sp.add_argument("--burn", type=int)
    sp.add_argument("--thin", type=int)
    sp.add_argument("--draws", type=int)
    sp.add_argument("--chains", type=int)

    sp = common(sub.add_parser("irw-vs-wprw", help="compare IRW MCMC with weighted paired walks"))
    sp.add_argument("--T", type=int)
    sp.add_argument("--a", type=float)
    sp.add_argument("--b", type=float)
    sp.add_argument("--draws", type=int)
    sp.add_argument("--chains", type=int)
    sp.add_argument("--wprw-reps", type=int)

    sp = common(sub.add_parser("meander-check", help="soft-free endpoint vs the Rayleigh law"))
    sp.add_argument("--n", type=int)
    sp.add_argument("--reps", type=int)

    sp = common(sub.add_parser("ni-scaling", help="sqrt(n) times the non-intersection probability"))
    sp.add_argument("--ns", type=_ints)
    sp.add_argument("--a1", type=float)
    sp.add_argument("--a2", type=float)
    sp.add_argument("--reps", type=int)

    sp = sub.add_parser("ks-compare", help="two-sample KS between CSV columns")
    sp.add_argument("a")
    sp.add_argument("b")
    sp.add_argument("--column", help="column name (default: last column)")
    sp.add_argument("--weight-column", help="log-weight column applied to both files if present")
    sp.add_argument("--level", type=float, default=0.05)

    sp = sub.add_parser("verify-all", help="run the acceptance suite")
    sp.add_argument("--profile", choices=["quick", "full"], default="quick")
    sp.add_argument("--only", help="comma list of criteria, e.g. A1,A3")
    sp.add_argument("--seed", type=int, default=2024)
    sp.add_argument("--vtable", help="reuse an existing V table")
    sp.add_argument("--out")
    sp.add_argument("--force", action="store_true")
    sp.add_argument("--no-render", action="store_true")
    return p


def make_config(args) -> ExperimentConfig:
    name = args.command
    sizes = dict(DEFAULTS[name])
    if args.config:
        cfg = ExperimentConfig.load(args.config)
        if cfg.experiment != name:
            raise ConfigError(f"config is for '{cfg.experiment}', not '{name}'")
        unknown = set(cfg.sizes) - set(sizes)
        if unknown:
            raise ConfigError(f"unknown size keys {sorted(unknown)}")
        sizes.update(cfg.sizes)
        return ExperimentConfig(name, cfg.theta, cfg.alpha, cfg.seed, sizes, cfg.output_dir)
    for key in sizes:
        val = getattr(args, key, None)
        if val is not None:
            sizes[key] = val
    if sizes.get("vtable"):
        sizes["vtable"] = str(Path(sizes["vtable"]).resolve())
    return ExperimentConfig(name, args.theta, args.alpha, args.seed, sizes)


def _run_dir(args, cfg: ExperimentConfig) -> RunDir:
    root = args.out or cfg.output_dir or (default_output_root() / f"{cfg.experiment}-{cfg.digest()}")
    return RunDir(root, cfg, force=args.force)


def _load_vtable(path, theta, alpha):
    from .vfunction import VTable

    if not path:
        raise MissingVTable("this subcommand needs --vtable (see build-vtable)")
    p = Path(path)
    if not p.exists():
        raise MissingVTable(f"V table {p} not found")
    try:
        tab = VTable.load(p)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise MissingVTable(f"V table {p} unreadable: {exc}") from exc
    if abs(tab.theta - theta) > 1e-12 or abs(tab.alpha - alpha) > 1e-12:
        raise MissingVTable(f"V table {p} was built for theta={tab.theta}, alpha={tab.alpha}")
    if not tab.accepted:
        raise MissingVTable(f"V table {p} was rejected by the doubling check")
    return tab


def _ecdf(x, w=None, points: int = 400):
    d = EmpiricalDistribution(x, w)
    qs = d.quantile(np.linspace(0.001, 0.999, points))
    return qs, d.cdf(qs)


# --------------------------------------------------------------------------
# subcommands


def cmd_polymer_increments(cfg, run):
    from .polymer import simulate_increments_batch

    s = cfg.sizes
    P = PolymerParams(cfg.theta, cfg.alpha)
    inc = simulate_increments_batch(P, s["N"], s["r"], s["reps"], RngStream.for_experiment(cfg.seed, cfg.experiment))
    run.write_csv("increments.csv", ["replica", "k", "increment"],
                  ((i, k + 1, inc[i, k]) for i in range(inc.shape[0]) for k in range(inc.shape[1])))
    if inc.shape[1] >= 2:
        run.add_plot("increment_k2_ecdf", *_ecdf(inc[:, 1]), "Increment at k=2", "increment", "ECDF", "step")
    return {"mean": inc.mean(axis=0), "var": inc.var(axis=0, ddof=1), "replicas": inc.shape[0]}, True


def cmd_evolve_stationary(cfg, run):
    from .limitchain import sample_sequential_pv
    from .polymer import evolve_stationary_batch

    s = cfg.sizes
    P = PolymerParams(cfg.theta, cfg.alpha)
    tab = _load_vtable(s["vtable"], P.theta, P.alpha)
    N, r = s["N"], s["r"]
    ch = sample_sequential_pv(N + r + 1, tab, P.theta, P.alpha, s["reps"],
                              RngStream.for_experiment(cfg.seed, cfg.experiment + "/chain"))
    out = evolve_stationary_batch(P, ch.s1, N, r, RngStream.for_experiment(cfg.seed, cfg.experiment + "/evolve"))
    run.write_csv("evolved.csv", ["replica", "k", "input", "output"],
                  ((i, k + 1, ch.s1[i, k], out[i, k]) for i in range(out.shape[0]) for k in range(r)))
    res = ks_two_sample(EmpiricalDistribution(out[:, 1]), EmpiricalDistribution(ch.s1[:, 1]))
    v = Verdict("stationarity_k2", res.statistic, 0.05, res.statistic <= 0.05, float(s["reps"]), cfg.seed)
    run.add_plot("evolved_k2_ecdf", *_ecdf(out[:, 1]), "Increment k=2 after evolution", "increment", "ECDF",
                 "step", reference=_ecdf(ch.s1[:, 1]))
    return {"verdicts": [v.to_dict()]}, v.passed


def cmd_estimate_v(cfg, run):
    from .vfunction import estimate_grid

    s = cfg.sizes
    z = np.sort(np.asarray(s["z"], dtype=float))
    if s["n"] < 16:
        raise ParameterError("n must be at least 16")
    est = estimate_grid(z, [s["n"]], s["reps"], cfg.theta, cfg.alpha,
                        RngStream.for_experiment(cfg.seed, cfg.experiment))
    run.write_csv("v.csv", ["z", "v", "stderr"], zip(z, est.v[0], est.stderr[0]))
    if z.size > 1:
        run.add_plot("v_estimate", z, est.v[0], "V estimate", "z", "V(z)", "points")
    return {"z": z, "v": est.v[0], "stderr": est.stderr[0], "denominator": est.denom[0]}, True


def cmd_build_vtable(cfg, run):
    from .vfunction import build_v_table

    s = cfg.sizes
    grid = np.round(np.arange(s["grid_min"], s["grid_max"] + 0.5 * s["grid_step"], s["grid_step"]), 12)
    tab = build_v_table(grid, s["schedule"], s["reps"], cfg.theta, cfg.alpha,
                        RngStream.for_experiment(cfg.seed, cfg.experiment), left_rule=s["left_rule"], strict=False)
    tab.save(run.path / "vtable.json")
    run.files.append("vtable.json")
    est = tab.estimates
    header = ["z"] + [f"v_n{n}" for n in est.schedule] + ["stderr", "flag"]
    rows = ([z] + [est.v[j, i] for j in range(len(est.schedule))] + [tab.stderr[i], int(tab.flags[i])]
            for i, z in enumerate(tab.grid))
    run.write_csv("vtable.csv", header, rows)
    run.add_plot("vtable", tab.grid, tab.v, f"V estimate (n={tab.n_used})", "z", "V(z)", "points")
    v = Verdict("vtable_doubling", tab.flag_fraction, 0.9, bool(tab.accepted), None, cfg.seed,
                {"positive": tab.positive})
    return {"verdicts": [v.to_dict()], "accepted": tab.accepted, "table": "vtable.json"}, bool(tab.accepted)


def cmd_limit_chain(cfg, run):
    from .limitchain import sample_lg_prefix, sample_sequential_pv

    s = cfg.sizes
    tab = _load_vtable(s["vtable"], cfg.theta, cfg.alpha)
    rng = RngStream.for_experiment(cfg.seed, cfg.experiment)
    if s["sampler"] == "lg":
        ch = sample_lg_prefix(s["r"], tab, cfg.theta, cfg.alpha, s["reps"], rng)
    else:
        ch = sample_sequential_pv(s["r"], tab, cfg.theta, cfg.alpha, s["reps"], rng)
    run.write_csv("chain.csv", ["replica", "k", "s1up", "s2up", "log_weight"], ch.rows())
    if ch.r >= 2:
        run.add_plot("s1up_k2_ecdf", *_ecdf(ch.s1[:, 1], ch.weights), "S1 at k=2", "value", "ECDF", "step")
    return {"provenance": ch.provenance, "ess": ch.ess, "diagnostics": ch.diagnostics}, True


def cmd_gibbs_sample(cfg, run):
    s = cfg.sizes
    P = PolymerParams(cfg.theta, cfg.alpha)
    T = s["T"]
    c = None if s["kind"] == "IRW" else s["c"]
    if s["kind"] == "Phi" and (c is None or len(c) != T):
        raise ParameterError("Phi needs --c with T values")
    dom = gibbs.phi_domain(P, T, s["a"], s["b"], c)
    burn = s["burn"] if s["burn"] is not None else 200 * T
    thin = s["thin"] if s["thin"] is not None else T
    res = gibbs.run_mcmc(dom, burn, thin, s["draws"], s["chains"],
                         RngStream.for_experiment(cfg.seed, cfg.experiment), monitor=gibbs.irw_observables(T))
    run.write_json("domain.json", dom.to_dict())
    names = [f"L{i}({j})" for i, j in dom.interior]
    vals = res.values
    run.write_csv("samples.csv", ["chain", "draw"] + names,
                  ([ch, k] + list(vals[ch, k]) for ch in range(vals.shape[0]) for k in range(vals.shape[1])))
    flat = res.flat()
    for row in (1, 2):
        cols = [dom.index[v] for v in dom.interior if v[0] == row]
        js = [v[1] for v in dom.interior if v[0] == row]
        run.add_plot(f"row{row}_mean", js, flat[:, cols].mean(axis=0), f"Mean of row {row}", "column j",
                     "mean value", "points")
    return {"rhat": res.rhat, "converged": res.converged, "burn": burn, "thin": thin,
            "colors": dom.color_counts(), "kernel_failures": res.failures}, res.converged and res.failures == 0


def cmd_irw_vs_wprw(cfg, run):
    s = cfg.sizes
    P = PolymerParams(cfg.theta, cfg.alpha)
    T = s["T"]
    S = gibbs.irw_sample(T, s["a"], s["b"], P, reps=s["draws"], chains=s["chains"],
                         rng=RngStream.for_experiment(cfg.seed, cfg.experiment + "/irw"))
    W = gibbs.wprw_importance_sample(T, s["a"], s["b"], P, s["wprw_reps"],
                                     RngStream.for_experiment(cfg.seed, cfg.experiment + "/wprw"))
    rows, worst = [], 0.0
    for k in range(1, T):
        for name, v, x, y in (("L1", (1, 2 * k - 1), S.column((1, 2 * k - 1)), W.s1[:, k - 1]),
                              ("L2", (2, 2 * k), S.column((2, 2 * k)), W.s2[:, k - 1])):
            stat = ks_two_sample(EmpiricalDistribution(x), EmpiricalDistribution(y, W.weights)).statistic
            rows.append((f"{name}({v[1]})", stat))
            worst = max(worst, stat)
    run.write_csv("ks.csv", ["coordinate", "ks"], rows)
    run.add_plot("L1_1_ecdf", *_ecdf(S.column((1, 1))), "L1(1): IRW (solid) vs WPRW (dashed)", "value",
                 "ECDF", "step", reference=_ecdf(W.s1[:, 0], W.weights))
    v = Verdict("irw_vs_wprw", worst, 0.07, worst <= 0.07 and S.converged, W.ess, cfg.seed, {"rhat": S.rhat})
    return {"verdicts": [v.to_dict()]}, v.passed


def cmd_meander_check(cfg, run):
    from .oracles import rayleigh_cdf

    s = cfg.sizes
    n = s["n"]
    smp = softwalks.soft_free_sample(n, softwalks.InitCondition.dirac(0.0), softwalks.InitCondition.g_alpha(1.0),
                                     cfg.theta, s["reps"], RngStream.for_experiment(cfg.seed, cfg.experiment),
                                     observe=[n - 1])
    u = (smp.column(n - 1, 1) - smp.column(n - 1, 2)) / math.sqrt(n)
    F = rayleigh_cdf(4.0 * trigamma(cfg.theta))
    ks = ks_vs_cdf(EmpiricalDistribution(u, smp.weights), F)
    run.write_csv("weighted.csv", ["replica", "log_weight", "u"], zip(range(u.size), smp.log_weights, u))
    xs, ys = _ecdf(u, smp.weights)
    run.add_plot("meander_ecdf", xs, ys, "Endpoint gap vs Rayleigh", "u", "CDF", "step", reference=(xs, F(xs)))
    v = Verdict("meander_endpoint", ks, 0.05, ks <= 0.05, smp.ess, cfg.seed)
    return {"verdicts": [v.to_dict()]}, v.passed


def cmd_ni_scaling(cfg, run):
    s = cfg.sizes
    rows = []
    for n in s["ns"]:
        p, se = softwalks.nonintersect_prob(n, s["a1"], s["a2"], cfg.theta, s["reps"],
                                            RngStream.for_experiment(cfg.seed, cfg.experiment, n))
        rows.append((n, p, se, math.sqrt(n) * p))
    run.write_csv("ni.csv", ["n", "p", "stderr", "sqrt_n_p"], rows)
    sc = [r[3] for r in rows]
    spread = (max(sc) - min(sc)) / float(np.mean(sc))
    run.add_plot("ni_scaling", [r[0] for r in rows], sc, "sqrt(n) P(NI)", "n", "sqrt(n) P", "points")
    v = Verdict("ni_scaling", spread, 0.15, spread < 0.15, None, cfg.seed)
    return {"verdicts": [v.to_dict()]}, v.passed


def cmd_ks_compare(args) -> int:
    xa, wa = read_column(args.a, args.column, args.weight_column)
    xb, wb = read_column(args.b, args.column, args.weight_column)
    res = ks_two_sample(EmpiricalDistribution(xa, wa), EmpiricalDistribution(xb, wb), level=args.level)
    out = {"statistic": res.statistic, "critical": res.critical, "pass": res.passed, "ess1": res.ess1,
           "ess2": res.ess2}
    sys.stdout.write(dumps(out))
    return 0 if res.passed else EXIT_FAIL


def cmd_verify_all(args) -> int:
    from .acceptance import CRITERIA, PROFILES, Suite

    which = [c.strip().upper() for c in args.only.split(",")] if args.only else list(CRITERIA)
    bad = [c for c in which if c not in CRITERIA]
    if bad:
        print(f"unknown criteria {bad}", file=sys.stderr)
        return EXIT_USAGE
    table = None
    if args.vtable:
        table = _load_vtable(args.vtable, 1.0, 1.0)
    prof = PROFILES[args.profile]
    cfg = ExperimentConfig("verify-all", 1.0, 1.0, args.seed, {"profile": prof.to_dict(), "criteria": which})
    run = _run_dir(args, cfg)
    suite = Suite(prof, args.seed, table=table)
    verdicts = suite.run(which)
    for v in verdicts:
        print(v.line())
    run.write_csv("verdicts.csv", ["test_id", "statistic", "threshold", "pass", "ess"],
                  ((v.test_id, v.statistic, v.threshold, v.passed, "" if v.ess is None else v.ess) for v in verdicts))
    ok = all(v.passed for v in verdicts)
    run.finish({"verdicts": [v.to_dict() for v in verdicts], "pass": ok}, render=not args.no_render)
    run._write_manifest("complete", {"timings_s": {k: round(t, 2) for k, t in suite.timings.items()}})
    return 0 if ok else EXIT_FAIL


COMMANDS = {
    "polymer-increments": cmd_polymer_increments,
    "evolve-stationary": cmd_evolve_stationary,
    "estimate-v": cmd_estimate_v,
    "build-vtable": cmd_build_vtable,
    "limit-chain": cmd_limit_chain,
    "gibbs-sample": cmd_gibbs_sample,
    "irw-vs-wprw": cmd_irw_vs_wprw,
    "meander-check": cmd_meander_check,
    "ni-scaling": cmd_ni_scaling,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "ks-compare":
            return cmd_ks_compare(args)
        if args.command == "verify-all":
            return cmd_verify_all(args)
        cfg = make_config(args)
        if cfg.sizes.get("vtable") is not None or "vtable" in DEFAULTS[args.command]:
            _load_vtable(cfg.sizes.get("vtable"), cfg.theta, cfg.alpha)
        run = _run_dir(args, cfg)
        t0 = time.perf_counter()
        summary, ok = COMMANDS[args.command](cfg, run)
        run.finish(summary, render=not args.no_render)
        print(f"{args.command}: {'ok' if ok else 'FAILED'} -> {run.path} ({time.perf_counter() - t0:.1f}s)")
        return 0 if ok else EXIT_FAIL
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingVTable as exc:
        print(f"V table error: {exc}", file=sys.stderr)
        return EXIT_VTABLE
    except RunExists as exc:
        print(str(exc))
        return 0
    except ParameterError as exc:
        print(f"parameter error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

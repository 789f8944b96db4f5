"""Command-line entry point: seeded runs, bound reports, and experiment suites.

Subcommands:

  run         one SMC run from a config file or preset; writes trace.csv,
              snapshots.csv (if enabled), and summary.json
  bound       evaluate bound reports from a trace CSV and a constants file
  experiment  multi-seed study (exp1 | exp2 | exp3 | toy-discrete |
              toy-quadrature) with per-seed artifacts and aggregate CSVs

Exit codes: 0 success, 2 invalid configuration or input, 3 runtime
degeneracy (ladder stall / particle collapse).
"""

from __future__ import annotations

import argparse
import csv
import json
import statistics as pystats
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .bounds import (
    BoundConstants,
    adaptive_objective,
    adaptive_select_lambda,
    corollary1_terms,
    empirical_bound,
    nonparametric_rate,
    _log_z_interpolator,
)
from .exceptions import (
    ABCSMCError,
    DegenerateSystemError,
    InvalidConfigError,
    LadderStallError,
)
from .models import DiscreteToyModel, enumerated_posterior
from .smc import ExponentialKernel, load_trace_csv, posterior_at_lambda, run_smc
from .statistics import summarize, summarize_batch


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (LadderStallError, DegenerateSystemError) as err:
        print(f"error: run degenerated: {err}", file=sys.stderr)
        return 3
    except ABCSMCError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


def _build_parser():
    parser = argparse.ArgumentParser(prog="abcsmc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="single seeded SMC run")
    _add_config_flags(p_run)
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--out", default="out", help="output directory")
    p_run.set_defaults(func=cmd_run)

    p_bound = sub.add_parser("bound", help="bound reports from a trace CSV")
    p_bound.add_argument("--trace", help="ladder trace CSV (empirical/adaptive modes)")
    p_bound.add_argument("--constants", required=True, help="JSON file of bound constants")
    p_bound.add_argument(
        "--mode", required=True, choices=["empirical", "adaptive", "cor1", "nonparam"]
    )
    p_bound.add_argument("--out", default="out")
    p_bound.set_defaults(func=cmd_bound)

    p_exp = sub.add_parser("experiment", help="multi-seed experiment suite")
    p_exp.add_argument("name", choices=cfgmod.preset_names())
    p_exp.add_argument("--seeds", default="0", help="comma-separated seed list")
    p_exp.add_argument("--override", action="append", default=[], metavar="KEY.PATH=VALUE")
    p_exp.add_argument("--out", default="out")
    p_exp.set_defaults(func=cmd_experiment)
    return parser


def _add_config_flags(p):
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--config", help="JSON config file")
    group.add_argument("--preset", choices=cfgmod.preset_names())
    p.add_argument("--override", action="append", default=[], metavar="KEY.PATH=VALUE")


def _load_run_config(args) -> dict:
    cfg = cfgmod.load_config(args.config) if args.config else cfgmod.preset(args.preset)
    return cfgmod.apply_overrides(cfg, args.override)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _g(x) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def _execute(cfg: dict, seed: int):
    model = cfgmod.build_model(cfg)
    summary = cfgmod.build_summary(cfg)
    dist_spec = cfgmod.build_distance(cfg)
    smc_cfg = cfgmod.build_smc_config(cfg, seed=seed)
    observations = cfgmod.build_observations(cfg, seed)
    system, trace = run_smc(smc_cfg, model, summary, dist_spec, observations)
    return model, summary, dist_spec, smc_cfg, observations, system, trace


def cmd_run(args) -> int:
    cfg = _load_run_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    model, summary, dist_spec, smc_cfg, observations, system, trace = _execute(cfg, args.seed)
    wall = time.perf_counter() - t0

    trace.to_csv(out / "trace.csv")
    if smc_cfg.store_snapshots:
        trace.snapshots_to_csv(out / "snapshots.csv")

    report = {
        "seed": args.seed,
        "status": trace.status,
        "steps": len(trace),
        "lambda_final": system.lam,
        "log_z": system.log_z,
        "m_final": system.m_replicates,
        "sim_calls": system.sim_calls,
        "theta_mean": system.weighted_mean().tolist(),
        "theta_sd": system.weighted_sd().tolist(),
        "wall_time_s": wall,
    }
    if isinstance(model, DiscreteToyModel):
        exact, _ = enumerated_posterior(model, summary, dist_spec, observations, system.lam)
        counts = np.array(
            [np.sum(system.weights() * (system.theta[:, 0] == v)) for v in model.theta_values]
        )
        report["tv_to_enumerated"] = float(0.5 * np.abs(counts - exact).sum())
    if "bound" in cfg:
        constants = BoundConstants(**cfg["bound"])
        if len(trace) > 0 and trace.lambdas[0] < trace.lambdas[-1]:
            lam_hat, sel = adaptive_select_lambda(trace, constants, distance_kind=dist_spec.kind)
            report["lambda_hat"] = lam_hat
            report["adaptive_bound"] = sel.value
        report["empirical_bound"] = empirical_bound(
            system.log_z, system.lam, constants, dist_spec.kind
        ).value
    with open(out / "summary.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"run complete: {len(trace)} steps, lambda={system.lam:g}, status={trace.status}")
    return 0


# ---------------------------------------------------------------------------
# bound
# ---------------------------------------------------------------------------


def cmd_bound(args) -> int:
    with open(args.constants) as fh:
        doc = json.load(fh)
    distance_kind = doc.pop("distance_kind", "lp")
    extras = {k: doc.pop(k) for k in ("beta_grid", "beta_smooth") if k in doc}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"bound_{args.mode}.csv"

    if args.mode == "nonparam":
        if "beta_smooth" not in extras:
            raise InvalidConfigError("nonparam mode needs 'beta_smooth' in the constants file")
        n = int(doc.get("n", 0))
        if n < 2:
            raise InvalidConfigError("nonparam mode needs 'n' >= 2 in the constants file")
        r = nonparametric_rate(n, float(extras["beta_smooth"]))
        _write_csv(
            path,
            ["n", "beta_smooth", "rate", "lambda_n", "c_n", "order_only"],
            [[n, _g(extras["beta_smooth"]), _g(r.rate), _g(r.lambda_n), _g(r.c_n), r.order_only]],
        )
        print(f"wrote {path}")
        return 0

    constants = BoundConstants(**doc)
    if args.mode == "cor1":
        report = corollary1_terms(constants)
        header = ["lambda_star", "value"] + sorted(report.components)
        row = [_g(report.lam_or_beta), _g(report.value)] + [
            _g(report.components[k]) for k in sorted(report.components)
        ]
        _write_csv(path, header, [row])
        print(f"wrote {path}")
        return 0

    if not args.trace:
        raise InvalidConfigError(f"--trace is required for mode {args.mode!r}")
    trace = load_trace_csv(args.trace)

    if args.mode == "empirical":
        rows = []
        for rec in trace.records:
            report = empirical_bound(rec.log_z, rec.lam, constants, distance_kind)
            rows.append(
                [rec.step, _g(rec.lam), _g(report.value)]
                + [_g(report.components[k]) for k in ("neg_log_z", "concentration", "confidence")]
            )
        _write_csv(
            path,
            ["step", "lambda", "bound", "neg_log_z", "concentration", "confidence"],
            rows,
        )
        print(f"wrote {path}")
        return 0

    # adaptive: full beta grid plus the selected row
    log_z_at, lam_lo, lam_hi = _log_z_interpolator(trace)
    grid = extras.get("beta_grid") or np.geomspace(1.0 / lam_hi, 1.0 / lam_lo, 64).tolist()
    lam_hat, sel = adaptive_select_lambda(trace, constants, grid, distance_kind)
    rows = []
    for b in grid:
        if b <= constants.alpha or not (lam_lo <= 1.0 / b <= lam_hi):
            continue
        value = adaptive_objective(float(b), log_z_at, constants, distance_kind)
        rows.append([_g(b), _g(1.0 / b), _g(value), int(abs(1.0 / b - lam_hat) < 1e-15)])
    _write_csv(path, ["beta", "lambda", "objective", "selected"], rows)
    print(f"wrote {path}; selected lambda_hat={lam_hat:.6g} (bound {sel.value:.6g})")
    return 0


# ---------------------------------------------------------------------------
# experiment
# ---------------------------------------------------------------------------


def cmd_experiment(args) -> int:
    seeds = [int(s) for s in str(args.seeds).split(",") if s != ""]
    if not seeds:
        raise InvalidConfigError("--seeds must name at least one seed")
    cfg = cfgmod.apply_overrides(cfgmod.preset(args.name), args.override)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    runner = {
        "exp1": _experiment1,
        "exp2": _experiment2,
        "exp3": _experiment3,
        "toy-discrete": _experiment_toy,
        "toy-quadrature": _experiment_toy,
    }[args.name]
    runner(cfg, seeds, out, args.name)
    print(f"experiment {args.name} complete: {len(seeds)} seed(s), artifacts in {out}")
    return 0


def _seed_dir(out: Path, seed: int) -> Path:
    d = out / f"seed_{seed}"
    d.mkdir(parents=True, exist_ok=True)
    return d


def _run_variant(cfg: dict, seed: int, out_dir: Path, tag: str, **smc_overrides):
    """One run of a config variant; writes its trace under out_dir."""
    cfg = json.loads(json.dumps(cfg))
    cfg["smc"].update(smc_overrides)
    model, summary, dist_spec, smc_cfg, observations, system, trace = _execute(cfg, seed)
    trace.to_csv(out_dir / f"trace_{tag}.csv")
    return model, summary, dist_spec, observations, system, trace


def _posterior_predictive_stats(model, summary, theta, weights, n_obs, seed):
    """Weighted fresh-simulation estimate of the posterior-mean statistic vector."""
    rng = np.random.default_rng([seed, 0x5117])
    sims = model.simulate_batch(theta, n_obs, 1, rng)
    stats = summarize_batch(summary, sims)[:, 0, :]
    return weights @ stats, sims[:, 0, :]


def _truth_stats(cfg: dict, summary, size: int = 1_000_000) -> np.ndarray:
    """Large-sample Monte Carlo estimate of the truth's statistic vector (fixed seed)."""
    probe = json.loads(json.dumps(cfg))
    probe["truth"] = dict(probe["truth"], n=size)
    sample = cfgmod.build_observations(probe, 0)
    return summarize(summary, sample)


def _experiment_toy(cfg, seeds, out, name):
    rows = []
    for seed in seeds:
        sd = _seed_dir(out, seed)
        model, summary, dist_spec, obs, system, trace = _run_variant(cfg, seed, sd, "main")
        row = [seed, len(trace), _g(system.lam), _g(system.log_z), system.sim_calls]
        if isinstance(model, DiscreteToyModel):
            exact, log_z_exact = enumerated_posterior(model, summary, dist_spec, obs, system.lam)
            counts = np.array(
                [np.sum(system.weights() * (system.theta[:, 0] == v)) for v in model.theta_values]
            )
            row += [_g(0.5 * np.abs(counts - exact).sum()), _g(log_z_exact)]
        else:
            row += ["", ""]
        rows.append(row)
    _write_csv(
        out / "aggregate.csv",
        ["seed", "steps", "lambda_final", "log_z", "sim_calls", "tv_to_enumerated", "log_z_exact"],
        rows,
    )


def _experiment1(cfg, seeds, out, name):
    """Kernel comparison at equal budget (posterior-mean errors vs a 10x-particle
    reference) and acceptance-vs-lambda curves for adaptive-M vs fixed M=1."""
    err_rows, acc_rows = [], []
    n_ref = 10 * cfg["smc"]["n_particles"]
    for seed in seeds:
        sd = _seed_dir(out, seed)
        _, _, _, _, sys_exp, tr_exp = _run_variant(cfg, seed, sd, "exponential")
        budget = sys_exp.sim_calls
        _, _, _, _, sys_ref, _ = _run_variant(cfg, seed, sd, "reference", n_particles=n_ref)
        ref_mean = sys_ref.weighted_mean()
        _, _, _, _, sys_uni, _ = _run_variant(
            cfg,
            seed,
            sd,
            "uniform",
            kernel="uniform",
            eps_target=0.0,
            lambda_target=None,
            sim_budget=budget,
            adapt_m=False,
        )
        for tag, system in (("exponential", sys_exp), ("uniform", sys_uni)):
            err = np.abs(system.weighted_mean() - ref_mean)
            for j, e in enumerate(err):
                err_rows.append([seed, tag, j + 1, _g(e)])
        _, _, _, _, _, tr_fix = _run_variant(cfg, seed, sd, "fixed_m1", adapt_m=False)
        for policy, trace in (("adaptive_m", tr_exp), ("fixed_m1", tr_fix)):
            for rec in trace.records:
                acc_rows.append([seed, policy, rec.step, _g(rec.lam), _g(rec.accept_rate), rec.m])
    _write_csv(out / "errors.csv", ["seed", "estimator", "param", "abs_error"], err_rows)
    _write_csv(
        out / "acceptance.csv", ["seed", "policy", "step", "lambda", "accept_rate", "M"], acc_rows
    )


def _experiment2(cfg, seeds, out, name):
    """Misspecified MSE study over n plus the bound-vs-lambda table."""
    n_grid = cfg.get("n_grid", [30, 90, 270])
    summary = cfgmod.build_summary(cfg)
    s_true = _truth_stats(cfg, summary)
    lam_fixed = cfg["smc"]["lambda_target"]
    mse_rows = []
    for n in n_grid:
        for seed in seeds:
            sd = _seed_dir(out, seed)
            ncfg = json.loads(json.dumps(cfg))
            ncfg["truth"]["n"] = int(n)
            if "bound" in ncfg:
                ncfg["bound"]["n"] = int(n)
            model, summ, dist_spec, obs, system, trace = _run_variant(
                ncfg, seed, sd, f"fixed_n{n}", store_snapshots=True
            )
            budget = system.sim_calls
            estimators = {}
            s_fixed, _ = _posterior_predictive_stats(
                model, summ, system.theta, system.weights(), len(obs), seed
            )
            estimators["fixed_lambda"] = s_fixed
            constants = BoundConstants(**ncfg["bound"])
            lam_hat, _ = adaptive_select_lambda(trace, constants, distance_kind=dist_spec.kind)
            th_a, w_a = posterior_at_lambda(trace, lam_hat, ExponentialKernel)
            s_adapt, _ = _posterior_predictive_stats(model, summ, th_a, w_a, len(obs), seed)
            estimators["adaptive_lambda"] = s_adapt
            _, _, _, _, sys_uni, _ = _run_variant(
                ncfg,
                seed,
                sd,
                f"uniform_n{n}",
                kernel="uniform",
                eps_target=0.0,
                lambda_target=None,
                sim_budget=budget,
                adapt_m=False,
                store_snapshots=False,
            )
            s_uni, _ = _posterior_predictive_stats(
                model, summ, sys_uni.theta, sys_uni.weights(), len(obs), seed
            )
            estimators["uniform"] = s_uni
            for tag, s_hat in estimators.items():
                mse = float(np.mean((s_hat - s_true) ** 2))
                mse_rows.append([int(n), seed, tag, _g(mse), _g(lam_hat if tag == "adaptive_lambda" else lam_fixed)])
    _write_csv(out / "mse.csv", ["n", "seed", "estimator", "mse", "lambda"], mse_rows)

    agg = []
    for n in n_grid:
        for tag in ("fixed_lambda", "adaptive_lambda", "uniform"):
            vals = [float(r[3]) for r in mse_rows if r[0] == int(n) and r[2] == tag]
            agg.append([int(n), tag, _g(pystats.median(vals)), _g(max(vals))])
    _write_csv(out / "aggregate.csv", ["n", "estimator", "median_mse", "max_mse"], agg)

    # bound-vs-lambda table from the first seed at the preset n
    sd = _seed_dir(out, seeds[0])
    cfg0 = json.loads(json.dumps(cfg))
    _, _, dist_spec, _, _, trace = _run_variant(cfg0, seeds[0], sd, "bound_source")
    constants = BoundConstants(**cfg["bound"])
    bound_rows = []
    for rec in trace.records:
        rep = empirical_bound(rec.log_z, rec.lam, constants, dist_spec.kind)
        bound_rows.append(
            [rec.step, _g(rec.lam), _g(rep.value)]
            + [_g(rep.components[k]) for k in ("neg_log_z", "concentration", "confidence")]
        )
    _write_csv(
        out / "bound_table.csv",
        ["step", "lambda", "bound", "neg_log_z", "concentration", "confidence"],
        bound_rows,
    )


def _experiment3(cfg, seeds, out, name):
    """Indicator statistics under the max-norm: per-threshold errors and the
    posterior-predictive histogram versus a budget-matched uniform baseline."""
    summary = cfgmod.build_summary(cfg)
    thresholds = summary.thresholds
    s_true = _truth_stats(cfg, summary)
    bins = np.linspace(-5.0, 5.0, 102)
    err_rows, dens_rows = [], []
    for seed in seeds:
        sd = _seed_dir(out, seed)
        model, summ, dist_spec, obs, sys_abc, _ = _run_variant(cfg, seed, sd, "abc")
        budget = sys_abc.sim_calls
        _, _, _, _, sys_uni, _ = _run_variant(
            cfg,
            seed,
            sd,
            "uniform",
            kernel="uniform",
            eps_target=0.0,
            lambda_target=None,
            sim_budget=budget,
            adapt_m=False,
        )
        for tag, system in (("abc", sys_abc), ("uniform", sys_uni)):
            s_hat, draws = _posterior_predictive_stats(
                model, summ, system.theta, system.weights(), len(obs), seed
            )
            errs = np.abs(s_hat - s_true)
            for t, e in zip(thresholds, errs):
                err_rows.append([seed, tag, _g(t), _g(e)])
            err_rows.append([seed, tag, "max", _g(errs.max())])
            density, _ = np.histogram(
                np.clip(draws.ravel(), -5.0, 5.0), bins=bins, density=True
            )
            for k in range(101):
                dens_rows.append([seed, tag, _g(bins[k]), _g(bins[k + 1]), _g(density[k])])
    _write_csv(out / "stat_errors.csv", ["seed", "method", "threshold", "abs_error"], err_rows)
    _write_csv(
        out / "density.csv", ["seed", "method", "bin_left", "bin_right", "density"], dens_rows
    )


if __name__ == "__main__":
    sys.exit(main())

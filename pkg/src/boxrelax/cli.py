"""Command-line front end: theory values, single decodes, campaigns, figures.

Every command writes plain CSV/JSON artifacts (atomically, via a temp file
and rename) and is fully reproducible from its seed. Exit codes: 0 success,
1 usage/validation error, 2 runtime failure, 3 completed with warnings.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .decoder import load_instance, solve_box_ls
from .montecarlo import (
    ExperimentConfig,
    config_from_json,
    empirical_a_p,
    g_curve,
    generate_instance,
    leave_one_out_dual,
    run_campaign,
    surrogate_x,
    trial_seed,
    trials_to_csv,
)
from .stats import summaries_to_csv, summaries_to_json
from .theory import (
    SystemParams,
    alpha_p_of_x,
    gumbel_p_correct,
    predict,
    sigma2_for_alpha,
    solve_delta_for_lambda,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_WARNINGS = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad flags; remap to the documented code 1
    def error(self, message):
        raise UsageError(message)


@dataclass
class CommandOutcome:
    exit_code: int
    artifacts_written: list[str] = field(default_factory=list)
    summary_text: str = ""


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_atomic(path: Path, text: str) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)
    return str(path)


def _write_json(path: Path, obj) -> str:
    return _write_atomic(path, json.dumps(obj, indent=2) + "\n")


def _parse_float_list(text: str, flag: str) -> list[float]:
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise UsageError(f"{flag} expects a comma-separated list of reals") from exc
    if not values:
        raise UsageError(f"{flag} must contain at least one value")
    return values


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        values = [int(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise UsageError(f"{flag} expects a comma-separated list of integers") from exc
    if not values:
        raise UsageError(f"{flag} must contain at least one value")
    return values


def _threads(args) -> int:
    if args.threads == "auto":
        return os.cpu_count() or 1
    try:
        n = int(args.threads)
    except ValueError as exc:
        raise UsageError("--threads expects an integer or 'auto'") from exc
    if n < 1:
        raise UsageError("--threads must be >= 1")
    return n


def _prediction_payload(p, delta, sigma2):
    pred = predict(SystemParams(p, delta, sigma2))
    return {
        "p": p,
        "delta": delta,
        "sigma2": sigma2,
        "tau_p": pred.tau_p,
        "f_p": pred.f_p,
        "lambda_p": pred.lambda_p,
        "a_p_star": pred.a_p_star,
        "alpha_p": pred.alpha_p,
        "ber_asymptotic": pred.ber_asymptotic,
        "p_correct_poisson": pred.p_correct_poisson,
    }


def cmd_theory(args) -> CommandOutcome:
    if (args.delta is None) == (args.lambda_target is None):
        raise UsageError("theory requires exactly one of --delta or --lambda-target")
    if args.lambda_target is not None:
        delta = solve_delta_for_lambda(args.p, args.sigma2, args.lambda_target)
    else:
        delta = args.delta
    payload = _prediction_payload(args.p, delta, args.sigma2)
    out = Path(args.out_dir) / "theory.json"
    written = _write_json(out, payload)
    return CommandOutcome(EXIT_OK, [written], json.dumps(payload, indent=2))


def cmd_decode(args) -> CommandOutcome:
    instance = load_instance(args.instance)
    solution = solve_box_ls(instance, tol=args.tol)
    payload = {
        "x_star": solution.x_star.tolist(),
        "beta_hat": solution.beta_hat.tolist(),
        "n_errors": solution.n_errors,
        "kkt_residual": solution.kkt_residual,
        "objective": solution.objective,
        "iterations": solution.iterations,
        "converged": solution.converged,
    }
    out = Path(args.out_dir) / "solution.json"
    written = _write_json(out, payload)
    code = EXIT_OK if solution.converged else EXIT_WARNINGS
    text = (
        f"n_errors={solution.n_errors} kkt_residual={solution.kkt_residual:.3e} "
        f"converged={solution.converged}"
    )
    return CommandOutcome(code, [written], text)


def _campaign_artifacts(result, out_dir: Path, stem: str) -> list[str]:
    written = []
    if result.config.record_level != "summary":
        written.append(_write_atomic(out_dir / f"{stem}_trials.csv", trials_to_csv(result)))
    written.append(
        _write_atomic(out_dir / f"{stem}_summaries.csv", summaries_to_csv(result.summaries))
    )
    written.append(
        _write_atomic(out_dir / f"{stem}_summaries.json", summaries_to_json(result.summaries))
    )
    return written


def cmd_simulate(args) -> CommandOutcome:
    try:
        config = config_from_json(args.config)
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        raise UsageError(f"bad config: {exc}") from exc
    result = run_campaign(config, threads=_threads(args))
    written = _campaign_artifacts(result, Path(args.out_dir), "simulate")
    code = EXIT_WARNINGS if result.warning else EXIT_OK
    text = "; ".join(
        f"grid {s.grid_index}: trials={s.trials_used} mean_ne={s.mean_ne:.4f} "
        f"tv={s.tv_to_poisson:.4f} excluded={result.excluded[s.grid_index]}"
        for s in result.summaries
    )
    return CommandOutcome(code, written, text)


def _single_point_campaign(p, delta, sigma2, trials, seed, tol, threads, record_level="per_trial"):
    config = ExperimentConfig(
        grid=[SystemParams(p, delta, sigma2)],
        trials=trials,
        master_seed=seed,
        solver_tol=tol,
        record_level=record_level,
    )
    return run_campaign(config, threads=threads)


def cmd_fig1(args) -> CommandOutcome:
    p_list = _parse_int_list(args.p_list, "--p-list")
    out_dir = Path(args.out_dir)
    written = []
    warning = False
    lines = []
    for p in p_list:
        delta = solve_delta_for_lambda(p, args.sigma2, args.lambda_target)
        result = _single_point_campaign(
            p, delta, args.sigma2, args.trials, args.seed, args.tol, _threads(args)
        )
        warning = warning or result.warning
        summary = result.summaries[0]
        lam = summary.lambda_p_used
        rows = ["k,empirical,poisson,lambda"]
        for k in range(max(summary.pmf) + 1):
            from .theory import poisson_pmf

            rows.append(
                f"{k},{_fmt(summary.pmf.get(k, 0.0))},{_fmt(poisson_pmf(lam, k))},{_fmt(lam)}"
            )
        written.append(_write_atomic(out_dir / f"fig1_p{p}_pmf.csv", "\n".join(rows) + "\n"))
        written.extend(_campaign_artifacts(result, out_dir, f"fig1_p{p}"))
        lines.append(
            f"p={p}: n={result.realized_n[0]} delta={result.realized_n[0]/p:.6f} "
            f"lambda={lam:.6f} mean_ne={summary.mean_ne:.4f} tv={summary.tv_to_poisson:.4f}"
        )
    if args.plot_script:
        written.append(_write_plot_script(out_dir, "fig1"))
    code = EXIT_WARNINGS if warning else EXIT_OK
    return CommandOutcome(code, written, "\n".join(lines))


def cmd_phase(args) -> CommandOutcome:
    if (args.alpha_grid is None) == (args.sigma2_grid is None):
        raise UsageError("phase requires exactly one of --alpha-grid or --sigma2-grid")
    if args.alpha_grid is not None:
        alphas = _parse_float_list(args.alpha_grid, "--alpha-grid")
        if any(b <= a for a, b in zip(alphas, alphas[1:])):
            raise UsageError("--alpha-grid must be strictly increasing")
        points = [(a, sigma2_for_alpha(args.p, args.delta, a)) for a in alphas]
    else:
        sigma2s = _parse_float_list(args.sigma2_grid, "--sigma2-grid")
        points = []
        for s2 in sigma2s:
            pred = predict(SystemParams(args.p, args.delta, s2))
            points.append((pred.alpha_p, s2))
    rows = ["alpha_p,sigma2,p_correct_hat,ci_lo,ci_hi,p_correct_poisson_prediction"]
    warning = False
    for alpha, sigma2 in points:
        result = _single_point_campaign(
            args.p, args.delta, sigma2, args.trials, args.seed, args.tol, _threads(args)
        )
        warning = warning or result.warning
        summary = result.summaries[0]
        prediction = result.predictions[0].p_correct_poisson
        rows.append(
            f"{_fmt(alpha)},{_fmt(sigma2)},{_fmt(summary.p_correct_hat)},"
            f"{_fmt(summary.p_correct_ci[0])},{_fmt(summary.p_correct_ci[1])},{_fmt(prediction)}"
        )
    out_dir = Path(args.out_dir)
    written = [_write_atomic(out_dir / "phase.csv", "\n".join(rows) + "\n")]
    if args.plot_script:
        written.append(_write_plot_script(out_dir, "phase"))
    code = EXIT_WARNINGS if warning else EXIT_OK
    return CommandOutcome(code, written, "\n".join(rows[: min(len(rows), 12)]))


def cmd_gumbel(args) -> CommandOutcome:
    x_grid = _parse_float_list(args.x_grid, "--x-grid")
    points = []
    for x in x_grid:
        alpha = alpha_p_of_x(args.p, x)
        if alpha <= 0.0:
            raise UsageError(
                f"x={x} gives alpha_p={alpha:.4f} <= 0 at p={args.p}; the critical "
                "window formula only covers offsets with positive phase coordinate"
            )
        points.append((x, sigma2_for_alpha(args.p, 1.0, alpha)))
    rows = ["x,sigma2,p_correct_hat,ci_lo,ci_hi,gumbel_prediction,poisson_prediction"]
    warning = False
    for x, sigma2 in points:
        result = _single_point_campaign(
            args.p, 1.0, sigma2, args.trials, args.seed, args.tol, _threads(args)
        )
        warning = warning or result.warning
        summary = result.summaries[0]
        rows.append(
            f"{_fmt(x)},{_fmt(sigma2)},{_fmt(summary.p_correct_hat)},"
            f"{_fmt(summary.p_correct_ci[0])},{_fmt(summary.p_correct_ci[1])},"
            f"{_fmt(gumbel_p_correct(x))},{_fmt(result.predictions[0].p_correct_poisson)}"
        )
    out_dir = Path(args.out_dir)
    written = [_write_atomic(out_dir / "gumbel.csv", "\n".join(rows) + "\n")]
    if args.plot_script:
        written.append(_write_plot_script(out_dir, "gumbel"))
    code = EXIT_WARNINGS if warning else EXIT_OK
    return CommandOutcome(code, written, "\n".join(rows))


def cmd_loo(args) -> CommandOutcome:
    if args.coords < 1 or args.coords > args.p:
        raise UsageError("--coords must lie in [1, p]")
    if args.instances < 1:
        raise UsageError("--instances must be >= 1")
    if args.v_points < 3:
        raise UsageError("--v-points must be >= 3")
    gcurve_coords = args.gcurve_coords
    if gcurve_coords is None:
        gcurve_coords = min(args.coords, 4)
    if gcurve_coords > args.coords:
        raise UsageError("--gcurve-coords cannot exceed --coords")
    params = SystemParams(args.p, args.delta, args.sigma2)
    prediction = predict(params)
    a_p_star = prediction.a_p_star
    v_grid = np.linspace(-2.0, 2.0, args.v_points)
    coord_rows = ["instance,i,x_star_i,x_tilde_i,abs_gap"]
    g_rows = ["instance,i,v,g_value,quad_value"]
    records = []
    gaps = []
    for t in range(args.instances):
        instance = generate_instance(
            params, "all_minus_one", trial_seed(args.seed, 0, t)
        )
        solution = solve_box_ls(instance, tol=args.tol)
        if not solution.converged:
            raise RuntimeError(f"instance {t}: full solve did not converge")
        u = instance.a_matrix @ solution.x_star - instance.y
        from .montecarlo import TrialRecord

        records.append(
            TrialRecord(
                grid_index=0,
                trial_index=t,
                n_errors=solution.n_errors,
                ber=solution.n_errors / args.p,
                converged=True,
                kkt_residual=solution.kkt_residual,
                objective_per_p=solution.objective / args.p,
                u_norm_over_sqrt_p=float(np.linalg.norm(u)) / math.sqrt(args.p),
                noise_dot_residual=float(instance.noise @ (-u)),
            )
        )
        for i in range(args.coords):
            u_loo = leave_one_out_dual(instance, i)
            x_tilde = surrogate_x(instance, i, a_p_star, u_loo=u_loo)
            gap = abs(float(solution.x_star[i]) - x_tilde)
            gaps.append(gap)
            coord_rows.append(
                f"{t},{i},{_fmt(solution.x_star[i])},{_fmt(x_tilde)},{_fmt(gap)}"
            )
        for i in range(gcurve_coords):
            g_vals = g_curve(instance, i, v_grid)
            for v, g in zip(v_grid, g_vals):
                g_rows.append(
                    f"{t},{i},{_fmt(v)},{_fmt(g)},{_fmt(0.5 * a_p_star * v * v)}"
                )
    a_p_hat = empirical_a_p(records, args.sigma2, args.p)
    summary = {
        "p": args.p,
        "delta": args.delta,
        "sigma2": args.sigma2,
        "instances": args.instances,
        "coords": args.coords,
        "a_p_star": a_p_star,
        "f_p": prediction.f_p,
        "tau_p": prediction.tau_p,
        "empirical_a_p": a_p_hat,
        "median_abs_gap": float(np.median(gaps)),
    }
    out_dir = Path(args.out_dir)
    written = [
        _write_atomic(out_dir / "loo_coords.csv", "\n".join(coord_rows) + "\n"),
        _write_atomic(out_dir / "loo_gcurve.csv", "\n".join(g_rows) + "\n"),
        _write_json(out_dir / "loo_summary.json", summary),
    ]
    if args.plot_script:
        written.append(_write_plot_script(out_dir, "loo"))
    text = (
        f"median |x*_i - x~_i| = {summary['median_abs_gap']:.4f}; "
        f"empirical A_p = {a_p_hat:.4f} vs A_p* = {a_p_star:.4f}"
    )
    return CommandOutcome(EXIT_OK, written, text)


_PLOT_TEMPLATE = """\
# Generic plotting recipe for boxrelax __KIND__ outputs.
# Reads the CSVs emitted next to this file and draws the matching figure.
import csv
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).resolve().parent


def read(name):
    with open(here / name) as fh:
        rows = list(csv.DictReader(fh))
    return rows


kind = "__KIND__"
if kind == "fig1":
    for path in sorted(here.glob("fig1_p*_pmf.csv")):
        rows = read(path.name)
        k = [int(r["k"]) for r in rows]
        plt.figure()
        plt.bar(k, [float(r["empirical"]) for r in rows], alpha=0.5, label="empirical")
        plt.plot(k, [float(r["poisson"]) for r in rows], "ro-", label="poisson")
        plt.xlabel("error bits"); plt.ylabel("probability"); plt.legend()
        plt.title(path.stem)
elif kind == "phase":
    rows = read("phase.csv")
    a = [float(r["alpha_p"]) for r in rows]
    plt.errorbar(a, [float(r["p_correct_hat"]) for r in rows],
                 yerr=[[float(r["p_correct_hat"]) - float(r["ci_lo"]) for r in rows],
                       [float(r["ci_hi"]) - float(r["p_correct_hat"]) for r in rows]],
                 fmt="o", label="empirical")
    plt.plot(a, [float(r["p_correct_poisson_prediction"]) for r in rows], "-", label="prediction")
    plt.xlabel("alpha_p"); plt.ylabel("P(correct)"); plt.legend()
elif kind == "gumbel":
    rows = read("gumbel.csv")
    x = [float(r["x"]) for r in rows]
    plt.plot(x, [float(r["p_correct_hat"]) for r in rows], "o", label="empirical")
    plt.plot(x, [float(r["poisson_prediction"]) for r in rows], "-", label="poisson")
    plt.plot(x, [float(r["gumbel_prediction"]) for r in rows], "--", label="gumbel")
    plt.xlabel("x"); plt.ylabel("P(correct)"); plt.legend()
elif kind == "loo":
    rows = read("loo_gcurve.csv")
    plt.figure()
    keys = sorted({(r["instance"], r["i"]) for r in rows})
    for key in keys:
        sel = [r for r in rows if (r["instance"], r["i"]) == key]
        v = [float(r["v"]) for r in sel]
        plt.plot(v, [float(r["g_value"]) for r in sel], alpha=0.6)
    sel = [r for r in rows if (r["instance"], r["i"]) == keys[0]]
    plt.plot([float(r["v"]) for r in sel], [float(r["quad_value"]) for r in sel],
             "k--", label="limit quadratic")
    plt.xlabel("v"); plt.ylabel("g(v)"); plt.legend()
plt.show()
"""


def _write_plot_script(out_dir: Path, kind: str) -> str:
    return _write_atomic(
        out_dir / f"plot_{kind}.py", _PLOT_TEMPLATE.replace("__KIND__", kind)
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="boxrelax", description=__doc__)
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=42, help="master seed (u64)")
    common.add_argument("--out-dir", default=".", help="artifact directory")
    common.add_argument("--threads", default="1", help="trial parallelism: n or 'auto'")
    common.add_argument("--tol", type=float, default=1.0e-10, help="solver KKT tolerance")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("theory", parents=[common], help="closed-form predictions")
    sp.add_argument("--p", type=int, required=True)
    sp.add_argument("--delta", type=float)
    sp.add_argument("--sigma2", type=float, required=True)
    sp.add_argument("--lambda-target", type=float, dest="lambda_target")
    sp.set_defaults(func=cmd_theory)

    sp = sub.add_parser("decode", parents=[common], help="solve one instance JSON")
    sp.add_argument("--instance", required=True)
    sp.set_defaults(func=cmd_decode)

    sp = sub.add_parser("simulate", parents=[common], help="run a campaign config")
    sp.add_argument("--config", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("fig1", parents=[common], help="error-count PMF vs Poisson")
    sp.add_argument("--p-list", default="200,1000")
    sp.add_argument("--sigma2", type=float, default=1.0)
    sp.add_argument("--lambda-target", type=float, dest="lambda_target", default=1.1)
    sp.add_argument("--trials", type=int, default=2000)
    sp.add_argument("--plot-script", action="store_true")
    sp.set_defaults(func=cmd_fig1)

    sp = sub.add_parser("phase", parents=[common], help="success-probability transition")
    sp.add_argument("--p", type=int, default=400)
    sp.add_argument("--delta", type=float, default=1.0)
    sp.add_argument("--alpha-grid", dest="alpha_grid")
    sp.add_argument("--sigma2-grid", dest="sigma2_grid")
    sp.add_argument("--trials", type=int, default=200)
    sp.add_argument("--plot-script", action="store_true")
    sp.set_defaults(func=cmd_phase)

    sp = sub.add_parser("gumbel", parents=[common], help="critical-window success law")
    sp.add_argument("--p", type=int, default=1000)
    sp.add_argument("--x-grid", default="-1,0,1,2")
    sp.add_argument("--trials", type=int, default=500)
    sp.add_argument("--plot-script", action="store_true")
    sp.set_defaults(func=cmd_gumbel)

    sp = sub.add_parser("loo", parents=[common], help="leave-one-out diagnostics")
    sp.add_argument("--p", type=int, default=1000)
    sp.add_argument("--delta", type=float, default=1.0)
    sp.add_argument("--sigma2", type=float, default=1.0)
    sp.add_argument("--coords", type=int, default=20)
    sp.add_argument("--instances", type=int, default=5)
    sp.add_argument("--v-points", type=int, default=9, dest="v_points")
    sp.add_argument("--gcurve-coords", type=int, default=None, dest="gcurve_coords")
    sp.add_argument("--plot-script", action="store_true")
    sp.set_defaults(func=cmd_loo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        outcome = args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 2
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if outcome.summary_text:
        print(outcome.summary_text)
    for path in outcome.artifacts_written:
        print(f"wrote {path}")
    return outcome.exit_code


def console_main() -> None:
    sys.exit(main())

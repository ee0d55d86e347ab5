"""Command-line entry point for the packaged studies.

Each subcommand reruns one study and writes its CSV artifacts under
``<out>/<study>/`` together with a plain-text ``manifest`` recording the
seed, replication count, timestamps, library version, and file list.
CSV contents are byte-stable: a fixed (command, seed, reps, version)
produces identical files across runs and across ``--threads`` settings.
Numeric cells are written at full precision via ``repr``; ``n/a`` is the
only non-numeric data value.

Exit status: 0 when all requested outputs were written, 2 for usage and
I/O problems (bad flags, unreadable scenario file, unwritable output
directory), 1 when a study computation fails (the message names the
failing stage).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .churn import ChurnParams, evolve_portfolio, write_trajectory_csv
from .distributions import compound_moments
from .fitting import censoring_bias_study
from .mixtures import run_mixed_study
from .portfolio import (
    Scenario,
    empirical_tvar,
    empirical_var,
    portfolio_size_sweep,
    run_monte_carlo,
)
from .scenarios import (
    BASELINE_CAP,
    BASELINE_PREMIUM,
    BIAS_FRACTIONS,
    BIAS_SAMPLE_SIZE,
    BIAS_TRUE_MU,
    BIAS_TRUE_SIGMA,
    DEFAULT_PORTFOLIO_SIZE,
    DEFAULT_REPLICATIONS,
    DEFAULT_SEED,
    MIXED_SEGMENTS,
    SWEEP_SIZES,
    ScenarioFormatError,
    builtin,
    parse_scenario,
)

_PROG = "caprisk"


def _now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _cell(value) -> str:
    """Render one CSV cell: ints plain, floats via repr, None/nan as n/a."""
    if value is None:
        return "n/a"
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return "n/a"
    return repr(value)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(value) for value in row])


def _write_manifest(out_dir: Path, study_label: str, seed: int, reps: int,
                    started: str, files, extras=()) -> None:
    lines = [
        f"study_label = {study_label}",
        f"seed = {seed}",
        f"replications = {reps}",
        f"started = {started}",
        f"finished = {_now()}",
        f"version = {__version__}",
    ]
    lines.extend(f"{key} = {value}" for key, value in extras)
    lines.extend(f"file = {name}" for name in files)
    (out_dir / "manifest").write_text("\n".join(lines) + "\n")


def _override(scenario: Scenario, seed, reps) -> Scenario:
    changes = {}
    if seed is not None:
        changes["master_seed"] = seed
    if reps is not None:
        changes["replications"] = reps
    return dataclasses.replace(scenario, **changes) if changes else scenario


def _study_command(args, study_label: str, worker) -> int:
    """Shared plumbing: output directory, error mapping, manifest."""
    started = _now()
    out_dir = Path(args.out) / study_label
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"{_PROG}: cannot create output directory {out_dir}: {exc}", file=sys.stderr)
        return 2
    stage = ["setup"]
    try:
        files, extras, seed, reps = worker(out_dir, stage)
    except OSError as exc:
        path = getattr(exc, "filename", None) or out_dir
        print(f"{_PROG}: I/O error in study '{study_label}' at {path}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(
            f"{_PROG}: study '{study_label}' failed at stage '{stage[0]}': {exc}",
            file=sys.stderr,
        )
        return 1
    _write_manifest(out_dir, study_label, seed, reps, started, files, extras)
    return 0


def _effective(args) -> tuple[int, int]:
    seed = DEFAULT_SEED if args.seed is None else args.seed
    reps = DEFAULT_REPLICATIONS if args.reps is None else args.reps
    return seed, reps


def cmd_reserve_comparison(args) -> int:
    def worker(out_dir, stage):
        seed, reps = _effective(args)
        stage[0] = "naive-arithmetic"
        naive = builtin("baseline-naive")
        cohort = naive.cohorts[0]
        mean_per_user, _ = compound_moments(cohort.compound)
        expected = cohort.n * mean_per_user
        premium_income = naive.premium_income
        rows = [
            (
                "naive",
                expected,
                expected,
                expected,
                expected / premium_income,
                premium_income - expected,
            )
        ]
        for name, model in (("baseline-pg", "poisson-gamma"), ("baseline-nbln", "nb-lognormal")):
            stage[0] = f"simulate:{name}"
            summary = run_monte_carlo(_override(builtin(name), seed, reps), threads=args.threads)
            rows.append(
                (
                    model,
                    summary.expected_loss,
                    summary.var_by_level[0.99],
                    summary.tvar_by_level[0.99],
                    summary.loss_ratio,
                    summary.margin_over_tvar,
                )
            )
        stage[0] = "write:tab_reserve_comparison.csv"
        _write_csv(
            out_dir / "tab_reserve_comparison.csv",
            ("model", "expected_loss", "var_99", "tvar_99", "loss_ratio", "margin_over_tvar"),
            rows,
        )
        return ["tab_reserve_comparison.csv"], [], seed, reps

    return _study_command(args, "reserve-comparison", worker)


def cmd_policy_alternatives(args) -> int:
    def worker(out_dir, stage):
        seed, reps = _effective(args)
        rows = []
        for name, policy in (
            ("stress-p0", "P0"),
            ("stress-p1", "P1"),
            ("stress-p2", "P2"),
            ("stress-p3", "P3"),
        ):
            stage[0] = f"simulate:{name}"
            summary = run_monte_carlo(_override(builtin(name), seed, reps), threads=args.threads)
            zero_premium = summary.premium_income == 0
            rows.append(
                (
                    policy,
                    summary.expected_loss,
                    summary.tvar_by_level[0.99],
                    None if zero_premium else summary.loss_ratio,
                    summary.cohorts[0].cap_hit_rate,
                    None if zero_premium else summary.margin_over_tvar,
                )
            )
        stage[0] = "write:tab_policy_alternatives.csv"
        _write_csv(
            out_dir / "tab_policy_alternatives.csv",
            ("policy", "expected_loss", "tvar_99", "loss_ratio", "cap_hit", "margin"),
            rows,
        )
        return ["tab_policy_alternatives.csv"], [], seed, reps

    return _study_command(args, "policy-alternatives", worker)


def cmd_vercel(args) -> int:
    def worker(out_dir, stage):
        seed, reps = _effective(args)
        rows = []
        for kind in ("light", "heavy"):
            for kappa, suffix in ((0.25, "k25"), (0.5, "k50"), (1.0, "k100")):
                name = f"vercel-{kind}-{suffix}"
                stage[0] = f"simulate:{name}"
                summary = run_monte_carlo(
                    _override(builtin(name), seed, reps), threads=args.threads
                )
                cohort = summary.cohorts[0]
                e_cost = summary.expected_loss
                premium = summary.premium_income
                e_overage = cohort.mean_revenue_beyond_premium
                rows.append(
                    (
                        kind,
                        kappa,
                        cohort.mean_uncapped_cost,
                        e_cost,
                        premium,
                        e_overage,
                        e_cost - premium - e_overage,
                    )
                )
        stage[0] = "write:tab_vercel.csv"
        _write_csv(
            out_dir / "tab_vercel.csv",
            ("cohort", "kappa", "e_s_agg", "e_cost", "premium", "e_overage_rev", "e_net_loss"),
            rows,
        )
        return ["tab_vercel.csv"], [], seed, reps

    return _study_command(args, "vercel", worker)


def cmd_mixed_population(args) -> int:
    def worker(out_dir, stage):
        seed, reps = _effective(args)
        stage[0] = "simulate:mixed-h"
        base = run_monte_carlo(_override(builtin("mixed-h"), seed, reps), threads=args.threads)
        rows = [
            (
                "H",
                None,
                base.expected_loss,
                base.var_by_level[0.99],
                base.tvar_by_level[0.99],
                None,
                None,
            )
        ]
        for name, label in (("mixed-m1", "M1"), ("mixed-m2", "M2"), ("mixed-m3", "M3")):
            stage[0] = f"simulate:{name}"
            segments = MIXED_SEGMENTS[name]
            result = run_mixed_study(
                segments,
                DEFAULT_PORTFOLIO_SIZE,
                BASELINE_PREMIUM,
                BASELINE_CAP,
                reps,
                seed,
                study_label=name,
            )
            pi_power = next(s.weight for s in segments if s.label == "power")
            rows.append(
                (
                    label,
                    pi_power,
                    result.expected_loss,
                    result.var_99,
                    result.tvar_99,
                    result.cap_hit_by_segment["power"],
                    result.cap_hit_by_segment["light"],
                )
            )
        stage[0] = "write:tab_mixed_population.csv"
        _write_csv(
            out_dir / "tab_mixed_population.csv",
            ("scenario", "pi_power", "e_l", "var_99", "tvar_99", "cap_hit_power", "cap_hit_light"),
            rows,
        )
        return ["tab_mixed_population.csv"], [], seed, reps

    return _study_command(args, "mixed-population", worker)


def cmd_censoring_bias(args) -> int:
    def worker(out_dir, stage):
        seed, reps = _effective(args)
        stage[0] = "fit"
        rows = censoring_bias_study(
            BIAS_TRUE_MU, BIAS_TRUE_SIGMA, BIAS_SAMPLE_SIZE, BIAS_FRACTIONS, seed
        )
        print(
            f"censoring bias study: n = {BIAS_SAMPLE_SIZE}, "
            f"true mu = {BIAS_TRUE_MU}, true sigma = {BIAS_TRUE_SIGMA}"
        )
        for row in rows:
            print(
                f"  {row.fraction:>4.0%} censored (threshold {row.threshold:.3f}, "
                f"{row.n_censored} observations at the cap): "
                f"naive bias mu {row.naive_mu_bias_pct:+.2f}% sigma {row.naive_sigma_bias_pct:+.2f}%, "
                f"tobit bias mu {row.tobit_mu_bias_pct:+.2f}% sigma {row.tobit_sigma_bias_pct:+.2f}%"
            )
        stage[0] = "write:tab_censoring_bias.csv"
        _write_csv(
            out_dir / "tab_censoring_bias.csv",
            (
                "fraction",
                "threshold",
                "n_censored",
                "naive_mu_bias_pct",
                "naive_sigma_bias_pct",
                "tobit_mu_bias_pct",
                "tobit_sigma_bias_pct",
            ),
            [
                (
                    r.fraction,
                    r.threshold,
                    r.n_censored,
                    r.naive_mu_bias_pct,
                    r.naive_sigma_bias_pct,
                    r.tobit_mu_bias_pct,
                    r.tobit_sigma_bias_pct,
                )
                for r in rows
            ],
        )
        return ["tab_censoring_bias.csv"], [], seed, reps

    return _study_command(args, "censoring-bias", worker)


def cmd_size_sweep(args) -> int:
    def worker(out_dir, stage):
        seed, reps = _effective(args)
        stage[0] = "simulate:sweep"
        base = _override(builtin("size-sweep"), seed, reps)
        result = portfolio_size_sweep(base, SWEEP_SIZES, threads=args.threads)
        stage[0] = "write:fig_reserve_by_portfolio_size.csv"
        _write_csv(
            out_dir / "fig_reserve_by_portfolio_size.csv",
            ("n", "per_user_tail_capital"),
            [(point.n, point.per_user_tail_capital) for point in result.points],
        )
        return ["fig_reserve_by_portfolio_size.csv"], [("slope", repr(result.slope))], seed, reps

    return _study_command(args, "size-sweep", worker)


def cmd_aggregate_distribution(args) -> int:
    def worker(out_dir, stage):
        seed, reps = _effective(args)
        samples = {}
        for name, model in (("baseline-pg", "poisson-gamma"), ("baseline-nbln", "nb-lognormal")):
            stage[0] = f"simulate:{name}"
            summary = run_monte_carlo(_override(builtin(name), seed, reps), threads=args.threads)
            samples[model] = summary.loss_samples
        stage[0] = "bin"
        pooled_lo = min(float(s.min()) for s in samples.values())
        pooled_hi = max(float(s.max()) for s in samples.values())
        edges = np.linspace(pooled_lo, pooled_hi, 201)
        rows = []
        for model, data in samples.items():
            density, _ = np.histogram(data, bins=edges, density=True)
            for i in range(200):
                rows.append((model, float(edges[i]), float(edges[i + 1]), float(density[i])))
        stage[0] = "write:fig_aggregate_cost_distribution.csv"
        _write_csv(
            out_dir / "fig_aggregate_cost_distribution.csv",
            ("model", "bin_left", "bin_right", "density"),
            rows,
        )
        return ["fig_aggregate_cost_distribution.csv"], [], seed, reps

    return _study_command(args, "aggregate-distribution", worker)


def cmd_churn_trajectory(args) -> int:
    scenario_name = args.scenario

    def worker(out_dir, stage):
        stage[0] = "setup"
        scenario = _override(builtin(scenario_name), args.seed, args.reps)
        params = ChurnParams(h0=args.h0, beta1=args.beta1, beta2=args.beta2)
        stage[0] = "simulate:churn"
        rows = evolve_portfolio(scenario, params, args.periods)
        stage[0] = "write:churn_trajectory.csv"
        write_trajectory_csv(rows, out_dir / "churn_trajectory.csv")
        extras = [
            ("h0", repr(args.h0)),
            ("beta1", repr(args.beta1)),
            ("beta2", repr(args.beta2)),
            ("periods", str(args.periods)),
        ]
        return (
            ["churn_trajectory.csv"],
            extras,
            scenario.master_seed,
            scenario.replications,
        )

    return _study_command(args, f"churn-{scenario_name}", worker)


def _level_tag(level: float) -> str:
    text = f"{level:g}"
    if text.startswith("0."):
        return text[2:]
    return text.replace(".", "_")


def cmd_run(args) -> int:
    path = Path(args.scenario_file)
    try:
        text = path.read_text()
    except OSError as exc:
        print(f"{_PROG}: cannot read scenario file {path}: {exc}", file=sys.stderr)
        return 2
    try:
        scenario, levels = parse_scenario(text)
    except ScenarioFormatError as exc:
        print(f"{_PROG}: {path}: {exc}", file=sys.stderr)
        return 2
    scenario = _override(scenario, args.seed_override, args.reps_override)

    def worker(out_dir, stage):
        stage[0] = "simulate"
        summary = run_monte_carlo(scenario, levels=levels, threads=args.threads)
        stage[0] = "write:summary.csv"
        header = ["scope", "label", "n", "premium_income", "expected_loss", "loss_ratio"]
        header += [f"var_{_level_tag(q)}" for q in levels]
        header += [f"tvar_{_level_tag(q)}" for q in levels]
        header += ["reserve", "margin_over_tvar", "cap_hit", "mean_overage_revenue", "mean_net_loss"]
        total_n = scenario.total_size
        hit_total = sum(c.cap_hit_rate * c.n for c in summary.cohorts)
        portfolio_row = [
            "portfolio",
            summary.study_label,
            total_n,
            summary.premium_income,
            summary.expected_loss,
            summary.loss_ratio,
        ]
        portfolio_row += [summary.var_by_level[q] for q in levels]
        portfolio_row += [summary.tvar_by_level[q] for q in levels]
        portfolio_row += [
            summary.reserve,
            summary.margin_over_tvar,
            hit_total / total_n,
            summary.mean_overage_revenue,
            summary.mean_net_loss,
        ]
        rows = [portfolio_row]
        for cohort in summary.cohorts:
            ratio = (
                cohort.expected_loss / cohort.premium_income
                if cohort.premium_income > 0
                else None
            )
            row = [
                "cohort",
                cohort.label,
                cohort.n,
                cohort.premium_income,
                cohort.expected_loss,
                ratio,
            ]
            row += [empirical_var(cohort.loss_samples, q) for q in levels]
            row += [empirical_tvar(cohort.loss_samples, q) for q in levels]
            var_99 = empirical_var(cohort.loss_samples, 0.99)
            tvar_99 = empirical_tvar(cohort.loss_samples, 0.99)
            row += [
                max(0.0, var_99 - cohort.premium_income),
                cohort.premium_income - tvar_99,
                cohort.cap_hit_rate,
                cohort.mean_revenue_beyond_premium,
                cohort.mean_net_loss,
            ]
            rows.append(row)
        _write_csv(out_dir / "summary.csv", header, rows)
        return ["summary.csv"], [], scenario.master_seed, scenario.replications

    return _study_command(args, scenario.study_label, worker)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--seed", type=int, default=None,
        help=f"master seed (default {DEFAULT_SEED})",
    )
    parser.add_argument(
        "--reps", type=int, default=None,
        help=f"Monte Carlo replications (default {DEFAULT_REPLICATIONS}; lower this for a faster run)",
    )
    parser.add_argument(
        "--out", default="output",
        help="output root directory (default: output)",
    )
    parser.add_argument(
        "--threads", type=int, default=1,
        help="simulation worker threads; results never depend on this",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=_PROG,
        description="Monte Carlo studies of capped-usage subscription portfolios.",
    )
    parser.add_argument("--version", action="version", version=f"{_PROG} {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    specs = [
        ("reserve-comparison", cmd_reserve_comparison,
         "baseline reserve table: naive, Poisson-Gamma, and NB-LogNormal models"),
        ("policy-alternatives", cmd_policy_alternatives,
         "stress the heavy-usage cohort under the four cap policies P0..P3"),
        ("vercel", cmd_vercel,
         "overage-billing cohorts swept over the cost-to-retail ratio"),
        ("mixed-population", cmd_mixed_population,
         "homogeneous baseline versus three two-segment mixtures"),
        ("censoring-bias", cmd_censoring_bias,
         "naive versus censored-likelihood severity fits under cap censoring"),
        ("size-sweep", cmd_size_sweep,
         "per-user tail capital across portfolio sizes, slope in the manifest"),
        ("aggregate-distribution", cmd_aggregate_distribution,
         "binned portfolio loss densities for the two baseline models"),
    ]
    for name, func, help_text in specs:
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        p.set_defaults(func=func)

    churn = sub.add_parser(
        "churn-trajectory",
        help="multi-period portfolio evolution under cap-driven churn",
    )
    churn.add_argument(
        "--scenario", default="stress-p0",
        help="built-in single-cohort hard-cap scenario to evolve (default: stress-p0)",
    )
    churn.add_argument("--h0", type=float, default=0.02, help="baseline per-period churn hazard")
    churn.add_argument("--beta1", type=float, default=1.0, help="hazard coefficient on hitting the cap this period")
    churn.add_argument("--beta2", type=float, default=0.2, help="hazard coefficient on cumulative cap hits")
    churn.add_argument("--periods", type=int, default=24, help="number of periods to evolve (default 24)")
    _add_common(churn)
    churn.set_defaults(func=cmd_churn_trajectory)

    run_parser = sub.add_parser("run", help="run a scenario file and write a generic summary")
    run_parser.add_argument("scenario_file", help="path to a scenario text file")
    run_parser.add_argument(
        "--seed-override", type=int, default=None, dest="seed_override",
        help="replace the seed declared in the file",
    )
    run_parser.add_argument(
        "--reps-override", type=int, default=None, dest="reps_override",
        help="replace the replication count declared in the file",
    )
    run_parser.add_argument("--out", default="output", help="output root directory (default: output)")
    run_parser.add_argument(
        "--threads", type=int, default=1,
        help="simulation worker threads; results never depend on this",
    )
    run_parser.set_defaults(func=cmd_run)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

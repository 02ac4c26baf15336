"""Command-line front end.

Every subcommand is a thin adapter: it parses arguments, calls the same
library functions a script would, and serializes the returned report.
Numbers in JSON output are rounded to 12 significant digits so output is
stable across platforms; non-finite values are refused rather than
written.  Library errors exit with status 2 and a single-line JSON
object on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from .allocate import AllocationResult, solve_optimal_allocation
from .core import (
    DEFAULT_SEED,
    FtppiError,
    NumericalError,
    ParameterError,
    Predictor,
    RngSeed,
    UnlabeledDataset,
    read_labeled_csv,
    read_predictions_csv,
    read_unlabeled_csv,
)
from .m_estim import (
    builtin_loss,
    m_estimate_ci,
    read_choice_labeled_csv,
    read_choice_unlabeled_csv,
    sandwich_covariance,
    solve_ppi_m_estimator,
)
from .ppi_mean import (
    MeanEstimateReport,
    Method,
    ft_only_report,
    ppi_mean_ci,
    sample_mean_estimate,
)
from .rampup import RampUpPlan, rampup_final_estimate, run_rampup
from .scaling import ScalingLaw, fit_report_dict, fit_scaling_law, read_observations_csv
from .simulate import (
    SimTrainer,
    bootstrap_robustness,
    brute_force_allocation,
    external_ft_experiment,
    generate_world_data,
    run_estimator_comparison,
    world_from_dict,
)

__version__ = "0.1.0"


@dataclass(frozen=True)
class RunConfig:
    """Global options shared by every subcommand."""

    seed: RngSeed
    threads: int
    fmt: str
    out: str | None


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _round_floats(obj):
    """Normalize a report tree for serialization.

    Floats are rounded to 12 significant digits (then kept as numbers),
    numpy scalars and arrays become plain Python values, and non-finite
    numbers are rejected: a NaN in a report is a bug upstream, not
    something to print.
    """
    if isinstance(obj, dict):
        return {str(k): _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_round_floats(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            raise NumericalError(f"refusing to serialize non-finite value {x}")
        return float(format(x, ".12g"))
    if obj is None or isinstance(obj, str):
        return obj
    raise NumericalError(f"cannot serialize value of type {type(obj).__name__}")


def render_json(payload: dict, indent: int | None = 2) -> str:
    return json.dumps(_round_floats(payload), indent=indent) + "\n"


def render_csv(payload: dict) -> str:
    """Flat dict as a two-line CSV. Nested reports only exist as JSON."""
    clean = _round_floats(payload)
    for key, value in clean.items():
        if isinstance(value, (dict, list)):
            raise ParameterError(
                f"csv format supports flat reports only; field {key!r} is nested"
            )
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(clean.keys()))
    writer.writerow(["" if v is None else v for v in clean.values()])
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _write_csv_file(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(_round_floats(list(row)))


def _mean_report_dict(report: MeanEstimateReport) -> dict:
    return {
        "estimate": report.estimate,
        "variance_hat": report.variance_hat,
        "ci_low": report.ci_low,
        "ci_high": report.ci_high,
        "delta": report.delta,
        "n_ppi": report.n_ppi,
        "m": report.m,
        "method": report.method.value,
        "notes": report.notes,
    }


def _allocation_dict(result: AllocationResult) -> dict:
    return {
        "s_star": result.s_star_int,
        "fraction": result.fraction,
        "objective": result.objective_value,
        "feasible": result.feasible,
        "threshold": result.threshold,
        "s_star_real": result.s_star_real,
        "objective_int": result.objective_value_int,
        "diagnostics": result.diagnostics,
    }


def _load_json_file(path: str, what: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            spec = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParameterError(f"{what} file {path} is not valid JSON: {exc}") from exc
    if not isinstance(spec, dict):
        raise ParameterError(f"{what} file {path} must hold a JSON object")
    return spec


# ---------------------------------------------------------------------------
# Subcommand handlers (each returns a payload dict, or None if it already
# wrote its own output)
# ---------------------------------------------------------------------------


def _cmd_fit_scaling(args, config: RunConfig) -> dict:
    observations = read_observations_csv(args.observations)
    fit = fit_scaling_law(observations)
    payload = fit_report_dict(fit)
    payload["n_observations"] = len(observations)
    return payload


def _cmd_allocate(args, config: RunConfig) -> dict:
    law = ScalingLaw(a=args.a, alpha=args.alpha, b=args.b)
    result = solve_optimal_allocation(law, args.n, sigma_sq=args.sigma_sq)
    return _allocation_dict(result)


def _pool_from_predictions(path_features: str | None, preds: np.ndarray) -> UnlabeledDataset:
    """The pool's features are never consulted when predictions are
    precomputed, so a feature file is optional."""
    if path_features is not None:
        pool = read_unlabeled_csv(path_features)
        if pool.m != preds.shape[0]:
            raise ParameterError(
                f"unlabeled features have {pool.m} rows but predictions have {preds.shape[0]}"
            )
        return pool
    return UnlabeledDataset(np.zeros((preds.shape[0], 1)))


def _cmd_estimate_mean(args, config: RunConfig) -> dict:
    method = {
        "ft-ppi": Method.FT_PPI,
        "ppi-only": Method.PPI_ONLY,
        "sample-mean": Method.SAMPLE_MEAN,
        "ft-only": Method.FT_ONLY,
    }[args.method]

    if method is Method.SAMPLE_MEAN:
        if args.labeled is None:
            raise ParameterError("--labeled is required for method sample-mean")
        labeled = read_labeled_csv(args.labeled)
        return _mean_report_dict(sample_mean_estimate(labeled, args.delta))

    if method is Method.FT_ONLY:
        if args.pred_unlabeled is None:
            raise ParameterError("--pred-unlabeled is required for method ft-only")
        preds_pool = read_predictions_csv(args.pred_unlabeled)
        pool = _pool_from_predictions(args.unlabeled, preds_pool)
        f = Predictor.precomputed([(pool, preds_pool)], s=args.train_size, label="cli")
        return _mean_report_dict(ft_only_report(pool, f, args.delta))

    if args.labeled is None or args.pred_labeled is None or args.pred_unlabeled is None:
        raise ParameterError(
            f"--labeled, --pred-labeled and --pred-unlabeled are required for method {args.method}"
        )
    labeled = read_labeled_csv(args.labeled)
    preds_lab = read_predictions_csv(args.pred_labeled)
    if preds_lab.shape[0] != labeled.n:
        raise ParameterError(
            f"labeled predictions have {preds_lab.shape[0]} rows but data has {labeled.n}"
        )
    preds_pool = read_predictions_csv(args.pred_unlabeled)
    pool = _pool_from_predictions(args.unlabeled, preds_pool)
    f = Predictor.precomputed(
        [(labeled, preds_lab), (pool, preds_pool)], s=args.train_size, label="cli"
    )
    return _mean_report_dict(ppi_mean_ci(labeled, pool, f, args.delta, method=method))


def _cmd_estimate_m(args, config: RunConfig) -> dict:
    if args.loss == "mnl":
        labeled, k1, d1 = read_choice_labeled_csv(args.labeled)
        pool, k2, d2 = read_choice_unlabeled_csv(args.unlabeled)
        if (k1, d1) != (k2, d2):
            raise ParameterError(
                f"labeled file has {k1} options x {d1} features but unlabeled has {k2} x {d2}"
            )
        if args.n_options is not None and args.n_options != k1:
            raise ParameterError(
                f"--n-options {args.n_options} contradicts the files ({k1} options)"
            )
        loss = builtin_loss("mnl", n_options=k1, dim=d1)
    else:
        labeled = read_labeled_csv(args.labeled)
        pool = read_unlabeled_csv(args.unlabeled)
        if labeled.dim != pool.dim:
            raise ParameterError(
                f"labeled features are {labeled.dim}-dimensional but unlabeled are {pool.dim}"
            )
        if args.loss == "mean":
            loss = builtin_loss("mean")
        elif args.loss == "categorical":
            if args.dim is None:
                raise ParameterError("--dim (number of classes) is required for loss categorical")
            loss = builtin_loss("categorical", dim=args.dim)
        else:
            if args.dim is not None and args.dim != labeled.dim:
                raise ParameterError(
                    f"--dim {args.dim} contradicts the files ({labeled.dim} features)"
                )
            loss = builtin_loss("ols", dim=labeled.dim)

    preds_lab = read_predictions_csv(args.pred_labeled)
    if preds_lab.shape[0] != labeled.n:
        raise ParameterError(
            f"labeled predictions have {preds_lab.shape[0]} rows but data has {labeled.n}"
        )
    preds_pool = read_predictions_csv(args.pred_unlabeled)
    if preds_pool.shape[0] != pool.m:
        raise ParameterError(
            f"unlabeled predictions have {preds_pool.shape[0]} rows but data has {pool.m}"
        )
    f = Predictor.precomputed(
        [(labeled, preds_lab), (pool, preds_pool)], s=args.train_size, label="cli"
    )
    theta = solve_ppi_m_estimator(loss, labeled, pool, f)
    cov = sandwich_covariance(loss, labeled, pool, f, theta)
    report = m_estimate_ci(cov, theta, args.delta)
    return {
        "loss": loss.name,
        "theta_hat": report.theta_hat,
        "ci_low": report.ci_low,
        "ci_high": report.ci_high,
        "delta": report.delta,
        "nu_det": report.nu_det,
        "nu_trace": report.nu_trace,
        "sigma_hat": report.sigma_hat,
        "n_ppi": cov.n_ppi,
        "m": cov.m,
    }


def _scenario_seed(args, scenario: dict) -> RngSeed:
    if args.seed is not None:
        return RngSeed(args.seed)
    if "seed" in scenario and scenario["seed"] is not None:
        return RngSeed(int(scenario["seed"]))
    return RngSeed(_env_seed_default())


def _cmd_simulate(args, config: RunConfig) -> dict:
    scenario = _load_json_file(args.scenario, "scenario")
    if config.out is None:
        raise ParameterError("simulate requires --out <directory> for its CSV outputs")
    for key in ("world", "n", "m"):
        if key not in scenario:
            raise ParameterError(f"scenario is missing required key {key!r}")
    world = world_from_dict(scenario["world"])
    n, m = int(scenario["n"]), int(scenario["m"])
    seed = _scenario_seed(args, scenario)

    os.makedirs(config.out, exist_ok=True)
    written: list[str] = []

    section = scenario.get("allocation_curve")
    if section:
        result = brute_force_allocation(
            world,
            n,
            m,
            grid_step=float(section.get("grid_step", 0.05)),
            replicates=int(section.get("replicates", 100)),
            seed=seed.child(1),
        )
        path = os.path.join(config.out, "allocation_curve.csv")
        _write_csv_file(
            path,
            ["fraction", "variance"],
            [[f, v] for f, v in zip(result.fractions, result.variances)],
        )
        written.append(path)

    section = scenario.get("comparison")
    if section:
        report = run_estimator_comparison(
            world, n, m, replicates=int(section.get("replicates", 200)), seed=seed.child(2)
        )
        path = os.path.join(config.out, "comparison.csv")
        _write_csv_file(
            path,
            ["method", "mean_estimate", "rmse", "mae", "variance"],
            [
                [row.method, row.mean_estimate, row.rmse, row.mae, row.variance]
                for row in report.rows
            ],
        )
        written.append(path)

    section = scenario.get("bootstrap")
    if section:
        report = bootstrap_robustness(
            world,
            n_datasets=int(section.get("n_datasets", 10)),
            n_training_seeds=int(section.get("n_training_seeds", 3)),
            n_fit=int(section.get("n_fit", n)),
            resamples=int(section.get("resamples", 200)),
            seed=seed.child(3),
            s_grid=section.get("s_grid"),
            training_noise=bool(section.get("training_noise", True)),
            n_alloc=section.get("n_alloc"),
        )
        path = os.path.join(config.out, "bootstrap.csv")
        rows = [
            [name, q.median, q.ci_low, q.ci_high]
            for name, q in report.quantities.items()
        ]
        rows.append(["fraction_var_data_sampling", report.data_sampling_part, "", ""])
        rows.append(["fraction_var_training", report.training_randomness_part, "", ""])
        rows.append(["fraction_var_total", report.total_variance, "", ""])
        _write_csv_file(path, ["quantity", "value", "ci_low", "ci_high"], rows)
        written.append(path)

    section = scenario.get("external")
    if section:
        report = external_ft_experiment(
            world,
            external_strength=float(section.get("strength", 0.5)),
            n=n,
            m=m,
            replicates=int(section.get("replicates", 200)),
            seed=seed.child(4),
        )
        path = os.path.join(config.out, "external.csv")
        _write_csv_file(
            path,
            [
                "strength",
                "fraction_base",
                "fraction_external",
                "mc_mean",
                "mc_se",
                "true_mean",
                "empirical_variance",
                "analytic_variance",
                "replicates",
            ],
            [
                [
                    report.strength,
                    report.fraction_base,
                    report.fraction_external,
                    report.mc_mean,
                    report.mc_se,
                    report.true_mean,
                    report.empirical_variance,
                    report.analytic_variance,
                    report.replicates,
                ]
            ],
        )
        written.append(path)

    sys.stdout.write(render_json({"written": written}, indent=None))
    return {}


def _cmd_rampup(args, config: RunConfig) -> dict:
    world = world_from_dict(_load_json_file(args.world, "world"))
    seed = config.seed
    labeled, unlabeled = generate_world_data(world, args.n, args.m, seed.child(1))
    trainer = SimTrainer(world, seed.child(2))
    try:
        schedule = tuple(int(tok) for tok in args.schedule.split(","))
    except ValueError as exc:
        raise ParameterError(f"--schedule must be comma-separated integers: {exc}") from exc
    plan = RampUpPlan(schedule=schedule, n_v=args.n_v)
    trace = run_rampup(labeled, plan, trainer, seed.child(3), cv_folds=args.cv_folds)

    lines = [render_json(rec.as_dict(), indent=None) for rec in trace.records]
    final: dict = {
        "completed": trace.completed,
        "stop_stage": trace.stop_stage,
        "s_final": trace.s_final,
        "mode": trace.mode,
        "n_v": trace.n_v,
        "error": trace.error,
    }
    if trace.completed:
        report = rampup_final_estimate(trace, labeled, unlabeled, trainer, args.delta)
        final["estimate"] = _mean_report_dict(report)
    lines.append(render_json({"final": final}, indent=None))
    _emit("".join(lines), config.out)
    return {}


def _cmd_bootstrap(args, config: RunConfig) -> dict:
    world = world_from_dict(_load_json_file(args.world, "world"))
    seed = config.seed
    s_grid = None
    if args.s_grid:
        try:
            s_grid = [int(tok) for tok in args.s_grid.split(",")]
        except ValueError as exc:
            raise ParameterError(f"--s-grid must be comma-separated integers: {exc}") from exc
    report = bootstrap_robustness(
        world,
        n_datasets=args.n_datasets,
        n_training_seeds=args.n_training_seeds,
        n_fit=args.n_fit,
        resamples=args.resamples,
        seed=seed,
        s_grid=s_grid,
        training_noise=not args.no_training_noise,
        n_alloc=args.n_alloc,
    )
    return {
        "quantities": {
            name: {"median": q.median, "ci_low": q.ci_low, "ci_high": q.ci_high}
            for name, q in report.quantities.items()
        },
        "fraction_variance": {
            "data_sampling": report.data_sampling_part,
            "training_randomness": report.training_randomness_part,
            "total": report.total_variance,
        },
        "n_datasets": report.n_datasets,
        "n_training_seeds": report.n_training_seeds,
        "resamples": report.resamples,
    }


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _env_seed_default() -> int:
    raw = os.environ.get("FTPPI_SEED")
    if raw is None:
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError as exc:
        raise ParameterError(f"FTPPI_SEED must be an integer, got {raw!r}") from exc


def _env_threads_default() -> int:
    raw = os.environ.get("FTPPI_THREADS")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError as exc:
        raise ParameterError(f"FTPPI_THREADS must be an integer, got {raw!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--seed",
        type=int,
        default=None,
        help=f"RNG seed (default: $FTPPI_SEED or {DEFAULT_SEED})",
    )
    common.add_argument(
        "--threads",
        type=int,
        default=None,
        help="worker threads; 0 means auto ($FTPPI_THREADS). Accepted for interface"
        " stability; the current numerical core is single-threaded.",
    )
    common.add_argument("--out", default=None, help="write output here instead of stdout"
                        " (for simulate: output directory)")
    common.add_argument(
        "--format", choices=("json", "csv"), default="json", dest="fmt",
        help="output format for flat reports (default json)",
    )

    parser = argparse.ArgumentParser(
        prog="ftppi",
        description="Split a labeled budget between fine-tuning and rectification,"
        " and compute rectified estimates.",
    )
    parser.add_argument("--version", action="version", version=f"ftppi {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "fit-scaling", parents=[common],
        help="fit the residual-variance scaling law to (size, variance) pairs",
    )
    p.add_argument("--observations", required=True, help="CSV with header s,variance")
    p.set_defaults(handler=_cmd_fit_scaling)

    p = sub.add_parser(
        "allocate", parents=[common],
        help="solve for the optimal fine-tuning size under a fitted law",
    )
    p.add_argument("--a", type=float, required=True, help="law coefficient a")
    p.add_argument("--alpha", type=float, required=True, help="law exponent alpha")
    p.add_argument("--b", type=float, required=True, help="law floor b")
    p.add_argument("--n", type=int, required=True, help="labeled budget")
    p.add_argument(
        "--sigma-sq", type=float, default=None,
        help="outcome variance; enables the feasibility check",
    )
    p.set_defaults(handler=_cmd_allocate)

    p = sub.add_parser(
        "estimate-mean", parents=[common],
        help="rectified mean with a normal confidence interval",
    )
    p.add_argument("--labeled", default=None, help="CSV with header y,x1,...,xd")
    p.add_argument("--unlabeled", default=None,
                   help="optional CSV with header x1,...,xd (features are not needed"
                   " when predictions are precomputed)")
    p.add_argument("--pred-labeled", default=None, help="CSV with header f: predictions"
                   " for the labeled rows")
    p.add_argument("--pred-unlabeled", default=None, help="CSV with header f: predictions"
                   " for the unlabeled pool")
    p.add_argument("--delta", type=float, default=0.05, help="miscoverage level (default 0.05)")
    p.add_argument(
        "--method", choices=("ft-ppi", "ppi-only", "sample-mean", "ft-only"),
        default="ft-ppi", help="estimator variant (default ft-ppi)",
    )
    p.add_argument("--train-size", type=int, default=0,
                   help="provenance tag: labels consumed to train the predictor")
    p.set_defaults(handler=_cmd_estimate_mean)

    p = sub.add_parser(
        "estimate-m", parents=[common],
        help="rectified M-estimate with sandwich confidence intervals",
    )
    p.add_argument("--loss", choices=("mean", "categorical", "ols", "mnl"), required=True)
    p.add_argument("--labeled", required=True,
                   help="CSV with header y,x1,...,xd (mnl: choice,x_1_1,...,x_K_d)")
    p.add_argument("--unlabeled", required=True,
                   help="CSV with header x1,...,xd (mnl: x_1_1,...,x_K_d)")
    p.add_argument("--pred-labeled", required=True, help="predicted labels for the labeled rows")
    p.add_argument("--pred-unlabeled", required=True, help="predicted labels for the pool")
    p.add_argument("--delta", type=float, default=0.05, help="miscoverage level (default 0.05)")
    p.add_argument("--dim", type=int, default=None,
                   help="parameter dimension (required for categorical)")
    p.add_argument("--n-options", type=int, default=None,
                   help="mnl only: cross-check of the option count in the files")
    p.add_argument("--train-size", type=int, default=0,
                   help="provenance tag: labels consumed to train the predictor")
    p.set_defaults(handler=_cmd_estimate_m)

    p = sub.add_parser(
        "simulate", parents=[common],
        help="run synthetic-world experiments from a scenario file into --out/",
    )
    p.add_argument("--scenario", required=True, help="scenario JSON (world, n, m, sections)")
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser(
        "rampup", parents=[common],
        help="staged fine-tuning demo on a synthetic world (JSONL trace)",
    )
    p.add_argument("--world", required=True, help="world JSON file")
    p.add_argument("--n", type=int, required=True, help="labeled budget to draw")
    p.add_argument("--m", type=int, required=True, help="unlabeled pool to draw")
    p.add_argument("--schedule", required=True, help="comma-separated stage sizes")
    p.add_argument("--n-v", type=int, required=True, help="measurement holdout size")
    p.add_argument("--cv-folds", type=int, default=None,
                   help="use K-fold residuals instead of a holdout")
    p.add_argument("--delta", type=float, default=0.05, help="miscoverage level (default 0.05)")
    p.set_defaults(handler=_cmd_rampup)

    p = sub.add_parser(
        "bootstrap", parents=[common],
        help="two-level stability audit of the fitted law on a synthetic world",
    )
    p.add_argument("--world", required=True, help="world JSON file")
    p.add_argument("--n-datasets", type=int, required=True)
    p.add_argument("--n-training-seeds", type=int, required=True)
    p.add_argument("--n-fit", type=int, required=True, help="labeled rows per dataset")
    p.add_argument("--resamples", type=int, default=500, help="bootstrap resamples")
    p.add_argument("--s-grid", default=None, help="comma-separated measurement sizes")
    p.add_argument("--no-training-noise", action="store_true",
                   help="reuse one training seed everywhere (isolates data sampling)")
    p.add_argument("--n-alloc", type=int, default=None,
                   help="budget at which the implied split is solved (default --n-fit)")
    p.set_defaults(handler=_cmd_bootstrap)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        threads = args.threads if args.threads is not None else _env_threads_default()
        if threads < 0:
            raise ParameterError(f"--threads must be >= 0, got {threads}")
        seed_value = args.seed if args.seed is not None else _env_seed_default()
        config = RunConfig(
            seed=RngSeed(seed_value), threads=threads, fmt=args.fmt, out=args.out
        )
        payload = args.handler(args, config)
        if payload:
            text = render_csv(payload) if config.fmt == "csv" else render_json(payload)
            _emit(text, config.out)
        return 0
    except FtppiError as exc:
        sys.stderr.write(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n"
        )
        return 2
    except OSError as exc:
        sys.stderr.write(json.dumps({"error": "OSError", "message": str(exc)}) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())

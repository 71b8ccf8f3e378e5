import argparse
import json
import os
import sys
from datetime import datetime

import numpy as np
from pydantic import ValidationError

from core import unique_event_times, validate_dataset
from cox import FitOptions, fit_cox
from discrim import AucKind, ConcordanceKind, roc_id, sensitivity_weights
from errors import DataError, DimensionMismatch, NumericalError, SchemaError
from logger import NullLogger, configure_logger, log_section_footer, log_section_header
from oracle import TrueModel, oracle_table, true_concordance
from sim_config import get_scenario_preset, get_sim_config
from simlab import (
    IN_SAMPLE,
    OUT_OF_SAMPLE,
    ScenarioConfig,
    load_scenario_config,
    outlier_demo,
    run_cv,
    run_study,
    score_sample,
)
from streams import make_stream
from utils import (
    load_json,
    read_survival_csv,
    save_json,
    save_study_report,
    write_auc_csv,
    write_concordance_json,
    write_roc_csv,
    write_survival_csv,
    write_weights_csv,
)

EXIT_USAGE = 1


class UsageError(Exception):
    pass


class SurvDiscArgumentParser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; usage errors here exit with 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _str_to_bool(value):
    if value.lower() not in ("true", "false"):
        raise argparse.ArgumentTypeError(f"expected 'true' or 'false', got {value!r}")
    return value.lower() == "true"


def _add_run_options(parser):
    parser.add_argument("--seed", type=int, default=None, help="Study seed (falls back to SURVDISC_SEED).")
    parser.add_argument(
        "--threads", type=int, default=None, help="Number of parallel threads to use (default: all cores)."
    )
    parser.add_argument(
        "--logging",
        type=_str_to_bool,
        default=None,
        help="Enable or disable per-replicate logging ('true' or 'false').",
    )


def build_parser():
    parser = SurvDiscArgumentParser(
        prog="survdisc",
        description="Semi- and non-parametric discrimination estimators for Cox models.",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=SurvDiscArgumentParser)

    p = sub.add_parser("simulate", help="Run a replicate study for one scenario.")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", help="Scenario JSON document.")
    source.add_argument("--scenario", help="Named scenario preset (base, overfit-20, ...).")
    p.add_argument("--replicates", type=int, default=None, help="Override the replicate count.")
    p.add_argument("--out", required=True, help="Directory for tidy CSVs, summary JSON and report.")
    _add_run_options(p)

    p = sub.add_parser("fit", help="Fit a Cox model to a time,event,x1..xp CSV.")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None, help="JSON file for the fit (default: standard output).")
    p.add_argument("--max-iterations", type=int, default=50)

    p = sub.add_parser("evaluate", help="Fit on a training CSV and score both samples.")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tau", type=float, default=None, help="Truncation time (default: max observed time).")
    p.add_argument("--roc-time", type=float, default=None, help="Also write both ROC curves at this time.")

    p = sub.add_parser("cv", help="Stratified k-fold cross-validation on one CSV.")
    p.add_argument("--data", required=True)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--out", required=True)
    p.add_argument("--tau", type=float, default=None)
    _add_run_options(p)

    p = sub.add_parser("oracle", help="True AUC, weight and survival under the Weibull law.")
    law = p.add_mutually_exclusive_group()
    law.add_argument("--config", help="Scenario JSON document supplying beta, theta, p_shape and tau.")
    law.add_argument("--beta", type=float, nargs="+", help="True coefficients.")
    p.add_argument("--theta", type=float, default=2.0)
    p.add_argument("--p-shape", type=float, default=2.0)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--points", type=int, default=50, help="Number of equally spaced times in (0, tau].")
    p.add_argument("--out", required=True)

    p = sub.add_parser("demo-outlier", help="Single-outlier demonstration.")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("report", help="Pretty-print a study summary.")
    p.add_argument("--results", required=True, help="Directory written by `simulate`.")
    return parser


def _experiment_logger(out_dir, enabled, name):
    os.makedirs(out_dir, exist_ok=True)
    big_logger = configure_logger(os.path.join(out_dir, f"{name}.log"))
    return big_logger, (big_logger if enabled else NullLogger())


def cmd_simulate(args):
    run_config = get_sim_config(seed=args.seed, threads=args.threads, logging=args.logging)
    if args.config:
        cfg = load_scenario_config(args.config)
    else:
        try:
            cfg = ScenarioConfig.model_validate(get_scenario_preset(args.scenario))
        except ValueError as e:
            raise UsageError(str(e)) from e
    overrides = {}
    if args.seed is not None or not args.config:
        overrides["seed"] = run_config["seed"]
    if args.replicates is not None:
        overrides["replicates"] = args.replicates
    if overrides:
        cfg = ScenarioConfig.model_validate({**cfg.model_dump(), **overrides})

    big_logger, replicate_logger = _experiment_logger(args.out, run_config["logging"], "simulate")
    log_section_header(f"Scenario {cfg.name}", big_logger)
    big_logger.info(f"=== {cfg.replicates} replicates with {run_config['threads']} threads, seed {cfg.seed} ===")
    study = run_study(cfg, threads=run_config["threads"], logger=replicate_logger)

    study.tidy_auc().to_csv(os.path.join(args.out, "auc.csv"), index=False, float_format="%.10f")
    study.tidy_concordance().to_csv(os.path.join(args.out, "concordance.csv"), index=False, float_format="%.10f")
    study.binned_auc().to_csv(os.path.join(args.out, "auc_bins.csv"), index=False, float_format="%.10f")
    summary = study.summary()
    save_json(summary, os.path.join(args.out, "summary.json"))
    with open(os.path.join(args.out, "config.json"), "w") as f:
        f.write(cfg.model_dump_json(indent=2) + "\n")
    timestamp = datetime.now().isoformat(sep=" ", timespec="seconds")
    save_study_report(os.path.join(args.out, "report.txt"), summary, timestamp, big_logger)
    big_logger.info(f"failed replicates: {summary['failed_replicates']}")
    log_section_footer(big_logger)
    return 0


def cmd_fit(args):
    if args.max_iterations < 1:
        raise UsageError(f"--max-iterations must be positive, got {args.max_iterations}")
    ds = validate_dataset(read_survival_csv(args.data))
    fit = fit_cox(ds, FitOptions(max_iterations=args.max_iterations))
    payload = {**fit.to_dict(), "n": ds.n, "n_events": ds.n_events}
    if args.out:
        save_json(payload, args.out)
    else:
        print(json.dumps(payload, indent=2))
    return 0


def _scores_to_outputs(scores_by_side, out_dir):
    write_auc_csv(
        {side: list(scores.auc.values()) for side, scores in scores_by_side.items()},
        os.path.join(out_dir, "auc.csv"),
    )
    write_concordance_json(
        {side: list(scores.concordance.values()) for side, scores in scores_by_side.items()},
        os.path.join(out_dir, "concordance.json"),
    )
    failures = {side: scores.failures for side, scores in scores_by_side.items() if scores.failures}
    if failures:
        save_json(failures, os.path.join(out_dir, "failures.json"))


def cmd_evaluate(args):
    big_logger = configure_logger()
    train = validate_dataset(read_survival_csv(args.train))
    test = validate_dataset(read_survival_csv(args.test), require_events=False)
    if train.p != test.p:
        raise DimensionMismatch(f"training data has {train.p} covariates, test data has {test.p}")
    fit = fit_cox(train)
    os.makedirs(args.out, exist_ok=True)
    tau = args.tau if args.tau is not None else float(max(train.time.max(), test.time.max()))

    samples = {IN_SAMPLE: train, OUT_OF_SAMPLE: test}
    etas = {side: fit.linear_predictor(ds.X) for side, ds in samples.items()}
    scores = {side: score_sample(etas[side], ds, tau, big_logger) for side, ds in samples.items()}
    _scores_to_outputs(scores, args.out)

    diagnostics = {}
    for side, ds in samples.items():
        if ds.event.any():
            diagnostics[side] = [sensitivity_weights(etas[side], ds, t) for t in unique_event_times(ds)]
    write_weights_csv(diagnostics, os.path.join(args.out, "weights.csv"))

    if args.roc_time is not None:
        rocs = {}
        for side, ds in samples.items():
            rocs[side] = []
            for kind in (AucKind.SEMI_PARAMETRIC, AucKind.NON_PARAMETRIC):
                try:
                    rocs[side].append(roc_id(etas[side], ds, args.roc_time, kind))
                except DataError as e:
                    big_logger.warning(f"{kind.value} ROC at t={args.roc_time} skipped for {side}: {e}")
        write_roc_csv(rocs, os.path.join(args.out, "roc.csv"))
    save_json(fit.to_dict(), os.path.join(args.out, "fit.json"))
    return 0


def cmd_cv(args):
    run_config = get_sim_config(seed=args.seed, threads=args.threads, logging=args.logging)
    ds = validate_dataset(read_survival_csv(args.data))
    if not 2 <= args.folds <= ds.n:
        raise UsageError(f"--folds must lie in [2, {ds.n}], got {args.folds}")
    big_logger, fold_logger = _experiment_logger(args.out, run_config["logging"], "cv")
    log_section_header(f"{args.folds}-fold cross-validation", big_logger)
    folds = run_cv(
        ds,
        args.folds,
        make_stream(run_config["seed"], 0, "cv-folds"),
        tau=args.tau,
        logger=fold_logger,
        progress=True,
        threads=run_config["threads"],
    )
    records = []
    for result in folds:
        if result.failed:
            big_logger.warning(f"fold {result.replicate}: {result.failure}")
            continue
        for side in (IN_SAMPLE, OUT_OF_SAMPLE):
            for kind, est in result.side(side).concordance.items():
                records.append(
                    {
                        "fold": result.replicate,
                        "estimator": kind.value,
                        "tau": est.tau,
                        "value": est.value,
                        "sample_side": side,
                    }
                )
    save_json(records, os.path.join(args.out, "cv_concordance.json"))
    log_section_footer(big_logger)
    return 0


def cmd_oracle(args):
    if args.config:
        cfg = load_scenario_config(args.config)
        model, tau = cfg.true_model(), cfg.tau
    else:
        beta = args.beta if args.beta else list(ScenarioConfig().beta)
        model = TrueModel(beta=tuple(beta), theta=args.theta, p_shape=args.p_shape)
        tau = 1.0
    if args.tau is not None:
        tau = args.tau
    if not tau > 0:
        raise UsageError(f"--tau must be positive, got {tau}")
    if args.points < 1:
        raise UsageError("--points must be positive")
    os.makedirs(args.out, exist_ok=True)
    times = np.linspace(0.0, tau, args.points + 1)[1:]
    oracle_table(model, times, tau).to_csv(
        os.path.join(args.out, "oracle.csv"), index=False, float_format="%.10f"
    )
    save_json(
        {"estimator": "true", "tau": tau, "value": round(true_concordance(model, tau), 10)},
        os.path.join(args.out, "true_concordance.json"),
    )
    return 0


def cmd_demo_outlier(args):
    seed = get_sim_config(seed=args.seed)["seed"]
    big_logger = configure_logger()
    report = outlier_demo(seed=seed, logger=big_logger)
    os.makedirs(args.out, exist_ok=True)
    save_json(report.to_dict(), os.path.join(args.out, "outlier_report.json"))
    write_survival_csv(report.clean_test, os.path.join(args.out, "test_clean.csv"))
    write_survival_csv(report.outlier_test, os.path.join(args.out, "test_outlier.csv"))
    return 0


def cmd_report(args):
    from rich.console import Console
    from rich.table import Table

    summary_path = os.path.join(args.results, "summary.json")
    if not os.path.exists(summary_path):
        raise SchemaError(f"{summary_path} not found; run `simulate` first")
    summary = load_json(summary_path)
    console = Console()
    console.print(f"[bold]Scenario[/bold] {summary['scenario']}")
    console.print(
        f"replicates {summary['replicates']}, failed {summary['failed_replicates']}, "
        f"censoring {summary['mean_censoring_fraction']:.3f}, "
        f"median event time {summary['mean_median_event_time']:.3f}"
    )
    if summary.get("true_concordance") is not None:
        console.print(f"true concordance {summary['true_concordance']:.4f}")

    table = Table(title="Concordance")
    for column in ("estimator", "in-sample", "out-of-sample", "out - in"):
        table.add_column(column, justify="right" if column != "estimator" else "left")
    order = [k.value for k in ConcordanceKind]
    for name in sorted(summary["concordance"], key=lambda k: order.index(k) if k in order else len(order)):
        sides = summary["concordance"][name]

        def cell(side):
            if side not in sides:
                return "-"
            return f"{sides[side]['mean']:.4f} ± {sides[side]['sd']:.4f}"

        gap = sides.get("mean_out_minus_in")
        table.add_row(name, cell(IN_SAMPLE), cell(OUT_OF_SAMPLE), "-" if gap is None else f"{gap:+.4f}")
    console.print(table)
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "evaluate": cmd_evaluate,
    "cv": cmd_cv,
    "oracle": cmd_oracle,
    "demo-outlier": cmd_demo_outlier,
    "report": cmd_report,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"survdisc: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, NumericalError) as e:
        print(f"survdisc: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except ValidationError as e:
        print(f"survdisc: invalid scenario config: {e}", file=sys.stderr)
        return DataError.exit_code
    except FileNotFoundError as e:
        print(f"survdisc: {e}", file=sys.stderr)
        return DataError.exit_code
    except ValueError as e:
        print(f"survdisc: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

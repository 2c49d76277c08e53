import argparse
import sys

from pathlib import Path
from typing import Optional, Sequence
from loguru import logger
from pydantic import ValidationError

from .analytic.services.oracle_service import oracle_table
from .config.models.config import ConfigFile, Mode, OracleConfig
from .config.services.config_service import load_config_file
from .diagnosis.models.options import DiagnoseOptions
from .diagnosis.services.diagnosis_service import diagnose
from .harness.models.experiment import ExperimentConfig
from .harness.services.experiment_service import (
    run_batch,
    run_grid,
    run_whi_replica,
    simulate_cohorts,
)
from .ingest.models.dataset import IngestedDataset
from .ingest.services.cohort_io_service import load_cohorts, write_cohort_csv
from .nuisance.models.estimator import ModelKind
from .signals.models.report import SignalUnit
from .report.services.report_service import (
    oracle_frame,
    render_signal_report,
    write_batch_outputs,
    write_grid_outputs,
    write_oracle_csv,
    write_signal_report,
    write_whi_outputs,
)
from .synthgen.models.mechanism import SelectionTable, UModel
from .synthgen.services.mechanism_service import normalize_kinds
from .utils.errors import BiasProbeError, ConfigurationError
from .utils.logging_utils import configure_logging

MODEL_CHOICES = {"freq": ModelKind.FREQUENCY, "logistic": ModelKind.LOGISTIC}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="biasprobe",
        description="Simulate and diagnose causal bias mechanisms between RCT and observational cohorts.",
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="Log at debug level")
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="Write synthetic RCT and OS cohort CSVs")
    simulate.add_argument("--config", type=Path, help="Config file with an experiment section")
    simulate.add_argument("--mechanism", help="Mechanism or '+'-joined combination")
    simulate.add_argument("--d", type=int, help="Covariate dimension")
    simulate.add_argument("--n-rct", type=int, help="RCT cohort size")
    simulate.add_argument("--n-os", type=int, help="OS cohort size")
    simulate.add_argument("--u-model", choices=[m.value for m in UModel])
    simulate.add_argument("--selection-table", type=float, nargs=4, metavar=("P00", "P01", "P10", "P11"))
    simulate.add_argument("--seed", type=int, default=0)
    simulate.add_argument("--latent", action="store_true", help="Also write latent sidecar CSVs")
    simulate.add_argument("--out", type=Path, default=Path("."))

    diag = sub.add_parser("diagnose", help="Diagnose the bias mechanism of a cohort pair")
    diag.add_argument("--config", type=Path, help="Config file with a diagnose section")
    diag.add_argument("--rct", type=Path)
    diag.add_argument("--os", type=Path)
    diag.add_argument("--alpha", type=float)
    diag.add_argument("--model", choices=sorted(MODEL_CHOICES))
    diag.add_argument("--val-fraction", type=float)
    diag.add_argument("--split-seed", type=int)
    diag.add_argument("--permutations", type=int)
    diag.add_argument("--unit", choices=[u.value for u in SignalUnit])
    diag.add_argument("--no-debias", dest="debias", action="store_false", default=None)
    diag.add_argument("--out", type=Path, help="Directory for report.json and report.md")

    oracle = sub.add_parser("oracle", help="Monte-Carlo theoretical signals")
    oracle.add_argument("--config", type=Path, help="Config file with an oracle section")
    oracle.add_argument("--mechanism", nargs="+")
    oracle.add_argument("--p", type=float, nargs="+")
    oracle.add_argument("--mc", type=int)
    oracle.add_argument("--seed", type=int)
    oracle.add_argument("--u-model", choices=[m.value for m in UModel])
    oracle.add_argument("--selection-table", type=float, nargs=4, metavar=("P00", "P01", "P10", "P11"))
    oracle.add_argument("--out", type=Path, help="CSV destination, stdout when omitted")

    for name, text in (
        ("batch", "Run a seeded batch"),
        ("grid", "Run a mechanism by d by n_rct sweep"),
        ("whi-replica", "Run the combined selection and transportability replica"),
    ):
        command = sub.add_parser(name, help=text)
        command.add_argument("--config", type=Path, required=True)
        command.add_argument("--jobs", type=int, help="Override n_jobs")
        command.add_argument("--out", type=Path, default=Path("."))

    run = sub.add_parser("run", help="Run the command named by the mode of a config file")
    run.add_argument("--config", type=Path, required=True)
    run.add_argument("--jobs", type=int, help="Override n_jobs for experiment modes")
    run.add_argument("--out", type=Path, help="Output directory or file")
    return parser


def _simulate(args: argparse.Namespace) -> None:
    config = load_config_file(args.config).experiment if args.config else ExperimentConfig()
    updates = {}
    if args.mechanism:
        updates["mechanisms"] = normalize_kinds(args.mechanism)
    for key in ("d", "n_rct", "n_os", "u_model"):
        if getattr(args, key) is not None:
            updates[key] = getattr(args, key)
    if args.selection_table:
        updates["selection_table"] = SelectionTable.model_validate(args.selection_table)
    updates["n_val"] = min(config.n_val, updates.get("n_os", config.n_os))
    config = config.with_updates(**updates)

    _, rct, os_train, _ = simulate_cohorts(config, args.seed)
    write_cohort_csv(
        rct, args.out / "rct.csv", args.out / "rct_latent.csv" if args.latent else None, args.verbose
    )
    write_cohort_csv(
        os_train, args.out / "os.csv", args.out / "os_latent.csv" if args.latent else None, args.verbose
    )


def _diagnose(args: argparse.Namespace) -> None:
    section = load_config_file(args.config).diagnose if args.config else None
    rct_path = args.rct or (section.rct if section else None)
    os_path = args.os or (section.os if section else None)
    if rct_path is None or os_path is None:
        raise ConfigurationError("diagnose needs --rct and --os or a config diagnose section")

    options = section.options if section else DiagnoseOptions()
    updates = {
        key: getattr(args, key)
        for key in ("alpha", "val_fraction", "split_seed", "permutations", "unit", "debias")
        if getattr(args, key) is not None
    }
    if args.model:
        updates["model_kind"] = MODEL_CHOICES[args.model]
    options = DiagnoseOptions(**{**options.model_dump(), **updates})

    rct, os = load_cohorts(IngestedDataset(rct_path=rct_path, os_path=os_path))
    report = diagnose(rct, os, options)
    if args.out:
        write_signal_report(report, args.out, args.verbose)
    else:
        sys.stdout.write(render_signal_report(report))


def _oracle(args: argparse.Namespace) -> None:
    section = load_config_file(args.config).oracle if args.config else None
    updates = {
        key: value
        for key, value in (
            ("mechanisms", args.mechanism),
            ("p_values", args.p),
            ("n_mc", args.mc),
            ("seed", args.seed),
            ("u_model", args.u_model),
            ("selection_table", args.selection_table),
        )
        if value is not None
    }
    if section is None and not {"mechanisms", "p_values"} <= set(updates):
        raise ConfigurationError("oracle needs --mechanism and --p or a config oracle section")
    defaults = section.model_dump() if section else {}
    section = OracleConfig(**{**defaults, **updates})
    signals = oracle_table(
        section.mechanisms,
        section.p_values,
        n_mc=section.n_mc,
        seed=section.seed,
        selection_table=section.selection_table,
        u_model=section.u_model,
    )
    if args.out:
        write_oracle_csv(signals, args.out, args.verbose)
    else:
        sys.stdout.write(oracle_frame(signals).to_csv(index=False, lineterminator="\n"))


def _experiment(args: argparse.Namespace) -> None:
    config_file: ConfigFile = load_config_file(args.config)
    config = config_file.experiment
    if args.jobs is not None:
        config = config.with_updates(n_jobs=args.jobs)
    if args.command == Mode.BATCH.value:
        summary, records = run_batch(config)
        write_batch_outputs(summary, records, args.out, args.verbose)
    elif args.command == Mode.GRID.value:
        grid = config_file.grid
        cells = run_grid(config, grid.mechanisms, grid.dimensions, grid.n_rct_values)
        write_grid_outputs(cells, args.out, args.verbose)
    else:
        summary, combined, corrected = run_whi_replica(config)
        write_whi_outputs(summary, combined, corrected, args.out, args.verbose)


def _run(args: argparse.Namespace) -> None:
    mode = load_config_file(args.config).mode
    argv = [mode.value, "--config", str(args.config)]
    if args.out is not None:
        argv += ["--out", str(args.out)]
    if args.jobs is not None and mode in (Mode.BATCH, Mode.GRID, Mode.WHI_REPLICA):
        argv += ["--jobs", str(args.jobs)]
    logger.info("Config mode {} runs '{}'", mode.value, " ".join(argv))
    sub_args = build_parser().parse_args(argv)
    sub_args.verbose = args.verbose
    COMMANDS[sub_args.command](sub_args)


COMMANDS = {
    "simulate": _simulate,
    "diagnose": _diagnose,
    "oracle": _oracle,
    "batch": _experiment,
    "grid": _experiment,
    "whi-replica": _experiment,
    "run": _run,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point of the ``biasprobe`` command.

    Returns:
        int: 0 on success, 2 for configuration errors, 3 for data errors and 4 for
        runtime failures.
    """
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        COMMANDS[args.command](args)
    except BiasProbeError as e:
        logger.error("{}", e)
        return e.exit_code
    except ValidationError as e:
        logger.error("Invalid configuration: {}", e)
        return 2
    except Exception as e:
        logger.exception("Unexpected failure: {}", e)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())

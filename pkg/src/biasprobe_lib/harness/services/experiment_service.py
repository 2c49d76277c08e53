import math

import numpy as np

from typing import Iterable, Optional
from joblib import Parallel, delayed
from loguru import logger

from ...diagnosis.models.options import DiagnoseOptions
from ...diagnosis.services.diagnosis_service import diagnose_cohorts
from ...synthgen.models.cohort import Cohort
from ...synthgen.models.mechanism import (
    MechanismKind,
    Population,
    SelectionTable,
    Target,
)
from ...synthgen.services.cohort_service import generate_cohort
from ...synthgen.services.mechanism_service import make_mechanism_spec, normalize_kinds
from ...synthgen.services.table_service import build_tables
from ...signals.models.report import Verdict
from ...utils.errors import BiasProbeError, ConfigurationError, RunFailedError
from ...utils.rng_utils import spawn_streams
from ..models.experiment import (
    BatchSummary,
    ExperimentConfig,
    GridCell,
    RunRecord,
    WhiReplicaSummary,
)

CORRECTED_SELECTION = 0.99


def simulate_cohorts(config: ExperimentConfig, seed: int) -> tuple[float, Cohort, Cohort, Cohort]:
    """
    Generates the RCT, OS training and OS validation cohorts of one seeded run.

    Returns:
        tuple: The drawn p and the three cohorts.
    """
    streams = spawn_streams(seed)
    p = float(streams["params"].uniform(*config.p_range))
    spec = make_mechanism_spec(
        config.mechanisms,
        2**config.d,
        p,
        streams["params"],
        selection_table=config.resolved_selection_table,
        u_model=config.u_model,
    )
    tables = build_tables(spec, config.d, streams["tables"])
    rct = generate_cohort(tables, spec, Population.RCT, config.n_rct, streams["rct"])
    os_train = generate_cohort(tables, spec, Population.OS, config.n_os, streams["os_train"])
    os_val = generate_cohort(tables, spec, Population.OS, config.n_val, streams["os_val"])
    return p, rct, os_train, os_val


def diagnose_options(config: ExperimentConfig, seed: int) -> DiagnoseOptions:
    return DiagnoseOptions(
        alpha=config.alpha,
        model_kind=config.model_kind,
        smoothing=config.smoothing,
        l2=config.l2,
        max_iters=config.max_iters,
        tol=config.tol,
        split_seed=seed,
        permutations=config.permutations,
        debias=config.debias,
        unit=config.unit,
        min_cell_rows=config.min_cell_rows,
    )


def run_single(config: ExperimentConfig, seed: int) -> RunRecord:
    """
    Generates, fits, scores and classifies one seeded run.

    Every stage draws from its own child stream of ``seed``, so a record only depends
    on the config and the seed.

    Args:
        config (ExperimentConfig): The experiment settings.
        seed (int): The run seed.

    Returns:
        RunRecord: Signals and verdict of the run.

    Raises:
        RunFailedError: If any stage fails, carrying the seed.
    """
    try:
        p, rct, os_train, os_val = simulate_cohorts(config, seed)
        report = diagnose_cohorts(rct, os_train, os_val, diagnose_options(config, seed))
    except (BiasProbeError, ValueError) as e:
        raise RunFailedError(seed, e) from e
    logger.debug("Seed {} ({}): verdict {}", seed, config.label, report.verdict.value)
    return RunRecord.from_report(seed, config.label, p, report)


def _run_safely(config: ExperimentConfig, seed: int) -> RunRecord:
    try:
        return run_single(config, seed)
    except RunFailedError as e:
        logger.warning("{}", e)
        return RunRecord(seed=seed, mechanism=config.label, error=str(e.cause))


def run_batch(config: ExperimentConfig) -> tuple[BatchSummary, list[RunRecord]]:
    """
    Runs seeds ``base_seed .. base_seed + n_seeds - 1`` and aggregates them.

    Failed runs are recorded with their error and counted in the summary.

    Args:
        config (ExperimentConfig): The experiment settings.

    Returns:
        tuple[BatchSummary, list[RunRecord]]: Summary and records in seed order.
    """
    seeds = range(config.base_seed, config.base_seed + config.n_seeds)
    logger.info(
        "Running {} seeds of {} (d={}, n_rct={}, n_os={}, n_val={})",
        config.n_seeds,
        config.label,
        config.d,
        config.n_rct,
        config.n_os,
        config.n_val,
    )
    records = Parallel(n_jobs=config.n_jobs)(
        delayed(_run_safely)(config, seed) for seed in seeds
    )
    records = sorted(records, key=lambda record: record.seed)
    summary = summarize(records, config.alpha, config.label, config.expected_verdict)
    logger.info(
        "Finished {}: {} runs, {} failed, match fraction {}",
        config.label,
        summary.n_runs,
        summary.n_failed,
        summary.match_fraction,
    )
    return summary, records


def summarize(
    records: Iterable[RunRecord],
    alpha: float,
    mechanism: str,
    expected: Optional[Verdict] = None,
) -> BatchSummary:
    """
    Folds run records, in seed order, into a ``BatchSummary``.

    Fractions are taken over successful runs; a channel counts as significant when its
    p-value is below ``alpha``.
    """
    records = sorted(records, key=lambda record: record.seed)
    done = [record for record in records if not record.failed]
    n = len(done)

    def fraction(flags: Iterable[bool]) -> float:
        flags = list(flags)
        return float(np.mean(flags)) if flags else math.nan

    significant = {
        t: [record.significant(t, alpha) for record in done] for t in Target
    }
    verdict_counts: dict[str, int] = {}
    for record in done:
        verdict_counts[record.verdict.value] = verdict_counts.get(record.verdict.value, 0) + 1

    def median_r(target: Target) -> float:
        values = [record.r(target) for record in done if not math.isnan(record.r(target))]
        return float(np.median(values)) if values else math.nan

    return BatchSummary(
        mechanism=mechanism,
        alpha=alpha,
        n_runs=len(records),
        n_failed=len(records) - n,
        match_fraction=(
            None if expected is None else fraction(r.verdict is expected for r in done)
        ),
        all_nonsignificant_fraction=fraction(
            not any(significant[t][i] for t in Target) for i in range(n)
        ),
        any_significant_fraction=fraction(
            any(significant[t][i] for t in Target) for i in range(n)
        ),
        significant_fraction={t: fraction(significant[t]) for t in Target},
        positive_fraction={
            t: fraction(s and r.r(t) > 0 for s, r in zip(significant[t], done))
            for t in Target
        },
        negative_fraction={
            t: fraction(s and r.r(t) < 0 for s, r in zip(significant[t], done))
            for t in Target
        },
        median_r={t: median_r(t) for t in Target},
        verdict_counts=verdict_counts,
    )


def run_grid(
    config: ExperimentConfig,
    mechanisms: Optional[list] = None,
    dimensions: Iterable[int] = (5, 6, 7),
    n_rct_values: Iterable[int] = (2000, 50000),
) -> list[GridCell]:
    """
    Runs one batch per (mechanism, d, n_rct) combination.

    Args:
        config (ExperimentConfig): Settings shared by every cell.
        mechanisms (Optional[list]): Mechanisms or combinations, default the config's.
        dimensions (Iterable[int]): Covariate dimensions to sweep.
        n_rct_values (Iterable[int]): RCT sizes to sweep.

    Returns:
        list[GridCell]: ``len(mechanisms) * len(dimensions) * len(n_rct_values)`` cells.

    Raises:
        ConfigurationError: If the grid is empty.
    """
    mechanisms = [normalize_kinds(m) for m in (mechanisms or [config.mechanisms])]
    dimensions, n_rct_values = list(dimensions), list(n_rct_values)
    if not mechanisms or not dimensions or not n_rct_values:
        raise ConfigurationError("Grid must not be empty", key="grid")

    cells = []
    for kinds in mechanisms:
        for d in dimensions:
            for n_rct in n_rct_values:
                cell_config = config.with_updates(mechanisms=kinds, d=d, n_rct=n_rct)
                summary, _ = run_batch(cell_config)
                cells.append(
                    GridCell(mechanism=cell_config.label, d=d, n_rct=n_rct, summary=summary)
                )
    return cells


def run_whi_replica(
    config: ExperimentConfig,
) -> tuple[WhiReplicaSummary, list[RunRecord], list[RunRecord]]:
    """
    Runs the combined type 2 selection plus transportability batch and a corrected twin.

    The corrected batch raises every selection probability to 0.99, which removes the
    selection bias and leaves transportability.

    Args:
        config (ExperimentConfig): Must combine selection_type2 with transportability.
            Without a selection table the WHI-like table (0.9, 0.9, 0.3, 0.1) is used.

    Returns:
        tuple: The summary and the records of both batches.

    Raises:
        ConfigurationError: If the config is not the combined setting.
    """
    required = {MechanismKind.SELECTION_TYPE2, MechanismKind.TRANSPORTABILITY}
    if set(config.mechanisms) != required:
        raise ConfigurationError(
            "whi-replica needs mechanisms [selection_type2, transportability]",
            key="mechanisms",
        )
    combined_config = config.with_updates(
        selection_table=config.selection_table or SelectionTable.whi_like()
    )
    corrected_config = config.with_updates(
        selection_table=SelectionTable.uniform(CORRECTED_SELECTION)
    )
    combined, combined_records = run_batch(combined_config)
    corrected, corrected_records = run_batch(corrected_config)
    shift = {t: corrected.median_r[t] - combined.median_r[t] for t in Target}
    summary = WhiReplicaSummary(combined=combined, corrected=corrected, median_shift=shift)
    return summary, combined_records, corrected_records

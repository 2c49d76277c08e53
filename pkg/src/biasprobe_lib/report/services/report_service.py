import json
import math

import pandas as pd

from pathlib import Path
from typing import Iterable

from ...analytic.models.profile import TheoreticalSignals
from ...harness.models.experiment import BatchSummary, GridCell, RunRecord, WhiReplicaSummary
from ...signals.models.report import SignalReport
from ...synthgen.models.mechanism import Target
from ...utils.errors import SchemaError
from ...utils.file_utils import write_file
from ...utils.jinja_utils import JinjaEnvironment

TEMPLATE_DIR = Path(__file__).parent.parent / "templates"
RUN_COLUMNS = list(RunRecord.model_fields)
ORACLE_COLUMNS = ["mechanism", "p", "rho_S", "se_S", "rho_A", "se_A", "rho_Y", "se_Y"]


def _jinja() -> JinjaEnvironment:
    env = JinjaEnvironment(TEMPLATE_DIR)
    env.add_globals({"targets": list(Target)})
    return env


def _csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, lineterminator="\n")


def render_signal_report(report: SignalReport) -> str:
    return _jinja().render_template("diagnose_report.md.j2", {"report": report})


def render_batch_summary(summary: BatchSummary) -> str:
    return _jinja().render_template("batch_summary.md.j2", {"summary": summary})


def render_grid_summary(cells: list[GridCell]) -> str:
    return _jinja().render_template("grid_summary.md.j2", {"cells": cells})


def render_whi_replica(summary: WhiReplicaSummary) -> str:
    return _jinja().render_template("whi_replica.md.j2", {"summary": summary})


def write_signal_report(report: SignalReport, out_dir: Path, verbose: bool = False) -> None:
    """Writes ``report.json`` and ``report.md`` into ``out_dir``."""
    write_file(out_dir / "report.json", report.to_json() + "\n", verbose)
    write_file(out_dir / "report.md", render_signal_report(report), verbose)


def runs_frame(records: Iterable[RunRecord]) -> pd.DataFrame:
    rows = []
    for record in records:
        row = record.model_dump()
        row["verdict"] = record.verdict.value if record.verdict is not None else None
        rows.append(row)
    return pd.DataFrame(rows, columns=RUN_COLUMNS)


def write_runs_csv(records: Iterable[RunRecord], path: Path, verbose: bool = False) -> None:
    """Writes one run record per row with the columns of ``RunRecord``."""
    write_file(path, _csv(runs_frame(records)), verbose)


def read_runs_csv(path: Path) -> list[RunRecord]:
    """
    Reads a file written by ``write_runs_csv`` back into run records.

    Raises:
        SchemaError: If the columns do not match ``RunRecord``.
    """
    frame = pd.read_csv(path, float_precision="round_trip", keep_default_na=False)
    if list(frame.columns) != RUN_COLUMNS:
        raise SchemaError(f"{path}: expected columns {RUN_COLUMNS}")
    records = []
    for row in frame.to_dict(orient="records"):
        for key in ("verdict", "error"):
            if row[key] == "":
                row[key] = None
        for key, value in row.items():
            if value == "" and key not in ("verdict", "error"):
                row[key] = math.nan
        records.append(RunRecord(**row))
    return records


def write_summary_json(summary: BatchSummary | WhiReplicaSummary, path: Path, verbose: bool = False) -> None:
    write_file(path, summary.model_dump_json(indent=2) + "\n", verbose)


def grid_frame(cells: Iterable[GridCell]) -> pd.DataFrame:
    rows = []
    for cell in cells:
        summary = cell.summary
        row = {
            "mechanism": cell.mechanism,
            "d": cell.d,
            "n_rct": cell.n_rct,
            "n_runs": summary.n_runs,
            "n_failed": summary.n_failed,
            "match_fraction": summary.match_fraction,
            "all_nonsignificant_fraction": summary.all_nonsignificant_fraction,
        }
        for target in Target:
            row[f"sig_{target.value}"] = summary.significant_fraction[target]
        for target in Target:
            row[f"median_r_{target.value}"] = summary.median_r[target]
        rows.append(row)
    return pd.DataFrame(rows)


def write_grid_csv(cells: Iterable[GridCell], path: Path, verbose: bool = False) -> None:
    write_file(path, _csv(grid_frame(cells)), verbose)


def oracle_frame(signals: Iterable[TheoreticalSignals]) -> pd.DataFrame:
    return pd.DataFrame([s.to_row() for s in signals], columns=ORACLE_COLUMNS)


def write_oracle_csv(signals: Iterable[TheoreticalSignals], path: Path, verbose: bool = False) -> None:
    """Writes ``mechanism,p,rho_S,se_S,rho_A,se_A,rho_Y,se_Y``, one row per grid point."""
    write_file(path, _csv(oracle_frame(signals)), verbose)


def write_batch_outputs(
    summary: BatchSummary, records: list[RunRecord], out_dir: Path, verbose: bool = False
) -> None:
    """Writes ``runs.csv``, ``summary.json`` and ``summary.md`` into ``out_dir``."""
    write_runs_csv(records, out_dir / "runs.csv", verbose)
    write_summary_json(summary, out_dir / "summary.json", verbose)
    write_file(out_dir / "summary.md", render_batch_summary(summary), verbose)


def write_grid_outputs(cells: list[GridCell], out_dir: Path, verbose: bool = False) -> None:
    """Writes ``grid.csv``, per-cell summaries in ``grid.json`` and ``grid.md``."""
    write_grid_csv(cells, out_dir / "grid.csv", verbose)
    payload = [json.loads(cell.model_dump_json()) for cell in cells]
    write_file(out_dir / "grid.json", json.dumps(payload, indent=2) + "\n", verbose)
    write_file(out_dir / "grid.md", render_grid_summary(cells), verbose)


def write_whi_outputs(
    summary: WhiReplicaSummary,
    combined: list[RunRecord],
    corrected: list[RunRecord],
    out_dir: Path,
    verbose: bool = False,
) -> None:
    """Writes both batches' run records, the summary JSON and a markdown shift table."""
    write_runs_csv(combined, out_dir / "runs_combined.csv", verbose)
    write_runs_csv(corrected, out_dir / "runs_corrected.csv", verbose)
    write_summary_json(summary, out_dir / "summary.json", verbose)
    write_file(out_dir / "summary.md", render_whi_replica(summary), verbose)

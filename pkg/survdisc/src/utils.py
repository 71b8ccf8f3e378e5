# utils.py
import json
import logging
import re

import numpy as np
import pandas as pd

from core import SurvivalDataset
from errors import ParseError, SchemaError

logger = logging.getLogger(__name__)

RESULT_FLOAT_FORMAT = "%.10f"
DATA_FLOAT_FORMAT = "%.17g"
COVARIATE_COLUMN = re.compile(r"^x(\d+)$")


def load_json(file_path):
    """
    Loads a JSON document from file_path.
    """
    try:
        with open(file_path, "r") as file:
            return json.load(file)
    except json.JSONDecodeError as e:
        raise ParseError(f"{file_path}: {e.msg}", line=e.lineno) from e


def save_json(data, file_path):
    with open(file_path, "w") as file:
        json.dump(data, file, indent=2)
        file.write("\n")


def _check_header(columns, file_path):
    columns = [c.strip() for c in columns]
    if columns[:2] != ["time", "event"]:
        raise SchemaError(f"{file_path}: header must start with 'time,event', got {','.join(columns[:2])}")
    for position, name in enumerate(columns[2:], start=1):
        match = COVARIATE_COLUMN.match(name)
        if not match or int(match.group(1)) != position:
            raise SchemaError(f"{file_path}: covariate column {position + 2} must be named x{position}, got {name!r}")
    return columns


def _parses_as_float(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_survival_csv(file_path) -> SurvivalDataset:
    """
    Reads a `time,event,x1..xp` CSV. Values that fail to parse raise
    ParseError with the 1-based file line number (the header is line 1).
    """
    try:
        raw = pd.read_csv(file_path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError as e:
        raise SchemaError(f"{file_path}: file is empty") from e
    except pd.errors.ParserError as e:
        raise ParseError(f"{file_path}: {e}") from e
    raw.columns = _check_header(raw.columns, file_path)
    if raw.empty:
        raise SchemaError(f"{file_path}: no data rows")

    try:
        parsed = raw.astype(float)
    except ValueError as e:
        bad = ~raw.apply(lambda col: col.map(_parses_as_float))
        row = int(np.flatnonzero(bad.any(axis=1).to_numpy())[0])
        column = bad.columns[bad.iloc[row].to_numpy()][0]
        raise ParseError(f"non-numeric {column} value {raw.iloc[row][column]!r}", line=row + 2) from e
    event = parsed["event"].to_numpy()
    not_binary = ~np.isin(event, (0, 1))
    if not_binary.any():
        row = int(np.flatnonzero(not_binary)[0])
        raise ParseError(f"event must be 0 or 1, got {raw.iloc[row]['event']!r}", line=row + 2)

    return SurvivalDataset(
        time=parsed["time"].to_numpy(dtype=float),
        event=event.astype(bool),
        X=parsed.iloc[:, 2:].to_numpy(dtype=float),
    )


def survival_frame(ds: SurvivalDataset) -> pd.DataFrame:
    frame = pd.DataFrame({"time": ds.time, "event": ds.event.astype(int)})
    for j in range(ds.p):
        frame[f"x{j + 1}"] = ds.X[:, j]
    return frame


def write_survival_csv(ds: SurvivalDataset, file_path):
    survival_frame(ds).to_csv(file_path, index=False, float_format=DATA_FLOAT_FORMAT)


def auc_frame(series_by_side) -> pd.DataFrame:
    """Long-format rows time,estimator,sample_side,value from {side: [AucSeries, ...]}."""
    frames = []
    for side, series_list in series_by_side.items():
        for series in series_list:
            frames.append(
                pd.DataFrame(
                    {
                        "time": series.times,
                        "estimator": series.kind.value,
                        "sample_side": side,
                        "value": series.auc,
                    }
                )
            )
    if not frames:
        return pd.DataFrame(columns=["time", "estimator", "sample_side", "value"])
    return pd.concat(frames, ignore_index=True)


def write_auc_csv(series_by_side, file_path):
    auc_frame(series_by_side).to_csv(file_path, index=False, float_format=RESULT_FLOAT_FORMAT)


def concordance_records(estimates_by_side):
    records = []
    for side, estimates in estimates_by_side.items():
        for est in estimates:
            records.append(
                {
                    "estimator": est.kind.value,
                    "tau": None if est.tau is None else round(float(est.tau), 10),
                    "value": round(float(est.value), 10),
                    "sample_side": side,
                }
            )
    return records


def write_concordance_json(estimates_by_side, file_path):
    save_json(concordance_records(estimates_by_side), file_path)


def write_roc_csv(rocs_by_side, file_path):
    rows = []
    for side, rocs in rocs_by_side.items():
        for roc in rocs:
            rows.append(
                pd.DataFrame(
                    {
                        "time": roc.time,
                        "estimator": roc.kind.value,
                        "sample_side": side,
                        "fp": roc.fp,
                        "tp": roc.tp,
                    }
                )
            )
    frame = pd.concat(rows, ignore_index=True) if rows else pd.DataFrame(
        columns=["time", "estimator", "sample_side", "fp", "tp"]
    )
    frame.to_csv(file_path, index=False, float_format=RESULT_FLOAT_FORMAT)


def write_weights_csv(diagnostics_by_side, file_path):
    """One row per (time, subject) sensitivity weight."""
    rows = []
    for side, diagnostics in diagnostics_by_side.items():
        for diag in diagnostics:
            rows.append(
                pd.DataFrame(
                    {
                        "time": diag.time,
                        "sample_side": side,
                        "subject": diag.subjects,
                        "weight": diag.weights,
                    }
                )
            )
    frame = pd.concat(rows, ignore_index=True) if rows else pd.DataFrame(
        columns=["time", "sample_side", "subject", "weight"]
    )
    frame.to_csv(file_path, index=False, float_format=RESULT_FLOAT_FORMAT)


def save_study_report(report_file_path, summary, timestamp, big_logger):
    """
    Writes a plain-text report of a study summary to report_file_path.
    """
    try:
        with open(report_file_path, "w") as report_file:
            report_file.write("--------------------------------------------------\n")
            report_file.write(f"Discrimination Study: {summary['scenario']}\n")
            report_file.write(f"Number of Replicates: {summary['replicates']}\n")
            report_file.write(f"Failed Fits: {summary['failed_replicates']}\n")
            report_file.write(f"Mean Censoring Fraction: {summary['mean_censoring_fraction']:.4f}\n")
            report_file.write(f"Mean Median Event Time: {summary['mean_median_event_time']:.4f}\n")
            if summary.get("true_concordance") is not None:
                report_file.write(f"True Concordance: {summary['true_concordance']:.4f}\n")
            report_file.write(f"Timestamp: {timestamp}\n\n")

            for name, sides in sorted(summary["concordance"].items()):
                parts = []
                for side in ("in_sample", "out_of_sample"):
                    if side in sides:
                        parts.append(f"{side} {sides[side]['mean']:.4f} (sd {sides[side]['sd']:.4f})")
                gap = sides.get("mean_out_minus_in")
                gap_note = f" | out-in {gap:+.4f}" if gap is not None else ""
                report_file.write(f"Concordance_{name}: {', '.join(parts)}{gap_note}\n")

            for replicate, message in summary["failures"].items():
                report_file.write(f"Replicate_{replicate}: {message}\n")
    except OSError as e:
        big_logger.error(f"Failed to write report: {e}")

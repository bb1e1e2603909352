"""CSV ingestion and report documents (JSON and TSV)."""

from __future__ import annotations

import csv
import io as _io
import json
import math
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import EmptyGroup, GroupNotFound, InvalidConfiguration, MissingColumn, UnparsableValue
from .metrics import GroupedSample

TOOL_NAME = "fairperm"
SCHEMA_VERSION = 1

_LABELS = {
    "01": {"0": False, "1": True},
    "pm1": {"-1": False, "1": True, "+1": True},
}


@dataclass(frozen=True)
class DatasetSchema:
    group_col: str
    label_col: str
    groups: tuple[str, str]
    score_col: str | None = None
    pred_col: str | None = None
    label_encoding: str = "auto"  # "01", "pm1" or "auto"

    def __post_init__(self):
        if self.score_col is None and self.pred_col is None:
            raise InvalidConfiguration("bind a score column, a prediction column, or both")
        groups = tuple(str(g) for g in self.groups)
        if len(groups) != 2 or groups[0] == groups[1]:
            raise InvalidConfiguration("exactly two distinct group values are required")
        object.__setattr__(self, "groups", groups)
        if self.label_encoding not in ("01", "pm1", "auto"):
            raise InvalidConfiguration(f"unknown label encoding {self.label_encoding!r}")

    def to_dict(self) -> dict:
        return {
            "group_col": self.group_col,
            "label_col": self.label_col,
            "score_col": self.score_col,
            "pred_col": self.pred_col,
            "groups": list(self.groups),
            "label_encoding": self.label_encoding,
        }


def _parse_label(raw: str, encoding: str, row: int, column: str) -> bool:
    text = raw.strip()
    if text.endswith(".0"):
        text = text[:-2]
    codes = _LABELS.get(encoding) or {**_LABELS["01"], **_LABELS["pm1"]}
    if text.lower() in ("true", "false") and encoding == "auto":
        return text.lower() == "true"
    try:
        return codes[text]
    except KeyError:
        raise UnparsableValue(row, column, raw) from None


def _parse_float(raw: str, row: int, column: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise UnparsableValue(row, column, raw) from None
    if not math.isfinite(value):
        raise UnparsableValue(row, column, raw)
    return value


@dataclass(frozen=True)
class LoadedData:
    sample: GroupedSample
    schema: DatasetSchema
    rows_read: int

    def digest(self) -> dict:
        s = self.sample
        return {
            "rows_read": self.rows_read,
            "rows_used": s.n,
            "group_counts": {s.group_names[0]: s.n_a, s.group_names[1]: s.n_b},
            "schema": self.schema.to_dict(),
        }


def read_csv(source, schema: DatasetSchema) -> LoadedData:
    """Parse the bound columns and keep the two requested groups.

    Row numbers in errors count data rows from 1 (the header is row 0).
    Empty cells in a bound column of a kept row are parse errors.
    """
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return _read(fh, schema)
    return _read(source, schema)


def load_csv(source, schema: DatasetSchema) -> GroupedSample:
    return read_csv(source, schema).sample


def _read(fh, schema: DatasetSchema) -> LoadedData:
    reader = csv.DictReader(fh)
    header = reader.fieldnames or []
    bound = [schema.group_col, schema.label_col, schema.score_col, schema.pred_col]
    for col in bound:
        if col is not None and col not in header:
            raise MissingColumn(col)
    in_a, labels, scores, preds = [], [], [], []
    seen = set()
    rows = 0
    for row_no, row in enumerate(reader, start=1):
        rows += 1
        g = (row.get(schema.group_col) or "").strip()
        seen.add(g)
        if g not in schema.groups:
            continue
        in_a.append(g == schema.groups[0])
        labels.append(_parse_label(row[schema.label_col] or "", schema.label_encoding, row_no, schema.label_col))
        if schema.score_col is not None:
            scores.append(_parse_float(row[schema.score_col] or "", row_no, schema.score_col))
        if schema.pred_col is not None:
            preds.append(_parse_label(row[schema.pred_col] or "", schema.label_encoding, row_no, schema.pred_col))
    for g in schema.groups:
        if g not in seen:
            raise GroupNotFound(g)
    in_a = np.array(in_a, dtype=bool)
    for g, count in zip(schema.groups, (in_a.sum(), (~in_a).sum())):
        if count == 0:
            raise EmptyGroup(g)
    sample = GroupedSample(
        in_a,
        np.array(labels, dtype=bool),
        np.array(scores, dtype=float) if schema.score_col else None,
        np.array(preds, dtype=bool) if schema.pred_col else None,
        schema.groups,
    )
    return LoadedData(sample, schema, rows)


# --------------------------------------------------------------------------
# Reports
# --------------------------------------------------------------------------


def load_report_schema() -> dict:
    text = resources.files("fairperm").joinpath("schemas/report.schema.json").read_text()
    return json.loads(text)


def _clean(value):
    """JSON-safe copy: numpy scalars to Python, NaN to null, infinities to "inf"/"-inf"."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


@dataclass
class ReportDocument:
    """One command's result plus everything needed to rerun it."""

    command: str
    configuration: dict
    payload: dict
    input_digest: dict | None = None
    duration_s: float = 0.0

    def to_dict(self, include_duration: bool = True) -> dict:
        from . import __version__

        out = {
            "tool": TOOL_NAME,
            "version": __version__,
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "input": self.input_digest,
            "configuration": self.configuration,
            "payload": self.payload,
        }
        if include_duration:
            out["duration_s"] = round(self.duration_s, 6)
        return _clean(out)

    def to_json(self, include_duration: bool = True) -> str:
        return json.dumps(self.to_dict(include_duration), indent=2, sort_keys=False) + "\n"

    def to_tsv(self) -> str:
        columns, rows = tsv_table(self.command, self.payload)
        buf = _io.StringIO()
        writer = csv.writer(buf, delimiter="\t", lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow(["" if v is None else _fmt(v) for v in row])
        return buf.getvalue()


class Stopwatch:
    def __enter__(self):
        self._t0 = time.perf_counter()
        self.elapsed = 0.0
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self._t0
        return False


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


# Fixed TSV layouts, one per command.
TSV_COLUMNS = {
    "test": (
        "metric", "scheme", "studentization", "observed_T", "observed_S", "p_value",
        "p_ci_low", "p_ci_high", "n_p_effective", "direction", "alpha", "rejected",
    ),
    "sweep": (
        "tau", "delta_0", "delta_1", "threshold_0", "threshold_1",
        "detected_0", "detected_1", "p_value_0", "p_value_1",
    ),
    "simulate": (
        "procedure", "rejection_probability", "ci_low", "ci_high", "n_valid", "n_errors",
        *(f"decile_{i}" for i in range(1, 11)),
    ),
    "power": ("metric", "target_difference", "per_unit_variance", "n_per_group", "n_total"),
}


def tsv_table(command: str, payload: dict):
    columns = TSV_COLUMNS[command]
    if command == "test":
        r = payload["report"]
        rows = [[
            payload["metric"], payload["scheme"], payload["studentization"],
            r["observed_T"], r["observed_S"], r["p_value"], r["p_ci"][0], r["p_ci"][1],
            r["n_p_effective"], r["direction"], r["alpha"], r["rejected"],
        ]]
    elif command == "sweep":
        rows = [[
            row["tau"], row["delta_0"], row["delta_1"], row["threshold_0"], row["threshold_1"],
            row["detected_0"], row["detected_1"], row["p_value_0"], row["p_value_1"],
        ] for row in payload["rows"]]
    elif command == "simulate":
        rows = [[
            s["procedure"], s["rejection_probability"], s["rejection_ci"][0], s["rejection_ci"][1],
            s["n_valid"], s["n_errors"], *s["histogram"],
        ] for s in payload["studies"]]
    else:
        rows = [[
            payload["metric"], payload["target_difference"], payload["per_unit_variance"],
            payload["n_per_group"], payload["n_total"],
        ]]
    return columns, rows
